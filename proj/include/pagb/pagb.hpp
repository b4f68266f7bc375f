#pragma once

#include "pagb/aoa.hpp"
#include "pagb/assess.hpp"
#include "pagb/config.hpp"
#include "pagb/ensemble.hpp"
#include "pagb/geodata.hpp"
#include "pagb/learners.hpp"
#include "pagb/mapper.hpp"
#include "pagb/pipeline.hpp"
#include "pagb/plotselect.hpp"
#include "pagb/pointcloud.hpp"
#include "pagb/predictors.hpp"
#include "pagb/synth.hpp"

namespace pagb {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace pagb
