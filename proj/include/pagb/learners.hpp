#pragma once

#include "pagb/learners/dataset.hpp"
#include "pagb/learners/forest.hpp"
#include "pagb/learners/gbt.hpp"
#include "pagb/learners/grid_search.hpp"
#include "pagb/learners/model.hpp"
#include "pagb/learners/svr.hpp"
#include "pagb/learners/tree.hpp"
