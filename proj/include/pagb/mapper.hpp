#pragma once

// Prediction surfaces, newest-wins mosaicking, landcover/AOA masking and
// per-class tabulation.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pagb/common/error.hpp"
#include "pagb/common/parallel.hpp"
#include "pagb/common/text.hpp"
#include "pagb/ensemble.hpp"
#include "pagb/geodata.hpp"
#include "pagb/predictors.hpp"

namespace pagb::map {

using geo::GridSpec;
using geo::Raster;

enum class Landcover : int {
  developed = 1,
  cropland = 2,
  grass_shrub = 3,
  tree_cover = 4,
  water = 5,
  wetland = 6,
  barren = 8,
};

inline bool is_landcover_code(int c) { return (c >= 1 && c <= 6) || c == 8; }

inline const char* landcover_name(Landcover c) {
  switch (c) {
    case Landcover::developed: return "Developed";
    case Landcover::cropland: return "Cropland";
    case Landcover::grass_shrub: return "Grass/Shrub";
    case Landcover::tree_cover: return "Tree cover";
    case Landcover::water: return "Water";
    case Landcover::wetland: return "Wetland";
    case Landcover::barren: return "Barren";
  }
  return "?";
}

/// Classes kept in the map, in tabulation order.
inline constexpr std::array<Landcover, 4> kVegetated{Landcover::tree_cover, Landcover::cropland, Landcover::wetland,
                                                     Landcover::grass_shrub};

inline bool is_vegetated(int code) {
  return code == static_cast<int>(Landcover::tree_cover) || code == static_cast<int>(Landcover::cropland) ||
         code == static_cast<int>(Landcover::wetland) || code == static_cast<int>(Landcover::grass_shrub);
}

inline std::optional<int> landcover_at(const Raster& lc, std::size_t i) {
  if (lc.is_nodata(i)) return std::nullopt;
  const int c = static_cast<int>(std::lround(lc.values[i]));
  if (!is_landcover_code(c)) throw ValidationError("landcover raster holds unknown class code " + std::to_string(c));
  return c;
}

// ---------------------------------------------------------------------------
// Prediction surface

/// Per-pixel ensemble prediction floored at 0; nodata where any band is.
inline Raster predict_surface(const pred::RasterStack& stack, const ens::StackedEnsemble& e) {
  if (stack.size() != e.feature_names.size()) throw ValidationError("predictor stack does not match the ensemble");
  for (std::size_t b = 0; b < stack.size(); ++b)
    if (!stack.bands[b].band_name.empty() && stack.bands[b].band_name != e.feature_names[b])
      throw ValidationError("predictor stack band " + stack.bands[b].band_name + " is not in canonical order");
  Raster out = Raster::nodata_filled(stack.spec, "AGB");
  parallel_for(stack.spec.size(), [&](std::size_t i) {
    std::vector<double> x(stack.size());
    if (!stack.pixel(i, x)) return;
    out.values[i] = std::max(0.0, e.predict(x));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Mosaic

struct CoverageSurface {
  long long coverage_id = 0;
  int year = 0;
  Raster agb;
};

struct CoverageMosaic {
  Raster agb;
  Raster provenance;  // coverage_id per pixel
  std::map<long long, int> years;
};

/// Newest coverage wins per pixel; ties to the larger coverage_id. A
/// coverage covers the pixels where its surface has data.
inline CoverageMosaic mosaic(std::span<const CoverageSurface> surfaces) {
  if (surfaces.empty()) throw ValidationError("mosaic needs at least one coverage surface");
  const auto& spec = surfaces.front().agb.spec;
  for (const auto& s : surfaces) geo::require_aligned(spec, s.agb.spec, "coverage surfaces");
  std::vector<std::size_t> order(surfaces.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (surfaces[a].year != surfaces[b].year) return surfaces[a].year > surfaces[b].year;
    return surfaces[a].coverage_id > surfaces[b].coverage_id;
  });
  CoverageMosaic m{Raster::nodata_filled(spec, "AGB"), Raster::nodata_filled(spec, "PROVENANCE"), {}};
  for (const auto& s : surfaces) {
    if (m.years.contains(s.coverage_id)) throw ValidationError("duplicate coverage in mosaic");
    m.years[s.coverage_id] = s.year;
  }
  parallel_for(spec.size(), [&](std::size_t i) {
    for (auto k : order) {
      const auto& s = surfaces[k];
      if (s.agb.is_nodata(i)) continue;
      m.agb.values[i] = s.agb.values[i];
      m.provenance.values[i] = static_cast<double>(s.coverage_id);
      return;
    }
  });
  return m;
}

/// Landcover taken per pixel from the raster matching the provenance
/// coverage's year; nodata where no coverage or no raster for that year.
inline Raster mosaic_landcover(const CoverageMosaic& m, const std::map<int, Raster>& by_year) {
  Raster out = Raster::nodata_filled(m.agb.spec, "LANDCOVER");
  for (const auto& [y, r] : by_year) geo::require_aligned(m.agb.spec, r.spec, "landcover vintages");
  parallel_for(out.spec.size(), [&](std::size_t i) {
    if (m.provenance.is_nodata(i)) return;
    const auto id = static_cast<long long>(std::llround(m.provenance.values[i]));
    const auto it = by_year.find(m.years.at(id));
    if (it == by_year.end() || it->second.is_nodata(i)) return;
    out.values[i] = it->second.values[i];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Masks

/// Nodata where the class is Developed/Water/Barren, landcover is nodata, or
/// the AOA mask is not 1.
inline Raster apply_masks(const Raster& agb, const Raster& landcover, const Raster& aoa_mask) {
  geo::require_aligned(agb.spec, landcover.spec, "AGB and landcover");
  geo::require_aligned(agb.spec, aoa_mask.spec, "AGB and AOA mask");
  Raster out = agb;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const auto c = landcover_at(landcover, i);
    const bool keep = c && is_vegetated(*c) && !aoa_mask.is_nodata(i) && aoa_mask.values[i] == 1.0;
    if (!keep) out.values[i] = out.spec.nodata;
  }
  return out;
}

/// 1 where the landcover class is vegetated, 0 elsewhere (nodata kept).
inline Raster landcover_keep_mask(const Raster& landcover) {
  Raster out(landcover.spec, 0.0, "LANDCOVER_MASK");
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const auto c = landcover_at(landcover, i);
    if (!c)
      out.values[i] = out.spec.nodata;
    else
      out.values[i] = is_vegetated(*c) ? 1.0 : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tabulation

struct ClassRow {
  Landcover cls = Landcover::tree_cover;
  std::size_t reference_n = 0;
  double reference_mean_agb = 0.0;
  std::size_t pixel_count = 0;
  double area_ha = 0.0;
  double mean_agb = 0.0;      // Mg/ha
  double total_agb_mt = 0.0;  // Mt
  double pct_area = 0.0;
  double pct_agb = 0.0;
  double pct_aoa = 0.0;       // classified pixels inside the AOA
};

struct ClassSummary {
  std::vector<ClassRow> rows;  // vegetated classes in tabulation order

  std::string to_csv() const {
    text::CsvWriter w({"class", "reference_n", "reference_mean_agb", "pixel_count", "area_ha", "pct_area", "mean_agb",
                       "total_agb_mt", "pct_agb", "pct_aoa"});
    for (const auto& r : rows)
      w.row({landcover_name(r.cls), std::to_string(r.reference_n), text::format_double(r.reference_mean_agb),
             std::to_string(r.pixel_count), text::format_double(r.area_ha), text::format_double(r.pct_area),
             text::format_double(r.mean_agb), text::format_double(r.total_agb_mt), text::format_double(r.pct_agb),
             text::format_double(r.pct_aoa)});
    return w.str();
  }
};

struct ReferencePlot {
  int landcover = 0;
  double agb = 0.0;
};

/// Per vegetated class: area over mapped pixels, mean AGB, total in Mt
/// (mean x area x 1e-6) and shares. `aoa_mask` and `reference` are optional.
inline ClassSummary tabulate_by_class(const Raster& agb_masked, const Raster& landcover,
                                      const Raster* aoa_mask = nullptr, std::span<const ReferencePlot> reference = {}) {
  geo::require_aligned(agb_masked.spec, landcover.spec, "AGB and landcover");
  if (aoa_mask) geo::require_aligned(agb_masked.spec, aoa_mask->spec, "AGB and AOA mask");
  const double cell_ha = agb_masked.spec.cell_area() / 10000.0;
  ClassSummary s;
  std::map<int, std::size_t> slot;
  for (auto c : kVegetated) {
    slot[static_cast<int>(c)] = s.rows.size();
    s.rows.push_back({c});
  }
  std::vector<double> sums(s.rows.size(), 0.0);
  std::vector<std::size_t> classified(s.rows.size(), 0), inside(s.rows.size(), 0);
  for (std::size_t i = 0; i < agb_masked.values.size(); ++i) {
    const auto c = landcover_at(landcover, i);
    if (!c || !is_vegetated(*c)) continue;
    const auto k = slot.at(*c);
    ++classified[k];
    if (aoa_mask && !aoa_mask->is_nodata(i) && aoa_mask->values[i] == 1.0) ++inside[k];
    if (agb_masked.is_nodata(i)) continue;
    ++s.rows[k].pixel_count;
    sums[k] += agb_masked.values[i];
  }
  double area_total = 0.0, agb_total = 0.0;
  for (std::size_t k = 0; k < s.rows.size(); ++k) {
    auto& r = s.rows[k];
    r.area_ha = static_cast<double>(r.pixel_count) * cell_ha;
    r.mean_agb = r.pixel_count ? sums[k] / static_cast<double>(r.pixel_count) : 0.0;
    r.total_agb_mt = r.mean_agb * r.area_ha * 1e-6;
    r.pct_aoa = classified[k] ? 100.0 * static_cast<double>(inside[k]) / static_cast<double>(classified[k]) : 0.0;
    area_total += r.area_ha;
    agb_total += r.total_agb_mt;
  }
  for (auto& r : s.rows) {
    r.pct_area = area_total > 0.0 ? 100.0 * r.area_ha / area_total : 0.0;
    r.pct_agb = agb_total > 0.0 ? 100.0 * r.total_agb_mt / agb_total : 0.0;
  }
  std::vector<double> ref_sum(s.rows.size(), 0.0);
  for (const auto& p : reference) {
    const auto it = slot.find(p.landcover);
    if (it == slot.end()) continue;
    ++s.rows[it->second].reference_n;
    ref_sum[it->second] += p.agb;
  }
  for (std::size_t k = 0; k < s.rows.size(); ++k)
    if (s.rows[k].reference_n) s.rows[k].reference_mean_agb = ref_sum[k] / static_cast<double>(s.rows[k].reference_n);
  return s;
}

}  // namespace pagb::map
