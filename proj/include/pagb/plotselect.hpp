#pragma once

// Model and assessment plot selection, growth adjustment and the
// train/test split.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pagb/common/error.hpp"
#include "pagb/common/random.hpp"
#include "pagb/common/text.hpp"
#include "pagb/geodata.hpp"
#include "pagb/pointcloud.hpp"

namespace pagb::select {

using geo::PlotFootprint;
using geo::Point;
using geo::Polygon;
using geo::Raster;

struct InventoryRecord {
  long long plot_id = 0;
  double x = 0.0, y = 0.0;
  int inventory_year = 0;
  double agb = 0.0;
  bool all_subplots_measured = true;
  bool uniform_condition = true;
  bool forested = true;
  std::optional<int> tax_code;

  Point center() const noexcept { return {x, y}; }
};

struct CoverageInfo {
  long long coverage_id = 0;
  int year = 0;
  Polygon footprint;

  bool contains(Point p) const { return geo::point_in_polygon(footprint, p); }
};

enum class AgbSource { measured, growth_adjusted };

inline const char* to_string(AgbSource s) { return s == AgbSource::measured ? "measured" : "growth_adjusted"; }

struct ModelPlot {
  long long plot_id = 0;
  long long coverage_id = 0;
  int coverage_year = 0;
  double agb_at_lidar = 0.0;
  AgbSource source = AgbSource::measured;
  int pre_year = 0;   // measurement year, or lower bracketing year
  int post_year = 0;  // measurement year, or upper bracketing year
  PlotFootprint footprint;
  std::optional<int> tax_code;
};

struct AssessmentPlot {
  long long plot_id = 0;
  long long coverage_id = 0;
  int coverage_year = 0;
  int inventory_year = 0;
  double agb = 0.0;
  PlotFootprint footprint;
};

/// Ordered criterion counts.
struct SelectionReport {
  std::vector<std::pair<std::string, std::size_t>> counts;

  std::size_t& operator[](const std::string& key) {
    for (auto& [k, v] : counts)
      if (k == key) return v;
    counts.emplace_back(key, 0);
    return counts.back().second;
  }
  std::size_t at(const std::string& key) const {
    for (const auto& [k, v] : counts)
      if (k == key) return v;
    throw ValidationError("no report entry: " + key);
  }

  std::string to_csv() const {
    text::CsvWriter w({"criterion", "count"});
    for (const auto& [k, v] : counts) w.row({k, std::to_string(v)});
    return w.str();
  }
};

// ---------------------------------------------------------------------------
// Growth adjustment

struct YearAgb {
  int year = 0;
  double agb = 0.0;
};

/// Linear interpolation between bracketing inventories; nullopt when the
/// relative decrease reaches the disturbance threshold.
inline std::optional<double> growth_adjust(YearAgb pre, YearAgb post, int lidar_year,
                                           double disturbance_threshold = 0.05) {
  if (!(pre.year < lidar_year && lidar_year < post.year))
    throw ValidationError("growth adjustment needs pre.year < lidar_year < post.year");
  if (pre.agb > 0.0 && (post.agb - pre.agb) / pre.agb <= -disturbance_threshold) return std::nullopt;
  const double t = static_cast<double>(lidar_year - pre.year) / static_cast<double>(post.year - pre.year);
  return pre.agb + (post.agb - pre.agb) * t;
}

// ---------------------------------------------------------------------------
// Model plots

struct ModelSelectionParams {
  double hull_coverage_min = 0.90;
  double disturbance_threshold = 0.05;
  double zero_agb_max_height = 1.0;
};

/// Normalized cloud for a coverage. Called once per coverage that contains
/// at least one plot.
using CloudProvider = std::function<const pc::PointCloud&(const CoverageInfo&)>;

namespace detail {

inline std::map<long long, std::vector<const InventoryRecord*>> group_by_plot(
    std::span<const InventoryRecord> inventories) {
  std::map<long long, std::vector<const InventoryRecord*>> plots;
  for (const auto& r : inventories) {
    if (!r.all_subplots_measured || !r.uniform_condition)
      throw ValidationError("plot " + std::to_string(r.plot_id) + " year " + std::to_string(r.inventory_year) +
                            " is not fully measured with a uniform condition");
    if (!r.forested && r.agb != 0.0)
      throw ValidationError("nonforest plot " + std::to_string(r.plot_id) + " carries nonzero AGB");
    if (r.agb < 0.0) throw ValidationError("negative AGB for plot " + std::to_string(r.plot_id));
    plots[r.plot_id].push_back(&r);
  }
  for (auto& [id, recs] : plots) {
    std::sort(recs.begin(), recs.end(), [](auto* a, auto* b) { return a->inventory_year < b->inventory_year; });
    for (std::size_t k = 1; k < recs.size(); ++k)
      if (recs[k]->inventory_year == recs[k - 1]->inventory_year)
        throw ValidationError("duplicate inventory year for plot " + std::to_string(id));
  }
  return plots;
}

struct Candidate {
  ModelPlot plot;
  int criterion = 0;   // 1 or 2
  int recency = 0;     // most recent inventory year used
};

inline bool preferred(const Candidate& a, const Candidate& b) {
  if (a.criterion != b.criterion) return a.criterion < b.criterion;
  if (a.recency != b.recency) return a.recency > b.recency;
  return a.plot.coverage_id > b.plot.coverage_id;
}

}  // namespace detail

struct ModelSelection {
  std::vector<ModelPlot> plots;  // ascending plot_id
  SelectionReport report;
};

/// Applies the five model-plot criteria over plot/coverage pairs. Report
/// keys: candidates, unmatched, ineligible, disturbed, exclude_3, exclude_4,
/// exclude_5, include_1, include_2, included, with
/// included = candidates - unmatched - ineligible - disturbed - exclude_3..5.
inline ModelSelection select_model_plots(std::span<const InventoryRecord> inventories,
                                         std::span<const CoverageInfo> coverages, const CloudProvider& clouds,
                                         const ModelSelectionParams& params = {}) {
  ModelSelection out;
  auto& rep = out.report;
  for (const char* k : {"candidates", "unmatched", "ineligible", "disturbed", "exclude_3", "exclude_4", "exclude_5",
                        "include_1", "include_2", "included"})
    rep[k] = 0;

  const auto plots = detail::group_by_plot(inventories);
  std::map<long long, std::unique_ptr<pc::SpatialIndex>> indexes;
  auto index_for = [&](const CoverageInfo& cov) -> const pc::SpatialIndex& {
    auto& slot = indexes[cov.coverage_id];
    if (!slot) {
      const auto& cloud = clouds(cov);
      if (!cloud.height_normalized)
        throw ValidationError("coverage " + std::to_string(cov.coverage_id) + " cloud is not height-normalized");
      slot = std::make_unique<pc::SpatialIndex>(cloud, 25.0);
    }
    return *slot;
  };

  for (const auto& [plot_id, recs] : plots) {
    const Point center = recs.front()->center();
    const auto fp = geo::build_plot_footprint(center);
    std::vector<detail::Candidate> surviving;
    bool any_cov = false;
    for (const auto& cov : coverages) {
      if (!cov.contains(center)) continue;
      any_cov = true;
      ++rep["candidates"];

      detail::Candidate c;
      c.plot.plot_id = plot_id;
      c.plot.coverage_id = cov.coverage_id;
      c.plot.coverage_year = cov.year;
      c.plot.footprint = fp;
      const InventoryRecord* exact = nullptr;
      const InventoryRecord* pre = nullptr;
      const InventoryRecord* post = nullptr;
      for (const auto* r : recs) {
        if (r->inventory_year == cov.year) exact = r;
        if (r->inventory_year < cov.year) pre = r;
        if (r->inventory_year > cov.year && !post) post = r;
      }
      if (exact) {
        c.criterion = 1;
        c.plot.agb_at_lidar = exact->agb;
        c.plot.source = AgbSource::measured;
        c.plot.pre_year = c.plot.post_year = exact->inventory_year;
        c.plot.tax_code = exact->tax_code;
        c.recency = exact->inventory_year;
      } else if (pre && post) {
        const auto adj = growth_adjust({pre->inventory_year, pre->agb}, {post->inventory_year, post->agb}, cov.year,
                                       params.disturbance_threshold);
        if (!adj) {
          ++rep["disturbed"];
          continue;
        }
        c.criterion = 2;
        c.plot.agb_at_lidar = *adj;
        c.plot.source = AgbSource::growth_adjusted;
        c.plot.pre_year = pre->inventory_year;
        c.plot.post_year = post->inventory_year;
        c.plot.tax_code = post->tax_code;
        c.recency = post->inventory_year;
      } else {
        ++rep["ineligible"];
        continue;
      }

      const auto& index = index_for(cov);
      double max_h = -std::numeric_limits<double>::infinity();
      bool any_return = false;
      double min_cov = 1.0;
      for (const auto& sc : fp.subplot_centers) {
        const auto part = index.clip_circle(sc, fp.subplot_radius);
        for (const auto& r : part.records) {
          max_h = std::max(max_h, r.z);
          any_return = true;
        }
        min_cov = std::min(min_cov, pc::convex_hull_coverage(part, sc, fp.subplot_radius));
      }
      if (c.plot.agb_at_lidar == 0.0 && any_return && max_h > params.zero_agb_max_height) {
        ++rep["exclude_3"];
        continue;
      }
      if (min_cov < params.hull_coverage_min) {
        ++rep["exclude_4"];
        continue;
      }
      surviving.push_back(std::move(c));
    }
    if (!any_cov) {
      ++rep["candidates"];
      ++rep["unmatched"];
      continue;
    }
    if (surviving.empty()) continue;
    std::sort(surviving.begin(), surviving.end(), detail::preferred);
    rep["exclude_5"] += surviving.size() - 1;
    ++rep[surviving.front().criterion == 1 ? "include_1" : "include_2"];
    out.plots.push_back(std::move(surviving.front().plot));
  }
  rep["included"] = out.plots.size();
  return out;
}

// ---------------------------------------------------------------------------
// Assessment plots

/// Pixel counts as masked when nodata or zero.
inline bool is_masked(const Raster& mask, std::size_t i) { return mask.is_nodata(i) || mask.values[i] == 0.0; }

struct AssessmentSelectionParams {
  int year_window = 2;
};

struct AssessmentSelection {
  std::vector<AssessmentPlot> plots;
  SelectionReport report;
};

/// Newest coverage containing a point; ties to the larger coverage_id.
inline const CoverageInfo* newest_coverage_at(std::span<const CoverageInfo> coverages, Point p) {
  const CoverageInfo* best = nullptr;
  for (const auto& c : coverages) {
    if (!c.contains(p)) continue;
    if (!best || c.year > best->year || (c.year == best->year && c.coverage_id > best->coverage_id)) best = &c;
  }
  return best;
}

/// Each plot is matched to the newest coverage at its center and to its
/// inventory closest in time within 0 < |dyear| <= window (ties to the later
/// year). Footprints touching masked landcover or outside-AOA pixels are
/// dropped. Report keys: candidates, unmatched, ineligible, exclude_2,
/// exclude_3, included.
inline AssessmentSelection select_assessment_plots(std::span<const InventoryRecord> inventories,
                                                   std::span<const CoverageInfo> coverages,
                                                   const Raster& landcover_mask, const Raster& aoa_mask,
                                                   const AssessmentSelectionParams& params = {}) {
  geo::require_aligned(landcover_mask.spec, aoa_mask.spec, "landcover and AOA masks");
  AssessmentSelection out;
  auto& rep = out.report;
  for (const char* k : {"candidates", "unmatched", "ineligible", "exclude_2", "exclude_3", "included"}) rep[k] = 0;

  const auto plots = detail::group_by_plot(inventories);
  for (const auto& [plot_id, recs] : plots) {
    ++rep["candidates"];
    const Point center = recs.front()->center();
    const auto* cov = newest_coverage_at(coverages, center);
    if (!cov) {
      ++rep["unmatched"];
      continue;
    }
    const InventoryRecord* best = nullptr;
    for (const auto* r : recs) {
      const int d = std::abs(r->inventory_year - cov->year);
      if (d == 0 || d > params.year_window) continue;
      if (!best || d < std::abs(best->inventory_year - cov->year) ||
          (d == std::abs(best->inventory_year - cov->year) && r->inventory_year > best->inventory_year))
        best = r;
    }
    if (!best) {
      ++rep["ineligible"];
      continue;
    }
    const auto fp = geo::build_plot_footprint(center);
    const auto polys = fp.subplot_polygons();
    if (geo::any_intersecting_pixel(landcover_mask, polys, [&](std::size_t i) { return is_masked(landcover_mask, i); })) {
      ++rep["exclude_2"];
      continue;
    }
    if (geo::any_intersecting_pixel(aoa_mask, polys, [&](std::size_t i) { return is_masked(aoa_mask, i); })) {
      ++rep["exclude_3"];
      continue;
    }
    out.plots.push_back({plot_id, cov->coverage_id, cov->year, best->inventory_year, best->agb, fp});
  }
  rep["included"] = out.plots.size();
  return out;
}

// ---------------------------------------------------------------------------
// Train/test split

struct Split {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> test;   // ascending
};

inline Split split_train_test(std::size_t n, double fraction, std::uint64_t seed) {
  if (n < 5) throw ValidationError("train/test split needs at least 5 plots");
  if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("train fraction must be in (0,1)");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, 0x5b17));
  shuffle(std::span<std::size_t>(idx), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

// ---------------------------------------------------------------------------
// CSV interfaces

inline std::vector<InventoryRecord> parse_inventory_csv(std::string_view content) {
  const auto t = text::parse_csv(content);
  const std::vector<std::string> want{"plot_id", "x", "y", "inventory_year", "agb", "all_subplots_measured",
                                      "uniform_condition", "forested", "tax_code"};
  if (t.header != want)
    throw ValidationError("inventory header must be plot_id,x,y,inventory_year,agb,all_subplots_measured,"
                          "uniform_condition,forested,tax_code");
  std::vector<InventoryRecord> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& f = t.rows[i];
    InventoryRecord r;
    const bool ok = text::parse_int(f[0], r.plot_id) && text::parse_double(f[1], r.x) &&
                    text::parse_double(f[2], r.y) && text::parse_int(f[3], r.inventory_year) &&
                    text::parse_double(f[4], r.agb) && text::parse_bool(f[5], r.all_subplots_measured) &&
                    text::parse_bool(f[6], r.uniform_condition) && text::parse_bool(f[7], r.forested);
    if (!ok) throw ParseError("malformed inventory row", i + 2);
    if (!text::trim(f[8]).empty()) {
      int code = 0;
      if (!text::parse_int(f[8], code)) throw ParseError("malformed tax_code", i + 2);
      r.tax_code = code;
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string inventory_to_csv(std::span<const InventoryRecord> recs) {
  text::CsvWriter w({"plot_id", "x", "y", "inventory_year", "agb", "all_subplots_measured", "uniform_condition",
                     "forested", "tax_code"});
  for (const auto& r : recs)
    w.row({std::to_string(r.plot_id), text::format_double(r.x), text::format_double(r.y),
           std::to_string(r.inventory_year), text::format_double(r.agb), r.all_subplots_measured ? "1" : "0",
           r.uniform_condition ? "1" : "0", r.forested ? "1" : "0", r.tax_code ? std::to_string(*r.tax_code) : ""});
  return w.str();
}

/// Coverage manifest `coverage_id,year,footprint_file`; footprint paths are
/// relative to `base_dir`.
inline std::vector<CoverageInfo> parse_coverage_manifest(std::string_view content, const std::filesystem::path& base_dir) {
  const auto t = text::parse_csv(content);
  if (t.header != std::vector<std::string>{"coverage_id", "year", "footprint_file"})
    throw ValidationError("coverage manifest header must be coverage_id,year,footprint_file");
  std::vector<CoverageInfo> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    CoverageInfo c;
    if (!text::parse_int(t.rows[i][0], c.coverage_id) || !text::parse_int(t.rows[i][1], c.year))
      throw ParseError("malformed coverage row", i + 2);
    const auto path = base_dir / std::string(text::trim(t.rows[i][2]));
    c.footprint = geo::parse_polygon_csv(text::read_file(path.string()));
    for (const auto& o : out)
      if (o.coverage_id == c.coverage_id) throw ValidationError("duplicate coverage_id " + std::to_string(c.coverage_id));
    out.push_back(std::move(c));
  }
  return out;
}

inline std::string model_plots_to_csv(std::span<const ModelPlot> plots) {
  text::CsvWriter w({"plot_id", "coverage_id", "coverage_year", "agb_at_lidar", "source", "pre_year", "post_year", "x", "y"});
  for (const auto& p : plots)
    w.row({std::to_string(p.plot_id), std::to_string(p.coverage_id), std::to_string(p.coverage_year),
           text::format_double(p.agb_at_lidar), to_string(p.source), std::to_string(p.pre_year),
           std::to_string(p.post_year), text::format_double(p.footprint.center.x),
           text::format_double(p.footprint.center.y)});
  return w.str();
}

inline std::string assessment_plots_to_csv(std::span<const AssessmentPlot> plots) {
  text::CsvWriter w({"plot_id", "coverage_id", "coverage_year", "inventory_year", "agb", "x", "y"});
  for (const auto& p : plots)
    w.row({std::to_string(p.plot_id), std::to_string(p.coverage_id), std::to_string(p.coverage_year),
           std::to_string(p.inventory_year), text::format_double(p.agb), text::format_double(p.footprint.center.x),
           text::format_double(p.footprint.center.y)});
  return w.str();
}

inline std::vector<AssessmentPlot> parse_assessment_plots_csv(std::string_view content) {
  const auto t = text::parse_csv(content);
  if (t.header != std::vector<std::string>{"plot_id", "coverage_id", "coverage_year", "inventory_year", "agb", "x", "y"})
    throw ValidationError("unexpected assessment plot header");
  std::vector<AssessmentPlot> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& f = t.rows[i];
    AssessmentPlot p;
    Point c;
    if (!text::parse_int(f[0], p.plot_id) || !text::parse_int(f[1], p.coverage_id) ||
        !text::parse_int(f[2], p.coverage_year) || !text::parse_int(f[3], p.inventory_year) ||
        !text::parse_double(f[4], p.agb) || !text::parse_double(f[5], c.x) || !text::parse_double(f[6], c.y))
      throw ParseError("malformed assessment plot row", i + 2);
    p.footprint = geo::build_plot_footprint(c);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace pagb::select
