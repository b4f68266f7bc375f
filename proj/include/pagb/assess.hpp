#pragma once

// Map agreement battery: point metrics and standard errors, GMFR lines,
// multi-scale hexagon assessment, hexagon residual summaries, design-based
// hexagon comparison, density-filtered ME and Moran's I.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pagb/common/error.hpp"
#include "pagb/common/parallel.hpp"
#include "pagb/common/random.hpp"
#include "pagb/common/stats.hpp"
#include "pagb/common/text.hpp"
#include "pagb/geodata.hpp"
#include "pagb/mapper.hpp"
#include "pagb/plotselect.hpp"

namespace pagb::assess {

using geo::Point;
using geo::Raster;

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct MetricBundle {
  std::size_t n = 0;
  double ybar = 0.0;
  double rmse = 0.0, mae = 0.0, me = 0.0, r2 = kNaN;
  double pct_rmse = kNaN, pct_mae = kNaN;  // NaN when ybar == 0
  double se_rmse = kNaN, se_r2 = kNaN, se_mae = kNaN, se_me = kNaN;

  bool percent_defined() const noexcept { return std::isfinite(pct_rmse); }
};

/// Point metrics. ME = mean(y - yhat). R^2 is NaN when y has no spread.
inline MetricBundle accuracy_metrics(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw ValidationError("observed and predicted lengths differ");
  if (y.empty()) throw ValidationError("accuracy metrics need at least one pair");
  MetricBundle m;
  m.n = y.size();
  const double n = static_cast<double>(y.size());
  m.ybar = stats::mean(y);
  double sse = 0.0, sae = 0.0, se = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - yhat[i];
    sse += e * e;
    sae += std::abs(e);
    se += e;
    sst += (y[i] - m.ybar) * (y[i] - m.ybar);
  }
  m.rmse = std::sqrt(sse / n);
  m.mae = sae / n;
  m.me = se / n;
  if (sst > 0.0) m.r2 = 1.0 - sse / sst;
  if (m.ybar != 0.0) {
    m.pct_rmse = 100.0 * m.rmse / m.ybar;
    m.pct_mae = 100.0 * m.mae / m.ybar;
  }
  return m;
}

/// sqrt(sum (e - ebar)^2 / (n - 1)), optionally divided by sqrt(n).
inline double analytic_se(std::span<const double> errors, bool divide_sqrt_n = false) {
  if (errors.size() < 2) return kNaN;
  const double sd = stats::sample_sd(errors);
  return divide_sqrt_n ? sd / std::sqrt(static_cast<double>(errors.size())) : sd;
}

struct BootstrapSe {
  double se_rmse = kNaN;
  double se_r2 = kNaN;
};

/// sqrt(Var_boot / n) over B pair resamples; replicate b draws from
/// Rng(derive_seed(seed, b)). Replicates with undefined R^2 are skipped for
/// the R^2 variance.
inline BootstrapSe bootstrap_se(std::span<const double> y, std::span<const double> yhat, std::size_t B,
                                std::uint64_t seed) {
  if (y.size() != yhat.size()) throw ValidationError("observed and predicted lengths differ");
  const std::size_t n = y.size();
  if (n < 2 || B < 2) return {};
  std::vector<double> rm(B), r2(B);
  parallel_for(B, [&](std::size_t b) {
    Rng rng(derive_seed(seed, b));
    std::vector<double> ys(n), ps(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = rng.index(n);
      ys[i] = y[k];
      ps[i] = yhat[k];
    }
    const auto m = accuracy_metrics(ys, ps);
    rm[b] = m.rmse;
    r2[b] = m.r2;
  });
  std::vector<double> r2f;
  for (double v : r2)
    if (std::isfinite(v)) r2f.push_back(v);
  BootstrapSe s;
  const double dn = static_cast<double>(n);
  s.se_rmse = std::sqrt(stats::sample_variance(rm) / dn);
  if (r2f.size() >= 2) s.se_r2 = std::sqrt(stats::sample_variance(r2f) / dn);
  return s;
}

struct MetricOptions {
  std::size_t bootstrap_reps = 1000;
  bool se_divide_sqrt_n = false;
};

/// Point metrics plus bootstrap (RMSE, R^2) and analytic (MAE, ME) SEs.
inline MetricBundle full_metrics(std::span<const double> y, std::span<const double> yhat, std::uint64_t seed,
                                 const MetricOptions& opt = {}) {
  auto m = accuracy_metrics(y, yhat);
  const auto b = bootstrap_se(y, yhat, opt.bootstrap_reps, seed);
  m.se_rmse = b.se_rmse;
  m.se_r2 = b.se_r2;
  std::vector<double> e(y.size()), ae(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    e[i] = y[i] - yhat[i];
    ae[i] = std::abs(e[i]);
  }
  m.se_me = analytic_se(e, opt.se_divide_sqrt_n);
  m.se_mae = analytic_se(ae, opt.se_divide_sqrt_n);
  return m;
}

// ---------------------------------------------------------------------------
// GMFR

struct GmfrLine {
  double slope = 0.0;
  double intercept = 0.0;
};

inline GmfrLine gmfr(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("GMFR needs two equal-length series of n >= 2");
  const double mx = stats::mean(x), my = stats::mean(y);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw ValidationError("GMFR undefined for a zero-variance series");
  GmfrLine g;
  g.slope = (sxy < 0.0 ? -1.0 : 1.0) * std::sqrt(syy / sxx);
  g.intercept = my - g.slope * mx;
  return g;
}

// ---------------------------------------------------------------------------
// Plot extraction

/// Area-weighted mapped value over each plot footprint, paired with the
/// plot AGB. Plots with no mapped pixel are dropped.
struct PlotPairs {
  std::vector<Point> centers;
  std::vector<double> fia;
  std::vector<double> map;
  std::vector<long long> plot_ids;
  std::size_t dropped = 0;
};

inline PlotPairs extract_plot_pairs(std::span<const select::AssessmentPlot> plots, const Raster& agb_masked) {
  PlotPairs out;
  std::vector<std::optional<double>> v(plots.size());
  parallel_for(plots.size(), [&](std::size_t i) {
    v[i] = geo::area_weighted_mean(agb_masked, plots[i].footprint.subplot_polygons());
  });
  for (std::size_t i = 0; i < plots.size(); ++i) {
    if (!v[i]) {
      ++out.dropped;
      continue;
    }
    out.centers.push_back(plots[i].footprint.center);
    out.fia.push_back(plots[i].agb);
    out.map.push_back(*v[i]);
    out.plot_ids.push_back(plots[i].plot_id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hexagon grouping

struct HexUnit {
  std::size_t hex_id = 0;
  std::vector<std::size_t> members;  // plot indices, ascending
  double fia_mean = 0.0;
  double map_mean = 0.0;
};

/// Plots grouped by the hexagon containing their center. Units are ordered
/// by their first member so that one-plot-per-hex grouping keeps plot order.
inline std::vector<HexUnit> group_by_hexagon(const PlotPairs& pairs, const geo::HexTessellation& hex) {
  std::map<std::size_t, std::size_t> slot;
  std::vector<HexUnit> units;
  for (std::size_t i = 0; i < pairs.centers.size(); ++i) {
    const auto h = hex.locate(pairs.centers[i]);
    if (!h) throw ValidationError("plot center lies outside the hexagon tessellation");
    auto [it, fresh] = slot.try_emplace(*h, units.size());
    if (fresh) units.push_back({*h, {}, 0.0, 0.0});
    units[it->second].members.push_back(i);
  }
  for (auto& u : units) {
    double f = 0.0, m = 0.0;
    for (auto i : u.members) {
      f += pairs.fia[i];
      m += pairs.map[i];
    }
    u.fia_mean = f / static_cast<double>(u.members.size());
    u.map_mean = m / static_cast<double>(u.members.size());
  }
  return units;
}

inline geo::HexTessellation scale_tessellation(const Raster& agb, double spacing, std::uint64_t seed) {
  return geo::tessellate_hexagons(agb.spec.extent(), spacing, derive_seed(seed, std::llround(spacing * 1000.0)));
}

// ---------------------------------------------------------------------------
// Multi-scale assessment

struct ScaleResult {
  double spacing = 0.0;  // 0 = plot-to-pixel
  std::size_t n_units = 0;
  double plots_per_hex = 1.0;
  MetricBundle metrics;
  std::optional<GmfrLine> line;
  std::vector<double> x_fia, y_map;  // scatter data per unit
  std::vector<std::size_t> unit_ids;
};

inline ScaleResult score_scale(double spacing, std::vector<double> fia, std::vector<double> map,
                               std::vector<std::size_t> ids, std::size_t n_plots, std::uint64_t seed,
                               const MetricOptions& opt) {
  ScaleResult r;
  r.spacing = spacing;
  r.n_units = fia.size();
  r.plots_per_hex = static_cast<double>(n_plots) / static_cast<double>(fia.size());
  r.metrics = full_metrics(fia, map, derive_seed(seed, 0xb007), opt);
  try {
    r.line = gmfr(fia, map);
  } catch (const ValidationError&) {
    r.line.reset();
  }
  r.x_fia = std::move(fia);
  r.y_map = std::move(map);
  r.unit_ids = std::move(ids);
  return r;
}

/// Plot-to-pixel scale first, then one entry per spacing.
inline std::vector<ScaleResult> riemann_assessment(std::span<const select::AssessmentPlot> plots,
                                                   const Raster& agb_masked, std::span<const double> spacings,
                                                   std::uint64_t seed, const MetricOptions& opt = {}) {
  if (plots.empty()) throw ValidationError("map agreement needs at least one plot");
  const auto pairs = extract_plot_pairs(plots, agb_masked);
  if (pairs.fia.empty()) throw ValidationError("no assessment plot intersects a mapped pixel");
  std::vector<ScaleResult> out;
  std::vector<std::size_t> ids(pairs.fia.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  out.push_back(score_scale(0.0, pairs.fia, pairs.map, ids, pairs.fia.size(), seed, opt));
  for (double d : spacings) {
    const auto hex = scale_tessellation(agb_masked, d, seed);
    const auto units = group_by_hexagon(pairs, hex);
    std::vector<double> f, m;
    std::vector<std::size_t> hid;
    for (const auto& u : units) {
      f.push_back(u.fia_mean);
      m.push_back(u.map_mean);
      hid.push_back(u.hex_id);
    }
    out.push_back(score_scale(d, std::move(f), std::move(m), std::move(hid), pairs.fia.size(), seed, opt));
  }
  return out;
}

inline std::string fmt_or_na(double v) { return std::isfinite(v) ? text::format_double(v) : "NA"; }

/// Table-5 style rows.
inline std::string scale_results_csv(std::span<const ScaleResult> rs) {
  text::CsvWriter w({"distance_m", "hex_area_ha", "n", "pph", "pct_rmse", "rmse", "rmse_se", "mae", "mae_se", "me",
                     "me_se", "r2", "r2_se", "pct_mae", "gmfr_slope", "gmfr_intercept"});
  for (const auto& r : rs) {
    const auto& m = r.metrics;
    w.row({text::format_double(r.spacing),
           r.spacing > 0.0 ? text::format_double(geo::HexTessellation::hexagon_area(r.spacing) / 10000.0) : "plot",
           std::to_string(r.n_units), text::format_double(r.plots_per_hex), fmt_or_na(m.pct_rmse), fmt_or_na(m.rmse),
           fmt_or_na(m.se_rmse), fmt_or_na(m.mae), fmt_or_na(m.se_mae), fmt_or_na(m.me), fmt_or_na(m.se_me),
           fmt_or_na(m.r2), fmt_or_na(m.se_r2), fmt_or_na(m.pct_mae), r.line ? fmt_or_na(r.line->slope) : "NA",
           r.line ? fmt_or_na(r.line->intercept) : "NA"});
  }
  return w.str();
}

inline std::string scatter_csv(const ScaleResult& r) {
  text::CsvWriter w({"unit", "fia", "map"});
  for (std::size_t i = 0; i < r.x_fia.size(); ++i)
    w.row({std::to_string(r.unit_ids[i]), text::format_double(r.x_fia[i]), text::format_double(r.y_map[i])});
  return w.str();
}

// ---------------------------------------------------------------------------
// Hexagon residual summaries

struct HexResidual {
  std::size_t hex_id = 0;
  Point center;
  std::size_t n_plots = 0;
  double rmse = 0.0, mae = 0.0, me = 0.0;
  double mean_fia = 0.0;
};

/// Plot-level residuals summarized per hexagon; hexagons with fewer than
/// two plots are dropped.
inline std::vector<HexResidual> choropleth_residuals(std::span<const select::AssessmentPlot> plots,
                                                     const Raster& agb_masked, double spacing, std::uint64_t seed) {
  const auto pairs = extract_plot_pairs(plots, agb_masked);
  const auto hex = scale_tessellation(agb_masked, spacing, seed);
  auto units = group_by_hexagon(pairs, hex);
  std::sort(units.begin(), units.end(), [](auto& a, auto& b) { return a.hex_id < b.hex_id; });
  std::vector<HexResidual> out;
  for (const auto& u : units) {
    if (u.members.size() < 2) continue;
    std::vector<double> y, p;
    for (auto i : u.members) {
      y.push_back(pairs.fia[i]);
      p.push_back(pairs.map[i]);
    }
    const auto m = accuracy_metrics(y, p);
    out.push_back({u.hex_id, hex.cells()[u.hex_id].center, u.members.size(), m.rmse, m.mae, m.me, m.ybar});
  }
  return out;
}

inline std::string hex_residuals_csv(std::span<const HexResidual> rs) {
  text::CsvWriter w({"hex_id", "cx", "cy", "n_plots", "rmse", "mae", "me", "mean_fia"});
  for (const auto& r : rs)
    w.row({std::to_string(r.hex_id), text::format_double(r.center.x), text::format_double(r.center.y),
           std::to_string(r.n_plots), text::format_double(r.rmse), text::format_double(r.mae),
           text::format_double(r.me), text::format_double(r.mean_fia)});
  return w.str();
}

// ---------------------------------------------------------------------------
// Design-based hexagon comparison

struct HexEstimate {
  long long hex_id = 0;
  Point center;
  double spacing = 0.0;
  double fia_agb = 0.0;  // Mg/ha over the whole hexagon
  double ci_low = 0.0, ci_high = 0.0;
};

struct HexComparison {
  long long hex_id = 0;
  double mapped_fraction = 0.0;
  double vegetated_fraction = 0.0;
  double map_agb = 0.0;
  double fia_adjusted = 0.0, ci_low_adjusted = 0.0, ci_high_adjusted = 0.0;
  bool within = false;
};

struct MenloveSummary {
  std::vector<HexComparison> hexes;  // retained hexes only
  std::size_t excluded = 0;
  double fraction_within = kNaN;
};

/// Hexes with more than `min_mapped_fraction` mapped area are kept. FIA
/// densities and intervals are rescaled from hexagon area to vegetated area;
/// the map estimate is the intersection-weighted mean of mapped pixels.
inline MenloveSummary menlove_compare(std::span<const HexEstimate> hexes, const Raster& agb_masked,
                                      const Raster& landcover, double min_mapped_fraction = 0.10) {
  geo::require_aligned(agb_masked.spec, landcover.spec, "AGB and landcover");
  Raster vegetated(landcover.spec, landcover.spec.nodata, "VEGETATED");
  for (std::size_t i = 0; i < vegetated.values.size(); ++i) {
    const auto c = map::landcover_at(landcover, i);
    if (c && map::is_vegetated(*c)) vegetated.values[i] = 1.0;
  }
  MenloveSummary s;
  std::size_t within = 0;
  for (const auto& h : hexes) {
    const auto poly = geo::hexagon_polygon(h.center, h.spacing);
    const std::vector<geo::Polygon> polys{poly};
    const double area = geo::polygon_area(poly);
    const auto z = geo::zonal_sums(agb_masked, polys);
    const auto v = geo::zonal_sums(vegetated, polys);
    HexComparison c;
    c.hex_id = h.hex_id;
    c.mapped_fraction = z.valid_area / area;
    c.vegetated_fraction = v.valid_area / area;
    if (!(c.mapped_fraction > min_mapped_fraction) || !(v.valid_area > 0.0)) {
      ++s.excluded;
      continue;
    }
    c.map_agb = z.weighted_sum / z.valid_area;
    const double k = area / v.valid_area;
    c.fia_adjusted = h.fia_agb * k;
    c.ci_low_adjusted = h.ci_low * k;
    c.ci_high_adjusted = h.ci_high * k;
    c.within = c.map_agb >= c.ci_low_adjusted && c.map_agb <= c.ci_high_adjusted;
    within += c.within;
    s.hexes.push_back(c);
  }
  if (!s.hexes.empty()) s.fraction_within = static_cast<double>(within) / static_cast<double>(s.hexes.size());
  return s;
}

inline std::vector<HexEstimate> parse_hex_estimates_csv(std::string_view content) {
  const auto t = text::parse_csv(content);
  if (t.header != std::vector<std::string>{"hex_id", "cx", "cy", "spacing", "fia_agb", "ci_low", "ci_high"})
    throw ValidationError("hex estimate header must be hex_id,cx,cy,spacing,fia_agb,ci_low,ci_high");
  std::vector<HexEstimate> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& f = t.rows[i];
    HexEstimate h;
    if (!text::parse_int(f[0], h.hex_id) || !text::parse_double(f[1], h.center.x) ||
        !text::parse_double(f[2], h.center.y) || !text::parse_double(f[3], h.spacing) ||
        !text::parse_double(f[4], h.fia_agb) || !text::parse_double(f[5], h.ci_low) ||
        !text::parse_double(f[6], h.ci_high))
      throw ParseError("malformed hex estimate row", i + 2);
    if (!(h.spacing > 0.0) || h.ci_low > h.ci_high) throw ParseError("invalid hex estimate", i + 2);
    out.push_back(h);
  }
  return out;
}

inline std::string menlove_csv(const MenloveSummary& s) {
  text::CsvWriter w({"hex_id", "mapped_fraction", "vegetated_fraction", "map_agb", "fia_adjusted", "ci_low", "ci_high",
                     "within"});
  for (const auto& c : s.hexes)
    w.row({std::to_string(c.hex_id), text::format_double(c.mapped_fraction), text::format_double(c.vegetated_fraction),
           text::format_double(c.map_agb), text::format_double(c.fia_adjusted),
           text::format_double(c.ci_low_adjusted), text::format_double(c.ci_high_adjusted), c.within ? "1" : "0"});
  return w.str();
}

// ---------------------------------------------------------------------------
// Density-filtered ME

struct DensityFilteredMe {
  double spacing = 0.0;
  std::size_t n_all = 0, n_filtered = 0;
  double me_all = kNaN, me_filtered = kNaN;
  std::vector<double> hex_me;           // FIA mean - map mean per unit
  std::vector<double> hex_pph;
  std::vector<char> hex_retained;
};

/// Per spacing, ME across hexagon units before and after dropping hexagons
/// whose plot density is below `min_density` plots per ha.
inline std::vector<DensityFilteredMe> density_filtered_me(std::span<const select::AssessmentPlot> plots,
                                                          const Raster& agb_masked, std::span<const double> spacings,
                                                          std::uint64_t seed, double min_density = 1.0 / 24000.0) {
  const auto pairs = extract_plot_pairs(plots, agb_masked);
  std::vector<DensityFilteredMe> out;
  for (double d : spacings) {
    const auto hex = scale_tessellation(agb_masked, d, seed);
    const auto units = group_by_hexagon(pairs, hex);
    const double area_ha = geo::HexTessellation::hexagon_area(d) / 10000.0;
    DensityFilteredMe r;
    r.spacing = d;
    double sa = 0.0, sf = 0.0;
    for (const auto& u : units) {
      const double e = u.fia_mean - u.map_mean;
      const bool keep = static_cast<double>(u.members.size()) / area_ha >= min_density;
      r.hex_me.push_back(e);
      r.hex_pph.push_back(static_cast<double>(u.members.size()));
      r.hex_retained.push_back(keep);
      sa += e;
      ++r.n_all;
      if (keep) {
        sf += e;
        ++r.n_filtered;
      }
    }
    if (r.n_all) r.me_all = sa / static_cast<double>(r.n_all);
    if (r.n_filtered) r.me_filtered = sf / static_cast<double>(r.n_filtered);
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string density_me_csv(std::span<const DensityFilteredMe> rs) {
  text::CsvWriter w({"distance_m", "n_all", "me_all", "n_filtered", "me_filtered"});
  for (const auto& r : rs)
    w.row({text::format_double(r.spacing), std::to_string(r.n_all), fmt_or_na(r.me_all), std::to_string(r.n_filtered),
           fmt_or_na(r.me_filtered)});
  return w.str();
}

// ---------------------------------------------------------------------------
// Moran's I

struct MoranResult {
  double radius = 0.0;
  std::optional<double> I;  // empty when undefined
  double envelope_low = kNaN, envelope_high = kNaN;
  std::size_t n_points = 0;
  std::size_t n_pairs = 0;  // unordered neighbour pairs

  bool within_envelope() const { return I && *I >= envelope_low && *I <= envelope_high; }
};

namespace detail {

struct PairTable {
  std::vector<std::uint32_t> a, b;  // sorted by distance
  std::vector<std::size_t> upto;     // pairs with 0 < d <= radius[k]
};

inline PairTable neighbour_pairs(std::span<const Point> pts, std::span<const double> radii) {
  const double rmax = radii.empty() ? 0.0 : *std::max_element(radii.begin(), radii.end());
  struct P {
    double d;
    std::uint32_t a, b;
  };
  std::vector<P> pairs;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double d = std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y);
      if (d > 0.0 && d <= rmax) pairs.push_back({d, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
    }
  std::sort(pairs.begin(), pairs.end(), [](const P& x, const P& y) {
    if (x.d != y.d) return x.d < y.d;
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });
  PairTable t;
  for (const auto& p : pairs) {
    t.a.push_back(p.a);
    t.b.push_back(p.b);
  }
  for (double r : radii) {
    const auto it = std::upper_bound(pairs.begin(), pairs.end(), r, [](double v, const P& p) { return v < p.d; });
    t.upto.push_back(static_cast<std::size_t>(it - pairs.begin()));
  }
  return t;
}

/// I at every radius for one residual vector.
inline std::vector<std::optional<double>> moran_all(const PairTable& t, std::span<const double> e) {
  const double n = static_cast<double>(e.size());
  const double mean = stats::mean(e);
  std::vector<double> z(e.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    z[i] = e[i] - mean;
    denom += z[i] * z[i];
  }
  std::vector<std::optional<double>> out(t.upto.size());
  if (!(denom > 0.0)) return out;
  std::vector<std::size_t> order(t.upto.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return t.upto[x] < t.upto[y]; });
  double acc = 0.0;
  std::size_t k = 0;
  for (auto r : order) {
    for (; k < t.upto[r]; ++k) acc += z[t.a[k]] * z[t.b[k]];
    if (t.upto[r] == 0) continue;
    const double W = 2.0 * static_cast<double>(t.upto[r]);
    out[r] = (n / W) * (2.0 * acc) / denom;
  }
  return out;
}

}  // namespace detail

/// Moran's I with binary distance-band weights (0 < d <= r) at each radius,
/// plus the 2.5/97.5 percentile envelope over B residual permutations;
/// permutation b uses Rng(derive_seed(seed, b)).
inline std::vector<MoranResult> morans_i(std::span<const Point> pts, std::span<const double> residuals,
                                         std::span<const double> radii, std::size_t B, std::uint64_t seed) {
  if (pts.size() != residuals.size()) throw ValidationError("Moran's I needs one residual per point");
  if (pts.size() < 2) throw ValidationError("Moran's I needs at least 2 points");
  const auto table = detail::neighbour_pairs(pts, radii);
  const auto observed = detail::moran_all(table, residuals);
  std::vector<std::vector<std::optional<double>>> sims(B);
  parallel_for(B, [&](std::size_t b) {
    std::vector<double> e(residuals.begin(), residuals.end());
    Rng rng(derive_seed(seed, b));
    shuffle(std::span<double>(e), rng);
    sims[b] = detail::moran_all(table, e);
  });
  std::vector<MoranResult> out;
  for (std::size_t r = 0; r < radii.size(); ++r) {
    MoranResult m;
    m.radius = radii[r];
    m.n_points = pts.size();
    m.n_pairs = table.upto[r];
    m.I = observed[r];
    std::vector<double> v;
    for (const auto& s : sims)
      if (s[r]) v.push_back(*s[r]);
    if (!v.empty()) {
      std::sort(v.begin(), v.end());
      m.envelope_low = stats::quantile_sorted(v, 0.025);
      m.envelope_high = stats::quantile_sorted(v, 0.975);
    }
    out.push_back(m);
  }
  return out;
}

inline std::string moran_csv(std::span<const MoranResult> rs) {
  text::CsvWriter w({"radius_m", "I", "envelope_low", "envelope_high", "n_points", "n_pairs", "within"});
  for (const auto& r : rs)
    w.row({text::format_double(r.radius), r.I ? text::format_double(*r.I) : "NA", fmt_or_na(r.envelope_low),
           fmt_or_na(r.envelope_high), std::to_string(r.n_points), std::to_string(r.n_pairs),
           r.I ? (r.within_envelope() ? "1" : "0") : "NA"});
  return w.str();
}

}  // namespace pagb::assess
