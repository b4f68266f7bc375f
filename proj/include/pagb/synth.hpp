#pragma once

// Deterministic synthetic scenes: AGB truth, terrain, landcover, auxiliary
// rasters, LiDAR clouds and plot inventories.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "pagb/assess.hpp"
#include "pagb/common/error.hpp"
#include "pagb/common/parallel.hpp"
#include "pagb/common/random.hpp"
#include "pagb/geodata.hpp"
#include "pagb/mapper.hpp"
#include "pagb/plotselect.hpp"
#include "pagb/pointcloud.hpp"
#include "pagb/predictors.hpp"

namespace pagb::synth {

using geo::GridSpec;
using geo::Point;
using geo::Raster;
using geo::Rect;
using map::Landcover;

struct SceneParams {
  std::size_t n_bumps = 60;
  double amp_min = 40.0, amp_max = 160.0;      // Mg/ha
  double sigma_min = 120.0, sigma_max = 450.0;  // m
  std::size_t block_cells = 8;                  // landcover block edge in cells
  // Landcover probabilities in code order: developed, cropland, grass/shrub,
  // tree cover, water, wetland, barren.
  std::vector<double> class_weights{0.06, 0.12, 0.06, 0.60, 0.05, 0.08, 0.03};
  double dem_base = 250.0;
  double dem_slope_x = 0.01, dem_slope_y = 0.006;
  double dem_amplitude = 8.0, dem_wavelength = 700.0;
  int base_year = 2016;
};

struct SyntheticScene {
  GridSpec spec;
  Raster true_agb;
  Raster ground_dem;
  Raster landcover;
  Raster parcels;
  std::map<std::string, Raster> auxiliary;
  std::uint64_t seed = 0;
  SceneParams params;
  double dem_phase_x = 0.0, dem_phase_y = 0.0;

  /// Terrain elevation, continuous.
  double elevation(Point p) const noexcept {
    const auto& q = params;
    const double k = 2.0 * std::numbers::pi / q.dem_wavelength;
    return q.dem_base + q.dem_slope_x * (p.x - spec.origin_x) + q.dem_slope_y * (p.y - spec.origin_y) +
           q.dem_amplitude * std::sin(k * p.x + dem_phase_x) * std::cos(k * 0.8 * p.y + dem_phase_y);
  }

  /// Truth AGB growth factor between the base year and `year`.
  static double growth(double rate, int years) noexcept { return std::pow(1.0 + rate, years); }
};

namespace detail {

inline const std::vector<int>& landcover_codes() {
  static const std::vector<int> c{1, 2, 3, 4, 5, 6, 8};
  return c;
}

inline double class_multiplier(int code) {
  switch (static_cast<Landcover>(code)) {
    case Landcover::tree_cover: return 1.0;
    case Landcover::wetland: return 0.6;
    case Landcover::grass_shrub: return 0.3;
    default: return 0.0;
  }
}

inline int draw_parcel_code(int landcover, Rng& rng) {
  static const std::map<int, std::vector<int>> by_class{
      {1, {210, 220, 230, 484, 330}}, {2, {105, 112, 120, 105}}, {3, {260, 322, 312}},
      {4, {910, 920, 941, 322, 260, 910}}, {5, {0}}, {6, {941, 971, 322}}, {8, {720, 330}}};
  const auto& v = by_class.at(landcover);
  const int c = v[rng.index(v.size())];
  if (rng.uniform() < 0.03) return 8;  // special-district code outside the class range
  return c;
}

}  // namespace detail

/// Gaussian-bump AGB field over blocky landcover. Water, Developed and
/// Barren carry zero AGB.
inline SyntheticScene gen_scene(const GridSpec& spec, std::uint64_t seed, const SceneParams& params = {}) {
  spec.validate();
  if (params.class_weights.size() != 7) throw ValidationError("scene needs 7 landcover weights");
  if (params.block_cells == 0) throw ValidationError("landcover block size must be > 0");
  SyntheticScene s;
  s.spec = spec;
  s.seed = seed;
  s.params = params;
  const Rect ext = spec.extent();

  Rng rng(derive_seed(seed, 0xb0b));
  struct Bump {
    double x, y, amp, sigma;
  };
  std::vector<Bump> bumps(params.n_bumps);
  for (auto& b : bumps) {
    b.x = rng.uniform(ext.xmin, ext.xmax);
    b.y = rng.uniform(ext.ymin, ext.ymax);
    b.amp = rng.uniform(params.amp_min, params.amp_max);
    b.sigma = rng.uniform(params.sigma_min, params.sigma_max);
  }
  s.dem_phase_x = rng.uniform(0.0, 2.0 * std::numbers::pi);
  s.dem_phase_y = rng.uniform(0.0, 2.0 * std::numbers::pi);

  // Landcover and parcels by block.
  const std::size_t bc = params.block_cells;
  const std::size_t nbx = (spec.n_cols + bc - 1) / bc, nby = (spec.n_rows + bc - 1) / bc;
  std::vector<int> block_class(nbx * nby), block_parcel(nbx * nby);
  std::discrete_distribution<int> pick(params.class_weights.begin(), params.class_weights.end());
  Rng lrng(derive_seed(seed, 0x1c));
  for (std::size_t b = 0; b < block_class.size(); ++b) {
    block_class[b] = detail::landcover_codes()[static_cast<std::size_t>(pick(lrng))];
    block_parcel[b] = detail::draw_parcel_code(block_class[b], lrng);
  }

  s.true_agb = Raster(spec, 0.0, "TRUE_AGB");
  s.ground_dem = Raster(spec, 0.0, "DEM");
  s.landcover = Raster(spec, 0.0, "LANDCOVER");
  s.parcels = Raster(spec, 0.0, "PARCEL");
  for (std::size_t row = 0; row < spec.n_rows; ++row)
    for (std::size_t col = 0; col < spec.n_cols; ++col) {
      const std::size_t i = spec.index(col, row);
      const Point c = spec.cell_center(col, row);
      const std::size_t b = (row / bc) * nbx + col / bc;
      const int lc = block_class[b];
      double f = 0.0;
      for (const auto& bp : bumps) {
        const double d2 = (c.x - bp.x) * (c.x - bp.x) + (c.y - bp.y) * (c.y - bp.y);
        f += bp.amp * std::exp(-d2 / (2.0 * bp.sigma * bp.sigma));
      }
      s.true_agb.values[i] = std::max(0.0, f * detail::class_multiplier(lc));
      s.ground_dem.values[i] = s.elevation(c);
      s.landcover.values[i] = lc;
      s.parcels.values[i] = block_parcel[b] == 0 ? spec.nodata : block_parcel[b];
    }

  // Auxiliary bands: smooth climate gradients plus terrain derivatives.
  const double h = 1.0;
  for (const auto& name : pred::auxiliary_names()) s.auxiliary[name] = Raster(spec, 0.0, name);
  for (std::size_t row = 0; row < spec.n_rows; ++row)
    for (std::size_t col = 0; col < spec.n_cols; ++col) {
      const std::size_t i = spec.index(col, row);
      const Point c = spec.cell_center(col, row);
      const double z = s.elevation(c);
      const double gx = (s.elevation({c.x + h, c.y}) - s.elevation({c.x - h, c.y})) / (2.0 * h);
      const double gy = (s.elevation({c.x, c.y + h}) - s.elevation({c.x, c.y - h})) / (2.0 * h);
      const double slope = std::atan(std::hypot(gx, gy)) * 180.0 / std::numbers::pi;
      double aspect = std::atan2(-gx, -gy) * 180.0 / std::numbers::pi;
      if (aspect < 0.0) aspect += 360.0;
      const double u = (c.x - ext.xmin) / ext.width(), v = (c.y - ext.ymin) / ext.height();
      s.auxiliary["TMIN"].values[i] = -9.0 + 1.5 * v - 0.0065 * (z - params.dem_base);
      s.auxiliary["TMAX"].values[i] = 3.0 + 1.2 * v + 0.4 * u - 0.0065 * (z - params.dem_base);
      s.auxiliary["PRECIP"].values[i] = 950.0 + 120.0 * u + 0.4 * (z - params.dem_base);
      s.auxiliary["ELEV"].values[i] = z;
      s.auxiliary["SLOPE"].values[i] = slope;
      s.auxiliary["ASPECT"].values[i] = aspect;
      s.auxiliary["TWI"].values[i] = 9.0 - 2.0 * std::log1p(slope) + 0.5 * std::sin(6.0 * u);
    }
  return s;
}

inline pred::AuxiliaryData auxiliary_data(const SyntheticScene& s) {
  pred::AuxiliaryData aux;
  aux.bands = s.auxiliary;
  aux.parcels = s.parcels;
  return aux;
}

// ---------------------------------------------------------------------------
// LiDAR

struct CloudParams {
  double height_a = 0.6;      // max canopy height = a * AGB^b
  double height_b = 0.5;
  double height_noise = 0.08;  // lognormal sd on the per-cell max height
  double cover_scale = 60.0;   // canopy hit probability 1 - exp(-AGB / scale)
  double growth_rate = 0.02;   // AGB growth per year from the base year
};

inline constexpr double kGoldenFraction = 0.6180339887498949;

struct CoverageSpec {
  long long coverage_id = 0;
  int year = 0;
  Rect footprint;  // aligned to scene cells
};

/// Returns for every pulse inside the coverage footprint. Cells draw a
/// Poisson pulse count from their own derived seed, so output does not
/// depend on scheduling.
inline pc::PointCloud gen_cloud(const SyntheticScene& s, const CoverageSpec& cov, double density, std::uint64_t seed,
                                const CloudParams& cp = {}) {
  if (!(density > 0.0)) throw ValidationError("pulse density must be > 0");
  const auto& spec = s.spec;
  const double g = SyntheticScene::growth(cp.growth_rate, cov.year - s.params.base_year);
  std::vector<std::vector<pc::PointRecord>> per_cell(spec.size());
  parallel_for(spec.size(), [&](std::size_t i) {
    const std::size_t col = i % spec.n_cols, row = i / spec.n_cols;
    const Rect cell = spec.cell_rect(col, row);
    const Rect r{std::max(cell.xmin, cov.footprint.xmin), std::max(cell.ymin, cov.footprint.ymin),
                 std::min(cell.xmax, cov.footprint.xmax), std::min(cell.ymax, cov.footprint.ymax)};
    if (!(r.xmax > r.xmin && r.ymax > r.ymin)) return;
    Rng rng(derive_seed(seed, cov.coverage_id, i));
    std::poisson_distribution<long> pois(density * r.area());
    const long n = pois(rng);
    const double agb = s.true_agb.values[i] * g;
    const double hmax = agb > 0.0 ? cp.height_a * std::pow(agb, cp.height_b) * std::exp(cp.height_noise * rng.normal()) : 0.0;
    const double pc_hit = agb > 0.0 ? 1.0 - std::exp(-agb / cp.cover_scale) : 0.0;
    auto& out = per_cell[i];
    out.reserve(static_cast<std::size_t>(n) * 2);
    // Scan-like placement: a jittered Kronecker lattice over the cell.
    const double u0 = rng.uniform(), v0 = rng.uniform();
    const double jitter = 0.1 / std::sqrt(static_cast<double>(std::max<long>(n, 1)));
    const auto wrap = [](double t) { return t - std::floor(t); };
    for (long k = 0; k < n; ++k) {
      const double kk = static_cast<double>(k);
      const double u = wrap((kk + u0) / static_cast<double>(n) + jitter * rng.normal());
      const double v = wrap(kk * kGoldenFraction + v0 + jitter * rng.normal());
      const double x = r.xmin + u * r.width(), y = r.ymin + v * r.height();
      const double zg = s.elevation({x, y});
      if (rng.uniform() >= pc_hit) {
        out.push_back({x, y, zg + 0.03 * rng.normal(), 1, 1, pc::kGroundClass});
        continue;
      }
      const double h1 = hmax * std::sqrt(rng.uniform(0.04, 1.0));
      const bool second = rng.uniform() < 0.5;
      const bool ground = rng.uniform() < 0.6;
      const auto nret = static_cast<std::uint8_t>(1 + (second ? 1 : 0) + (ground ? 1 : 0));
      std::uint8_t rn = 1;
      out.push_back({x, y, zg + h1, rn++, nret, 1});
      if (second) out.push_back({x, y, zg + h1 * rng.uniform(0.1, 0.9), rn++, nret, 1});
      if (ground) out.push_back({x, y, zg + 0.03 * rng.normal(), rn++, nret, pc::kGroundClass});
    }
  });
  pc::PointCloud cloud;
  std::size_t total = 0;
  for (const auto& v : per_cell) total += v.size();
  cloud.records.reserve(total);
  for (auto& v : per_cell) {
    cloud.records.insert(cloud.records.end(), v.begin(), v.end());
    std::vector<pc::PointRecord>().swap(v);
  }
  return cloud;
}

/// Ground-model grid for a coverage: scene cells inside its footprint.
inline GridSpec coverage_grid(const SyntheticScene& s, const Rect& fp) {
  GridSpec g = s.spec;
  const double cs = g.cell_size;
  const auto c0 = static_cast<std::size_t>(std::floor((fp.xmin - g.origin_x) / cs + 1e-9));
  const auto c1 = static_cast<std::size_t>(std::ceil((fp.xmax - g.origin_x) / cs - 1e-9));
  const auto r0 = static_cast<std::size_t>(std::floor((fp.ymin - g.origin_y) / cs + 1e-9));
  const auto r1 = static_cast<std::size_t>(std::ceil((fp.ymax - g.origin_y) / cs - 1e-9));
  g.origin_x += static_cast<double>(c0) * cs;
  g.origin_y += static_cast<double>(r0) * cs;
  g.n_cols = c1 - c0;
  g.n_rows = r1 - r0;
  g.validate();
  return g;
}

// ---------------------------------------------------------------------------
// Inventory

struct InventoryParams {
  double plot_spacing = 130.0;
  double jitter = 0.3;          // fraction of spacing
  double margin = 50.0;         // keep footprints inside the scene
  std::vector<int> years;       // calendar years in which panels are measured
  int cycle = 5;                // panel revisit interval
  double growth_rate = 0.02;
  double disturbed_fraction = 0.05;
  double noise_sd = 0.08;       // persistent lognormal plot noise
};

/// Plots on a jittered grid measured on a rotating panel. A plot is
/// nonforest (AGB 0) unless its center landcover is Tree cover, Wetland or
/// Grass/Shrub.
inline std::vector<select::InventoryRecord> gen_inventory(const SyntheticScene& s, const InventoryParams& ip,
                                                          std::uint64_t seed) {
  if (ip.years.size() < 2) throw ValidationError("inventory needs at least two years");
  if (!(ip.plot_spacing > 0.0) || ip.cycle < 1) throw ValidationError("invalid inventory spacing or cycle");
  const Rect ext = s.spec.extent();
  const int first = *std::min_element(ip.years.begin(), ip.years.end());
  std::vector<select::InventoryRecord> out;
  long long id = 1;
  Rng layout(derive_seed(seed, 0x1a));
  for (double gy = ext.ymin + ip.plot_spacing / 2; gy < ext.ymax; gy += ip.plot_spacing)
    for (double gx = ext.xmin + ip.plot_spacing / 2; gx < ext.xmax; gx += ip.plot_spacing) {
      const Point c{gx + ip.jitter * ip.plot_spacing * layout.uniform(-1.0, 1.0),
                    gy + ip.jitter * ip.plot_spacing * layout.uniform(-1.0, 1.0)};
      const double reach = geo::PlotFootprint::kSubplotOffset + geo::PlotFootprint::kSubplotRadius + ip.margin;
      if (c.x - reach < ext.xmin || c.x + reach > ext.xmax || c.y - reach < ext.ymin || c.y + reach > ext.ymax) continue;
      const long long plot_id = id++;
      Rng rng(derive_seed(seed, plot_id));
      const auto fp = geo::build_plot_footprint(c);
      const double base = geo::area_weighted_mean(s.true_agb, fp.subplot_polygons()).value_or(0.0);
      const auto ci = s.spec.locate(c);
      const int lc = static_cast<int>(s.landcover.values[*ci]);
      const bool forested = lc == static_cast<int>(Landcover::tree_cover) || lc == static_cast<int>(Landcover::wetland) ||
                             lc == static_cast<int>(Landcover::grass_shrub);
      const double noise = std::exp(ip.noise_sd * rng.normal());
      const int panel = static_cast<int>(rng.index(static_cast<std::size_t>(ip.cycle)));
      const bool disturbed = rng.uniform() < ip.disturbed_fraction;
      const int dist_year = first + 1 + static_cast<int>(rng.index(static_cast<std::size_t>(ip.years.back() - first)));
      const double loss = rng.uniform(0.2, 0.7);
      const auto tax = s.parcels.is_nodata(*ci) ? std::optional<int>{} : std::optional<int>(static_cast<int>(s.parcels.values[*ci]));
      for (int y : ip.years) {
        if (((y - first) % ip.cycle + ip.cycle) % ip.cycle != panel) continue;
        select::InventoryRecord r;
        r.plot_id = plot_id;
        r.x = c.x;
        r.y = c.y;
        r.inventory_year = y;
        r.forested = forested;
        r.tax_code = tax;
        if (forested) {
          double a = base * noise * SyntheticScene::growth(ip.growth_rate, y - s.params.base_year);
          if (disturbed && y >= dist_year) a *= 1.0 - loss;
          r.agb = a;
        }
        out.push_back(r);
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Design-based hexagon estimates

struct HexEstimateParams {
  double spacing = 1000.0;
  double ci_half_width = 0.15;  // relative
};

/// Hexagons fully inside the scene. The estimate is truth AGB at `year`
/// summed over the hexagon and divided by its full area, perturbed by
/// lognormal sampling noise, with a symmetric relative interval.
inline std::vector<assess::HexEstimate> gen_hex_estimates(const SyntheticScene& s, int year, double growth_rate,
                                                          const HexEstimateParams& hp, std::uint64_t seed) {
  const Rect ext = s.spec.extent();
  const auto tess = geo::tessellate_hexagons(ext, hp.spacing, derive_seed(seed, 0x4e));
  Raster truth = s.true_agb;
  const double g = SyntheticScene::growth(growth_rate, year - s.params.base_year);
  for (double& v : truth.values) v *= g;
  std::vector<assess::HexEstimate> out;
  for (const auto& h : tess.cells()) {
    const Rect bb = geo::bounding_box(h.vertices);
    if (bb.xmin < ext.xmin || bb.ymin < ext.ymin || bb.xmax > ext.xmax || bb.ymax > ext.ymax) continue;
    const std::vector<geo::Polygon> polys{h.vertices};
    const auto z = geo::zonal_sums(truth, polys);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(h.id)));
    const double est = z.weighted_sum / tess.cell_area() * std::exp(0.05 * rng.normal());
    out.push_back({h.id, h.center, hp.spacing, est, est * (1.0 - hp.ci_half_width), est * (1.0 + hp.ci_half_width)});
  }
  return out;
}

}  // namespace pagb::synth
