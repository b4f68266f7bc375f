#pragma once

// Area-based LiDAR height metrics, auxiliary raster sampling and tax-parcel
// indicator encoding.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pagb/common/error.hpp"
#include "pagb/common/matrix.hpp"
#include "pagb/common/parallel.hpp"
#include "pagb/common/stats.hpp"
#include "pagb/common/text.hpp"
#include "pagb/geodata.hpp"
#include "pagb/pointcloud.hpp"

namespace pagb::pred {

using geo::GridSpec;
using geo::Raster;

/// LiDAR metric slots in canonical order.
enum class Lidar : std::size_t {
  H0, H10, H20, H30, H40, H50, H60, H70, H80, H90, H100, H95, H99,
  D10, D20, D30, D40, D50, D60, D70, D80, D90,
  ZMEAN, ZMEAN_C, Z_KURT, Z_SKEW, QUAD_MEAN, QUAD_MEAN_C, CV, CV_C,
  L2, L3, L4, L_CV, L_SKEW, L_KURT,
  CANCOV, HVOL, RPC1,
  Count
};

inline constexpr std::size_t kLidarCount = static_cast<std::size_t>(Lidar::Count);

inline const std::array<std::string, kLidarCount>& lidar_names() {
  static const std::array<std::string, kLidarCount> names{
      "H0", "H10", "H20", "H30", "H40", "H50", "H60", "H70", "H80", "H90", "H100", "H95", "H99",
      "D10", "D20", "D30", "D40", "D50", "D60", "D70", "D80", "D90",
      "ZMEAN", "ZMEAN_C", "Z_KURT", "Z_SKEW", "QUAD_MEAN", "QUAD_MEAN_C", "CV", "CV_C",
      "L2", "L3", "L4", "L_CV", "L_SKEW", "L_KURT",
      "CANCOV", "HVOL", "RPC1"};
  return names;
}

/// Climate and topography bands, sampled from prepared rasters.
inline const std::array<std::string, 7>& auxiliary_names() {
  static const std::array<std::string, 7> names{"TMIN", "TMAX", "PRECIP", "ELEV", "SLOPE", "ASPECT", "TWI"};
  return names;
}

inline constexpr double kCanopyHeight = 2.5;

struct LidarMetrics {
  std::array<double, kLidarCount> values{};

  double operator[](Lidar m) const noexcept { return values[static_cast<std::size_t>(m)]; }
  double& operator[](Lidar m) noexcept { return values[static_cast<std::size_t>(m)]; }
};

struct LMoments {
  double l1 = 0.0, l2 = 0.0, l3 = 0.0, l4 = 0.0;
};

/// Sample L-moments from ascending data via unbiased probability-weighted
/// moments b0..b3.
inline LMoments sample_lmoments(std::span<const double> sorted) {
  const auto n = static_cast<double>(sorted.size());
  LMoments lm;
  if (sorted.empty()) return lm;
  double b0 = 0.0, b1 = 0.0, b2 = 0.0, b3 = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const double i = static_cast<double>(k);  // (rank - 1)
    const double x = sorted[k];
    b0 += x;
    if (n > 1) b1 += x * i / (n - 1.0);
    if (n > 2) b2 += x * i * (i - 1.0) / ((n - 1.0) * (n - 2.0));
    if (n > 3) b3 += x * i * (i - 1.0) * (i - 2.0) / ((n - 1.0) * (n - 2.0) * (n - 3.0));
  }
  b0 /= n;
  b1 /= n;
  b2 /= n;
  b3 /= n;
  lm.l1 = b0;
  lm.l2 = n > 1 ? 2.0 * b1 - b0 : 0.0;
  lm.l3 = n > 2 ? 6.0 * b2 - 6.0 * b1 + b0 : 0.0;
  lm.l4 = n > 3 ? 20.0 * b3 - 30.0 * b2 + 12.0 * b1 - b0 : 0.0;
  return lm;
}

/// Computes every LiDAR metric from normalized heights. `heights` is sorted
/// in place; `first_returns` counts records with return_number == 1.
inline LidarMetrics metrics_from_heights(std::span<double> heights, std::size_t first_returns) {
  if (heights.empty()) throw ValidationError("LiDAR metrics need at least one return");
  std::sort(heights.begin(), heights.end());
  const std::span<const double> z(heights);
  const double n = static_cast<double>(z.size());
  LidarMetrics m;

  constexpr std::array<double, 13> probs{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 0.95, 0.99};
  for (std::size_t k = 0; k < probs.size(); ++k) m.values[k] = stats::quantile_sorted(z, probs[k]);
  const double hmax = z.back();

  for (std::size_t k = 1; k <= 9; ++k) {
    double d = 0.0;
    if (hmax > 0.0) {
      const double cut = static_cast<double>(k) * hmax / 10.0;
      const auto it = std::lower_bound(z.begin(), z.end(), cut);
      d = static_cast<double>(z.end() - it) / n;
    }
    m.values[static_cast<std::size_t>(Lidar::D10) + k - 1] = d;
  }

  double sum = 0.0, sum2 = 0.0;
  double csum = 0.0, csum2 = 0.0;
  std::size_t nc = 0;
  for (double v : z) {
    sum += v;
    sum2 += v * v;
    if (v > kCanopyHeight) {
      csum += v;
      csum2 += v * v;
      ++nc;
    }
  }
  const double mean = sum / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : z) {
    const double d = v - mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  const double ss = m2;
  m2 /= n;
  m3 /= n;
  m4 /= n;

  m[Lidar::ZMEAN] = mean;
  m[Lidar::QUAD_MEAN] = std::sqrt(sum2 / n);
  const double sd = z.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  m[Lidar::CV] = mean > 0.0 ? sd / mean : 0.0;
  m[Lidar::Z_SKEW] = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
  m[Lidar::Z_KURT] = m2 > 0.0 ? m4 / (m2 * m2) : 0.0;

  if (nc > 0) {
    const double cn = static_cast<double>(nc);
    const double cmean = csum / cn;
    double css = 0.0;
    for (double v : z)
      if (v > kCanopyHeight) css += (v - cmean) * (v - cmean);
    m[Lidar::ZMEAN_C] = cmean;
    m[Lidar::QUAD_MEAN_C] = std::sqrt(csum2 / cn);
    m[Lidar::CV_C] = nc > 1 ? std::sqrt(css / (cn - 1.0)) / cmean : 0.0;
    m[Lidar::CANCOV] = cn / n;
  }
  m[Lidar::HVOL] = m[Lidar::CANCOV] * m[Lidar::ZMEAN];

  const auto lm = sample_lmoments(z);
  m[Lidar::L2] = lm.l2;
  m[Lidar::L3] = lm.l3;
  m[Lidar::L4] = lm.l4;
  m[Lidar::L_CV] = lm.l1 != 0.0 ? lm.l2 / lm.l1 : 0.0;
  m[Lidar::L_SKEW] = lm.l2 != 0.0 ? lm.l3 / lm.l2 : 0.0;
  m[Lidar::L_KURT] = lm.l2 != 0.0 ? lm.l4 / lm.l2 : 0.0;

  m[Lidar::RPC1] = static_cast<double>(first_returns) / n;
  return m;
}

inline LidarMetrics lidar_metrics(const pc::PointCloud& cloud) {
  if (!cloud.height_normalized) throw ValidationError("LiDAR metrics need a height-normalized cloud");
  if (cloud.empty()) throw ValidationError("LiDAR metrics need at least one return");
  std::vector<double> z;
  z.reserve(cloud.size());
  std::size_t first = 0;
  for (const auto& r : cloud.records) {
    z.push_back(r.z);
    first += r.return_number == 1;
  }
  return metrics_from_heights(z, first);
}

// ---------------------------------------------------------------------------
// Tax parcel indicators

inline constexpr int kDefaultTaxCode = 1000;
inline constexpr int kNycTaxCode = 2000;

/// Missing codes map to 1000. Codes outside the three-digit property class
/// range (NYC special codes) map to 2000.
inline int normalize_tax_code(std::optional<int> raw) {
  if (!raw) return kDefaultTaxCode;
  const int c = *raw;
  if (c == kDefaultTaxCode || c == kNycTaxCode) return c;
  if (c < 100 || c > 999) return kNycTaxCode;
  return c;
}

inline int tax_category(int code) {
  if (code == kDefaultTaxCode || code == kNycTaxCode) return code;
  return (code / 100) * 100;
}

struct TaxEncoding {
  std::set<int> retained_codes;
  std::set<int> retained_categories;
  double code_threshold = 0.01;
  double category_threshold = 0.05;
};

struct TaxIndicators {
  std::optional<int> code;      // retained code set to 1, if any
  std::optional<int> category;  // retained category set to 1, if any
};

/// Keeps codes present in >= 1% of training plots and categories in >= 5%.
inline TaxEncoding fit_tax_encoding(std::span<const std::optional<int>> training_codes, double code_threshold = 0.01,
                                    double category_threshold = 0.05) {
  if (training_codes.empty()) throw ValidationError("tax encoding needs at least one training plot");
  std::map<int, std::size_t> codes, cats;
  for (const auto& raw : training_codes) {
    const int c = normalize_tax_code(raw);
    ++codes[c];
    ++cats[tax_category(c)];
  }
  const double n = static_cast<double>(training_codes.size());
  TaxEncoding enc;
  enc.code_threshold = code_threshold;
  enc.category_threshold = category_threshold;
  for (const auto& [c, k] : codes)
    if (static_cast<double>(k) / n >= code_threshold) enc.retained_codes.insert(c);
  for (const auto& [c, k] : cats)
    if (static_cast<double>(k) / n >= category_threshold) enc.retained_categories.insert(c);
  return enc;
}

inline TaxIndicators encode_tax(std::optional<int> raw, const TaxEncoding& enc) {
  const int c = normalize_tax_code(raw);
  TaxIndicators t;
  if (enc.retained_codes.contains(c)) t.code = c;
  if (enc.retained_categories.contains(tax_category(c))) t.category = tax_category(c);
  return t;
}

/// Raw parcel code at a raster cell value; nodata is missing.
inline std::optional<int> parcel_code(const Raster& parcels, std::size_t i) {
  if (parcels.is_nodata(i)) return std::nullopt;
  return static_cast<int>(std::lround(parcels.values[i]));
}

// ---------------------------------------------------------------------------
// Predictor schema and vectors

/// Ordered predictor names shared by every vector in a dataset: LiDAR
/// metrics, auxiliary bands, then retained tax codes and categories.
struct PredictorSchema {
  std::vector<std::string> names;
  std::vector<int> tax_codes;
  std::vector<int> tax_categories;

  std::size_t size() const noexcept { return names.size(); }
  std::size_t aux_offset() const noexcept { return kLidarCount; }
  std::size_t tax_offset() const noexcept { return kLidarCount + auxiliary_names().size(); }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    throw ValidationError("unknown predictor: " + name);
  }
};

inline PredictorSchema make_schema(const TaxEncoding& enc) {
  PredictorSchema s;
  for (const auto& n : lidar_names()) s.names.push_back(n);
  for (const auto& n : auxiliary_names()) s.names.push_back(n);
  for (int c : enc.retained_codes) {
    s.tax_codes.push_back(c);
    s.names.push_back("TAX_CODE_" + std::to_string(c));
  }
  for (int c : enc.retained_categories) {
    s.tax_categories.push_back(c);
    s.names.push_back("TAX_CATEGORY_" + std::to_string(c));
  }
  return s;
}

struct PredictorVector {
  LidarMetrics lidar;
  std::array<double, 7> auxiliary{};
  TaxIndicators tax;

  /// Values in schema order.
  std::vector<double> flatten(const PredictorSchema& schema) const {
    std::vector<double> v(lidar.values.begin(), lidar.values.end());
    v.insert(v.end(), auxiliary.begin(), auxiliary.end());
    for (int c : schema.tax_codes) v.push_back(tax.code == c ? 1.0 : 0.0);
    for (int c : schema.tax_categories) v.push_back(tax.category == c ? 1.0 : 0.0);
    return v;
  }
};

/// Auxiliary rasters keyed by band name (TMIN, TMAX, ...), plus the parcel
/// code raster.
struct AuxiliaryData {
  std::map<std::string, Raster> bands;
  Raster parcels;

  void validate() const {
    for (const auto& n : auxiliary_names())
      if (!bands.contains(n)) throw ValidationError("missing auxiliary raster: " + n);
  }

  std::array<double, 7> sample(geo::Point p) const {
    std::array<double, 7> out{};
    for (std::size_t k = 0; k < auxiliary_names().size(); ++k) {
      const auto v = bands.at(auxiliary_names()[k]).sample(p);
      if (!v) throw ValidationError("auxiliary raster " + auxiliary_names()[k] + " has no data at plot center");
      out[k] = *v;
    }
    return out;
  }

  std::optional<int> parcel_at(geo::Point p) const {
    const auto i = parcels.spec.locate(p);
    if (!i) return std::nullopt;
    return parcel_code(parcels, *i);
  }
};

/// Returns clipped to the four subplot discs and pooled (duplicates kept).
inline pc::PointCloud pool_subplots(const pc::PointCloud& cloud, const geo::PlotFootprint& fp) {
  pc::PointCloud pooled;
  pooled.height_normalized = cloud.height_normalized;
  for (const auto& c : fp.subplot_centers) {
    auto part = pc::clip_circle(cloud, c, fp.subplot_radius);
    pooled.records.insert(pooled.records.end(), part.records.begin(), part.records.end());
  }
  return pooled;
}

inline pc::PointCloud pool_subplots(const pc::SpatialIndex& index, const geo::PlotFootprint& fp) {
  pc::PointCloud pooled;
  pooled.height_normalized = index.cloud().height_normalized;
  for (const auto& c : fp.subplot_centers) {
    auto part = index.clip_circle(c, fp.subplot_radius);
    pooled.records.insert(pooled.records.end(), part.records.begin(), part.records.end());
  }
  return pooled;
}

inline PredictorVector predictors_from_pooled(const pc::PointCloud& pooled, const geo::PlotFootprint& fp,
                                              const AuxiliaryData& aux, const TaxEncoding& enc) {
  if (pooled.empty()) throw ValidationError("no returns inside the plot footprint");
  PredictorVector v;
  v.lidar = lidar_metrics(pooled);
  v.auxiliary = aux.sample(fp.center);
  v.tax = encode_tax(aux.parcel_at(fp.center), enc);
  return v;
}

/// Plot-level predictors: returns from the four subplots pooled, metrics
/// computed once; auxiliary and tax values from the center pixel.
inline PredictorVector plot_predictors(const pc::PointCloud& cloud, const geo::PlotFootprint& fp,
                                       const AuxiliaryData& aux, const TaxEncoding& enc) {
  if (!cloud.height_normalized) throw ValidationError("plot predictors need a height-normalized cloud");
  return predictors_from_pooled(pool_subplots(cloud, fp), fp, aux, enc);
}

// ---------------------------------------------------------------------------
// Pixel predictors

/// Bands sharing one GridSpec, in canonical order.
struct RasterStack {
  GridSpec spec;
  std::vector<Raster> bands;

  std::size_t size() const noexcept { return bands.size(); }

  /// Fills `out` with the pixel's band values; false when any band is nodata.
  bool pixel(std::size_t i, std::span<double> out) const {
    for (std::size_t b = 0; b < bands.size(); ++b) {
      if (bands[b].is_nodata(i)) return false;
      out[b] = bands[b].values[i];
    }
    return true;
  }
};

/// Per-cell LiDAR metrics (one band per metric). Cells without returns are
/// nodata in every band. Records outside the grid are ignored.
inline RasterStack pixel_predictors(const pc::PointCloud& cloud, const GridSpec& spec) {
  if (!cloud.height_normalized) throw ValidationError("pixel predictors need a height-normalized cloud");
  spec.validate();
  const std::size_t ncell = spec.size();
  std::vector<std::size_t> cell_of(cloud.size());
  std::vector<std::size_t> offsets(ncell + 1, 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& r = cloud.records[i];
    const auto c = spec.locate({r.x, r.y});
    cell_of[i] = c ? *c : ncell;
    if (c) ++offsets[*c + 1];
  }
  for (std::size_t c = 0; c < ncell; ++c) offsets[c + 1] += offsets[c];
  std::vector<double> heights(offsets[ncell]);
  std::vector<unsigned char> first(offsets[ncell]);
  {
    std::vector<std::size_t> fill(offsets.begin(), offsets.end() - 1);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (cell_of[i] == ncell) continue;
      const std::size_t k = fill[cell_of[i]]++;
      heights[k] = cloud.records[i].z;
      first[k] = cloud.records[i].return_number == 1;
    }
  }
  cell_of.clear();
  cell_of.shrink_to_fit();

  RasterStack stack;
  stack.spec = spec;
  for (const auto& n : lidar_names()) stack.bands.push_back(Raster::nodata_filled(spec, n));
  parallel_for(ncell, [&](std::size_t c) {
    const std::size_t b = offsets[c], e = offsets[c + 1];
    if (b == e) return;
    std::size_t nfirst = 0;
    for (std::size_t k = b; k < e; ++k) nfirst += first[k];
    const auto m = metrics_from_heights(std::span<double>(heights.data() + b, e - b), nfirst);
    for (std::size_t k = 0; k < kLidarCount; ++k) stack.bands[k].values[c] = m.values[k];
  });
  return stack;
}

/// Full predictor stack: LiDAR bands, auxiliary bands resampled to the grid,
/// and 0/1 tax indicator bands from the parcel raster.
inline RasterStack build_predictor_stack(const RasterStack& lidar, const AuxiliaryData& aux, const TaxEncoding& enc,
                                         const PredictorSchema& schema) {
  RasterStack out;
  out.spec = lidar.spec;
  out.bands = lidar.bands;
  for (const auto& n : auxiliary_names()) out.bands.push_back(geo::resample_nearest(aux.bands.at(n), lidar.spec));
  const Raster parcels = geo::resample_nearest(aux.parcels, lidar.spec);
  std::vector<TaxIndicators> ind(lidar.spec.size());
  for (std::size_t i = 0; i < ind.size(); ++i) ind[i] = encode_tax(parcel_code(parcels, i), enc);
  for (int c : schema.tax_codes) {
    Raster r(lidar.spec, 0.0, "TAX_CODE_" + std::to_string(c));
    for (std::size_t i = 0; i < ind.size(); ++i) r.values[i] = ind[i].code == c ? 1.0 : 0.0;
    out.bands.push_back(std::move(r));
  }
  for (int c : schema.tax_categories) {
    Raster r(lidar.spec, 0.0, "TAX_CATEGORY_" + std::to_string(c));
    for (std::size_t i = 0; i < ind.size(); ++i) r.values[i] = ind[i].category == c ? 1.0 : 0.0;
    out.bands.push_back(std::move(r));
  }
  for (std::size_t b = 0; b < out.bands.size(); ++b)
    if (out.bands[b].band_name != schema.names[b])
      throw ValidationError("predictor stack band order mismatch at " + schema.names[b]);
  return out;
}

// ---------------------------------------------------------------------------
// CSV serialization

/// Predictor matrix CSV: `plot_id,agb,<predictors in schema order>`.
inline std::string predictor_matrix_csv(const PredictorSchema& schema, std::span<const long long> ids,
                                        std::span<const double> agb, const Matrix& X) {
  std::vector<std::string> header{"plot_id", "agb"};
  header.insert(header.end(), schema.names.begin(), schema.names.end());
  text::CsvWriter w(header);
  for (std::size_t i = 0; i < X.rows(); ++i) {
    std::vector<std::string> f{std::to_string(ids[i]), text::format_double(agb[i])};
    for (double v : X.row(i)) f.push_back(text::format_double(v));
    w.row(f);
  }
  return w.str();
}

struct PredictorMatrix {
  std::vector<std::string> names;
  std::vector<long long> ids;
  std::vector<double> agb;
  Matrix X;
};

inline PredictorMatrix parse_predictor_matrix_csv(std::string_view content) {
  const auto t = text::parse_csv(content);
  if (t.header.size() < 3 || t.header[0] != "plot_id" || t.header[1] != "agb")
    throw ValidationError("predictor matrix must start with plot_id,agb");
  PredictorMatrix pm;
  pm.names.assign(t.header.begin() + 2, t.header.end());
  pm.X = Matrix(t.rows.size(), pm.names.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    long long id = 0;
    double a = 0.0;
    if (!text::parse_int(t.rows[i][0], id) || !text::parse_double(t.rows[i][1], a))
      throw ParseError("bad id/agb", i + 2);
    pm.ids.push_back(id);
    pm.agb.push_back(a);
    for (std::size_t j = 0; j < pm.names.size(); ++j)
      if (!text::parse_double(t.rows[i][j + 2], pm.X(i, j))) throw ParseError("bad predictor value", i + 2);
  }
  return pm;
}

}  // namespace pagb::pred
