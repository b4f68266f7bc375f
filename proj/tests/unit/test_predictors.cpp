#include <gtest/gtest.h>

#include <bit>

#include "pagb/predictors.hpp"

using namespace pagb;
using namespace pagb::pred;
using geo::GridSpec;
using geo::Raster;
using pc::PointCloud;
using pc::PointRecord;

namespace {

double binom(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// L-moment of order r as the average over all size-r subsets of
// r^-1 * sum_k (-1)^k C(r-1, k) X_(r-k):r.
double lmoment_subsets(const std::vector<double>& x, int r) {
  const int n = static_cast<int>(x.size());
  double total = 0.0;
  std::size_t count = 0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (std::popcount(mask) != r) continue;
    std::vector<double> s;
    for (int i = 0; i < n; ++i)
      if (mask & (1u << i)) s.push_back(x[static_cast<std::size_t>(i)]);
    std::sort(s.begin(), s.end());
    double v = 0.0;
    for (int k = 0; k < r; ++k) v += (k % 2 ? -1.0 : 1.0) * binom(r - 1, k) * s[static_cast<std::size_t>(r - k - 1)];
    total += v / r;
    ++count;
  }
  return total / static_cast<double>(count);
}

PointCloud heights_cloud(const std::vector<double>& z, double x = 0.0, double y = 0.0) {
  PointCloud c;
  c.height_normalized = true;
  for (double h : z) c.records.push_back({x, y, h, 1, 1, 1});
  return c;
}

AuxiliaryData flat_aux(const GridSpec& s, std::optional<int> parcel) {
  AuxiliaryData a;
  double v = 1.0;
  for (const auto& n : auxiliary_names()) a.bands.emplace(n, Raster(s, v++, n));
  a.parcels = parcel ? Raster(s, *parcel) : Raster::nodata_filled(s);
  return a;
}

}  // namespace

TEST(LidarMetrics, SingleReturn) {
  const auto m = lidar_metrics(heights_cloud({10.0}));
  for (std::size_t k = 0; k <= static_cast<std::size_t>(Lidar::H99); ++k) EXPECT_EQ(m.values[k], 10.0);
  EXPECT_EQ(m[Lidar::ZMEAN], 10.0);
  EXPECT_EQ(m[Lidar::CANCOV], 1.0);
  EXPECT_EQ(m[Lidar::HVOL], 10.0);
  for (std::size_t k = 0; k < 9; ++k) EXPECT_EQ(m.values[static_cast<std::size_t>(Lidar::D10) + k], 1.0);
  EXPECT_EQ(m[Lidar::RPC1], 1.0);
}

TEST(LidarMetrics, FourHeights) {
  const auto m = lidar_metrics(heights_cloud({4.0, 2.0, 1.0, 3.0}));
  EXPECT_DOUBLE_EQ(m[Lidar::ZMEAN], 2.5);
  EXPECT_DOUBLE_EQ(m[Lidar::CANCOV], 0.5);
  EXPECT_DOUBLE_EQ(m[Lidar::ZMEAN_C], 3.5);
  EXPECT_DOUBLE_EQ(m[Lidar::HVOL], 1.25);
  EXPECT_DOUBLE_EQ(m[Lidar::RPC1], 1.0);
  EXPECT_DOUBLE_EQ(m[Lidar::H50], 2.5);
  EXPECT_DOUBLE_EQ(m[Lidar::H10], 1.3);
  EXPECT_DOUBLE_EQ(m[Lidar::D50], 0.75);  // {2, 3, 4} >= 2.0
  const double l2 = 2.0 * (5.0 / 3.0) - 2.5;
  EXPECT_NEAR(m[Lidar::L2], l2, 1e-12);
  EXPECT_NEAR(m[Lidar::L2], 0.8333333333333334, 1e-12);
  EXPECT_NEAR(m[Lidar::L_CV], l2 / 2.5, 1e-12);
}

TEST(LidarMetrics, AllZeroHeights) {
  const auto m = lidar_metrics(heights_cloud({0.0, 0.0, 0.0}));
  for (std::size_t k = 0; k < 9; ++k) EXPECT_EQ(m.values[static_cast<std::size_t>(Lidar::D10) + k], 0.0);
  EXPECT_EQ(m[Lidar::CANCOV], 0.0);
  EXPECT_EQ(m[Lidar::CV], 0.0);
  EXPECT_EQ(m[Lidar::L_SKEW], 0.0);
}

TEST(LidarMetrics, ReturnProportion) {
  auto c = heights_cloud({1, 2, 3, 4, 5});
  c.records[1].return_number = 2;
  c.records[1].num_returns = 2;
  EXPECT_DOUBLE_EQ(lidar_metrics(c)[Lidar::RPC1], 0.8);
}

TEST(LidarMetrics, RequiresNormalizedNonEmpty) {
  PointCloud c;
  c.height_normalized = true;
  EXPECT_THROW(lidar_metrics(c), ValidationError);
  c.records.push_back({0, 0, 1, 1, 1, 1});
  c.height_normalized = false;
  EXPECT_THROW(lidar_metrics(c), ValidationError);
}

TEST(LMoments, MatchAllSubsetsDefinition) {
  Rng rng(31);
  for (std::size_t n : {4u, 5u, 7u, 9u, 12u}) {
    std::vector<double> x(n);
    for (auto& v : x) v = rng.uniform(0.0, 30.0);
    x[1] = x[0];  // ties
    std::vector<double> s = x;
    std::sort(s.begin(), s.end());
    const auto lm = sample_lmoments(s);
    EXPECT_NEAR(lm.l1, lmoment_subsets(x, 1), 1e-10);
    EXPECT_NEAR(lm.l2, lmoment_subsets(x, 2), 1e-10);
    EXPECT_NEAR(lm.l3, lmoment_subsets(x, 3), 1e-10);
    EXPECT_NEAR(lm.l4, lmoment_subsets(x, 4), 1e-10);
  }
}

TEST(TaxEncoding, SingleCode) {
  std::vector<std::optional<int>> codes(50, 910);
  const auto enc = fit_tax_encoding(codes);
  EXPECT_EQ(enc.retained_codes, std::set<int>{910});
  const auto t = encode_tax(910, enc);
  EXPECT_EQ(t.code, 910);
  EXPECT_EQ(t.category, 900);
  const auto schema = make_schema(enc);
  PredictorVector v;
  v.tax = t;
  const auto flat = v.flatten(schema);
  EXPECT_EQ(flat[schema.index_of("TAX_CODE_910")], 1.0);
}

TEST(TaxEncoding, RareCodeDropped) {
  std::vector<std::optional<int>> codes(199, 910);
  codes.push_back(322);
  const auto enc = fit_tax_encoding(codes);
  EXPECT_FALSE(enc.retained_codes.contains(322));
  EXPECT_FALSE(encode_tax(322, enc).code.has_value());
}

TEST(TaxEncoding, MissingAndOutOfRange) {
  EXPECT_EQ(normalize_tax_code(std::nullopt), 1000);
  EXPECT_EQ(normalize_tax_code(8), 2000);
  EXPECT_EQ(normalize_tax_code(1234), 2000);
  EXPECT_EQ(normalize_tax_code(105), 105);
  std::vector<std::optional<int>> codes{std::nullopt, std::nullopt, 105};
  const auto enc = fit_tax_encoding(codes);
  EXPECT_TRUE(enc.retained_codes.contains(1000));
  EXPECT_EQ(encode_tax(std::nullopt, enc).code, 1000);
  EXPECT_EQ(encode_tax(std::nullopt, enc).category, 1000);
}

TEST(PlotPredictors, PoolingKeepsDuplicatesAndIgnoresOutside) {
  const auto fp = geo::build_plot_footprint({100.0, 100.0});
  PointCloud c;
  c.height_normalized = true;
  c.records.push_back({fp.subplot_centers[1].x, fp.subplot_centers[1].y, 10.0, 1, 1, 1});
  c.records.push_back({fp.subplot_centers[2].x, fp.subplot_centers[2].y, 10.0, 1, 1, 1});
  c.records.push_back({fp.subplot_centers[0].x, fp.subplot_centers[0].y + 3.0, 2.0, 1, 1, 1});
  c.records.push_back({100.0, 120.0, 50.0, 1, 1, 1});  // between subplots
  const auto pooled = pool_subplots(c, fp);
  EXPECT_EQ(pooled.size(), 3u);
  std::size_t per_subplot = 0;
  for (const auto& sc : fp.subplot_centers) per_subplot += pc::clip_circle(c, sc, fp.subplot_radius).size();
  EXPECT_EQ(pooled.size(), per_subplot);

  const GridSpec s{0, 0, 30, 8, 8};
  const auto v = plot_predictors(c, fp, flat_aux(s, 910), fit_tax_encoding(std::vector<std::optional<int>>{910}));
  EXPECT_DOUBLE_EQ(v.lidar[Lidar::H100], 10.0);
  EXPECT_DOUBLE_EQ(v.lidar[Lidar::ZMEAN], 22.0 / 3.0);
  EXPECT_EQ(v.auxiliary[0], 1.0);
  EXPECT_EQ(v.auxiliary[6], 7.0);
  EXPECT_EQ(v.tax.code, 910);
}

TEST(PlotPredictors, EmptyFootprintRejected) {
  const auto fp = geo::build_plot_footprint({100.0, 100.0});
  const auto c = heights_cloud({5.0}, 500.0, 500.0);
  const GridSpec s{0, 0, 30, 8, 8};
  EXPECT_THROW(plot_predictors(c, fp, flat_aux(s, std::nullopt), fit_tax_encoding(std::vector<std::optional<int>>{1})),
               ValidationError);
}

TEST(PixelPredictors, SingleCellEqualsWholeCloud) {
  const GridSpec s{0, 0, 30, 4, 4};
  Rng rng(3);
  PointCloud c;
  c.height_normalized = true;
  for (int i = 0; i < 100; ++i)
    c.records.push_back({rng.uniform(31, 59), rng.uniform(61, 89), rng.uniform(0, 25), 1, 1, 1});
  const auto stack = pixel_predictors(c, s);
  const auto m = lidar_metrics(c);
  const std::size_t cell = *s.locate({45, 75});
  for (std::size_t b = 0; b < kLidarCount; ++b) {
    EXPECT_EQ(stack.bands[b].values[cell], m.values[b]) << lidar_names()[b];
    EXPECT_EQ(stack.bands[b].count_valid(), 1u);
  }
}

TEST(PixelPredictors, TranslationByOneCell) {
  const GridSpec s{0, 0, 30, 5, 5};
  Rng rng(4);
  PointCloud c;
  c.height_normalized = true;
  for (int i = 0; i < 3000; ++i) c.records.push_back({rng.uniform(0, 120), rng.uniform(0, 120), rng.uniform(0, 25), 1, 1, 1});
  PointCloud shifted = c;
  for (auto& r : shifted.records) r.x += 30.0;
  const auto a = pixel_predictors(c, s);
  const auto b = pixel_predictors(shifted, s);
  for (std::size_t k = 0; k < kLidarCount; ++k)
    for (std::size_t row = 0; row < 5; ++row)
      for (std::size_t col = 0; col < 4; ++col) EXPECT_EQ(a.bands[k].at(col, row), b.bands[k].at(col + 1, row));
}

TEST(PixelPredictors, NodataMatchesBinningOracle) {
  const GridSpec s{0, 0, 1, 100, 100};
  Rng rng(5);
  PointCloud c;
  c.height_normalized = true;
  c.records.reserve(1'000'000);
  for (int i = 0; i < 1'000'000; ++i) {
    const double u = rng.uniform(), v = rng.uniform();
    c.records.push_back({100.0 * std::pow(u, 8.0), 100.0 * std::pow(v, 8.0), rng.uniform(0, 20), 1, 1, 1});
  }
  std::vector<int> hits(100 * 100, 0);
  for (const auto& r : c.records) {
    const int col = std::min(99, static_cast<int>(r.x)), row_s = std::min(99, static_cast<int>(r.y));
    hits[static_cast<std::size_t>(row_s * 100 + col)] = 1;
  }
  std::size_t empty = 0;
  for (int h : hits) empty += h == 0;
  ASSERT_GT(empty, 0u);
  const auto stack = pixel_predictors(c, s);
  for (const auto& band : stack.bands) EXPECT_EQ(band.values.size() - band.count_valid(), empty);
}

TEST(PixelPredictors, ThreadCountDoesNotChangeOutput) {
  const GridSpec s{0, 0, 10, 20, 20};
  Rng rng(6);
  PointCloud c;
  c.height_normalized = true;
  for (int i = 0; i < 50000; ++i) c.records.push_back({rng.uniform(0, 200), rng.uniform(0, 200), rng.uniform(0, 25), 1, 1, 1});
  set_thread_count(1);
  const auto a = pixel_predictors(c, s);
  set_thread_count(4);
  const auto b = pixel_predictors(c, s);
  set_thread_count(1);
  for (std::size_t k = 0; k < kLidarCount; ++k) EXPECT_EQ(a.bands[k], b.bands[k]);
}

TEST(PredictorStack, BandOrderFollowsSchema) {
  const GridSpec s{0, 0, 30, 3, 3};
  PointCloud c = heights_cloud({1, 2, 3}, 45, 45);
  const auto lidar = pixel_predictors(c, s);
  const auto enc = fit_tax_encoding(std::vector<std::optional<int>>{910, 105});
  const auto schema = make_schema(enc);
  const auto stack = build_predictor_stack(lidar, flat_aux(s, 910), enc, schema);
  ASSERT_EQ(stack.size(), schema.size());
  EXPECT_EQ(stack.bands[schema.index_of("TAX_CODE_910")].values[4], 1.0);
  EXPECT_EQ(stack.bands[schema.index_of("TAX_CODE_105")].values[4], 0.0);
}

TEST(PredictorMatrixCsv, RoundTrip) {
  const auto schema = make_schema(fit_tax_encoding(std::vector<std::optional<int>>{910}));
  Matrix X(2, schema.size());
  Rng rng(8);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < schema.size(); ++j) X(i, j) = rng.uniform(-5, 5);
  const std::vector<long long> ids{3, 9};
  const std::vector<double> agb{12.5, 0.0};
  const auto pm = parse_predictor_matrix_csv(predictor_matrix_csv(schema, ids, agb, X));
  EXPECT_EQ(pm.names, schema.names);
  EXPECT_EQ(pm.ids, ids);
  EXPECT_EQ(pm.agb, agb);
  EXPECT_EQ(pm.X.data(), X.data());
}
