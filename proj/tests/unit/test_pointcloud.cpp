#include <gtest/gtest.h>

#include <numbers>

#include "pagb/pointcloud.hpp"

using namespace pagb;
using namespace pagb::pc;
using geo::GridSpec;
using geo::Point;

namespace {

PointRecord rec(double x, double y, double z, std::uint8_t rn = 1, std::uint8_t nr = 1, std::uint8_t cls = 1) {
  return {x, y, z, rn, nr, cls};
}

PointCloud random_cloud(std::size_t n, double w, std::uint64_t seed) {
  Rng rng(seed);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.records.push_back(rec(rng.uniform(0, w), rng.uniform(0, w), rng.uniform(0, 30)));
  return c;
}

}  // namespace

TEST(Pcx, HeaderOnlyIsEmpty) {
  EXPECT_EQ(parse_pcx(std::string_view("PCX 1\n")).size(), 0u);
}

TEST(Pcx, SingleGroundReturn) {
  const auto c = parse_pcx(std::string_view("PCX 1\n1.0 2.0 3.0 1 1 2\n"));
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.records[0], rec(1, 2, 3, 1, 1, kGroundClass));
}

TEST(Pcx, ReturnNumberAboveCountNamesLine) {
  try {
    parse_pcx(std::string_view("PCX 1\n# note\n1.0 2.0 3.0 2 1 1\n"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Pcx, MalformedInputs) {
  EXPECT_THROW(parse_pcx(std::string_view("1 2 3 1 1 1\n")), ParseError);
  EXPECT_THROW(parse_pcx(std::string_view("PCX 1\n1 2 3 1 1\n")), ParseError);
  EXPECT_THROW(parse_pcx(std::string_view("PCX 1\n1 2 3 1 1 1 9\n")), ParseError);
  EXPECT_THROW(parse_pcx(std::string_view("PCX 1\n1 2 x 1 1 1\n")), ParseError);
  EXPECT_THROW(parse_pcx(std::string_view("PCX 1\n1 2 3 0 1 1\n")), ParseError);
  EXPECT_THROW(parse_pcx(std::string_view("PCX 1\n1 2 3 1 1 256\n")), ParseError);
}

TEST(Pcx, RoundTripIsExact) {
  auto c = random_cloud(500, 100, 3);
  c.records[7].return_number = 2;
  c.records[7].num_returns = 3;
  EXPECT_EQ(parse_pcx(std::string_view(write_pcx(c))).records, c.records);
}

TEST(GroundModel, ConstantGround) {
  PointCloud c;
  Rng rng(1);
  for (int i = 0; i < 200; ++i) c.records.push_back(rec(rng.uniform(0, 90), rng.uniform(0, 90), 100, 1, 1, kGroundClass));
  const auto gm = build_ground_model(c, GridSpec{0, 0, 30, 3, 3});
  for (double v : gm.ground_elevation.values) EXPECT_EQ(v, 100.0);
  EXPECT_DOUBLE_EQ(gm.elevation({45, 45}), 100.0);
}

TEST(GroundModel, CellMean) {
  PointCloud c;
  c.records = {rec(5, 5, 99, 1, 1, 2), rec(6, 6, 101, 1, 1, 2), rec(7, 7, 500, 1, 1, 1)};
  const auto gm = build_ground_model(c, GridSpec{0, 0, 10, 1, 1});
  EXPECT_EQ(gm.ground_elevation.values[0], 100.0);
}

TEST(GroundModel, NearestFill) {
  PointCloud c;
  c.records = {rec(5, 5, 50, 1, 1, 2)};
  const auto gm = build_ground_model(c, GridSpec{0, 0, 10, 2, 1});
  EXPECT_EQ(gm.ground_elevation.values[0], 50.0);
  EXPECT_EQ(gm.ground_elevation.values[1], 50.0);
}

TEST(GroundModel, RequiresGroundReturns) {
  PointCloud c;
  c.records = {rec(5, 5, 50)};
  EXPECT_THROW(build_ground_model(c, GridSpec{0, 0, 10, 1, 1}), ValidationError);
}

TEST(GroundModel, BilinearBetweenCenters) {
  PointCloud c;
  c.records = {rec(5, 5, 10, 1, 1, 2), rec(15, 5, 20, 1, 1, 2)};
  const auto gm = build_ground_model(c, GridSpec{0, 0, 10, 2, 1});
  EXPECT_DOUBLE_EQ(gm.elevation({10, 5}), 15.0);
  EXPECT_DOUBLE_EQ(gm.elevation({1, 5}), 10.0);
}

TEST(Normalize, HeightsAndClamp) {
  PointCloud c;
  c.records = {rec(5, 5, 100, 1, 1, 2), rec(5, 5, 130), rec(5, 5, 99)};
  const auto gm = build_ground_model(c, GridSpec{0, 0, 10, 1, 1});
  const auto n = normalize_heights(c, gm);
  EXPECT_TRUE(n.height_normalized);
  EXPECT_EQ(n.records[1].z, 30.0);
  EXPECT_EQ(n.records[2].z, 0.0);
  EXPECT_THROW(normalize_heights(n, gm), ValidationError);
}

TEST(Normalize, PointOutsideExtentReported) {
  PointCloud c;
  c.records = {rec(5, 5, 100, 1, 1, 2), rec(50, 5, 130)};
  const auto gm = build_ground_model(c, GridSpec{0, 0, 10, 1, 1});
  try {
    normalize_heights(c, gm);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("indices: 1"), std::string::npos);
  }
}

TEST(Normalize, ThreadCountDoesNotChangeOutput) {
  auto c = random_cloud(300'000, 300, 8);
  for (std::size_t i = 0; i < c.size(); i += 7) c.records[i].classification = kGroundClass;
  const auto gm = build_ground_model(c, GridSpec{0, 0, 30, 10, 10});
  set_thread_count(1);
  const auto a = normalize_heights(c, gm);
  set_thread_count(4);
  const auto b = normalize_heights(c, gm);
  set_thread_count(1);
  EXPECT_EQ(a.records, b.records);
}

TEST(Clip, BoundaryIncluded) {
  PointCloud c;
  c.records = {rec(3, 4, 1), rec(3.0001, 4, 1)};
  const auto out = clip_circle(c, {0, 0}, 5.0);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out.records[0].x, 3.0);
}

TEST(Clip, FarCenterEmptyAndIdempotent) {
  const auto c = random_cloud(2000, 100, 2);
  EXPECT_TRUE(clip_circle(c, {1e6, 1e6}, 10).empty());
  const auto once = clip_circle(c, {50, 50}, 20);
  EXPECT_EQ(clip_circle(once, {50, 50}, 20).records, once.records);
}

TEST(Clip, SpatialIndexMatchesLinearScan) {
  const auto c = random_cloud(20000, 500, 5);
  const SpatialIndex idx(c, 25.0);
  Rng rng(6);
  for (int k = 0; k < 50; ++k) {
    const Point p{rng.uniform(-20, 520), rng.uniform(-20, 520)};
    EXPECT_EQ(idx.clip_circle(p, 7.32).records, clip_circle(c, p, 7.32).records);
  }
}

TEST(HullCoverage, Degenerate) {
  PointCloud c;
  EXPECT_EQ(convex_hull_coverage(c, {0, 0}, 1), 0.0);
  c.records = {rec(0, 0, 1), rec(1, 1, 1)};
  EXPECT_EQ(convex_hull_coverage(c, {0, 0}, 1), 0.0);
  c.records.push_back(rec(2, 2, 1));
  EXPECT_EQ(convex_hull_coverage(c, {0, 0}, 1), 0.0);
}

TEST(HullCoverage, InscribedSquare) {
  const double r = 7.32, a = r / std::numbers::sqrt2;
  PointCloud c;
  c.records = {rec(a, a, 1), rec(-a, a, 1), rec(-a, -a, 1), rec(a, -a, 1)};
  const double cov = convex_hull_coverage(c, {0, 0}, r);
  EXPECT_NEAR(cov, 2.0 / std::numbers::pi, 1e-3);
  // Monte-Carlo containment oracle.
  Rng rng(77);
  std::size_t in_disc = 0, in_both = 0;
  for (int k = 0; k < 1'000'000; ++k) {
    const double x = rng.uniform(-r, r), y = rng.uniform(-r, r);
    if (x * x + y * y > r * r) continue;
    ++in_disc;
    in_both += std::abs(x) <= a && std::abs(y) <= a;
  }
  EXPECT_NEAR(cov, static_cast<double>(in_both) / static_cast<double>(in_disc), 3e-3);
}

TEST(HullCoverage, DenseUniformNearlyFull) {
  Rng rng(9);
  PointCloud c;
  while (c.size() < 5000) {
    const double x = rng.uniform(-10, 10), y = rng.uniform(-10, 10);
    if (x * x + y * y <= 100) c.records.push_back(rec(x, y, 0));
  }
  EXPECT_GT(convex_hull_coverage(c, {0, 0}, 10), 0.98);
}
