#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "pagb/geodata.hpp"

using namespace pagb;
using namespace pagb::geo;

namespace {

// Independent even-odd containment test for the Monte-Carlo oracle.
bool inside(const Polygon& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point a = poly[i], b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

double monte_carlo_mean(const Raster& r, const Polygon& poly, std::size_t samples, std::uint64_t seed) {
  const Rect bb = bounding_box(poly);
  Rng rng(seed);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < samples; ++k) {
    const double x = rng.uniform(bb.xmin, bb.xmax), y = rng.uniform(bb.ymin, bb.ymax);
    if (!inside(poly, x, y)) continue;
    const auto col = static_cast<std::size_t>(std::floor((x - r.spec.origin_x) / r.spec.cell_size));
    const auto rs = static_cast<std::size_t>(std::floor((y - r.spec.origin_y) / r.spec.cell_size));
    if (col >= r.spec.n_cols || rs >= r.spec.n_rows) continue;
    const double v = r.at(col, r.spec.n_rows - 1 - rs);
    if (v == r.spec.nodata) continue;
    sum += v;
    ++n;
  }
  return sum / static_cast<double>(n);
}

Polygon rect_poly(double x0, double y0, double x1, double y1) { return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}; }

}  // namespace

TEST(PlotFootprint, SubplotCentersAtOrigin) {
  const auto fp = build_plot_footprint({0.0, 0.0});
  EXPECT_DOUBLE_EQ(fp.subplot_centers[0].x, 0.0);
  EXPECT_DOUBLE_EQ(fp.subplot_centers[0].y, 0.0);
  EXPECT_NEAR(fp.subplot_centers[1].x, 0.0, 1e-12);
  EXPECT_NEAR(fp.subplot_centers[1].y, 36.6, 1e-12);
  EXPECT_NEAR(fp.subplot_centers[2].x, 31.6965, 1e-4);
  EXPECT_NEAR(fp.subplot_centers[2].y, -18.3, 1e-12);
  EXPECT_NEAR(fp.subplot_centers[3].x, -31.6965, 1e-4);
  EXPECT_NEAR(fp.subplot_centers[3].y, -18.3, 1e-12);
}

TEST(PlotFootprint, AreaIsFourCircles) {
  const auto fp = build_plot_footprint({10.0, 20.0});
  EXPECT_NEAR(fp.area(), 673.3, 0.05);
  double poly_area = 0.0;
  for (const auto& p : fp.subplot_polygons()) poly_area += polygon_area(p);
  EXPECT_NEAR(poly_area, fp.area(), 1e-6 * fp.area());
}

TEST(PlotFootprint, TranslationEquivariant) {
  const auto a = build_plot_footprint({0.0, 0.0});
  const auto b = build_plot_footprint({123.5, -77.25});
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(b.subplot_centers[k].x - a.subplot_centers[k].x, 123.5, 1e-9);
    EXPECT_NEAR(b.subplot_centers[k].y - a.subplot_centers[k].y, -77.25, 1e-9);
  }
}

TEST(PlotFootprint, SubplotsDisjoint) {
  const auto fp = build_plot_footprint({0.0, 0.0});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j)
      EXPECT_GT(std::hypot(fp.subplot_centers[i].x - fp.subplot_centers[j].x,
                           fp.subplot_centers[i].y - fp.subplot_centers[j].y),
                2 * fp.subplot_radius);
}

TEST(PlotFootprint, RejectsNonFiniteCenter) {
  EXPECT_THROW(build_plot_footprint({std::nan(""), 0.0}), ValidationError);
}

TEST(Hexagons, PublishedAreas) {
  EXPECT_NEAR(HexTessellation::hexagon_area(10'000.0) / 1e4, 8660.0, 8660.0 * 1e-3);
  EXPECT_NEAR(HexTessellation::hexagon_area(100'000.0) / 1e4, 866'025.0, 866'025.0 * 1e-3);
}

TEST(Hexagons, PolygonAreaMatchesFormula) {
  EXPECT_NEAR(polygon_area(hexagon_polygon({5.0, 5.0}, 1000.0)), HexTessellation::hexagon_area(1000.0), 1e-6);
}

TEST(Hexagons, Deterministic) {
  const Rect ext{0, 0, 5000, 4000};
  const auto a = tessellate_hexagons(ext, 700.0, 9);
  const auto b = tessellate_hexagons(ext, 700.0, 9);
  ASSERT_EQ(a.cells().size(), b.cells().size());
  for (std::size_t i = 0; i < a.cells().size(); ++i) {
    EXPECT_EQ(a.cells()[i].id, b.cells()[i].id);
    EXPECT_EQ(a.cells()[i].center, b.cells()[i].center);
  }
}

TEST(Hexagons, CellsCoverExtentAndLocateIsConsistent) {
  const Rect ext{100, 200, 3100, 2700};
  const auto t = tessellate_hexagons(ext, 450.0, 3);
  double covered = 0.0;
  for (const auto& h : t.cells()) covered += polygon_area(clip_to_rect(h.vertices, ext));
  EXPECT_NEAR(covered, ext.area(), 1e-6 * ext.area());
  Rng rng(4);
  for (int k = 0; k < 2000; ++k) {
    const Point p{rng.uniform(ext.xmin, ext.xmax), rng.uniform(ext.ymin, ext.ymax)};
    const auto i = t.locate(p);
    ASSERT_TRUE(i.has_value());
    EXPECT_TRUE(inside(t.cells()[*i].vertices, p.x, p.y));
  }
}

TEST(Hexagons, HalvingSpacingQuadruplesCount) {
  const Rect ext{0, 0, 40000, 40000};
  const double n1 = static_cast<double>(tessellate_hexagons(ext, 2000.0, 1).cells().size());
  const double n2 = static_cast<double>(tessellate_hexagons(ext, 1000.0, 1).cells().size());
  EXPECT_NEAR(n2 / n1, 4.0, 0.4);
}

TEST(Hexagons, RejectsBadInput) {
  EXPECT_THROW(tessellate_hexagons({0, 0, 10, 10}, 0.0, 1), ValidationError);
  EXPECT_THROW(tessellate_hexagons({0, 0, 0, 10}, 5.0, 1), ValidationError);
}

TEST(AreaWeightedMean, ConstantRaster) {
  GridSpec s{0, 0, 10, 5, 5};
  const Raster r(s, 42.0);
  const Polygon tri{{3, 4}, {41, 9}, {17, 46}};
  EXPECT_NEAR(*area_weighted_mean(r, tri), 42.0, 1e-12);
}

TEST(AreaWeightedMean, ExactPixel) {
  GridSpec s{0, 0, 10, 3, 3};
  Raster r(s, 1.0);
  r.at(1, 1) = 77.0;
  EXPECT_NEAR(*area_weighted_mean(r, rect_poly(10, 10, 20, 20)), 77.0, 1e-12);
}

TEST(AreaWeightedMean, OneToThreeSplit) {
  GridSpec s{0, 0, 1, 2, 1};
  Raster r(s, 0.0);
  r.at(1, 0) = 10.0;
  const auto poly = rect_poly(0.75, 0.0, 1.75, 1.0);
  EXPECT_NEAR(*area_weighted_mean(r, poly), 7.5, 1e-12);
  EXPECT_NEAR(monte_carlo_mean(r, poly, 1'000'000, 11), 7.5, 1e-2);
}

TEST(AreaWeightedMean, MatchesMonteCarloOnIrregularPolygon) {
  GridSpec s{0, 0, 1, 6, 6};
  Raster r(s, 0.0);
  Rng rng(21);
  for (auto& v : r.values) v = rng.uniform(0.0, 100.0);
  r.values[7] = s.nodata;
  const Polygon poly{{0.3, 0.2}, {5.1, 1.0}, {5.7, 4.4}, {2.9, 5.8}, {0.6, 3.5}};
  EXPECT_NEAR(*area_weighted_mean(r, poly), monte_carlo_mean(r, poly, 1'000'000, 12), 0.1);
}

TEST(AreaWeightedMean, NoValidPixel) {
  GridSpec s{0, 0, 1, 2, 2};
  const auto r = Raster::nodata_filled(s);
  EXPECT_FALSE(area_weighted_mean(r, rect_poly(0.2, 0.2, 0.8, 0.8)).has_value());
  EXPECT_FALSE(area_weighted_mean(Raster(s, 1.0), rect_poly(5, 5, 6, 6)).has_value());
}

TEST(Resample, IdenticalGridIsIdentity) {
  GridSpec s{0, 0, 30, 4, 3};
  Raster r(s, 0.0);
  for (std::size_t i = 0; i < r.values.size(); ++i) r.values[i] = static_cast<double>(i) * 1.5;
  EXPECT_EQ(resample_nearest(r, s), r);
}

TEST(Resample, ConstantStaysConstant) {
  const Raster r(GridSpec{0, 0, 30, 10, 10}, 5.0);
  const auto out = resample_nearest(r, GridSpec{12, 7, 17, 8, 9});
  for (double v : out.values) EXPECT_EQ(v, 5.0);
}

TEST(Resample, HalfCellShiftedCheckerboard) {
  // Target centers fall at x, y in {1, 2}; x = 1 lies in source column 1,
  // x = 2 is the east edge and belongs to column 1; likewise for y. Every
  // target cell therefore samples the north-east source cell.
  GridSpec s{0, 0, 1, 2, 2};
  Raster r(s, 0.0);
  r.at(0, 0) = 1;
  r.at(1, 0) = 2;
  r.at(0, 1) = 3;
  r.at(1, 1) = 4;
  const auto out = resample_nearest(r, GridSpec{0.5, 0.5, 1, 2, 2});
  for (double v : out.values) EXPECT_EQ(v, 2.0);
}

TEST(Resample, OutsideIsNodata) {
  const Raster r(GridSpec{0, 0, 1, 2, 2}, 3.0);
  const auto out = resample_nearest(r, GridSpec{10, 10, 1, 2, 2});
  EXPECT_EQ(out.count_valid(), 0u);
}

TEST(AsciiGrid, RoundTrip) {
  GridSpec s{500.0, 1000.0, 30.0, 3, 2, -9999.0};
  Raster r(s, 0.0, "X");
  r.values = {1.5, -2.25, s.nodata, 0.1, 1e-7, 123456.789};
  const auto back = parse_ascii_grid(write_ascii_grid(r), "X");
  EXPECT_EQ(back, r);
}

TEST(AsciiGrid, RejectsShortData) {
  EXPECT_THROW(parse_ascii_grid("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2 3\n"),
               ValidationError);
}

TEST(Grid, LocateEdgesAndOrientation) {
  GridSpec s{0, 0, 10, 3, 2};
  EXPECT_EQ(*s.locate({0, 0}), s.index(0, 1));
  EXPECT_EQ(*s.locate({30, 20}), s.index(2, 0));
  EXPECT_FALSE(s.locate({30.01, 5}).has_value());
  EXPECT_FALSE(s.locate({-0.01, 5}).has_value());
  const auto c = s.cell_center(0, 0);
  EXPECT_EQ(c.x, 5.0);
  EXPECT_EQ(c.y, 15.0);
}

TEST(Polygon, ClipToRectArea) {
  const auto circle = circle_polygon({0, 0}, 1.0, 720);
  EXPECT_NEAR(polygon_area(clip_to_rect(circle, {0, 0, 5, 5})), std::numbers::pi / 4, 1e-4);
}
