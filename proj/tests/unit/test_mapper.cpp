#include <gtest/gtest.h>

#include "pagb/mapper.hpp"

using namespace pagb;
using namespace pagb::map;
using geo::GridSpec;
using geo::Raster;

namespace {

const GridSpec kSpec{0, 0, 30, 6, 5};

ens::StackedEnsemble small_ensemble() {
  learn::Dataset ds;
  ds.X = Matrix(30, 2);
  Rng rng(3);
  for (std::size_t i = 0; i < 30; ++i) {
    ds.X(i, 0) = rng.uniform(0, 20);
    ds.X(i, 1) = rng.uniform(0, 1);
    ds.y.push_back(5.0 * ds.X(i, 0) + rng.normal());
  }
  ds.feature_names = {"A", "B"};
  learn::Hyperparams hp;
  hp.rf = {15, 0, 3};
  hp.gbt = {15, 0.1, 2, 0.8};
  return ens::train_ensemble(ds, hp, 11, {1, 5});
}

pred::RasterStack stack_for(std::uint64_t seed) {
  pred::RasterStack s;
  s.spec = kSpec;
  Rng rng(seed);
  for (const char* name : {"A", "B"}) {
    Raster r(kSpec, 0.0, name);
    for (auto& v : r.values) v = rng.uniform(-5, 25);
    s.bands.push_back(r);
  }
  return s;
}

Raster filled(double v) { return Raster(kSpec, v); }

}  // namespace

TEST(PredictSurface, MatchesScalarLoopAndFloors) {
  auto e = small_ensemble();
  e.meta.coef[0] -= 60.0;
  auto s = stack_for(4);
  s.bands[1].values[7] = kSpec.nodata;
  const auto r = predict_surface(s, e);
  std::size_t floored = 0;
  for (std::size_t i = 0; i < kSpec.size(); ++i) {
    if (i == 7) {
      EXPECT_TRUE(r.is_nodata(i));
      continue;
    }
    const std::vector<double> x{s.bands[0].values[i], s.bands[1].values[i]};
    const double p = e.predict(x);
    EXPECT_EQ(r.values[i], std::max(0.0, p));
    floored += p < 0.0;
  }
  EXPECT_GT(floored, 0u);
}

TEST(PredictSurface, ConstantMeta) {
  auto e = small_ensemble();
  e.meta.coef = {42.5, 0, 0, 0};
  const auto r = predict_surface(stack_for(5), e);
  for (double v : r.values) EXPECT_EQ(v, 42.5);
  e.meta.coef = {-3.0, 0, 0, 0};
  for (double v : predict_surface(stack_for(5), e).values) EXPECT_EQ(v, 0.0);
}

TEST(PredictSurface, RejectsMisorderedStack) {
  const auto e = small_ensemble();
  auto s = stack_for(6);
  std::swap(s.bands[0], s.bands[1]);
  EXPECT_THROW(predict_surface(s, e), ValidationError);
  s.bands.pop_back();
  EXPECT_THROW(predict_surface(s, e), ValidationError);
}

TEST(Mosaic, SingleCoverageIsIdentity) {
  auto a = filled(7.0);
  a.values[3] = kSpec.nodata;
  const std::vector<CoverageSurface> s{{5, 2016, a}};
  const auto m = mosaic(s);
  EXPECT_EQ(m.agb.values, a.values);
  EXPECT_TRUE(m.provenance.is_nodata(3));
  EXPECT_EQ(m.provenance.values[0], 5.0);
}

TEST(Mosaic, NewestWinsAndOrderIndependent) {
  auto old_cov = filled(1.0), new_cov = Raster::nodata_filled(kSpec), tie = Raster::nodata_filled(kSpec);
  for (std::size_t i = 0; i < 15; ++i) new_cov.values[i] = 2.0;
  for (std::size_t i = 10; i < 20; ++i) tie.values[i] = 3.0;
  std::vector<CoverageSurface> s{{1, 2014, old_cov}, {2, 2018, new_cov}, {3, 2018, tie}};
  const auto m = mosaic(s);
  for (std::size_t i = 0; i < kSpec.size(); ++i) {
    const double want = i >= 10 && i < 20 ? 3.0 : (i < 10 ? 2.0 : 1.0);
    const double prov = i >= 10 && i < 20 ? 3.0 : (i < 10 ? 2.0 : 1.0);
    EXPECT_EQ(m.agb.values[i], want) << i;
    EXPECT_EQ(m.provenance.values[i], prov) << i;
  }
  std::reverse(s.begin(), s.end());
  const auto r = mosaic(s);
  EXPECT_EQ(r.agb, m.agb);
  EXPECT_EQ(r.provenance, m.provenance);
  EXPECT_EQ(m.years.at(1), 2014);
}

TEST(Mosaic, ProvenanceIsNewestCoveringCoverage) {
  Rng rng(8);
  std::vector<CoverageSurface> s;
  for (long long id = 0; id < 5; ++id) {
    auto r = Raster::nodata_filled(kSpec);
    for (auto& v : r.values)
      if (rng.uniform() < 0.5) v = static_cast<double>(id);
    s.push_back({id, 2012 + static_cast<int>(rng.index(4)), r});
  }
  const auto m = mosaic(s);
  for (std::size_t i = 0; i < kSpec.size(); ++i) {
    long long best = -1;
    for (const auto& c : s) {
      if (c.agb.is_nodata(i)) continue;
      if (best < 0 || c.year > s[best].year || (c.year == s[best].year && c.coverage_id > best)) best = c.coverage_id;
    }
    if (best < 0)
      EXPECT_TRUE(m.provenance.is_nodata(i));
    else
      EXPECT_EQ(m.provenance.values[i], static_cast<double>(best));
  }
}

TEST(Mosaic, Errors) {
  EXPECT_THROW(mosaic(std::vector<CoverageSurface>{}), ValidationError);
  const std::vector<CoverageSurface> dup{{1, 2014, filled(1)}, {1, 2015, filled(2)}};
  EXPECT_THROW(mosaic(dup), ValidationError);
  const std::vector<CoverageSurface> mis{{1, 2014, filled(1)}, {2, 2015, Raster(GridSpec{0, 0, 30, 5, 5}, 1.0)}};
  EXPECT_THROW(mosaic(mis), ValidationError);
}

TEST(Mosaic, LandcoverFollowsProvenanceYear) {
  auto a = filled(1.0), b = Raster::nodata_filled(kSpec);
  b.values[0] = 2.0;
  const std::vector<CoverageSurface> s{{1, 2014, a}, {2, 2018, b}};
  const auto m = mosaic(s);
  const std::map<int, Raster> lc{{2014, filled(4.0)}, {2018, filled(6.0)}};
  const auto out = mosaic_landcover(m, lc);
  EXPECT_EQ(out.values[0], 6.0);
  EXPECT_EQ(out.values[1], 4.0);
  const auto missing = mosaic_landcover(m, {{2014, filled(4.0)}});
  EXPECT_TRUE(missing.is_nodata(0));
}

TEST(Masks, TreeCoverInsideIsIdentity) {
  auto agb = filled(50.0);
  agb.values[2] = 80.0;
  EXPECT_EQ(apply_masks(agb, filled(4.0), filled(1.0)), agb);
}

TEST(Masks, ExcludedClassesAndOutsideAoa) {
  const auto agb = filled(50.0);
  for (double c : {1.0, 5.0, 8.0})
    for (double v : apply_masks(agb, filled(c), filled(1.0)).values) EXPECT_EQ(v, kSpec.nodata);
  for (double c : {2.0, 3.0, 6.0})
    for (double v : apply_masks(agb, filled(c), filled(1.0)).values) EXPECT_EQ(v, 50.0);
  for (double v : apply_masks(agb, filled(4.0), filled(0.0)).values) EXPECT_EQ(v, kSpec.nodata);
  for (double v : apply_masks(agb, Raster::nodata_filled(kSpec), filled(1.0)).values) EXPECT_EQ(v, kSpec.nodata);
  EXPECT_THROW(apply_masks(agb, filled(7.0), filled(1.0)), ValidationError);
}

TEST(Masks, Idempotent) {
  Rng rng(9);
  auto agb = filled(0.0), lc = filled(0.0), aoa = filled(0.0);
  const int codes[] = {1, 2, 3, 4, 5, 6, 8};
  for (std::size_t i = 0; i < kSpec.size(); ++i) {
    agb.values[i] = rng.uniform(0, 300);
    lc.values[i] = codes[rng.index(7)];
    aoa.values[i] = rng.uniform() < 0.8 ? 1.0 : 0.0;
  }
  const auto once = apply_masks(agb, lc, aoa);
  EXPECT_EQ(apply_masks(once, lc, aoa), once);
}

TEST(Masks, LandcoverKeepMask) {
  auto lc = filled(4.0);
  lc.values[0] = 5.0;
  lc.values[1] = kSpec.nodata;
  const auto k = landcover_keep_mask(lc);
  EXPECT_EQ(k.values[0], 0.0);
  EXPECT_TRUE(k.is_nodata(1));
  EXPECT_EQ(k.values[2], 1.0);
}

TEST(Tabulate, TreeCoverTotalIdentity) {
  // 100 square cells summing to 4,251,812 ha with mean 132.66 Mg/ha.
  const double side = std::sqrt(4251812.0 * 10000.0 / 100.0);
  const GridSpec spec{0, 0, side, 10, 10};
  Raster agb(spec, 0.0), lc(spec, 4.0);
  for (std::size_t i = 0; i < 100; ++i) agb.values[i] = i % 2 ? 132.66 + 10.0 : 132.66 - 10.0;
  const auto s = tabulate_by_class(agb, lc);
  const auto& tree = s.rows[0];
  EXPECT_EQ(tree.cls, Landcover::tree_cover);
  EXPECT_NEAR(tree.area_ha, 4251812.0, 1e-6);
  EXPECT_NEAR(tree.mean_agb, 132.66, 1e-9);
  EXPECT_NEAR(tree.total_agb_mt, 132.66 * 4251812.0 * 1e-6, 1e-9);
  EXPECT_NEAR(tree.total_agb_mt, 564.06, 0.02);
  EXPECT_DOUBLE_EQ(tree.pct_area, 100.0);
  for (std::size_t k = 1; k < s.rows.size(); ++k) {
    EXPECT_EQ(s.rows[k].pixel_count, 0u);
    EXPECT_EQ(s.rows[k].total_agb_mt, 0.0);
  }
}

TEST(Tabulate, SinglePixel) {
  const GridSpec spec{0, 0, 30, 1, 1};
  const auto s = tabulate_by_class(Raster(spec, 100.0), Raster(spec, 6.0));
  const auto& w = s.rows[2];
  EXPECT_EQ(w.cls, Landcover::wetland);
  EXPECT_NEAR(w.area_ha, 0.09, 1e-12);
  EXPECT_NEAR(w.total_agb_mt, 9e-6, 1e-15);
}

TEST(Tabulate, SharesAndPerClassIdentity) {
  Rng rng(10);
  auto agb = filled(0.0), lc = filled(0.0), aoa = filled(1.0);
  const int codes[] = {1, 2, 3, 4, 5, 6, 8};
  for (std::size_t i = 0; i < kSpec.size(); ++i) {
    agb.values[i] = rng.uniform(0, 300);
    lc.values[i] = codes[rng.index(7)];
    if (rng.uniform() < 0.2) aoa.values[i] = 0.0;
  }
  const auto masked = apply_masks(agb, lc, aoa);
  const std::vector<ReferencePlot> ref{{4, 100.0}, {4, 140.0}, {3, 20.0}, {5, 99.0}};
  const auto s = tabulate_by_class(masked, lc, &aoa, ref);
  double pa = 0.0, pb = 0.0;
  std::size_t mapped = 0;
  for (const auto& r : s.rows) {
    pa += r.pct_area;
    pb += r.pct_agb;
    mapped += r.pixel_count;
    EXPECT_NEAR(r.total_agb_mt, r.mean_agb * r.area_ha * 1e-6, 1e-6 * std::max(1e-12, r.total_agb_mt));
  }
  EXPECT_NEAR(pa, 100.0, 0.1);
  EXPECT_NEAR(pb, 100.0, 0.1);
  std::size_t valid = 0;
  for (std::size_t i = 0; i < kSpec.size(); ++i) valid += !masked.is_nodata(i);
  EXPECT_EQ(mapped, valid);
  EXPECT_EQ(s.rows[0].reference_n, 2u);
  EXPECT_DOUBLE_EQ(s.rows[0].reference_mean_agb, 120.0);
  EXPECT_EQ(s.rows[3].reference_n, 1u);
  EXPECT_LT(s.rows[0].pct_aoa, 100.0);
  const auto csv = s.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "class,reference_n,reference_mean_agb,pixel_count,area_ha,pct_area,mean_agb,total_agb_mt,pct_agb,pct_aoa");
}
