#include <gtest/gtest.h>

#include "pagb/aoa.hpp"

using namespace pagb;
using namespace pagb::aoa;
using geo::GridSpec;
using geo::Raster;

namespace {

Matrix random_matrix(std::size_t n, std::size_t p, std::uint64_t seed) {
  Rng rng(seed);
  Matrix X(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) X(i, j) = rng.uniform(0, 10);
  return X;
}

learn::Hyperparams quick_hp() {
  learn::Hyperparams hp;
  hp.rf = {20, 0, 3};
  hp.gbt = {20, 0.1, 2, 0.8};
  return hp;
}

}  // namespace

TEST(Clustering, IdenticalColumnsShareCluster) {
  auto X = random_matrix(50, 9, 1);
  for (std::size_t i = 0; i < 50; ++i) X(i, 5) = X(i, 2);
  const auto cl = cluster_predictors(X);
  EXPECT_EQ(cl.n_clusters, 7u);
  EXPECT_EQ(cl.assignment[2], cl.assignment[5]);
}

TEST(Clustering, IndependentColumnsAreSingletons) {
  const auto cl = cluster_predictors(random_matrix(200, 7, 2));
  std::set<std::size_t> ids(cl.assignment.begin(), cl.assignment.end());
  EXPECT_EQ(ids.size(), 7u);
  EXPECT_FALSE(cl.degenerate);
}

TEST(Clustering, NoisyPairsRecovered) {
  // Seven independent columns plus a noisy copy of each: every copy joins
  // its source.
  Rng rng(3);
  Matrix X = random_matrix(300, 14, 4);
  for (std::size_t i = 0; i < 300; ++i)
    for (std::size_t j = 0; j < 7; ++j) X(i, j + 7) = X(i, j) + 0.3 * rng.normal();
  const auto cl = cluster_predictors(X);
  for (std::size_t j = 0; j < 7; ++j) EXPECT_EQ(cl.assignment[j], cl.assignment[j + 7]);
  for (std::size_t j = 0; j < 7; ++j) EXPECT_EQ(cl.assignment[j], j);
}

TEST(Clustering, RankInvariant) {
  auto X = random_matrix(80, 12, 5);
  const auto a = cluster_predictors(X);
  for (std::size_t i = 0; i < 80; ++i) X(i, 3) = std::exp(X(i, 3)) + 5.0;
  EXPECT_EQ(cluster_predictors(X).assignment, a.assignment);
}

TEST(Clustering, FewerPredictorsThanClusters) {
  const auto cl = cluster_predictors(random_matrix(20, 3, 6));
  EXPECT_TRUE(cl.degenerate);
  EXPECT_EQ(cl.n_clusters, 3u);
}

TEST(Importance, ConstantResponseGivesUniformWeights) {
  learn::Dataset ds;
  ds.X = random_matrix(24, 4, 7);
  ds.y.assign(24, 3.0);
  const auto cl = cluster_predictors(ds.X);
  ImportanceOptions opt;
  opt.hyperparams = quick_hp();
  opt.loo = {1, 4};
  const auto r = permutation_importance(ds, cl, 1, opt);
  for (double d : r.deltas) EXPECT_EQ(d, 0.0);
  for (double w : r.weights) EXPECT_DOUBLE_EQ(w, 0.25);
}

TEST(Importance, ExactDriverRanksFirst) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    learn::Dataset ds;
    ds.X = random_matrix(40, 4, 10 + s);
    for (std::size_t i = 0; i < 40; ++i) ds.y.push_back(ds.X(i, 0));
    const auto cl = cluster_predictors(ds.X);
    ImportanceOptions opt;
    opt.hyperparams = quick_hp();
    opt.loo = {1, 5};
    const auto r = permutation_importance(ds, cl, s, opt);
    double sum = 0.0;
    for (double w : r.weights) sum += w;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    for (std::size_t j = 1; j < 4; ++j) EXPECT_GT(r.weights[0], r.weights[j]) << "seed " << s;
    for (std::size_t j = 0; j < 4; ++j) EXPECT_GE(r.deltas[j], 0.0);
  }
}

TEST(Importance, DesignHasOneRepresentativePerOtherCluster) {
  Clustering cl;
  cl.assignment = {0, 0, 1, 2, 2, 2};
  cl.n_clusters = 3;
  const auto d = importance_design(cl, 3, 9);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d[0], 3u);
  EXPECT_EQ(cl.assignment[d[1]], 0u);
  EXPECT_EQ(d[2], 2u);
}

TEST(Dissimilarity, TrainingRowIsZero) {
  const auto X = random_matrix(30, 5, 11);
  const std::vector<double> w{0.1, 0.2, 0.3, 0.2, 0.2};
  const auto s = fit_di_stats(X, w);
  EXPECT_EQ(dissimilarity_index(X.row(7), s), 0.0);
}

TEST(Dissimilarity, ScaleInvariant) {
  auto X = random_matrix(30, 4, 12);
  const std::vector<double> w{0.4, 0.3, 0.2, 0.1};
  const std::vector<double> q{3.0, 7.0, 1.0, 9.5};
  const double a = dissimilarity_index(q, fit_di_stats(X, w));
  for (std::size_t i = 0; i < 30; ++i)
    for (std::size_t j = 0; j < 4; ++j) X(i, j) *= 2.0;
  std::vector<double> q2 = q;
  for (double& v : q2) v *= 2.0;
  EXPECT_NEAR(dissimilarity_index(q2, fit_di_stats(X, w)), a, 1e-12);
}

TEST(Dissimilarity, TwoPointHandCase) {
  Matrix X(2, 2);
  X(1, 0) = 2.0;
  X(1, 1) = 4.0;
  const std::vector<double> w{0.75, 0.25};
  const auto s = fit_di_stats(X, w);
  EXPECT_NEAR(s.mean_train_distance, std::sqrt(1.25), 1e-12);
  const std::vector<double> q{1.0, 1.0};
  EXPECT_NEAR(dissimilarity_index(q, s), std::sqrt(0.23125), 1e-12);
}

TEST(Dissimilarity, ZeroVarianceColumnDropped) {
  Matrix X = random_matrix(10, 3, 13);
  for (std::size_t i = 0; i < 10; ++i) X(i, 2) = 5.0;
  const auto s = fit_di_stats(X, std::vector<double>{0.25, 0.25, 0.5});
  EXPECT_FALSE(s.retained[2]);
  EXPECT_DOUBLE_EQ(s.weights[0], 0.5);
  std::vector<double> q(X.row(3).begin(), X.row(3).end());
  q[2] = 1e6;
  EXPECT_EQ(dissimilarity_index(q, s), 0.0);
}

TEST(Threshold, HandCase) {
  EXPECT_DOUBLE_EQ(aoa_threshold({1, 2, 3, 4}), 5.5);
  EXPECT_DOUBLE_EQ(aoa_threshold({4, 1, 3, 2}), 5.5);
  EXPECT_DOUBLE_EQ(aoa_threshold({0.7, 0.7, 0.7, 0.7, 0.7}), 0.7);
  EXPECT_THROW(aoa_threshold({1, 2, 3}), ValidationError);
  EXPECT_THROW(aoa_threshold({1, 2, 3, 4}, 0.8, 0.2), ValidationError);
}

TEST(Threshold, MonotoneUnderNewMaximum) {
  Rng rng(14);
  std::vector<double> d;
  for (int i = 0; i < 20; ++i) d.push_back(rng.uniform());
  double prev = aoa_threshold(d);
  for (int k = 0; k < 10; ++k) {
    d.push_back(*std::max_element(d.begin(), d.end()) + rng.uniform());
    const double t = aoa_threshold(d);
    EXPECT_GE(t, prev);
    prev = t;
  }
}

class AoaMaskTest : public ::testing::Test {
protected:
  void SetUp() override {
    train = random_matrix(25, 3, 15);
    stats = fit_di_stats(train, std::vector<double>{0.5, 0.3, 0.2});
    Rng rng(16);
    std::vector<double> test;
    for (int i = 0; i < 10; ++i) {
      std::vector<double> x{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0, 10)};
      test.push_back(dissimilarity_index(x, stats));
    }
    stats.threshold = aoa_threshold(test);
    stack.spec = GridSpec{0, 0, 30, 12, 10};
    for (int b = 0; b < 3; ++b) {
      Raster r(stack.spec, 0.0, "B" + std::to_string(b));
      for (auto& v : r.values) v = rng.uniform(-10, 25);
      stack.bands.push_back(r);
    }
    stack.bands[1].values[5] = stack.spec.nodata;
    for (std::size_t b = 0; b < 3; ++b) stack.bands[b].values[9] = train(4, b);
  }
  Matrix train;
  DIStats stats;
  pred::RasterStack stack;
};

TEST_F(AoaMaskTest, MatchesScalarLoop) {
  const auto a = aoa_mask(stack, stats);
  std::size_t valid = 0, inside = 0;
  for (std::size_t i = 0; i < stack.spec.size(); ++i) {
    bool ok = true;
    std::vector<double> x;
    for (const auto& b : stack.bands) {
      ok = ok && b.values[i] != stack.spec.nodata;
      x.push_back(b.values[i]);
    }
    if (!ok) {
      EXPECT_TRUE(a.di.is_nodata(i));
      EXPECT_EQ(a.mask.values[i], 0.0);
      continue;
    }
    const double di = dissimilarity_index(x, stats);
    EXPECT_EQ(a.di.values[i], di);
    EXPECT_EQ(a.mask.values[i], di <= stats.threshold ? 1.0 : 0.0);
    ++valid;
    inside += di <= stats.threshold;
  }
  EXPECT_EQ(inside_fraction(a), static_cast<double>(inside) / static_cast<double>(valid));
  EXPECT_EQ(a.mask.values[9], 1.0);
  EXPECT_GT(inside, 0u);
  EXPECT_LT(inside, valid);
}

TEST_F(AoaMaskTest, AllNodataIsOutside) {
  for (auto& b : stack.bands) std::fill(b.values.begin(), b.values.end(), stack.spec.nodata);
  const auto a = aoa_mask(stack, stats);
  for (double v : a.mask.values) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(inside_fraction(a), 0.0);
}

TEST_F(AoaMaskTest, ThreadCountIndependent) {
  set_thread_count(1);
  const auto a = aoa_mask(stack, stats);
  set_thread_count(4);
  const auto b = aoa_mask(stack, stats);
  set_thread_count(1);
  EXPECT_EQ(a.di, b.di);
  EXPECT_EQ(a.mask, b.mask);
}
