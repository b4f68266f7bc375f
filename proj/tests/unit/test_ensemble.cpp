#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "pagb/ensemble.hpp"

using namespace pagb;
using namespace pagb::ens;
using learn::Dataset;
using learn::Hyperparams;

namespace {

Dataset make_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.X = Matrix(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 3; ++j) ds.X(i, j) = rng.uniform(0, 10);
    ds.y.push_back(2.0 * ds.X(i, 0) + ds.X(i, 1) * ds.X(i, 2) * 0.3 + rng.normal());
  }
  return ds;
}

Hyperparams small_hp() {
  Hyperparams hp;
  hp.rf = {15, 0, 2};
  hp.gbt = {15, 0.1, 2, 0.8};
  hp.svr.C = 5.0;
  return hp;
}

}  // namespace

TEST(Loo, ConstantResponse) {
  Dataset ds;
  ds.X = Matrix(3, 2);
  ds.X(0, 0) = 1;
  ds.X(1, 0) = 2;
  ds.X(2, 1) = 3;
  ds.y = {6.0, 6.0, 6.0};
  auto hp = small_hp();
  hp.rf.min_leaf = 1;
  hp.svr.epsilon = 0.1;
  const auto loo = loo_component_predictions(ds, hp, 1);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(loo(i, 0), 6.0);
    EXPECT_DOUBLE_EQ(loo(i, 1), 6.0);
    EXPECT_NEAR(loo(i, 2), 6.0, 0.1 + 1e-9);
  }
}

TEST(Loo, HeldOutResponseDoesNotLeak) {
  auto ds = make_data(12, 2);
  const auto hp = small_hp();
  const auto a = loo_component_predictions(ds, hp, 5);
  ds.y[4] += 100.0;
  const auto b = loo_component_predictions(ds, hp, 5);
  for (std::size_t m = 0; m < 3; ++m) {
    EXPECT_EQ(a(4, m), b(4, m));
    EXPECT_NE(a(0, m), b(0, m));
  }
}

TEST(Loo, MatchesNaiveRetrainLoop) {
  const auto ds = make_data(10, 3);
  const auto hp = small_hp();
  const std::uint64_t seed = 17;
  const auto loo = loo_component_predictions(ds, hp, seed);
  for (std::size_t i = 0; i < 10; ++i) {
    Dataset train;
    train.X = Matrix(0, 3);
    for (std::size_t r = 0; r < 10; ++r) {
      if (r == i) continue;
      train.X.push_row(ds.X.row(r));
      train.y.push_back(ds.y[r]);
    }
    const std::array<learn::ModelKind, 3> kinds{learn::ModelKind::rf, learn::ModelKind::gbt, learn::ModelKind::svr};
    for (std::size_t m = 0; m < 3; ++m) {
      const auto model = learn::train_model(kinds[m], train, hp, derive_seed(seed, i, m));
      EXPECT_EQ(loo(i, m), model.predict(ds.X.row(i))) << i << "," << m;
    }
  }
}

TEST(Loo, KFoldVariantMatchesOracle) {
  const auto ds = make_data(20, 4);
  const auto hp = small_hp();
  const auto out = loo_component_predictions(ds, hp, 9, {2, 4});
  const auto folds = learn::assign_folds(20, 4, 9);
  const auto red = reduced(hp, 2);
  EXPECT_EQ(red.rf.n_trees, 7u);
  for (std::size_t f = 0; f < 4; ++f) {
    std::vector<std::size_t> tr;
    for (std::size_t i = 0; i < 20; ++i)
      if (folds[i] != f) tr.push_back(i);
    const auto model = learn::train_model(learn::ModelKind::gbt, ds.subset(tr), red, derive_seed(9, 21 + f, 1));
    for (std::size_t i = 0; i < 20; ++i) {
      if (folds[i] != f) continue;
      EXPECT_EQ(out(i, 1), model.predict(ds.X.row(i)));
    }
  }
}

TEST(Loo, ThreadCountIndependent) {
  const auto ds = make_data(15, 5);
  set_thread_count(1);
  const auto a = loo_component_predictions(ds, small_hp(), 3);
  set_thread_count(4);
  const auto b = loo_component_predictions(ds, small_hp(), 3);
  set_thread_count(1);
  EXPECT_EQ(a.data(), b.data());
}

TEST(Meta, ExactColumnRecovered) {
  Rng rng(6);
  Matrix loo(30, 3);
  std::vector<double> y;
  for (std::size_t i = 0; i < 30; ++i) {
    for (std::size_t j = 0; j < 3; ++j) loo(i, j) = rng.uniform(0, 100);
    y.push_back(loo(i, 0));
  }
  const auto m = fit_meta(loo, y);
  EXPECT_FALSE(m.ridge_fallback);
  EXPECT_NEAR(m.coef[0], 0.0, 1e-9);
  EXPECT_NEAR(m.coef[1], 1.0, 1e-12);
  EXPECT_NEAR(m.coef[2], 0.0, 1e-12);
  EXPECT_NEAR(m.coef[3], 0.0, 1e-12);
  const auto fitted = meta_fitted(m, loo);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_NEAR(fitted[i], y[i], 1e-9);
}

TEST(Meta, CollinearColumnsUseRidge) {
  Rng rng(7);
  Matrix loo(25, 3);
  std::vector<double> y, p;
  for (std::size_t i = 0; i < 25; ++i) {
    const double v = rng.uniform(0, 50);
    p.push_back(v);
    for (std::size_t j = 0; j < 3; ++j) loo(i, j) = v;
    y.push_back(3.0 + 0.8 * v + rng.normal());
  }
  const auto m = fit_meta(loo, y);
  EXPECT_TRUE(m.ridge_fallback);
  // Simple regression of y on p.
  const double mp = stats::mean(p), my = stats::mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < 25; ++i) {
    sxy += (p[i] - mp) * (y[i] - my);
    sxx += (p[i] - mp) * (p[i] - mp);
  }
  const double b = sxy / sxx, a = my - b * mp;
  const auto fitted = meta_fitted(m, loo);
  for (std::size_t i = 0; i < 25; ++i) EXPECT_NEAR(fitted[i], a + b * p[i], 1e-6);
}

TEST(Meta, MatchesNormalEquations) {
  Rng rng(8);
  const std::size_t n = 50;
  Matrix loo(n, 3);
  std::vector<double> y(n);
  Eigen::MatrixXd D(n, 4);
  Eigen::VectorXd Y(n);
  for (std::size_t i = 0; i < n; ++i) {
    D(static_cast<Eigen::Index>(i), 0) = 1.0;
    for (std::size_t j = 0; j < 3; ++j) {
      loo(i, j) = rng.uniform(0, 200);
      D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1)) = loo(i, j);
    }
    y[i] = rng.uniform(0, 300);
    Y(static_cast<Eigen::Index>(i)) = y[i];
  }
  const Eigen::VectorXd beta = (D.transpose() * D).ldlt().solve(D.transpose() * Y);
  const auto m = fit_meta(loo, y);
  EXPECT_FALSE(m.ridge_fallback);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(m.coef[k], beta(static_cast<Eigen::Index>(k)), 1e-8);
}

TEST(Meta, RejectsTooFewRows) {
  Matrix loo(4, 3);
  std::vector<double> y(4, 1.0);
  EXPECT_THROW(fit_meta(loo, y), ValidationError);
}

class EnsembleTest : public ::testing::Test {
protected:
  void SetUp() override {
    ds = make_data(30, 9);
    e = train_ensemble(ds, small_hp(), 11);
  }
  Dataset ds;
  StackedEnsemble e;
};

TEST_F(EnsembleTest, MetaSelectsBaseModel) {
  auto f = e;
  f.meta.coef = {0, 1, 0, 0};
  const auto rf = e.base[0].predict(ds.X);
  EXPECT_EQ(predict_ensemble(f, ds.X), rf);
  f.meta.coef = {4.5, 0, 0, 0};
  for (double v : predict_ensemble(f, ds.X)) EXPECT_EQ(v, 4.5);
}

TEST_F(EnsembleTest, LinearInMeta) {
  auto a = e, b = e, ab = e;
  a.meta.coef = {1.0, 0.2, 0.3, 0.4};
  b.meta.coef = {-2.0, 0.5, 0.1, 0.3};
  for (std::size_t k = 0; k < 4; ++k) ab.meta.coef[k] = a.meta.coef[k] + b.meta.coef[k];
  const auto pa = predict_ensemble(a, ds.X), pb = predict_ensemble(b, ds.X), pab = predict_ensemble(ab, ds.X);
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_NEAR(pa[i] + pb[i], pab[i], 1e-9);
}

TEST_F(EnsembleTest, FullFitSeedsDisjointFromLoo) {
  const auto rf = learn::train_model(learn::ModelKind::rf, ds, small_hp(), derive_seed(11, ds.n(), 0));
  EXPECT_EQ(rf, e.base[0]);
}

TEST_F(EnsembleTest, ContainerRoundTripByteIdentical) {
  const auto bytes = serialize_ensemble(e);
  const auto back = deserialize_ensemble(bytes);
  EXPECT_EQ(serialize_ensemble(back), bytes);
  EXPECT_EQ(predict_ensemble(back, ds.X), predict_ensemble(e, ds.X));
  EXPECT_EQ(serialize_ensemble(train_ensemble(ds, small_hp(), 11)), bytes);
  EXPECT_THROW(deserialize_ensemble(bytes + "x"), ValidationError);
}

TEST_F(EnsembleTest, WrongWidthRejected) {
  EXPECT_THROW(predict_ensemble(e, Matrix(2, 5)), ValidationError);
}
