#pragma once

// Stacked generalization: leave-one-out base predictions feed a linear
// meta-model with an intercept.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pagb/common/parallel.hpp"
#include "pagb/common/random.hpp"
#include "pagb/common/text.hpp"
#include "pagb/learners.hpp"

namespace pagb::ens {

using learn::Dataset;
using learn::Hyperparams;
using learn::ModelKind;
using learn::TrainedModel;

inline constexpr std::array<ModelKind, 3> kBaseKinds{ModelKind::rf, ModelKind::gbt, ModelKind::svr};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
template <std::size_t N>
std::array<double, N> symmetric_eigenvalues(std::array<std::array<double, N>, N> a) {
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      diag += a[i][i] * a[i][i];
      for (std::size_t j = i + 1; j < N; ++j) off += a[i][j] * a[i][j];
    }
    if (off <= 1e-30 * diag || off == 0.0) break;
    for (std::size_t p = 0; p < N; ++p)
      for (std::size_t q = p + 1; q < N; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < N; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < N; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
  }
  std::array<double, N> ev{};
  for (std::size_t i = 0; i < N; ++i) ev[i] = a[i][i];
  return ev;
}

/// Gaussian elimination with partial pivoting; false when singular.
template <std::size_t N>
bool solve_linear(std::array<std::array<double, N>, N> a, std::array<double, N> b, std::array<double, N>& x) {
  for (std::size_t c = 0; c < N; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < N; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    if (a[piv][c] == 0.0) return false;
    std::swap(a[piv], a[c]);
    std::swap(b[piv], b[c]);
    for (std::size_t r = c + 1; r < N; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < N; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  for (std::size_t i = N; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < N; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

struct MetaModel {
  std::array<double, 4> coef{};  // intercept, rf, gbt, svr
  bool ridge_fallback = false;
  double condition_number = 0.0;

  double apply(double rf, double gbt, double svr) const noexcept {
    return coef[0] + coef[1] * rf + coef[2] * gbt + coef[3] * svr;
  }
  bool operator==(const MetaModel&) const = default;
};

inline constexpr double kMaxCondition = 1e10;
inline constexpr double kRidgePenalty = 1e-6;

/// OLS of y on [1, loo]; ridge on the slopes when the normal matrix is
/// singular or ill-conditioned.
inline MetaModel fit_meta(const Matrix& loo, std::span<const double> y) {
  if (loo.cols() != 3 || loo.rows() != y.size()) throw ValidationError("meta-model needs an n x 3 matrix and n responses");
  if (y.size() <= 4) throw ValidationError("meta-model needs more than 4 rows");
  std::array<std::array<double, 4>, 4> A{};
  std::array<double, 4> b{};
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::array<double, 4> d{1.0, loo(i, 0), loo(i, 1), loo(i, 2)};
    for (std::size_t r = 0; r < 4; ++r) {
      b[r] += d[r] * y[i];
      for (std::size_t c = 0; c < 4; ++c) A[r][c] += d[r] * d[c];
    }
  }
  MetaModel m;
  const auto ev = symmetric_eigenvalues(A);
  double lo = ev[0], hi = ev[0];
  for (double v : ev) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  m.condition_number = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (m.condition_number <= kMaxCondition && solve_linear(A, b, m.coef)) return m;
  m.ridge_fallback = true;
  for (std::size_t k = 1; k < 4; ++k) A[k][k] += kRidgePenalty;
  if (!solve_linear(A, b, m.coef)) throw Error("ridge meta-model solve failed");
  return m;
}

struct LooOptions {
  std::size_t reduce_factor = 1;  // divides n_trees and n_rounds for LOO fits
  std::size_t folds = 0;          // >= 2: out-of-fold predictions instead of LOO
};

inline Hyperparams reduced(Hyperparams hp, std::size_t factor) {
  if (factor <= 1) return hp;
  hp.rf.n_trees = std::max<std::size_t>(1, hp.rf.n_trees / factor);
  hp.gbt.n_rounds = std::max<std::size_t>(1, hp.gbt.n_rounds / factor);
  return hp;
}

/// Seed for the fit that holds out row i with learner m.
inline std::uint64_t loo_seed(std::uint64_t seed, std::size_t i, std::size_t m) { return derive_seed(seed, i, m); }

/// Entry (i, m): learner m trained on every row but i, predicting row i.
/// With opt.folds >= 2 the held-out unit is a seeded fold instead of a row;
/// fold f with learner m uses derive_seed(seed, n + 1 + f, m).
inline Matrix loo_component_predictions(const Dataset& ds, const Hyperparams& hps, std::uint64_t seed,
                                        const LooOptions& opt = {}) {
  ds.validate();
  if (ds.n() < 3) throw ValidationError("leave-one-out stacking needs at least 3 rows");
  const auto hp = reduced(hps, opt.reduce_factor);
  const std::size_t n = ds.n();
  Matrix out(n, 3);
  if (opt.folds >= 2) {
    const std::size_t k = std::min(opt.folds, n);
    const auto fold = learn::assign_folds(n, k, seed);
    parallel_for(k * 3, [&](std::size_t job) {
      const std::size_t f = job / 3, m = job % 3;
      std::vector<std::size_t> train, test;
      for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? test : train).push_back(i);
      const auto model = learn::train_model(kBaseKinds[m], ds.subset(train), hp, loo_seed(seed, n + 1 + f, m));
      for (auto i : test) out(i, m) = model.predict(ds.X.row(i));
    });
    return out;
  }
  parallel_for(n * 3, [&](std::size_t job) {
    const std::size_t i = job / 3, m = job % 3;
    const auto model = learn::train_model(kBaseKinds[m], ds.without_row(i), hp, loo_seed(seed, i, m));
    out(i, m) = model.predict(ds.X.row(i));
  });
  return out;
}

struct StackedEnsemble {
  std::vector<std::string> feature_names;
  std::array<TrainedModel, 3> base;  // rf, gbt, svr
  MetaModel meta;
  Matrix loo;  // meta-training inputs, not serialized

  double predict(std::span<const double> x) const {
    return meta.apply(base[0].predict(x), base[1].predict(x), base[2].predict(x));
  }
  std::vector<double> predict(const Matrix& X) const {
    if (X.cols() != feature_names.size()) throw ValidationError("prediction matrix has the wrong number of predictors");
    std::vector<double> out(X.rows());
    parallel_for(X.rows(), [&](std::size_t i) { out[i] = predict(X.row(i)); });
    return out;
  }
};

/// Base learners refit on the full set use derive_seed(seed, n, m), which no
/// LOO fit (row indices < n) shares.
inline StackedEnsemble train_ensemble(const Dataset& ds, const Hyperparams& hps, std::uint64_t seed,
                                      const LooOptions& opt = {}) {
  StackedEnsemble e;
  e.feature_names = ds.feature_names;
  if (e.feature_names.empty())
    for (std::size_t j = 0; j < ds.p(); ++j) e.feature_names.push_back("x" + std::to_string(j));
  e.loo = loo_component_predictions(ds, hps, seed, opt);
  e.meta = fit_meta(e.loo, ds.y);
  parallel_for(3, [&](std::size_t m) { e.base[m] = learn::train_model(kBaseKinds[m], ds, hps, loo_seed(seed, ds.n(), m)); });
  return e;
}

inline std::vector<double> predict_ensemble(const StackedEnsemble& e, const Matrix& X) { return e.predict(X); }

/// Fitted meta values on the LOO matrix.
inline std::vector<double> meta_fitted(const MetaModel& meta, const Matrix& loo) {
  std::vector<double> f(loo.rows());
  for (std::size_t i = 0; i < loo.rows(); ++i) f[i] = meta.apply(loo(i, 0), loo(i, 1), loo(i, 2));
  return f;
}

inline std::string loo_matrix_csv(const Matrix& loo, std::span<const double> y) {
  text::CsvWriter w({"row", "y", "rf", "gbt", "svr"});
  for (std::size_t i = 0; i < loo.rows(); ++i)
    w.row({std::to_string(i), text::format_double(y[i]), text::format_double(loo(i, 0)),
           text::format_double(loo(i, 1)), text::format_double(loo(i, 2))});
  return w.str();
}

// ---------------------------------------------------------------------------
// Container

inline std::string serialize_ensemble(const StackedEnsemble& e) {
  bin::Writer w;
  learn::write_container_header(w, ModelKind::ensemble);
  w.u64(e.feature_names.size());
  for (const auto& n : e.feature_names) w.str(n);
  for (double c : e.meta.coef) w.f64(c);
  w.u8(e.meta.ridge_fallback ? 1 : 0);
  w.f64(e.meta.condition_number);
  for (const auto& m : e.base) learn::write_model_payload(w, m);
  return w.take();
}

inline StackedEnsemble deserialize_ensemble(std::string_view data) {
  bin::Reader r(data);
  if (learn::read_container_header(r) != ModelKind::ensemble) throw ValidationError("container does not hold an ensemble");
  StackedEnsemble e;
  e.feature_names.resize(r.count(8));
  for (auto& n : e.feature_names) n = r.str();
  for (double& c : e.meta.coef) c = r.f64();
  e.meta.ridge_fallback = r.u8() != 0;
  e.meta.condition_number = r.f64();
  for (std::size_t m = 0; m < 3; ++m) {
    e.base[m] = learn::read_model_payload(r);
    if (e.base[m].kind != kBaseKinds[m]) throw ValidationError("ensemble container has base models out of order");
    if (e.base[m].n_features != e.feature_names.size())
      throw ValidationError("ensemble base model predictor count disagrees with the feature list");
  }
  if (!r.done()) throw ValidationError("trailing bytes after ensemble payload");
  return e;
}

}  // namespace pagb::ens
