#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "pagb/common/random.hpp"
#include "pagb/common/stats.hpp"
#include "pagb/learners/dataset.hpp"
#include "pagb/learners/tree.hpp"

namespace pagb::learn {

struct GbtParams {
  std::size_t n_rounds = 500;
  double learning_rate = 0.05;
  std::size_t max_depth = 3;
  double subsample = 0.75;

  void validate() const {
    if (n_rounds == 0) throw ValidationError("gbt n_rounds must be > 0");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ValidationError("gbt learning_rate must be >= 0");
    if (max_depth == 0) throw ValidationError("gbt max_depth must be > 0");
    if (!(subsample > 0.0 && subsample <= 1.0)) throw ValidationError("gbt subsample must be in (0,1]");
  }
  bool operator==(const GbtParams&) const = default;
};

struct BoostedTrees {
  double f0 = 0.0;
  double learning_rate = 0.0;
  std::vector<RegressionTree> trees;

  double predict(std::span<const double> x) const noexcept {
    double f = f0;
    for (const auto& t : trees) f += learning_rate * t.predict(x);
    return f;
  }
  bool operator==(const BoostedTrees&) const = default;
};

/// Squared-error stochastic gradient boosting. Round m draws its row
/// subsample without replacement from Rng(derive_seed(seed, m)).
inline BoostedTrees train_gbt(const Dataset& ds, const GbtParams& hp, std::uint64_t seed) {
  ds.validate();
  hp.validate();
  const std::size_t n = ds.n();
  const PresortedColumns pre(ds.X);
  TreeParams tp;
  tp.max_depth = hp.max_depth;
  tp.min_leaf = 1.0;

  BoostedTrees m;
  m.f0 = stats::mean(ds.y);
  m.learning_rate = hp.learning_rate;
  m.trees.reserve(hp.n_rounds);
  std::vector<double> F(n, m.f0), resid(n), w(n);
  const auto m_sub = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(hp.subsample * static_cast<double>(n))));
  std::vector<std::size_t> idx(n);
  for (std::size_t r = 0; r < hp.n_rounds; ++r) {
    Rng rng(derive_seed(seed, r));
    if (m_sub < n) {
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      for (std::size_t k = 0; k < m_sub; ++k) std::swap(idx[k], idx[k + rng.index(n - k)]);
      std::fill(w.begin(), w.end(), 0.0);
      for (std::size_t k = 0; k < m_sub; ++k) w[idx[k]] = 1.0;
    } else {
      std::fill(w.begin(), w.end(), 1.0);
    }
    for (std::size_t i = 0; i < n; ++i) resid[i] = ds.y[i] - F[i];
    auto tree = fit_tree(ds.X, resid, w, pre, tp, rng);
    for (std::size_t i = 0; i < n; ++i) F[i] += hp.learning_rate * tree.predict(ds.X.row(i));
    m.trees.push_back(std::move(tree));
  }
  return m;
}

}  // namespace pagb::learn
