#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pagb/common/parallel.hpp"
#include "pagb/common/random.hpp"
#include "pagb/learners/dataset.hpp"
#include "pagb/learners/tree.hpp"

namespace pagb::learn {

struct RfParams {
  std::size_t n_trees = 500;
  std::size_t mtry = 0;  // 0 = ceil(p / 3)
  std::size_t min_leaf = 5;

  std::size_t resolved_mtry(std::size_t p) const noexcept {
    return mtry == 0 ? std::max<std::size_t>(1, (p + 2) / 3) : mtry;
  }
  void validate(std::size_t p) const {
    if (n_trees == 0) throw ValidationError("rf n_trees must be > 0");
    if (min_leaf == 0) throw ValidationError("rf min_leaf must be > 0");
    if (resolved_mtry(p) > p) throw ValidationError("rf mtry must be <= number of predictors");
  }
  bool operator==(const RfParams&) const = default;
};

struct RandomForest {
  std::vector<RegressionTree> trees;

  double predict(std::span<const double> x) const noexcept {
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(x);
    return s / static_cast<double>(trees.size());
  }
  bool operator==(const RandomForest&) const = default;
};

/// Bootstrap counts for one tree: n draws of rng.index(n).
inline std::vector<double> bootstrap_weights(std::size_t n, Rng& rng) {
  std::vector<double> w(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) w[rng.index(n)] += 1.0;
  return w;
}

/// Trains a forest; tree t uses Rng(derive_seed(seed, t)) for its bootstrap
/// and then its feature draws. When `oob` is given it receives out-of-bag
/// predictions (NaN for rows that were in every bootstrap).
inline RandomForest train_rf(const Dataset& ds, const RfParams& hp, std::uint64_t seed,
                             std::vector<double>* oob = nullptr) {
  ds.validate();
  hp.validate(ds.p());
  const std::size_t n = ds.n();
  const PresortedColumns pre(ds.X);
  TreeParams tp;
  tp.min_leaf = static_cast<double>(hp.min_leaf);
  tp.mtry = hp.resolved_mtry(ds.p());

  RandomForest rf;
  rf.trees.resize(hp.n_trees);
  std::vector<std::vector<char>> in_bag(oob ? hp.n_trees : 0);
  parallel_for(hp.n_trees, [&](std::size_t t) {
    Rng rng(derive_seed(seed, t));
    const auto w = bootstrap_weights(n, rng);
    rf.trees[t] = fit_tree(ds.X, ds.y, w, pre, tp, rng);
    if (oob) {
      in_bag[t].resize(n);
      for (std::size_t i = 0; i < n; ++i) in_bag[t][i] = w[i] > 0.0;
    }
  });
  if (oob) {
    oob->assign(n, std::nan(""));
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      std::size_t k = 0;
      for (std::size_t t = 0; t < hp.n_trees; ++t)
        if (!in_bag[t][i]) {
          s += rf.trees[t].predict(ds.X.row(i));
          ++k;
        }
      if (k > 0) (*oob)[i] = s / static_cast<double>(k);
    }
  }
  return rf;
}

}  // namespace pagb::learn
