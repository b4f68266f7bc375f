#pragma once

// k-fold grid search over per-learner hyperparameter grids.

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "pagb/common/parallel.hpp"
#include "pagb/common/random.hpp"
#include "pagb/learners/model.hpp"

namespace pagb::learn {

struct HyperGrid {
  std::vector<RfParams> rf;
  std::vector<GbtParams> gbt;
  std::vector<SvrParams> svr;
};

/// Cartesian products in nested declaration order (last list varies fastest).
inline std::vector<RfParams> rf_grid(const std::vector<std::size_t>& n_trees, const std::vector<std::size_t>& mtry,
                                     const std::vector<std::size_t>& min_leaf) {
  std::vector<RfParams> g;
  for (auto a : n_trees)
    for (auto b : mtry)
      for (auto c : min_leaf) g.push_back({a, b, c});
  return g;
}

inline std::vector<GbtParams> gbt_grid(const std::vector<std::size_t>& n_rounds, const std::vector<double>& rate,
                                       const std::vector<std::size_t>& depth, const std::vector<double>& subsample) {
  std::vector<GbtParams> g;
  for (auto a : n_rounds)
    for (auto b : rate)
      for (auto c : depth)
        for (auto d : subsample) g.push_back({a, b, c, d});
  return g;
}

/// Empty epsilon/gamma lists mean "default only".
inline std::vector<SvrParams> svr_grid(const std::vector<double>& C, const std::vector<double>& epsilon,
                                       const std::vector<double>& gamma) {
  std::vector<std::optional<double>> eps{std::nullopt}, gam{std::nullopt};
  if (!epsilon.empty()) eps.assign(epsilon.begin(), epsilon.end());
  if (!gamma.empty()) gam.assign(gamma.begin(), gamma.end());
  std::vector<SvrParams> g;
  for (auto c : C)
    for (const auto& e : eps)
      for (const auto& y : gam) {
        SvrParams s;
        s.C = c;
        s.epsilon = e;
        s.gamma = y;
        g.push_back(s);
      }
  return g;
}

/// Fold id per row: a seeded shuffle dealt round-robin, so fold sizes
/// differ by at most one.
inline std::vector<std::size_t> assign_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2 || n < k) throw ValidationError("k-fold CV needs 2 <= k <= n");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0xf01d));
  shuffle(std::span<std::size_t>(order), rng);
  std::vector<std::size_t> fold(n);
  for (std::size_t pos = 0; pos < n; ++pos) fold[order[pos]] = pos % k;
  return fold;
}

struct CvResult {
  std::size_t best = 0;
  std::vector<double> scores;  // mean out-of-fold RMSE per grid point
};

struct GridSearchResult {
  Hyperparams best;
  CvResult rf, gbt, svr;
};

/// Mean out-of-fold RMSE for each grid point of one learner. Every grid
/// point sees the same folds and per-fold seeds.
template <class Params>
CvResult cross_validate(ModelKind kind, const Dataset& ds, const std::vector<Params>& grid, std::size_t k,
                        std::uint64_t seed) {
  if (grid.empty()) throw ValidationError(std::string("empty hyperparameter grid for ") + to_string(kind));
  ds.validate();
  const auto folds = assign_folds(ds.n(), k, seed);
  std::vector<double> fold_rmse(grid.size() * k);
  parallel_for(grid.size() * k, [&](std::size_t job) {
    const std::size_t g = job / k, f = job % k;
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < ds.n(); ++i) (folds[i] == f ? te : tr).push_back(i);
    Hyperparams hp;
    if constexpr (std::is_same_v<Params, RfParams>) hp.rf = grid[g];
    if constexpr (std::is_same_v<Params, GbtParams>) hp.gbt = grid[g];
    if constexpr (std::is_same_v<Params, SvrParams>) hp.svr = grid[g];
    const auto m = train_model(kind, ds.subset(tr), hp, derive_seed(seed, static_cast<std::uint64_t>(kind), f));
    const auto test = ds.subset(te);
    fold_rmse[job] = rmse(test.y, m.predict(test.X));
  });
  CvResult res;
  res.scores.resize(grid.size());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double s = 0.0;
    for (std::size_t f = 0; f < k; ++f) s += fold_rmse[g * k + f];
    res.scores[g] = s / static_cast<double>(k);
    if (res.scores[g] < best) {
      best = res.scores[g];
      res.best = g;
    }
  }
  return res;
}

inline GridSearchResult grid_search_cv(const Dataset& ds, const HyperGrid& grid, std::size_t k, std::uint64_t seed) {
  GridSearchResult r;
  r.rf = cross_validate(ModelKind::rf, ds, grid.rf, k, seed);
  r.gbt = cross_validate(ModelKind::gbt, ds, grid.gbt, k, seed);
  r.svr = cross_validate(ModelKind::svr, ds, grid.svr, k, seed);
  r.best.rf = grid.rf[r.rf.best];
  r.best.gbt = grid.gbt[r.gbt.best];
  r.best.svr = grid.svr[r.svr.best];
  return r;
}

}  // namespace pagb::learn
