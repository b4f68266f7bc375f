#pragma once

// Area of applicability: predictor clustering, cluster-permutation
// importance, dissimilarity index, threshold and mask.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pagb/common/parallel.hpp"
#include "pagb/common/random.hpp"
#include "pagb/common/stats.hpp"
#include "pagb/common/text.hpp"
#include "pagb/ensemble.hpp"
#include "pagb/geodata.hpp"
#include "pagb/predictors.hpp"

namespace pagb::aoa {

using learn::Dataset;

inline constexpr std::size_t kClusterCount = 7;

struct Clustering {
  std::vector<std::size_t> assignment;  // cluster id per predictor, ids ordered by first member
  std::size_t n_clusters = 0;
  bool degenerate = false;              // fewer predictors than clusters

  std::vector<std::size_t> members(std::size_t c) const {
    std::vector<std::size_t> m;
    for (std::size_t j = 0; j < assignment.size(); ++j)
      if (assignment[j] == c) m.push_back(j);
    return m;
  }
};

/// Euclidean distances between the Spearman correlation profiles of the
/// columns of X.
inline std::vector<double> spearman_profile_distances(const Matrix& X) {
  const std::size_t p = X.cols();
  std::vector<std::vector<double>> ranks(p);
  for (std::size_t j = 0; j < p; ++j) ranks[j] = stats::average_ranks(X.column(j));
  std::vector<double> R(p * p);
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = a; b < p; ++b) R[a * p + b] = R[b * p + a] = stats::pearson(ranks[a], ranks[b]);
  std::vector<double> D(p * p, 0.0);
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = a + 1; b < p; ++b) {
      double s = 0.0;
      for (std::size_t k = 0; k < p; ++k) s += (R[a * p + k] - R[b * p + k]) * (R[a * p + k] - R[b * p + k]);
      D[a * p + b] = D[b * p + a] = std::sqrt(s);
    }
  return D;
}

/// Average-linkage agglomerative clustering cut at `k` clusters. Merge ties
/// go to the pair with the smallest first-member indices.
inline Clustering cluster_predictors(const Matrix& X, std::size_t k = kClusterCount) {
  const std::size_t p = X.cols();
  if (p == 0) throw ValidationError("clustering needs at least one predictor");
  Clustering out;
  out.assignment.resize(p);
  if (p < k) {
    std::iota(out.assignment.begin(), out.assignment.end(), std::size_t{0});
    out.n_clusters = p;
    out.degenerate = true;
    return out;
  }
  const auto D = spearman_profile_distances(X);
  std::vector<std::vector<std::size_t>> clusters(p);
  for (std::size_t j = 0; j < p; ++j) clusters[j] = {j};
  // Linkage sums between live clusters; average = sum / (|A||B|).
  std::vector<double> link(D);
  std::vector<char> live(p, 1);
  std::size_t n_live = p;
  while (n_live > k) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < p; ++a) {
      if (!live[a]) continue;
      for (std::size_t b = a + 1; b < p; ++b) {
        if (!live[b]) continue;
        const double avg = link[a * p + b] / static_cast<double>(clusters[a].size() * clusters[b].size());
        if (avg < best) {
          best = avg;
          ba = a;
          bb = b;
        }
      }
    }
    for (std::size_t c = 0; c < p; ++c) {
      if (!live[c] || c == ba || c == bb) continue;
      link[ba * p + c] = link[c * p + ba] = link[ba * p + c] + link[bb * p + c];
    }
    clusters[ba].insert(clusters[ba].end(), clusters[bb].begin(), clusters[bb].end());
    clusters[bb].clear();
    live[bb] = 0;
    --n_live;
  }
  // Slot a is always the smallest member index of its cluster, so scanning
  // live slots in order labels clusters by first member.
  std::size_t id = 0;
  for (std::size_t a = 0; a < p; ++a) {
    if (!live[a]) continue;
    for (auto j : clusters[a]) out.assignment[j] = id;
    ++id;
  }
  out.n_clusters = id;
  return out;
}

// ---------------------------------------------------------------------------
// Importance

struct ImportanceResult {
  std::vector<double> weights;                       // sums to 1
  std::vector<double> deltas;                        // clamped RMSE deltas
  std::vector<double> rmse;                          // per-predictor shuffled-design RMSE
  std::vector<std::vector<std::size_t>> designs;     // predictor first, then representatives
  double rmse_full = 0.0;
};

struct ImportanceOptions {
  learn::Hyperparams hyperparams;  // defaults, per the importance protocol
  ens::LooOptions loo;
};

/// RMSE of the meta-model fitted on the LOO predictions of a dataset.
inline double stacked_loo_rmse(const Dataset& ds, const learn::Hyperparams& hp, std::uint64_t seed,
                               const ens::LooOptions& loo) {
  const auto m = ens::loo_component_predictions(ds, hp, seed, loo);
  const auto meta = ens::fit_meta(m, ds.y);
  return learn::rmse(ds.y, ens::meta_fitted(meta, m));
}

/// One representative per other cluster, drawn from
/// Rng(derive_seed(seed, predictor)).
inline std::vector<std::size_t> importance_design(const Clustering& cl, std::size_t predictor, std::uint64_t seed) {
  std::vector<std::size_t> design{predictor};
  Rng rng(derive_seed(seed, predictor, 0xde5));
  for (std::size_t c = 0; c < cl.n_clusters; ++c) {
    if (c == cl.assignment[predictor]) continue;
    const auto m = cl.members(c);
    design.push_back(m[rng.index(m.size())]);
  }
  return design;
}

/// Cluster-permutation importance. The reference RMSE comes from the
/// ensemble fit on every predictor.
inline ImportanceResult permutation_importance(const Dataset& ds, const Clustering& cl, std::uint64_t seed,
                                               const ImportanceOptions& opt = {}) {
  ds.validate();
  const std::size_t p = ds.p();
  if (cl.assignment.size() != p) throw ValidationError("clustering does not match the predictor count");
  ImportanceResult res;
  res.rmse_full = stacked_loo_rmse(ds, opt.hyperparams, derive_seed(seed, 0xf0f0), opt.loo);
  res.rmse.resize(p);
  res.designs.resize(p);
  for (std::size_t j = 0; j < p; ++j) res.designs[j] = importance_design(cl, j, seed);
  parallel_for(p, [&](std::size_t j) {
    auto d = ds.select_features(res.designs[j]);
    std::vector<double> col = d.X.column(0);
    Rng rng(derive_seed(seed, j, 0x5f1));
    shuffle(std::span<double>(col), rng);
    for (std::size_t i = 0; i < d.n(); ++i) d.X(i, 0) = col[i];
    res.rmse[j] = stacked_loo_rmse(d, opt.hyperparams, derive_seed(seed, j), opt.loo);
  });
  res.deltas.resize(p);
  double total = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    res.deltas[j] = std::max(0.0, res.rmse[j] - res.rmse_full);
    total += res.deltas[j];
  }
  res.weights.assign(p, 1.0 / static_cast<double>(p));
  if (total > 0.0)
    for (std::size_t j = 0; j < p; ++j) res.weights[j] = res.deltas[j] / total;
  return res;
}

// ---------------------------------------------------------------------------
// Dissimilarity index

enum class TrainDistance { mean_pairwise, mean_nearest_neighbor };

struct DIStats {
  std::vector<double> means, sds;
  std::vector<double> weights;    // renormalized over retained predictors
  std::vector<char> retained;     // 0 for zero-variance predictors
  Matrix scaled_train;            // standardized, weighted training rows
  double mean_train_distance = 0.0;
  double threshold = 0.0;

  std::size_t p() const noexcept { return means.size(); }

  void scale(std::span<const double> x, std::span<double> out) const noexcept {
    for (std::size_t j = 0; j < means.size(); ++j)
      out[j] = retained[j] ? (x[j] - means[j]) / sds[j] * weights[j] : 0.0;
  }
};

inline DIStats fit_di_stats(const Matrix& train, std::span<const double> weights,
                            TrainDistance mode = TrainDistance::mean_pairwise) {
  const std::size_t n = train.rows(), p = train.cols();
  if (n < 2) throw ValidationError("DI needs at least 2 training rows");
  if (weights.size() != p) throw ValidationError("one importance weight per predictor required");
  DIStats s;
  s.means.resize(p);
  s.sds.resize(p);
  s.retained.resize(p);
  s.weights.assign(p, 0.0);
  double kept = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    const auto col = train.column(j);
    s.means[j] = stats::mean(col);
    s.sds[j] = stats::sample_sd(col);
    s.retained[j] = s.sds[j] > 0.0;
    if (s.retained[j]) kept += weights[j];
  }
  std::size_t n_kept = 0;
  for (std::size_t j = 0; j < p; ++j) n_kept += s.retained[j];
  for (std::size_t j = 0; j < p; ++j) {
    if (!s.retained[j]) continue;
    s.weights[j] = kept > 0.0 ? weights[j] / kept : 1.0 / static_cast<double>(n_kept);
  }
  s.scaled_train = Matrix(n, p);
  for (std::size_t i = 0; i < n; ++i) s.scale(train.row(i), s.scaled_train.row(i));

  std::vector<double> acc(n, 0.0);
  std::vector<double> nn(n, std::numeric_limits<double>::infinity());
  parallel_for(n, [&](std::size_t i) {
    const auto a = s.scaled_train.row(i);
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      const auto b = s.scaled_train.row(k);
      double d2 = 0.0;
      for (std::size_t j = 0; j < p; ++j) d2 += (a[j] - b[j]) * (a[j] - b[j]);
      const double d = std::sqrt(d2);
      if (k > i) acc[i] += d;
      nn[i] = std::min(nn[i], d);
    }
  });
  if (mode == TrainDistance::mean_pairwise) {
    double total = 0.0;
    for (double v : acc) total += v;
    s.mean_train_distance = total / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
  } else {
    s.mean_train_distance = stats::mean(nn);
  }
  return s;
}

/// Minimum weighted distance to the training rows over the mean training
/// distance.
inline double dissimilarity_index(std::span<const double> x, const DIStats& s) {
  std::vector<double> q(s.p());
  s.scale(x, q);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.scaled_train.rows(); ++i) {
    const auto t = s.scaled_train.row(i);
    double d2 = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) d2 += (q[j] - t[j]) * (q[j] - t[j]);
    best = std::min(best, d2);
  }
  const double d = std::sqrt(best);
  if (s.mean_train_distance > 0.0) return d / s.mean_train_distance;
  return d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

/// Upper quantile plus `iqr_factor` times the inter-quantile range
/// (Q75 + 1.5 * IQR by default).
inline double aoa_threshold(std::vector<double> test_dis, double q_low = 0.25, double q_high = 0.75,
                            double iqr_factor = 1.5) {
  if (test_dis.size() < 4) throw ValidationError("AOA threshold needs at least 4 test DIs");
  if (!(q_low >= 0.0 && q_low <= q_high && q_high <= 1.0) || !(iqr_factor >= 0.0))
    throw ValidationError("invalid AOA threshold quantiles");
  std::sort(test_dis.begin(), test_dis.end());
  const double lo = stats::quantile_sorted(test_dis, q_low), hi = stats::quantile_sorted(test_dis, q_high);
  return hi + iqr_factor * (hi - lo);
}

struct AoaRasters {
  geo::Raster di;    // nodata where any predictor is nodata
  geo::Raster mask;  // 1 inside, 0 outside (including nodata predictors)
};

inline AoaRasters aoa_mask(const pred::RasterStack& stack, const DIStats& s) {
  if (stack.size() != s.p()) throw ValidationError("predictor stack band count differs from the DI statistics");
  AoaRasters out{geo::Raster::nodata_filled(stack.spec, "DI"), geo::Raster(stack.spec, 0.0, "AOA")};
  parallel_for(stack.spec.size(), [&](std::size_t i) {
    std::vector<double> x(stack.size());
    if (!stack.pixel(i, x)) return;
    const double di = dissimilarity_index(x, s);
    out.di.values[i] = di;
    out.mask.values[i] = di <= s.threshold ? 1.0 : 0.0;
  });
  return out;
}

/// Share of pixels with complete predictors that fall inside the AOA.
inline double inside_fraction(const AoaRasters& a) {
  std::size_t valid = 0, inside = 0;
  for (std::size_t i = 0; i < a.di.values.size(); ++i) {
    if (a.di.is_nodata(i)) continue;
    ++valid;
    inside += a.mask.values[i] == 1.0;
  }
  return valid ? static_cast<double>(inside) / static_cast<double>(valid) : 0.0;
}

inline std::string importance_csv(std::span<const std::string> names, const ImportanceResult& r, const Clustering& cl,
                                  double threshold) {
  text::CsvWriter w({"predictor", "cluster", "rmse", "delta", "weight", "design"});
  for (std::size_t j = 0; j < names.size(); ++j) {
    std::string design;
    for (auto k : r.designs[j]) design += (design.empty() ? "" : ";") + names[k];
    w.row({names[j], std::to_string(cl.assignment[j]), text::format_double(r.rmse[j]), text::format_double(r.deltas[j]),
           text::format_double(r.weights[j]), design});
  }
  w.row({"FULL_MODEL", "", text::format_double(r.rmse_full), "", "", ""});
  w.row({"THRESHOLD", "", "", "", text::format_double(threshold), ""});
  return w.str();
}

}  // namespace pagb::aoa
