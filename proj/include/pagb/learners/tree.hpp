#pragma once

// Weighted CART regression trees over presorted feature columns.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "pagb/common/error.hpp"
#include "pagb/common/matrix.hpp"
#include "pagb/common/random.hpp"

namespace pagb::learn {

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // x[feature] <= threshold goes left
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  double value = 0.0;

  bool operator==(const TreeNode&) const = default;
};

class RegressionTree {
public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  double predict(std::span<const double> x) const noexcept {
    std::uint32_t k = 0;
    while (nodes_[k].feature >= 0) {
      const auto& n = nodes_[k];
      k = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes_[k].value;
  }

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  std::size_t leaf_count() const noexcept {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](auto& n) { return n.feature < 0; }));
  }

  bool operator==(const RegressionTree&) const = default;

private:
  std::vector<TreeNode> nodes_;
};

/// Row indices of every column sorted by value, ties by row index.
struct PresortedColumns {
  std::vector<std::vector<std::uint32_t>> order;

  explicit PresortedColumns(const Matrix& X) : order(X.cols()) {
    for (std::size_t f = 0; f < X.cols(); ++f) {
      auto& o = order[f];
      o.resize(X.rows());
      std::iota(o.begin(), o.end(), 0u);
      std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return X(a, f) < X(b, f); });
    }
  }
};

struct TreeParams {
  std::size_t max_depth = 0;  // 0 = unlimited
  double min_leaf = 1.0;      // minimum summed row weight per leaf
  std::size_t mtry = 0;       // features tried per split; 0 = all
};

namespace detail {

class TreeBuilder {
public:
  TreeBuilder(const Matrix& X, std::span<const double> y, std::span<const double> w, const PresortedColumns& pre,
              const TreeParams& tp, Rng& rng)
      : X_(X), y_(y), w_(w), tp_(tp), rng_(rng), p_(X.cols()), go_left_(X.rows(), 0) {
    for (auto r : pre.order[0])
      if (w[r] > 0.0) ++m_;
    lists_.resize(p_ * m_);
    for (std::size_t f = 0; f < p_; ++f) {
      std::size_t k = 0;
      for (auto r : pre.order[f])
        if (w[r] > 0.0) lists_[f * m_ + k++] = r;
    }
    tmp_.resize(m_);
    pool_.resize(p_);
    std::iota(pool_.begin(), pool_.end(), std::size_t{0});
    mtry_ = tp.mtry == 0 ? p_ : std::min(tp.mtry, p_);
  }

  RegressionTree build() {
    if (m_ == 0) throw ValidationError("tree fit needs at least one weighted row");
    grow(0, m_, 0);
    return RegressionTree(std::move(nodes_));
  }

private:
  std::uint32_t* list(std::size_t f) noexcept { return lists_.data() + f * m_; }

  std::uint32_t grow(std::size_t b, std::size_t e, std::size_t depth) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();

    double W = 0.0, S = 0.0, S2 = 0.0, mean = 0.0;
    double ymin = y_[list(0)[b]], ymax = ymin;
    for (std::size_t k = b; k < e; ++k) {
      const auto r = list(0)[k];
      const double wr = w_[r], yr = y_[r];
      W += wr;
      S += wr * yr;
      S2 += wr * yr * yr;
      mean += wr * (yr - mean) / W;
      ymin = std::min(ymin, yr);
      ymax = std::max(ymax, yr);
    }
    nodes_[id].value = mean;

    const bool depth_ok = tp_.max_depth == 0 || depth < tp_.max_depth;
    if (!depth_ok || W < 2.0 * tp_.min_leaf || ymin == ymax) return id;

    // Sample mtry candidate features without replacement, then scan them in
    // ascending index order so ties resolve to the lowest feature.
    for (std::size_t k = 0; k < mtry_ && mtry_ < p_; ++k) std::swap(pool_[k], pool_[k + rng_.index(p_ - k)]);
    cand_.assign(pool_.begin(), pool_.begin() + static_cast<std::ptrdiff_t>(mtry_));
    std::sort(cand_.begin(), cand_.end());

    double best_gain = -1.0, best_thr = 0.0;
    std::size_t best_f = p_, best_k = 0;
    for (auto f : cand_) {
      const auto* lf = list(f);
      double WL = 0.0, SL = 0.0;
      for (std::size_t k = b; k + 1 < e; ++k) {
        const auto r = lf[k];
        WL += w_[r];
        SL += w_[r] * y_[r];
        const double v = X_(r, f), vn = X_(lf[k + 1], f);
        if (v == vn) continue;
        const double WR = W - WL;
        if (WL < tp_.min_leaf) continue;
        if (WR < tp_.min_leaf) break;
        const double SR = S - SL;
        const double gain = SL * SL / WL + SR * SR / WR;
        if (gain > best_gain) {
          best_gain = gain;
          best_f = f;
          best_k = k;
          double thr = v + (vn - v) / 2.0;
          if (!(thr < vn)) thr = v;
          best_thr = thr;
        }
      }
    }
    const double parent = S * S / W;
    if (best_f == p_ || !(best_gain - parent > 1e-12 * std::max(S2, 1e-300))) return id;

    const auto* lb = list(best_f);
    for (std::size_t k = b; k < e; ++k) go_left_[lb[k]] = k <= best_k;
    const std::size_t mid = b + (best_k - b + 1);
    for (std::size_t f = 0; f < p_; ++f) {
      auto* lf = list(f);
      std::size_t nl = b, nr = 0;
      for (std::size_t k = b; k < e; ++k) {
        const auto r = lf[k];
        if (go_left_[r])
          lf[nl++] = r;
        else
          tmp_[nr++] = r;
      }
      std::copy(tmp_.begin(), tmp_.begin() + static_cast<std::ptrdiff_t>(nr), lf + nl);
    }

    nodes_[id].feature = static_cast<std::int32_t>(best_f);
    nodes_[id].threshold = best_thr;
    const auto l = grow(b, mid, depth + 1);
    const auto r = grow(mid, e, depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  const Matrix& X_;
  std::span<const double> y_;
  std::span<const double> w_;
  const TreeParams& tp_;
  Rng& rng_;
  std::size_t p_;
  std::size_t m_ = 0;
  std::size_t mtry_ = 0;
  std::vector<std::uint32_t> lists_;
  std::vector<std::uint32_t> tmp_;
  std::vector<char> go_left_;
  std::vector<std::size_t> pool_;
  std::vector<std::size_t> cand_;
  std::vector<TreeNode> nodes_;
};

}  // namespace detail

/// Fits one tree; rows with zero weight are ignored. `rng` drives feature
/// subsampling only.
inline RegressionTree fit_tree(const Matrix& X, std::span<const double> y, std::span<const double> w,
                               const PresortedColumns& pre, const TreeParams& tp, Rng& rng) {
  if (y.size() != X.rows() || w.size() != X.rows()) throw ValidationError("tree fit: size mismatch");
  return detail::TreeBuilder(X, y, w, pre, tp, rng).build();
}

}  // namespace pagb::learn
