#pragma once

// Epsilon-insensitive support vector regression with an RBF kernel, solved
// in the dual by SMO with second-order working-set selection.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "pagb/common/parallel.hpp"
#include "pagb/common/stats.hpp"
#include "pagb/learners/dataset.hpp"

namespace pagb::learn {

struct SvrParams {
  double C = 10.0;
  std::optional<double> epsilon;  // default 0.1 * sd(y)
  std::optional<double> gamma;    // default 1 / p
  double tolerance = 1e-3;
  std::size_t max_iter = 0;       // 0 = max(100000, 100 * n)

  double resolved_epsilon(std::span<const double> y) const { return epsilon ? *epsilon : 0.1 * stats::sample_sd(y); }
  double resolved_gamma(std::size_t p) const { return gamma ? *gamma : 1.0 / static_cast<double>(p); }
  void validate() const {
    if (!(C > 0.0)) throw ValidationError("svr C must be > 0");
    if (epsilon && !(*epsilon >= 0.0)) throw ValidationError("svr epsilon must be >= 0");
    if (gamma && !(*gamma > 0.0)) throw ValidationError("svr gamma must be > 0");
    if (!(tolerance > 0.0)) throw ValidationError("svr tolerance must be > 0");
  }
  bool operator==(const SvrParams&) const = default;
};

struct SvrModel {
  std::vector<double> means, sds;  // feature standardization
  double gamma = 0.0;
  double epsilon = 0.0;
  double C = 0.0;
  Matrix support;                  // standardized support vectors
  std::vector<double> coef;        // alpha - alpha*
  double bias = 0.0;
  bool converged = true;
  std::size_t iterations = 0;
  double objective = 0.0;          // dual objective at the solution

  double predict(std::span<const double> x) const {
    std::vector<double> z(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) z[j] = (x[j] - means[j]) / sds[j];
    double f = bias;
    for (std::size_t s = 0; s < support.rows(); ++s) {
      const auto sv = support.row(s);
      double d2 = 0.0;
      for (std::size_t j = 0; j < z.size(); ++j) d2 += (sv[j] - z[j]) * (sv[j] - z[j]);
      f += coef[s] * std::exp(-gamma * d2);
    }
    return f;
  }
  bool operator==(const SvrModel&) const = default;
};

namespace detail {

struct SmoResult {
  std::vector<double> beta;  // alpha_i - alpha*_i
  double rho = 0.0;
  bool converged = true;
  std::size_t iterations = 0;
  double objective = 0.0;
};

/// Solves min 1/2 a'Qa + p'a, y'a = 0, 0 <= a <= C over 2l variables, where
/// variable t < l is alpha_t (y = +1) and t >= l is alpha*_{t-l} (y = -1).
inline SmoResult solve_svr_dual(const std::vector<double>& K, std::size_t l, std::span<const double> z, double C,
                                double eps, double tol, std::size_t max_iter) {
  const std::size_t L = 2 * l;
  std::vector<double> alpha(L, 0.0), G(L), pv(L);
  std::vector<signed char> yv(L);
  for (std::size_t i = 0; i < l; ++i) {
    pv[i] = eps - z[i];
    pv[i + l] = eps + z[i];
    yv[i] = 1;
    yv[i + l] = -1;
  }
  G = pv;
  auto kern = [&](std::size_t a, std::size_t b) { return K[(a % l) * l + (b % l)]; };
  auto upper = [&](std::size_t t) { return alpha[t] >= C; };
  auto lower = [&](std::size_t t) { return alpha[t] <= 0.0; };
  constexpr double tau = 1e-12;
  constexpr double inf = std::numeric_limits<double>::infinity();

  SmoResult res;
  std::size_t iter = 0;
  for (;; ++iter) {
    double gmax = -inf, gmax2 = -inf;
    std::ptrdiff_t ii = -1, jj = -1;
    for (std::size_t t = 0; t < L; ++t) {
      if (yv[t] == 1) {
        if (!upper(t) && -G[t] >= gmax) {
          gmax = -G[t];
          ii = static_cast<std::ptrdiff_t>(t);
        }
      } else if (!lower(t) && G[t] >= gmax) {
        gmax = G[t];
        ii = static_cast<std::ptrdiff_t>(t);
      }
    }
    double obj_min = inf;
    if (ii >= 0) {
      const auto i = static_cast<std::size_t>(ii);
      const double kii = kern(i, i);
      for (std::size_t t = 0; t < L; ++t) {
        if (yv[t] == 1) {
          if (lower(t)) continue;
          const double gd = gmax + G[t];
          gmax2 = std::max(gmax2, G[t]);
          if (gd > 0.0) {
            double a = kii + kern(t, t) - 2.0 * kern(i, t);
            if (a <= 0.0) a = tau;
            const double o = -(gd * gd) / a;
            if (o <= obj_min) {
              obj_min = o;
              jj = static_cast<std::ptrdiff_t>(t);
            }
          }
        } else {
          if (upper(t)) continue;
          const double gd = gmax - G[t];
          gmax2 = std::max(gmax2, -G[t]);
          if (gd > 0.0) {
            double a = kii + kern(t, t) - 2.0 * kern(i, t);
            if (a <= 0.0) a = tau;
            const double o = -(gd * gd) / a;
            if (o <= obj_min) {
              obj_min = o;
              jj = static_cast<std::ptrdiff_t>(t);
            }
          }
        }
      }
    }
    if (ii < 0 || jj < 0 || gmax + gmax2 < tol) break;
    if (iter >= max_iter) {
      res.converged = false;
      break;
    }

    const auto i = static_cast<std::size_t>(ii), j = static_cast<std::size_t>(jj);
    const double Qij = yv[i] * yv[j] * kern(i, j);
    const double old_ai = alpha[i], old_aj = alpha[j];
    if (yv[i] != yv[j]) {
      double quad = kern(i, i) + kern(j, j) + 2.0 * Qij;
      if (quad <= 0.0) quad = tau;
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = C - diff;
        }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      double quad = kern(i, i) + kern(j, j) - 2.0 * Qij;
      if (quad <= 0.0) quad = tau;
      const double delta = (G[i] - G[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = sum - C;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) {
          alpha[j] = C;
          alpha[i] = sum - C;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }
    const double dai = alpha[i] - old_ai, daj = alpha[j] - old_aj;
    for (std::size_t t = 0; t < L; ++t)
      G[t] += yv[t] * (yv[i] * kern(t, i) * dai + yv[j] * kern(t, j) * daj);
  }
  res.iterations = iter;

  double ub = inf, lb = -inf, sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < L; ++t) {
    const double yg = yv[t] * G[t];
    if (upper(t)) {
      if (yv[t] == -1)
        ub = std::min(ub, yg);
      else
        lb = std::max(lb, yg);
    } else if (lower(t)) {
      if (yv[t] == 1)
        ub = std::min(ub, yg);
      else
        lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  res.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;

  // 1/2 a'Qa + p'a = 1/2 sum a_t (G_t + p_t)
  double obj = 0.0;
  for (std::size_t t = 0; t < L; ++t) obj += alpha[t] * (G[t] + pv[t]);
  res.objective = obj / 2.0;
  res.beta.resize(l);
  for (std::size_t i = 0; i < l; ++i) res.beta[i] = alpha[i] - alpha[i + l];
  return res;
}

}  // namespace detail

inline SvrModel train_svr(const Dataset& ds, const SvrParams& hp) {
  ds.validate();
  hp.validate();
  const std::size_t n = ds.n(), p = ds.p();
  SvrModel m;
  m.means.resize(p);
  m.sds.resize(p);
  Matrix Z(n, p);
  for (std::size_t j = 0; j < p; ++j) {
    const auto col = ds.X.column(j);
    m.means[j] = stats::mean(col);
    const double sd = stats::sample_sd(col);
    m.sds[j] = sd > 0.0 ? sd : 1.0;
    for (std::size_t i = 0; i < n; ++i) Z(i, j) = (col[i] - m.means[j]) / m.sds[j];
  }
  m.gamma = hp.resolved_gamma(p);
  m.epsilon = hp.resolved_epsilon(ds.y);
  m.C = hp.C;

  std::vector<double> K(n * n);
  for (std::size_t a = 0; a < n; ++a) {
    K[a * n + a] = 1.0;
    for (std::size_t b = a + 1; b < n; ++b) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < p; ++j) d2 += (Z(a, j) - Z(b, j)) * (Z(a, j) - Z(b, j));
      K[a * n + b] = K[b * n + a] = std::exp(-m.gamma * d2);
    }
  }
  const std::size_t cap = hp.max_iter ? hp.max_iter : std::max<std::size_t>(100000, 100 * n);
  const auto sol = detail::solve_svr_dual(K, n, ds.y, hp.C, m.epsilon, hp.tolerance, cap);
  m.bias = -sol.rho;
  m.converged = sol.converged;
  m.iterations = sol.iterations;
  m.objective = sol.objective;
  for (std::size_t i = 0; i < n; ++i) {
    if (sol.beta[i] == 0.0) continue;
    m.support.push_row(Z.row(i));
    m.coef.push_back(sol.beta[i]);
  }
  if (m.support.rows() == 0) m.support = Matrix(0, p);
  return m;
}

}  // namespace pagb::learn
