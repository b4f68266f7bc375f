#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "pagb/common/error.hpp"
#include "pagb/common/matrix.hpp"

namespace pagb::learn {

struct Dataset {
  Matrix X;
  std::vector<double> y;
  std::vector<std::string> feature_names;

  std::size_t n() const noexcept { return X.rows(); }
  std::size_t p() const noexcept { return X.cols(); }

  void validate() const {
    if (X.rows() != y.size()) throw ValidationError("dataset X and y row counts differ");
    if (y.size() < 2) throw ValidationError("dataset needs at least 2 rows");
    if (X.cols() < 1) throw ValidationError("dataset needs at least 1 predictor");
    if (!feature_names.empty() && feature_names.size() != X.cols())
      throw ValidationError("dataset feature name count differs from column count");
    for (double v : X.data())
      if (!std::isfinite(v)) throw ValidationError("dataset contains a missing or non-finite predictor value");
    for (double v : y)
      if (!std::isfinite(v)) throw ValidationError("dataset contains a non-finite response");
  }

  Dataset subset(std::span<const std::size_t> rows) const {
    Dataset d;
    d.X = X.select_rows(rows);
    d.y.reserve(rows.size());
    for (auto r : rows) d.y.push_back(y[r]);
    d.feature_names = feature_names;
    return d;
  }

  Dataset select_features(std::span<const std::size_t> cols) const {
    Dataset d;
    d.X = X.select_cols(cols);
    d.y = y;
    for (auto c : cols)
      if (c < feature_names.size()) d.feature_names.push_back(feature_names[c]);
    return d;
  }

  /// All rows except `row`.
  Dataset without_row(std::size_t row) const {
    std::vector<std::size_t> keep;
    keep.reserve(n() - 1);
    for (std::size_t i = 0; i < n(); ++i)
      if (i != row) keep.push_back(i);
    return subset(keep);
  }
};

inline double rmse(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size() || y.empty()) throw ValidationError("rmse needs equal non-empty vectors");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

}  // namespace pagb::learn
