#pragma once

// Trained-model wrapper and the PAGB binary container.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pagb/common/binary.hpp"
#include "pagb/common/error.hpp"
#include "pagb/learners/dataset.hpp"
#include "pagb/learners/forest.hpp"
#include "pagb/learners/gbt.hpp"
#include "pagb/learners/svr.hpp"

namespace pagb::learn {

enum class ModelKind : std::uint8_t { rf = 1, gbt = 2, svr = 3, ensemble = 4 };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::rf: return "rf";
    case ModelKind::gbt: return "gbt";
    case ModelKind::svr: return "svr";
    case ModelKind::ensemble: return "ensemble";
  }
  return "?";
}

struct Hyperparams {
  RfParams rf;
  GbtParams gbt;
  SvrParams svr;
  bool operator==(const Hyperparams&) const = default;
};

struct TrainedModel {
  ModelKind kind = ModelKind::rf;
  std::uint64_t training_seed = 0;
  std::size_t n_features = 0;
  std::variant<RandomForest, BoostedTrees, SvrModel> model;

  double predict(std::span<const double> x) const {
    return std::visit([&](const auto& m) { return m.predict(x); }, model);
  }
  std::vector<double> predict(const Matrix& X) const {
    if (X.cols() != n_features) throw ValidationError("prediction matrix has the wrong number of predictors");
    std::vector<double> out(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) out[i] = predict(X.row(i));
    return out;
  }
  bool operator==(const TrainedModel&) const = default;
};

inline TrainedModel train_model(ModelKind kind, const Dataset& ds, const Hyperparams& hp, std::uint64_t seed) {
  TrainedModel m;
  m.kind = kind;
  m.training_seed = seed;
  m.n_features = ds.p();
  switch (kind) {
    case ModelKind::rf: m.model = train_rf(ds, hp.rf, seed); break;
    case ModelKind::gbt: m.model = train_gbt(ds, hp.gbt, seed); break;
    case ModelKind::svr: m.model = train_svr(ds, hp.svr); break;
    default: throw ValidationError("not a base learner kind");
  }
  return m;
}

// ---------------------------------------------------------------------------
// Container

inline constexpr std::string_view kMagic = "PAGB";
inline constexpr std::uint32_t kFormatVersion = 1;

namespace detail {

inline void write_tree(bin::Writer& w, const RegressionTree& t) {
  w.u64(t.nodes().size());
  for (const auto& n : t.nodes()) {
    w.i32(n.feature);
    w.f64(n.threshold);
    w.u32(n.left);
    w.u32(n.right);
    w.f64(n.value);
  }
}

inline RegressionTree read_tree(bin::Reader& r, std::size_t p) {
  const auto count = r.count(28);
  if (count == 0) throw ValidationError("model container holds an empty tree");
  std::vector<TreeNode> nodes(count);
  for (auto& n : nodes) {
    n.feature = r.i32();
    n.threshold = r.f64();
    n.left = r.u32();
    n.right = r.u32();
    n.value = r.f64();
  }
  for (std::size_t k = 0; k < count; ++k) {
    const auto& n = nodes[k];
    if (n.feature < 0) continue;
    if (static_cast<std::size_t>(n.feature) >= p || n.left <= k || n.right <= k || n.left >= count || n.right >= count)
      throw ValidationError("model container holds a malformed tree");
  }
  return RegressionTree(std::move(nodes));
}

}  // namespace detail

inline void write_model_payload(bin::Writer& w, const TrainedModel& m) {
  w.u8(static_cast<std::uint8_t>(m.kind));
  w.u64(m.training_seed);
  w.u64(m.n_features);
  if (const auto* rf = std::get_if<RandomForest>(&m.model)) {
    w.u64(rf->trees.size());
    for (const auto& t : rf->trees) detail::write_tree(w, t);
  } else if (const auto* gb = std::get_if<BoostedTrees>(&m.model)) {
    w.f64(gb->f0);
    w.f64(gb->learning_rate);
    w.u64(gb->trees.size());
    for (const auto& t : gb->trees) detail::write_tree(w, t);
  } else {
    const auto& sv = std::get<SvrModel>(m.model);
    w.f64s(sv.means);
    w.f64s(sv.sds);
    w.f64(sv.gamma);
    w.f64(sv.epsilon);
    w.f64(sv.C);
    w.u64(sv.support.rows());
    for (double v : sv.support.data()) w.f64(v);
    w.f64s(sv.coef);
    w.f64(sv.bias);
    w.u8(sv.converged ? 1 : 0);
    w.u64(sv.iterations);
    w.f64(sv.objective);
  }
}

inline TrainedModel read_model_payload(bin::Reader& r) {
  TrainedModel m;
  const auto kind = r.u8();
  if (kind < 1 || kind > 3) throw ValidationError("model container has an unknown model kind " + std::to_string(kind));
  m.kind = static_cast<ModelKind>(kind);
  m.training_seed = r.u64();
  m.n_features = r.u64();
  if (m.n_features == 0) throw ValidationError("model container declares zero predictors");
  if (m.kind == ModelKind::rf) {
    RandomForest rf;
    rf.trees.resize(r.count(8));
    if (rf.trees.empty()) throw ValidationError("model container holds an empty forest");
    for (auto& t : rf.trees) t = detail::read_tree(r, m.n_features);
    m.model = std::move(rf);
  } else if (m.kind == ModelKind::gbt) {
    BoostedTrees gb;
    gb.f0 = r.f64();
    gb.learning_rate = r.f64();
    gb.trees.resize(r.count(8));
    for (auto& t : gb.trees) t = detail::read_tree(r, m.n_features);
    m.model = std::move(gb);
  } else {
    SvrModel sv;
    sv.means = r.f64s();
    sv.sds = r.f64s();
    if (sv.means.size() != m.n_features || sv.sds.size() != m.n_features)
      throw ValidationError("model container SVR scaling has the wrong length");
    sv.gamma = r.f64();
    sv.epsilon = r.f64();
    sv.C = r.f64();
    const auto nsv = r.count(8 * m.n_features);
    sv.support = Matrix(nsv, m.n_features);
    for (std::size_t i = 0; i < nsv; ++i)
      for (std::size_t j = 0; j < m.n_features; ++j) sv.support(i, j) = r.f64();
    sv.coef = r.f64s();
    if (sv.coef.size() != nsv) throw ValidationError("model container SVR coefficient count mismatch");
    sv.bias = r.f64();
    sv.converged = r.u8() != 0;
    sv.iterations = r.u64();
    sv.objective = r.f64();
    m.model = std::move(sv);
  }
  return m;
}

inline void write_container_header(bin::Writer& w, ModelKind kind) {
  w.bytes(kMagic);
  w.u32(kFormatVersion);
  w.u8(static_cast<std::uint8_t>(kind));
}

/// Reads magic and version; returns the kind tag.
inline ModelKind read_container_header(bin::Reader& r) {
  if (r.remaining() < 9 || r.bytes(4) != kMagic) throw ValidationError("not a PAGB model container");
  const auto version = r.u32();
  if (version != kFormatVersion)
    throw ValidationError("unsupported PAGB container version " + std::to_string(version));
  const auto kind = r.u8();
  if (kind < 1 || kind > 4) throw ValidationError("PAGB container has an unknown kind tag");
  return static_cast<ModelKind>(kind);
}

inline std::string serialize_model(const TrainedModel& m) {
  bin::Writer w;
  write_container_header(w, m.kind);
  write_model_payload(w, m);
  return w.take();
}

inline TrainedModel deserialize_model(std::string_view data) {
  bin::Reader r(data);
  const auto kind = read_container_header(r);
  if (kind == ModelKind::ensemble) throw ValidationError("container holds an ensemble, not a single model");
  auto m = read_model_payload(r);
  if (m.kind != kind) throw ValidationError("PAGB container kind tag disagrees with its payload");
  if (!r.done()) throw ValidationError("trailing bytes after PAGB model payload");
  return m;
}

}  // namespace pagb::learn
