#pragma once

// End-to-end stages over an on-disk layout. Each stage reads its inputs
// from the data directory or earlier stage outputs and writes through a
// Staging area that is committed only on success.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pagb/aoa.hpp"
#include "pagb/assess.hpp"
#include "pagb/common/text.hpp"
#include "pagb/config.hpp"
#include "pagb/ensemble.hpp"
#include "pagb/geodata.hpp"
#include "pagb/mapper.hpp"
#include "pagb/plotselect.hpp"
#include "pagb/pointcloud.hpp"
#include "pagb/predictors.hpp"
#include "pagb/synth.hpp"

namespace pagb::pipe {

namespace fs = std::filesystem;
using cfg::RunConfig;
using geo::GridSpec;
using geo::Raster;

inline constexpr const char* kStages[] = {"synth", "normalize", "metrics", "select", "train",
                                          "aoa",   "predict",   "assess",  "moran",  "report"};

/// Files written under a hidden directory and moved into `root` on commit;
/// anything uncommitted is removed when the object is destroyed.
class Staging {
public:
  Staging(fs::path root, const std::string& stage) : root_(std::move(root)), dir_(root_ / ".staging" / stage) {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  Staging(const Staging&) = delete;
  Staging& operator=(const Staging&) = delete;
  ~Staging() {
    std::error_code ec;
    fs::remove_all(dir_, ec);
    if (fs::is_empty(root_ / ".staging", ec)) fs::remove(root_ / ".staging", ec);
  }

  const fs::path& root() const noexcept { return root_; }

  fs::path path(const fs::path& rel) {
    const auto p = dir_ / rel;
    fs::create_directories(p.parent_path());
    files_.push_back(rel);
    return p;
  }
  void write(const fs::path& rel, std::string_view content) { text::write_file(path(rel).string(), content); }

  /// Outputs relative to root, in write order.
  const std::vector<fs::path>& files() const noexcept { return files_; }

  void commit() {
    for (const auto& rel : files_) {
      const auto dst = root_ / rel;
      fs::create_directories(dst.parent_path());
      fs::rename(dir_ / rel, dst);
    }
  }

private:
  fs::path root_, dir_;
  std::vector<fs::path> files_;
};

struct StageResult {
  std::vector<fs::path> inputs;             // absolute
  std::map<std::string, std::uint64_t> seeds;
  std::vector<std::pair<std::string, std::string>> summary;  // key/value lines for logs
};

using Logger = std::function<void(const std::string&)>;

// ---------------------------------------------------------------------------
// Layout

inline std::string cloud_name(long long id) { return "cloud_" + std::to_string(id) + ".pcx"; }

struct Layout {
  const RunConfig& c;

  fs::path out(const fs::path& rel) const { return c.paths.output_dir / rel; }
  fs::path raw_cloud(long long id) const { return c.paths.in(c.paths.clouds_dir) / cloud_name(id); }
  fs::path normalized_rel(long long id) const { return fs::path("normalized") / cloud_name(id); }
  fs::path metrics_rel(long long id, const std::string& band) const {
    return fs::path("metrics") / ("cov_" + std::to_string(id)) / (band + ".asc");
  }
  fs::path landcover(int year) const {
    return c.paths.in(c.paths.landcover_dir) / ("landcover_" + std::to_string(year) + ".asc");
  }
  fs::path auxiliary(const std::string& band) const { return c.paths.in(c.paths.auxiliary_dir) / (band + ".asc"); }
};

inline void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw ValidationError("missing input file: " + p.string());
}

inline std::string read_input(const fs::path& p, StageResult& r) {
  require_file(p);
  r.inputs.push_back(fs::absolute(p));
  return text::read_file(p.string());
}

inline Raster read_raster(const fs::path& p, StageResult& r, std::string band = {}) {
  return geo::parse_ascii_grid(read_input(p, r), std::move(band));
}

inline std::vector<select::CoverageInfo> load_coverages(const Layout& L, StageResult& r) {
  const auto p = L.c.paths.in(L.c.paths.coverage_manifest);
  auto covs = select::parse_coverage_manifest(read_input(p, r), p.parent_path());
  if (covs.empty()) throw ValidationError("coverage manifest lists no coverages");
  return covs;
}

/// Map grid: the geometry of the landcover raster for the first coverage.
inline GridSpec map_grid(const Layout& L, const std::vector<select::CoverageInfo>& covs, StageResult& r) {
  return read_raster(L.landcover(covs.front().year), r).spec;
}

inline pred::AuxiliaryData load_auxiliary(const Layout& L, StageResult& r) {
  pred::AuxiliaryData aux;
  for (const auto& n : pred::auxiliary_names()) aux.bands[n] = read_raster(L.auxiliary(n), r, n);
  aux.parcels = read_raster(L.auxiliary("PARCEL"), r, "PARCEL");
  aux.validate();
  return aux;
}

/// Smallest window of `spec` covering `r`.
inline GridSpec grid_window(const GridSpec& spec, const geo::Rect& r) {
  const double cs = spec.cell_size;
  const auto clampi = [](double v, std::size_t hi) {
    return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(hi)));
  };
  const auto c0 = clampi(std::floor((r.xmin - spec.origin_x) / cs), spec.n_cols - 1);
  const auto c1 = clampi(std::floor((r.xmax - spec.origin_x) / cs), spec.n_cols - 1);
  const auto s0 = clampi(std::floor((r.ymin - spec.origin_y) / cs), spec.n_rows - 1);
  const auto s1 = clampi(std::floor((r.ymax - spec.origin_y) / cs), spec.n_rows - 1);
  GridSpec g = spec;
  g.origin_x += static_cast<double>(c0) * cs;
  g.origin_y += static_cast<double>(s0) * cs;
  g.n_cols = c1 - c0 + 1;
  g.n_rows = s1 - s0 + 1;
  return g;
}

inline geo::Rect cloud_bounds(const pc::PointCloud& cloud) {
  if (cloud.empty()) throw ValidationError("empty point cloud");
  geo::Rect b{cloud.records[0].x, cloud.records[0].y, cloud.records[0].x, cloud.records[0].y};
  for (const auto& p : cloud.records) {
    b.xmin = std::min(b.xmin, p.x);
    b.ymin = std::min(b.ymin, p.y);
    b.xmax = std::max(b.xmax, p.x);
    b.ymax = std::max(b.ymax, p.y);
  }
  return b;
}

// ---------------------------------------------------------------------------
// synth

/// Two side-by-side coverages overlapping by `overlap` of the scene width
/// (one coverage spans the scene when only one year is given).
inline std::vector<synth::CoverageSpec> synth_coverages(const GridSpec& spec, const cfg::SynthConfig& s) {
  const auto ext = spec.extent();
  std::vector<synth::CoverageSpec> out;
  if (s.coverage_years.size() == 1) {
    out.push_back({1, s.coverage_years[0], ext});
    return out;
  }
  const auto snap = [&](double frac) {
    return spec.origin_x + std::round(frac * static_cast<double>(spec.n_cols)) * spec.cell_size;
  };
  out.push_back({1, s.coverage_years[0], {ext.xmin, ext.ymin, snap((1.0 + s.overlap) / 2.0), ext.ymax}});
  out.push_back({2, s.coverage_years[1], {snap((1.0 - s.overlap) / 2.0), ext.ymin, ext.xmax, ext.ymax}});
  return out;
}

inline StageResult run_synth(const RunConfig& c, Staging& st, const Logger& log) {
  StageResult res;
  const auto& s = c.synth;
  res.seeds["synth"] = c.seeds.synth;
  GridSpec spec;
  spec.n_cols = s.n_cols;
  spec.n_rows = s.n_rows;
  spec.cell_size = s.cell_size;
  synth::SceneParams sp;
  sp.n_bumps = s.n_bumps;
  const auto scene = synth::gen_scene(spec, derive_seed(c.seeds.synth, 0x5ce), sp);
  st.write("truth/true_agb.asc", geo::write_ascii_grid(scene.true_agb));
  st.write("truth/ground_dem.asc", geo::write_ascii_grid(scene.ground_dem));
  for (const auto& [name, r] : scene.auxiliary) st.write(fs::path("auxiliary") / (name + ".asc"), geo::write_ascii_grid(r));
  st.write("auxiliary/PARCEL.asc", geo::write_ascii_grid(scene.parcels));

  synth::CloudParams cp;
  cp.height_a = s.height_a;
  cp.height_b = s.height_b;
  cp.growth_rate = s.growth_rate;
  const auto covs = synth_coverages(spec, s);
  text::CsvWriter manifest({"coverage_id", "year", "footprint_file"});
  std::size_t total_points = 0;
  for (const auto& cov : covs) {
    const std::string fp_name = "footprint_" + std::to_string(cov.coverage_id) + ".csv";
    st.write(fp_name, geo::polygon_to_csv(cov.footprint.polygon()));
    manifest.row({std::to_string(cov.coverage_id), std::to_string(cov.year), fp_name});
    st.write(fs::path("landcover") / ("landcover_" + std::to_string(cov.year) + ".asc"),
             geo::write_ascii_grid(scene.landcover));
    const auto cloud = synth::gen_cloud(scene, cov, s.density, derive_seed(c.seeds.synth, 0xc10d), cp);
    total_points += cloud.size();
    if (log) log("coverage " + std::to_string(cov.coverage_id) + ": " + std::to_string(cloud.size()) + " points");
    st.write(fs::path("clouds") / cloud_name(cov.coverage_id), pc::write_pcx(cloud));
  }
  st.write("coverages.csv", manifest.str());

  synth::InventoryParams ip;
  ip.plot_spacing = s.plot_spacing;
  ip.years = s.years;
  ip.growth_rate = s.growth_rate;
  ip.disturbed_fraction = s.disturbed_fraction;
  const auto inv = synth::gen_inventory(scene, ip, derive_seed(c.seeds.synth, 0x1fe));
  st.write("inventory.csv", select::inventory_to_csv(inv));

  int newest = covs.front().year;
  for (const auto& cov : covs) newest = std::max(newest, cov.year);
  const auto hexes = synth::gen_hex_estimates(scene, newest, s.growth_rate, {s.hex_spacing, s.ci_half_width},
                                              derive_seed(c.seeds.synth, 0x4e5));
  text::CsvWriter hw({"hex_id", "cx", "cy", "spacing", "fia_agb", "ci_low", "ci_high"});
  for (const auto& h : hexes)
    hw.row({std::to_string(h.hex_id), text::format_double(h.center.x), text::format_double(h.center.y),
            text::format_double(h.spacing), text::format_double(h.fia_agb), text::format_double(h.ci_low),
            text::format_double(h.ci_high)});
  st.write("hex_estimates.csv", hw.str());

  std::size_t plots = 0;
  for (std::size_t i = 0; i < inv.size(); ++i) plots += i == 0 || inv[i].plot_id != inv[i - 1].plot_id;
  res.summary = {{"points", std::to_string(total_points)},
                 {"plots", std::to_string(plots)},
                 {"inventory_records", std::to_string(inv.size())},
                 {"coverages", std::to_string(covs.size())},
                 {"hex_estimates", std::to_string(hexes.size())}};
  return res;
}

// ---------------------------------------------------------------------------
// normalize

inline StageResult run_normalize(const RunConfig& c, Staging& st, const Logger& log) {
  StageResult res;
  const Layout L{c};
  const auto covs = load_coverages(L, res);
  const auto spec = map_grid(L, covs, res);
  for (const auto& cov : covs) {
    auto raw = pc::parse_pcx(std::string_view(read_input(L.raw_cloud(cov.coverage_id), res)));
    const auto window = grid_window(spec, cloud_bounds(raw));
    const auto ground = pc::build_ground_model(raw, window);
    const auto norm = pc::normalize_heights(raw, ground);
    raw = {};
    st.write(L.normalized_rel(cov.coverage_id), pc::write_pcx(norm));
    st.write(fs::path("normalized") / ("ground_" + std::to_string(cov.coverage_id) + ".asc"),
             geo::write_ascii_grid(ground.ground_elevation));
    if (log) log("normalized coverage " + std::to_string(cov.coverage_id) + " (" + std::to_string(norm.size()) + " points)");
    res.summary.emplace_back("points_" + std::to_string(cov.coverage_id), std::to_string(norm.size()));
  }
  return res;
}

inline pc::PointCloud load_normalized(const Layout& L, long long id, StageResult& r) {
  auto cloud = pc::parse_pcx(std::string_view(read_input(L.out(L.normalized_rel(id)), r)));
  cloud.height_normalized = true;
  return cloud;
}

// ---------------------------------------------------------------------------
// metrics

inline StageResult run_metrics(const RunConfig& c, Staging& st, const Logger& log) {
  StageResult res;
  const Layout L{c};
  const auto covs = load_coverages(L, res);
  const auto spec = map_grid(L, covs, res);
  for (const auto& cov : covs) {
    const auto cloud = load_normalized(L, cov.coverage_id, res);
    const auto stack = pred::pixel_predictors(cloud, spec);
    for (const auto& band : stack.bands) st.write(L.metrics_rel(cov.coverage_id, band.band_name), geo::write_ascii_grid(band));
    const auto valid = stack.bands.front().count_valid();
    if (log) log("metrics coverage " + std::to_string(cov.coverage_id) + ": " + std::to_string(valid) + " cells");
    res.summary.emplace_back("cells_" + std::to_string(cov.coverage_id), std::to_string(valid));
  }
  return res;
}

inline pred::RasterStack load_lidar_stack(const Layout& L, long long id, StageResult& r) {
  pred::RasterStack s;
  for (const auto& n : pred::lidar_names()) s.bands.push_back(read_raster(L.out(L.metrics_rel(id, n)), r, n));
  s.spec = s.bands.front().spec;
  for (const auto& b : s.bands) geo::require_aligned(s.spec, b.spec, "LiDAR metric bands");
  return s;
}

// ---------------------------------------------------------------------------
// select

inline std::string tax_encoding_csv(const pred::TaxEncoding& e) {
  text::CsvWriter w({"kind", "value"});
  for (int v : e.retained_codes) w.row({"code", std::to_string(v)});
  for (int v : e.retained_categories) w.row({"category", std::to_string(v)});
  return w.str();
}

inline pred::TaxEncoding parse_tax_encoding_csv(std::string_view content) {
  const auto t = text::parse_csv(content);
  if (t.header != std::vector<std::string>{"kind", "value"}) throw ValidationError("tax encoding header must be kind,value");
  pred::TaxEncoding e;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    int v = 0;
    if (!text::parse_int(t.rows[i][1], v)) throw ParseError("bad tax code", i + 2);
    if (t.rows[i][0] == "code")
      e.retained_codes.insert(v);
    else if (t.rows[i][0] == "category")
      e.retained_categories.insert(v);
    else
      throw ParseError("tax encoding kind must be code or category", i + 2);
  }
  return e;
}

inline StageResult run_select(const RunConfig& c, Staging& st, const Logger& log) {
  StageResult res;
  const Layout L{c};
  const auto inv = select::parse_inventory_csv(read_input(c.paths.in(c.paths.inventory), res));
  const auto covs = load_coverages(L, res);
  const auto aux = load_auxiliary(L, res);
  std::map<long long, std::unique_ptr<pc::PointCloud>> clouds;
  auto cloud_for = [&](const select::CoverageInfo& cov) -> const pc::PointCloud& {
    auto& slot = clouds[cov.coverage_id];
    if (!slot) slot = std::make_unique<pc::PointCloud>(load_normalized(L, cov.coverage_id, res));
    return *slot;
  };
  const auto sel = select::select_model_plots(inv, covs, cloud_for, c.selection);
  const auto& plots = sel.plots;
  st.write("selection/selection_report.csv", sel.report.to_csv());
  st.write("selection/model_plots.csv", select::model_plots_to_csv(plots));
  if (plots.size() < 5) {
    std::string counts;
    for (const auto& [k, v] : sel.report.counts) counts += " " + k + "=" + std::to_string(v);
    throw ValidationError("fewer than 5 model plots survive selection:" + counts);
  }

  res.seeds["split"] = c.seeds.split;
  const auto split = select::split_train_test(plots.size(), 1.0 - c.test_fraction, c.seeds.split);
  std::vector<std::optional<int>> train_codes;
  for (auto i : split.train) train_codes.push_back(aux.parcel_at(plots[i].footprint.center));
  const auto enc = pred::fit_tax_encoding(train_codes, c.tax_code_threshold, c.tax_category_threshold);
  const auto schema = pred::make_schema(enc);
  st.write("selection/tax_encoding.csv", tax_encoding_csv(enc));

  std::map<long long, std::unique_ptr<pc::SpatialIndex>> indexes;
  Matrix X(plots.size(), schema.size());
  std::vector<long long> ids;
  std::vector<double> agb;
  for (std::size_t i = 0; i < plots.size(); ++i) {
    const auto& p = plots[i];
    auto& idx = indexes[p.coverage_id];
    if (!idx) {
      const auto it = std::find_if(covs.begin(), covs.end(), [&](auto& cv) { return cv.coverage_id == p.coverage_id; });
      idx = std::make_unique<pc::SpatialIndex>(cloud_for(*it), 25.0);
    }
    const auto v = pred::predictors_from_pooled(pred::pool_subplots(*idx, p.footprint), p.footprint, aux, enc);
    const auto row = v.flatten(schema);
    std::copy(row.begin(), row.end(), X.row(i).begin());
    ids.push_back(p.plot_id);
    agb.push_back(p.agb_at_lidar);
  }
  st.write("selection/predictors.csv", pred::predictor_matrix_csv(schema, ids, agb, X));
  text::CsvWriter sw({"plot_id", "partition"});
  {
    std::vector<char> is_test(plots.size(), 0);
    for (auto i : split.test) is_test[i] = 1;
    for (std::size_t i = 0; i < plots.size(); ++i) sw.row({std::to_string(ids[i]), is_test[i] ? "test" : "train"});
  }
  st.write("selection/split.csv", sw.str());
  if (log) log("selected " + std::to_string(plots.size()) + " model plots");
  res.summary = {{"model_plots", std::to_string(plots.size())},
                 {"train", std::to_string(split.train.size())},
                 {"test", std::to_string(split.test.size())},
                 {"predictors", std::to_string(schema.size())}};
  return res;
}

/// Predictor matrix and partition read back from the select stage.
struct ModelData {
  pred::PredictorMatrix pm;
  pred::TaxEncoding enc;
  pred::PredictorSchema schema;
  std::vector<std::size_t> train, test;

  learn::Dataset dataset(std::span<const std::size_t> rows) const {
    learn::Dataset d;
    d.X = pm.X.select_rows(rows);
    for (auto r : rows) d.y.push_back(pm.agb[r]);
    d.feature_names = pm.names;
    return d;
  }
};

inline ModelData load_model_data(const Layout& L, StageResult& r) {
  ModelData md;
  md.pm = pred::parse_predictor_matrix_csv(read_input(L.out("selection/predictors.csv"), r));
  md.enc = parse_tax_encoding_csv(read_input(L.out("selection/tax_encoding.csv"), r));
  md.schema = pred::make_schema(md.enc);
  if (md.pm.names != md.schema.names) throw ValidationError("predictor matrix columns disagree with the tax encoding");
  const auto t = text::parse_csv(read_input(L.out("selection/split.csv"), r));
  if (t.header != std::vector<std::string>{"plot_id", "partition"} || t.rows.size() != md.pm.ids.size())
    throw ValidationError("split file does not match the predictor matrix");
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    long long id = 0;
    if (!text::parse_int(t.rows[i][0], id) || id != md.pm.ids[i]) throw ParseError("split row does not match plot order", i + 2);
    if (t.rows[i][1] == "train")
      md.train.push_back(i);
    else if (t.rows[i][1] == "test")
      md.test.push_back(i);
    else
      throw ParseError("partition must be train or test", i + 2);
  }
  return md;
}

// ---------------------------------------------------------------------------
// train

inline std::string hyperparams_csv(const learn::Hyperparams& h) {
  text::CsvWriter w({"learner", "parameter", "value"});
  w.row({"rf", "n_trees", std::to_string(h.rf.n_trees)});
  w.row({"rf", "mtry", std::to_string(h.rf.mtry)});
  w.row({"rf", "min_leaf", std::to_string(h.rf.min_leaf)});
  w.row({"gbt", "n_rounds", std::to_string(h.gbt.n_rounds)});
  w.row({"gbt", "learning_rate", text::format_double(h.gbt.learning_rate)});
  w.row({"gbt", "max_depth", std::to_string(h.gbt.max_depth)});
  w.row({"gbt", "subsample", text::format_double(h.gbt.subsample)});
  w.row({"svr", "C", text::format_double(h.svr.C)});
  w.row({"svr", "epsilon", h.svr.epsilon ? text::format_double(*h.svr.epsilon) : "default"});
  w.row({"svr", "gamma", h.svr.gamma ? text::format_double(*h.svr.gamma) : "default"});
  return w.str();
}

inline std::string metrics_csv(const assess::MetricBundle& m, std::size_t n) {
  text::CsvWriter w({"n", "rmse", "pct_rmse", "mae", "pct_mae", "me", "r2"});
  w.row({std::to_string(n), assess::fmt_or_na(m.rmse), assess::fmt_or_na(m.pct_rmse), assess::fmt_or_na(m.mae),
         assess::fmt_or_na(m.pct_mae), assess::fmt_or_na(m.me), assess::fmt_or_na(m.r2)});
  return w.str();
}

inline StageResult run_train(const RunConfig& c, Staging& st, const Logger& log) {
  StageResult res;
  const Layout L{c};
  const auto md = load_model_data(L, res);
  const auto train = md.dataset(md.train), test = md.dataset(md.test);
  res.seeds["cv"] = c.seeds.cv;
  res.seeds["train"] = c.seeds.train;
  const auto grid = c.grid();
  const auto gs = learn::grid_search_cv(train, grid, std::min(c.cv_folds, train.n()), c.seeds.cv);
  text::CsvWriter cw({"learner", "grid_index", "mean_rmse", "selected"});
  auto add = [&](const char* name, const learn::CvResult& r) {
    for (std::size_t g = 0; g < r.scores.size(); ++g)
      cw.row({name, std::to_string(g), text::format_double(r.scores[g]), g == r.best ? "1" : "0"});
  };
  add("rf", gs.rf);
  add("gbt", gs.gbt);
  add("svr", gs.svr);
  st.write("model/cv_results.csv", cw.str());
  st.write("model/hyperparams.csv", hyperparams_csv(gs.best));
  if (log) log("grid search done; fitting stacked ensemble on " + std::to_string(train.n()) + " plots");

  const auto e = ens::train_ensemble(train, gs.best, c.seeds.train);
  st.write("model/ensemble.pagb", ens::serialize_ensemble(e));
  st.write("model/loo_matrix.csv", ens::loo_matrix_csv(e.loo, train.y));
  text::CsvWriter mw({"term", "coefficient"});
  const char* terms[] = {"intercept", "rf", "gbt", "svr"};
  for (std::size_t k = 0; k < 4; ++k) mw.row({terms[k], text::format_double(e.meta.coef[k])});
  mw.row({"ridge_fallback", e.meta.ridge_fallback ? "1" : "0"});
  mw.row({"condition_number", text::format_double(e.meta.condition_number)});
  st.write("model/meta.csv", mw.str());

  const auto pred_test = e.predict(test.X);
  text::CsvWriter tw({"plot_id", "observed", "predicted"});
  for (std::size_t k = 0; k < md.test.size(); ++k)
    tw.row({std::to_string(md.pm.ids[md.test[k]]), text::format_double(test.y[k]), text::format_double(pred_test[k])});
  st.write("model/test_predictions.csv", tw.str());
  const auto m = assess::accuracy_metrics(test.y, pred_test);
  st.write("model/test_metrics.csv", metrics_csv(m, test.n()));
  res.summary = {{"test_r2", assess::fmt_or_na(m.r2)}, {"test_pct_rmse", assess::fmt_or_na(m.pct_rmse)}};
  return res;
}

inline ens::StackedEnsemble load_ensemble(const Layout& L, StageResult& r) {
  return ens::deserialize_ensemble(read_input(L.out("model/ensemble.pagb"), r));
}

// ---------------------------------------------------------------------------
// aoa

inline StageResult run_aoa(const RunConfig& c, Staging& st, const Logger& log) {
  StageResult res;
  const Layout L{c};
  const auto md = load_model_data(L, res);
  const auto train = md.dataset(md.train), test = md.dataset(md.test);
  const auto covs = load_coverages(L, res);
  const auto aux = load_auxiliary(L, res);
  res.seeds["aoa"] = c.seeds.aoa;

  const auto cl = aoa::cluster_predictors(train.X, c.aoa_clusters);
  aoa::ImportanceOptions io;
  io.loo = c.importance_loo();
  if (log) log("permutation importance over " + std::to_string(train.p()) + " predictors");
  const auto imp = aoa::permutation_importance(train, cl, c.seeds.aoa, io);
  auto stats = aoa::fit_di_stats(train.X, imp.weights, c.aoa_train_distance);
  std::vector<double> test_di(test.n());
  for (std::size_t i = 0; i < test.n(); ++i) test_di[i] = aoa::dissimilarity_index(test.X.row(i), stats);
  stats.threshold = aoa::aoa_threshold(test_di, c.aoa_q_low, c.aoa_q_high, c.aoa_iqr_factor);
  st.write("aoa/importance.csv", aoa::importance_csv(md.pm.names, imp, cl, stats.threshold));
  text::CsvWriter dw({"key", "value"});
  dw.row({"threshold", text::format_double(stats.threshold)});
  dw.row({"mean_train_distance", text::format_double(stats.mean_train_distance)});
  dw.row({"rmse_full", text::format_double(imp.rmse_full)});
  dw.row({"clusters", std::to_string(cl.n_clusters)});
  dw.row({"degenerate_clustering", cl.degenerate ? "1" : "0"});
  st.write("aoa/di_stats.csv", dw.str());
  text::CsvWriter tw({"plot_id", "di"});
  for (std::size_t k = 0; k < md.test.size(); ++k) tw.row({std::to_string(md.pm.ids[md.test[k]]), text::format_double(test_di[k])});
  st.write("aoa/test_di.csv", tw.str());

  std::size_t valid = 0, inside = 0;
  for (const auto& cov : covs) {
    const auto stack = pred::build_predictor_stack(load_lidar_stack(L, cov.coverage_id, res), aux, md.enc, md.schema);
    const auto a = aoa::aoa_mask(stack, stats);
    const std::string id = std::to_string(cov.coverage_id);
    st.write("aoa/di_" + id + ".asc", geo::write_ascii_grid(a.di));
    st.write("aoa/mask_" + id + ".asc", geo::write_ascii_grid(a.mask));
    for (std::size_t i = 0; i < a.di.values.size(); ++i)
      if (!a.di.is_nodata(i)) {
        ++valid;
        inside += a.mask.values[i] == 1.0;
      }
  }
  const double frac = valid ? static_cast<double>(inside) / static_cast<double>(valid) : 0.0;
  res.summary = {{"threshold", text::format_double(stats.threshold)}, {"inside_fraction", text::format_double(frac)}};
  return res;
}

// ---------------------------------------------------------------------------
// predict

inline StageResult run_predict(const RunConfig& c, Staging& st, const Logger& log) {
  StageResult res;
  const Layout L{c};
  const auto md = load_model_data(L, res);
  const auto covs = load_coverages(L, res);
  const auto aux = load_auxiliary(L, res);
  const auto e = load_ensemble(L, res);
  std::vector<map::CoverageSurface> surfaces;
  std::map<long long, Raster> masks;
  for (const auto& cov : covs) {
    const auto stack = pred::build_predictor_stack(load_lidar_stack(L, cov.coverage_id, res), aux, md.enc, md.schema);
    surfaces.push_back({cov.coverage_id, cov.year, map::predict_surface(stack, e)});
    st.write("map/agb_" + std::to_string(cov.coverage_id) + ".asc", geo::write_ascii_grid(surfaces.back().agb));
    masks[cov.coverage_id] = read_raster(L.out("aoa/mask_" + std::to_string(cov.coverage_id) + ".asc"), res);
    if (log) log("predicted coverage " + std::to_string(cov.coverage_id));
  }
  const auto m = map::mosaic(surfaces);
  std::map<int, Raster> lc_years;
  int newest = covs.front().year;
  for (const auto& cov : covs) newest = std::max(newest, cov.year);
  for (const auto& cov : covs) {
    const int y = c.lcmap_vintage_mode ? cov.year : newest;
    if (!lc_years.contains(cov.year)) lc_years[cov.year] = read_raster(L.landcover(y), res);
  }
  const auto lc = map::mosaic_landcover(m, lc_years);
  Raster aoa_mosaic = Raster::nodata_filled(m.agb.spec, "AOA");
  for (std::size_t i = 0; i < aoa_mosaic.values.size(); ++i) {
    if (m.provenance.is_nodata(i)) continue;
    const auto& mk = masks.at(std::llround(m.provenance.values[i]));
    geo::require_aligned(mk.spec, aoa_mosaic.spec, "AOA mask and map");
    aoa_mosaic.values[i] = mk.values[i];
  }
  const auto agb_masked = map::apply_masks(m.agb, lc, aoa_mosaic);
  st.write("map/agb_mosaic.asc", geo::write_ascii_grid(m.agb));
  st.write("map/provenance.asc", geo::write_ascii_grid(m.provenance));
  st.write("map/landcover_mosaic.asc", geo::write_ascii_grid(lc));
  st.write("map/aoa_mosaic.asc", geo::write_ascii_grid(aoa_mosaic));
  st.write("map/agb_masked.asc", geo::write_ascii_grid(agb_masked));

  // Reference plots: model plots with the mosaic landcover at their center.
  std::vector<map::ReferencePlot> refs;
  const auto mp = text::parse_csv(read_input(L.out("selection/model_plots.csv"), res));
  const auto cx = mp.column("x"), cy = mp.column("y"), ca = mp.column("agb_at_lidar");
  for (std::size_t k = 0; k < mp.rows.size(); ++k) {
    const auto& row = mp.rows[k];
    double x = 0, y = 0, a = 0;
    if (!text::parse_double(row[cx], x) || !text::parse_double(row[cy], y) || !text::parse_double(row[ca], a))
      throw ParseError("malformed model plot row", k + 2);
    const auto i = lc.spec.locate({x, y});
    if (!i) continue;
    if (const auto code = map::landcover_at(lc, *i)) refs.push_back({*code, a});
  }
  const auto summary = map::tabulate_by_class(agb_masked, lc, &aoa_mosaic, refs);
  st.write("map/class_summary.csv", summary.to_csv());
  res.summary = {{"mapped_pixels", std::to_string(agb_masked.count_valid())}};
  return res;
}

// ---------------------------------------------------------------------------
// assess

inline StageResult run_assess(const RunConfig& c, Staging& st, const Logger& log) {
  StageResult res;
  const Layout L{c};
  const auto inv = select::parse_inventory_csv(read_input(c.paths.in(c.paths.inventory), res));
  const auto covs = load_coverages(L, res);
  const auto agb = read_raster(L.out("map/agb_masked.asc"), res, "AGB");
  const auto lc = read_raster(L.out("map/landcover_mosaic.asc"), res);
  const auto aoa_mask = read_raster(L.out("map/aoa_mosaic.asc"), res);
  res.seeds["assess"] = c.seeds.assess;

  const auto sel = select::select_assessment_plots(inv, covs, map::landcover_keep_mask(lc), aoa_mask, {c.year_window});
  st.write("assess/assessment_report.csv", sel.report.to_csv());
  st.write("assess/assessment_plots.csv", select::assessment_plots_to_csv(sel.plots));
  if (log) log(std::to_string(sel.plots.size()) + " assessment plots");

  assess::MetricOptions mo;
  mo.bootstrap_reps = c.bootstrap_reps;
  mo.se_divide_sqrt_n = c.se_divide_sqrt_n;
  const auto scales = assess::riemann_assessment(sel.plots, agb, c.spacings, c.seeds.assess, mo);
  st.write("assess/scale_results.csv", assess::scale_results_csv(scales));
  for (const auto& s : scales) {
    const std::string tag = s.spacing > 0.0 ? text::format_double(s.spacing) : std::string("plot");
    st.write("assess/scatter_" + tag + ".csv", assess::scatter_csv(s));
  }
  st.write("assess/hex_residuals.csv",
           assess::hex_residuals_csv(assess::choropleth_residuals(sel.plots, agb, c.choropleth_spacing, c.seeds.assess)));
  st.write("assess/density_me.csv",
           assess::density_me_csv(assess::density_filtered_me(sel.plots, agb, c.spacings, c.seeds.assess, c.density_filter)));
  const auto hex_path = c.paths.in(c.paths.hex_estimates);
  if (fs::is_regular_file(hex_path)) {
    const auto hexes = assess::parse_hex_estimates_csv(read_input(hex_path, res));
    const auto mv = assess::menlove_compare(hexes, agb, lc, c.min_mapped_fraction);
    st.write("assess/hex_comparison.csv", assess::menlove_csv(mv));
    res.summary.emplace_back("hex_within_fraction", assess::fmt_or_na(mv.fraction_within));
  }
  res.summary.emplace_back("assessment_plots", std::to_string(sel.plots.size()));
  res.summary.emplace_back("plot_pct_rmse", assess::fmt_or_na(scales.front().metrics.pct_rmse));
  return res;
}

// ---------------------------------------------------------------------------
// moran

inline StageResult run_moran(const RunConfig& c, Staging& st, const Logger&) {
  StageResult res;
  const Layout L{c};
  const auto plots = select::parse_assessment_plots_csv(read_input(L.out("assess/assessment_plots.csv"), res));
  const auto agb = read_raster(L.out("map/agb_masked.asc"), res, "AGB");
  res.seeds["moran"] = c.seeds.moran;
  const auto pairs = assess::extract_plot_pairs(plots, agb);
  std::vector<double> resid(pairs.fia.size());
  for (std::size_t i = 0; i < resid.size(); ++i) resid[i] = pairs.fia[i] - pairs.map[i];
  const auto mr = assess::morans_i(pairs.centers, resid, c.moran_radii, c.moran_permutations, c.seeds.moran);
  st.write("moran/moran.csv", assess::moran_csv(mr));
  std::size_t within = 0, defined = 0;
  for (const auto& m : mr)
    if (m.I) {
      ++defined;
      within += m.within_envelope();
    }
  res.summary = {{"radii_within_envelope", std::to_string(within) + "/" + std::to_string(defined)}};
  return res;
}

// ---------------------------------------------------------------------------
// report

inline StageResult run_report(const RunConfig& c, Staging& st, const Logger&) {
  StageResult res;
  const Layout L{c};
  const std::vector<fs::path> copies{"assess/scale_results.csv", "map/class_summary.csv", "model/test_metrics.csv",
                                     "selection/selection_report.csv", "assess/assessment_report.csv",
                                     "moran/moran.csv", "aoa/importance.csv"};
  for (const auto& rel : copies) st.write(fs::path("report") / rel.filename(), read_input(L.out(rel), res));
  for (const auto& entry : fs::directory_iterator(L.out("assess"))) {
    const auto name = entry.path().filename().string();
    if (name.starts_with("scatter_")) st.write(fs::path("report") / name, read_input(entry.path(), res));
  }
  if (fs::is_regular_file(L.out("assess/hex_comparison.csv")))
    st.write("report/hex_comparison.csv", read_input(L.out("assess/hex_comparison.csv"), res));

  // Headline summary.
  text::CsvWriter w({"key", "value"});
  const auto tm = text::parse_csv(read_input(L.out("model/test_metrics.csv"), res));
  for (std::size_t k = 0; k < tm.header.size(); ++k) w.row({"test_" + tm.header[k], tm.rows.at(0)[k]});
  const auto ds = text::parse_csv(read_input(L.out("aoa/di_stats.csv"), res));
  for (const auto& row : ds.rows) w.row({"aoa_" + row[0], row[1]});
  const auto sr = text::parse_csv(read_input(L.out("assess/scale_results.csv"), res));
  for (const auto& row : sr.rows) w.row({"pct_rmse_at_" + row[0], row[4]});
  const auto aoa_mosaic = read_raster(L.out("map/aoa_mosaic.asc"), res);
  std::size_t valid = 0, inside = 0;
  const auto agb = read_raster(L.out("map/agb_mosaic.asc"), res);
  for (std::size_t i = 0; i < agb.values.size(); ++i)
    if (!agb.is_nodata(i)) {
      ++valid;
      inside += aoa_mosaic.values[i] == 1.0;
    }
  w.row({"aoa_inside_fraction", text::format_double(valid ? static_cast<double>(inside) / static_cast<double>(valid) : 0.0)});
  st.write("report/summary.csv", w.str());
  return res;
}

using StageFn = StageResult (*)(const RunConfig&, Staging&, const Logger&);

inline StageFn stage_function(const std::string& name) {
  static const std::map<std::string, StageFn> table{
      {"synth", run_synth},     {"normalize", run_normalize}, {"metrics", run_metrics}, {"select", run_select},
      {"train", run_train},     {"aoa", run_aoa},             {"predict", run_predict}, {"assess", run_assess},
      {"moran", run_moran},     {"report", run_report}};
  const auto it = table.find(name);
  if (it == table.end()) throw ValidationError("unknown stage " + name);
  return it->second;
}

/// Root directory a stage writes into.
inline fs::path stage_root(const RunConfig& c, const std::string& stage) {
  return stage == "synth" ? c.paths.data_dir : c.paths.output_dir;
}

}  // namespace pagb::pipe
