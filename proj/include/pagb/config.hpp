#pragma once

// Run configuration: `[section]` headers, `key = value` lines, comma lists,
// `#` comments. Unknown sections and keys are rejected.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pagb/aoa.hpp"
#include "pagb/common/error.hpp"
#include "pagb/common/text.hpp"
#include "pagb/ensemble.hpp"
#include "pagb/learners.hpp"
#include "pagb/plotselect.hpp"

namespace pagb::cfg {

namespace fs = std::filesystem;

struct IniEntry {
  std::string value;
  std::size_t line = 0;
};

using IniFile = std::map<std::string, std::map<std::string, IniEntry>>;

inline IniFile parse_ini(std::string_view content) {
  IniFile ini;
  std::string section;
  std::size_t line_no = 0;
  for (auto raw : text::split(content, '\n')) {
    ++line_no;
    auto line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw ParseError("malformed section header", line_no);
      section = std::string(text::trim(line.substr(1, line.size() - 2)));
      ini[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key = value", line_no);
    if (section.empty()) throw ParseError("key outside any section", line_no);
    const std::string key(text::trim(line.substr(0, eq)));
    if (key.empty()) throw ParseError("empty key", line_no);
    auto& sec = ini[section];
    if (sec.contains(key)) throw ParseError("duplicate key " + section + "." + key, line_no);
    sec[key] = {std::string(text::trim(line.substr(eq + 1))), line_no};
  }
  return ini;
}

struct Paths {
  fs::path data_dir = "data";
  fs::path inventory = "inventory.csv";
  fs::path coverage_manifest = "coverages.csv";
  fs::path clouds_dir = "clouds";          // cloud_<coverage_id>.pcx
  fs::path auxiliary_dir = "auxiliary";    // <BAND>.asc and PARCEL.asc
  fs::path landcover_dir = "landcover";    // landcover_<year>.asc
  fs::path hex_estimates = "hex_estimates.csv";  // optional
  fs::path output_dir = "out";

  fs::path in(const fs::path& p) const { return p.is_absolute() ? p : data_dir / p; }
};

struct Seeds {
  std::uint64_t synth = 1, split = 2, cv = 3, train = 4, aoa = 5, assess = 6, moran = 7;
};

struct SynthConfig {
  std::size_t n_cols = 80, n_rows = 80;
  double cell_size = 30.0;
  std::size_t n_bumps = 60;
  double density = 2.0;  // pulses per m2
  double plot_spacing = 105.0;
  std::vector<int> years{2011, 2012, 2013, 2014, 2015, 2016, 2017, 2018, 2019, 2020, 2021};
  double growth_rate = 0.02;
  double disturbed_fraction = 0.05;
  std::vector<int> coverage_years{2015, 2017};
  double overlap = 0.24;  // share of the width covered by both coverages
  double height_a = 0.6, height_b = 0.5;
  double hex_spacing = 500.0;
  double ci_half_width = 0.15;
};

struct RunConfig {
  Paths paths;
  Seeds seeds;
  // hyperparameter grids
  std::vector<std::size_t> rf_n_trees{500}, rf_mtry{0}, rf_min_leaf{5};
  std::vector<std::size_t> gbt_n_rounds{500}, gbt_max_depth{3};
  std::vector<double> gbt_learning_rate{0.05}, gbt_subsample{0.75};
  std::vector<double> svr_C{10.0}, svr_epsilon, svr_gamma;
  std::size_t cv_folds = 5;
  double test_fraction = 0.2;
  // selection
  select::ModelSelectionParams selection;
  int year_window = 2;
  double tax_code_threshold = 0.01, tax_category_threshold = 0.05;
  // AOA
  double aoa_q_low = 0.25, aoa_q_high = 0.75, aoa_iqr_factor = 1.5;
  aoa::TrainDistance aoa_train_distance = aoa::TrainDistance::mean_pairwise;
  std::size_t aoa_clusters = aoa::kClusterCount;
  std::size_t importance_folds = 10;        // used when loo_reduced_fits is set
  std::size_t importance_reduce_factor = 10;
  // assessment
  std::vector<double> spacings{1000.0, 1500.0, 2000.0, 3000.0};
  double choropleth_spacing = 1000.0;
  double min_mapped_fraction = 0.10;
  double density_filter = 1.0 / 24000.0;  // plots per ha
  std::size_t bootstrap_reps = 1000;
  // Moran
  std::vector<double> moran_radii{250, 500, 750, 1000, 1500, 2000};
  std::size_t moran_permutations = 1000;
  // flags
  bool se_divide_sqrt_n = false;
  bool lcmap_vintage_mode = true;  // per-coverage-year landcover; false = newest vintage everywhere
  bool loo_reduced_fits = false;

  SynthConfig synth;

  learn::HyperGrid grid() const {
    return {learn::rf_grid(rf_n_trees, rf_mtry, rf_min_leaf),
            learn::gbt_grid(gbt_n_rounds, gbt_learning_rate, gbt_max_depth, gbt_subsample),
            learn::svr_grid(svr_C, svr_epsilon, svr_gamma)};
  }

  ens::LooOptions importance_loo() const {
    if (!loo_reduced_fits) return {};
    return {importance_reduce_factor, importance_folds};
  }
};

namespace detail {

class Reader {
public:
  explicit Reader(const IniFile& ini) : ini_(ini) {}

  const IniEntry* find(const std::string& section, const std::string& key) {
    seen_.insert(section + "." + key);
    const auto s = ini_.find(section);
    if (s == ini_.end()) return nullptr;
    const auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }

  [[noreturn]] static void bad(const std::string& section, const std::string& key, const IniEntry& e, const char* what) {
    throw ValidationError("config " + section + "." + key + " (line " + std::to_string(e.line) + "): " + what);
  }

  void get(const std::string& s, const std::string& k, fs::path& out) {
    if (const auto* e = find(s, k)) out = e->value;
  }
  void get(const std::string& s, const std::string& k, double& out) {
    if (const auto* e = find(s, k))
      if (!text::parse_double(e->value, out) || !std::isfinite(out)) bad(s, k, *e, "expected a finite number");
  }
  template <class Int>
    requires std::is_integral_v<Int>
  void get(const std::string& s, const std::string& k, Int& out) {
    if (const auto* e = find(s, k))
      if (!text::parse_int(e->value, out)) bad(s, k, *e, "expected an integer");
  }
  void get(const std::string& s, const std::string& k, bool& out) {
    if (const auto* e = find(s, k))
      if (!text::parse_bool(e->value, out)) bad(s, k, *e, "expected true or false");
  }
  template <class T>
  void get(const std::string& s, const std::string& k, std::vector<T>& out) {
    const auto* e = find(s, k);
    if (!e) return;
    out.clear();
    if (text::trim(e->value).empty()) return;
    for (auto part : text::split(e->value, ',')) {
      T v{};
      bool ok;
      if constexpr (std::is_floating_point_v<T>)
        ok = text::parse_double(part, v) && std::isfinite(v);
      else
        ok = text::parse_int(part, v);
      if (!ok) bad(s, k, *e, "malformed list element");
      out.push_back(v);
    }
  }

  void reject_unknown() const {
    for (const auto& [sec, keys] : ini_)
      for (const auto& [key, e] : keys)
        if (!seen_.contains(sec + "." + key))
          throw ValidationError("unknown config key " + sec + "." + key + " (line " + std::to_string(e.line) + ")");
    for (const auto& [sec, keys] : ini_)
      if (keys.empty()) {
        bool known = false;
        for (const auto& s : seen_) known = known || s.starts_with(sec + ".");
        if (!known) throw ValidationError("unknown config section [" + sec + "]");
      }
  }

private:
  const IniFile& ini_;
  std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError("config: " + what);
}

}  // namespace detail

inline void validate(const RunConfig& c) {
  using detail::require;
  auto positive = [](const auto& v) {
    for (auto x : v)
      if (!(x > 0)) return false;
    return !v.empty();
  };
  require(positive(c.rf_n_trees) && positive(c.rf_min_leaf) && !c.rf_mtry.empty(), "rf grid lists must be non-empty and positive");
  require(positive(c.gbt_n_rounds) && positive(c.gbt_max_depth) && !c.gbt_learning_rate.empty() &&
              !c.gbt_subsample.empty(), "gbt grid lists must be non-empty and positive");
  for (double v : c.gbt_learning_rate) require(v >= 0.0, "gbt learning_rate must be >= 0");
  for (double v : c.gbt_subsample) require(v > 0.0 && v <= 1.0, "gbt subsample must be in (0,1]");
  require(positive(c.svr_C), "svr C must be positive");
  for (double v : c.svr_epsilon) require(v >= 0.0, "svr epsilon must be >= 0");
  for (double v : c.svr_gamma) require(v > 0.0, "svr gamma must be > 0");
  require(c.cv_folds >= 2, "cv folds must be >= 2");
  require(c.test_fraction > 0.0 && c.test_fraction < 1.0, "test_fraction must be in (0,1)");
  require(c.selection.hull_coverage_min > 0.0 && c.selection.hull_coverage_min <= 1.0, "hull_coverage must be in (0,1]");
  require(c.selection.disturbance_threshold >= 0.0 && c.selection.disturbance_threshold < 1.0,
          "disturbance must be in [0,1)");
  require(c.selection.zero_agb_max_height >= 0.0, "zero_agb_max_height must be >= 0");
  require(c.year_window >= 1, "year_window must be >= 1");
  require(c.tax_code_threshold >= 0.0 && c.tax_code_threshold <= 1.0, "tax_code_threshold must be in [0,1]");
  require(c.tax_category_threshold >= 0.0 && c.tax_category_threshold <= 1.0, "tax_category_threshold must be in [0,1]");
  require(c.aoa_q_low >= 0.0 && c.aoa_q_low <= c.aoa_q_high && c.aoa_q_high <= 1.0, "AOA quantiles must satisfy 0 <= low <= high <= 1");
  require(c.aoa_iqr_factor >= 0.0, "AOA iqr_factor must be >= 0");
  require(c.aoa_clusters >= 1, "AOA clusters must be >= 1");
  require(c.importance_folds >= 2 && c.importance_reduce_factor >= 1, "importance folds >= 2 and reduce factor >= 1");
  require(positive(c.spacings), "assessment spacings must be positive");
  require(c.choropleth_spacing > 0.0, "choropleth spacing must be > 0");
  require(c.min_mapped_fraction >= 0.0 && c.min_mapped_fraction < 1.0, "min_mapped_fraction must be in [0,1)");
  require(c.density_filter >= 0.0, "density_filter must be >= 0");
  require(c.bootstrap_reps >= 2, "bootstrap_reps must be >= 2");
  require(positive(c.moran_radii), "Moran radii must be positive");
  require(c.moran_permutations >= 1, "Moran permutations must be >= 1");
  const auto& s = c.synth;
  require(s.n_cols > 0 && s.n_rows > 0 && s.cell_size > 0.0, "synth grid must be non-empty");
  require(s.density > 0.0 && s.plot_spacing > 0.0, "synth density and plot spacing must be > 0");
  require(s.years.size() >= 2, "synth needs at least two inventory years");
  require(!s.coverage_years.empty() && s.coverage_years.size() <= 2, "synth supports one or two coverages");
  require(s.overlap >= 0.0 && s.overlap < 1.0, "synth overlap must be in [0,1)");
  require(s.growth_rate > -1.0 && s.disturbed_fraction >= 0.0 && s.disturbed_fraction <= 1.0, "synth growth/disturbance out of range");
  require(s.hex_spacing > 0.0 && s.ci_half_width >= 0.0 && s.ci_half_width < 1.0, "synth hex settings out of range");
}

/// Relative paths in [paths] resolve against `base_dir`; input paths other
/// than data_dir and output_dir resolve against data_dir.
inline RunConfig parse_config(std::string_view content, const fs::path& base_dir = {}) {
  const auto ini = parse_ini(content);
  detail::Reader r(ini);
  RunConfig c;
  auto& p = c.paths;
  r.get("paths", "data_dir", p.data_dir);
  r.get("paths", "inventory", p.inventory);
  r.get("paths", "coverage_manifest", p.coverage_manifest);
  r.get("paths", "clouds_dir", p.clouds_dir);
  r.get("paths", "auxiliary_dir", p.auxiliary_dir);
  r.get("paths", "landcover_dir", p.landcover_dir);
  r.get("paths", "hex_estimates", p.hex_estimates);
  r.get("paths", "output_dir", p.output_dir);
  if (p.data_dir.is_relative()) p.data_dir = base_dir / p.data_dir;
  if (p.output_dir.is_relative()) p.output_dir = base_dir / p.output_dir;

  r.get("seeds", "synth", c.seeds.synth);
  r.get("seeds", "split", c.seeds.split);
  r.get("seeds", "cv", c.seeds.cv);
  r.get("seeds", "train", c.seeds.train);
  r.get("seeds", "aoa", c.seeds.aoa);
  r.get("seeds", "assess", c.seeds.assess);
  r.get("seeds", "moran", c.seeds.moran);

  r.get("rf", "n_trees", c.rf_n_trees);
  r.get("rf", "mtry", c.rf_mtry);
  r.get("rf", "min_leaf", c.rf_min_leaf);
  r.get("gbt", "n_rounds", c.gbt_n_rounds);
  r.get("gbt", "learning_rate", c.gbt_learning_rate);
  r.get("gbt", "max_depth", c.gbt_max_depth);
  r.get("gbt", "subsample", c.gbt_subsample);
  r.get("svr", "C", c.svr_C);
  r.get("svr", "epsilon", c.svr_epsilon);
  r.get("svr", "gamma", c.svr_gamma);
  r.get("cv", "folds", c.cv_folds);
  r.get("cv", "test_fraction", c.test_fraction);

  r.get("selection", "hull_coverage", c.selection.hull_coverage_min);
  r.get("selection", "disturbance", c.selection.disturbance_threshold);
  r.get("selection", "zero_agb_max_height", c.selection.zero_agb_max_height);
  r.get("selection", "year_window", c.year_window);
  r.get("selection", "tax_code_threshold", c.tax_code_threshold);
  r.get("selection", "tax_category_threshold", c.tax_category_threshold);

  r.get("aoa", "quantile_low", c.aoa_q_low);
  r.get("aoa", "quantile_high", c.aoa_q_high);
  r.get("aoa", "iqr_factor", c.aoa_iqr_factor);
  r.get("aoa", "clusters", c.aoa_clusters);
  r.get("aoa", "importance_folds", c.importance_folds);
  r.get("aoa", "importance_reduce_factor", c.importance_reduce_factor);
  if (const auto* e = r.find("aoa", "train_distance")) {
    if (e->value == "mean_pairwise")
      c.aoa_train_distance = aoa::TrainDistance::mean_pairwise;
    else if (e->value == "mean_nearest_neighbor")
      c.aoa_train_distance = aoa::TrainDistance::mean_nearest_neighbor;
    else
      detail::Reader::bad("aoa", "train_distance", *e, "expected mean_pairwise or mean_nearest_neighbor");
  }

  r.get("assess", "spacings", c.spacings);
  r.get("assess", "choropleth_spacing", c.choropleth_spacing);
  r.get("assess", "min_mapped_fraction", c.min_mapped_fraction);
  r.get("assess", "density_filter", c.density_filter);
  r.get("assess", "bootstrap_reps", c.bootstrap_reps);
  r.get("moran", "radii", c.moran_radii);
  r.get("moran", "permutations", c.moran_permutations);

  r.get("flags", "se_divide_sqrt_n", c.se_divide_sqrt_n);
  r.get("flags", "lcmap_vintage_mode", c.lcmap_vintage_mode);
  r.get("flags", "loo_reduced_fits", c.loo_reduced_fits);

  auto& s = c.synth;
  r.get("synth", "n_cols", s.n_cols);
  r.get("synth", "n_rows", s.n_rows);
  r.get("synth", "cell_size", s.cell_size);
  r.get("synth", "n_bumps", s.n_bumps);
  r.get("synth", "density", s.density);
  r.get("synth", "plot_spacing", s.plot_spacing);
  r.get("synth", "years", s.years);
  r.get("synth", "growth_rate", s.growth_rate);
  r.get("synth", "disturbed_fraction", s.disturbed_fraction);
  r.get("synth", "coverage_years", s.coverage_years);
  r.get("synth", "overlap", s.overlap);
  r.get("synth", "height_a", s.height_a);
  r.get("synth", "height_b", s.height_b);
  r.get("synth", "hex_spacing", s.hex_spacing);
  r.get("synth", "ci_half_width", s.ci_half_width);

  r.reject_unknown();
  validate(c);
  return c;
}

inline RunConfig load_config(const fs::path& path) {
  return parse_config(text::read_file(path.string()), path.parent_path());
}

}  // namespace pagb::cfg
