// pagb: stage-by-stage AGB mapping pipeline.

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "pagb/pagb.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string hex(const unsigned char* d, unsigned n) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (unsigned i = 0; i < n; ++i) {
    s += digits[d[i] >> 4];
    s += digits[d[i] & 15];
  }
  return s;
}

std::string sha256_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw pagb::Error("cannot read " + p.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned n = 0;
  EVP_DigestFinal_ex(ctx, md, &n);
  EVP_MD_CTX_free(ctx);
  return hex(md, n);
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Input paths recorded relative to the data or output directory.
std::string display_path(const fs::path& p, const pagb::cfg::RunConfig& c) {
  const auto rel_to = [&](const fs::path& base) -> std::optional<std::string> {
    const auto b = fs::weakly_canonical(base), q = fs::weakly_canonical(p);
    const auto r = q.lexically_relative(b);
    if (r.empty() || *r.begin() == "..") return std::nullopt;
    return r.generic_string();
  };
  if (auto r = rel_to(c.paths.output_dir)) return "out:" + *r;
  if (auto r = rel_to(c.paths.data_dir)) return "data:" + *r;
  return p.generic_string();
}

json make_manifest(const std::string& stage, const fs::path& config_path, const pagb::cfg::RunConfig& c,
                   const pagb::pipe::StageResult& res, const pagb::pipe::Staging& st, const fs::path& staged_dir,
                   const std::string& started) {
  json m;
  m["stage"] = stage;
  m["config_sha256"] = sha256_file(config_path);
  json inputs = json::array();
  std::set<std::string> seen;
  for (const auto& p : res.inputs) {
    const auto name = display_path(p, c);
    if (!seen.insert(name).second) continue;
    inputs.push_back({{"path", name}, {"sha256", sha256_file(p)}});
  }
  m["inputs"] = inputs;
  json outputs = json::array();
  for (const auto& rel : st.files()) outputs.push_back({{"path", rel.generic_string()}, {"sha256", sha256_file(staged_dir / rel)}});
  m["outputs"] = outputs;
  m["module_versions"] = {{"pagb", pagb::kVersion}, {"model_container", pagb::learn::kFormatVersion}};
  json seeds = json::object();
  for (const auto& [k, v] : res.seeds) seeds[k] = v;
  m["seeds"] = seeds;
  json summary = json::object();
  for (const auto& [k, v] : res.summary) summary[k] = v;
  m["summary"] = summary;
  m["timestamps"] = {{"started", started}, {"finished", utc_now()}};
  return m;
}

int run_stage(const std::string& stage, const fs::path& config_path, bool verbose) {
  const auto cfg = pagb::cfg::load_config(config_path);
  const auto started = utc_now();
  const pagb::pipe::Logger log = [&](const std::string& msg) {
    if (verbose) std::cerr << "[" << stage << "] " << msg << "\n";
  };
  const auto root = pagb::pipe::stage_root(cfg, stage);
  fs::create_directories(root);
  pagb::pipe::Staging st(root, stage);
  const auto res = pagb::pipe::stage_function(stage)(cfg, st, log);
  const auto staged_dir = root / ".staging" / stage;
  const auto manifest = make_manifest(stage, config_path, cfg, res, st, staged_dir, started);
  st.write(fs::path("manifests") / (stage + ".json"), manifest.dump(2) + "\n");
  st.commit();
  for (const auto& [k, v] : res.summary) std::cout << stage << "." << k << " = " << v << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AGB mapping pipeline from airborne LiDAR and plot inventories"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  std::string config;
  int threads = 0;
  bool verbose = false;
  app.add_option("--config", config, "run configuration file")->required();
  app.add_option("--threads", threads, "worker threads (default: PAGB_THREADS or all cores)")->check(CLI::NonNegativeNumber);
  app.add_flag("--verbose", verbose, "progress messages on stderr");
  const std::map<std::string, std::string> help{
      {"synth", "generate a synthetic scene into the data directory"},
      {"normalize", "ground model and height normalization per coverage"},
      {"metrics", "per-pixel LiDAR metric rasters"},
      {"select", "model-plot selection, split and plot predictors"},
      {"train", "grid search and stacked ensemble"},
      {"aoa", "predictor importance, dissimilarity index and AOA masks"},
      {"predict", "prediction surfaces, mosaic, masks and class table"},
      {"assess", "multi-scale map agreement"},
      {"moran", "Moran's I of assessment residuals"},
      {"report", "collate report tables"}};
  for (const char* s : pagb::pipe::kStages) app.add_subcommand(s, help.at(s));
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    pagb::set_thread_count(threads > 0 ? static_cast<std::size_t>(threads)
                                       : pagb::threads_from_env(std::max(1u, std::thread::hardware_concurrency())));
    return run_stage(stage, config, verbose);
  } catch (const pagb::ValidationError& e) {
    std::cerr << "pagb " << stage << ": validation error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "pagb " << stage << ": " << e.what() << "\n";
    return 2;
  }
}
