#include "bpm/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "bpm/diffusion.hpp"
#include "bpm/io.hpp"
#include "bpm/panel.hpp"
#include "bpm/subsample.hpp"
#include "bpm/toy.hpp"

namespace bpm {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Returns doc[key], inserting `fallback` when absent.
template <class T>
T take(json& doc, const char* key, const T& fallback) {
  if (!doc.contains(key) || doc[key].is_null()) doc[key] = fallback;
  try {
    return doc[key].get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

json& section(json& doc, const char* key) {
  if (!doc.contains(key) || doc[key].is_null()) doc[key] = json::object();
  if (!doc[key].is_object()) throw ConfigError(std::string("config key '") + key + "' must be an object");
  return doc[key];
}

std::size_t take_size(json& doc, const char* key, std::size_t fallback) {
  if (!doc.contains(key) || doc[key].is_null()) doc[key] = fallback;
  const auto& v = doc[key];
  if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0)) {
    throw ConfigError(std::string("config key '") + key + "' must be a nonnegative integer");
  }
  return v.get<std::size_t>();
}

SamplerConfig parse_sampler(json& s, const std::string& model) {
  SamplerConfig c;
  c.kind = parse_sampler_kind(take<std::string>(s, "kind", "bpm"));
  c.num_blocks = take_size(s, "blocks", 0);
  c.cpm_correlation = take<double>(s, "cpm_correlation", c.kind == SamplerKind::cpm ? 0.9999 : 0.0);
  c.rng_kind = parse_rng_kind(take<std::string>(s, "rng", "mc"));
  c.init_retries = take_size(s, "init_retries", 10);
  c.record_proposals = take<bool>(s, "record_proposals", false);
  c.record_z = take<bool>(s, "record_z", true);
  auto& p = section(s, "proposal");
  c.proposal.kind = parse_proposal_kind(
      take<std::string>(p, "kind", model == "toy" ? "prior_independence" : "random_walk"));
  c.proposal.scales = take<std::vector<double>>(p, "scales", {});
  c.proposal.adapt = take<bool>(p, "adapt", true);
  c.proposal.target = take<double>(p, "target", 0.15);
  c.proposal.global_scale = take<double>(p, "global_scale", 1.0);
  return c;
}

std::string label(const SamplerConfig& c) {
  std::string s = to_string(c.kind);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::toupper(ch); });
  if (c.rng_kind == RngKind::rqmc) s += "-RQMC";
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  return in;
}

// ---- data ----------------------------------------------------------------

PanelDataset panel_from_spec(json& sim) {
  const std::size_t panels = take_size(sim, "panels", 200);
  const std::size_t obs = take_size(sim, "obs_per_panel", 5);
  PanelTruth truth;
  truth.beta = take<std::vector<double>>(sim, "beta", {-0.3, 0.5, 0.25});
  truth.rho2 = take<double>(sim, "rho2", 0.5);
  std::vector<CovariateKind> cov;
  for (const auto& s : take<std::vector<std::string>>(sim, "covariates", {"binary", "uniform"})) {
    cov.push_back(parse_covariate_kind(s));
  }
  return simulate_panel_data(panels, obs, truth, cov, take<std::uint64_t>(sim, "seed", 1));
}

std::vector<double> series_from_spec(json& sim) {
  const auto model = parse_ar1_model(take<std::string>(sim, "model", "m1"));
  const auto theta = take<std::vector<double>>(sim, "theta", {0.3, 0.6});
  if (theta.size() != 2) throw ConfigError("subsample.simulate.theta needs 2 entries");
  return simulate_ar1_student_t(model, theta[0], theta[1], take<double>(sim, "nu", 5.0),
                                take_size(sim, "length", 10000), take<std::uint64_t>(sim, "seed", 1));
}

SimulatedPath diffusion_from_spec(json& sim) {
  const auto kind = parse_diffusion_kind(take<std::string>(sim, "kind", "cir"));
  DiffusionParams p{take<double>(sim, "alpha", 0.5), take<double>(sim, "beta", 0.2),
                    take<double>(sim, "sigma", 0.15)};
  return simulate_diffusion(kind, p, take_size(sim, "intervals", 200), take<double>(sim, "delta", 1.0),
                            take<double>(sim, "x0", p.alpha), take<std::uint64_t>(sim, "seed", 1));
}

bool has_data_path(const json& sec) { return sec.contains("data") && sec["data"].is_string(); }

void require_data_source(json& sec) {
  if (!has_data_path(sec)) section(sec, "simulate");
}

double calibration_varpi(RngKind kind) { return kind == RngKind::rqmc ? kVarpiRqmc : kVarpiMc; }

}  // namespace

// ---------------------------------------------------------------------------

void set_config_value(json& doc, const std::string& dotted_key, const std::string& text) {
  if (dotted_key.empty()) throw ConfigError("empty config key");
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &doc;
  std::stringstream ss(dotted_key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    auto& next = (*node)[parts[i]];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("config key '" + parts[i] + "' is not an object");
    node = &next;
  }
  (*node)[parts.back()] = value;
}

json load_json_file(const std::string& path) {
  auto in = open_input(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(0, path + ": " + e.what());
  }
}

ExperimentConfig parse_experiment_config(json doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  c.model = take<std::string>(doc, "model", "");
  if (c.model != "toy" && c.model != "panel" && c.model != "subsample" && c.model != "diffusion") {
    throw ConfigError("model must be one of toy, panel, subsample, diffusion (got '" + c.model + "')");
  }
  c.seed = take<std::uint64_t>(doc, "seed", 1);
  c.iterations = take_size(doc, "iterations", 10000);
  c.burnin = take_size(doc, "burnin", c.iterations / 10);
  if (c.iterations <= c.burnin) {
    throw ConfigError("iterations (" + std::to_string(c.iterations) + ") must exceed burnin (" +
                      std::to_string(c.burnin) + ")");
  }
  c.replications = take_size(doc, "replications", 1);
  if (c.replications == 0) throw ConfigError("replications must be at least 1");
  const bool timing = take<bool>(doc, "record_timing", true);

  auto& s = section(doc, "sampler");
  c.sampler = parse_sampler(s, c.model);
  c.sampler.record_timing = timing;
  validate_sampler_config(c.sampler);

  auto& b = section(doc, "baseline");
  if (take<bool>(b, "enabled", false)) {
    json merged = s;
    for (auto it = b.begin(); it != b.end(); ++it) {
      if (it.key() != "enabled") merged[it.key()] = it.value();
    }
    if (!b.contains("kind")) merged["kind"] = "bpm";
    if (!b.contains("cpm_correlation")) merged.erase("cpm_correlation");
    c.baseline = parse_sampler(merged, c.model);
    c.baseline->record_timing = timing;
    validate_sampler_config(*c.baseline);
  }

  auto& out = section(doc, "output");
  c.output_dir = take<std::string>(out, "dir", ".");
  c.prefix = take<std::string>(out, "prefix", "chain");
  if (c.prefix.empty()) throw ConfigError("output.prefix must not be empty");

  auto& cal = section(doc, "calibration");
  take<bool>(cal, "enabled", false);

  auto& m = section(doc, c.model.c_str());
  if (c.model == "toy") {
    take_size(m, "blocks", 100);
    take<double>(m, "block_sigma2", 2.34);
  } else {
    require_data_source(m);
  }
  c.doc = std::move(doc);
  return c;
}

// ---------------------------------------------------------------------------

ModelContext build_model(const ExperimentConfig& config) {
  json doc = config.doc;
  json& m = section(doc, config.model.c_str());
  ModelContext ctx;
  const std::size_t override_g = config.sampler.num_blocks;
  ctx.varpi = calibration_varpi(config.sampler.rng_kind);

  if (config.model == "toy") {
    const std::size_t G = override_g ? override_g : take_size(m, "blocks", 100);
    const double s2 = take<double>(m, "block_sigma2", 2.34);
    if (G == 0) throw ConfigError("toy.blocks must be positive");
    if (!(s2 >= 0.0)) throw ConfigError("toy.block_sigma2 must be nonnegative");
    auto toy = std::make_unique<ToyEstimator>(G, s2);
    ctx.sigma2 = toy->total_sigma2();
    ctx.estimator = std::move(toy);
  } else if (config.model == "panel") {
    PanelDataset data;
    if (has_data_path(m)) {
      auto in = open_input(m["data"].get<std::string>());
      data = read_panel_csv(in);
    } else {
      data = panel_from_spec(section(m, "simulate"));
    }
    PanelOptions o;
    o.groups = override_g ? override_g : take_size(m, "groups", 100);
    o.samples = take_size(m, "samples", 16);
    o.adaptive = take<bool>(m, "adaptive", false);
    o.unit_variance_target = take<double>(m, "unit_variance_target", 1.0 / 200.0);
    o.max_samples = take_size(m, "max_samples", 4096);
    o.pilot_samples = take_size(m, "pilot_samples", 32);
    o.initial_theta = take<std::vector<double>>(m, "initial_theta", {});
    ctx.estimator = std::make_unique<PanelEstimator>(std::move(data), o);
  } else if (config.model == "subsample") {
    std::vector<double> y;
    if (has_data_path(m)) {
      auto in = open_input(m["data"].get<std::string>());
      y = read_series_csv(in);
    } else {
      y = series_from_spec(section(m, "simulate"));
    }
    SubsampleOptions o;
    o.model = parse_ar1_model(take<std::string>(m, "model", "m1"));
    o.nu = take<double>(m, "nu", 5.0);
    o.gaussian = take<bool>(m, "gaussian", false);
    o.groups = override_g ? override_g : take_size(m, "groups", 100);
    o.subsample_size = take_size(m, "subsample_size", 1000);
    o.clusters = take_size(m, "clusters", 0);
    o.cluster_seed = take<std::uint64_t>(m, "cluster_seed", 1);
    o.copula_indices = take<bool>(m, "copula_indices", false);
    o.full_data = take<bool>(m, "full_data", false);
    o.initial_theta = take<std::vector<double>>(m, "initial_theta", {});
    ctx.estimator = std::make_unique<SubsampleEstimator>(std::move(y), o);
  } else {
    DiffusionData data;
    if (has_data_path(m)) {
      auto in = open_input(m["data"].get<std::string>());
      data = read_diffusion_csv(in);
    } else {
      auto sim = diffusion_from_spec(section(m, "simulate"));
      if (sim.feller_violated) ctx.notes["feller"] = "simulated parameters violate 2 beta alpha > sigma^2";
      data = std::move(sim.data);
    }
    DiffusionOptions o;
    o.kind = parse_diffusion_kind(take<std::string>(m, "kind", "cir"));
    o.euler_steps = take_size(m, "euler_steps", 20);
    o.paths = take_size(m, "paths", 2);
    o.groups = override_g ? override_g : take_size(m, "groups", 67);
    o.initial_theta = take<std::vector<double>>(m, "initial_theta", {});
    ctx.estimator = std::make_unique<DiffusionEstimator>(std::move(data), o);
  }

  json& cal = section(doc, "calibration");
  if (take<bool>(cal, "enabled", false)) {
    auto& est = *ctx.estimator;
    if (!est.supports_calibration()) {
      throw ConfigError(config.model + " has no per-block sample size to calibrate");
    }
    const std::size_t G = est.num_blocks();
    double target;
    if (cal.contains("block_variance") && !cal["block_variance"].is_null()) {
      target = cal["block_variance"].get<double>();
    } else if (config.sampler.kind == SamplerKind::cpm) {
      throw ConfigError("set calibration.block_variance explicitly for CPM");
    } else if (config.sampler.kind == SamplerKind::ipm) {
      const auto opt = minimize_ct(ctx.varpi, 0.0);
      target = opt.sigma * opt.sigma / static_cast<double>(G);
    } else {
      target = recommended_block_variance(ctx.varpi, G);
    }
    auto theta = take<std::vector<double>>(cal, "theta", est.initial_theta());
    CalibrationOptions co;
    co.initial_samples = take_size(cal, "initial_samples", 4);
    co.max_samples = take_size(cal, "max_samples", 1 << 16);
    co.rng_kind = config.sampler.rng_kind;
    co.seed = derive_seed(config.seed, 0xca1b);
    const auto profile = calibrate_block_samples(est, theta, target, co);
    ctx.sigma2 = profile.total_variance;
    ctx.notes["calibration"] = {{"block_variance_target", target},
                                {"total_variance", profile.total_variance},
                                {"all_met", profile.all_met},
                                {"samples", profile.samples}};
    if (!profile.all_met) ctx.notes["calibration_warning"] = "variance target not met in some blocks at the sample cap";
    ctx.calibration = profile;
  }
  return ctx;
}

ordered_json simulate_dataset(const json& doc_in, const std::string& path) {
  json doc = doc_in;
  const auto model = take<std::string>(doc, "model", "");
  if (model == "toy") throw ConfigError("the toy model has no dataset to simulate");
  if (model != "panel" && model != "subsample" && model != "diffusion") {
    throw ConfigError("model must be one of panel, subsample, diffusion for simulate");
  }
  json& sim = section(section(doc, model.c_str()), "simulate");
  std::ostringstream text;
  ordered_json stats;
  stats["model"] = model;
  stats["path"] = path;
  if (model == "panel") {
    const auto data = panel_from_spec(sim);
    write_panel_csv(data, text);
    double sum = 0.0;
    for (const auto& p : data.panels) for (int v : p.y) sum += v;
    stats["rows"] = data.num_observations();
    stats["panels"] = data.num_panels();
    stats["mean_y"] = sum / static_cast<double>(data.num_observations());
  } else if (model == "subsample") {
    const auto y = series_from_spec(sim);
    write_series_csv(y, text);
    std::vector<double> a(y.begin(), y.end() - 1), b(y.begin() + 1, y.end());
    stats["rows"] = y.size();
    stats["mean"] = sample_mean(y);
    stats["sd"] = sample_sd(y);
    stats["lag1_correlation"] = sample_correlation(a, b);
  } else {
    const auto s = diffusion_from_spec(sim);
    write_diffusion_csv(s.data, text);
    stats["rows"] = s.data.x.size();
    stats["mean"] = sample_mean(s.data.x);
    stats["feller_violated"] = s.feller_violated;
    stats["reflections"] = s.reflections;
  }
  const fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  write_text(p, text.str());
  return stats;
}

std::uint64_t replication_seed(std::uint64_t seed, std::size_t r) { return derive_seed(seed, r); }

namespace {

// Digest input: where files go and whether the clock is read do not change
// the chain.
std::string digest_text(const json& doc) {
  json d = doc;
  d.erase("output");
  d.erase("record_timing");
  return d.dump();
}

std::vector<ReplicationResult> run_replications(const ExperimentConfig& config,
                                                const ModelContext& ctx, const SamplerConfig& base,
                                                const std::string& tag, bool write_files) {
  const std::size_t R = config.replications;
  std::vector<ReplicationResult> results(R);
  std::vector<std::exception_ptr> errors(R);
  const std::string doc_text = digest_text(config.doc);
  const fs::path dir(config.output_dir);
  if (write_files) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  }

  auto work = [&](std::size_t r) {
    auto& res = results[r];
    res.index = r;
    res.seed = replication_seed(config.seed, r);
    SamplerConfig sc = base;
    sc.seed = res.seed;
    sc.num_blocks = ctx.estimator->num_blocks();
    if (sc.kind == SamplerKind::bpm) validate_sampler_config(sc);
    res.chain = run_chain(*ctx.estimator, sc, config.iterations, config.burnin);
    ChainFileInfo info;
    info.model = config.model;
    info.sigma2 = ctx.sigma2;
    info.varpi = ctx.varpi;
    info.config_digest = digest_hex(doc_text + "#" + tag + "#r" + std::to_string(r));
    res.summary = summarize(res.chain, summary_options(info));
    if (write_files) {
      const std::string stem = config.prefix + tag + "_r" + std::to_string(r);
      res.chain_path = (dir / (stem + ".csv")).string();
      res.summary_path = (dir / (stem + ".summary.json")).string();
      std::ostringstream csv;
      write_chain_csv(res.chain, info, csv);
      write_text(res.chain_path, csv.str());
      write_text(res.summary_path, summary_to_json(res.summary).dump(2) + "\n");
    }
  };

  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(R, std::thread::hardware_concurrency()));
  std::atomic<std::size_t> next{0};
  auto loop = [&]() {
    for (std::size_t r; (r = next++) < R;) {
      try {
        work(r);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    loop();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(loop);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

ordered_json run_entry(const ReplicationResult& r) {
  ordered_json j;
  j["replication"] = r.index;
  j["seed"] = r.seed;
  if (!r.chain_path.empty()) {
    j["chain"] = r.chain_path;
    j["summary"] = r.summary_path;
  }
  j["acceptance_rate"] = r.summary.acceptance_rate;
  const auto s = summary_to_json(r.summary);
  j["mean_iact"] = s["mean_iact"];
  j["cpu_seconds"] = s["cpu_seconds"];
  j["tnv"] = s["tnv"];
  j["posterior_mean"] = s["posterior_mean"];
  return j;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, bool write_files) {
  ModelContext ctx = build_model(config);
  ExperimentResult out;
  out.runs = run_replications(config, ctx, config.sampler, "", write_files);
  ordered_json report;
  report["model"] = config.model;
  report["sampler"] = label(config.sampler);
  report["config_digest"] = digest_hex(digest_text(config.doc));
  report["blocks"] = ctx.estimator->num_blocks();
  if (ctx.sigma2) report["sigma2"] = *ctx.sigma2;
  if (!ctx.notes.empty()) report["notes"] = ctx.notes;
  report["runs"] = ordered_json::array();
  for (const auto& r : out.runs) report["runs"].push_back(run_entry(r));

  if (config.baseline) {
    out.baseline_runs = run_replications(config, ctx, *config.baseline, "_baseline", write_files);
    report["baseline"] = label(*config.baseline);
    report["baseline_runs"] = ordered_json::array();
    for (const auto& r : out.baseline_runs) report["baseline_runs"].push_back(run_entry(r));
    std::vector<json> a, b;
    for (const auto& r : out.runs) a.push_back(json::parse(summary_to_json(r.summary).dump()));
    for (const auto& r : out.baseline_runs) b.push_back(json::parse(summary_to_json(r.summary).dump()));
    auto table = ratio_table(label(config.sampler), a, label(*config.baseline), b);
    report["ratio_table"] = table;
    if (write_files) {
      const fs::path p = fs::path(config.output_dir) / (config.prefix + "_ratios.json");
      write_text(p, table.dump(2) + "\n");
      report["ratio_table_path"] = p.string();
    }
  }
  out.report = std::move(report);
  return out;
}

ordered_json diagnose_chain_file(const std::string& path) {
  auto in = open_input(path);
  const auto file = read_chain_csv(in);
  return summary_to_json(summarize(file.chain, summary_options(file.info)));
}

ordered_json ratio_table(const std::string& method_label, const std::vector<json>& method,
                         const std::string& baseline_label, const std::vector<json>& baseline) {
  if (method.empty() || baseline.empty()) throw ConfigError("ratio table needs summaries on both sides");
  auto mean_of = [](const std::vector<json>& v, const char* key) -> std::optional<double> {
    double s = 0.0;
    for (const auto& j : v) {
      if (!j.contains(key) || !j[key].is_number()) return std::nullopt;
      s += j[key].get<double>();
    }
    return s / static_cast<double>(v.size());
  };
  auto opt = [](std::optional<double> v) -> ordered_json {
    if (v) return *v;
    return nullptr;
  };
  auto div = [](std::optional<double> a, std::optional<double> b) -> std::optional<double> {
    if (!a || !b || *b == 0.0) return std::nullopt;
    return *a / *b;
  };
  ordered_json t;
  t["baseline"] = baseline_label;
  t["replications"] = std::min(method.size(), baseline.size());
  ordered_json rows = ordered_json::array();
  const char* keys[] = {"mean_iact", "cpu_seconds", "tnv"};
  const char* names[] = {"iact_ratio", "cpu_ratio", "tnv_ratio"};
  {
    ordered_json row;
    row["method"] = method_label;
    row["acceptance_rate"] = opt(mean_of(method, "acceptance_rate"));
    for (int i = 0; i < 3; ++i) row[names[i]] = opt(div(mean_of(method, keys[i]), mean_of(baseline, keys[i])));
    rows.push_back(row);
  }
  {
    ordered_json row;
    row["method"] = baseline_label;
    row["acceptance_rate"] = opt(mean_of(baseline, "acceptance_rate"));
    for (int i = 0; i < 3; ++i) row[names[i]] = mean_of(baseline, keys[i]) ? ordered_json(1.0) : ordered_json(nullptr);
    rows.push_back(row);
  }
  t["rows"] = rows;
  ordered_json per = ordered_json::array();
  for (std::size_t r = 0; r < std::min(method.size(), baseline.size()); ++r) {
    const auto rr = ratio_row(method[r], baseline[r]);
    per.push_back({{"replication", r},
                   {"iact_ratio", opt(rr.iact_ratio)},
                   {"cpu_ratio", opt(rr.cpu_ratio)},
                   {"tnv_ratio", opt(rr.tnv_ratio)}});
  }
  t["per_replication"] = per;
  return t;
}

std::string format_ratio_table(const ordered_json& table) {
  std::ostringstream os;
  auto cell = [](const ordered_json& v) {
    if (!v.is_number()) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v.get<double>());
    return std::string(buf);
  };
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %16s %10s %10s %10s\n", "Methods", "Acceptance rate",
                "IACT ratio", "CPU ratio", "TNV ratio");
  os << line;
  for (const auto& row : table["rows"]) {
    std::snprintf(line, sizeof line, "%-10s %16s %10s %10s %10s\n",
                  row["method"].get<std::string>().c_str(), cell(row["acceptance_rate"]).c_str(),
                  cell(row["iact_ratio"]).c_str(), cell(row["cpu_ratio"]).c_str(),
                  cell(row["tnv_ratio"]).c_str());
    os << line;
  }
  return os.str();
}

ordered_json tune_table(double varpi, double rho, std::optional<std::size_t> groups) {
  if (!(varpi > 0.0)) throw ConfigError("varpi must be positive");
  if (groups) {
    if (*groups == 0) throw ConfigError("groups must be positive");
    rho = block_correlation(*groups);
  }
  if (!(rho >= 0.0)) throw ConfigError("rho must be nonnegative");
  if (!(rho < 1.0)) throw ConfigError("rho must be below 1");
  const auto opt = minimize_ct(varpi, rho);
  ordered_json t;
  t["varpi"] = varpi;
  t["rho"] = rho;
  if (groups) t["groups"] = *groups;
  t["sigma"] = opt.sigma;
  t["sigma2"] = opt.sigma * opt.sigma;
  t["tau"] = opt.tau;
  t["acceptance"] = unconditional_accept(opt.sigma, rho);
  t["inefficiency"] = opt.inefficiency;
  t["ct"] = opt.ct;
  if (groups) t["block_variance_target"] = opt.sigma * opt.sigma / static_cast<double>(*groups);
  ordered_json warnings = ordered_json::array();
  if (rho < 0.5) {
    warnings.push_back("rho = " + std::to_string(rho) +
                       " is far from the rho -> 1 regime the tau-scaling targets assume; value reported raw");
  }
  if (opt.warning) warnings.push_back(opt.note);
  t["warnings"] = warnings;
  return t;
}

std::string format_tune_table(const ordered_json& t) {
  std::ostringstream os;
  char line[160];
  auto row = [&](const char* name, const ordered_json& v) {
    if (v.is_number_integer()) {
      std::snprintf(line, sizeof line, "%-22s %lld\n", name, v.get<long long>());
    } else if (v.is_number()) {
      std::snprintf(line, sizeof line, "%-22s %.4f\n", name, v.get<double>());
    } else {
      return;
    }
    os << line;
  };
  row("varpi", t["varpi"]);
  row("rho", t["rho"]);
  if (t.contains("groups")) row("G", t["groups"]);
  row("sigma*", t["sigma"]);
  row("sigma*^2", t["sigma2"]);
  row("tau*", t["tau"]);
  row("expected acceptance", t["acceptance"]);
  row("IF", t["inefficiency"]);
  row("CT", t["ct"]);
  if (t.contains("block_variance_target")) row("per-block target", t["block_variance_target"]);
  for (const auto& w : t["warnings"]) os << "warning: " << w.get<std::string>() << '\n';
  return os.str();
}

}  // namespace bpm
