// Command-line front end: simulate | tune | run | diagnose.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bpm/diagnostics.hpp"
#include "bpm/experiment.hpp"
#include "bpm/io.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;

int fail(const std::string& type, const std::string& message, int code,
         std::optional<std::size_t> line = std::nullopt) {
  nlohmann::ordered_json err;
  err["error"]["type"] = type;
  err["error"]["message"] = message;
  if (line) err["error"]["line"] = *line;
  std::cerr << err.dump() << std::endl;
  return code;
}

void apply_sets(json& doc, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw bpm::ConfigError("--set expects key=value, got '" + s + "'");
    bpm::set_config_value(doc, s.substr(0, eq), s.substr(eq + 1));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Block pseudo-marginal samplers: simulate data, tune, run and diagnose chains"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Write a dataset from the model's simulation spec");
  std::string sim_config, sim_out;
  std::optional<std::uint64_t> sim_seed;
  std::vector<std::string> sim_sets;
  sim->add_option("-c,--config", sim_config, "Experiment config JSON")->required();
  sim->add_option("-o,--out", sim_out, "Output CSV (default: the model's data path)");
  sim->add_option("--seed", sim_seed, "Simulation seed (<model>.simulate.seed)");
  sim->add_option("--set", sim_sets, "Override a config key: key.path=value");

  // tune
  auto* tune = app.add_subcommand("tune", "Optimal sigma, acceptance and per-block variance target");
  double varpi = 0.5;
  std::optional<double> rho;
  std::optional<std::size_t> groups;
  std::string tune_rng;
  bool plain = false;
  tune->add_option("--varpi", varpi, "Rate exponent (0.5 MC, 1.5 RQMC)");
  tune->add_option("--rng", tune_rng, "mc or rqmc; sets varpi")->check(CLI::IsMember({"mc", "rqmc"}));
  auto* rho_opt = tune->add_option("--rho", rho, "Correlation of successive errors");
  tune->add_option("-G,--groups", groups, "Number of blocks (rho = 1 - 1/G)")->excludes(rho_opt);
  tune->add_flag("--plain", plain, "Plain text instead of JSON");

  // run
  auto* run = app.add_subcommand("run", "Run the configured experiment");
  std::string run_config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iterations, burnin, replications, blocks;
  std::optional<std::string> sampler, rng, out_dir, prefix, baseline_kind;
  std::optional<double> cpm_rho, target;
  bool with_baseline = false, no_timing = false, print_table = false;
  std::vector<std::string> run_sets;
  run->add_option("-c,--config", run_config, "Experiment config JSON")->required();
  run->add_option("--seed", seed, "seed");
  run->add_option("--iterations", iterations, "iterations");
  run->add_option("--burnin", burnin, "burnin");
  run->add_option("--replications", replications, "replications");
  run->add_option("--sampler", sampler, "sampler.kind (ipm, cpm, bpm)");
  run->add_option("--blocks", blocks, "sampler.blocks (G)");
  run->add_option("--rng", rng, "sampler.rng (mc, rqmc)");
  run->add_option("--cpm-correlation", cpm_rho, "sampler.cpm_correlation");
  run->add_option("--target", target, "sampler.proposal.target");
  run->add_option("--output-dir", out_dir, "output.dir");
  run->add_option("--prefix", prefix, "output.prefix");
  run->add_flag("--baseline", with_baseline, "baseline.enabled: also run the baseline sampler");
  run->add_option("--baseline-kind", baseline_kind, "baseline.kind (default bpm)");
  run->add_flag("--no-timing", no_timing, "record_timing = false (wall_ms written as 0)");
  run->add_flag("--table", print_table, "Print the ratio table as text instead of the JSON report");
  run->add_option("--set", run_sets, "Override a config key: key.path=value");

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "Summary JSON of a chain CSV");
  std::string chain_path, diag_out;
  diag->add_option("chain", chain_path, "Chain CSV")->required();
  diag->add_option("-o,--out", diag_out, "Also write the summary here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail("usage", e.what(), 2);
  }

  try {
    if (*sim) {
      json doc = bpm::load_json_file(sim_config);
      apply_sets(doc, sim_sets);
      const std::string model = doc.value("model", "");
      if (sim_seed) doc[model]["simulate"]["seed"] = *sim_seed;
      if (sim_out.empty()) {
        if (doc.contains(model) && doc[model].contains("data") && doc[model]["data"].is_string()) {
          sim_out = doc[model]["data"].get<std::string>();
        } else {
          throw bpm::ConfigError("no output path: pass --out or set " + model + ".data");
        }
      }
      std::cout << bpm::simulate_dataset(doc, sim_out).dump(2) << std::endl;
    } else if (*tune) {
      if (tune_rng == "mc") varpi = bpm::kVarpiMc;
      if (tune_rng == "rqmc") varpi = bpm::kVarpiRqmc;
      if (!rho && !groups) groups = 100;
      const auto table = bpm::tune_table(varpi, rho.value_or(0.0), groups);
      if (plain) {
        std::cout << bpm::format_tune_table(table);
      } else {
        std::cout << table.dump(2) << std::endl;
      }
    } else if (*run) {
      json doc = bpm::load_json_file(run_config);
      apply_sets(doc, run_sets);
      if (seed) doc["seed"] = *seed;
      if (iterations) doc["iterations"] = *iterations;
      if (burnin) doc["burnin"] = *burnin;
      if (replications) doc["replications"] = *replications;
      if (sampler) doc["sampler"]["kind"] = *sampler;
      if (blocks) doc["sampler"]["blocks"] = *blocks;
      if (rng) doc["sampler"]["rng"] = *rng;
      if (cpm_rho) doc["sampler"]["cpm_correlation"] = *cpm_rho;
      if (target) doc["sampler"]["proposal"]["target"] = *target;
      if (out_dir) doc["output"]["dir"] = *out_dir;
      if (prefix) doc["output"]["prefix"] = *prefix;
      if (with_baseline) doc["baseline"]["enabled"] = true;
      if (baseline_kind) doc["baseline"]["kind"] = *baseline_kind;
      if (no_timing) doc["record_timing"] = false;
      const auto config = bpm::parse_experiment_config(std::move(doc));
      const auto result = bpm::run_experiment(config);
      if (print_table && result.report.contains("ratio_table")) {
        std::cout << bpm::format_ratio_table(result.report["ratio_table"]);
      } else {
        std::cout << result.report.dump(2) << std::endl;
      }
    } else if (*diag) {
      const auto summary = bpm::diagnose_chain_file(chain_path);
      const std::string text = summary.dump(2) + "\n";
      if (!diag_out.empty()) {
        std::FILE* f = std::fopen(diag_out.c_str(), "wb");
        if (!f) throw bpm::IoError("cannot write " + diag_out);
        std::fwrite(text.data(), 1, text.size(), f);
        std::fclose(f);
      }
      std::cout << text;
    }
  } catch (const bpm::ParseError& e) {
    return fail("parse_error", e.what(), 3, e.line());
  } catch (const bpm::ConfigError& e) {
    return fail("config_error", e.what(), 2);
  } catch (const bpm::IoError& e) {
    return fail("io_error", e.what(), 4);
  } catch (const bpm::EstimatorError& e) {
    return fail("estimator_error", e.what(), 5);
  } catch (const bpm::DiagnosticError& e) {
    return fail("diagnostic_error", e.what(), 6);
  } catch (const nlohmann::json::exception& e) {
    return fail("config_error", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("error", e.what(), 1);
  }
  return 0;
}
