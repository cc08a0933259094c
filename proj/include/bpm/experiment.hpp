#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bpm/diagnostics.hpp"
#include "bpm/estimator.hpp"
#include "bpm/sampler.hpp"
#include "bpm/tuning.hpp"
#include "json.hpp"

namespace bpm {

/// A run described by one JSON document. Every CLI flag maps onto a key of
/// this document (see README); `doc` keeps the effective document after
/// overrides and defaults, and is what the config digest is taken over.
struct ExperimentConfig {
  nlohmann::json doc;

  std::string model;
  std::uint64_t seed = 1;
  std::size_t iterations = 0;
  std::size_t burnin = 0;
  std::size_t replications = 1;
  SamplerConfig sampler;
  std::optional<SamplerConfig> baseline;
  std::string output_dir = ".";
  std::string prefix = "chain";
};

/// Fill defaults into `doc` and validate. Throws ConfigError.
ExperimentConfig parse_experiment_config(nlohmann::json doc);

/// Set a dotted key ("sampler.kind") to a value given as text; the text is
/// read as JSON when it parses, otherwise kept as a string.
void set_config_value(nlohmann::json& doc, const std::string& dotted_key,
                      const std::string& text);

nlohmann::json load_json_file(const std::string& path);

struct ModelContext {
  std::unique_ptr<Estimator> estimator;
  /// V(log L-hat) when known (toy exactly, others after calibration).
  std::optional<double> sigma2;
  double varpi = 0.5;
  std::optional<BlockVarianceProfile> calibration;
  nlohmann::ordered_json notes = nlohmann::ordered_json::object();
};

/// Load or simulate the data, construct the estimator and apply static
/// calibration when the config asks for it.
ModelContext build_model(const ExperimentConfig& config);

/// Writes the dataset described by the model section's simulation spec to
/// `path` and returns summary statistics.
nlohmann::ordered_json simulate_dataset(const nlohmann::json& doc, const std::string& path);

struct ReplicationResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  ChainOutput chain;
  ChainSummary summary;
  std::string chain_path;
  std::string summary_path;
};

struct ExperimentResult {
  std::vector<ReplicationResult> runs;
  std::vector<ReplicationResult> baseline_runs;
  nlohmann::ordered_json report;
};

/// Seed of replication r.
std::uint64_t replication_seed(std::uint64_t seed, std::size_t r);

/// Runs every replication (concurrently, up to the hardware thread count),
/// writes chain CSV and summary JSON per replication, and the ratio table
/// when a baseline is configured.
ExperimentResult run_experiment(const ExperimentConfig& config, bool write_files = true);

/// Summary document of a chain file, identical to the one written by
/// run_experiment for the same chain.
nlohmann::ordered_json diagnose_chain_file(const std::string& path);

/// Comparison table: one row per method with acceptance rate and
/// IACT / CPU / TNV ratios against the baseline (baseline row = 1).
nlohmann::ordered_json ratio_table(const std::string& method_label,
                                   const std::vector<nlohmann::json>& method,
                                   const std::string& baseline_label,
                                   const std::vector<nlohmann::json>& baseline);
std::string format_ratio_table(const nlohmann::ordered_json& table);

/// Tuning table for a given varpi and rho (or G): sigma*, tau*, expected
/// acceptance, IF, CT and the per-block variance target sigma*^2 / G.
nlohmann::ordered_json tune_table(double varpi, double rho, std::optional<std::size_t> groups);
std::string format_tune_table(const nlohmann::ordered_json& table);

}  // namespace bpm
