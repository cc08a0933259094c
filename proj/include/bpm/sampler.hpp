#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bpm/estimator.hpp"
#include "bpm/randomness.hpp"
#include "bpm/rng.hpp"

namespace bpm {

enum class SamplerKind { ipm, cpm, bpm };
enum class ProposalKind { random_walk, prior_independence };

std::string to_string(SamplerKind kind);
SamplerKind parse_sampler_kind(const std::string& text);
std::string to_string(ProposalKind kind);
ProposalKind parse_proposal_kind(const std::string& text);

struct ProposalConfig {
  ProposalKind kind = ProposalKind::random_walk;
  /// Initial componentwise scales; empty means the estimator's defaults.
  std::vector<double> scales;
  bool adapt = true;
  double target = 0.15;
  /// Initial global multiplier on the scales.
  double global_scale = 1.0;
};

struct SamplerConfig {
  SamplerKind kind = SamplerKind::bpm;
  /// G; 0 means "whatever the estimator declares". Nonzero values must match.
  std::size_t num_blocks = 0;
  double cpm_correlation = 0.0;
  RngKind rng_kind = RngKind::mc;
  ProposalConfig proposal;
  std::uint64_t seed = 0;
  std::size_t init_retries = 10;
  /// Record (z_current, z_proposed) for every proposal (needs exact loglik).
  bool record_proposals = false;
  /// Record z = estimate - exact at every iteration when exact is available.
  bool record_z = true;
  bool record_timing = true;
};

/// Checks the user-facing rules: BPM needs G >= 2, CPM needs 0 <= rho < 1 and
/// MC randomness. Throws ConfigError.
void validate_sampler_config(const SamplerConfig& config);

/// Uniform block index in {0, ..., G - 1}. G = 1 consumes no randomness.
std::size_t select_block(Rng& rng, std::size_t num_blocks);

/// Acceptance probability on log scale inputs:
/// min(1, exp(lp_prop + ll_prop - lp_cur - ll_cur + log_q_ratio)).
/// A proposed log-likelihood or prior of -inf gives 0; NaN anywhere throws.
double mh_accept_prob(double log_prior_current, double loglik_current,
                      double log_prior_proposed, double loglik_proposed, double log_q_ratio);

struct ChainState {
  std::vector<double> theta;
  BlockedRandomness randomness;
  LogLikEstimate cached;
  double log_prior = 0.0;
  std::size_t iteration = 0;

  friend bool operator==(const ChainState& a, const ChainState& b);
};

double mh_accept_ratio(const ChainState& current, std::span<const double> proposed_theta,
                       const LogLikEstimate& proposed_loglik,
                       const std::function<double(std::span<const double>)>& log_prior,
                       double log_q_ratio);

/// Componentwise Gaussian random walk with Robbins-Monro adaptation of a
/// global log-scale toward a target acceptance probability. After 100
/// observations the componentwise scales follow the running posterior sd.
class AdaptiveRandomWalk {
 public:
  AdaptiveRandomWalk() = default;
  AdaptiveRandomWalk(std::vector<double> scales, double global_scale, bool adapt,
                     double target);

  void propose(std::span<const double> theta, Rng& rng, std::span<double> out) const;
  /// Feed the acceptance probability of the last proposal and the state after
  /// the step. No-op once frozen or when adaptation is off.
  void observe(double accept_prob, std::span<const double> theta);
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  double global_scale() const;
  std::vector<double> effective_scales() const;

 private:
  std::vector<double> base_;
  double log_global_ = 0.0;
  bool adapt_ = true;
  double target_ = 0.15;
  bool frozen_ = false;
  std::size_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

struct StepResult {
  bool accepted = false;
  /// Refreshed block, -1 for IPM/CPM.
  long block = -1;
  double accept_prob = 0.0;
  /// Log-likelihood estimates before the step and at the proposal
  /// (-inf when the proposal was rejected on its prior).
  double loglik_current = 0.0;
  double loglik_proposed = 0.0;
  bool evaluated = false;
  std::vector<double> proposed_theta;
};

/// Metropolis-Hastings on (theta, u).
class Sampler {
 public:
  Sampler(const Estimator& estimator, SamplerConfig config);

  const ChainState& state() const { return state_; }
  const SamplerConfig& config() const { return config_; }
  AdaptiveRandomWalk& proposal() { return walk_; }
  std::size_t estimator_calls() const { return estimator_calls_; }

  StepResult step();
  StepResult ipm_step();
  StepResult cpm_step();
  StepResult bpm_step();

 private:
  void initialise();
  void propose_theta(std::vector<double>& out, double& log_q_ratio);
  LogLikEstimate evaluate(std::span<const double> theta);
  // Accept/reject given a prepared proposal; returns the step result and
  // leaves randomness for the caller to restore on rejection.
  StepResult decide(std::vector<double> proposed, double lp_prop, double log_q_ratio,
                    LogLikEstimate estimate, long block);
  StepResult reject_on_prior(std::vector<double> proposed, long block);

  const Estimator& estimator_;
  SamplerConfig config_;
  ChainState state_;
  Rng rng_;
  AdaptiveRandomWalk walk_;
  std::size_t estimator_calls_ = 0;
};

struct ProposalPair {
  double z_current;
  double z_proposed;
};

/// Everything recorded by run_chain after burn-in.
struct ChainOutput {
  std::vector<std::string> param_names;
  std::size_t num_params = 0;
  /// Row-major draws, one row per stored iteration.
  std::vector<double> draws;
  std::vector<double> z_trace;
  std::vector<std::uint8_t> accept_flags;
  std::vector<long> block_trace;
  std::vector<double> wall_ms;
  double wall_seconds = 0.0;
  bool timed = true;
  std::vector<ProposalPair> proposals;
  std::size_t burnin = 0;
  std::size_t iterations = 0;
  std::size_t estimator_calls = 0;
  SamplerConfig meta;
  std::vector<double> final_scales;

  std::size_t size() const { return accept_flags.size(); }
  double draw(std::size_t i, std::size_t j) const { return draws[i * num_params + j]; }
  std::vector<double> column(std::size_t j) const;
};

/// Runs `iterations` steps, adapting the proposal during the first `burnin`
/// and storing the rest.
ChainOutput run_chain(const Estimator& estimator, const SamplerConfig& config,
                      std::size_t iterations, std::size_t burnin);

}  // namespace bpm
