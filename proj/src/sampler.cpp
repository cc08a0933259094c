#include "bpm/sampler.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bpm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::ipm: return "ipm";
    case SamplerKind::cpm: return "cpm";
    case SamplerKind::bpm: return "bpm";
  }
  return "unknown";
}

SamplerKind parse_sampler_kind(const std::string& text) {
  if (text == "ipm" || text == "IPM") return SamplerKind::ipm;
  if (text == "cpm" || text == "CPM") return SamplerKind::cpm;
  if (text == "bpm" || text == "BPM") return SamplerKind::bpm;
  throw ConfigError("unknown sampler kind '" + text + "' (expected ipm, cpm or bpm)");
}

std::string to_string(ProposalKind kind) {
  return kind == ProposalKind::random_walk ? "random_walk" : "prior_independence";
}

ProposalKind parse_proposal_kind(const std::string& text) {
  if (text == "random_walk" || text == "rw") return ProposalKind::random_walk;
  if (text == "prior_independence" || text == "prior") return ProposalKind::prior_independence;
  throw ConfigError("unknown proposal kind '" + text + "'");
}

void validate_sampler_config(const SamplerConfig& c) {
  if (c.kind == SamplerKind::bpm && c.num_blocks != 0 && c.num_blocks < 2) {
    throw ConfigError("BPM needs at least 2 blocks (G >= 2); use IPM for a single block");
  }
  if (c.kind == SamplerKind::cpm) {
    if (!(c.cpm_correlation >= 0.0 && c.cpm_correlation < 1.0)) {
      throw ConfigError("CPM correlation must lie in [0, 1)");
    }
    if (c.rng_kind == RngKind::rqmc) {
      throw ConfigError("CPM cannot be combined with RQMC randomness");
    }
  }
  if (!(c.proposal.target > 0.0 && c.proposal.target < 1.0)) {
    throw ConfigError("target acceptance must lie in (0, 1)");
  }
  for (double s : c.proposal.scales) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("proposal scales must be positive");
  }
  if (!(c.proposal.global_scale > 0.0)) throw ConfigError("global proposal scale must be positive");
}

std::size_t select_block(Rng& rng, std::size_t num_blocks) {
  if (num_blocks == 0) throw ConfigError("cannot select a block out of zero blocks");
  if (num_blocks == 1) return 0;
  return static_cast<std::size_t>(rng.below(num_blocks));
}

double mh_accept_prob(double lp_cur, double ll_cur, double lp_prop, double ll_prop,
                      double log_q_ratio) {
  if (std::isnan(lp_cur) || std::isnan(ll_cur) || std::isnan(lp_prop) ||
      std::isnan(ll_prop) || std::isnan(log_q_ratio)) {
    throw EstimatorError("NaN in Metropolis-Hastings ratio");
  }
  if (lp_prop == kNegInf || ll_prop == kNegInf) return 0.0;
  if (!std::isfinite(ll_cur) || !std::isfinite(lp_cur)) {
    throw EstimatorError("current state has a non-finite log target");
  }
  const double log_ratio = lp_prop + ll_prop - lp_cur - ll_cur + log_q_ratio;
  if (std::isnan(log_ratio)) throw EstimatorError("NaN in Metropolis-Hastings ratio");
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

double mh_accept_ratio(const ChainState& current, std::span<const double> proposed_theta,
                       const LogLikEstimate& proposed_loglik,
                       const std::function<double(std::span<const double>)>& log_prior,
                       double log_q_ratio) {
  return mh_accept_prob(log_prior(current.theta), current.cached.total,
                        log_prior(proposed_theta), proposed_loglik.total, log_q_ratio);
}

bool operator==(const ChainState& a, const ChainState& b) {
  return a.theta == b.theta && a.randomness == b.randomness &&
         a.cached.total == b.cached.total && a.cached.per_block == b.cached.per_block &&
         a.cached.correction == b.cached.correction && a.log_prior == b.log_prior &&
         a.iteration == b.iteration;
}

// ---------------------------------------------------------------------------

AdaptiveRandomWalk::AdaptiveRandomWalk(std::vector<double> scales, double global_scale,
                                       bool adapt, double target)
    : base_(std::move(scales)),
      log_global_(std::log(global_scale)),
      adapt_(adapt),
      target_(target),
      mean_(base_.size(), 0.0),
      m2_(base_.size(), 0.0) {}

void AdaptiveRandomWalk::propose(std::span<const double> theta, Rng& rng,
                                 std::span<double> out) const {
  const double g = std::exp(log_global_);
  const bool use_sd = count_ >= 100;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    double s = base_[j];
    if (use_sd) {
      const double sd = std::sqrt(m2_[j] / static_cast<double>(count_ - 1));
      if (sd > 0.0) s = sd;
    }
    out[j] = theta[j] + g * s * rng.normal();
  }
}

void AdaptiveRandomWalk::observe(double accept_prob, std::span<const double> theta) {
  if (!adapt_ || frozen_) return;
  ++count_;
  const double n = static_cast<double>(count_);
  for (std::size_t j = 0; j < theta.size(); ++j) {
    const double d = theta[j] - mean_[j];
    mean_[j] += d / n;
    m2_[j] += d * (theta[j] - mean_[j]);
  }
  // When the componentwise scales switch to the running sd, restart the
  // global scale at the usual 2.38/sqrt(d) so the jump does not wreck it.
  if (count_ == 100) log_global_ = std::log(2.38 / std::sqrt(static_cast<double>(theta.size())));
  const double gain = std::pow(n + 1.0, -0.6);
  log_global_ += gain * (accept_prob - target_) * 2.0;
}

double AdaptiveRandomWalk::global_scale() const { return std::exp(log_global_); }

std::vector<double> AdaptiveRandomWalk::effective_scales() const {
  std::vector<double> out(base_.size());
  const double g = global_scale();
  for (std::size_t j = 0; j < out.size(); ++j) {
    double s = base_[j];
    if (count_ >= 100) {
      const double sd = std::sqrt(m2_[j] / static_cast<double>(count_ - 1));
      if (sd > 0.0) s = sd;
    }
    out[j] = g * s;
  }
  return out;
}

// ---------------------------------------------------------------------------

Sampler::Sampler(const Estimator& estimator, SamplerConfig config)
    : estimator_(estimator),
      config_(std::move(config)),
      rng_(StreamKey{config_.seed, 0, 0, 0, kSamplerTag}) {
  const std::size_t G = estimator_.num_blocks();
  if (config_.num_blocks != 0 && config_.num_blocks != G) {
    throw ConfigError("sampler G = " + std::to_string(config_.num_blocks) +
                      " does not match the estimator's " + std::to_string(G) + " blocks");
  }
  if (config_.kind == SamplerKind::cpm) {
    if (!(config_.cpm_correlation >= 0.0 && config_.cpm_correlation <= 1.0)) {
      throw ConfigError("CPM correlation must lie in [0, 1]");
    }
    if (config_.rng_kind == RngKind::rqmc) {
      throw ConfigError("CPM cannot be combined with RQMC randomness");
    }
    for (std::size_t k = 0; k < G; ++k) {
      if (estimator_.block_layout(k).kind != BlockKind::standard_normal) {
        throw ConfigError("CPM needs standard normal auxiliary variables");
      }
    }
  }
  const std::size_t p = estimator_.num_params();
  std::vector<double> scales = config_.proposal.scales;
  if (scales.empty()) scales = estimator_.proposal_scales();
  if (scales.size() != p) {
    throw ConfigError("proposal has " + std::to_string(scales.size()) + " scales, model has " +
                      std::to_string(p) + " parameters");
  }
  if (config_.proposal.kind == ProposalKind::prior_independence &&
      !estimator_.can_sample_prior()) {
    throw ConfigError(estimator_.name() + " does not support prior-independence proposals");
  }
  walk_ = AdaptiveRandomWalk(std::move(scales), config_.proposal.global_scale,
                             config_.proposal.adapt, config_.proposal.target);
  initialise();
}

void Sampler::initialise() {
  state_.theta = estimator_.initial_theta();
  if (state_.theta.size() != estimator_.num_params()) {
    throw ConfigError("initial theta has the wrong dimension");
  }
  state_.log_prior = estimator_.log_prior(state_.theta);
  if (!std::isfinite(state_.log_prior)) {
    throw ConfigError("initial theta has zero prior density");
  }
  state_.randomness =
      BlockedRandomness(estimator_.block_layouts(), config_.rng_kind, config_.seed);
  state_.cached = evaluate(state_.theta);
  for (std::size_t attempt = 0; state_.cached.total == kNegInf; ++attempt) {
    if (attempt >= config_.init_retries) {
      throw EstimatorError("estimated likelihood is zero at the initial state after " +
                           std::to_string(config_.init_retries) + " redraws of u");
    }
    for (std::size_t k = 0; k < state_.randomness.num_blocks(); ++k) {
      state_.randomness.refresh(k);
    }
    state_.cached = evaluate(state_.theta);
  }
  state_.iteration = 0;
}

LogLikEstimate Sampler::evaluate(std::span<const double> theta) {
  ++estimator_calls_;
  LogLikEstimate e = estimator_.estimate(theta, state_.randomness);
  if (std::isnan(e.total)) throw EstimatorError(estimator_.name() + " returned NaN");
  if (e.total == std::numeric_limits<double>::infinity()) {
    throw EstimatorError(estimator_.name() + " returned +inf");
  }
  return e;
}

void Sampler::propose_theta(std::vector<double>& out, double& log_q_ratio) {
  if (config_.proposal.kind == ProposalKind::prior_independence) {
    out = estimator_.sample_prior(rng_);
    // q(theta | theta') = p(theta): the prior cancels against the proposal.
    log_q_ratio = state_.log_prior - estimator_.log_prior(out);
    return;
  }
  out.resize(state_.theta.size());
  walk_.propose(state_.theta, rng_, out);
  log_q_ratio = 0.0;
}

StepResult Sampler::reject_on_prior(std::vector<double> proposed, long block) {
  StepResult r;
  r.block = block;
  r.loglik_current = state_.cached.total;
  r.loglik_proposed = kNegInf;
  r.proposed_theta = std::move(proposed);
  ++state_.iteration;
  return r;
}

StepResult Sampler::decide(std::vector<double> proposed, double lp_prop, double log_q_ratio,
                           LogLikEstimate estimate, long block) {
  StepResult r;
  r.block = block;
  r.evaluated = true;
  r.loglik_current = state_.cached.total;
  r.loglik_proposed = estimate.total;
  r.accept_prob = mh_accept_prob(state_.log_prior, state_.cached.total, lp_prop,
                                 estimate.total, log_q_ratio);
  r.accepted = rng_.uniform() < r.accept_prob;
  if (r.accepted) {
    r.proposed_theta = proposed;
    state_.theta = std::move(proposed);
    state_.cached = std::move(estimate);
    state_.log_prior = lp_prop;
  } else {
    r.proposed_theta = std::move(proposed);
  }
  ++state_.iteration;
  return r;
}

StepResult Sampler::ipm_step() {
  std::vector<double> proposed;
  double lq = 0.0;
  propose_theta(proposed, lq);
  const double lp = estimator_.log_prior(proposed);
  if (std::isnan(lp)) throw EstimatorError("NaN log prior");
  if (lp == kNegInf) return reject_on_prior(std::move(proposed), -1);
  const std::size_t G = state_.randomness.num_blocks();
  std::vector<Block> previous;
  previous.reserve(G);
  for (std::size_t k = 0; k < G; ++k) previous.push_back(state_.randomness.refresh(k));
  auto est = evaluate(proposed);
  auto r = decide(std::move(proposed), lp, lq, std::move(est), -1);
  if (!r.accepted) {
    for (std::size_t k = 0; k < G; ++k) state_.randomness.restore(k, std::move(previous[k]));
  }
  return r;
}

StepResult Sampler::cpm_step() {
  std::vector<double> proposed;
  double lq = 0.0;
  propose_theta(proposed, lq);
  const double lp = estimator_.log_prior(proposed);
  if (std::isnan(lp)) throw EstimatorError("NaN log prior");
  if (lp == kNegInf) return reject_on_prior(std::move(proposed), -1);
  // The Crank-Nicolson kernel is reversible with respect to N(0, I), so the
  // p(u') q(u | u') / (p(u) q(u' | u)) factor is 1 and drops out of the ratio.
  auto previous = state_.randomness.cn_move(config_.cpm_correlation);
  auto est = evaluate(proposed);
  auto r = decide(std::move(proposed), lp, lq, std::move(est), -1);
  if (!r.accepted) state_.randomness.restore_all(std::move(previous));
  return r;
}

StepResult Sampler::bpm_step() {
  const std::size_t k = select_block(rng_, state_.randomness.num_blocks());
  std::vector<double> proposed;
  double lq = 0.0;
  propose_theta(proposed, lq);
  const double lp = estimator_.log_prior(proposed);
  if (std::isnan(lp)) throw EstimatorError("NaN log prior");
  if (lp == kNegInf) return reject_on_prior(std::move(proposed), static_cast<long>(k));
  Block previous = state_.randomness.refresh(k);
  auto est = evaluate(proposed);
  auto r = decide(std::move(proposed), lp, lq, std::move(est), static_cast<long>(k));
  if (!r.accepted) state_.randomness.restore(k, std::move(previous));
  return r;
}

StepResult Sampler::step() {
  switch (config_.kind) {
    case SamplerKind::ipm: return ipm_step();
    case SamplerKind::cpm: return cpm_step();
    case SamplerKind::bpm: return bpm_step();
  }
  throw std::logic_error("bad sampler kind");
}

// ---------------------------------------------------------------------------

std::vector<double> ChainOutput::column(std::size_t j) const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = draw(i, j);
  return out;
}

ChainOutput run_chain(const Estimator& estimator, const SamplerConfig& config,
                      std::size_t iterations, std::size_t burnin) {
  if (iterations <= burnin) {
    throw ConfigError("iterations (" + std::to_string(iterations) +
                      ") must exceed burn-in (" + std::to_string(burnin) + ")");
  }
  using clock = std::chrono::steady_clock;
  Sampler sampler(estimator, config);
  ChainOutput out;
  out.param_names = estimator.param_names();
  out.num_params = out.param_names.size();
  out.burnin = burnin;
  out.iterations = iterations;
  out.meta = config;
  out.timed = config.record_timing;
  const std::size_t kept = iterations - burnin;
  out.draws.reserve(kept * out.num_params);
  out.z_trace.reserve(kept);
  out.accept_flags.reserve(kept);
  out.block_trace.reserve(kept);
  out.wall_ms.reserve(kept);

  const bool has_exact = estimator.exact_loglik(sampler.state().theta).has_value();
  const bool want_z = has_exact && config.record_z;
  double exact_cur = 0.0;
  bool exact_valid = false;
  auto exact_current = [&]() {
    if (!exact_valid) {
      exact_cur = *estimator.exact_loglik(sampler.state().theta);
      exact_valid = true;
    }
    return exact_cur;
  };

  double total_seconds = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    const bool storing = it >= burnin;
    if (it == burnin) sampler.proposal().freeze();
    double z_before = 0.0;
    if (storing && want_z && config.record_proposals) z_before = -exact_current();

    const auto t0 = clock::now();
    StepResult r = sampler.step();
    const auto t1 = clock::now();
    const double secs = std::chrono::duration<double>(t1 - t0).count();

    if (!storing) {
      sampler.proposal().observe(r.accept_prob, sampler.state().theta);
      if (r.accepted) exact_valid = false;
      continue;
    }
    total_seconds += secs;
    if (want_z && config.record_proposals && r.evaluated) {
      const double exact_prop = *estimator.exact_loglik(r.proposed_theta);
      out.proposals.push_back({r.loglik_current + z_before, r.loglik_proposed - exact_prop});
      if (r.accepted) {
        exact_cur = exact_prop;
        exact_valid = true;
      }
    } else if (r.accepted) {
      exact_valid = false;
    }
    const auto& st = sampler.state();
    out.draws.insert(out.draws.end(), st.theta.begin(), st.theta.end());
    out.accept_flags.push_back(r.accepted ? 1 : 0);
    out.block_trace.push_back(r.block);
    out.wall_ms.push_back(config.record_timing ? secs * 1e3 : 0.0);
    out.z_trace.push_back(want_z ? st.cached.total - exact_current()
                                 : std::numeric_limits<double>::quiet_NaN());
  }
  out.wall_seconds = config.record_timing ? total_seconds : 0.0;
  out.estimator_calls = sampler.estimator_calls();
  out.final_scales = sampler.proposal().effective_scales();
  return out;
}

}  // namespace bpm
