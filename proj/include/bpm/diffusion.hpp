#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "bpm/estimator.hpp"

namespace bpm {

/// CIR: dX = beta (alpha - X) dt + sigma sqrt(X) dW.
/// OU surrogate: same drift, constant diffusion sigma (closed-form Euler
/// transition, used to check the estimator).
enum class DiffusionKind { cir, ou };
DiffusionKind parse_diffusion_kind(const std::string& text);
std::string to_string(DiffusionKind kind);

/// Lower bound used when a CIR state would leave (0, inf).
inline constexpr double kCirFloor = 1e-8;

struct DiffusionParams {
  double alpha = 0.5;
  double beta = 0.5;
  double sigma = 0.1;
};

struct DiffusionData {
  /// x_0..x_n observed every `delta` time units.
  std::vector<double> x;
  double delta = 1.0;

  std::size_t intervals() const { return x.empty() ? 0 : x.size() - 1; }
};

struct SimulatedPath {
  DiffusionData data;
  /// 2 beta alpha > sigma^2 fails for CIR.
  bool feller_violated = false;
  std::size_t reflections = 0;
};

/// Fine Euler simulation with step delta / 1000, reflected at kCirFloor for
/// CIR, recorded every delta.
SimulatedPath simulate_diffusion(DiffusionKind kind, const DiffusionParams& theta,
                                 std::size_t intervals, double delta, double x0,
                                 std::uint64_t seed);
SimulatedPath simulate_cir(const DiffusionParams& theta, std::size_t intervals, double delta,
                           double x0, std::uint64_t seed);

/// CSV with header t,x.
void write_diffusion_csv(const DiffusionData& data, std::ostream& out);
DiffusionData read_diffusion_csv(std::istream& in);

struct BridgeSample {
  /// z_1..z_{M-1}.
  std::vector<double> path;
  /// log g(path): density of the draws under the bridge proposal.
  double log_g = 0.0;
  std::size_t reflections = 0;
};

/// Modified diffusion bridge: for m = 0..M-2,
/// z_{m+1} ~ N(z_m + (x_next - z_m)/(M - m), h (M - m - 1)/(M - m) Sigma(z_m)),
/// with h = delta / M and Sigma the squared diffusion coefficient. Consumes
/// M - 1 normals.
BridgeSample bridge_sample_path(double x_now, double x_next, const DiffusionParams& theta,
                                DiffusionKind kind, double delta, std::size_t euler_steps,
                                std::span<const double> normals);

/// log of prod_m N(z_{m+1}; z_m + h mu(z_m), h Sigma(z_m)) along
/// x_now, path..., x_next.
double euler_path_logdensity(double x_now, std::span<const double> path, double x_next,
                             const DiffusionParams& theta, DiffusionKind kind, double delta,
                             std::size_t euler_steps);

/// Exact log-density of the M-step Euler scheme for the OU surrogate.
double ou_euler_logpdf(double x_now, double x_next, const DiffusionParams& theta, double delta,
                       std::size_t euler_steps);
/// Exact OU transition log-density over delta.
double ou_transition_logpdf(double x_now, double x_next, const DiffusionParams& theta,
                            double delta);

struct DiffusionOptions {
  DiffusionKind kind = DiffusionKind::cir;
  std::size_t euler_steps = 20;
  std::size_t paths = 2;
  std::size_t groups = 67;
  std::vector<double> initial_theta;
};

/// Importance-sampling estimate of the Euler working likelihood with the
/// bridge proposal. theta = (alpha, beta, sigma).
class DiffusionEstimator : public Estimator {
 public:
  DiffusionEstimator(DiffusionData data, DiffusionOptions options);

  std::string name() const override { return "diffusion"; }
  std::vector<std::string> param_names() const override { return {"alpha", "beta", "sigma"}; }
  std::size_t num_blocks() const override { return groups_.size(); }
  BlockLayout block_layout(std::size_t k) const override;

  double log_prior(std::span<const double> theta) const override;
  std::vector<double> initial_theta() const override { return initial_; }
  std::vector<double> proposal_scales() const override;
  std::optional<double> exact_loglik(std::span<const double> theta) const override;

  double block_loglik(std::span<const double> theta, std::size_t k,
                      const Block& block) const override;

  bool supports_calibration() const override { return true; }
  double block_log_variance(std::span<const double> theta, std::size_t k, std::size_t n,
                            RngKind rng_kind, std::uint64_t seed) const override;
  void set_block_samples(std::size_t k, std::size_t n) override;
  std::size_t block_samples(std::size_t k) const override { return samples_.at(k); }

  /// log p-hat for interval i from a rows x (M - 1) matrix of normals.
  double interval_loglik(std::span<const double> theta, std::size_t i,
                         std::span<const double> normals, std::size_t paths) const;
  std::vector<double> interval_log_weights(std::span<const double> theta, std::size_t i,
                                           std::span<const double> normals,
                                           std::size_t paths) const;

  const DiffusionData& data() const { return data_; }
  const DiffusionOptions& options() const { return options_; }
  const std::vector<std::vector<std::size_t>>& groups() const { return groups_; }

 private:
  DiffusionData data_;
  DiffusionOptions options_;
  std::vector<std::vector<std::size_t>> groups_;
  std::vector<std::size_t> samples_;
  std::vector<double> initial_;
};

}  // namespace bpm
