#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "bpm/estimator.hpp"

namespace bpm {

/// Poisson counts with a Gaussian random intercept per panel:
/// y_ij ~ Poisson(exp(beta_0 + x_ij' beta + alpha_i)), alpha_i ~ N(0, rho^2).
struct Panel {
  std::vector<int> y;
  /// Row-major n_i x p covariates (no intercept column).
  std::vector<double> x;
};

struct PanelDataset {
  std::size_t num_covariates = 0;
  std::vector<Panel> panels;

  std::size_t num_panels() const { return panels.size(); }
  std::size_t num_observations() const;
  void validate() const;
};

enum class CovariateKind { binary, uniform, count };
CovariateKind parse_covariate_kind(const std::string& text);
std::string to_string(CovariateKind kind);

struct PanelTruth {
  /// beta_0 (intercept) followed by one slope per covariate.
  std::vector<double> beta;
  double rho2 = 0.25;
};

PanelDataset simulate_panel_data(std::size_t panels, std::size_t obs_per_panel,
                                 const PanelTruth& truth,
                                 const std::vector<CovariateKind>& covariates,
                                 std::uint64_t seed);

/// CSV with header panel_id,obs_id,y,x1,...,xp; rows grouped by panel.
void write_panel_csv(const PanelDataset& data, std::ostream& out);
PanelDataset read_panel_csv(std::istream& in);

/// Contiguous groups of near-equal size: group k holds panels
/// [floor(k T / G), floor((k + 1) T / G)).
std::vector<std::vector<std::size_t>> contiguous_groups(std::size_t items, std::size_t groups);

/// Gauss-Hermite nodes and weights for the weight exp(-x^2).
void gauss_hermite(std::size_t n, std::vector<double>& nodes, std::vector<double>& weights);

struct PanelOptions {
  std::size_t groups = 100;
  /// Static per-block sample count N_(k) (same for every panel in block k).
  std::size_t samples = 16;
  /// Per-theta choice of N per panel: the smallest doubling of `samples`
  /// whose delta-method variance, measured on an independent pilot, is at
  /// most unit_variance_target.
  bool adaptive = false;
  double unit_variance_target = 1.0 / 200.0;
  std::size_t max_samples = 4096;
  std::size_t pilot_samples = 32;
  std::vector<double> initial_theta;
};

/// Importance-sampling likelihood estimator using the prior of the random
/// effect as proposal. theta = (beta_0, ..., beta_p, log rho^2).
class PanelEstimator : public Estimator {
 public:
  PanelEstimator(PanelDataset data, PanelOptions options);

  std::string name() const override { return "panel"; }
  std::vector<std::string> param_names() const override;
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

  /// Exact log-likelihood of one panel (64-node adaptive Gauss-Hermite).
  double panel_exact_loglik(std::span<const double> theta, std::size_t i) const;
  /// log L-hat_i from the given standard normals.
  double panel_loglik(std::span<const double> theta, std::size_t i,
                      std::span<const double> normals) const;
  /// Log importance weights for panel i.
  std::vector<double> panel_log_weights(std::span<const double> theta, std::size_t i,
                                        std::span<const double> normals) const;

  const PanelDataset& data() const { return data_; }
  const std::vector<std::vector<std::size_t>>& groups() const { return groups_; }
  const PanelOptions& options() const { return options_; }

 private:
  struct PanelTerms {
    double a;  // sum y eta - sum log y!
    double b;  // sum exp(eta)
    double y;  // sum y
  };
  PanelTerms terms(std::span<const double> theta, std::size_t i) const;
  double loglik_from_terms(const PanelTerms& t, double rho,
                           std::span<const double> normals) const;
  std::size_t adaptive_samples(const PanelTerms& t, double rho, const Block& block,
                               std::size_t segment) const;

  PanelDataset data_;
  PanelOptions options_;
  std::vector<std::vector<std::size_t>> groups_;
  std::vector<std::size_t> samples_;
  std::vector<double> initial_;
  std::vector<double> sum_yx_;     // per panel, p entries
  std::vector<double> log_fact_;   // per panel sum log y!
  std::vector<double> gh_nodes_, gh_weights_;
};

}  // namespace bpm
