#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "bpm/estimator.hpp"

namespace bpm {

/// M1: y_t = beta0 + beta1 y_{t-1} + e_t.  M2: y_t = mu + rho (y_{t-1} - mu) + e_t.
/// e_t iid Student-t(nu) (or standard normal for the Gaussian variant).
enum class Ar1Model { m1, m2 };
Ar1Model parse_ar1_model(const std::string& text);
std::string to_string(Ar1Model model);

/// Series y_0..y_{T-1}; y_0 follows a warm-up of `warmup` steps.
std::vector<double> simulate_ar1_student_t(Ar1Model model, double theta0, double theta1,
                                           double nu, std::size_t length, std::uint64_t seed,
                                           std::size_t warmup = 1000);

/// CSV with header t,y.
void write_series_csv(std::span<const double> y, std::ostream& out);
std::vector<double> read_series_csv(std::istream& in);

using Point2 = std::array<double, 2>;

/// k-means partition of the points w_t = (y_{t-1}, y_t), t = 1..T-1, with the
/// per-cluster sums needed by the Taylor control variates. delta = w - centroid.
struct ClusterSet {
  std::vector<Point2> centroids;
  /// assignment[i] for point i (i.e. observation t = i + 1).
  std::vector<std::size_t> assignment;
  std::vector<std::size_t> count;
  std::vector<Point2> sum_delta;
  /// (xx, xy, yy) of sum delta delta'.
  std::vector<std::array<double, 3>> sum_outer;
};

/// Lagged pairs (y_{t-1}, y_t) for t = 1..T-1.
std::vector<Point2> lagged_pairs(std::span<const double> series);

/// k-means++ initialisation then Lloyd iterations. An emptied cluster is
/// re-seeded at the point farthest from its current centroid.
ClusterSet build_clusters(std::span<const Point2> points, std::size_t clusters,
                          std::uint64_t seed, std::size_t max_iterations = 25);
/// Recompute the cached sums from assignments and centroids.
void refresh_cluster_statistics(std::span<const Point2> points, ClusterSet& set);

/// Log-density of one observation as a function of the data point w, with
/// its gradient and Hessian in w.
struct DataDerivatives {
  double value;
  Point2 gradient;
  std::array<double, 3> hessian;  // (xx, xy, yy)
};

struct Ar1Density {
  Ar1Model model = Ar1Model::m1;
  double nu = 5.0;
  /// Gaussian errors instead of Student-t (log-density quadratic in w).
  bool gaussian = false;

  double residual(std::span<const double> theta, const Point2& w) const;
  double log_density(std::span<const double> theta, const Point2& w) const;
  DataDerivatives derivatives(std::span<const double> theta, const Point2& w) const;
};

/// q(theta) = sum_c [n_c l(c) + g_c' S_c + tr(H_c M_c) / 2] and, per point,
/// q_t = l(c) + g_c' delta_t + delta_t' H_c delta_t / 2.
class ControlVariates {
 public:
  ControlVariates(const Ar1Density& density, std::span<const Point2> points,
                  const ClusterSet& clusters, std::span<const double> theta);
  double total() const { return total_; }
  double q(std::size_t i) const;
  /// l_t - q_t.
  double d(std::size_t i) const;

 private:
  const Ar1Density& density_;
  std::span<const Point2> points_;
  const ClusterSet& clusters_;
  std::span<const double> theta_;
  std::vector<DataDerivatives> at_centroid_;
  double total_ = 0.0;
};

/// (T / N) sum_i d[idx_i].
double subsample_dhat(std::span<const double> d, std::span<const std::size_t> idx);
/// (T^2 / N) s^2 with s^2 the sample variance (denominator N - 1) of d[idx].
double subsample_sigma2(std::span<const double> d, std::span<const std::size_t> idx);

struct SubsampleOptions {
  Ar1Model model = Ar1Model::m1;
  double nu = 5.0;
  bool gaussian = false;
  std::size_t groups = 100;
  /// Total subsample size N = G m.
  std::size_t subsample_size = 1000;
  /// 0 selects ceil(T^(2/3)). Far fewer leaves heavy-tailed outliers sharing a
  /// centroid, and the quadratic fit there is poor.
  std::size_t clusters = 0;
  std::uint64_t cluster_seed = 1;
  /// Indices carried as normals mapped through the normal CDF, so that
  /// Crank-Nicolson moves apply.
  bool copula_indices = false;
  /// Standard likelihood, no blocks: used for reference chains.
  bool full_data = false;
  std::vector<double> initial_theta;
};

/// Subsampling estimator with clustered second-order control variates:
/// log L-hat = q + sum_k (d-hat_(k) - sigma-hat^2 / (2G)).
class SubsampleEstimator : public Estimator {
 public:
  SubsampleEstimator(std::vector<double> series, SubsampleOptions options);

  std::string name() const override { return "subsample"; }
  std::vector<std::string> param_names() const override;
  std::size_t num_blocks() const override;
  BlockLayout block_layout(std::size_t k) const override;

  double log_prior(std::span<const double> theta) const override;
  std::vector<double> initial_theta() const override { return initial_; }
  std::vector<double> proposal_scales() const override { return {0.02, 0.02}; }
  std::optional<double> exact_loglik(std::span<const double> theta) const override;

  double block_loglik(std::span<const double> theta, std::size_t k,
                      const Block& block) const override;
  LogLikEstimate combine(std::span<const double> theta, std::vector<double> per_block,
                         const BlockedRandomness& u) const override;
  LogLikEstimate estimate(std::span<const double> theta,
                          const BlockedRandomness& u) const override;

  /// Observation indices (0-based into the lagged pairs) held by a block.
  std::vector<std::size_t> block_indices(const Block& block) const;

  std::size_t num_terms() const { return points_.size(); }
  const std::vector<Point2>& points() const { return points_; }
  const ClusterSet& clusters() const { return clusters_; }
  const Ar1Density& density() const { return density_; }
  const SubsampleOptions& options() const { return options_; }

 private:
  std::size_t per_block() const { return options_.subsample_size / options_.groups; }

  std::vector<double> series_;
  SubsampleOptions options_;
  Ar1Density density_;
  std::vector<Point2> points_;
  ClusterSet clusters_;
  std::vector<double> initial_;
};

}  // namespace bpm
