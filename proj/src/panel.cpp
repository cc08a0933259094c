#include "bpm/panel.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <random>

#include "bpm/io.hpp"
#include "bpm/normal.hpp"

namespace bpm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kBetaPriorSd = 10.0;
constexpr double kLogRho2PriorSd = 1.5;
constexpr std::size_t kQuadratureNodes = 64;

}  // namespace

std::size_t PanelDataset::num_observations() const {
  std::size_t n = 0;
  for (const auto& p : panels) n += p.y.size();
  return n;
}

void PanelDataset::validate() const {
  if (panels.empty()) throw ConfigError("panel dataset has no panels");
  for (std::size_t i = 0; i < panels.size(); ++i) {
    const auto& p = panels[i];
    if (p.y.empty()) throw ConfigError("panel " + std::to_string(i) + " has no observations");
    if (p.x.size() != p.y.size() * num_covariates) {
      throw ConfigError("panel " + std::to_string(i) + " covariate matrix has the wrong size");
    }
    for (int y : p.y) {
      if (y < 0) throw ConfigError("panel " + std::to_string(i) + " has a negative count");
    }
  }
}

CovariateKind parse_covariate_kind(const std::string& text) {
  if (text == "binary") return CovariateKind::binary;
  if (text == "uniform") return CovariateKind::uniform;
  if (text == "count") return CovariateKind::count;
  throw ConfigError("unknown covariate kind '" + text + "' (binary, uniform or count)");
}

std::string to_string(CovariateKind kind) {
  switch (kind) {
    case CovariateKind::binary: return "binary";
    case CovariateKind::uniform: return "uniform";
    case CovariateKind::count: return "count";
  }
  return "unknown";
}

PanelDataset simulate_panel_data(std::size_t panels, std::size_t obs_per_panel,
                                 const PanelTruth& truth,
                                 const std::vector<CovariateKind>& covariates,
                                 std::uint64_t seed) {
  if (panels == 0 || obs_per_panel == 0) throw ConfigError("need panels and observations");
  if (truth.beta.size() != covariates.size() + 1) {
    throw ConfigError("beta needs an intercept plus one slope per covariate");
  }
  if (!(truth.rho2 >= 0.0)) throw ConfigError("rho^2 must be nonnegative");
  PanelDataset data;
  data.num_covariates = covariates.size();
  data.panels.resize(panels);
  Rng rng(StreamKey{seed, 0, 0, 0, kSimulationTag});
  const double rho = std::sqrt(truth.rho2);
  for (auto& panel : data.panels) {
    const double alpha = rho * rng.normal();
    panel.y.resize(obs_per_panel);
    panel.x.resize(obs_per_panel * covariates.size());
    for (std::size_t j = 0; j < obs_per_panel; ++j) {
      double eta = truth.beta[0] + alpha;
      for (std::size_t c = 0; c < covariates.size(); ++c) {
        double v = 0.0;
        switch (covariates[c]) {
          case CovariateKind::binary: v = rng.uniform() < 0.5 ? 1.0 : 0.0; break;
          case CovariateKind::uniform: v = rng.uniform(); break;
          case CovariateKind::count:
            v = static_cast<double>(std::poisson_distribution<int>(1.0)(rng));
            break;
        }
        panel.x[j * covariates.size() + c] = v;
        eta += truth.beta[c + 1] * v;
      }
      panel.y[j] = std::poisson_distribution<int>(std::exp(eta))(rng);
    }
  }
  return data;
}

void write_panel_csv(const PanelDataset& data, std::ostream& out) {
  out << "panel_id,obs_id,y";
  for (std::size_t c = 0; c < data.num_covariates; ++c) out << ",x" << (c + 1);
  out << '\n';
  for (std::size_t i = 0; i < data.panels.size(); ++i) {
    const auto& p = data.panels[i];
    for (std::size_t j = 0; j < p.y.size(); ++j) {
      out << i << ',' << j << ',' << p.y[j];
      for (std::size_t c = 0; c < data.num_covariates; ++c) {
        out << ',' << format_double(p.x[j * data.num_covariates + c]);
      }
      out << '\n';
    }
  }
}

PanelDataset read_panel_csv(std::istream& in) {
  CsvReader reader(in);
  const auto header = reader.header();
  if (header.size() < 3 || header[0] != "panel_id" || header[1] != "obs_id" || header[2] != "y") {
    throw ParseError(1, "panel CSV header must start with panel_id,obs_id,y");
  }
  PanelDataset data;
  data.num_covariates = header.size() - 3;
  std::vector<std::string> row;
  std::string last_key;
  while (reader.next(row)) {
    const std::string key = row[0];
    if (key != last_key) {
      data.panels.emplace_back();
      last_key = key;
    }
    auto& p = data.panels.back();
    const double y = reader.number(row, 2);
    if (y < 0 || y != std::floor(y)) throw ParseError(reader.line(), "y must be a nonnegative integer");
    p.y.push_back(static_cast<int>(y));
    for (std::size_t c = 0; c < data.num_covariates; ++c) p.x.push_back(reader.number(row, 3 + c));
  }
  if (data.panels.empty()) throw ParseError(reader.line(), "panel CSV has no rows");
  data.validate();
  return data;
}

std::vector<std::vector<std::size_t>> contiguous_groups(std::size_t items, std::size_t groups) {
  if (groups == 0) throw ConfigError("number of groups must be positive");
  if (groups > items) {
    throw ConfigError("cannot split " + std::to_string(items) + " items into " +
                      std::to_string(groups) + " nonempty groups");
  }
  std::vector<std::vector<std::size_t>> out(groups);
  for (std::size_t k = 0; k < groups; ++k) {
    const std::size_t lo = k * items / groups, hi = (k + 1) * items / groups;
    for (std::size_t i = lo; i < hi; ++i) out[k].push_back(i);
  }
  return out;
}

void gauss_hermite(std::size_t n, std::vector<double>& x, std::vector<double>& w) {
  // Newton iteration on orthonormal Hermite polynomials with the usual
  // asymptotic starting guesses for the largest roots.
  constexpr double kPim4 = 0.7511255444649425;
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  const std::size_t m = (n + 1) / 2;
  const double dn = static_cast<double>(n);
  double z = 0.0, pp = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (i == 0) {
      z = std::sqrt(2 * dn + 1) - 1.85575 * std::pow(2 * dn + 1, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(dn, 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * x[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * x[1];
    } else {
      z = 2.0 * z - x[i - 2];
    }
    for (int it = 0; it < 100; ++it) {
      double p1 = kPim4, p2 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        const double dj = static_cast<double>(j);
        p1 = z * std::sqrt(2.0 / (dj + 1)) * p2 - std::sqrt(dj / (dj + 1)) * p3;
      }
      pp = std::sqrt(2 * dn) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-14 * std::max(1.0, std::abs(z))) break;
    }
    x[i] = z;
    x[n - 1 - i] = -z;
    w[i] = 2.0 / (pp * pp);
    w[n - 1 - i] = w[i];
  }
}

// ---------------------------------------------------------------------------

PanelEstimator::PanelEstimator(PanelDataset data, PanelOptions options)
    : data_(std::move(data)), options_(std::move(options)) {
  data_.validate();
  if (options_.samples == 0) throw ConfigError("panel sample count must be positive");
  if (options_.adaptive) {
    if (options_.max_samples < options_.samples) {
      throw ConfigError("max samples must be at least the initial sample count");
    }
    if (options_.pilot_samples < 2) throw ConfigError("pilot needs at least 2 samples");
    if (!(options_.unit_variance_target > 0.0)) {
      throw ConfigError("per-panel variance target must be positive");
    }
  }
  groups_ = contiguous_groups(data_.num_panels(), options_.groups);
  samples_.assign(groups_.size(), options_.samples);
  const std::size_t p = data_.num_covariates;
  sum_yx_.assign(data_.num_panels() * p, 0.0);
  log_fact_.assign(data_.num_panels(), 0.0);
  for (std::size_t i = 0; i < data_.num_panels(); ++i) {
    const auto& panel = data_.panels[i];
    for (std::size_t j = 0; j < panel.y.size(); ++j) {
      log_fact_[i] += std::lgamma(panel.y[j] + 1.0);
      for (std::size_t c = 0; c < p; ++c) sum_yx_[i * p + c] += panel.y[j] * panel.x[j * p + c];
    }
  }
  initial_ = options_.initial_theta;
  if (initial_.empty()) initial_.assign(p + 2, 0.0);
  if (initial_.size() != p + 2) throw ConfigError("panel initial theta has the wrong length");
  gauss_hermite(kQuadratureNodes, gh_nodes_, gh_weights_);
}

std::vector<std::string> PanelEstimator::param_names() const {
  std::vector<std::string> names;
  for (std::size_t c = 0; c <= data_.num_covariates; ++c) names.push_back("beta" + std::to_string(c));
  names.push_back("log_rho2");
  return names;
}

BlockLayout PanelEstimator::block_layout(std::size_t k) const {
  BlockLayout layout;
  layout.kind = BlockKind::standard_normal;
  layout.segments.assign(groups_.at(k).size(), SegmentShape{samples_.at(k), 1});
  return layout;
}

double PanelEstimator::log_prior(std::span<const double> theta) const {
  double lp = 0.0;
  const std::size_t p = data_.num_covariates;
  for (std::size_t c = 0; c <= p; ++c) {
    const double t = theta[c] / kBetaPriorSd;
    lp += log_normal_pdf(t) - std::log(kBetaPriorSd);
  }
  lp += log_normal_pdf(theta[p + 1] / kLogRho2PriorSd) - std::log(kLogRho2PriorSd);
  return lp;
}

std::vector<double> PanelEstimator::proposal_scales() const {
  return std::vector<double>(data_.num_covariates + 2, 0.1);
}

PanelEstimator::PanelTerms PanelEstimator::terms(std::span<const double> theta,
                                                 std::size_t i) const {
  const auto& panel = data_.panels[i];
  const std::size_t p = data_.num_covariates;
  PanelTerms t{0.0, 0.0, 0.0};
  double sum_y = 0.0;
  for (int y : panel.y) sum_y += y;
  t.y = sum_y;
  t.a = theta[0] * sum_y - log_fact_[i];
  for (std::size_t c = 0; c < p; ++c) t.a += theta[c + 1] * sum_yx_[i * p + c];
  for (std::size_t j = 0; j < panel.y.size(); ++j) {
    double eta = theta[0];
    for (std::size_t c = 0; c < p; ++c) eta += theta[c + 1] * panel.x[j * p + c];
    t.b += std::exp(eta);
  }
  return t;
}

double PanelEstimator::loglik_from_terms(const PanelTerms& t, double rho,
                                         std::span<const double> normals) const {
  // log w_s = a + y alpha_s - b exp(alpha_s), alpha_s = rho v_s.
  const std::size_t n = normals.size();
  double m = kNegInf;
  thread_local std::vector<double> lw;
  lw.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double alpha = rho * normals[s];
    lw[s] = t.y * alpha - t.b * std::exp(alpha);
    m = std::max(m, lw[s]);
  }
  if (m == kNegInf) return kNegInf;
  double acc = 0.0;
  for (std::size_t s = 0; s < n; ++s) acc += std::exp(lw[s] - m);
  return t.a + m + std::log(acc / static_cast<double>(n));
}

std::vector<double> PanelEstimator::panel_log_weights(std::span<const double> theta,
                                                      std::size_t i,
                                                      std::span<const double> normals) const {
  const auto t = terms(theta, i);
  const double rho = std::exp(0.5 * theta[data_.num_covariates + 1]);
  std::vector<double> out(normals.size());
  for (std::size_t s = 0; s < normals.size(); ++s) {
    const double alpha = rho * normals[s];
    out[s] = t.a + t.y * alpha - t.b * std::exp(alpha);
  }
  return out;
}

double PanelEstimator::panel_loglik(std::span<const double> theta, std::size_t i,
                                    std::span<const double> normals) const {
  return loglik_from_terms(terms(theta, i), std::exp(0.5 * theta[data_.num_covariates + 1]),
                           normals);
}

std::size_t PanelEstimator::adaptive_samples(const PanelTerms& t, double rho, const Block& block,
                                             std::size_t segment) const {
  // The pilot uses its own stream so the count is independent of the
  // normals that enter the estimate.
  StreamKey key = block.key();
  key.segment = segment;
  key.tag = kCalibrationTag;
  Rng rng(key);
  std::vector<double> lw(options_.pilot_samples);
  for (auto& v : lw) {
    const double alpha = rho * rng.normal();
    v = t.y * alpha - t.b * std::exp(alpha);
  }
  const double cv2 = delta_method_log_variance(lw) * static_cast<double>(lw.size());
  std::size_t n = options_.samples;
  while (cv2 / static_cast<double>(n) > options_.unit_variance_target && n < options_.max_samples) {
    n = std::min(2 * n, options_.max_samples);
  }
  return n;
}

double PanelEstimator::block_loglik(std::span<const double> theta, std::size_t k,
                                    const Block& block) const {
  const auto& group = groups_.at(k);
  const double rho = std::exp(0.5 * theta[data_.num_covariates + 1]);
  double total = 0.0;
  for (std::size_t j = 0; j < group.size(); ++j) {
    const auto t = terms(theta, group[j]);
    std::span<const double> normals = block.segment(j);
    if (options_.adaptive) {
      const std::size_t n = adaptive_samples(t, rho, block, j);
      block.ensure_rows(j, n);
      normals = block.segment(j).first(n);
    }
    const double v = loglik_from_terms(t, rho, normals);
    if (v == kNegInf) return kNegInf;
    total += v;
  }
  return total;
}

double PanelEstimator::panel_exact_loglik(std::span<const double> theta, std::size_t i) const {
  const auto t = terms(theta, i);
  const double rho2 = std::exp(theta[data_.num_covariates + 1]);
  // Integrand in alpha: a + y alpha - b e^alpha + log N(alpha; 0, rho2).
  auto h = [&](double a) {
    return t.a + t.y * a - t.b * std::exp(a) - 0.5 * a * a / rho2 - 0.5 * std::log(rho2) -
           kLogSqrt2Pi;
  };
  // Centre and scale the rule at the mode (the integrand is log-concave).
  double mode = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double g = t.y - t.b * std::exp(mode) - mode / rho2;
    const double hess = -t.b * std::exp(mode) - 1.0 / rho2;
    double step = -g / hess;
    step = std::clamp(step, -2.0, 2.0);
    mode += step;
    if (std::abs(step) < 1e-12 * std::max(1.0, std::abs(mode))) break;
  }
  const double scale = 1.0 / std::sqrt(t.b * std::exp(mode) + 1.0 / rho2);
  double m = kNegInf;
  std::vector<double> terms_(gh_nodes_.size());
  for (std::size_t q = 0; q < gh_nodes_.size(); ++q) {
    const double xq = gh_nodes_[q];
    terms_[q] = std::log(gh_weights_[q]) + xq * xq + h(mode + std::sqrt(2.0) * scale * xq);
    m = std::max(m, terms_[q]);
  }
  double acc = 0.0;
  for (double v : terms_) acc += std::exp(v - m);
  return m + std::log(acc) + std::log(std::sqrt(2.0) * scale);
}

std::optional<double> PanelEstimator::exact_loglik(std::span<const double> theta) const {
  double total = 0.0;
  for (std::size_t i = 0; i < data_.num_panels(); ++i) total += panel_exact_loglik(theta, i);
  return total;
}

double PanelEstimator::block_log_variance(std::span<const double> theta, std::size_t k,
                                          std::size_t n, RngKind rng_kind,
                                          std::uint64_t seed) const {
  const auto& group = groups_.at(k);
  double total = 0.0;
  if (rng_kind == RngKind::mc) {
    // Delta method: V(log mean w) ~ var(w) / (n mean(w)^2), with the ratio
    // var(w) / mean(w)^2 measured on a pilot of at least 256 draws.
    const std::size_t pilot = std::max<std::size_t>(n, 256);
    for (std::size_t j = 0; j < group.size(); ++j) {
      Rng rng(StreamKey{seed, k, 0, j, kCalibrationTag});
      std::vector<double> z(pilot);
      for (auto& v : z) v = rng.normal();
      const auto lw = panel_log_weights(theta, group[j], z);
      total += delta_method_log_variance(lw) * static_cast<double>(pilot) /
               static_cast<double>(n);
    }
    return total;
  }
  // RQMC: replicate independently scrambled nets.
  constexpr std::size_t kReplications = 20;
  if (!is_power_of_two(n)) throw ConfigError("RQMC sample counts must be powers of 2");
  for (std::size_t j = 0; j < group.size(); ++j) {
    std::vector<double> reps(kReplications);
    for (std::size_t r = 0; r < kReplications; ++r) {
      const auto z = generate_segment(BlockKind::standard_normal, RngKind::rqmc,
                                      StreamKey{seed, k, r, j, kCalibrationTag}, n, 1, 0);
      reps[r] = panel_loglik(theta, group[j], z);
    }
    double mean = 0.0;
    for (double v : reps) mean += v;
    mean /= kReplications;
    double ss = 0.0;
    for (double v : reps) ss += (v - mean) * (v - mean);
    total += ss / (kReplications - 1);
  }
  return total;
}

void PanelEstimator::set_block_samples(std::size_t k, std::size_t n) {
  if (n == 0) throw ConfigError("sample count must be positive");
  samples_.at(k) = n;
}

}  // namespace bpm
