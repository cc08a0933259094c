#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "bpm/diagnostics.hpp"
#include "bpm/diffusion.hpp"
#include "bpm/io.hpp"
#include "bpm/normal.hpp"
#include "bpm/panel.hpp"
#include "bpm/subsample.hpp"
#include "bpm/toy.hpp"
#include "doctest.h"

using namespace bpm;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed) {
  Rng rng(StreamKey{seed, 0, 0, 0, kAuxiliaryTag});
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// Mean of exp(z) and its standard error over fresh u.
std::pair<double, double> mean_exp_z(const Estimator& est, std::span<const double> theta,
                                     std::size_t reps, std::uint64_t seed) {
  const double exact = *est.exact_loglik(theta);
  std::vector<double> w(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    BlockedRandomness u(est.block_layouts(), RngKind::mc, derive_seed(seed, r));
    w[r] = std::exp(est.estimate(theta, u).total - exact);
  }
  const double m = sample_mean(w);
  return {m, sample_sd(w) / std::sqrt(double(reps))};
}

double lag1_autocorrelation(const std::vector<double>& y) {
  const double m = sample_mean(y);
  double num = 0, den = 0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    den += (y[t] - m) * (y[t] - m);
    if (t > 0) num += (y[t] - m) * (y[t - 1] - m);
  }
  return num / den;
}

PanelDataset single_count(int y) {
  PanelDataset d;
  d.num_covariates = 0;
  d.panels.push_back(Panel{{y}, {}});
  return d;
}

}  // namespace

// ---------------------------------------------------------------- toy

TEST_CASE("toy block z") {
  CHECK(toy_block_z(std::sqrt(2.34), 0.0) == doctest::Approx(-1.17));
  const auto eta = normals(1000000, 1);
  std::vector<double> e(eta.size());
  const double s = std::sqrt(2.34);
  for (std::size_t i = 0; i < eta.size(); ++i) e[i] = std::exp(toy_block_z(s, eta[i]));
  CHECK(std::abs(sample_mean(e) - 1.0) < 3 * sample_sd(e) / std::sqrt(double(e.size())));

  ToyEstimator toy(100, 2.34);
  CHECK(toy.total_sigma2() == doctest::Approx(234.0));
  std::vector<double> z;
  const std::vector<double> theta = {0.0};
  for (std::uint64_t r = 0; r < 4000; ++r) {
    BlockedRandomness u(toy.block_layouts(), RngKind::mc, r);
    z.push_back(toy.estimate(theta, u).total);
  }
  // sd of a sample variance over 4000 normals is about 2.2%.
  CHECK(sample_sd(z) * sample_sd(z) == doctest::Approx(234.0).epsilon(0.07));
  CHECK(sample_mean(z) == doctest::Approx(-117.0).epsilon(0.03));
}

// ---------------------------------------------------------------- panel

TEST_CASE("panel: vanishing random effect gives the exact likelihood") {
  auto data = simulate_panel_data(4, 3, PanelTruth{{0.2, 0.5}, 0.3}, {CovariateKind::uniform}, 3);
  PanelEstimator est(data, PanelOptions{.groups = 2, .samples = 8});
  const std::vector<double> theta = {0.2, 0.5, -80.0};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& p = data.panels[i];
    double direct = 0;
    for (std::size_t j = 0; j < p.y.size(); ++j) {
      const double eta = 0.2 + 0.5 * p.x[j];
      direct += p.y[j] * eta - std::exp(eta) - std::lgamma(p.y[j] + 1.0);
    }
    const double a = est.panel_loglik(theta, i, normals(8, 1));
    const double b = est.panel_loglik(theta, i, normals(8, 2));
    CHECK(a == doctest::Approx(direct).epsilon(1e-10));
    CHECK(b == doctest::Approx(a).epsilon(1e-12));
  }
}

TEST_CASE("panel: importance sampling against quadrature") {
  // n_i = 1, y = 2, beta_0 = 0.3, rho^2 = 0.5.
  PanelEstimator est(single_count(2), PanelOptions{.groups = 1, .samples = 1});
  const double b0 = 0.3, rho2 = 0.5, rho = std::sqrt(rho2);
  const std::vector<double> theta = {b0, std::log(rho2)};
  auto f = [&](double a) {
    const double lam = std::exp(b0 + a);
    return std::exp(2 * std::log(lam) - lam - std::log(2.0)) *
           std::exp(-0.5 * a * a / rho2) / (rho * std::sqrt(2 * M_PI));
  };
  const double oracle =
      boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -12 * rho, 12 * rho, 10,
                                                                     1e-14);
  CHECK(std::exp(est.panel_exact_loglik(theta, 0)) == doctest::Approx(oracle).epsilon(1e-10));
  const double is = std::exp(est.panel_loglik(theta, 0, normals(1000000, 7)));
  CHECK(is == doctest::Approx(oracle).epsilon(5e-4));
}

TEST_CASE("panel simulation: fixed seed and lognormal-Poisson moment") {
  const PanelTruth truth{{0.0}, 0.25};
  const auto a = simulate_panel_data(100000, 1, truth, {}, 11);
  const auto b = simulate_panel_data(100000, 1, truth, {}, 11);
  std::vector<double> y;
  for (std::size_t i = 0; i < a.num_panels(); ++i) {
    REQUIRE(a.panels[i].y == b.panels[i].y);
    y.push_back(a.panels[i].y[0]);
  }
  CHECK(std::abs(sample_mean(y) - std::exp(0.125)) < 3 * sample_sd(y) / std::sqrt(1e5));

  const auto c = simulate_panel_data(20000, 1, PanelTruth{{std::log(3.0), 0.0}, 0.0},
                                     {CovariateKind::binary}, 2);
  double s = 0;
  for (const auto& p : c.panels) s += p.y[0];
  CHECK(std::abs(s / 20000 - 3.0) < 3 * std::sqrt(3.0 / 20000));
}

TEST_CASE("panel: doubling N halves the log-likelihood variance") {
  // Small N is outside the 1/N regime (skewed weights), so start at 128.
  auto data = simulate_panel_data(1, 5, PanelTruth{{0.3, 0.5}, 0.5}, {CovariateKind::binary}, 5);
  PanelEstimator est(data, PanelOptions{.groups = 1, .samples = 128});
  const std::vector<double> theta = {0.3, 0.5, std::log(0.5)};
  auto var_at = [&](std::size_t n) {
    std::vector<double> v;
    for (std::uint64_t r = 0; r < 4000; ++r) v.push_back(est.panel_loglik(theta, 0, normals(n, 100 + r)));
    return sample_sd(v) * sample_sd(v);
  };
  const double v128 = var_at(128), v256 = var_at(256), v512 = var_at(512);
  CHECK(v128 / v256 == doctest::Approx(2.0).epsilon(0.25));
  CHECK(v256 / v512 == doctest::Approx(2.0).epsilon(0.25));
  // The delta-method probe agrees with the empirical variance.
  CHECK(est.block_log_variance(theta, 0, 256, RngKind::mc, 3) == doctest::Approx(v256).epsilon(0.3));
}

TEST_CASE("panel grouping and CSV round trip") {
  const auto g = contiguous_groups(10, 3);
  std::vector<std::size_t> seen;
  for (const auto& grp : g) seen.insert(seen.end(), grp.begin(), grp.end());
  std::vector<std::size_t> all(10);
  std::iota(all.begin(), all.end(), 0);
  CHECK(seen == all);
  CHECK_THROWS_AS(contiguous_groups(2, 3), ConfigError);

  auto data = simulate_panel_data(6, 4, PanelTruth{{0.1, -0.3, 0.2}, 0.4},
                                  {CovariateKind::binary, CovariateKind::uniform}, 8);
  std::stringstream ss;
  write_panel_csv(data, ss);
  const auto back = read_panel_csv(ss);
  REQUIRE(back.num_panels() == 6);
  CHECK(back.num_covariates == 2);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(back.panels[i].y == data.panels[i].y);
    CHECK(back.panels[i].x == data.panels[i].x);
  }
}

// ---------------------------------------------------------------- subsampling

TEST_CASE("AR(1) simulation") {
  const auto a = simulate_ar1_student_t(Ar1Model::m1, 0.3, 0.0, 5.0, 50000, 4);
  CHECK(a == simulate_ar1_student_t(Ar1Model::m1, 0.3, 0.0, 5.0, 50000, 4));
  // t(5) has variance 5/3.
  CHECK(std::abs(sample_mean(a) - 0.3) < 3 * std::sqrt(5.0 / 3 / 50000));
  const auto b = simulate_ar1_student_t(Ar1Model::m2, 0.3, 0.99, 5.0, 100000, 5);
  CHECK(std::abs(lag1_autocorrelation(b) - 0.99) < 0.01);
}

TEST_CASE("clusters: centering and cached statistics") {
  const auto y = simulate_ar1_student_t(Ar1Model::m1, 0.3, 0.6, 5.0, 500, 6);
  const auto pts = lagged_pairs(y);
  REQUIRE(pts.size() == 499);

  const auto one = build_clusters(pts, 1, 1);
  Point2 mean{0, 0};
  for (const auto& p : pts) {
    mean[0] += p[0] / pts.size();
    mean[1] += p[1] / pts.size();
  }
  CHECK(one.centroids[0][0] == doctest::Approx(mean[0]).epsilon(1e-12));
  CHECK(std::abs(one.sum_delta[0][0]) < 1e-10);
  CHECK(std::abs(one.sum_delta[0][1]) < 1e-10);

  const auto set = build_clusters(pts, 22, 3);
  CHECK(set.assignment.size() == pts.size());
  CHECK(std::accumulate(set.count.begin(), set.count.end(), std::size_t{0}) == pts.size());
  std::vector<std::array<double, 3>> outer(22, {0, 0, 0});
  std::vector<Point2> sd(22, {0, 0});
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto c = set.assignment[i];
    const double dx = pts[i][0] - set.centroids[c][0], dy = pts[i][1] - set.centroids[c][1];
    sd[c][0] += dx;
    sd[c][1] += dy;
    outer[c][0] += dx * dx;
    outer[c][1] += dx * dy;
    outer[c][2] += dy * dy;
  }
  for (std::size_t c = 0; c < 22; ++c) {
    CHECK(set.count[c] > 0);
    for (int j = 0; j < 2; ++j) CHECK(std::abs(set.sum_delta[c][j] - sd[c][j]) < 1e-9);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(set.sum_outer[c][j] - outer[c][j]) < 1e-9);
  }
}

TEST_CASE("control variates") {
  const std::vector<double> theta = {0.3, 0.6};
  const auto y = simulate_ar1_student_t(Ar1Model::m1, 0.3, 0.6, 5.0, 101, 7);
  const auto pts = lagged_pairs(y);
  Ar1Density dens{Ar1Model::m1, 5.0, false};

  SUBCASE("T = 100, C = 10") {
    const auto set = build_clusters(pts, 10, 1);
    ControlVariates cv(dens, pts, set, theta);
    double direct = 0;
    std::vector<double> d, l;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      direct += cv.q(i);
      l.push_back(dens.log_density(theta, pts[i]));
      d.push_back(cv.d(i));
      CHECK(d.back() == doctest::Approx(l.back() - cv.q(i)).epsilon(1e-12));
    }
    CHECK(std::abs(cv.total() - direct) <= 1e-10 * std::abs(direct));
    // A lone t-outlier can dominate its cluster at C = 10, so compare spread;
    // with finer clusters the largest residual is small too.
    CHECK(sample_sd(d) < 0.5 * sample_sd(l));
    const auto fine = build_clusters(pts, 30, 1);
    ControlVariates cv30(dens, pts, fine, theta);
    double max_d = 0, max_l = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      max_d = std::max(max_d, std::abs(cv30.d(i)));
      max_l = std::max(max_l, std::abs(l[i]));
    }
    CHECK(max_d < 0.05 * max_l);
  }
  SUBCASE("one cluster per point") {
    const auto set = build_clusters(pts, pts.size(), 1);
    ControlVariates cv(dens, pts, set, theta);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(std::abs(cv.d(i)) < 1e-12);
  }
  SUBCASE("Gaussian errors make the expansion exact") {
    Ar1Density g{Ar1Model::m1, 5.0, true};
    const auto set = build_clusters(pts, 5, 1);
    ControlVariates cv(g, pts, set, theta);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(std::abs(cv.d(i)) < 1e-10);
  }
  SUBCASE("analytic derivatives against finite differences") {
    for (auto model : {Ar1Model::m1, Ar1Model::m2}) {
      Ar1Density d{model, 5.0, false};
      const Point2 w{0.4, -0.2};
      const auto dv = d.derivatives(theta, w);
      CHECK(dv.value == doctest::Approx(d.log_density(theta, w)));
      const double h = 1e-5;
      for (int j = 0; j < 2; ++j) {
        Point2 a = w, b = w;
        a[j] += h;
        b[j] -= h;
        const double g = (d.log_density(theta, a) - d.log_density(theta, b)) / (2 * h);
        CHECK(dv.gradient[j] == doctest::Approx(g).epsilon(1e-6));
        const auto ga = d.derivatives(theta, a).gradient, gb = d.derivatives(theta, b).gradient;
        CHECK(dv.hessian[j == 0 ? 0 : 2] == doctest::Approx((ga[j] - gb[j]) / (2 * h)).epsilon(1e-5));
        if (j == 0) CHECK(dv.hessian[1] == doctest::Approx((ga[1] - gb[1]) / (2 * h)).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("subsample estimator: exhaustive enumeration") {
  const std::vector<double> d = {0.4, -1.1, 2.5};
  const double total = 0.4 - 1.1 + 2.5;
  double mean_dhat = 0, mean_dhat2 = 0, mean_sigma2 = 0;
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) {
      const std::vector<std::size_t> idx = {a, b};
      const double dh = subsample_dhat(d, idx);
      mean_dhat += dh / 9;
      mean_dhat2 += dh * dh / 9;
      mean_sigma2 += subsample_sigma2(d, idx) / 9;
    }
  }
  CHECK(mean_dhat == doctest::Approx(total).epsilon(1e-14));
  // sigma-hat^2 is unbiased for V(d-hat).
  CHECK(mean_sigma2 == doctest::Approx(mean_dhat2 - mean_dhat * mean_dhat).epsilon(1e-12));

  const std::vector<double> c(5, 0.7);
  const std::vector<std::size_t> idx = {0, 3, 3};
  CHECK(subsample_dhat(c, idx) == doctest::Approx(5 * 0.7));
  CHECK(subsample_sigma2(c, idx) < 1e-25);
  CHECK_THROWS_AS(subsample_sigma2(c, std::vector<std::size_t>{1}), ConfigError);
}

TEST_CASE("subsample estimator: block identity and purity") {
  const auto y = simulate_ar1_student_t(Ar1Model::m1, 0.3, 0.6, 5.0, 2001, 9);
  SubsampleOptions o;
  o.groups = 10;
  o.subsample_size = 100;
  SubsampleEstimator est(y, o);
  const std::vector<double> theta = {0.28, 0.62};
  BlockedRandomness u(est.block_layouts(), RngKind::mc, 4);
  const auto e = est.estimate(theta, u);

  ControlVariates cv(est.density(), est.points(), est.clusters(), theta);
  std::vector<std::size_t> all;
  for (std::size_t k = 0; k < 10; ++k) {
    const auto idx = est.block_indices(u.block(k));
    CHECK(idx.size() == 10);
    all.insert(all.end(), idx.begin(), idx.end());
    CHECK(est.block_loglik(theta, k, u.block(k)) == e.per_block[k]);
  }
  std::vector<double> dv;
  for (std::size_t i = 0; i < est.num_terms(); ++i) dv.push_back(cv.d(i));
  const double dhat = subsample_dhat(dv, all), s2 = subsample_sigma2(dv, all);
  double blockwise = 0;
  for (std::size_t k = 0; k < 10; ++k) blockwise += e.per_block[k] - s2 / 20;
  CHECK(blockwise == doctest::Approx(dhat - s2 / 2).epsilon(1e-12));
  CHECK(e.total == doctest::Approx(cv.total() + dhat - s2 / 2).epsilon(1e-12));
  CHECK(e.correction == doctest::Approx(cv.total() - s2 / 2).epsilon(1e-12));
  const auto via_combine = est.combine(theta, e.per_block, u);
  CHECK(via_combine.total == e.total);
}

TEST_CASE("series CSV round trip") {
  const auto y = simulate_ar1_student_t(Ar1Model::m2, 0.3, 0.9, 5.0, 200, 1);
  std::stringstream ss;
  write_series_csv(y, ss);
  CHECK(read_series_csv(ss) == y);
}

// ---------------------------------------------------------------- diffusion

TEST_CASE("bridge with one Euler step") {
  const DiffusionParams th{0.5, 0.3, 0.15};
  const auto s = bridge_sample_path(0.4, 0.45, th, DiffusionKind::cir, 1.0, 1, {});
  CHECK(s.path.empty());
  CHECK(s.log_g == 0.0);

  DiffusionEstimator est(DiffusionData{{0.4, 0.45}, 1.0},
                         DiffusionOptions{DiffusionKind::cir, 1, 3, 1, {}});
  const std::vector<double> theta = {0.5, 0.3, 0.15};
  const double mean = 0.4 + 0.3 * (0.5 - 0.4), var = 0.15 * 0.15 * 0.4;
  const double euler = -0.5 * std::log(2 * M_PI * var) - 0.5 * (0.45 - mean) * (0.45 - mean) / var;
  CHECK(est.interval_loglik(theta, 0, {}, 3) == doctest::Approx(euler).epsilon(1e-13));
  CHECK(*est.exact_loglik(theta) == doctest::Approx(euler).epsilon(1e-13));
}

TEST_CASE("bridge last-step mean is the midpoint") {
  const DiffusionParams th{0.5, 0.3, 0.15};
  const std::vector<double> zero = {0.0};
  const auto s = bridge_sample_path(0.4, 0.6, th, DiffusionKind::cir, 1.0, 2, zero);
  REQUIRE(s.path.size() == 1);
  CHECK(s.path[0] == doctest::Approx(0.5).epsilon(1e-15));
  // m = M - 2 of a longer bridge: the final proposed point sits halfway
  // between its predecessor and the endpoint when its normal is 0.
  std::vector<double> eta = normals(4, 3);
  eta[3] = 0.0;
  const auto l = bridge_sample_path(0.4, 0.6, th, DiffusionKind::ou, 1.0, 5, eta);
  CHECK(l.path[3] == doctest::Approx(l.path[2] + (0.6 - l.path[2]) / 2).epsilon(1e-15));
}

TEST_CASE("bridge density is normalized") {
  // E_g[f / g] = 1 for any normalized f on the M - 1 path points; f = the
  // forward Euler density of the path.
  const DiffusionParams th{0.5, 0.5, 0.3};
  const std::size_t M = 5;
  const double x0 = 0.3, x1 = x0 + 0.5 * (0.5 - x0) * 0.6;
  const auto eta = normals(100000 * (M - 1), 12);
  std::vector<double> r;
  for (std::size_t j = 0; j < 100000; ++j) {
    const auto s = bridge_sample_path(x0, x1, th, DiffusionKind::ou, 1.0, M,
                                      std::span(eta).subspan(j * (M - 1), M - 1));
    const std::span<const double> head(s.path.data(), M - 2);
    const double f = euler_path_logdensity(x0, head, s.path.back(), th, DiffusionKind::ou,
                                           (M - 1.0) / M, M - 1);
    r.push_back(std::exp(f - s.log_g));
  }
  CHECK(std::abs(sample_mean(r) - 1.0) < 3 * sample_sd(r) / std::sqrt(double(r.size())));
}

TEST_CASE("OU surrogate: estimate against the closed form") {
  const DiffusionParams th{0.5, 0.5, 0.2};
  const std::vector<double> theta = {0.5, 0.5, 0.2};
  DiffusionEstimator est(DiffusionData{{0.35, 0.48}, 1.0},
                         DiffusionOptions{DiffusionKind::ou, 20, 10000, 1, {}});
  const auto eta = normals(10000 * 19, 21);
  const double v = est.interval_loglik(theta, 0, eta, 10000);
  CHECK(std::abs(std::exp(v - ou_euler_logpdf(0.35, 0.48, th, 1.0, 20)) - 1) < 0.01);
  CHECK(std::abs(std::exp(v - ou_transition_logpdf(0.35, 0.48, th, 1.0)) - 1) < 0.01);
  // Euler with many steps converges to the exact transition.
  CHECK(ou_euler_logpdf(0.35, 0.48, th, 1.0, 4000) ==
        doctest::Approx(ou_transition_logpdf(0.35, 0.48, th, 1.0)).epsilon(1e-3));
}

TEST_CASE("diffusion simulation") {
  const auto a = simulate_cir({0.5, 0.5, 0.15}, 200, 1.0, 0.5, 3);
  CHECK(a.data.x == simulate_cir({0.5, 0.5, 0.15}, 200, 1.0, 0.5, 3).data.x);
  CHECK(!a.feller_violated);
  CHECK(simulate_cir({0.5, 0.05, 0.3}, 5, 1.0, 0.5, 3).feller_violated);

  const auto det = simulate_cir({0.5, 0.5, 1e-12}, 30, 1.0, 0.1, 1);
  for (std::size_t i = 1; i < det.data.x.size(); ++i) CHECK(det.data.x[i] > det.data.x[i - 1]);
  CHECK(det.data.x.back() == doctest::Approx(0.5).epsilon(1e-4));

  const auto s = simulate_cir({0.5, 0.5, 0.15}, 20000, 1.0, 0.5, 7);
  const auto& x = s.data.x;
  // Stationary sd sqrt(alpha sigma^2 / (2 beta)), integrated autocorrelation ~4.1.
  const double se = std::sqrt(0.5 * 0.0225 / 1.0 * 4.1 / x.size());
  CHECK(std::abs(sample_mean(x) - 0.5) < 4 * se);
  for (double v : x) REQUIRE(v > 0.0);
}

TEST_CASE("diffusion CSV round trip") {
  const auto a = simulate_cir({0.5, 0.5, 0.15}, 50, 1.0, 0.5, 3);
  std::stringstream ss;
  write_diffusion_csv(a.data, ss);
  const auto b = read_diffusion_csv(ss);
  CHECK(b.x == a.data.x);
  CHECK(b.delta == 1.0);
  std::stringstream bad("t,x\n0,0.5\n1,0.4\n2.5,0.3\n");
  CHECK_THROWS_AS(read_diffusion_csv(bad), ParseError);
}

// ---------------------------------------------------------------- shared

TEST_CASE("estimates are unbiased on the natural scale") {
  SUBCASE("panel") {
    auto data = simulate_panel_data(4, 3, PanelTruth{{0.1, 0.4}, 0.4}, {CovariateKind::uniform}, 1);
    PanelEstimator est(data, PanelOptions{.groups = 2, .samples = 8});
    for (double lr : {-2.0, -1.0, -0.5, 0.0, 0.5}) {
      const std::vector<double> theta = {0.1, 0.4, lr};
      const auto [m, se] = mean_exp_z(est, theta, 20000, 31);
      CHECK(std::abs(m - 1) < 3 * se);
    }
  }
  SUBCASE("diffusion (OU)") {
    auto sim = simulate_diffusion(DiffusionKind::ou, {0.5, 0.5, 0.2}, 6, 1.0, 0.5, 2);
    DiffusionEstimator est(sim.data, DiffusionOptions{DiffusionKind::ou, 6, 2, 3, {}});
    for (double s : {0.15, 0.2, 0.25, 0.3, 0.4}) {
      const std::vector<double> theta = {0.5, 0.5, s};
      const auto [m, se] = mean_exp_z(est, theta, 20000, 32);
      CHECK(std::abs(m - 1) < 3 * se);
    }
  }
  SUBCASE("toy") {
    ToyEstimator est(4, 0.3);
    for (double t : {-1.0, 0.0, 1.0, 2.0, 3.0}) {
      const std::vector<double> theta = {t};
      const auto [m, se] = mean_exp_z(est, theta, 20000, 33);
      CHECK(std::abs(m - 1) < 3 * se);
    }
  }
}

TEST_CASE("per-block values are pure and sum to the total") {
  auto data = simulate_panel_data(12, 3, PanelTruth{{0.1, 0.4}, 0.4}, {CovariateKind::uniform}, 1);
  PanelEstimator panel(data, PanelOptions{.groups = 3, .samples = 8});
  auto sim = simulate_cir({0.5, 0.5, 0.15}, 9, 1.0, 0.5, 2);
  DiffusionEstimator diff(sim.data, DiffusionOptions{DiffusionKind::cir, 5, 2, 3, {}});
  const std::vector<const Estimator*> models = {&panel, &diff};
  for (const Estimator* est : models) {
    const auto theta = est->initial_theta();
    BlockedRandomness u(est->block_layouts(), RngKind::mc, 17);
    const auto e = est->estimate(theta, u);
    double s = e.correction;
    for (std::size_t k = 0; k < est->num_blocks(); ++k) {
      const double a = est->block_loglik(theta, k, u.block(k));
      const double b = est->block_loglik(theta, k, u.block(k));
      CHECK(a == b);
      CHECK(a == e.per_block[k]);
      s += e.per_block[k];
    }
    CHECK(e.total == doctest::Approx(s).epsilon(1e-14));
  }
}
