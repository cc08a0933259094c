#include "bpm/diagnostics.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <mutex>
#include <numeric>

namespace bpm {

namespace {

// FFTW's planner is not thread safe.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// sum_t x_t x_{t+l} for l = 0..L by direct summation.
std::vector<double> lagged_products_direct(std::span<const double> x, std::size_t L) {
  const std::size_t n = x.size();
  std::vector<double> out(L + 1, 0.0);
  for (std::size_t l = 0; l <= L; ++l) {
    double s = 0.0;
    for (std::size_t t = 0; t + l < n; ++t) s += x[t] * x[t + l];
    out[l] = s;
  }
  return out;
}

// Same sums, blockwise through FFTs of size P: each block of B = P - L
// points is correlated against itself plus the next L points.
std::vector<double> lagged_products_fft(std::span<const double> x, std::size_t L) {
  const std::size_t n = x.size();
  const std::size_t P = std::max<std::size_t>(1024, std::bit_ceil(4 * (L + 1)));
  const std::size_t B = P - L;
  const std::size_t H = P / 2 + 1;

  double* a = fftw_alloc_real(P);
  double* b = fftw_alloc_real(P);
  fftw_complex* fa = fftw_alloc_complex(H);
  fftw_complex* fb = fftw_alloc_complex(H);
  fftw_plan pa, pb, pinv;
  {
    std::lock_guard lock(fftw_planner_mutex());
    pa = fftw_plan_dft_r2c_1d(static_cast<int>(P), a, fa, FFTW_ESTIMATE);
    pb = fftw_plan_dft_r2c_1d(static_cast<int>(P), b, fb, FFTW_ESTIMATE);
    pinv = fftw_plan_dft_c2r_1d(static_cast<int>(P), fa, a, FFTW_ESTIMATE);
  }
  std::vector<double> out(L + 1, 0.0);
  for (std::size_t s = 0; s < n; s += B) {
    const std::size_t na = std::min(B, n - s);
    const std::size_t nb = std::min(B + L, n - s);
    std::fill(a, a + P, 0.0);
    std::fill(b, b + P, 0.0);
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(s), na, a);
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(s), nb, b);
    fftw_execute(pa);
    fftw_execute(pb);
    for (std::size_t h = 0; h < H; ++h) {
      const std::complex<double> ca(fa[h][0], -fa[h][1]);
      const std::complex<double> cb(fb[h][0], fb[h][1]);
      const auto p = ca * cb;
      fa[h][0] = p.real();
      fa[h][1] = p.imag();
    }
    fftw_execute(pinv);
    for (std::size_t l = 0; l <= L; ++l) out[l] += a[l] / static_cast<double>(P);
  }
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(pa);
    fftw_destroy_plan(pb);
    fftw_destroy_plan(pinv);
  }
  fftw_free(a);
  fftw_free(b);
  fftw_free(fa);
  fftw_free(fb);
  return out;
}

}  // namespace

double sample_mean(std::span<const double> x) {
  if (x.empty()) throw DiagnosticError("mean of an empty series");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_sd(std::span<const double> x) {
  if (x.size() < 2) throw DiagnosticError("sd needs at least 2 values");
  const double m = sample_mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double sample_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DiagnosticError("correlation of series of unequal length");
  if (x.size() < 2) throw DiagnosticError("correlation needs at least 2 pairs");
  const double mx = sample_mean(x), my = sample_mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DiagnosticError("correlation of a constant series");
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> autocorrelations(std::span<const double> series, std::size_t max_lag) {
  const std::size_t n = series.size();
  if (n < 2) throw DiagnosticError("autocorrelation needs at least 2 values");
  const double m = sample_mean(series);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = series[i] - m;
  const std::size_t L = std::min(max_lag, n - 1);
  const double c0 = std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
  if (!(c0 > 0.0)) throw DiagnosticError("degenerate chain: series has zero variance");
  const bool use_fft = static_cast<double>(n) * static_cast<double>(L) > 2e7;
  const auto sums = use_fft ? lagged_products_fft(x, L) : lagged_products_direct(x, L);
  std::vector<double> rho(L);
  for (std::size_t l = 1; l <= L; ++l) rho[l - 1] = sums[l] / c0;
  return rho;
}

double iact(std::span<const double> series) {
  if (series.size() < 2) throw DiagnosticError("IACT needs at least 2 values");
  for (double v : series) {
    if (!std::isfinite(v)) throw DiagnosticError("IACT of a series with non-finite values");
  }
  const std::size_t L = std::min(kMaxIactLag, series.size() / 10);
  if (L == 0) {
    // Too short for any lag; still reject constant input.
    if (std::all_of(series.begin(), series.end(), [&](double v) { return v == series[0]; })) {
      throw DiagnosticError("degenerate chain: series has zero variance");
    }
    return 1.0;
  }
  const auto rho = autocorrelations(series, L);
  double s = 0.0;
  for (double r : rho) s += r;
  return 1.0 + 2.0 * s;
}

ChainSummary summarize(const ChainOutput& chain, const SummaryOptions& options) {
  ChainSummary out;
  out.draws = chain.size();
  if (out.draws == 0) throw DiagnosticError("no draws");
  out.param_names = chain.param_names;
  out.config_digest = options.config_digest;
  out.acceptance_rate =
      static_cast<double>(std::accumulate(chain.accept_flags.begin(), chain.accept_flags.end(),
                                          std::size_t{0})) /
      static_cast<double>(out.draws);
  double iact_sum = 0.0;
  std::size_t iact_count = 0;
  for (std::size_t j = 0; j < chain.num_params; ++j) {
    const auto col = chain.column(j);
    out.posterior_mean.push_back(sample_mean(col));
    out.posterior_sd.push_back(col.size() > 1 ? sample_sd(col) : 0.0);
    try {
      const double v = iact(col);
      out.iact.emplace_back(v);
      iact_sum += v;
      ++iact_count;
    } catch (const DiagnosticError& e) {
      out.iact.emplace_back(std::nullopt);
      out.iact_errors[chain.param_names[j]] = e.what();
    }
  }
  if (iact_count == chain.num_params && iact_count > 0) {
    out.mean_iact = iact_sum / static_cast<double>(iact_count);
  }
  if (chain.timed) {
    out.cpu_seconds = chain.wall_seconds;
    if (out.mean_iact) out.tnv = *out.mean_iact * chain.wall_seconds;
  }
  if (options.sigma2 && out.mean_iact && *options.sigma2 > 0.0) {
    out.empirical_ct =
        *out.mean_iact / std::pow(*options.sigma2, 1.0 / (2.0 * options.varpi));
  }
  return out;
}

double corr_z_pairs(std::span<const ProposalPair> pairs) {
  if (pairs.size() < 1000) {
    throw DiagnosticError("need at least 1000 proposal pairs, got " +
                          std::to_string(pairs.size()));
  }
  std::vector<double> a, b;
  a.reserve(pairs.size());
  b.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (!std::isfinite(p.z_current) || !std::isfinite(p.z_proposed)) continue;
    a.push_back(p.z_current);
    b.push_back(p.z_proposed);
  }
  return sample_correlation(a, b);
}

double corr_theta_z(const ChainOutput& chain,
                    const std::function<double(std::span<const double>)>& h) {
  std::vector<double> a, b;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const double z = chain.z_trace[i];
    if (!std::isfinite(z)) continue;
    a.push_back(h(std::span<const double>(chain.draws).subspan(i * chain.num_params,
                                                               chain.num_params)));
    b.push_back(z);
  }
  if (a.size() < 2) throw DiagnosticError("chain has no z values");
  return sample_correlation(a, b);
}

}  // namespace bpm
