// Acceptance suite: one PASS/FAIL line per criterion, sub-checks indented below.
// Usage: acceptance [--only N]
#include <sys/wait.h>

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bpm/diagnostics.hpp"
#include "bpm/diffusion.hpp"
#include "bpm/experiment.hpp"
#include "bpm/io.hpp"
#include "bpm/panel.hpp"
#include "bpm/subsample.hpp"
#include "bpm/toy.hpp"
#include "bpm/tuning.hpp"

using namespace bpm;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Report {
  std::vector<std::pair<bool, std::string>> items;

  bool check(bool ok, const char* fmt, ...) __attribute__((format(printf, 3, 4))) {
    char buf[512];
    va_list ap;
    va_start(ap, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, ap);
    va_end(ap);
    items.emplace_back(ok, buf);
    return ok;
  }
  bool passed() const {
    for (const auto& [ok, _] : items) {
      if (!ok) return false;
    }
    return !items.empty();
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SamplerConfig perfect_proposal(SamplerKind kind, std::uint64_t seed) {
  SamplerConfig c;
  c.kind = kind;
  c.seed = seed;
  c.proposal.kind = ProposalKind::prior_independence;
  c.record_timing = false;
  return c;
}

bool within_rel(double x, double target, double tol) { return std::abs(x / target - 1) <= tol; }

const double kInf = std::numeric_limits<double>::infinity();

double num_or_inf(const json& j) { return j.is_number() ? j.get<double>() : kInf; }

// ------------------------------------------------------------------ 1

void toy_experiment(Report& r) {
  const auto t0 = std::chrono::steady_clock::now();
  ToyEstimator bpm_toy(100, 2.34);
  const auto b = run_chain(bpm_toy, perfect_proposal(SamplerKind::bpm, 1), 500000, 5000);
  const auto sb = summarize(b, SummaryOptions{bpm_toy.total_sigma2(), 0.5, ""});
  ToyEstimator ipm_toy(1, 1.0);
  const auto i = run_chain(ipm_toy, perfect_proposal(SamplerKind::ipm, 2), 500000, 5000);
  const auto si = summarize(i, SummaryOptions{1.0, 0.5, ""});
  const double secs = seconds_since(t0);

  r.check(std::abs(sb.acceptance_rate - 0.279) <= 0.02, "BPM acceptance %.4f (0.279 +- 0.02)",
          sb.acceptance_rate);
  r.check(within_rel(*sb.empirical_ct, 0.0263, 0.25), "BPM empirical CT %.5f (0.0263 +- 25%%)",
          *sb.empirical_ct);
  r.check(within_rel(*si.empirical_ct, 5.32, 0.25), "IPM(sigma=1) empirical CT %.3f (5.32 +- 25%%)",
          *si.empirical_ct);
  const double ratio = *si.empirical_ct / *sb.empirical_ct;
  r.check(ratio >= 50, "IPM/BPM CT ratio %.1f (>= 50)", ratio);
  r.check(secs < 120, "runtime %.1f s (< 120 s)", secs);
}

// ------------------------------------------------------------------ 2

void tuning_constants(Report& r) {
  const auto t0 = std::chrono::steady_clock::now();
  for (auto [varpi, tau, acc] : {std::tuple{0.5, 2.16, 0.28}, std::tuple{1.5, 0.82, 0.68}}) {
    for (double rho : {0.9, 0.99, 0.999}) {
      const auto opt = minimize_ct(varpi, rho);
      r.check(std::abs(opt.tau - tau) <= 0.05, "varpi=%.1f rho=%g: tau* %.4f (%.2f +- 0.05)", varpi,
              rho, opt.tau, tau);
      const double a = unconditional_accept(opt.sigma, rho);
      r.check(std::abs(a - acc) <= 0.005, "varpi=%.1f rho=%g: acceptance at optimum %.4f (%.2f +- 0.005)",
              varpi, rho, a, acc);
    }
  }
  const double secs = seconds_since(t0);
  r.check(secs < 10, "runtime %.2f s (< 10 s)", secs);
}

// ------------------------------------------------------------------ 3, 4

struct GridPoint {
  double rho, tau, sigma;
};

std::vector<GridPoint> sigma_rho_grid() {
  std::vector<GridPoint> g;
  for (double rho : {0.0, 0.9, 0.99}) {
    for (double tau : {0.5, 1.0, 1.5}) g.push_back({rho, tau, tau / std::sqrt(1 - rho * rho)});
  }
  return g;
}

constexpr std::size_t kZChainLength = 5000000;

void acceptance_formulas(Report& r) {
  std::uint64_t seed = 100;
  for (const auto& p : sigma_rho_grid()) {
    const double q = expected_conditional_accept(p.sigma, p.rho);
    const double u = unconditional_accept(p.sigma, p.rho);
    const auto sim = simulate_z_chain(p.sigma, p.rho, kZChainLength, ++seed);
    r.check(std::abs(q - u) <= 1e-4 && std::abs(sim.accept_rate - u) <= 0.005 &&
                std::abs(sim.accept_rate - q) <= 0.005,
            "sigma=%.3f rho=%.2f: quadrature %.6f, closed form %.6f, simulated %.5f", p.sigma,
            p.rho, q, u, sim.accept_rate);
  }
}

void inefficiency_oracle(Report& r) {
  std::uint64_t seed = 200;
  for (const auto& p : sigma_rho_grid()) {
    const double f = inefficiency(p.sigma, p.rho);
    const auto sim = simulate_z_chain(p.sigma, p.rho, kZChainLength, ++seed);
    r.check(within_rel(sim.iact, f, 0.05), "sigma=%.3f rho=%.2f: IF %.4f, simulated IACT %.4f (%+.1f%%)",
            p.sigma, p.rho, f, sim.iact, 100 * (sim.iact / f - 1));
  }
}

// ------------------------------------------------------------------ 5

void correlation_preservation(Report& r) {
  for (std::size_t G : {2u, 10u, 100u}) {
    ToyEstimator toy(G, 2.34);
    auto cfg = perfect_proposal(SamplerKind::bpm, 300 + G);
    cfg.record_proposals = true;
    const auto out = run_chain(toy, cfg, 200000, 1000);
    const double c = corr_z_pairs(out.proposals);
    const double want = 1.0 - 1.0 / static_cast<double>(G);
    r.check(std::abs(c - want) <= 0.02, "G=%zu: Corr(z, z') %.4f (%.3f +- 0.02)", G, c, want);
  }
}

// ------------------------------------------------------------------ 6

void unbiased(Report& r, const char* label, const Estimator& est,
              const std::vector<std::vector<double>>& thetas, std::uint64_t seed) {
  const std::size_t reps = 100000;
  for (const auto& theta : thetas) {
    const double exact = *est.exact_loglik(theta);
    double s = 0, s2 = 0;
    for (std::size_t i = 0; i < reps; ++i) {
      BlockedRandomness u(est.block_layouts(), RngKind::mc, derive_seed(seed, i));
      const double w = std::exp(est.estimate(theta, u).total - exact);
      s += w;
      s2 += w * w;
    }
    const double m = s / reps, se = std::sqrt((s2 / reps - m * m) / (reps - 1));
    std::string t;
    for (double v : theta) t += (t.empty() ? "" : ",") + std::to_string(v).substr(0, 6);
    r.check(std::abs(m - 1) <= 3 * se, "%s theta=(%s): mean exp(z) %.5f, SE %.5f", label, t.c_str(),
            m, se);
    ++seed;
  }
}

void unbiasedness(Report& r) {
  ToyEstimator toy(10, 0.1);
  unbiased(r, "toy", toy, {{-2.0}, {-1.0}, {0.0}, {1.0}, {2.0}}, 400);

  const auto pdata = simulate_panel_data(10, 3, PanelTruth{{0.2, 0.5}, 0.1}, {CovariateKind::uniform}, 4);
  PanelEstimator panel(pdata, PanelOptions{.groups = 5, .samples = 16});
  std::vector<std::vector<double>> pt;
  for (double r2 : {0.02, 0.05, 0.1, 0.2, 0.3}) pt.push_back({0.2, 0.5, std::log(r2)});
  unbiased(r, "panel", panel, pt, 500);

  const auto sim = simulate_diffusion(DiffusionKind::ou, {0.5, 0.5, 0.2}, 6, 1.0, 0.5, 4);
  DiffusionEstimator diff(sim.data, DiffusionOptions{DiffusionKind::ou, 6, 2, 3, {}});
  unbiased(r, "diffusion(OU)", diff,
           {{0.5, 0.5, 0.15}, {0.5, 0.5, 0.2}, {0.4, 0.6, 0.25}, {0.55, 0.4, 0.3}, {0.5, 0.8, 0.2}}, 600);
}

// ------------------------------------------------------------------ 7

void enumerate(Report& r, std::size_t T) {
  // T lagged pairs need T + 1 observations.
  const auto y = simulate_ar1_student_t(Ar1Model::m1, 0.3, 0.6, 5.0, T + 1, 70 + T);
  const auto pts = lagged_pairs(y);
  const auto clusters = build_clusters(pts, 1, 1);
  const Ar1Density dens{Ar1Model::m1, 5.0, false};
  const std::vector<double> theta = {0.25, 0.55};
  ControlVariates cv(dens, pts, clusters, theta);
  std::vector<double> d(T);
  double total = 0;
  for (std::size_t i = 0; i < T; ++i) total += d[i] = cv.d(i);
  std::vector<double> dhat;
  double mean_dhat = 0, mean_s2 = 0;
  for (std::size_t a = 0; a < T; ++a) {
    for (std::size_t b = 0; b < T; ++b) {
      const std::vector<std::size_t> idx = {a, b};
      dhat.push_back(subsample_dhat(d, idx));
      mean_dhat += dhat.back();
      mean_s2 += subsample_sigma2(d, idx);
    }
  }
  const double n = static_cast<double>(dhat.size());
  mean_dhat /= n;
  mean_s2 /= n;
  double var = 0;
  for (double v : dhat) var += (v - mean_dhat) * (v - mean_dhat) / n;
  r.check(std::abs(mean_dhat - total) <= 1e-12 * std::abs(total),
          "T=%zu, N=2: E[d-hat] %.15g vs d %.15g", T, mean_dhat, total);
  r.check(std::abs(mean_s2 - var) <= 1e-12 * var, "T=%zu, N=2: E[sigma-hat^2] %.15g vs V(d-hat) %.15g",
          T, mean_s2, var);
}

void subsampling(Report& r) {
  const auto t0 = std::chrono::steady_clock::now();
  enumerate(r, 3);
  enumerate(r, 4);

  const auto y = simulate_ar1_student_t(Ar1Model::m1, 0.3, 0.6, 5.0, 10000, 1);
  SubsampleOptions o;
  SubsampleEstimator est(y, o);
  {
    const std::vector<double> theta = {0.3, 0.6};
    BlockedRandomness u(est.block_layouts(), RngKind::mc, 3);
    const auto e = est.estimate(theta, u);
    ControlVariates cv(est.density(), est.points(), est.clusters(), theta);
    std::vector<double> d(est.num_terms());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = cv.d(i);
    std::vector<std::size_t> all;
    for (std::size_t k = 0; k < est.num_blocks(); ++k) {
      const auto idx = est.block_indices(u.block(k));
      all.insert(all.end(), idx.begin(), idx.end());
    }
    const double s2 = subsample_sigma2(d, all), dh = subsample_dhat(d, all);
    const double G = static_cast<double>(est.num_blocks());
    double product = 1;
    for (double v : e.per_block) product *= std::exp(v - s2 / (2 * G));
    const double joint = std::exp(dh - s2 / 2);
    r.check(std::abs(product / joint - 1) <= 1e-12,
            "block factorisation: prod_k exp(d_k - s2/(2G)) %.15g vs exp(d - s2/2) %.15g", product,
            joint);
  }

  SamplerConfig cfg;
  cfg.record_timing = false;
  cfg.seed = 11;
  const std::size_t iters = 55000, burn = 5000;
  const auto bpm = run_chain(est, cfg, iters, burn);
  SubsampleOptions full = o;
  full.full_data = true;
  SubsampleEstimator ref_est(y, full);
  cfg.kind = SamplerKind::ipm;
  cfg.seed = 12;
  const auto ref = run_chain(ref_est, cfg, iters, burn);
  const auto sb = summarize(bpm), sr = summarize(ref);
  const char* names[] = {"beta0", "beta1"};
  for (std::size_t j = 0; j < 2; ++j) {
    const double se_b = sb.posterior_sd[j] * std::sqrt(*sb.iact[j] / sb.draws);
    const double se_r = sr.posterior_sd[j] * std::sqrt(*sr.iact[j] / sr.draws);
    const double se = std::hypot(se_b, se_r);
    const double diff = sb.posterior_mean[j] - sr.posterior_mean[j];
    r.check(std::abs(diff) <= 3 * se,
            "T=1e4 %s: BPM mean %.5f, full-data mean %.5f, diff %.2e (3 SE = %.2e)", names[j],
            sb.posterior_mean[j], sr.posterior_mean[j], diff, 3 * se);
  }
  r.check(true, "BPM acceptance %.3f, full-data acceptance %.3f", sb.acceptance_rate,
          sr.acceptance_rate);
  const double secs = seconds_since(t0);
  r.check(secs < 600, "runtime %.1f s (< 600 s)", secs);
}

// ------------------------------------------------------------------ 8

bool boxes_exact(const std::vector<double>& pts, std::size_t d, std::size_t j0, std::size_t j1,
                 unsigned a, unsigned b) {
  const std::size_t n = pts.size() / d, na = std::size_t{1} << a, nb = std::size_t{1} << b;
  std::vector<std::size_t> count(na * nb, 0);
  for (std::size_t i = 0; i < n; ++i) {
    count[static_cast<std::size_t>(pts[i * d + j0] * na) * nb +
          static_cast<std::size_t>(pts[i * d + j1] * nb)]++;
  }
  for (auto c : count) {
    if (c != n / (na * nb)) return false;
  }
  return true;
}

std::vector<json> replication_summaries(const std::vector<ReplicationResult>& runs) {
  std::vector<json> out;
  for (const auto& r : runs) out.push_back(json::parse(summary_to_json(r.summary).dump()));
  return out;
}

json panel_doc(std::uint64_t seed, std::size_t reps, std::size_t iterations) {
  return {{"model", "panel"},
          {"seed", seed},
          {"iterations", iterations},
          {"burnin", iterations / 5},
          {"replications", reps},
          {"panel", {{"simulate", {{"panels", 200}, {"obs_per_panel", 5}, {"seed", 1}}}}},
          {"calibration", {{"enabled", true}}}};
}

void rqmc(Report& r) {
  bool strat = true;
  for (std::uint64_t seed = 0; seed < 100 && strat; ++seed) {
    const auto n8 = generate_scrambled_net({8, 1, seed});
    strat = strat && boxes_exact(n8, 1, 0, 0, 3, 0);
    const auto n16 = generate_scrambled_net({16, 2, seed});
    for (unsigned a = 0; a <= 4; ++a) strat = strat && boxes_exact(n16, 2, 0, 1, a, 4 - a);
    const auto n256 = generate_scrambled_net({256, 6, seed});
    for (std::size_t j = 0; j < 6; ++j) strat = strat && boxes_exact(n256, 6, j, j, 8, 0);
    // Only the leading pair of Sobol coordinates is a t = 0 net.
    for (unsigned a = 0; a <= 8; ++a) strat = strat && boxes_exact(n256, 6, 0, 1, a, 8 - a);
  }
  r.check(strat, "elementary-interval counts exact for 100 scramble seeds (N=8 d=1, N=16 d=2, N=256 d=6 per coordinate and leading pair)");

  const std::vector<std::size_t> sizes = {64, 128, 256, 512, 1024, 2048, 4096, 8192};
  for (auto f : {ProbeIntegrand::product, ProbeIntegrand::exponential}) {
    const auto p = rqmc_variance_rate_probe(f, 4, sizes, 40, 8);
    const char* name = f == ProbeIntegrand::product ? "product" : "exponential";
    r.check(std::abs(p.mc_slope + 1.0) <= 0.2, "%s integrand d=4: MC slope %.3f (-1 +- 0.2)", name,
            p.mc_slope);
    r.check(p.rqmc_slope <= -1.5, "%s integrand d=4: RQMC slope %.3f (<= -1.5)", name, p.rqmc_slope);
  }

  // Panel, static N calibrated per RNG kind at its own optimal block variance.
  auto doc = panel_doc(21, 3, 40000);
  const auto mc = run_experiment(parse_experiment_config(doc), false);
  doc["sampler"]["rng"] = "rqmc";
  const auto qmc = run_experiment(parse_experiment_config(doc), false);
  const auto table = ratio_table("BPM-RQMC", replication_summaries(qmc.runs), "BPM-MC",
                                 replication_summaries(mc.runs));
  const double tnv_ratio = num_or_inf(table["rows"][0]["tnv_ratio"]);
  r.check(tnv_ratio <= 1.0,
          "panel T=200, 3 replications: TNV(BPM-RQMC) / TNV(BPM-MC) = %.3f (<= 1); IACT ratio %.3f, "
          "CPU ratio %.3f",
          tnv_ratio, num_or_inf(table["rows"][0]["iact_ratio"]),
          num_or_inf(table["rows"][0]["cpu_ratio"]));
}

// ------------------------------------------------------------------ 9

void dominance(Report& r, const char* label, json doc) {
  doc["baseline"] = {{"enabled", true}, {"kind", "ipm"}};
  const auto res = run_experiment(parse_experiment_config(doc), false);
  for (std::size_t i = 0; i < res.runs.size(); ++i) {
    const auto& b = res.runs[i].summary;
    const auto& p = res.baseline_runs[i].summary;
    const double tb = b.tnv.value_or(kInf), tp = p.tnv.value_or(kInf);
    r.check(tb < tp && b.acceptance_rate > p.acceptance_rate,
            "%s replication %zu: TNV BPM %.3g vs IPM %.3g; acceptance BPM %.3f vs IPM %.3f%s", label,
            i, tb, tp, b.acceptance_rate, p.acceptance_rate,
            p.tnv ? "" : " (IPM chain never moved: IACT undefined)");
  }
}

void desk_dominance(Report& r) {
  dominance(r, "panel T=200", panel_doc(31, 5, 20000));
  dominance(r, "diffusion n=200",
            {{"model", "diffusion"},
             {"seed", 32},
             {"iterations", 20000},
             {"burnin", 4000},
             {"replications", 5},
             {"diffusion", {{"simulate", {{"intervals", 200}, {"seed", 1}}}}}});
}

// ------------------------------------------------------------------ 10

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void determinism(Report& r) {
  const fs::path root = fs::temp_directory_path() / "bpm_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::vector<std::pair<std::string, json>> configs = {
      {"toy", {{"model", "toy"}, {"iterations", 20000}, {"replications", 2}}},
      {"panel", {{"model", "panel"}, {"iterations", 2000}, {"replications", 2},
                 {"panel", {{"simulate", {{"panels", 200}}}}}, {"calibration", {{"enabled", true}}}}},
      {"panel-rqmc", {{"model", "panel"}, {"iterations", 1000}, {"sampler", {{"rng", "rqmc"}}},
                      {"panel", {{"simulate", {{"panels", 40}}}, {"groups", 20}}}}},
      {"subsample", {{"model", "subsample"}, {"iterations", 2000},
                     {"subsample", {{"simulate", {{"length", 5000}}}, {"subsample_size", 500}}}}},
      {"subsample-cpm", {{"model", "subsample"}, {"iterations", 1000},
                         {"sampler", {{"kind", "cpm"}}},
                         {"subsample", {{"simulate", {{"length", 2000}}}, {"subsample_size", 200},
                                        {"copula_indices", true}}}}},
      {"diffusion", {{"model", "diffusion"}, {"iterations", 1000},
                     {"diffusion", {{"simulate", {{"intervals", 60}}}, {"groups", 20}}}}}};
  for (const auto& [name, doc] : configs) {
    const fs::path cfg = root / (name + ".json");
    std::ofstream(cfg) << doc.dump();
    std::vector<std::string> outputs;
    for (const char* sub : {"a", "b"}) {
      const fs::path dir = root / name / sub;
      fs::create_directories(dir);
      const std::string cmd = std::string(BPM_CLI_PATH) + " run -c " + cfg.string() +
                              " --seed 77 --no-timing --output-dir " + dir.string() + " > " +
                              (dir / "report.json").string() + " 2>&1";
      const int status = std::system(cmd.c_str());
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) outputs.push_back("exit failure");
    }
    bool same = true;
    std::size_t files = 0;
    for (const auto& f : fs::directory_iterator(root / name / "a")) {
      if (f.path().filename() == "report.json") continue;
      ++files;
      same = same && slurp(f.path()) == slurp(root / name / "b" / f.path().filename());
    }
    // The JSON report embeds output paths; compare it with those removed.
    auto ra = json::parse(slurp(root / name / "a" / "report.json"));
    auto rb = json::parse(slurp(root / name / "b" / "report.json"));
    for (auto* rep : {&ra, &rb}) {
      for (auto& run : (*rep)["runs"]) {
        run.erase("chain");
        run.erase("summary");
      }
    }
    same = same && ra == rb && outputs.empty();
    r.check(same && files > 0, "%s: %zu output files byte-identical across two runs", name.c_str(), files);
  }
}

struct Criterion {
  int id;
  const char* title;
  std::function<void(Report&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int only = 0;
  app.add_option("--only", only, "Run a single criterion (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all = {
      {1, "toy experiment", toy_experiment},
      {2, "tuning constants", tuning_constants},
      {3, "acceptance-formula cross-validation", acceptance_formulas},
      {4, "inefficiency-factor oracle", inefficiency_oracle},
      {5, "correlation preservation", correlation_preservation},
      {6, "unbiasedness", unbiasedness},
      {7, "subsampling exactness", subsampling},
      {8, "RQMC", rqmc},
      {9, "desk-scale dominance over IPM", desk_dominance},
      {10, "determinism", determinism},
  };
  int failures = 0;
  for (const auto& c : all) {
    if (only && c.id != only) continue;
    Report rep;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(rep);
    } catch (const std::exception& e) {
      rep.check(false, "exception: %s", e.what());
    }
    const bool ok = rep.passed();
    failures += !ok;
    std::printf("%s criterion %d (%s) [%.1f s]\n", ok ? "PASS" : "FAIL", c.id, c.title,
                seconds_since(t0));
    for (const auto& [sub_ok, text] : rep.items) {
      std::printf("    %s %s\n", sub_ok ? "ok  " : "FAIL", text.c_str());
    }
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
