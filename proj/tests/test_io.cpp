#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bpm/experiment.hpp"
#include "bpm/io.hpp"
#include "bpm/toy.hpp"
#include "doctest.h"

using namespace bpm;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bpm_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(const std::string& args, const fs::path& dir) {
  const fs::path o = dir / "stdout.txt", e = dir / "stderr.txt";
  const std::string cmd = std::string(BPM_CLI_PATH) + " " + args + " > " + o.string() + " 2> " +
                          e.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
}

std::size_t data_rows(const std::string& csv) {
  std::size_t n = 0;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

ChainOutput toy_chain() {
  ToyEstimator toy(5, 0.4);
  SamplerConfig c;
  c.seed = 4;
  c.proposal.kind = ProposalKind::prior_independence;
  c.record_timing = false;
  return run_chain(toy, c, 600, 100);
}

const ChainFileInfo kInfo{"toy", "0123456789abcdef", 2.0, 0.5};

}  // namespace

TEST_CASE("chain CSV round trip") {
  const auto chain = toy_chain();
  std::stringstream ss;
  write_chain_csv(chain, kInfo, ss);
  const auto back = read_chain_csv(ss);
  CHECK(back.chain.draws == chain.draws);
  CHECK(back.chain.z_trace == chain.z_trace);
  CHECK(back.chain.accept_flags == chain.accept_flags);
  CHECK(back.chain.block_trace == chain.block_trace);
  CHECK(back.chain.param_names == chain.param_names);
  CHECK(back.chain.burnin == 100);
  CHECK(back.chain.iterations == 600);
  CHECK(back.info.model == "toy");
  CHECK(back.info.config_digest == kInfo.config_digest);
  CHECK(*back.info.sigma2 == 2.0);

  const auto a = summary_to_json(summarize(chain, summary_options(kInfo)));
  const auto b = summary_to_json(summarize(back.chain, summary_options(back.info)));
  CHECK(a.dump() == b.dump());
}

TEST_CASE("malformed chain files name the line") {
  const auto chain = toy_chain();
  std::stringstream ss;
  write_chain_csv(chain, kInfo, ss);
  const std::string text = ss.str();

  // Drop the last 10 rows.
  std::string cut = text;
  for (int i = 0; i < 11; ++i) cut.erase(cut.find_last_of('\n', cut.size() - 2) + 1);
  std::istringstream t(cut);
  try {
    read_chain_csv(t);
    FAIL("truncated file accepted");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    CHECK(e.line() > 0);
  }

  // Corrupt one cell: 14 metadata lines and the header, so iteration 104 is on line 20.
  std::string bad = text;
  const auto pos = bad.find("\n104,") + 1;
  bad.replace(bad.find(',', pos) + 1, 1, "x");
  std::istringstream b(bad);
  try {
    read_chain_csv(b);
    FAIL("corrupt file accepted");
  } catch (const ParseError& e) {
    CHECK(e.line() == 20);
    CHECK(std::string(e.what()).find("line 20") != std::string::npos);
  }
}

TEST_CASE("empty draw region") {
  const auto chain = toy_chain();
  std::stringstream ss;
  write_chain_csv(chain, kInfo, ss);
  std::string text = ss.str();
  text.erase(text.find("\n100,") + 1);
  text.replace(text.find("# iterations=600"), 16, "# iterations=100");
  const auto dir = scratch("empty");
  spit(dir / "empty.csv", text);
  CHECK_THROWS_WITH_AS(diagnose_chain_file((dir / "empty.csv").string()),
                       doctest::Contains("no draws"), DiagnosticError);
  const auto r = cli("diagnose " + (dir / "empty.csv").string(), dir);
  CHECK(r.code == 6);
  const auto err = json::parse(r.err);
  CHECK(err["error"]["type"] == "diagnostic_error");
}

TEST_CASE("diagnose reproduces the inline summary") {
  const auto dir = scratch("inline");
  json doc = {{"model", "toy"},
              {"seed", 5},
              {"iterations", 3000},
              {"replications", 2},
              {"toy", {{"blocks", 20}, {"block_sigma2", 0.5}}},
              {"output", {{"dir", dir.string()}, {"prefix", "c"}}}};
  const auto res = run_experiment(parse_experiment_config(doc));
  REQUIRE(res.runs.size() == 2);
  CHECK(res.runs[0].seed != res.runs[1].seed);
  for (const auto& run : res.runs) {
    const auto inline_text = slurp(run.summary_path);
    CHECK(diagnose_chain_file(run.chain_path).dump(2) + "\n" == inline_text);
    const auto r = cli("diagnose " + run.chain_path, dir);
    CHECK(r.code == 0);
    CHECK(r.out == inline_text);
  }
}

TEST_CASE("simulate via the CLI") {
  const auto dir = scratch("simulate");
  spit(dir / "sub.json",
       R"({"model": "subsample", "subsample": {"simulate": {"model": "m1", "theta": [0.3, 0.6], "nu": 5, "length": 10000, "seed": 1}}})");
  auto a = cli("simulate -c " + (dir / "sub.json").string() + " -o " + (dir / "a.csv").string(), dir);
  REQUIRE(a.code == 0);
  cli("simulate -c " + (dir / "sub.json").string() + " -o " + (dir / "b.csv").string(), dir);
  cli("simulate -c " + (dir / "sub.json").string() + " --seed 2 -o " + (dir / "c.csv").string(), dir);
  const auto text = slurp(dir / "a.csv");
  CHECK(text.rfind("t,y\n", 0) == 0);
  CHECK(data_rows(text) == 10000);
  CHECK(text == slurp(dir / "b.csv"));
  CHECK(text != slurp(dir / "c.csv"));

  spit(dir / "panel.json", R"({"model": "panel", "panel": {"simulate": {"panels": 200, "obs_per_panel": 5}}})");
  REQUIRE(cli("simulate -c " + (dir / "panel.json").string() + " -o " + (dir / "p.csv").string(), dir).code == 0);
  const auto p = slurp(dir / "p.csv");
  CHECK(p.rfind("panel_id,obs_id,y,x1,x2\n", 0) == 0);
  CHECK(data_rows(p) == 1000);

  spit(dir / "cir.json", R"({"model": "diffusion", "diffusion": {"simulate": {"intervals": 200}}})");
  REQUIRE(cli("simulate -c " + (dir / "cir.json").string() + " -o " + (dir / "x.csv").string(), dir).code == 0);
  const auto x = slurp(dir / "x.csv");
  CHECK(x.rfind("t,x\n", 0) == 0);
  CHECK(data_rows(x) == 201);
}

TEST_CASE("CLI errors are JSON on stderr with distinct exit codes") {
  const auto dir = scratch("errors");
  auto r = cli("run -c " + (dir / "missing.json").string(), dir);
  CHECK(r.code == 4);
  CHECK(json::parse(r.err)["error"]["type"] == "io_error");

  spit(dir / "bad.json", "{\"model\": \"toy\",\n \"seed\": }\n");
  r = cli("run -c " + (dir / "bad.json").string(), dir);
  CHECK(r.code == 3);
  CHECK(json::parse(r.err)["error"]["type"] == "parse_error");

  spit(dir / "cfg.json", R"({"model": "toy", "sampler": {"kind": "bpm", "rng": "rqmc"}, "toy": {"blocks": 3}})");
  r = cli("run -c " + (dir / "cfg.json").string() + " --sampler cpm", dir);
  CHECK(r.code == 2);
  CHECK(json::parse(r.err)["error"]["type"] == "config_error");

  r = cli("run", dir);
  CHECK(r.code == 2);
  CHECK(json::parse(r.err)["error"]["type"] == "usage");

  spit(dir / "chain.csv", "iter,accept,block,z,wall_ms,theta_0\n0,1,0,0.5,0\n");
  r = cli("diagnose " + (dir / "chain.csv").string(), dir);
  CHECK(r.code == 3);
  const auto e = json::parse(r.err);
  CHECK(e["error"]["line"] == 2);
}

TEST_CASE("runs are byte-identical without timing") {
  const auto dir = scratch("determinism");
  spit(dir / "toy.json",
       R"({"model": "toy", "seed": 9, "iterations": 5000, "replications": 2, "toy": {"blocks": 100, "block_sigma2": 2.34}})");
  for (const char* sub : {"a", "b"}) {
    fs::create_directories(dir / sub);
    const auto r = cli("run -c " + (dir / "toy.json").string() + " --no-timing --baseline --baseline-kind ipm --output-dir " +
                           (dir / sub).string(),
                       dir);
    REQUIRE(r.code == 0);
  }
  std::size_t files = 0;
  for (const auto& f : fs::directory_iterator(dir / "a")) {
    ++files;
    CHECK(slurp(f.path()) == slurp(dir / "b" / f.path().filename()));
  }
  // Two replications of each sampler, with summaries, plus the ratio table.
  CHECK(files == 9);
  const auto ratios = json::parse(slurp(dir / "a" / "chain_ratios.json"));
  CHECK(ratios["rows"].size() == 2);
}

TEST_CASE("tune") {
  const auto dir = scratch("tune");
  auto r = cli("tune --varpi 0.5 --rho 0.99", dir);
  REQUIRE(r.code == 0);
  auto t = json::parse(r.out);
  CHECK(std::abs(t["tau"].get<double>() - 2.16) < 0.05);
  CHECK(std::abs(t["acceptance"].get<double>() - 0.28) < 0.02);

  r = cli("tune --rng rqmc --rho 0.99", dir);
  t = json::parse(r.out);
  CHECK(std::abs(t["tau"].get<double>() - 0.82) < 0.05);

  r = cli("tune -G 100", dir);
  t = json::parse(r.out);
  CHECK(t["groups"] == 100);
  CHECK(std::abs(t["block_variance_target"].get<double>() - 2.32) < 0.05);
}
