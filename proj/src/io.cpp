#include "bpm/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "bpm/randomness.hpp"

namespace bpm {

ParseError::ParseError(std::size_t line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  for (auto& cell : out) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
  }
  return out;
}

CsvReader::CsvReader(std::istream& in) : in_(in) {
  std::string text;
  while (std::getline(in_, text)) {
    ++line_;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.empty()) continue;
    if (text[0] == '#') {
      comments_.push_back(text.substr(1));
      continue;
    }
    header_ = split_csv_line(text);
    return;
  }
  throw ParseError(line_ == 0 ? 1 : line_, "missing header");
}

bool CsvReader::next(std::vector<std::string>& row) {
  std::string text;
  while (std::getline(in_, text)) {
    ++line_;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.empty()) continue;
    row = split_csv_line(text);
    if (row.size() != header_.size()) {
      throw ParseError(line_, "expected " + std::to_string(header_.size()) + " fields, got " +
                                  std::to_string(row.size()));
    }
    return true;
  }
  return false;
}

double CsvReader::number(const std::vector<std::string>& row, std::size_t col) const {
  const std::string& s = row.at(col);
  if (s == "nan" || s == "NaN") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(line_, "column '" + header_.at(col) + "': not a number: '" + s + "'");
  }
  return v;
}

long CsvReader::integer(const std::vector<std::string>& row, std::size_t col) const {
  const std::string& s = row.at(col);
  long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(line_, "column '" + header_.at(col) + "': not an integer: '" + s + "'");
  }
  return v;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_chain_csv(const ChainOutput& chain, const ChainFileInfo& info, std::ostream& out) {
  const auto& m = chain.meta;
  out << "# model=" << info.model << '\n';
  out << "# sampler=" << to_string(m.kind) << '\n';
  out << "# rng=" << to_string(m.rng_kind) << '\n';
  out << "# blocks=" << m.num_blocks << '\n';
  out << "# cpm_correlation=" << format_double(m.cpm_correlation) << '\n';
  out << "# seed=" << m.seed << '\n';
  out << "# iterations=" << chain.iterations << '\n';
  out << "# burnin=" << chain.burnin << '\n';
  out << "# params=";
  for (std::size_t j = 0; j < chain.param_names.size(); ++j) {
    out << (j ? ";" : "") << chain.param_names[j];
  }
  out << '\n';
  out << "# timed=" << (chain.timed ? 1 : 0) << '\n';
  out << "# wall_seconds=" << format_double(chain.wall_seconds) << '\n';
  out << "# sigma2=" << (info.sigma2 ? format_double(*info.sigma2) : "none") << '\n';
  out << "# varpi=" << format_double(info.varpi) << '\n';
  out << "# config_digest=" << info.config_digest << '\n';

  out << "iter,accept,block,z,wall_ms";
  for (std::size_t j = 0; j < chain.num_params; ++j) out << ",theta_" << j;
  out << '\n';
  for (std::size_t i = 0; i < chain.size(); ++i) {
    out << chain.burnin + i << ',' << int(chain.accept_flags[i]) << ',' << chain.block_trace[i]
        << ',' << format_double(chain.z_trace[i]) << ',' << format_double(chain.wall_ms[i]);
    for (std::size_t j = 0; j < chain.num_params; ++j) out << ',' << format_double(chain.draw(i, j));
    out << '\n';
  }
}

namespace {

std::string meta_value(const std::vector<std::string>& comments, const std::string& key) {
  for (const auto& c : comments) {
    auto s = c;
    while (!s.empty() && s.front() == ' ') s.erase(s.begin());
    if (s.rfind(key + "=", 0) == 0) return s.substr(key.size() + 1);
  }
  return {};
}

}  // namespace

ChainFile read_chain_csv(std::istream& in) {
  CsvReader reader(in);
  const auto& header = reader.header();
  static const char* kFixed[] = {"iter", "accept", "block", "z", "wall_ms"};
  if (header.size() < 6) throw ParseError(reader.line(), "chain header needs at least one theta column");
  for (std::size_t i = 0; i < 5; ++i) {
    if (header[i] != kFixed[i]) {
      throw ParseError(reader.line(), std::string("chain header column ") + std::to_string(i) +
                                          " must be '" + kFixed[i] + "'");
    }
  }
  const std::size_t p = header.size() - 5;
  for (std::size_t j = 0; j < p; ++j) {
    if (header[5 + j] != "theta_" + std::to_string(j)) {
      throw ParseError(reader.line(), "expected column theta_" + std::to_string(j));
    }
  }

  ChainFile file;
  auto& chain = file.chain;
  const auto& comments = reader.comments();
  auto meta_number = [&](const std::string& key, double fallback) {
    const auto v = meta_value(comments, key);
    if (v.empty()) return fallback;
    try {
      return std::stod(v);
    } catch (const std::exception&) {
      throw ParseError(1, "bad metadata value for " + key);
    }
  };
  file.info.model = meta_value(comments, "model");
  file.info.config_digest = meta_value(comments, "config_digest");
  const auto s2 = meta_value(comments, "sigma2");
  if (!s2.empty() && s2 != "none") file.info.sigma2 = meta_number("sigma2", 0.0);
  file.info.varpi = meta_number("varpi", 0.5);

  chain.num_params = p;
  const auto names = meta_value(comments, "params");
  if (!names.empty()) {
    std::stringstream ss(names);
    std::string name;
    while (std::getline(ss, name, ';')) chain.param_names.push_back(name);
  }
  if (chain.param_names.size() != p) {
    chain.param_names.clear();
    for (std::size_t j = 0; j < p; ++j) chain.param_names.push_back("theta_" + std::to_string(j));
  }
  chain.burnin = static_cast<std::size_t>(meta_number("burnin", 0));
  chain.timed = meta_number("timed", 1) != 0.0;
  chain.wall_seconds = meta_number("wall_seconds", 0.0);
  if (const auto v = meta_value(comments, "sampler"); !v.empty()) chain.meta.kind = parse_sampler_kind(v);
  if (const auto v = meta_value(comments, "rng"); !v.empty()) chain.meta.rng_kind = parse_rng_kind(v);
  chain.meta.num_blocks = static_cast<std::size_t>(meta_number("blocks", 0));
  chain.meta.cpm_correlation = meta_number("cpm_correlation", 0.0);
  if (const auto v = meta_value(comments, "seed"); !v.empty()) chain.meta.seed = std::stoull(v);
  chain.meta.record_timing = chain.timed;

  std::vector<std::string> row;
  std::size_t expected_iter = chain.burnin;
  while (reader.next(row)) {
    const long iter = reader.integer(row, 0);
    if (iter < 0 || static_cast<std::size_t>(iter) != expected_iter) {
      throw ParseError(reader.line(), "iteration " + std::to_string(iter) + " out of sequence (expected " +
                                          std::to_string(expected_iter) + ")");
    }
    ++expected_iter;
    const long acc = reader.integer(row, 1);
    if (acc != 0 && acc != 1) throw ParseError(reader.line(), "accept must be 0 or 1");
    chain.accept_flags.push_back(static_cast<std::uint8_t>(acc));
    chain.block_trace.push_back(reader.integer(row, 2));
    chain.z_trace.push_back(reader.number(row, 3));
    chain.wall_ms.push_back(reader.number(row, 4));
    for (std::size_t j = 0; j < p; ++j) {
      const double v = reader.number(row, 5 + j);
      if (!std::isfinite(v)) throw ParseError(reader.line(), "non-finite draw");
      chain.draws.push_back(v);
    }
  }
  chain.iterations = static_cast<std::size_t>(meta_number("iterations", double(expected_iter)));
  if (chain.iterations != expected_iter) {
    throw ParseError(reader.line(), "file ends at iteration " + std::to_string(expected_iter) +
                                        " but metadata declares " +
                                        std::to_string(chain.iterations) + " (truncated?)");
  }
  return file;
}

SummaryOptions summary_options(const ChainFileInfo& info) {
  SummaryOptions o;
  o.sigma2 = info.sigma2;
  o.varpi = info.varpi;
  o.config_digest = info.config_digest;
  return o;
}

nlohmann::ordered_json summary_to_json(const ChainSummary& s) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::ordered_json {
    if (v && std::isfinite(*v)) return *v;
    return nullptr;
  };
  nlohmann::ordered_json j;
  j["acceptance_rate"] = s.acceptance_rate;
  auto iact = nlohmann::ordered_json::array();
  for (const auto& v : s.iact) iact.push_back(opt(v));
  j["iact"] = iact;
  j["mean_iact"] = opt(s.mean_iact);
  j["cpu_seconds"] = opt(s.cpu_seconds);
  j["tnv"] = opt(s.tnv);
  j["posterior_mean"] = s.posterior_mean;
  j["posterior_sd"] = s.posterior_sd;
  j["config_digest"] = s.config_digest;
  j["draws"] = s.draws;
  j["param_names"] = s.param_names;
  j["empirical_ct"] = opt(s.empirical_ct);
  nlohmann::ordered_json errors = nlohmann::ordered_json::object();
  for (const auto& [k, v] : s.iact_errors) errors[k] = v;
  j["iact_errors"] = errors;
  return j;
}

std::string digest_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RatioRow ratio_row(const nlohmann::json& method, const nlohmann::json& baseline) {
  auto ratio = [&](const char* key) -> std::optional<double> {
    if (!method.contains(key) || !baseline.contains(key)) return std::nullopt;
    const auto& a = method[key];
    const auto& b = baseline[key];
    if (!a.is_number() || !b.is_number()) return std::nullopt;
    const double den = b.get<double>();
    if (den == 0.0) return std::nullopt;
    return a.get<double>() / den;
  };
  return {ratio("mean_iact"), ratio("cpu_seconds"), ratio("tnv")};
}

}  // namespace bpm
