#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpm/diagnostics.hpp"
#include "bpm/sampler.hpp"
#include "json.hpp"

namespace bpm {

/// Malformed input file. line() is 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// File could not be opened or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Minimal comma-separated reader: no quoting. Lines starting with '#' before
/// the header are collected as metadata; blank lines are skipped.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in);

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::string>& comments() const { return comments_; }
  /// Next data row; false at end of input. Rows must match the header width.
  bool next(std::vector<std::string>& row);
  /// Parse a numeric cell ("nan", "inf", "-inf" accepted).
  double number(const std::vector<std::string>& row, std::size_t col) const;
  long integer(const std::vector<std::string>& row, std::size_t col) const;
  /// Line number of the last row returned.
  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  std::vector<std::string> header_;
  std::vector<std::string> comments_;
  std::size_t line_ = 0;
};

std::vector<std::string> split_csv_line(const std::string& line);

/// Shortest text that reads back to the same double ("%.17g"; nan/inf spelled out).
std::string format_double(double v);

/// Extra values stored in the chain CSV preamble so that diagnose reproduces
/// the inline summary.
struct ChainFileInfo {
  std::string model;
  std::string config_digest;
  std::optional<double> sigma2;
  double varpi = 0.5;
};

/// Chain CSV: "# key=value" lines, then
/// iter,accept,block,z,wall_ms,theta_0,...,theta_{p-1}; post-burn-in rows only.
void write_chain_csv(const ChainOutput& chain, const ChainFileInfo& info, std::ostream& out);

struct ChainFile {
  ChainOutput chain;
  ChainFileInfo info;
};
ChainFile read_chain_csv(std::istream& in);

SummaryOptions summary_options(const ChainFileInfo& info);

/// Key order is fixed; unavailable values are null.
nlohmann::ordered_json summary_to_json(const ChainSummary& summary);

/// 16 hex digits (FNV-1a 64) of the given canonical text.
std::string digest_hex(const std::string& text);

/// Ratio row used by --baseline: method / baseline for IACT, CPU and TNV.
struct RatioRow {
  std::optional<double> iact_ratio;
  std::optional<double> cpu_ratio;
  std::optional<double> tnv_ratio;
};
/// Pure function of two summary documents.
RatioRow ratio_row(const nlohmann::json& method, const nlohmann::json& baseline);

}  // namespace bpm
