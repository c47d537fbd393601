#pragma once

// Experiment runner: JSON config in, CSV table and summary JSON out.

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "foldlab/errors.hpp"

namespace foldlab::cli {

using json = nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailed = 2;

inline constexpr int kCsvSchema = 1;

/// Malformed or out-of-range configuration (exit 1).
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// One declared check. pass is re-derivable from value, expected, tolerance
/// and comparator: "abs" |value - expected| <= tol, "le" value <= expected + tol,
/// "ge" value >= expected - tol, "eq" value == expected.
struct Check {
  std::string name;
  double value = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  std::string comparator = "abs";
  bool pass = false;
};

Check make_check(std::string name, double value, double expected, double tolerance,
                 std::string comparator = "abs");

using Cell = std::variant<std::string, double, long long, bool>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

struct Report {
  std::string experiment;
  std::string config_hash;
  std::uint64_t seed = 0;
  Table table;
  std::vector<Check> checks;
  json results = json::object();  // measured quantities (slopes, constants, ...)
  double wall_seconds = 0.0;

  bool pass() const;
};

struct ExperimentInfo {
  std::string name;
  std::string anchor;
  std::string summary;
};

const std::vector<ExperimentInfo>& experiments();
std::string list_experiments();

/// %.12g
std::string format_number(double v);
/// FNV-1a 64 of the canonical (key-sorted, compact) dump, as 16 hex digits.
std::string config_hash(const json& config);

/// Validates the whole config (ConfigError on any problem), then computes.
/// Numerical failures during the computation propagate as their own types.
Report run(const json& config, std::uint64_t seed);

std::string to_csv(const Report& r);
json to_summary(const Report& r);

/// Writes <dir>/<experiment>.csv and <dir>/<experiment>.summary.json.
void write_report(const Report& r, const std::string& dir);

/// The foldlab command line; returns the process exit code.
int main(int argc, char** argv);

}  // namespace foldlab::cli
