#pragma once

// Command-line front end: configuration parsing (flags over a flat
// key=value file), dispatch to the experiments, CSV and manifest output.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "twoscale/models.hpp"

namespace twoscale::cli {

/// Bad flag, file or value. `key()` names the offending setting.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Printed when help is requested; parse_config throws it so callers can exit 0.
struct HelpRequested {
  std::string text;
};

inline constexpr std::uint64_t kDefaultSeed = 20240611;

struct RunConfig {
  std::string subcommand;
  /// Model or generator name (the chain-only subcommands accept either).
  std::string model;
  /// Generator override for models; empty keeps the model's own.
  std::string generator;
  ParamMap params;

  std::size_t trunc = 100;
  double x = 0.5;
  double y = 0.6;
  State i0 = 1;
  double T = 1.0;
  std::optional<double> dt;
  double eps = 0.01;
  double alpha = 0.01;
  std::vector<std::pair<double, double>> grid;
  std::size_t replicates = 400;
  double beta = 1.0;
  std::size_t m_max = 50;
  std::uint64_t seed = kDefaultSeed;
  std::string out = "out";

  std::string kind = "l1";
  std::vector<std::string> testfns;
  std::string mode = "blowup";
  std::size_t pairs = 200;
  double lo = 0.0;
  double hi = 6.283185307179586;
  double t_max = 40.0;
  std::size_t t_points = 80;
  std::optional<double> window_lo;
  std::optional<double> window_hi;
  bool allow_large_step = false;
  std::size_t jump_log_replicates = 10;

  /// Every setting that influenced the run, as key=value, sorted by key.
  std::vector<std::pair<std::string, std::string>> manifest;
};

/// Keys accepted in files and as --key flags, with defaults and help.
struct KeyInfo {
  const char* name;
  const char* default_value;
  const char* help;
};
const std::vector<KeyInfo>& known_keys();

/// args excludes the program name. Throws ConfigError or HelpRequested.
RunConfig parse_config(const std::vector<std::string>& args);

/// Reads a key=value file into (key, value) pairs; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

/// Executes the subcommand. Returns 0 on success, 2 on numerical failure,
/// 3 on I/O failure, 1 on other library errors; diagnostics go to err.
int run(const RunConfig& config, std::ostream& err);

/// parse_config + run with exit codes; 1 for configuration errors.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace twoscale::cli
