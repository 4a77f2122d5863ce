#include "twoscale/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "twoscale/averaging.hpp"
#include "twoscale/chain_core.hpp"
#include "twoscale/csv.hpp"
#include "twoscale/error.hpp"
#include "twoscale/regularity.hpp"
#include "twoscale/skorokhod.hpp"
#include "twoscale/two_scale.hpp"

namespace twoscale::cli {

namespace {

const std::vector<std::string> kSubcommands{"invariant", "ergodicity", "regularity",
                                            "coupling",  "simulate",   "average"};

class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  if (!text.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v))
    throw ConfigError(key, "invalid value for '" + key + "': '" + text + "' is not a finite number");
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError(key, "invalid value for '" + key + "': '" + text + "' is not a nonnegative integer");
  return v;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) parts.push_back(cur);
  }
  return parts;
}

bool is_generator(const std::string& name) {
  const auto names = generator_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

bool is_model(const std::string& name) {
  const auto names = model_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

bool needs_model(const std::string& sub) { return sub == "simulate" || sub == "average"; }

std::string default_model(const std::string& sub) {
  if (needs_model(sub)) return "sin-coupled";
  if (sub == "coupling") return "bd_example233";
  if (sub == "regularity") return "bd_example21";
  return "bd_example21";
}

// Defaults of every parameter the run will use.
ParamMap resolved_params(const RunConfig& c) {
  ParamMap all;
  if (is_model(c.model)) {
    all = model_defaults(c.model);
    const std::string gen =
        c.generator.empty() ? make_model(c.model, c.params).generator.name() : c.generator;
    for (const auto& [k, v] : generator_defaults(gen)) all.emplace(k, v);
  } else {
    all = generator_defaults(c.model);
  }
  for (const auto& [k, v] : c.params) all[k] = v;
  return all;
}

GeneratorFamily resolve_family(const RunConfig& c) {
  if (is_generator(c.model)) return make_generator(c.model, c.params);
  return make_model(c.model, c.params, c.generator).generator;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

template <class Writer>
void write_file(const std::filesystem::path& path, Writer&& writer) {
  auto out = open_output(path);
  writer(out);
  finish(out, path);
}

}  // namespace

const std::vector<KeyInfo>& known_keys() {
  static const std::vector<KeyInfo> keys{
      {"model", "", "model or generator name (default depends on the subcommand)"},
      {"generator", "", "generator family override for a model"},
      {"trunc", "100", "truncation size M (>= 2)"},
      {"x", "0.5", "parameter point x"},
      {"y", "0.6", "second parameter point y (coupling)"},
      {"i0", "1", "initial fast state (coupling)"},
      {"T", "1", "time horizon"},
      {"dt", "", "time step (default alpha/20 for simulate, min(alpha/20, alpha^0.75/10) for average)"},
      {"eps", "0.01", "slow noise intensity epsilon (simulate)"},
      {"alpha", "0.01", "fast time scale alpha (simulate)"},
      {"grid", "0.2:0.2,0.1:0.1,0.05:0.05,0.02:0.02", "experiment cells eps:alpha,eps:alpha,..."},
      {"replicates", "400", "Monte Carlo replicates per cell or pair"},
      {"beta", "1", "Hoelder exponent in (0, 1]"},
      {"m_max", "50", "largest m of the blow-up table (>= 2)"},
      {"seed", "20240611", "64-bit seed"},
      {"out", "out", "output directory"},
      {"kind", "l1", "average experiment kind: l1 or weak"},
      {"testfn", "tanh", "weak test functions, comma separated: const, tanh, clip"},
      {"mode", "blowup", "regularity mode: blowup or probe"},
      {"pairs", "200", "sampled pairs for the regularity probe"},
      {"lo", "0", "lower end of the probe range"},
      {"hi", "6.283185307179586", "upper end of the probe range"},
      {"t_max", "40", "largest time for the ergodicity fit"},
      {"t_points", "80", "number of equally spaced times for the ergodicity fit"},
      {"window_lo", "", "explicit fit window start"},
      {"window_hi", "", "explicit fit window end"},
      {"allow_large_step", "0", "accept dt > alpha/10 (0 or 1)"},
      {"jump_log_replicates", "10", "replicates written to coupling_jumps.csv"},
  };
  return keys;
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read config file '" + path + "'");
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config", path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(body.substr(0, eq));
    if (key.empty())
      throw ConfigError("config", path + ":" + std::to_string(lineno) + ": empty key");
    entries.emplace_back(std::move(key), trim(body.substr(eq + 1)));
  }
  return entries;
}

RunConfig parse_config(const std::vector<std::string>& args) {
  CLI::App app{"Two-time-scale regime-switching diffusions: invariant measures, ergodicity, "
               "regularity, couplings and averaging experiments.",
               "twoscale"};
  std::string subcommand, config_path;
  std::vector<std::string> param_flags;
  std::map<std::string, std::string> flag_values;
  app.add_option("subcommand", subcommand, "one of: invariant, ergodicity, regularity, coupling, "
                                           "simulate, average")
      ->required();
  app.add_option("--config", config_path, "key=value file; flags override it");
  app.add_option("--param", param_flags,
                 "model or generator parameter name=value (file key: param.name)")
      ->take_all();
  for (const auto& k : known_keys())
    app.add_option(std::string("--") + k.name, flag_values[k.name],
                   std::string(k.help) + (*k.default_value ? std::string(" [") + k.default_value + "]" : ""));
  app.footer("Thread count: environment variable TWOSCALE_THREADS (speed only).");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested{app.help()};
  } catch (const CLI::ParseError& e) {
    throw ConfigError("", e.what());
  }

  if (std::find(kSubcommands.begin(), kSubcommands.end(), subcommand) == kSubcommands.end())
    throw ConfigError("subcommand", "unknown subcommand '" + subcommand + "'");

  std::map<std::string, std::string> values;
  for (const auto& k : known_keys()) values[k.name] = k.default_value;
  ParamMap params;
  auto set_param = [&](const std::string& origin, const std::string& name, const std::string& v) {
    if (name.empty()) throw ConfigError(origin, "empty parameter name in '" + origin + "'");
    params[name] = to_double("param." + name, v);
  };
  if (!config_path.empty()) {
    for (const auto& [key, value] : read_config_file(config_path)) {
      if (key.rfind("param.", 0) == 0) {
        set_param(key, key.substr(6), value);
      } else if (values.contains(key)) {
        values[key] = value;
      } else {
        throw ConfigError(key, "unknown key '" + key + "' in " + config_path);
      }
    }
  }
  for (const auto& k : known_keys())
    if (app.count(std::string("--") + k.name) > 0) values[k.name] = flag_values[k.name];
  for (const auto& p : param_flags) {
    const auto eq = p.find('=');
    if (eq == std::string::npos) throw ConfigError("param", "--param expects name=value, got '" + p + "'");
    set_param("param", trim(p.substr(0, eq)), trim(p.substr(eq + 1)));
  }

  RunConfig c;
  c.subcommand = subcommand;
  c.params = params;
  c.model = values["model"].empty() ? default_model(subcommand) : values["model"];
  values["model"] = c.model;
  c.generator = values["generator"];
  if (needs_model(subcommand) && !is_model(c.model))
    throw ConfigError("model", "subcommand '" + subcommand + "' needs a model, got '" + c.model + "'");
  if (!is_model(c.model) && !is_generator(c.model))
    throw ConfigError("model", "unknown model or generator '" + c.model + "'");
  if (!c.generator.empty() && !is_generator(c.generator))
    throw ConfigError("generator", "unknown generator '" + c.generator + "'");
  if (!c.generator.empty() && !is_model(c.model))
    throw ConfigError("generator", "'generator' only applies to models");

  auto size_key = [&](const char* key, std::uint64_t min) {
    const auto v = to_u64(key, values[key]);
    if (v < min)
      throw ConfigError(key, std::string("invalid value for '") + key + "': must be >= " + std::to_string(min));
    return static_cast<std::size_t>(v);
  };
  auto real_key = [&](const char* key) { return to_double(key, values[key]); };
  auto positive_key = [&](const char* key) {
    const double v = real_key(key);
    if (!(v > 0.0)) throw ConfigError(key, std::string("invalid value for '") + key + "': must be positive");
    return v;
  };

  c.trunc = size_key("trunc", 2);
  c.x = real_key("x");
  c.y = real_key("y");
  c.i0 = size_key("i0", 1);
  if (c.i0 > c.trunc) throw ConfigError("i0", "invalid value for 'i0': must not exceed trunc");
  c.T = positive_key("T");
  if (!values["dt"].empty()) c.dt = positive_key("dt");
  c.eps = real_key("eps");
  if (c.eps < 0.0) throw ConfigError("eps", "invalid value for 'eps': must be nonnegative");
  c.alpha = positive_key("alpha");
  for (const auto& cell : split(values["grid"], ',')) {
    const auto colon = cell.find(':');
    if (colon == std::string::npos) throw ConfigError("grid", "invalid value for 'grid': cells are eps:alpha");
    const double e = to_double("grid", trim(cell.substr(0, colon)));
    const double a = to_double("grid", trim(cell.substr(colon + 1)));
    if (e < 0.0 || !(a > 0.0)) throw ConfigError("grid", "invalid value for 'grid': need eps >= 0, alpha > 0");
    c.grid.emplace_back(e, a);
  }
  if (c.grid.empty()) throw ConfigError("grid", "invalid value for 'grid': no cells");
  c.replicates = size_key("replicates", 1);
  c.beta = real_key("beta");
  if (!(c.beta > 0.0 && c.beta <= 1.0)) throw ConfigError("beta", "invalid value for 'beta': must lie in (0, 1]");
  c.m_max = size_key("m_max", 2);
  c.seed = to_u64("seed", values["seed"]);
  c.out = values["out"];
  if (c.out.empty()) throw ConfigError("out", "invalid value for 'out': empty path");
  c.kind = values["kind"];
  if (c.kind != "l1" && c.kind != "weak") throw ConfigError("kind", "invalid value for 'kind': use l1 or weak");
  c.testfns = split(values["testfn"], ',');
  for (const auto& f : c.testfns)
    if (f != "const" && f != "tanh" && f != "clip")
      throw ConfigError("testfn", "invalid value for 'testfn': unknown test function '" + f + "'");
  c.mode = values["mode"];
  if (c.mode != "blowup" && c.mode != "probe") throw ConfigError("mode", "invalid value for 'mode': use blowup or probe");
  c.pairs = size_key("pairs", 1);
  c.lo = real_key("lo");
  c.hi = real_key("hi");
  if (!(c.hi > c.lo)) throw ConfigError("hi", "invalid value for 'hi': must exceed lo");
  c.t_max = positive_key("t_max");
  c.t_points = size_key("t_points", 2);
  if (!values["window_lo"].empty()) c.window_lo = real_key("window_lo");
  if (!values["window_hi"].empty()) c.window_hi = real_key("window_hi");
  if (c.window_lo.has_value() != c.window_hi.has_value())
    throw ConfigError(c.window_lo ? "window_hi" : "window_lo", "window_lo and window_hi must be given together");
  if (c.window_lo && !(*c.window_hi > *c.window_lo))
    throw ConfigError("window_hi", "invalid value for 'window_hi': must exceed window_lo");
  const auto large = size_key("allow_large_step", 0);
  if (large > 1) throw ConfigError("allow_large_step", "invalid value for 'allow_large_step': use 0 or 1");
  c.allow_large_step = large == 1;
  c.jump_log_replicates = size_key("jump_log_replicates", 0);

  // Parameters are validated by constructing the objects they configure.
  ParamMap all;
  try {
    if (is_model(c.model)) make_model(c.model, c.params, c.generator);
    else make_generator(c.model, c.params);
    all = resolved_params(c);
  } catch (const Error& e) {
    throw ConfigError("param", e.what());
  }

  values["subcommand"] = subcommand;
  if (subcommand == "regularity" && c.mode == "blowup")
    values["blowup_trunc"] = std::to_string(std::max(c.trunc, 60 * c.m_max));
  for (const auto& [k, v] : values) c.manifest.emplace_back(k, v);
  for (const auto& [k, v] : all) c.manifest.emplace_back("param." + k, format_double(v));
  std::sort(c.manifest.begin(), c.manifest.end());
  return c;
}

namespace {

void run_invariant(const RunConfig& c, const std::filesystem::path& dir) {
  const auto family = resolve_family(c);
  const auto pi = invariant_measure(truncate(family, point(c.x), c.trunc));
  write_file(dir / "invariant.csv", [&](std::ostream& out) {
    CsvWriter csv(out);
    csv.header({"i", "pi_i"});
    for (State i = 1; i <= pi.size(); ++i) {
      csv.cell(static_cast<std::uint64_t>(i)).cell(pi.prob(i));
      csv.end_row();
    }
  });
}

void run_ergodicity(const RunConfig& c, const std::filesystem::path& dir) {
  const auto family = resolve_family(c);
  std::vector<double> times;
  for (std::size_t k = 1; k <= c.t_points; ++k)
    times.push_back(c.t_max * static_cast<double>(k) / static_cast<double>(c.t_points));
  FitOptions options;
  if (c.window_lo) options.window = std::make_pair(*c.window_lo, *c.window_hi);
  const auto fit = fit_ergodic_rate(family, point(c.x), c.trunc, times, options);
  write_file(dir / "ergodicity.csv", [&](std::ostream& out) {
    CsvWriter csv(out);
    csv.header({"t", "distance", "used"});
    for (const auto& s : fit.samples) {
      csv.cell(s.time).cell(s.distance).cell(s.used ? 1 : 0);
      csv.end_row();
    }
  });
  write_file(dir / "ergodicity_fit.csv", [&](std::ostream& out) {
    CsvWriter csv(out);
    csv.header({"c", "lambda", "t_lo", "t_hi", "residual", "probes"});
    csv.cell(fit.c).cell(fit.lambda).cell(fit.t_lo).cell(fit.t_hi).cell(fit.residual);
    csv.cell(static_cast<std::uint64_t>(fit.probes.size()));
    csv.end_row();
  });
}

void run_regularity(const RunConfig& c, const std::filesystem::path& dir) {
  if (c.mode == "blowup") {
    const auto rows = blowup_table(c.m_max, c.beta, std::max(c.trunc, 60 * c.m_max));
    write_file(dir / "regularity.csv", [&](std::ostream& out) { write_blowup_csv(out, rows); });
    return;
  }
  const auto family = resolve_family(c);
  const double max_gap = std::min(1.0, c.hi - c.lo);
  const auto pairs = sample_pairs(c.lo, c.hi, c.pairs, c.seed, std::min(1e-4, max_gap), max_gap);
  const auto probe = lipschitz_probe(family, pairs, c.beta, c.trunc);
  write_file(dir / "regularity.csv", [&](std::ostream& out) { write_probe_csv(out, probe); });
}

void run_coupling(const RunConfig& c, const std::filesystem::path& dir) {
  const auto family = resolve_family(c);
  const std::vector<std::pair<Point, Point>> pairs{{point(c.x), point(c.y)}};
  const auto rows = coupling_bound_report(family, pairs, c.i0, c.T, c.trunc, c.replicates, c.seed);
  write_file(dir / "coupling.csv", [&](std::ostream& out) {
    CsvWriter csv(out);
    csv.header({"x", "y", "mean", "std_error", "ci_lo", "ci_hi", "bound", "flagged"});
    for (const auto& r : rows) {
      csv.cell(r.x(0)).cell(r.y(0)).cell(r.mean).cell(r.std_error).cell(r.ci_lo).cell(r.ci_hi);
      csv.cell(r.bound).cell(r.flagged ? 1 : 0);
      csv.end_row();
    }
  });
  MarkSpace space(family, c.trunc);
  std::vector<CoupledChainPaths> runs;
  for (std::size_t r = 0; r < std::min(c.jump_log_replicates, c.replicates); ++r)
    runs.push_back(simulate_frozen_coupled(space, point(c.x), point(c.y), c.i0, c.T, c.seed, r));
  write_file(dir / "coupling_jumps.csv", [&](std::ostream& out) { write_jump_log(out, runs); });
}

void run_simulate(const RunConfig& c, const std::filesystem::path& dir) {
  const auto model = make_model(c.model, c.params, c.generator);
  SimulationSettings s;
  s.eps = c.eps;
  s.alpha = c.alpha;
  s.T = c.T;
  s.dt = c.dt;
  s.window = c.trunc;
  s.seed = c.seed;
  s.allow_large_step = c.allow_large_step;
  const auto path = simulate_two_scale(model, s);
  write_file(dir / "simulate.csv", [&](std::ostream& out) { write_path_csv(out, path); });
}

void run_average(const RunConfig& c, const std::filesystem::path& dir) {
  const auto model = make_model(c.model, c.params, c.generator);
  ExperimentSettings s;
  s.T = c.T;
  s.replicates = c.replicates;
  s.window = c.trunc;
  s.seed = c.seed;
  if (c.dt) {
    const double dt = *c.dt;
    s.step = [dt](double) { return dt; };
  }
  ConvergenceReport report;
  if (c.kind == "l1") {
    report = l1_error_experiment(model, c.grid, s);
  } else {
    std::vector<TestFunction> fns;
    for (const auto& id : c.testfns) fns.push_back(test_function(id));
    report = weak_error_experiment(model, fns, c.grid, s);
  }
  write_file(dir / "average.csv", [&](std::ostream& out) { write_convergence_csv(out, report); });
}

}  // namespace

int run(const RunConfig& c, std::ostream& err) {
  const std::filesystem::path dir(c.out);
  try {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    if (c.subcommand == "invariant") run_invariant(c, dir);
    else if (c.subcommand == "ergodicity") run_ergodicity(c, dir);
    else if (c.subcommand == "regularity") run_regularity(c, dir);
    else if (c.subcommand == "coupling") run_coupling(c, dir);
    else if (c.subcommand == "simulate") run_simulate(c, dir);
    else run_average(c, dir);
    write_file(dir / "manifest.txt", [&](std::ostream& out) {
      for (const auto& [k, v] : c.manifest) out << k << '=' << v << '\n';
    });
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return e.is_numerical() ? 2 : 1;
  }
  return 0;
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  RunConfig config;
  try {
    config = parse_config(args);
  } catch (const HelpRequested& h) {
    out << h.text;
    return 0;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return run(config, err);
}

}  // namespace twoscale::cli
