#pragma once

// Experiment runner behind the metroint command-line tool: key-value
// configuration, named presets, and the four commands that write CSV.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "metroint/brownian.hpp"
#include "metroint/coupling.hpp"
#include "metroint/equilibrium.hpp"
#include "metroint/inertial.hpp"
#include "metroint/initial_condition.hpp"
#include "metroint/model.hpp"
#include "metroint/overdamped.hpp"
#include "metroint/rejection_rate.hpp"
#include "metroint/strong_error.hpp"

namespace metroint {

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_numeric = 3 };

/// Invalid or incomplete configuration (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  // Power of two shorthand: 2^-4.
  if (t.rfind("2^", 0) == 0) return std::ldexp(1.0, static_cast<int>(parse_double(key, t.substr(2))));
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "': not a number: '" + t + "'");
  }
  if (used != t.size() || !std::isfinite(v)) throw ConfigError("'" + key + "': not a number: '" + t + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

}  // namespace detail

/// Resolved experiment parameters as ordered key-value text; typed accessors
/// validate on read.
class ExperimentConfig {
 public:
  static const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "experiment", "model",     "coefficients", "dimension",   "beta",       "gamma",
        "mass",       "method",    "horizon",      "h",           "fine_ratio", "realizations",
        "n_steps",    "x0",        "p0",           "initial",     "energy_bound",
        "seed",       "threads",   "out",          "burn_in",     "bins"};
    return keys;
  }

  void set(const std::string& key, const std::string& value) {
    const std::string k = detail::trim(key);
    if (!known_keys().count(k)) throw ConfigError("unknown configuration key '" + k + "'");
    values_[k] = detail::trim(value);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  const std::string& text(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing required parameter '" + key + "'");
    return it->second;
  }

  std::string text_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? text(key) : fallback;
  }

  double real(const std::string& key) const { return detail::parse_double(key, text(key)); }
  double real_or(const std::string& key, double fallback) const { return has(key) ? real(key) : fallback; }

  std::uint64_t count(const std::string& key) const {
    const std::string& t = text(key);
    if (!t.empty() && t.find_first_not_of("0123456789") == std::string::npos) {
      try {
        return std::stoull(t);
      } catch (const std::out_of_range&) {
        throw ConfigError("'" + key + "' is out of range");
      }
    }
    const double v = detail::parse_double(key, t);
    if (v < 0.0 || v != std::floor(v) || v > 9.0e15)
      throw ConfigError("'" + key + "' must be a non-negative integer, got '" + t + "'");
    return static_cast<std::uint64_t>(v);
  }
  std::uint64_t count_or(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? count(key) : fallback;
  }

  /// Comma-separated reals; "2^a..2^b" expands to consecutive powers of two.
  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const std::string& item : detail::split(text(key), ',')) {
      const auto dots = item.find("..");
      if (dots != std::string::npos) {
        const std::string a = detail::trim(item.substr(0, dots));
        const std::string b = detail::trim(item.substr(dots + 2));
        if (a.rfind("2^", 0) != 0 || b.rfind("2^", 0) != 0)
          throw ConfigError("'" + key + "': ranges must look like 2^-4..2^-9");
        const int ea = static_cast<int>(detail::parse_double(key, a.substr(2)));
        const int eb = static_cast<int>(detail::parse_double(key, b.substr(2)));
        const int step = ea <= eb ? 1 : -1;
        for (int e = ea;; e += step) {
          out.push_back(std::ldexp(1.0, e));
          if (e == eb) break;
        }
      } else if (!item.empty()) {
        out.push_back(detail::parse_double(key, item));
      }
    }
    if (out.empty()) throw ConfigError("'" + key + "' is empty");
    return out;
  }

  /// Everything except the keys that must not change results.
  std::string provenance() const {
    std::string s;
    for (const auto& [k, v] : values_) {
      if (k == "threads" || k == "out") continue;
      s += (s.empty() ? "" : " ") + k + "=" + v;
    }
    return s;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Reads `key = value` lines; `#` starts a comment.
inline void read_config(std::istream& in, ExperimentConfig& config) {
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (detail::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(number) + ": expected 'key = value'");
    config.set(line.substr(0, eq), line.substr(eq + 1));
  }
}

struct Preset {
  std::string command;
  std::vector<std::pair<std::string, std::string>> values;
};

inline const std::map<std::string, Preset>& presets() {
  static const std::map<std::string, Preset> table = {
      {"fig1",
       {"trajectory",
        {{"model", "quartic"}, {"beta", "1"}, {"method", "ULA,MALA"}, {"h", "0.3125"},
         {"x0", "4"}, {"n_steps", "64"}, {"fine_ratio", "64"}, {"seed", "1"}}}},
      {"fig2",
       {"trajectory",
        {{"model", "quartic"}, {"beta", "0.01"}, {"method", "MALA"}, {"h", "0.3125"},
         {"x0", "4"}, {"n_steps", "10000"}, {"fine_ratio", "64"}, {"seed", "2"}}}},
      {"fig3",
       {"converge",
        {{"model", "quartic"}, {"beta", "1"}, {"method", "MALA"}, {"horizon", "1"},
         {"h", "2^-4..2^-9"}, {"fine_ratio", "64"}, {"realizations", "10000"},
         {"initial", "equilibrium"}, {"seed", "3"}}}},
      {"fig4",
       {"converge",
        {{"model", "quartic"}, {"beta", "1"}, {"method", "MALTA"}, {"horizon", "1"},
         {"h", "2^-4..2^-9"}, {"fine_ratio", "64"}, {"realizations", "10000"},
         {"initial", "fixed"}, {"x0", "0.1"}, {"seed", "4"}}}},
      {"fig5",
       {"converge",
        {{"model", "quartic"}, {"beta", "1"}, {"gamma", "1"}, {"mass", "1"}, {"method", "MAGLA"},
         {"horizon", "1"}, {"h", "2^-2..2^-6"}, {"fine_ratio", "64"},
         {"realizations", "10000"}, {"initial", "fixed"}, {"x0", "0.1"}, {"p0", "0"},
         {"seed", "5"}}}},
      {"ergodicity-mala",
       {"ergodicity",
        {{"model", "quartic"}, {"beta", "1"}, {"method", "MALA"}, {"h", "0.1"},
         {"n_steps", "1000000"}, {"x0", "0"}, {"seed", "6"}}}},
      {"ergodicity-magla",
       {"ergodicity",
        {{"model", "quartic"}, {"beta", "1"}, {"gamma", "1"}, {"mass", "1"}, {"method", "MAGLA"},
         {"h", "0.25"}, {"n_steps", "1000000"}, {"x0", "0"}, {"p0", "0"}, {"seed", "7"}}}},
      {"ergodicity-ula",
       {"ergodicity",
        {{"model", "quartic"}, {"beta", "1"}, {"method", "ULA"}, {"h", "0.3125"},
         {"n_steps", "10000"}, {"x0", "4"}, {"seed", "8"}}}},
      {"reject-mala",
       {"reject-rate",
        {{"model", "quartic"}, {"beta", "1"}, {"method", "MALA"}, {"h", "2^-3..2^-7"},
         {"n_steps", "1000"}, {"realizations", "200"}, {"initial", "equilibrium"},
         {"seed", "9"}}}},
      {"reject-magla",
       {"reject-rate",
        {{"model", "quartic"}, {"beta", "1"}, {"gamma", "1"}, {"mass", "1"}, {"method", "MAGLA"},
         {"h", "2^-2..2^-5"}, {"n_steps", "1000"}, {"realizations", "200"},
         {"initial", "equilibrium"}, {"seed", "10"}}}},
      {"zero",
       {"trajectory",
        {{"model", "zero"}, {"beta", "1"}, {"method", "MALA"}, {"h", "0.0625"}, {"x0", "0"},
         {"n_steps", "256"}, {"fine_ratio", "64"}, {"seed", "11"}}}},
  };
  return table;
}

/// Loads the named preset's defaults into `config`.
inline void apply_preset(const std::string& name, ExperimentConfig& config) {
  auto it = presets().find(name);
  if (it == presets().end()) throw ConfigError("unknown experiment '" + name + "'");
  for (const auto& [k, v] : it->second.values) config.set(k, v);
  config.set("experiment", name);
}

/// Builds the potential, or the inertial model for GLA/MAGLA.
inline AnyModel build_model(const ExperimentConfig& c, Method method) {
  try {
    const double beta = c.real_or("beta", 1.0);
    const std::size_t dim = c.count_or("dimension", 1);
    const std::string kind = c.text_or("model", "quartic");
    PotentialModel pot = [&] {
      if (kind == "quartic") return make_quartic_model(beta, dim);
      if (kind == "quadratic") return make_quadratic_model(beta, dim);
      if (kind == "zero") return make_zero_model(beta, dim);
      if (kind == "polynomial") return make_polynomial_model(c.reals("coefficients"), beta, dim);
      throw ConfigError("unknown model '" + kind + "'");
    }();
    if (!is_inertial(method)) return pot;
    const std::vector<double> mass = c.has("mass") ? c.reals("mass") : std::vector<double>{1.0};
    return InertialModel(std::move(pot), c.real_or("gamma", 1.0), mass);
  } catch (const ModelError& e) {
    throw ConfigError(e.what());
  }
}

inline std::vector<Method> methods_of(const ExperimentConfig& c) {
  std::vector<Method> out;
  try {
    for (const std::string& name : detail::split(c.text("method"), ',')) out.push_back(parse_method(name));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (out.empty()) throw ConfigError("no method given");
  for (Method m : out)
    if (is_inertial(m) != is_inertial(out.front()))
      throw ConfigError("cannot mix overdamped and inertial methods in one run");
  return out;
}

inline Method single_method(const ExperimentConfig& c) {
  const auto m = methods_of(c);
  if (m.size() != 1) throw ConfigError("this command takes exactly one method");
  return m.front();
}

inline InitialPolicy initial_policy(const ExperimentConfig& c, InitialPolicy fallback) {
  const std::string p = c.text_or("initial", fallback == InitialPolicy::fixed ? "fixed" : "equilibrium");
  if (p == "fixed") return InitialPolicy::fixed;
  if (p == "equilibrium") return InitialPolicy::equilibrium;
  throw ConfigError("initial must be 'fixed' or 'equilibrium', got '" + p + "'");
}

inline Vector position_of(const ExperimentConfig& c, std::size_t dim) {
  Vector x = c.reals("x0");
  if (x.size() == 1 && dim > 1) x.assign(dim, x[0]);
  if (x.size() != dim) throw ConfigError("x0 has the wrong number of components");
  return x;
}

inline Vector momentum_of(const ExperimentConfig& c, std::size_t dim) {
  if (!c.has("p0")) return Vector(dim, 0.0);
  Vector p = c.reals("p0");
  if (p.size() == 1 && dim > 1) p.assign(dim, p[0]);
  if (p.size() != dim) throw ConfigError("p0 has the wrong number of components");
  return p;
}

/// RFC 4180 style CSV with 17 significant digits for reals.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  void comment(const std::string& text) { out_ << "# " << text << '\n'; }

  CsvWriter& field(const std::string& s) {
    sep();
    if (s.find_first_of(",\"\r\n") == std::string::npos) {
      out_ << s;
    } else {
      out_ << '"';
      for (char ch : s) out_ << (ch == '"' ? std::string("\"\"") : std::string(1, ch));
      out_ << '"';
    }
    return *this;
  }
  CsvWriter& field(const char* s) { return field(std::string(s)); }
  CsvWriter& field(double v) { return field(format(v)); }
  CsvWriter& field(std::uint64_t v) { return field(std::to_string(v)); }
  CsvWriter& empty() { return field(std::string()); }
  void end() {
    out_ << '\n';
    first_ = true;
  }

  static std::string format(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }

 private:
  void sep() {
    if (!first_) out_ << ',';
    first_ = false;
  }
  std::ostream& out_;
  bool first_ = true;
};

namespace detail {

inline void header(CsvWriter& csv, const std::string& command, const ExperimentConfig& c) {
  csv.comment("metroint " + command + " " + c.provenance());
}

inline std::vector<std::string> component_names(const std::string& base, std::size_t dim) {
  if (dim == 1) return {base};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < dim; ++i) out.push_back(base + "_" + std::to_string(i));
  return out;
}

}  // namespace detail

/// One realization on one Brownian path: the fine reference and every listed
/// method at step h. A method that blows up shows "blowup" at that step and
/// empty cells afterwards.
inline int cmd_trajectory(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  const auto methods = methods_of(c);
  const AnyModel model = build_model(c, methods.front());
  const std::size_t dim = potential_of(model).dimension();
  const double h = c.real("h");
  const std::size_t n_steps = c.count("n_steps");
  const std::size_t ratio = c.count_or("fine_ratio", 64);
  const std::uint64_t seed = c.count("seed");
  const double guard = 1e8;
  if (!(h > 0.0) || n_steps == 0) throw ConfigError("h and n_steps must be positive");
  if (ratio < 2 || ratio % 2 != 0) throw ConfigError("fine_ratio must be even and at least 2");
  const bool inertial = is_inertial(methods.front());
  const std::size_t width = inertial ? 2 * dim : dim;

  const double horizon = static_cast<double>(n_steps) * h;
  const double hf = h / static_cast<double>(ratio);
  const Vector x0 = position_of(c, dim);
  const Vector p0 = momentum_of(c, dim);
  const BrownianIncrementGrid grid = generate_brownian_grid(horizon, hf, dim, {seed, 0, StreamRole::brownian, 0});

  // table[k] holds the states after step k (k = 0 is the initial state).
  using Row = std::vector<double>;
  auto pack = [&](std::span<const double> a, std::span<const double> b) {
    Row r(a.begin(), a.end());
    r.insert(r.end(), b.begin(), b.end());
    return r;
  };
  std::vector<Row> reference;
  std::optional<std::size_t> reference_blowup;
  struct Track {
    std::vector<Row> states;
    std::vector<bool> accepted;
    std::optional<std::size_t> blowup;
  };
  std::vector<Track> tracks(methods.size());

  if (!inertial) {
    const auto& pot = std::get<PotentialModel>(model);
    reference.push_back(x0);
    const auto ref = reference_trajectory(pot, grid, x0, guard, [&](std::size_t r, const Vector& x) {
      if ((r + 1) % ratio == 0) reference.push_back(x);
    });
    if (!ref) reference_blowup = reference.size();
    const BrownianIncrementGrid coarse = coarsen(grid, ratio);
    for (std::size_t j = 0; j < methods.size(); ++j) {
      Track& t = tracks[j];
      t.states.push_back(x0);
      t.accepted.push_back(true);
      UniformStream coins({seed, 0, StreamRole::metropolis_uniform, static_cast<std::uint32_t>(j)});
      Vector terminal;
      const auto blow = run_coupled_overdamped(pot, methods[j], coarse, x0, coins, guard, terminal,
                                               [&](std::size_t, const StepOutcome<OverdampedState>& o) {
                                                 t.states.push_back(o.state.x);
                                                 t.accepted.push_back(o.accepted);
                                               });
      if (blow) t.blowup = blow->step + 1;
    }
  } else {
    const auto& im = std::get<InertialModel>(model);
    const PhaseState s0{x0, p0};
    reference.push_back(pack(x0, p0));
    const std::size_t per = ratio / 2;
    const auto ref = reference_trajectory(im, grid, s0, guard, [&](std::size_t k, const PhaseState& s) {
      if ((k + 1) % per == 0) reference.push_back(pack(s.q, s.p));
    });
    if (!ref) reference_blowup = reference.size();
    for (std::size_t j = 0; j < methods.size(); ++j) {
      Track& t = tracks[j];
      t.states.push_back(pack(x0, p0));
      t.accepted.push_back(true);
      UniformStream coins({seed, 0, StreamRole::metropolis_uniform, static_cast<std::uint32_t>(j)});
      PhaseState terminal;
      const auto blow = run_coupled_inertial(im, methods[j], grid, h, s0, coins, guard, terminal,
                                             [&](std::size_t, const StepOutcome<PhaseState>& o) {
                                               t.states.push_back(pack(o.state.q, o.state.p));
                                               t.accepted.push_back(o.accepted);
                                             });
      if (blow) t.blowup = blow->step + 1;
    }
  }

  CsvWriter csv(out);
  detail::header(csv, "trajectory", c);
  csv.field("step").field("time");
  auto names = [&](const std::string& base) {
    std::vector<std::string> n;
    for (const auto& s : detail::component_names(inertial ? base + "_q" : base, dim)) n.push_back(s);
    if (inertial)
      for (const auto& s : detail::component_names(base + "_p", dim)) n.push_back(s);
    return n;
  };
  for (const auto& n : names("reference")) csv.field(n);
  for (Method m : methods) {
    std::string base(to_string(m));
    for (const auto& n : names(base)) csv.field(n);
    if (is_metropolized(m)) csv.field(base + "_accepted");
  }
  csv.end();

  auto cells = [&](const std::vector<Row>& states, std::optional<std::size_t> blowup, std::size_t k) {
    if (k < states.size()) {
      for (double v : states[k]) csv.field(v);
    } else {
      for (std::size_t i = 0; i < width; ++i) (blowup && k == *blowup ? csv.field("blowup") : csv.empty());
    }
  };
  for (std::size_t k = 0; k <= n_steps; ++k) {
    csv.field(static_cast<std::uint64_t>(k)).field(static_cast<double>(k) * h);
    cells(reference, reference_blowup, k);
    for (std::size_t j = 0; j < methods.size(); ++j) {
      cells(tracks[j].states, tracks[j].blowup, k);
      if (is_metropolized(methods[j])) {
        if (k < tracks[j].accepted.size())
          csv.field(static_cast<std::uint64_t>(tracks[j].accepted[k] ? 1 : 0));
        else
          csv.empty();
      }
    }
    csv.end();
  }
  for (std::size_t j = 0; j < methods.size(); ++j)
    if (tracks[j].blowup) err << to_string(methods[j]) << " blew up at step " << *tracks[j].blowup << '\n';
  if (reference_blowup) err << "reference blew up at step " << *reference_blowup << '\n';
  return exit_ok;
}

inline ConvergenceStudyConfig convergence_config(const ExperimentConfig& c) {
  ConvergenceStudyConfig s;
  s.method = single_method(c);
  s.model = build_model(c, s.method);
  const std::size_t dim = potential_of(s.model).dimension();
  s.horizon = c.real_or("horizon", 1.0);
  s.step_sizes = c.reals("h");
  s.fine_ratio = c.count_or("fine_ratio", 64);
  s.realizations = c.count("realizations");
  s.initial = initial_policy(c, InitialPolicy::fixed);
  if (s.initial == InitialPolicy::fixed) s.x0 = position_of(c, dim);
  if (is_inertial(s.method) && s.initial == InitialPolicy::fixed) s.p0 = momentum_of(c, dim);
  if (c.has("energy_bound")) s.energy_bound = c.real("energy_bound");
  s.seed = c.count("seed");
  s.threads = c.count_or("threads", 0);
  return s;
}

/// Per-h RMS strong error and a "slope,<value>,<half-width>" footer.
inline int cmd_converge(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  const ConvergenceStudyConfig study = convergence_config(c);
  ConvergenceReport report;
  try {
    report = strong_error_study(study);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  } catch (const StudyAborted& e) {
    err << "study aborted: " << e.what() << '\n';
    for (const Discard& d : e.discards()) err << "  realization " << d.realization << ": " << d.reason << '\n';
    return exit_numeric;
  }
  CsvWriter csv(out);
  detail::header(csv, "converge", c);
  csv.field("h").field("rms").field("stderr");
  csv.end();
  for (const ErrorAtStep& e : report.errors) {
    csv.field(e.h).field(e.rms).field(e.standard_error);
    csv.end();
  }
  csv.field("slope");
  if (report.fit)
    csv.field(report.fit->slope).field(report.fit->half_width);
  else
    csv.field("nan").field("nan");
  csv.end();
  if (!report.discards.empty()) {
    err << report.discards.size() << " realization(s) discarded\n";
    for (const Discard& d : report.discards) err << "  realization " << d.realization << ": " << d.reason << '\n';
  }
  return exit_ok;
}

namespace detail {

inline void histogram(CsvWriter& csv, const std::string& name, const std::vector<double>& samples,
                      std::size_t bins, const std::function<double(double)>& target_density) {
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  double lo = *lo_it, hi = *hi_it;
  if (hi <= lo) hi = lo + 1.0;
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<std::uint64_t> counts(bins, 0);
  for (double x : samples) {
    auto b = static_cast<std::size_t>((x - lo) / width);
    counts[std::min(b, bins - 1)]++;
  }
  const auto n = static_cast<double>(samples.size());
  for (std::size_t b = 0; b < bins; ++b) {
    const double a = lo + width * static_cast<double>(b);
    csv.field(name).field(a).field(a + width).field(counts[b]);
    csv.field(static_cast<double>(counts[b]) / (n * width)).field(target_density(a + 0.5 * width));
    csv.end();
  }
}

}  // namespace detail

/// Long single chain from x0 (or (q0, p0)); the first `burn_in` fraction is
/// dropped, the rest is histogrammed and compared to the target by KS.
inline int cmd_ergodicity(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  const Method method = single_method(c);
  const AnyModel model = build_model(c, method);
  const PotentialModel& pot = potential_of(model);
  if (pot.dimension() != 1) throw ConfigError("ergodicity needs a one-dimensional model");
  const double h = c.real("h");
  const std::size_t n_steps = c.count("n_steps");
  const double burn = c.real_or("burn_in", 0.1);
  const std::size_t bins = c.count_or("bins", 64);
  const std::uint64_t seed = c.count("seed");
  if (!(h > 0.0) || n_steps == 0 || bins == 0) throw ConfigError("h, n_steps and bins must be positive");
  if (!(burn >= 0.0 && burn < 1.0)) throw ConfigError("burn_in must lie in [0, 1)");
  const auto first_kept = static_cast<std::size_t>(std::floor(burn * static_cast<double>(n_steps)));

  std::vector<double> qs, ps;
  qs.reserve(n_steps - first_kept);
  const RngStreamSpec rng{seed, 0, StreamRole::brownian, 0};
  std::optional<BlowUp> blow;
  if (!is_inertial(method)) {
    blow = for_each_overdamped_step(pot, method, position_of(c, 1), h, n_steps, rng, {},
                                    [&](std::size_t k, const StepOutcome<OverdampedState>& o) {
                                      if (k >= first_kept) qs.push_back(o.state.x[0]);
                                    });
  } else {
    ps.reserve(n_steps - first_kept);
    blow = for_each_inertial_step(std::get<InertialModel>(model), method,
                                  {position_of(c, 1), momentum_of(c, 1)}, h, n_steps, rng, {},
                                  [&](std::size_t k, const StepOutcome<PhaseState>& o) {
                                    if (k >= first_kept) {
                                      qs.push_back(o.state.q[0]);
                                      ps.push_back(o.state.p[0]);
                                    }
                                  });
  }
  if (blow) {
    err << to_string(method) << " blew up at step " << blow->step + 1 << " (|x| = "
        << CsvWriter::format(max_abs(blow->state)) << ")\n";
    return exit_numeric;
  }
  if (qs.empty()) throw ConfigError("burn_in leaves no samples");

  const EquilibriumDistribution1D pi(pot);
  CsvWriter csv(out);
  detail::header(csv, "ergodicity", c);
  csv.field("coordinate").field("bin_lower").field("bin_upper").field("count").field("density")
      .field("target_density");
  csv.end();
  detail::histogram(csv, "position", qs, bins, [&](double x) { return pi.density(x); });
  double ks_p = 0.0;
  double p_var = 0.0;
  if (!ps.empty()) {
    const auto& im = std::get<InertialModel>(model);
    p_var = im.mass()[0] / im.beta();
    detail::histogram(csv, "momentum", ps, bins, [&](double p) {
      return std::exp(-0.5 * p * p / p_var) / std::sqrt(2.0 * std::numbers::pi * p_var);
    });
    ks_p = ks_distance(ps, [&](double p) { return normal_cdf(p, p_var); });
  }
  const double ks_q = ks_distance(std::move(qs), [&](double x) { return pi.cdf(x); });
  csv.field("ks").field("position").field(ks_q);
  csv.end();
  if (!ps.empty()) {
    csv.field("ks").field("momentum").field(ks_p);
    csv.end();
  }
  return exit_ok;
}

inline RejectionStudyConfig rejection_config(const ExperimentConfig& c) {
  RejectionStudyConfig s;
  s.method = single_method(c);
  if (!is_metropolized(s.method)) throw ConfigError("reject-rate needs MALA, MALTA or MAGLA");
  s.model = build_model(c, s.method);
  const std::size_t dim = potential_of(s.model).dimension();
  s.step_sizes = c.reals("h");
  s.n_steps = c.count("n_steps");
  s.realizations = c.count("realizations");
  s.initial = initial_policy(c, InitialPolicy::equilibrium);
  if (s.initial == InitialPolicy::fixed) {
    s.x0 = position_of(c, dim);
    if (is_inertial(s.method)) s.p0 = momentum_of(c, dim);
  }
  s.seed = c.count("seed");
  s.threads = c.count_or("threads", 0);
  return s;
}

/// Per-h mean rejection probability and a slope footer.
inline int cmd_reject_rate(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  const RejectionStudyConfig study = rejection_config(c);
  RejectionReport report;
  try {
    report = rejection_rate_study(study);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  } catch (const StudyAborted& e) {
    err << "study aborted: " << e.what() << '\n';
    return exit_numeric;
  }
  CsvWriter csv(out);
  detail::header(csv, "reject-rate", c);
  csv.field("h").field("rejection").field("stderr");
  csv.end();
  for (const RejectionAtStep& r : report.rates) {
    csv.field(r.h).field(r.rate).field(r.standard_error);
    csv.end();
  }
  csv.field("slope");
  if (report.fit)
    csv.field(report.fit->slope).field(report.fit->half_width);
  else
    csv.field("nan").field("nan");
  csv.end();
  return exit_ok;
}

/// Dispatches a command name; maps configuration problems to exit code 2 and
/// numeric failures to exit code 3.
inline int run_command(const std::string& command, const ExperimentConfig& c, std::ostream& out,
                       std::ostream& err) {
  try {
    if (command == "trajectory") return cmd_trajectory(c, out, err);
    if (command == "converge") return cmd_converge(c, out, err);
    if (command == "ergodicity") return cmd_ergodicity(c, out, err);
    if (command == "reject-rate") return cmd_reject_rate(c, out, err);
    throw ConfigError("unknown command '" + command + "'");
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const StudyAborted& e) {
    err << "numeric abort: " << e.what() << '\n';
    return exit_numeric;
  } catch (const ModelError& e) {
    err << "numeric abort: " << e.what() << '\n';
    return exit_numeric;
  }
}

}  // namespace metroint
