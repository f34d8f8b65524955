#include "advbench/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

#include "advbench/binary_io.hpp"
#include "advbench/error.hpp"
#include "advbench/rng.hpp"

namespace advbench {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double to_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError(what + ": expected a number, got \"" + s + "\"");
  }
  return v;
}

std::uint64_t to_u64(const std::string& s, const std::string& what) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError(what + ": expected a non-negative integer, got \"" + s + "\"");
  }
  return v;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) out += fmt(v[i]);
    else out += std::to_string(v[i]);
  }
  return out;
}

struct Field {
  const char* section;
  const char* key;
  std::function<std::string()> get;
  std::function<void(const std::string&, const std::string&)> set;
};

Field real(const char* sec, const char* key, double& ref) {
  return {sec, key, [&ref] { return fmt(ref); }, [&ref](const std::string& v, const std::string& w) { ref = to_double(v, w); }};
}
Field count(const char* sec, const char* key, std::size_t& ref) {
  return {sec, key, [&ref] { return std::to_string(ref); },
          [&ref](const std::string& v, const std::string& w) { ref = static_cast<std::size_t>(to_u64(v, w)); }};
}

// The one table both parse and serialize walk, so they cannot drift apart.
std::vector<Field> fields(ExperimentConfig& c) {
  auto& ds = c.dataset;
  auto& ac = c.attack.base;
  auto& dh = c.detector.hyper;
  auto& it = c.armsrace.iterative;
  auto& pr = c.probe;
  return {
      {"experiment", "seed", [&c] { return std::to_string(c.seed); },
       [&c](const std::string& v, const std::string& w) { c.seed = to_u64(v, w); }},
      {"experiment", "out", [&c] { return c.out.string(); }, [&c](const std::string& v, const std::string&) { c.out = v; }},
      {"experiment", "fpr_targets", [&c] { return join(c.fpr_targets); },
       [&c](const std::string& v, const std::string& w) { c.fpr_targets = parse_double_list(v, w); }},
      {"dataset", "source", [&ds] { return ds.source; }, [&ds](const std::string& v, const std::string&) { ds.source = v; }},
      {"dataset", "path", [&ds] { return ds.path.string(); }, [&ds](const std::string& v, const std::string&) { ds.path = v; }},
      count("dataset", "classes", ds.classes),
      count("dataset", "dim", ds.dim),
      count("dataset", "per_class", ds.per_class),
      count("dataset", "manifold_rank", ds.synth.manifold_rank),
      real("dataset", "center_scale", ds.synth.center_scale),
      real("dataset", "structure_sigma", ds.synth.structure_sigma),
      real("dataset", "pixel_sigma", ds.synth.pixel_sigma),
      real("dataset", "train_ratio", ds.synth.ratios.train),
      real("dataset", "validation_ratio", ds.synth.ratios.validation),
      {"model", "hidden", [&c] { return join(c.model.hidden); },
       [&c](const std::string& v, const std::string& w) {
         c.model.hidden.clear();
         for (const auto& s : split_list(v)) c.model.hidden.push_back(static_cast<std::size_t>(to_u64(s, w)));
       }},
      count("model", "epochs", c.model.train.epochs),
      real("model", "lr", c.model.train.lr),
      real("model", "momentum", c.model.train.momentum),
      count("model", "batch", c.model.train.batch),
      {"noise", "epsilons", [&c] { return join(c.noise.epsilons); },
       [&c](const std::string& v, const std::string& w) { c.noise.epsilons = parse_double_list(v, w); }},
      count("noise", "count", c.noise.count),
      real("attack", "eps_max", ac.eps_max),
      real("attack", "eps_step", ac.eps_step),
      count("attack", "steps", ac.steps),
      real("attack", "kappa", ac.kappa),
      real("attack", "alpha", ac.alpha),
      count("attack", "noise_draws", ac.noise_draws),
      {"attack", "target_rule", [&ac] { return std::string(target_rule_name(ac.target_rule)); },
       [&ac](const std::string& v, const std::string& w) {
         try {
           ac.target_rule = parse_target_rule(v);
         } catch (const UsageError& e) {
           throw ConfigError(w + ": " + e.what());
         }
       }},
      count("attack", "fixed_target", ac.fixed_target),
      count("attack", "samples", c.attack.samples),
      count("detector", "epochs", dh.epochs),
      real("detector", "lr", dh.lr),
      real("detector", "momentum", dh.momentum),
      count("detector", "batch", dh.batch),
      count("detector", "patience", dh.patience),
      real("detector", "validation_fraction", dh.validation_fraction),
      count("detector", "fit_samples", c.detector.fit_samples),
      real("armsrace", "epsilon", c.armsrace.epsilon),
      count("armsrace", "iterations", it.iterations),
      count("armsrace", "epochs_per_iteration", it.epochs_per_iteration),
      count("armsrace", "samples_per_iteration", it.samples_per_iteration),
      count("armsrace", "batch", it.batch),
      real("armsrace", "lr", it.lr),
      real("armsrace", "momentum", it.momentum),
      real("armsrace", "max_failure_rate", it.max_failure_rate),
      real("probe", "curve_min", pr.curve_min),
      real("probe", "curve_max", pr.curve_max),
      count("probe", "curve_points", pr.curve_points),
      count("probe", "curve_count", pr.curve_count),
      count("probe", "cone_axis_steps", pr.cone.axis_steps),
      count("probe", "cone_offset_steps", pr.cone.offset_steps),
      count("probe", "cone_angular_samples", pr.cone.angular_samples),
      real("probe", "cone_axis_extent", pr.cone.axis_extent),
      real("probe", "cone_offset_extent", pr.cone.offset_extent),
  };
}

}  // namespace

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& s : split_list(text)) out.push_back(to_double(s, what));
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

void ExperimentConfig::apply_seed(std::uint64_t master) {
  seed = master;
  model.train.seed = derive_seed(master, "model/train");
  attack.base.seed = derive_seed(master, "attack");
  detector.hyper.seed = derive_seed(master, "detector");
  probe.cone.seed = derive_seed(master, "cone");
}

void ExperimentConfig::validate() const {
  if (dataset.source != "synth" && dataset.source != "external") {
    throw ConfigError("dataset.source must be synth or external, got \"" + dataset.source + "\"");
  }
  if (dataset.source == "external" && dataset.path.empty()) throw ConfigError("dataset.path is required for external data");
  if (dataset.source == "synth" && (dataset.classes < 2 || dataset.dim < 2)) {
    throw ConfigError("dataset: classes and dim must be >= 2");
  }
  if (dataset.synth.ratios.train <= 0.0 || dataset.synth.ratios.validation <= 0.0 ||
      dataset.synth.ratios.train + dataset.synth.ratios.validation >= 1.0) {
    throw ConfigError("dataset: split ratios must be positive and leave room for a test split");
  }
  for (std::size_t h : model.hidden) {
    if (h == 0) throw ConfigError("model.hidden: layer widths must be positive");
  }
  if (!(model.train.lr > 0.0)) throw ConfigError("model.lr must be > 0");
  if (model.train.batch == 0) throw ConfigError("model.batch must be >= 1");
  for (double e : noise.epsilons) {
    if (!(e > 0.0)) throw ConfigError("noise.epsilons must be > 0");
  }
  if (noise.count == 0) throw ConfigError("noise.count must be >= 1");
  for (double f : fpr_targets) {
    if (!(f > 0.0 && f <= 0.5)) throw ConfigError("experiment.fpr_targets must lie in (0, 0.5]");
  }
  attack.base.validate();
  if (!(detector.hyper.validation_fraction >= 0.0 && detector.hyper.validation_fraction < 1.0)) {
    throw ConfigError("detector.validation_fraction must lie in [0, 1)");
  }
  if (detector.fit_samples == 0) throw ConfigError("detector.fit_samples must be >= 1");
  if (!(armsrace.epsilon > 0.0)) throw ConfigError("armsrace.epsilon must be > 0");
  if (armsrace.iterative.iterations == 0) throw ConfigError("armsrace.iterations must be >= 1");
  if (!(probe.curve_min > 0.0 && probe.curve_max >= probe.curve_min) || probe.curve_points == 0) {
    throw ConfigError("probe: need 0 < curve_min <= curve_max and curve_points >= 1");
  }
}

bool ExperimentConfig::operator==(const ExperimentConfig& other) const { return serialize(*this) == serialize(other); }

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.apply_seed(c.seed);
  return c;
}

ExperimentConfig parse_config(const std::string& text, const std::string& what) {
  ExperimentConfig c = default_config();
  auto table = fields(c);
  std::istringstream is(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string where = what + ":" + std::to_string(lineno);
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    bool found = false;
    for (auto& f : table) {
      if (section == f.section && key == f.key) {
        f.set(value, where + " (" + section + "." + key + ")");
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError(where + ": unknown key \"" + key + "\" in section [" + section + "]");
  }
  c.apply_seed(c.seed);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  const auto bytes = read_file(path);
  return parse_config(std::string(bytes.begin(), bytes.end()), path.string());
}

std::string serialize(const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  std::string out, section;
  for (const auto& f : fields(copy)) {
    if (section != f.section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get() + "\n";
  }
  return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
  // The output location is where results go, not what produced them.
  ExperimentConfig copy = cfg;
  copy.out.clear();
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(serialize(copy));
  return os.str();
}

}  // namespace advbench
