#include "cfdens/cli_io.hpp"

#include "cfdens/errors.hpp"
#include "cfdens/seeding.hpp"

#include <Eigen/Core>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <boost/version.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#ifndef CFDENS_VERSION
#define CFDENS_VERSION "dev"
#endif

namespace cfdens {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<double> to_double(const std::string& text) {
  const auto s = trim(text);
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc{} || ptr != end) return std::nullopt;
  return v;
}

template <class T>
std::optional<T> to_unsigned(const std::string& text) {
  const auto s = trim(text);
  T v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc{} || ptr != end) return std::nullopt;
  return v;
}

double config_double(const std::string& key, const std::string& text) {
  const auto v = to_double(text);
  if (!v || !std::isfinite(*v)) throw ConfigError("config: '" + key + "' expects a number, got '" + text + "'");
  return *v;
}

std::size_t config_size(const std::string& key, const std::string& text) {
  const auto v = to_unsigned<std::size_t>(text);
  if (!v) throw ConfigError("config: '" + key + "' expects a nonnegative integer, got '" + text + "'");
  return *v;
}

DgpSpec::CellArray config_cells(const std::string& key, const std::string& text) {
  const auto words = split_words(text);
  if (words.size() != DgpSpec::kCells) {
    throw ConfigError("config: '" + key + "' expects 8 numbers, got " + std::to_string(words.size()));
  }
  DgpSpec::CellArray out{};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = config_double(key, words[i]);
  return out;
}

/// Drops `# ...` and `; ...` tails that follow whitespace.
std::string strip_comment(const std::string& value) {
  std::size_t cut = value.size();
  for (std::size_t i = 1; i < value.size(); ++i) {
    if ((value[i] == '#' || value[i] == ';') && (value[i - 1] == ' ' || value[i - 1] == '\t')) {
      cut = i;
      break;
    }
  }
  return trim(std::string_view(value).substr(0, cut));
}

/// Shortest text that reads back to the same double.
std::string config_number(double value) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, end);
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

template <class Range>
std::string join_numbers(const Range& values) {
  std::vector<std::string> parts;
  for (const auto& v : values) {
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>) {
      parts.push_back(config_number(v));
    } else {
      parts.push_back(std::to_string(v));
    }
  }
  return join(parts, " ");
}

const char* cell_type_name(CellType type) { return type == CellType::bin ? "bin" : "atom"; }

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(trim(field));
  return fields;
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration

ReferenceMeasure RunConfig::reference_measure() const {
  return ReferenceMeasure(measure.interval, measure.atoms);
}

Grid RunConfig::grid() const { return Grid::uniform(reference_measure(), bins); }

ModelSpec RunConfig::model_spec() const {
  ModelSpec spec;
  spec.effects = effects;
  spec.spline_count = spline_count;
  spec.spline_degree = spline_degree;
  return spec;
}

void RunConfig::validate() const {
  if (!preset.empty() && preset != "beta_mixture") {
    throw ConfigError("config: unknown preset '" + preset + "'");
  }
  if (bins == 0) throw ConfigError("config: grid.bins must be at least 1");
  if (spline_count <= spline_degree) {
    throw ConfigError("config: basis.count must exceed basis.degree");
  }
  if (!(penalty >= 0.0)) throw ConfigError("config: fit.penalty must be nonnegative");
  if (!(uncertainty.alpha > 0.0 && uncertainty.alpha < 1.0)) {
    throw ConfigError("config: uncertainty.alpha must lie in (0, 1)");
  }
  reference_measure();
  if (measure.cap.has_value() != measure.cap_atom.has_value()) {
    throw ConfigError("config: measure.cap and measure.cap_atom must be given together");
  }
  if (measure.cap_atom) {
    const bool found = std::any_of(measure.atoms.begin(), measure.atoms.end(),
                                   [&](const Atom& a) { return a.location == *measure.cap_atom; });
    if (!found) throw ConfigError("config: measure.cap_atom is not one of measure.atoms");
  }
  std::set<std::string> names;
  for (const auto& e : effects) {
    e.validate();
    if (e.is_intercept()) continue;
    if (!names.insert(e.covariate).second) {
      throw ConfigError("config: covariate '" + e.covariate + "' has two effects");
    }
  }
  for (const auto& name : marginal) {
    if (!names.count(name)) {
      throw ConfigError("config: marginal covariate '" + name + "' has no effect");
    }
  }
  if (data.path.empty() && preset != "beta_mixture") {
    throw ConfigError("config: data.path is required without a preset");
  }
  if (data.treated == data.control) {
    throw ConfigError("config: data.treated and data.control must differ");
  }
  const auto& s = simulate.settings;
  if (s.sample_sizes.empty() || s.replications == 0 || s.estimators.empty()) {
    throw ConfigError("config: simulate needs sample sizes, replications and estimators");
  }
  for (auto n : s.sample_sizes) {
    if (n == 0) throw ConfigError("config: simulate.sample_sizes must be positive");
  }
  if (simulate.preset_n == 0) throw ConfigError("config: simulate.dataset_n must be positive");
  simulate.dgp.validate();
}

RunConfig beta_mixture_preset() {
  RunConfig c;
  c.preset = "beta_mixture";
  c.data = DataConfig{};
  c.measure = MeasureConfig{};
  c.bins = 50;
  c.spline_count = 12;
  c.spline_degree = 3;
  c.effects = DgpSpec::model_spec().effects;
  c.separation = SeparationPolicy::accept;
  return c;
}

PartialEffectSpec parse_effect(const std::string& covariate, const std::string& text) {
  const auto s = trim(text);
  const auto open = s.find('(');
  const std::string kind = trim(s.substr(0, open));
  std::map<std::string, std::string> args;
  if (open != std::string::npos) {
    if (s.back() != ')') throw ConfigError("config: effect '" + covariate + "' is missing ')'");
    const auto inner = s.substr(open + 1, s.size() - open - 2);
    if (!trim(inner).empty()) {
      for (const auto& part : split(inner, ',')) {
        const auto eq = part.find('=');
        if (eq == std::string::npos) {
          throw ConfigError("config: effect '" + covariate + "' argument '" + part + "' lacks '='");
        }
        args[trim(part.substr(0, eq))] = trim(part.substr(eq + 1));
      }
    }
  }
  auto take = [&](const std::string& key) -> std::optional<std::string> {
    const auto it = args.find(key);
    if (it == args.end()) return std::nullopt;
    auto v = it->second;
    args.erase(it);
    return v;
  };
  PartialEffectSpec spec;
  const std::string key = "effects." + covariate;
  if (kind == "intercept") {
    spec = PartialEffectSpec::intercept();
  } else if (kind == "categorical") {
    const auto levels = take("levels");
    if (!levels) throw ConfigError("config: " + key + " needs levels=a|b|...");
    auto level_list = split(*levels, '|');
    const auto ref = take("ref");
    const std::string reference = ref ? *ref : level_list.front();
    spec = PartialEffectSpec::categorical(covariate, std::move(level_list), reference);
  } else if (kind == "smooth") {
    SmoothEffect smooth;
    if (auto v = take("count")) smooth.count = config_size(key + ".count", *v);
    if (auto v = take("degree")) smooth.degree = config_size(key + ".degree", *v);
    spec = PartialEffectSpec::smooth(covariate, smooth.count, smooth.degree);
  } else {
    throw ConfigError("config: " + key + " has unknown effect type '" + kind + "'");
  }
  if (!args.empty()) {
    throw ConfigError("config: " + key + " has unknown argument '" + args.begin()->first + "'");
  }
  try {
    spec.validate();
  } catch (const Error& e) {
    throw ConfigError("config: " + key + ": " + e.what());
  }
  return spec;
}

std::string format_effect(const PartialEffectSpec& spec) {
  if (const auto* c = std::get_if<CategoricalEffect>(&spec.kind)) {
    return "categorical(levels=" + join(c->levels, "|") + ", ref=" + c->reference + ")";
  }
  if (const auto* s = std::get_if<SmoothEffect>(&spec.kind)) {
    return "smooth(count=" + std::to_string(s->count) + ", degree=" + std::to_string(s->degree) + ")";
  }
  return "intercept";
}

namespace {

std::vector<Atom> parse_atoms(const std::string& text) {
  std::vector<Atom> atoms;
  for (const auto& word : split_words(text)) {
    const auto colon = word.find(':');
    Atom a;
    a.location = config_double("measure.atoms", word.substr(0, colon));
    if (colon != std::string::npos) a.weight = config_double("measure.atoms", word.substr(colon + 1));
    atoms.push_back(a);
  }
  return atoms;
}

Estimator parse_estimator(const std::string& name) {
  if (name == "bayes") return Estimator::bayes;
  if (name == "kde") return Estimator::kde;
  throw ConfigError("config: unknown estimator '" + name + "'");
}

SeparationPolicy parse_separation(const std::string& name) {
  if (name == "error") return SeparationPolicy::error;
  if (name == "accept") return SeparationPolicy::accept;
  throw ConfigError("config: fit.separation expects error or accept, got '" + name + "'");
}

void apply_key(RunConfig& c, const std::string& section, const std::string& name,
               const std::string& value, const fs::path& base_dir) {
  const std::string key = section.empty() ? name : section + "." + name;
  auto unknown = [&] { throw ConfigError("config: unknown key '" + key + "'"); };
  if (section.empty()) {
    if (name == "preset") return;  // applied before everything else
    if (name == "seed") {
      const auto v = to_unsigned<std::uint64_t>(value);
      if (!v) throw ConfigError("config: 'seed' expects an unsigned integer, got '" + value + "'");
      c.seed = *v;
      return;
    }
    unknown();
  } else if (section == "data") {
    if (name == "path") {
      c.data.path = value.empty() ? fs::path{} : fs::path(value);
      if (!c.data.path.empty() && c.data.path.is_relative() && !base_dir.empty()) {
        c.data.path = base_dir / c.data.path;
      }
      if (!c.data.path.empty()) c.data.path = c.data.path.lexically_normal();
    } else if (name == "outcome") {
      c.data.outcome = value;
    } else if (name == "group") {
      c.data.group = value;
    } else if (name == "treated") {
      c.data.treated = value;
    } else if (name == "control") {
      c.data.control = value;
    } else if (name == "weight") {
      c.data.weight = value;
    } else {
      unknown();
    }
  } else if (section == "measure") {
    if (name == "interval") {
      const auto words = split_words(value);
      if (words.size() == 1 && words[0] == "none") {
        c.measure.interval.reset();
      } else if (words.size() == 2) {
        c.measure.interval = Interval{config_double(key, words[0]), config_double(key, words[1])};
      } else {
        throw ConfigError("config: measure.interval expects 'lower upper' or 'none'");
      }
    } else if (name == "atoms") {
      c.measure.atoms = parse_atoms(value);
    } else if (name == "cap") {
      if (value == "none") c.measure.cap.reset();
      else c.measure.cap = config_double(key, value);
    } else if (name == "cap_atom") {
      if (value == "none") c.measure.cap_atom.reset();
      else c.measure.cap_atom = config_double(key, value);
    } else {
      unknown();
    }
  } else if (section == "grid") {
    if (name != "bins") unknown();
    c.bins = config_size(key, value);
  } else if (section == "basis") {
    if (name == "count") c.spline_count = config_size(key, value);
    else if (name == "degree") c.spline_degree = config_size(key, value);
    else unknown();
  } else if (section == "fit") {
    if (name == "penalty") c.penalty = config_double(key, value);
    else if (name == "separation") c.separation = parse_separation(value);
    else unknown();
  } else if (section == "uncertainty") {
    if (name == "alpha") c.uncertainty.alpha = config_double(key, value);
    else if (name == "draws") c.uncertainty.draws = config_size(key, value);
    else unknown();
  } else if (section == "marginal") {
    if (name != "covariates") unknown();
    c.marginal = split_words(value);
  } else if (section == "simulate") {
    auto& s = c.simulate.settings;
    auto& d = c.simulate.dgp;
    if (name == "sample_sizes") {
      s.sample_sizes.clear();
      for (const auto& w : split_words(value)) s.sample_sizes.push_back(config_size(key, w));
    } else if (name == "replications") {
      s.replications = config_size(key, value);
    } else if (name == "estimators") {
      s.estimators.clear();
      for (const auto& w : split_words(value)) s.estimators.push_back(parse_estimator(w));
    } else if (name == "threads") {
      s.threads = config_size(key, value);
    } else if (name == "kde_constant") {
      s.kde.constant = config_double(key, value);
    } else if (name == "dataset_n") {
      c.simulate.preset_n = config_size(key, value);
    } else if (name == "treated_probabilities") {
      d.treated_probabilities = config_cells(key, value);
    } else if (name == "control_probabilities") {
      d.control_probabilities = config_cells(key, value);
    } else if (name == "treated_alpha") {
      d.treated_alpha = config_cells(key, value);
    } else if (name == "treated_beta") {
      d.treated_beta = config_cells(key, value);
    } else if (name == "control_alpha") {
      d.control_alpha = config_cells(key, value);
    } else if (name == "control_beta") {
      d.control_beta = config_cells(key, value);
    } else {
      unknown();
    }
  } else {
    unknown();
  }
}

}  // namespace

RunConfig parse_config(std::istream& in, const fs::path& base_dir) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config: line " + std::to_string(e.line()) + ": " + e.message());
  }

  RunConfig config;
  if (const auto preset = tree.get_optional<std::string>("preset")) {
    const auto name = strip_comment(*preset);
    if (name == "beta_mixture") {
      config = beta_mixture_preset();
    } else if (!name.empty()) {
      throw ConfigError("config: unknown preset '" + name + "'");
    }
  }

  bool effects_seen = false;
  for (const auto& [section, node] : tree) {
    if (node.empty()) {
      apply_key(config, "", section, strip_comment(node.data()), base_dir);
      continue;
    }
    if (section == "manifest") continue;
    if (section == "effects") {
      if (!effects_seen) config.effects.clear();
      effects_seen = true;
      for (const auto& [name, leaf] : node) {
        config.effects.push_back(parse_effect(name, strip_comment(leaf.data())));
      }
      continue;
    }
    for (const auto& [name, leaf] : node) {
      if (!leaf.empty()) throw ConfigError("config: nested key under '" + section + "." + name + "'");
      apply_key(config, section, name, strip_comment(leaf.data()), base_dir);
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  return parse_config(in, fs::absolute(path).parent_path());
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream os;
  if (!c.preset.empty()) os << "preset = " << c.preset << "\n";
  os << "seed = " << c.seed << "\n";

  os << "\n[data]\n";
  os << "path = " << c.data.path.generic_string() << "\n";
  os << "outcome = " << c.data.outcome << "\n";
  os << "group = " << c.data.group << "\n";
  os << "treated = " << c.data.treated << "\n";
  os << "control = " << c.data.control << "\n";
  os << "weight = " << c.data.weight << "\n";

  os << "\n[measure]\n";
  if (c.measure.interval) {
    os << "interval = " << config_number(c.measure.interval->lower) << " "
       << config_number(c.measure.interval->upper) << "\n";
  } else {
    os << "interval = none\n";
  }
  std::vector<std::string> atoms;
  for (const auto& a : c.measure.atoms) atoms.push_back(config_number(a.location) + ":" + config_number(a.weight));
  os << "atoms = " << join(atoms, " ") << "\n";
  os << "cap = " << (c.measure.cap ? config_number(*c.measure.cap) : "none") << "\n";
  os << "cap_atom = " << (c.measure.cap_atom ? config_number(*c.measure.cap_atom) : "none") << "\n";

  os << "\n[grid]\nbins = " << c.bins << "\n";
  os << "\n[basis]\ncount = " << c.spline_count << "\ndegree = " << c.spline_degree << "\n";

  os << "\n[effects]\n";
  for (const auto& e : c.effects) {
    if (e.is_intercept()) continue;
    os << e.covariate << " = " << format_effect(e) << "\n";
  }

  os << "\n[fit]\npenalty = " << config_number(c.penalty) << "\n";
  os << "separation = " << (c.separation == SeparationPolicy::accept ? "accept" : "error") << "\n";
  os << "\n[uncertainty]\nalpha = " << config_number(c.uncertainty.alpha) << "\n";
  os << "draws = " << c.uncertainty.draws << "\n";
  os << "\n[marginal]\ncovariates = " << join(c.marginal, " ") << "\n";

  const auto& s = c.simulate.settings;
  const auto& d = c.simulate.dgp;
  std::vector<std::string> estimators;
  for (auto e : s.estimators) estimators.push_back(to_string(e));
  os << "\n[simulate]\n";
  os << "sample_sizes = " << join_numbers(s.sample_sizes) << "\n";
  os << "replications = " << s.replications << "\n";
  os << "estimators = " << join(estimators, " ") << "\n";
  os << "threads = " << s.threads << "\n";
  os << "kde_constant = " << config_number(s.kde.constant) << "\n";
  os << "dataset_n = " << c.simulate.preset_n << "\n";
  os << "treated_probabilities = " << join_numbers(d.treated_probabilities) << "\n";
  os << "control_probabilities = " << join_numbers(d.control_probabilities) << "\n";
  os << "treated_alpha = " << join_numbers(d.treated_alpha) << "\n";
  os << "treated_beta = " << join_numbers(d.treated_beta) << "\n";
  os << "control_alpha = " << join_numbers(d.control_alpha) << "\n";
  os << "control_beta = " << join_numbers(d.control_beta) << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// data

GroupTables load_dataset(const fs::path& path, const RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw DataError("data: cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("data: '" + path.string() + "' is empty");
  const auto header = parse_csv_line(line);

  auto column = [&](const std::string& name, const char* role) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw DataError("data: " + std::string(role) + " column '" + name + "' is missing from the header");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto outcome_col = column(config.data.outcome, "outcome");
  const auto group_col = column(config.data.group, "group");
  std::optional<std::size_t> weight_col;
  if (!config.data.weight.empty()) weight_col = column(config.data.weight, "weight");

  std::vector<std::string> schema;
  std::vector<std::size_t> covariate_cols;
  std::vector<bool> numeric;
  for (const auto& e : config.effects) {
    if (e.is_intercept()) continue;
    schema.push_back(e.covariate);
    covariate_cols.push_back(column(e.covariate, "covariate"));
    numeric.push_back(std::holds_alternative<SmoothEffect>(e.kind));
  }

  const Grid grid = config.grid();
  GroupTables out{ObservationTable(schema, config.data.treated),
                  ObservationTable(schema, config.data.control)};

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = parse_csv_line(line);
    const std::string where = "data: row " + std::to_string(line_no) + ": ";
    if (fields.size() != header.size()) {
      throw DataError(where + "expected " + std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    const auto y_parsed = to_double(fields[outcome_col]);
    if (!y_parsed || !std::isfinite(*y_parsed)) {
      throw DataError(where + "outcome '" + fields[outcome_col] + "' is not a number");
    }
    double y = *y_parsed;
    if (config.measure.cap && y > *config.measure.cap) y = *config.measure.cap_atom;
    if (!grid.locate(y)) {
      throw DataError(where + "outcome " + fields[outcome_col] + " lies outside the reference measure");
    }

    CovariateVector x;
    for (std::size_t k = 0; k < covariate_cols.size(); ++k) {
      const auto& raw = fields[covariate_cols[k]];
      if (raw.empty()) throw DataError(where + "covariate '" + schema[k] + "' is empty");
      if (numeric[k]) {
        const auto v = to_double(raw);
        if (!v || !std::isfinite(*v)) {
          throw DataError(where + "covariate '" + schema[k] + "' value '" + raw + "' is not a number");
        }
        x.emplace_back(*v);
      } else {
        x.emplace_back(raw);
      }
    }

    double weight = 1.0;
    if (weight_col) {
      const auto w = to_double(fields[*weight_col]);
      if (!w || !(*w > 0.0) || !std::isfinite(*w)) {
        throw DataError(where + "weight '" + fields[*weight_col] + "' is not a positive number");
      }
      weight = *w;
    }

    const auto& label = fields[group_col];
    ObservationTable* target = nullptr;
    if (label == config.data.treated) target = &out.treated;
    else if (label == config.data.control) target = &out.control;
    else throw DataError(where + "unknown group label '" + label + "'");
    try {
      target->add(y, std::move(x), weight);
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  if (out.treated.size() == 0) throw DataError("data: no rows for group '" + config.data.treated + "'");
  if (out.control.size() == 0) throw DataError("data: no rows for group '" + config.data.control + "'");
  return out;
}

GroupTables load_or_simulate(const RunConfig& config) {
  if (!config.data.path.empty()) return load_dataset(config.data.path, config);
  if (config.preset != "beta_mixture") throw ConfigError("config: data.path is required without a preset");
  const auto& dgp = config.simulate.dgp;
  return {simulate(dgp, Group::treated, config.simulate.preset_n, derive_seed(config.seed, 1)),
          simulate(dgp, Group::control, config.simulate.preset_n, derive_seed(config.seed, 0))};
}

// ---------------------------------------------------------------------------
// output

Command parse_command(const std::string& name) {
  if (name == "fit") return Command::fit;
  if (name == "decompose") return Command::decompose;
  if (name == "marginal") return Command::marginal;
  if (name == "simulate") return Command::simulate;
  throw ConfigError("unknown command '" + name + "'");
}

std::string to_string(Command command) {
  switch (command) {
    case Command::fit: return "fit";
    case Command::decompose: return "decompose";
    case Command::marginal: return "marginal";
    case Command::simulate: return "simulate";
  }
  return "?";
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

double grid_point(const Grid& grid, std::size_t cell) {
  if (grid.cell_type(cell) == CellType::bin) return grid.centers()[static_cast<Eigen::Index>(cell)];
  return grid.measure().atoms()[cell - grid.bin_count()].location;
}

void write_curves(const fs::path& path, const std::vector<CurveRow>& rows) {
  auto out = open_output(path);
  out << "grid_point,cell_type,value,valid_flag,draw_index\n";
  for (const auto& r : rows) {
    out << format_double(r.grid_point) << ',' << cell_type_name(r.cell_type) << ','
        << format_double(r.value) << ',' << (r.valid ? 1 : 0) << ',' << r.draw_index << '\n';
  }
}

std::vector<CurveRow> read_curves(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (trim(line) != "grid_point,cell_type,value,valid_flag,draw_index") {
    throw DataError("'" + path.string() + "' is not a curve table");
  }
  std::vector<CurveRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = split(line, ',');
    const std::string where = path.filename().string() + ": row " + std::to_string(line_no) + ": ";
    if (f.size() != 5) throw DataError(where + "expected 5 fields");
    CurveRow r;
    const auto gp = to_double(f[0]);
    const auto v = f[2] == "nan" ? std::optional<double>(std::nan("")) : to_double(f[2]);
    const auto draw = to_unsigned<std::size_t>(f[4]);
    if (!gp || !v || !draw || (f[1] != "bin" && f[1] != "atom") || (f[3] != "0" && f[3] != "1")) {
      throw DataError(where + "malformed field");
    }
    r.grid_point = *gp;
    r.cell_type = f[1] == "bin" ? CellType::bin : CellType::atom;
    r.value = *v;
    r.valid = f[3] == "1";
    r.draw_index = *draw;
    rows.push_back(r);
  }
  return rows;
}

std::vector<CurveRow> density_rows(const GridDensity& density, std::size_t draw_index) {
  const auto& grid = density.grid();
  std::vector<CurveRow> rows;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    rows.push_back({grid_point(grid, g), grid.cell_type(g), density.values()[static_cast<Eigen::Index>(g)],
                    true, draw_index});
  }
  return rows;
}

std::vector<CurveRow> ratio_rows(const RatioFunction& ratio, std::size_t draw_index) {
  const auto& grid = ratio.grid();
  std::vector<CurveRow> rows;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    rows.push_back({grid_point(grid, g), grid.cell_type(g), ratio[g], ratio.is_valid(g), draw_index});
  }
  return rows;
}

void write_mc_report(const fs::path& path, const McReport& report) {
  auto out = open_output(path);
  for (const auto& note : report.notes) out << "# " << note << "\n";
  out << "estimator,n,statistic";
  for (const auto& t : study_targets()) out << ',' << t;
  out << '\n';

  std::vector<std::pair<Estimator, std::size_t>> keys;
  for (const auto& r : report.rows) {
    const std::pair key{r.estimator, r.n};
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  for (const auto& [estimator, n] : keys) {
    for (const char* statistic : {"mean_tv", "standard_error", "replications", "failed"}) {
      out << to_string(estimator) << ',' << n << ',' << statistic;
      for (const auto& t : study_targets()) {
        const auto& r = report.row(estimator, n, t);
        const std::string_view s = statistic;
        out << ',';
        if (s == "mean_tv") out << format_double(r.mean_tv);
        else if (s == "standard_error") out << format_double(r.standard_error);
        else if (s == "replications") out << r.replications;
        else out << r.failed;
      }
      out << '\n';
    }
  }
}

namespace {

struct Fitted {
  FittedDensityModel treated;
  FittedDensityModel control;
  CovariateSample treated_sample;
  CovariateSample control_sample;
};

Fitted fit_groups(const RunConfig& config, const GroupTables& tables) {
  const Grid grid = config.grid();
  FitOptions options;
  options.penalty = config.penalty;
  options.separation = config.separation;
  auto fit_one = [&](const ObservationTable& table) {
    const std::string prefix = "fit of group '" + table.group() + "': ";
    try {
      return fit_density_model(table, grid, config.model_spec(), options);
    } catch (const SeparationError& e) {
      throw SeparationError(prefix + e.what());
    } catch (const ConvergenceError& e) {
      throw ConvergenceError(prefix + e.what(), e.deviance_trace);
    } catch (const DataError& e) {
      throw DataError(prefix + e.what());
    } catch (const NumericalError& e) {
      throw NumericalError(prefix + e.what());
    }
  };
  return {fit_one(tables.treated), fit_one(tables.control), CovariateSample::from_table(tables.treated),
          CovariateSample::from_table(tables.control)};
}

class Writer {
 public:
  explicit Writer(fs::path dir) : dir_(std::move(dir)) {}

  void curves(const std::string& name, const std::vector<CurveRow>& rows) {
    write_curves(dir_ / name, rows);
    files_.push_back(dir_ / name);
  }
  std::ofstream text(const std::string& name) {
    files_.push_back(dir_ / name);
    return open_output(dir_ / name);
  }
  void mc_report(const std::string& name, const McReport& report) {
    write_mc_report(dir_ / name, report);
    files_.push_back(dir_ / name);
  }
  std::vector<fs::path> files() const { return files_; }

 private:
  fs::path dir_;
  std::vector<fs::path> files_;
};

void write_fit(Writer& w, const std::string& label, const FittedDensityModel& model,
               const ObservationTable& table) {
  const auto& report = model.report();
  {
    auto out = w.text("fit_" + label + "_summary.csv");
    out << "key,value\n";
    out << "group_label," << table.group() << '\n';
    out << "observations," << table.size() << '\n';
    out << "combinations," << model.combinations().size() << '\n';
    out << "coefficients," << model.theta().size() << '\n';
    out << "iterations," << report.iterations << '\n';
    out << "converged," << (report.converged ? 1 : 0) << '\n';
    out << "separated," << (report.separated ? 1 : 0) << '\n';
    out << "deviance," << format_double(report.deviance_trace.empty() ? NAN : report.deviance_trace.back())
        << '\n';
    out << "score_norm," << format_double(report.score_norm) << '\n';
    out << "penalty," << format_double(model.penalty()) << '\n';
  }
  {
    auto out = w.text("fit_" + label + "_theta.csv");
    out << "index,value\n";
    for (Eigen::Index i = 0; i < model.theta().size(); ++i) {
      out << i << ',' << format_double(model.theta()[i]) << '\n';
    }
  }
  {
    auto out = w.text("fit_" + label + "_combinations.csv");
    out << "combination";
    for (const auto& name : model.basis().schema()) out << ',' << name;
    out << '\n';
    for (std::size_t i = 0; i < model.combinations().size(); ++i) {
      out << i;
      for (const auto& v : model.combinations()[i]) out << ',' << to_string(v);
      out << '\n';
    }
  }
  for (std::size_t i = 0; i < model.combinations().size(); ++i) {
    w.curves("fit_" + label + "_combo" + std::to_string(i) + ".csv",
             density_rows(predict_density(model, model.combinations()[i])));
  }
}

void write_bands(Writer& w, const std::string& name, const EffectBands& bands) {
  auto rows = ratio_rows(bands.estimate, 0);
  for (std::size_t b = 0; b < bands.draws.size(); ++b) {
    const auto more = ratio_rows(bands.draws[b], b + 1);
    rows.insert(rows.end(), more.begin(), more.end());
  }
  w.curves(name, rows);
}

std::string versions_line() {
  std::ostringstream os;
  os << "cfdens " << CFDENS_VERSION << "; eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.'
     << EIGEN_MINOR_VERSION << "; boost " << BOOST_VERSION / 100000 << '.' << BOOST_VERSION / 100 % 1000
     << '.' << BOOST_VERSION % 100;
  return os.str();
}

}  // namespace

std::vector<fs::path> run(Command command, const RunConfig& config, const fs::path& out_dir) {
  config.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create output directory '" + out_dir.string() + "': " + ec.message());
  Writer w(out_dir);

  ProductMeasureOptions product;
  product.seed = derive_seed(config.seed, 2);

  switch (command) {
    case Command::fit: {
      const auto tables = load_or_simulate(config);
      const auto fitted = fit_groups(config, tables);
      write_fit(w, "treated", fitted.treated, tables.treated);
      write_fit(w, "control", fitted.control, tables.control);
      break;
    }
    case Command::decompose: {
      const auto tables = load_or_simulate(config);
      const auto f = fit_groups(config, tables);
      const auto f11 = counterfactual_density(f.treated, f.treated_sample);
      const auto f10 = counterfactual_density(f.treated, f.control_sample);
      const auto f01 = counterfactual_density(f.control, f.treated_sample);
      const auto f00 = counterfactual_density(f.control, f.control_sample);
      w.curves("density_f11.csv", density_rows(f11));
      w.curves("density_f10.csv", density_rows(f10));
      w.curves("density_f01.csv", density_rows(f01));
      w.curves("density_f00.csv", density_rows(f00));
      for (auto kind : {EffectKind::distribution, EffectKind::covariate, EffectKind::total}) {
        const EffectRequest request{kind, {}};
        const auto bands = effect_bands(f.treated, f.control, f.treated_sample, f.control_sample, request,
                                        config.uncertainty.alpha, config.uncertainty.draws, config.seed,
                                        product);
        write_bands(w, "effect_" + effect_name(request) + ".csv", bands);
      }
      auto out = w.text("summary.csv");
      out << "quantity,value\n";
      out << "tv_total," << format_double(scalar_density_effect(f11, f00)) << '\n';
      out << "tv_distribution," << format_double(scalar_density_effect(f11, f01)) << '\n';
      out << "tv_covariate," << format_double(scalar_density_effect(f01, f00)) << '\n';
      out << "mean_f11," << format_double(mean_functional(f11)) << '\n';
      out << "mean_f10," << format_double(mean_functional(f10)) << '\n';
      out << "mean_f01," << format_double(mean_functional(f01)) << '\n';
      out << "mean_f00," << format_double(mean_functional(f00)) << '\n';
      break;
    }
    case Command::marginal: {
      const auto tables = load_or_simulate(config);
      const auto f = fit_groups(config, tables);
      std::vector<std::string> covariates = config.marginal;
      if (covariates.empty()) {
        for (const auto& e : config.effects) {
          if (!e.is_intercept()) covariates.push_back(e.covariate);
        }
      }
      for (const auto& covariate : covariates) {
        for (auto kind : {EffectKind::covariate_j, EffectKind::distribution_j}) {
          const EffectRequest request{kind, covariate};
          const auto bands = effect_bands(f.treated, f.control, f.treated_sample, f.control_sample, request,
                                          config.uncertainty.alpha, config.uncertainty.draws, config.seed,
                                          product);
          write_bands(w, "effect_" + effect_name(request) + ".csv", bands);
        }
      }
      break;
    }
    case Command::simulate: {
      auto settings = config.simulate.settings;
      settings.seed = config.seed;
      settings.bins = config.bins;
      settings.spline_count = config.spline_count;
      settings.spline_degree = config.spline_degree;
      settings.penalty = config.penalty;
      w.mc_report("mc_report.csv", run_study(config.simulate.dgp, settings));
      break;
    }
  }

  auto manifest = w.text("manifest.ini");
  manifest << serialize_config(config);
  manifest << "\n[manifest]\n";
  manifest << "command = " << to_string(command) << "\n";
  manifest << "versions = " << versions_line() << "\n";
  return w.files();
}

}  // namespace cfdens
