#pragma once

// Run configuration, dataset ingestion and the artifact writers behind the
// `cfdens` command-line tool.

#include "cfdens/basis.hpp"
#include "cfdens/counterfactual_effects.hpp"
#include "cfdens/density_regression.hpp"
#include "cfdens/measure_grid.hpp"
#include "cfdens/sim_benchmark.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cfdens {

struct DataConfig {
  std::filesystem::path path;  // empty: simulate from the preset instead
  std::string outcome = "y";
  std::string group = "group";
  std::string treated = "1";
  std::string control = "0";
  std::string weight;  // empty: every row has weight 1
};

struct MeasureConfig {
  std::optional<Interval> interval = Interval{0.0, 1.0};
  std::vector<Atom> atoms;
  /// Outcomes strictly above `cap` are moved to the atom at `cap_atom`.
  std::optional<double> cap;
  std::optional<double> cap_atom;
};

struct UncertaintyConfig {
  double alpha = 0.05;
  std::size_t draws = 100;
};

struct SimulateConfig {
  DgpSpec dgp = DgpSpec::beta_mixture();
  StudySettings settings;
  bool full_scale = false;
  std::size_t preset_n = 1000;  // per-group size of a preset dataset for fit/decompose/marginal
};

struct RunConfig {
  std::string preset;  // "" or "beta_mixture"
  std::uint64_t seed = 1;
  DataConfig data;
  MeasureConfig measure;
  std::size_t bins = 50;
  std::size_t spline_count = 12;
  std::size_t spline_degree = 3;
  std::vector<PartialEffectSpec> effects;
  double penalty = 0.0;
  SeparationPolicy separation = SeparationPolicy::error;
  UncertaintyConfig uncertainty;
  std::vector<std::string> marginal;
  SimulateConfig simulate;

  ReferenceMeasure reference_measure() const;
  Grid grid() const;
  ModelSpec model_spec() const;
  /// Range and consistency checks that do not need the dataset.
  void validate() const;
};

/// Simulation benchmark defaults: beta-mixture DGP on [0, 1], three
/// categorical covariates, 50 bins, 12 cubic splines, no penalty.
RunConfig beta_mixture_preset();

/// INI-style text: `key = value` lines grouped under `[section]` headers, so
/// that `[grid]` + `bins = 50` is the dotted key `grid.bins`. `#` and `;`
/// start comments. Relative data paths resolve against `base_dir`.
RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Canonical form with every setting explicit; serializing the parsed text again yields the same text.
std::string serialize_config(const RunConfig& config);

/// "categorical(levels=a|b, ref=a)", "smooth(count=8, degree=3)" or "intercept".
PartialEffectSpec parse_effect(const std::string& covariate, const std::string& text);
std::string format_effect(const PartialEffectSpec& spec);

struct GroupTables {
  ObservationTable treated;
  ObservationTable control;
};

/// Reads a comma-separated file with a header row. Covariates declared as
/// smooth effects are parsed as numbers, all others are kept as strings.
GroupTables load_dataset(const std::filesystem::path& path, const RunConfig& config);

/// The configured dataset, or a simulated one when `data.path` is empty and the
/// preset is beta_mixture.
GroupTables load_or_simulate(const RunConfig& config);

enum class Command { fit, decompose, marginal, simulate };

Command parse_command(const std::string& name);
std::string to_string(Command command);

/// One row of the long-format tables.
struct CurveRow {
  double grid_point = 0.0;
  CellType cell_type = CellType::bin;
  double value = 0.0;
  bool valid = true;
  std::size_t draw_index = 0;
};

/// Bin centres for bins, locations for atoms.
double grid_point(const Grid& grid, std::size_t cell);

void write_curves(const std::filesystem::path& path, const std::vector<CurveRow>& rows);
std::vector<CurveRow> read_curves(const std::filesystem::path& path);

std::vector<CurveRow> density_rows(const GridDensity& density, std::size_t draw_index = 0);
std::vector<CurveRow> ratio_rows(const RatioFunction& ratio, std::size_t draw_index = 0);

/// Decimal text that reads back to the identical double.
std::string format_double(double value);

/// Wide table with one column per study target, preceded by `#` note lines.
void write_mc_report(const std::filesystem::path& path, const McReport& report);

/// Executes the command and writes its artifacts plus `manifest.ini` into
/// `out_dir`. Returns the list of files written, in order.
std::vector<std::filesystem::path> run(Command command, const RunConfig& config,
                                       const std::filesystem::path& out_dir);

}  // namespace cfdens
