#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dac/estimator.hpp"
#include "dac/gmm.hpp"
#include "dac/models.hpp"
#include "dac/stats.hpp"

namespace dac {

/// How the full-domain truth field of each replicate is simulated.
enum class TruthSimulation { automatic, exact, stitched };

/// Largest Gaussian domain simulated exactly in automatic mode.
inline constexpr std::size_t kExactGaussianSites = 3600;

struct StudyConfig {
  std::string name = "study";
  ModelTag model = ModelTag::gaussian;
  ParamVector truth;
  std::size_t nx = 40;
  std::size_t ny = 40;
  double spacing = 1.0;
  std::size_t block_nx = 20;
  std::size_t block_ny = 20;

  NetworkPlan network;  // block dims, model and seeds are filled from the study
  std::filesystem::path network_file;       // load instead of training when it exists
  std::filesystem::path network_save_path;  // write the selected network here

  std::size_t bootstrap_replicates = 500;
  std::size_t mc_replicates = 200;
  double alpha = 0.05;
  double ridge = kDefaultRidge;
  std::uint64_t master_seed = 1;
  std::size_t workers = 0;
  TruthSimulation simulation = TruthSimulation::automatic;
  std::size_t stitch_halo = 10;
  std::filesystem::path out_dir;
};

/// Parses the JSON study document; unknown keys are rejected.
[[nodiscard]] StudyConfig parse_study_config(const nlohmann::json& j);
[[nodiscard]] StudyConfig load_study_config(const std::filesystem::path& path);

struct ReplicateRecord {
  std::size_t index = 0;
  bool ok = false;
  std::string error;
  ParamVector theta_m;
  ParamVector theta_c;
  std::array<double, kParamDim> se{};
  std::array<Interval, kParamDim> ci{};
  bool ridge_applied = false;
  double seconds = 0.0;  // estimation stages only
};

struct ParameterMetrics {
  std::string parameter;
  double bias = 0.0;
  double rmse = 0.0;
  double ese = 0.0;  // population SD over replicates, so RMSE^2 = BIAS^2 + ESE^2
  double ase = 0.0;
  double cp = 0.0;   // percent
};

struct MetricsTable {
  std::vector<ParameterMetrics> rows;
  double time_mean = 0.0;
  double time_sd = 0.0;
  std::size_t replicates = 0;
  std::size_t failures = 0;
};

struct StudyResult {
  StudyConfig config;
  MetricsTable metrics;
  std::vector<ReplicateRecord> replicates;
  std::string simulation_label;  // "exact" or "stitched"
  std::vector<TrainingReport> candidates;
  TrainingReport selected;
  double train_seconds = 0.0;
};

/// Per-coordinate percentage of intervals containing the truth.
[[nodiscard]] std::array<double, kParamDim> coverage(std::span<const std::array<Interval, kParamDim>> intervals,
                                                     const ParamVector& truth);

/// Aggregates successful replicates into BIAS, RMSE, ESE, ASE and CP.
[[nodiscard]] MetricsTable summarize(std::span<const ReplicateRecord> records, const ParamVector& truth);

/// Parameter labels for the model's estimation scale.
[[nodiscard]] std::array<std::string, kParamDim> parameter_names(ModelTag model);

/// Loads or trains the study network (training time is reported separately).
[[nodiscard]] SelectedNetwork prepare_network(const StudyConfig& config);

/// Full Monte Carlo loop. Throws NumericalError when more than 1% of
/// replicates fail; results are independent of config.workers.
[[nodiscard]] StudyResult run_mc_study(const StudyConfig& config);
[[nodiscard]] StudyResult run_mc_study(const StudyConfig& config, const SelectedNetwork& net);

/*!
 * Writes metrics.csv, replicates.csv, timing.csv, table.txt and
 * manifest.json under dir. Refuses an empty table.
 */
void emit_report(const StudyResult& result, const std::filesystem::path& dir);

}  // namespace dac
