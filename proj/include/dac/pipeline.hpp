#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dac/bootstrap.hpp"
#include "dac/estimator.hpp"
#include "dac/gev.hpp"
#include "dac/gmm.hpp"
#include "dac/maxstable.hpp"
#include "dac/spatial.hpp"

namespace dac {

/// One field per year on a shared grid, years strictly increasing.
struct GriddedSeries {
  GridDomain domain{1, 1, 1.0};
  std::vector<int> years;
  std::vector<Field> fields;

  [[nodiscard]] std::size_t year_count() const noexcept { return years.size(); }
  /// Values of site j across years.
  [[nodiscard]] std::vector<double> site_series(std::size_t j) const;
};

/// Checks shared domain, matching lengths and increasing years.
void validate_series(const GriddedSeries& s);

enum class SeriesFormat { csv, dacf_set };
[[nodiscard]] SeriesFormat parse_series_format(std::string_view name);

/*!
 * Loads every *.csv (or *.dacf) file in `dir`.
 * csv: a line "year,nx,ny,spacing" holding the values (a literal line of those
 * four names may precede it), then ny rows of nx comma-separated values.
 * dacf-set: the year is the integer file stem, e.g. 1979.dacf.
 */
[[nodiscard]] GriddedSeries load_grid_series(const std::filesystem::path& dir, SeriesFormat format);

void write_series_csv(const GriddedSeries& s, const std::filesystem::path& dir);

struct SiteFits {
  std::vector<GevFit> sites;
  std::size_t flagged = 0;
};

inline constexpr std::size_t kMinGevYears = 20;

/// Independent per-site fits. Throws NumericalError if more than
/// max_flagged_fraction of sites are flagged.
[[nodiscard]] SiteFits fit_gev_per_site(const GriddedSeries& series, std::size_t min_years = kMinGevYears,
                                        double max_flagged_fraction = 0.01, std::size_t workers = 0);

/*!
 * Probability integral transform to unit Frechet. Flagged sites fall back to
 * the rank transform F = rank / (n + 1). A value outside a site's GEV
 * support throws InvalidArgument naming the site and year.
 */
[[nodiscard]] GriddedSeries to_unit_frechet(const GriddedSeries& series, const SiteFits& fits);

struct AnalysisConfig {
  std::size_t bootstrap_replicates = 5000;
  double alpha = 0.05;
  double ridge = kDefaultRidge;
  std::uint64_t seed = 1;
  std::size_t workers = 0;
  std::size_t ec_subsets = 2;
  std::size_t ec_subset_side = 30;
  std::size_t ec_max_pairs = 20000;
  std::size_t ec_bins = 15;
};

struct YearResult {
  int year = 0;
  bool ok = false;
  std::string error;
  BlockEstimates blocks;
  ParamVector theta_m;
  CombinedEstimate combined;
  std::array<double, kParamDim> se{};
  std::array<Interval, kParamDim> ci{};
  std::array<bool, kParamDim> ci_contains_mean{};
};

struct EcDiagnostic {
  std::size_t x0 = 0;  // lower-left grid index of the subset
  std::size_t y0 = 0;
  std::size_t side = 0;
  std::vector<EcBin> empirical;
  std::vector<EcBin> model;  // closed form at the mean of the yearly estimates
};

struct AnalysisResult {
  std::vector<YearResult> years;
  std::vector<std::string> warnings;
  std::vector<EcDiagnostic> diagnostics;
};

/// Per-year block fit, bootstrap at theta_m, one-step combination and Wald
/// CIs, plus extremal-coefficient diagnostics on seeded square subsets.
[[nodiscard]] AnalysisResult analyze_dataset(const GriddedSeries& series, const TrainedNetwork& net,
                                             const BlockPartition& partition, const AnalysisConfig& cfg);

/// years.csv, year_<Y>.json, ec_<i>_empirical.csv, ec_<i>_model.csv and manifest.json.
void write_analysis(const AnalysisResult& result, const AnalysisConfig& cfg, const std::filesystem::path& dir);

}  // namespace dac
