#include "dac/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "dac/error.hpp"
#include "dac/field_io.hpp"
#include "dac/harness.hpp"
#include "dac/parallel.hpp"
#include "dac/report.hpp"

namespace dac {

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

template <class T>
bool parse_number(const std::string& s, T& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

struct YearField {
  int year;
  Field field;
};

YearField read_year_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::pair<std::size_t, std::string>> lines;
  std::string line;
  for (std::size_t row = 1; std::getline(in, line); ++row) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) lines.emplace_back(row, line);
  }
  const std::string where = path.string();
  std::size_t at = 0;
  if (at < lines.size() && lower(trim(lines[at].second)) == "year,nx,ny,spacing") ++at;
  if (at >= lines.size()) throw IoError(where + ": missing year,nx,ny,spacing header");
  const auto head = split_csv(lines[at].second);
  int year = 0;
  std::size_t nx = 0, ny = 0;
  double spacing = 0.0;
  if (head.size() != 4 || !parse_number(head[0], year) || !parse_number(head[1], nx) ||
      !parse_number(head[2], ny) || !parse_number(head[3], spacing))
    throw IoError(where + ": row " + std::to_string(lines[at].first) +
                  ": header must hold integer year, nx, ny and a real spacing");
  if (nx == 0 || ny == 0 || !(spacing > 0.0)) throw IoError(where + ": nonpositive grid dimensions");
  ++at;
  if (lines.size() - at != ny)
    throw IoError(where + ": expected " + std::to_string(ny) + " data rows, found " +
                  std::to_string(lines.size() - at));
  std::vector<double> values;
  values.reserve(nx * ny);
  for (std::size_t r = 0; r < ny; ++r, ++at) {
    const auto cells = split_csv(lines[at].second);
    const std::string row = std::to_string(lines[at].first);
    if (cells.size() != nx)
      throw IoError(where + ": row " + row + " has " + std::to_string(cells.size()) + " columns, expected " +
                    std::to_string(nx));
    for (std::size_t c = 0; c < nx; ++c) {
      double v = 0.0;
      if (!parse_number(cells[c], v) || !std::isfinite(v))
        throw IoError(where + ": row " + row + ", column " + std::to_string(c + 1) + ": non-numeric cell \"" +
                      cells[c] + "\"");
      values.push_back(v);
    }
  }
  return {year, Field(make_grid(nx, ny, spacing), std::move(values))};
}

Field sub_field(const Field& f, std::size_t x0, std::size_t y0, std::size_t side) {
  const GridDomain& d = f.domain();
  std::vector<double> v;
  v.reserve(side * side);
  for (std::size_t iy = 0; iy < side; ++iy)
    for (std::size_t ix = 0; ix < side; ++ix) v.push_back(f[(y0 + iy) * d.nx() + x0 + ix]);
  return Field(make_grid(side, side, d.spacing()), std::move(v));
}

nlohmann::ordered_json interval_json(const std::array<Interval, kParamDim>& ci) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const Interval& i : ci) j.push_back({i.lower, i.upper});
  return j;
}

}  // namespace

std::vector<double> GriddedSeries::site_series(std::size_t j) const {
  if (j >= domain.size()) throw InvalidArgument("site index out of range");
  std::vector<double> out;
  out.reserve(fields.size());
  for (const Field& f : fields) out.push_back(f[j]);
  return out;
}

void validate_series(const GriddedSeries& s) {
  if (s.years.empty()) throw InvalidArgument("series has no years");
  if (s.years.size() != s.fields.size()) throw InvalidArgument("series has mismatched years and fields");
  for (std::size_t t = 0; t < s.fields.size(); ++t) {
    if (!(s.fields[t].domain() == s.domain))
      throw InvalidArgument("year " + std::to_string(s.years[t]) + " has grid " +
                            std::to_string(s.fields[t].domain().nx()) + "x" +
                            std::to_string(s.fields[t].domain().ny()) + ", expected " +
                            std::to_string(s.domain.nx()) + "x" + std::to_string(s.domain.ny()));
    if (t > 0 && s.years[t] <= s.years[t - 1])
      throw InvalidArgument("years must be strictly increasing (year " + std::to_string(s.years[t]) + ")");
  }
}

SeriesFormat parse_series_format(std::string_view name) {
  if (name == "csv") return SeriesFormat::csv;
  if (name == "dacf-set" || name == "dacf") return SeriesFormat::dacf_set;
  throw InvalidArgument("unknown series format \"" + std::string(name) + "\"");
}

GriddedSeries load_grid_series(const std::filesystem::path& dir, SeriesFormat format) {
  if (!std::filesystem::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  const std::string ext = format == SeriesFormat::csv ? ".csv" : ".dacf";
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) files.push_back(e.path());
  if (files.empty()) throw IoError(dir.string() + ": no " + ext + " files");
  std::sort(files.begin(), files.end());

  std::vector<YearField> loaded;
  for (const auto& f : files) {
    if (format == SeriesFormat::csv) {
      loaded.push_back(read_year_csv(f));
    } else {
      int year = 0;
      if (!parse_number(f.stem().string(), year))
        throw IoError(f.string() + ": file stem must be the year");
      loaded.push_back({year, read_field(f)});
    }
  }
  std::stable_sort(loaded.begin(), loaded.end(), [](const YearField& a, const YearField& b) { return a.year < b.year; });
  GriddedSeries s;
  s.domain = loaded.front().field.domain();
  for (auto& y : loaded) {
    s.years.push_back(y.year);
    s.fields.push_back(std::move(y.field));
  }
  for (std::size_t t = 1; t < s.years.size(); ++t)
    if (s.years[t] == s.years[t - 1]) throw IoError(dir.string() + ": year " + std::to_string(s.years[t]) + " appears twice");
  try {
    validate_series(s);
  } catch (const InvalidArgument& e) {
    throw IoError(dir.string() + ": " + e.what());
  }
  return s;
}

void write_series_csv(const GriddedSeries& s, const std::filesystem::path& dir) {
  validate_series(s);
  std::filesystem::create_directories(dir);
  for (std::size_t t = 0; t < s.fields.size(); ++t) {
    std::ostringstream out;
    out << "year,nx,ny,spacing\n"
        << s.years[t] << ',' << s.domain.nx() << ',' << s.domain.ny() << ',' << format_double(s.domain.spacing())
        << '\n';
    for (std::size_t iy = 0; iy < s.domain.ny(); ++iy) {
      for (std::size_t ix = 0; ix < s.domain.nx(); ++ix)
        out << (ix ? "," : "") << format_double(s.fields[t][iy * s.domain.nx() + ix]);
      out << '\n';
    }
    write_text_file(dir / (std::to_string(s.years[t]) + ".csv"), out.str());
  }
}

SiteFits fit_gev_per_site(const GriddedSeries& series, std::size_t min_years, double max_flagged_fraction,
                          std::size_t workers) {
  validate_series(series);
  if (series.year_count() < min_years)
    throw InvalidArgument("GEV fitting needs at least " + std::to_string(min_years) + " years, got " +
                          std::to_string(series.year_count()));
  const std::size_t d = series.domain.size();
  SiteFits out;
  out.sites.resize(d);
  parallel_for(d, workers, [&](std::size_t j) { out.sites[j] = fit_gev(series.site_series(j)); });
  for (const GevFit& f : out.sites) out.flagged += f.flagged ? 1 : 0;
  if (static_cast<double>(out.flagged) > max_flagged_fraction * static_cast<double>(d)) {
    std::string first;
    for (std::size_t j = 0; j < d; ++j)
      if (out.sites[j].flagged) {
        first = "site " + std::to_string(j) + ": " + out.sites[j].reason;
        break;
      }
    throw NumericalError(std::to_string(out.flagged) + " of " + std::to_string(d) +
                         " site fits flagged, above the allowed fraction (first: " + first + ")");
  }
  return out;
}

GriddedSeries to_unit_frechet(const GriddedSeries& series, const SiteFits& fits) {
  validate_series(series);
  const std::size_t d = series.domain.size(), n = series.year_count();
  if (fits.sites.size() != d) throw InvalidArgument("need one GEV fit per site");
  std::vector<std::vector<double>> out(n, std::vector<double>(d));
  for (std::size_t j = 0; j < d; ++j) {
    const GevFit& fit = fits.sites[j];
    if (fit.flagged) {
      const auto y = series.site_series(j);
      std::vector<std::size_t> order(n);
      for (std::size_t t = 0; t < n; ++t) order[t] = t;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
      for (std::size_t r = 0; r < n; ++r) {
        const double u = static_cast<double>(r + 1) / static_cast<double>(n + 1);
        out[order[r]][j] = -1.0 / std::log(u);
      }
      continue;
    }
    for (std::size_t t = 0; t < n; ++t) {
      const double y = series.fields[t][j];
      if (!in_support(fit.params, y))
        throw InvalidArgument("site " + std::to_string(j) + ", year " + std::to_string(series.years[t]) +
                              ": value " + format_double(y) + " lies outside the fitted GEV support");
      out[t][j] = gev_to_unit_frechet(fit.params, y);
    }
  }
  GriddedSeries z;
  z.domain = series.domain;
  z.years = series.years;
  for (auto& v : out) z.fields.emplace_back(series.domain, std::move(v));
  return z;
}

AnalysisResult analyze_dataset(const GriddedSeries& series, const TrainedNetwork& net,
                               const BlockPartition& partition, const AnalysisConfig& cfg) {
  validate_series(series);
  if (net.model() != ModelTag::brown_resnick)
    throw InvalidArgument("the extremes analysis needs a Brown-Resnick network");
  if (!(series.domain == partition.parent())) throw InvalidArgument("partition does not match the series grid");
  for (const Field& f : series.fields)
    for (double v : f.values())
      if (!(v > 0.0)) throw InvalidArgument("series must be on the unit Frechet scale (positive values)");

  AnalysisResult res;
  const auto names = parameter_names(net.model());
  for (std::size_t t = 0; t < series.year_count(); ++t) {
    YearResult yr;
    yr.year = series.years[t];
    try {
      yr.blocks = block_estimates(net, series.fields[t], partition, cfg.workers);
      yr.theta_m = mean_estimator(yr.blocks);
      const BootstrapMatrix boot =
          parametric_bootstrap(net.model(), yr.theta_m, partition, net, cfg.bootstrap_replicates,
                               Stream(substream_seed(cfg.seed, 5, t)), cfg.workers);
      yr.combined = combine(yr.blocks, optimal_weight(center_replicates(boot), cfg.ridge), cfg.bootstrap_replicates);
      yr.se = standard_errors(yr.combined);
      yr.ci = wald_ci(yr.combined, cfg.alpha);
      for (std::size_t i = 0; i < kParamDim; ++i) {
        yr.ci_contains_mean[i] = yr.ci[i].contains(yr.theta_m[i]);
        if (!yr.ci_contains_mean[i])
          res.warnings.push_back("year " + std::to_string(yr.year) + ": the " + names[i] +
                                 " interval does not contain the mean of the block estimates");
      }
      yr.ok = true;
    } catch (const std::exception& e) {
      yr.error = e.what();
      res.warnings.push_back("year " + std::to_string(yr.year) + " failed: " + yr.error);
    }
    res.years.push_back(std::move(yr));
  }

  // Model curve at the average of the yearly combined estimates.
  ParamVector avg{{0.0, 0.0}, net.model()};
  std::size_t ok = 0;
  for (const YearResult& y : res.years)
    if (y.ok) {
      ++ok;
      for (std::size_t i = 0; i < kParamDim; ++i) avg[i] += y.combined.theta_c[i];
    }
  const std::size_t side = std::min({cfg.ec_subset_side, series.domain.nx(), series.domain.ny()});
  if (ok > 0 && series.year_count() >= 2 && side >= 2) {
    for (std::size_t i = 0; i < kParamDim; ++i) avg[i] /= static_cast<double>(ok);
    const BrParams br = to_br(avg);
    for (std::size_t s = 0; s < cfg.ec_subsets; ++s) {
      Stream pick(substream_seed(cfg.seed, 6, s));
      EcDiagnostic diag;
      diag.side = side;
      diag.x0 = static_cast<std::size_t>(pick.below(series.domain.nx() - side + 1));
      diag.y0 = static_cast<std::size_t>(pick.below(series.domain.ny() - side + 1));
      std::vector<Field> sub;
      for (const Field& f : series.fields) sub.push_back(sub_field(f, diag.x0, diag.y0, side));
      diag.empirical = empirical_extremal_coefficient(sub, cfg.ec_max_pairs, cfg.ec_bins, substream_seed(cfg.seed, 7, s));
      for (const EcBin& b : diag.empirical)
        diag.model.push_back({b.center, pairwise_ec_theoretical(br, b.center), b.pair_count});
      res.diagnostics.push_back(std::move(diag));
    }
  }
  return res;
}

void write_analysis(const AnalysisResult& result, const AnalysisConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> files;
  std::ostringstream csv;
  csv << "year,status,theta_m1,theta_m2,theta_c1,theta_c2,se1,se2,ci_lower1,ci_upper1,ci_lower2,ci_upper2,"
         "ci_contains_mean1,ci_contains_mean2,ridge_applied\n";
  std::vector<std::string> failures;
  for (const YearResult& y : result.years) {
    csv << y.year << ',' << (y.ok ? "ok" : "error");
    if (!y.ok) {
      csv << ",,,,,,,,,,,,,\n";
      failures.push_back(std::to_string(y.year) + ": " + y.error);
      continue;
    }
    for (std::size_t i = 0; i < kParamDim; ++i) csv << ',' << format_double(y.theta_m[i]);
    for (std::size_t i = 0; i < kParamDim; ++i) csv << ',' << format_double(y.combined.theta_c[i]);
    for (std::size_t i = 0; i < kParamDim; ++i) csv << ',' << format_double(y.se[i]);
    for (std::size_t i = 0; i < kParamDim; ++i)
      csv << ',' << format_double(y.ci[i].lower) << ',' << format_double(y.ci[i].upper);
    for (std::size_t i = 0; i < kParamDim; ++i) csv << ',' << (y.ci_contains_mean[i] ? 1 : 0);
    csv << ',' << (y.combined.ridge_applied ? 1 : 0) << '\n';

    nlohmann::ordered_json j;
    j["year"] = y.year;
    j["theta_m"] = y.theta_m.values;
    j["theta_c"] = y.combined.theta_c.values;
    const auto& p = y.combined.precision;
    j["precision"] = {{p(0, 0), p(0, 1)}, {p(1, 0), p(1, 1)}};
    j["standard_errors"] = y.se;
    j["alpha"] = cfg.alpha;
    j["ci"] = interval_json(y.ci);
    j["B"] = cfg.bootstrap_replicates;
    j["K"] = y.blocks.block_count();
    j["ridge_applied"] = y.combined.ridge_applied;
    nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
    for (const ParamVector& b : y.blocks.estimates) blocks.push_back(b.values);
    j["block_estimates"] = blocks;
    const std::string name = "year_" + std::to_string(y.year) + ".json";
    write_text_file(dir / name, j.dump(2) + "\n");
    files.push_back(name);
  }
  write_text_file(dir / "years.csv", csv.str());
  files.insert(files.begin(), "years.csv");
  for (std::size_t s = 0; s < result.diagnostics.size(); ++s) {
    const std::string e = "ec_" + std::to_string(s + 1) + "_empirical.csv";
    const std::string m = "ec_" + std::to_string(s + 1) + "_model.csv";
    write_ec_csv(result.diagnostics[s].empirical, dir / e);
    write_ec_csv(result.diagnostics[s].model, dir / m);
    files.push_back(e);
    files.push_back(m);
  }

  nlohmann::ordered_json man;
  man["seed"] = cfg.seed;
  man["B"] = cfg.bootstrap_replicates;
  man["alpha"] = cfg.alpha;
  man["bootstrap_seeds"] = "year index t: substream(seed, 5, t)";
  nlohmann::ordered_json subsets = nlohmann::ordered_json::array();
  for (const EcDiagnostic& d : result.diagnostics) subsets.push_back({{"x0", d.x0}, {"y0", d.y0}, {"side", d.side}});
  man["ec_subsets"] = subsets;
  man["warnings"] = result.warnings;
  man["failures"] = failures;
  man["files"] = nlohmann::ordered_json::parse(manifest_files_json(dir, files));
  write_text_file(dir / "manifest.json", man.dump(2) + "\n");
}

}  // namespace dac
