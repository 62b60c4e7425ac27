#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <json.hpp>

#include "dac/error.hpp"
#include "dac/field_io.hpp"
#include "dac/pipeline.hpp"
#include "dac/report.hpp"
#include "test_util.hpp"

using namespace dac;

namespace {

GriddedSeries gev_series(std::size_t nx, std::size_t ny, std::size_t years, const GevParams& p, std::uint64_t seed) {
  GriddedSeries s;
  s.domain = make_grid(nx, ny);
  Stream st(seed);
  for (std::size_t t = 0; t < years; ++t) {
    std::vector<double> v(nx * ny);
    for (auto& x : v) x = gev_quantile(p, st.uniform());
    s.years.push_back(1900 + static_cast<int>(t));
    s.fields.emplace_back(s.domain, v);
  }
  return s;
}

Field with_value(const Field& f, std::size_t j, double v) {
  std::vector<double> x(f.values().begin(), f.values().end());
  x[j] = v;
  return Field(f.domain(), std::move(x));
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

TrainedNetwork toy_br_net(std::size_t side) {
  nn::ArchitectureSpec a;
  a.input_h = a.input_w = side;
  a.conv_filters = {2};
  a.conv_kernels = {3};
  a.dense_units = 4;
  TrainedNetwork t{nn::ConvNet(a), default_transform(ModelTag::brown_resnick), {}, {}};
  t.scaler.model = ModelTag::brown_resnick;
  t.scaler.min = {-1.0, -1.0};
  t.scaler.range = {2.0, 1.0};
  Stream s(4);
  t.net.initialize(s);
  return t;
}

}  // namespace

TEST(SeriesCsv, RoundTripSortedByYear) {
  TempDir tmp;
  GriddedSeries s = gev_series(3, 2, 3, GevParams{0, 1, 0}, 1);
  s.years = {2001, 1999, 2000};
  std::swap(s.fields[0], s.fields[1]);
  EXPECT_THROW(write_series_csv(s, tmp / "x"), InvalidArgument);  // years out of order
  s.years = {1999, 2000, 2001};
  write_series_csv(s, tmp / "x");
  const GriddedSeries r = load_grid_series(tmp / "x", SeriesFormat::csv);
  EXPECT_EQ(r.years, s.years);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(r.fields[t], s.fields[t]);
  EXPECT_EQ(r.site_series(4).size(), 3u);
  EXPECT_EQ(r.site_series(4)[2], s.fields[2][4]);
}

TEST(SeriesCsv, HeaderOptionalAndOneByOne) {
  TempDir tmp;
  write_text_file(tmp / "d" / "a.csv", "1950,1,1,2.5\n3.25\n");
  const GriddedSeries r = load_grid_series(tmp / "d", SeriesFormat::csv);
  EXPECT_EQ(r.years, std::vector<int>{1950});
  EXPECT_EQ(r.domain.size(), 1u);
  EXPECT_EQ(r.fields[0][0], 3.25);
}

TEST(SeriesCsv, ErrorsNameRowAndColumn) {
  TempDir tmp;
  write_text_file(tmp / "a" / "y.csv", "year,nx,ny,spacing\n1950,2,2,1\n1,2\n3,oops\n");
  const std::string m = message_of([&] { (void)load_grid_series(tmp / "a", SeriesFormat::csv); });
  EXPECT_NE(m.find("row 4, column 2"), std::string::npos) << m;
  write_text_file(tmp / "b" / "y.csv", "1950,2,2,1\n1,2\n");
  EXPECT_THROW((void)load_grid_series(tmp / "b", SeriesFormat::csv), IoError);
  write_text_file(tmp / "c" / "y.csv", "1950,2,1,1\n1,2\n");
  write_text_file(tmp / "c" / "z.csv", "1950,2,1,1\n1,2\n");
  EXPECT_NE(message_of([&] { (void)load_grid_series(tmp / "c", SeriesFormat::csv); }).find("twice"), std::string::npos);
  write_text_file(tmp / "e" / "y.csv", "1950,2,1,1\n1,2\n");
  write_text_file(tmp / "e" / "z.csv", "1951,1,2,1\n1\n2\n");
  EXPECT_THROW((void)load_grid_series(tmp / "e", SeriesFormat::csv), IoError);
  EXPECT_THROW((void)load_grid_series(tmp / "missing", SeriesFormat::csv), IoError);
  EXPECT_THROW((void)parse_series_format("xlsx"), InvalidArgument);
}

TEST(SeriesDacf, YearFromStem) {
  TempDir tmp;
  const GridDomain d = make_grid(2, 2);
  std::filesystem::create_directories(tmp / "s");
  write_field(Field(d, {1, 2, 3, 4}), tmp / "s" / "1980.dacf");
  write_field(Field(d, {5, 6, 7, 8}), tmp / "s" / "1979.dacf");
  const GriddedSeries r = load_grid_series(tmp / "s", SeriesFormat::dacf_set);
  EXPECT_EQ(r.years, (std::vector<int>{1979, 1980}));
  EXPECT_EQ(r.fields[0][0], 5.0);
  write_field(Field(d, {5, 6, 7, 8}), tmp / "s" / "late.dacf");
  EXPECT_THROW((void)load_grid_series(tmp / "s", SeriesFormat::dacf_set), IoError);
}

TEST(SiteFits, TransformGivesUnitFrechet) {
  const GriddedSeries s = gev_series(3, 3, 129, GevParams{5, 2, 0.1}, 8);
  const SiteFits fits = fit_gev_per_site(s, kMinGevYears, 0.01, 2);
  EXPECT_EQ(fits.flagged, 0u);
  const GriddedSeries z = to_unit_frechet(s, fits);
  std::vector<double> all;
  for (const Field& f : z.fields) all.insert(all.end(), f.values().begin(), f.values().end());
  for (double v : all) EXPECT_GT(v, 0.0);
  // pooled over 9 sites; sites are independent here
  EXPECT_LT(ks_statistic(all, [](double t) { return std::exp(-1.0 / t); }), ks_critical(all.size(), 0.01));
}

TEST(SiteFits, TooFewYearsAndFlagging) {
  const GriddedSeries s = gev_series(2, 2, 10, GevParams{0, 1, 0}, 2);
  EXPECT_THROW((void)fit_gev_per_site(s), InvalidArgument);
  GriddedSeries c = gev_series(2, 2, 30, GevParams{0, 1, 0}, 3);
  for (Field& f : c.fields) f = with_value(f, 1, 7.0);  // constant site
  EXPECT_THROW((void)fit_gev_per_site(c), NumericalError);
  const SiteFits lax = fit_gev_per_site(c, kMinGevYears, 0.5);
  EXPECT_EQ(lax.flagged, 1u);
  EXPECT_TRUE(lax.sites[1].flagged);
  // rank fallback keeps the flagged site finite
  const GriddedSeries z = to_unit_frechet(c, lax);
  EXPECT_TRUE(std::isfinite(z.fields[0][1]));
}

TEST(Analysis, PerYearResultsAndFiles) {
  TempDir tmp;
  GriddedSeries s;
  s.domain = make_grid(8, 8);
  Stream st(6);
  for (int y = 0; y < 3; ++y) {
    s.years.push_back(2000 + y);
    s.fields.push_back(simulate_brown_resnick(s.domain, transform_params(2, 1), st));
  }
  AnalysisConfig cfg;
  cfg.bootstrap_replicates = 12;
  cfg.ec_subsets = 1;
  cfg.ec_subset_side = 6;
  cfg.ec_max_pairs = 200;
  cfg.ec_bins = 4;
  const TrainedNetwork net = toy_br_net(4);
  const BlockPartition p = partition(s.domain, 4, 4);
  const AnalysisResult a = analyze_dataset(s, net, p, cfg);
  ASSERT_EQ(a.years.size(), 3u);
  for (const YearResult& y : a.years) {
    ASSERT_TRUE(y.ok) << y.error;
    EXPECT_EQ(y.blocks.block_count(), 4u);
    EXPECT_LE(y.ci[0].lower, y.combined.theta_c[0]);
    EXPECT_GE(y.ci[0].upper, y.combined.theta_c[0]);
  }
  ASSERT_EQ(a.diagnostics.size(), 1u);
  EXPECT_FALSE(a.diagnostics[0].empirical.empty());
  EXPECT_EQ(analyze_dataset(s, net, p, cfg).years[1].combined.theta_c, a.years[1].combined.theta_c);

  write_analysis(a, cfg, tmp / "out");
  for (const char* f : {"years.csv", "year_2001.json", "ec_1_empirical.csv", "ec_1_model.csv", "manifest.json"})
    EXPECT_TRUE(std::filesystem::exists(tmp / "out" / f)) << f;
  std::ifstream in(tmp / "out" / "manifest.json");
  const auto man = nlohmann::json::parse(in);
  for (const auto& f : man["files"]) EXPECT_EQ(f["sha256"], sha256_file(tmp / "out" / f["file"].get<std::string>()));

  // wrong block size fails every year but not the run
  for (const YearResult& y : analyze_dataset(s, toy_br_net(5), p, cfg).years) EXPECT_FALSE(y.ok);
  GriddedSeries neg = s;
  neg.fields[0] = with_value(neg.fields[0], 3, -1.0);
  EXPECT_THROW((void)analyze_dataset(neg, net, p, cfg), InvalidArgument);
}

TEST(Sha256, KnownValue) {
  TempDir tmp;
  write_text_file(tmp / "abc", "abc");
  EXPECT_EQ(sha256_file(tmp / "abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
}
