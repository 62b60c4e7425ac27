// dac: command-line front end for the divide-and-conquer estimation library.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "dac/bootstrap.hpp"
#include "dac/error.hpp"
#include "dac/estimator.hpp"
#include "dac/field_io.hpp"
#include "dac/gmm.hpp"
#include "dac/gp.hpp"
#include "dac/harness.hpp"
#include "dac/maxstable.hpp"
#include "dac/models.hpp"
#include "dac/pipeline.hpp"
#include "dac/report.hpp"

namespace fs = std::filesystem;
using namespace dac;

namespace {

std::pair<std::size_t, std::size_t> parse_dims(const std::string& s) {
  const auto x = s.find_first_of("xX");
  std::size_t a = 0, b = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument("");
    std::size_t used = 0;
    a = std::stoul(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument("");
    b = std::stoul(s.substr(x + 1), &used);
    if (used != s.size() - x - 1) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw InvalidArgument("expected NXxNY, got \"" + s + "\"");
  }
  if (a == 0 || b == 0) throw InvalidArgument("dimensions must be positive: \"" + s + "\"");
  return {a, b};
}

std::array<double, 2> parse_pair(const std::string& s) {
  std::stringstream in(s);
  std::array<double, 2> out{};
  char comma = 0;
  if (!(in >> out[0] >> comma >> out[1]) || comma != ',' || !(in >> std::ws).eof())
    throw InvalidArgument("expected two comma-separated numbers, got \"" + s + "\"");
  return out;
}

ParamVector make_params(ModelTag model, const std::string& text, bool natural) {
  const auto v = parse_pair(text);
  if (!natural) return ParamVector{{v[0], v[1]}, model};
  if (model == ModelTag::gaussian) {
    if (!(v[0] > 0.0 && v[1] > 0.0)) throw InvalidArgument("tau2 and phi2 must be positive");
    return from_gp(GpParams{std::log(v[0]), std::log(v[1])});
  }
  return from_br(transform_params(v[0], v[1]));
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw InvalidArgument("bad list \"" + s + "\"");
    }
  }
  return out;
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const InvalidArgument*>(&e)) return 2;
  if (dynamic_cast<const IoError*>(&e)) return 3;
  if (dynamic_cast<const NumericalError*>(&e)) return 4;
  if (dynamic_cast<const TrainingError*>(&e)) return 5;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  dac::nn::retain_large_buffers();
  CLI::App app{"Divide-and-conquer neural parameter inference for large gridded fields"};
  app.require_subcommand(1);
  std::function<void()> action;

  // simulate
  std::string sim_model = "gaussian", sim_grid = "40x40", sim_params, sim_out;
  double sim_spacing = 1.0;
  bool sim_natural = false;
  std::uint64_t sim_seed = 1;
  std::size_t sim_count = 1;
  auto* sim = app.add_subcommand("simulate", "Simulate fields from a model");
  sim->add_option("--model", sim_model, "gaussian | br");
  sim->add_option("--grid", sim_grid, "NXxNY");
  sim->add_option("--spacing", sim_spacing);
  sim->add_option("--params", sim_params, "theta1,theta2 on the estimation scale")->required();
  sim->add_flag("--natural", sim_natural, "--params are (tau2,phi2) or (lambda,nu)");
  sim->add_option("--seed", sim_seed);
  sim->add_option("--count", sim_count, "replicates; >1 writes <out>/<i>.dacf");
  sim->add_option("--out", sim_out)->required();
  sim->callback([&] {
    action = [&] {
      const ModelTag model = parse_model(sim_model);
      const auto [nx, ny] = parse_dims(sim_grid);
      const GridDomain dom = make_grid(nx, ny, sim_spacing);
      const ParamVector theta = make_params(model, sim_params, sim_natural);
      const FieldSampler sampler = make_sampler_with_retry(model, dom, theta);
      const Stream master(sim_seed);
      if (sim_count <= 1) {
        Stream s = master.child(0);
        write_field(sampler.draw(s), sim_out);
        return;
      }
      fs::create_directories(sim_out);
      for (std::size_t i = 0; i < sim_count; ++i) {
        Stream s = master.child(i);
        write_field(sampler.draw(s), fs::path(sim_out) / (std::to_string(i + 1) + ".dacf"));
      }
    };
  });

  // train
  std::string tr_model = "gaussian", tr_block = "20x20", tr_center, tr_half = "0.5", tr_select = "val-loss", tr_out,
              tr_filters = "16,16,16", tr_kernels = "10,5,3", tr_cache;
  std::size_t tr_t1 = 40, tr_t2 = 40, tr_vt1 = 16, tr_vt2 = 16, tr_seeds = 1, tr_dense = 64, tr_batch = 200,
              tr_workers = 0;
  int tr_epochs = 300, tr_patience = 50;
  double tr_spacing = 1.0, tr_lr = 1e-3;
  std::uint64_t tr_seed = 1;
  auto* tr = app.add_subcommand("train", "Train candidate networks and keep the selected one");
  tr->add_option("--model", tr_model, "gaussian | br");
  tr->add_option("--block", tr_block, "NXxNY training domain");
  tr->add_option("--spacing", tr_spacing);
  tr->add_option("--grid-center", tr_center, "a,b on the estimation scale")->required();
  tr->add_option("--halfwidth", tr_half, "h or h1,h2");
  tr->add_option("--t1", tr_t1);
  tr->add_option("--t2", tr_t2);
  tr->add_option("--val-t1", tr_vt1);
  tr->add_option("--val-t2", tr_vt2);
  tr->add_option("--seeds", tr_seeds);
  tr->add_option("--select", tr_select, "val-loss | avb");
  tr->add_option("--filters", tr_filters);
  tr->add_option("--kernels", tr_kernels);
  tr->add_option("--dense", tr_dense);
  tr->add_option("--epochs", tr_epochs);
  tr->add_option("--patience", tr_patience);
  tr->add_option("--batch-size", tr_batch);
  tr->add_option("--learning-rate", tr_lr);
  tr->add_option("--seed", tr_seed);
  tr->add_option("--workers", tr_workers);
  tr->add_option("--cache-dir", tr_cache);
  tr->add_option("--out", tr_out)->required();
  tr->callback([&] {
    action = [&] {
      NetworkPlan plan;
      plan.model = parse_model(tr_model);
      std::tie(plan.block_nx, plan.block_ny) = parse_dims(tr_block);
      plan.spacing = tr_spacing;
      const auto c = parse_pair(tr_center);
      plan.train_grid.center = ParamVector{{c[0], c[1]}, plan.model};
      if (tr_half.find(',') == std::string::npos) {
        const double h = std::stod(tr_half);
        plan.train_grid.halfwidth = {h, h};
      } else {
        plan.train_grid.halfwidth = parse_pair(tr_half);
      }
      plan.train_grid.t1 = tr_t1;
      plan.train_grid.t2 = tr_t2;
      plan.val_t1 = tr_vt1;
      plan.val_t2 = tr_vt2;
      plan.arch.conv_filters = parse_sizes(tr_filters);
      plan.arch.conv_kernels = parse_sizes(tr_kernels);
      plan.arch.dense_units = tr_dense;
      plan.training = {tr_lr, tr_batch, tr_epochs, tr_patience};
      plan.seeds = tr_seeds;
      plan.selection = parse_selection(tr_select);
      plan.master_seed = tr_seed;
      plan.workers = tr_workers;
      plan.cache_dir = tr_cache;
      const SelectedNetwork sel = train_and_select(plan);
      write_network(sel.net, tr_out);
      std::printf("selected seed %llu: best val loss %.6g at epoch %d of %d (%.1f s)\n",
                  static_cast<unsigned long long>(sel.net.report.seed), sel.net.report.best_val_loss,
                  sel.net.report.best_epoch, sel.net.report.epochs_run, sel.train_seconds);
    };
  });

  // bootstrap
  std::string bs_net, bs_field, bs_blocks, bs_out, bs_est;
  std::size_t bs_b = 5000, bs_workers = 0;
  std::uint64_t bs_seed = 1;
  auto* bs = app.add_subcommand("bootstrap", "Block estimates and parametric bootstrap at their mean");
  bs->add_option("--net", bs_net)->required();
  bs->add_option("--field", bs_field)->required();
  bs->add_option("--blocks", bs_blocks, "NXxNY block size")->required();
  bs->add_option("--B", bs_b);
  bs->add_option("--seed", bs_seed);
  bs->add_option("--workers", bs_workers);
  bs->add_option("--out", bs_out)->required();
  bs->add_option("--estimates-out", bs_est, "block estimates CSV (default: <out> with .est.csv)");
  bs->callback([&] {
    action = [&] {
      const TrainedNetwork net = read_network(bs_net);
      const Field field = read_field(bs_field);
      const auto [bx, by] = parse_dims(bs_blocks);
      const BlockPartition part = partition(field.domain(), bx, by);
      const BlockEstimates est = block_estimates(net, field, part, bs_workers);
      const ParamVector center = mean_estimator(est);
      const BootstrapMatrix m = parametric_bootstrap(net.model(), center, part, net, bs_b, Stream(bs_seed), bs_workers);
      write_bootstrap(m, bs_out);
      const fs::path est_path = bs_est.empty() ? fs::path(bs_out).replace_extension(".est.csv") : fs::path(bs_est);
      write_block_estimates(est, est_path);
      std::printf("K = %zu, B = %zu, theta_m = (%.6g, %.6g); estimates in %s\n", est.block_count(), bs_b, center[0],
                  center[1], est_path.string().c_str());
    };
  });

  // combine
  std::string cb_boot, cb_est, cb_out, cb_model = "gaussian";
  double cb_alpha = 0.05, cb_ridge = kDefaultRidge;
  auto* cb = app.add_subcommand("combine", "One-step optimally weighted combination with Wald intervals");
  cb->add_option("--boot", cb_boot)->required();
  cb->add_option("--estimates", cb_est)->required();
  cb->add_option("--model", cb_model, "gaussian | br (labels only)");
  cb->add_option("--alpha", cb_alpha);
  cb->add_option("--ridge", cb_ridge);
  cb->add_option("--out", cb_out)->required();
  cb->callback([&] {
    action = [&] {
      const ModelTag model = parse_model(cb_model);
      const BootstrapMatrix m = read_bootstrap(cb_boot, model);
      const BlockEstimates est = read_block_estimates(cb_est, model);
      if (est.block_count() != m.blocks())
        throw InvalidArgument("estimates have " + std::to_string(est.block_count()) + " blocks, bootstrap has " +
                              std::to_string(m.blocks()));
      const CombinedEstimate c = combine(est, optimal_weight(center_replicates(m), cb_ridge), m.replicates());
      write_combined_json(c, cb_alpha, cb_out);
      const auto ci = wald_ci(c, cb_alpha);
      std::printf("theta_c = (%.6g, %.6g); CI1 [%.6g, %.6g], CI2 [%.6g, %.6g]%s\n", c.theta_c[0], c.theta_c[1],
                  ci[0].lower, ci[0].upper, ci[1].lower, ci[1].upper, c.ridge_applied ? " (ridge applied)" : "");
    };
  });

  // mc-study
  std::string mc_config, mc_out;
  std::size_t mc_workers = 0;
  bool mc_workers_set = false;
  auto* mc = app.add_subcommand("mc-study", "Monte Carlo study from a JSON config");
  mc->add_option("--config", mc_config)->required();
  mc->add_option("--out", mc_out, "overrides the config's out directory");
  mc->add_option("--workers", mc_workers)->each([&](const std::string&) { mc_workers_set = true; });
  mc->callback([&] {
    action = [&] {
      StudyConfig cfg = load_study_config(mc_config);
      if (!mc_out.empty()) cfg.out_dir = mc_out;
      if (mc_workers_set) cfg.workers = mc_workers;
      if (cfg.out_dir.empty()) throw InvalidArgument("no output directory: set \"out\" or pass --out");
      const StudyResult r = run_mc_study(cfg);
      emit_report(r, cfg.out_dir);
      std::ifstream table(cfg.out_dir / "table.txt");
      std::cout << table.rdbuf();
    };
  });

  // analyze
  std::string an_data, an_format = "csv", an_net, an_blocks, an_out, an_margins = "gev";
  AnalysisConfig an_cfg;
  auto* an = app.add_subcommand("analyze", "Yearly-maxima analysis: margins, block fits, combination, diagnostics");
  an->add_option("--data", an_data)->required();
  an->add_option("--format", an_format, "csv | dacf-set");
  an->add_option("--margins", an_margins, "gev (fit and transform) | frechet (already unit Frechet)");
  an->add_option("--net", an_net)->required();
  an->add_option("--blocks", an_blocks)->required();
  an->add_option("--B", an_cfg.bootstrap_replicates);
  an->add_option("--alpha", an_cfg.alpha);
  an->add_option("--ridge", an_cfg.ridge);
  an->add_option("--seed", an_cfg.seed);
  an->add_option("--workers", an_cfg.workers);
  an->add_option("--ec-subsets", an_cfg.ec_subsets);
  an->add_option("--ec-side", an_cfg.ec_subset_side);
  an->add_option("--out", an_out)->required();
  an->callback([&] {
    action = [&] {
      const TrainedNetwork net = read_network(an_net);
      GriddedSeries series = load_grid_series(an_data, parse_series_format(an_format));
      fs::create_directories(an_out);
      if (an_margins == "gev") {
        const SiteFits fits = fit_gev_per_site(series, kMinGevYears, 0.01, an_cfg.workers);
        std::ostringstream csv;
        csv << "site,location,scale,shape,se_location,se_scale,se_shape,flagged,reason\n";
        for (std::size_t j = 0; j < fits.sites.size(); ++j) {
          const GevFit& f = fits.sites[j];
          csv << j << ',' << format_double(f.params.location) << ',' << format_double(f.params.scale) << ','
              << format_double(f.params.shape);
          for (double s : f.se) csv << ',' << format_double(s);
          csv << ',' << (f.flagged ? 1 : 0) << ',' << f.reason << '\n';
        }
        write_text_file(fs::path(an_out) / "gev_fits.csv", csv.str());
        series = to_unit_frechet(series, fits);
      } else if (an_margins != "frechet") {
        throw InvalidArgument("--margins must be gev or frechet");
      }
      const auto [bx, by] = parse_dims(an_blocks);
      const AnalysisResult r = analyze_dataset(series, net, partition(series.domain, bx, by), an_cfg);
      write_analysis(r, an_cfg, an_out);
      for (const std::string& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      std::size_t ok = 0;
      for (const YearResult& y : r.years) ok += y.ok ? 1 : 0;
      std::printf("%zu of %zu years analysed\n", ok, r.years.size());
    };
  });

  // extremal
  std::string ec_data, ec_format = "dacf-set", ec_out, ec_params;
  std::size_t ec_pairs = 20000, ec_bins = 15;
  std::uint64_t ec_seed = 1;
  bool ec_natural = false;
  auto* ec = app.add_subcommand("extremal", "Binned empirical extremal coefficients from replicated fields");
  ec->add_option("--data", ec_data, "directory of replicates")->required();
  ec->add_option("--format", ec_format, "csv | dacf-set");
  ec->add_option("--max-pairs", ec_pairs);
  ec->add_option("--bins", ec_bins);
  ec->add_option("--seed", ec_seed);
  ec->add_option("--model-params", ec_params, "Brown-Resnick theta1,theta2 for a closed-form column");
  ec->add_flag("--natural", ec_natural, "--model-params are (lambda,nu)");
  ec->add_option("--out", ec_out)->required();
  ec->callback([&] {
    action = [&] {
      const GriddedSeries s = load_grid_series(ec_data, parse_series_format(ec_format));
      const auto bins = empirical_extremal_coefficient(s.fields, ec_pairs, ec_bins, ec_seed);
      write_ec_csv(bins, ec_out);
      if (!ec_params.empty()) {
        const BrParams p = to_br(make_params(ModelTag::brown_resnick, ec_params, ec_natural));
        std::vector<EcBin> model;
        for (const EcBin& b : bins) model.push_back({b.center, pairwise_ec_theoretical(p, b.center), b.pair_count});
        write_ec_csv(model, fs::path(ec_out).replace_extension(".model.csv"));
      }
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    action();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e);
  }
  return 0;
}
