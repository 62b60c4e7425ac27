#include "dac/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "dac/bootstrap.hpp"
#include "dac/error.hpp"
#include "dac/gp.hpp"
#include "dac/report.hpp"

namespace dac {

namespace {

using json = nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument(where + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw InvalidArgument("unknown key \"" + key + "\" in " + where);
}

std::array<double, 2> pair_of(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 2) throw InvalidArgument(key + " must be a two-element array");
  return {j[0].get<double>(), j[1].get<double>()};
}

std::vector<std::size_t> sizes_of(const json& j, const std::string& key) {
  if (!j.is_array() || j.empty()) throw InvalidArgument(key + " must be a nonempty array");
  std::vector<std::size_t> out;
  for (const auto& v : j) out.push_back(v.get<std::size_t>());
  return out;
}

// Accepts {"tau2": a, "phi2": b} or {"lambda": a, "nu": b} on the natural scale.
ParamVector natural_truth(ModelTag model, const json& j) {
  if (model == ModelTag::gaussian) {
    reject_unknown(j, {"tau2", "phi2"}, "truth");
    const double tau2 = j.at("tau2").get<double>(), phi2 = j.at("phi2").get<double>();
    if (!(tau2 > 0.0 && phi2 > 0.0)) throw InvalidArgument("tau2 and phi2 must be positive");
    return from_gp(GpParams{std::log(tau2), std::log(phi2)});
  }
  reject_unknown(j, {"lambda", "nu"}, "truth");
  return from_br(transform_params(j.at("lambda").get<double>(), j.at("nu").get<double>()));
}

std::function<Field(Stream&)> truth_sampler(const StudyConfig& c, const GridDomain& domain,
                                            std::string& label) {
  const std::size_t d = domain.size();
  if (c.model == ModelTag::brown_resnick) {
    if (c.simulation == TruthSimulation::stitched)
      throw InvalidArgument("stitched simulation is only available for the Gaussian model");
    if (d > kBrownResnickSiteCap)
      throw InvalidArgument("Brown-Resnick full-domain simulation is capped at " +
                            std::to_string(kBrownResnickSiteCap) + " sites, domain has " +
                            std::to_string(d));
    label = "exact";
    auto s = std::make_shared<FieldSampler>(make_sampler_with_retry(c.model, domain, c.truth));
    return [s](Stream& st) { return s->draw(st); };
  }
  const bool exact = c.simulation == TruthSimulation::exact ||
                     (c.simulation == TruthSimulation::automatic && d <= kExactGaussianSites);
  if (exact) {
    label = "exact";
    auto s = std::make_shared<FieldSampler>(make_sampler_with_retry(c.model, domain, c.truth));
    return [s](Stream& st) { return s->draw(st); };
  }
  label = "stitched";
  auto s = std::make_shared<StitchedGpSampler>(domain, to_gp(c.truth), c.block_nx, c.block_ny, c.stitch_halo);
  return [s](Stream& st) { return s->draw(st); };
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

StudyConfig parse_study_config(const json& j) {
  reject_unknown(j,
                 {"name", "model", "truth", "truth_natural", "domain", "spacing", "block", "training",
                  "B", "R", "alpha", "ridge", "seed", "workers", "simulation", "stitch_halo", "out"},
                 "study config");
  StudyConfig c;
  c.name = j.value("name", c.name);
  c.model = parse_model(j.at("model").get<std::string>());
  if (j.contains("truth") == j.contains("truth_natural"))
    throw InvalidArgument("give exactly one of truth (estimation scale) or truth_natural");
  if (j.contains("truth")) {
    const auto t = pair_of(j["truth"], "truth");
    c.truth = ParamVector{{t[0], t[1]}, c.model};
  } else {
    c.truth = natural_truth(c.model, j["truth_natural"]);
  }
  const auto dom = sizes_of(j.at("domain"), "domain");
  const auto blk = sizes_of(j.at("block"), "block");
  if (dom.size() != 2 || blk.size() != 2) throw InvalidArgument("domain and block take [nx, ny]");
  c.nx = dom[0];
  c.ny = dom[1];
  c.block_nx = blk[0];
  c.block_ny = blk[1];
  c.spacing = j.value("spacing", 1.0);
  c.bootstrap_replicates = j.value("B", c.bootstrap_replicates);
  c.mc_replicates = j.value("R", c.mc_replicates);
  c.alpha = j.value("alpha", c.alpha);
  c.ridge = j.value("ridge", c.ridge);
  c.master_seed = j.value("seed", c.master_seed);
  c.workers = j.value("workers", c.workers);
  c.stitch_halo = j.value("stitch_halo", c.stitch_halo);
  const std::string sim = j.value("simulation", std::string("auto"));
  if (sim == "auto") c.simulation = TruthSimulation::automatic;
  else if (sim == "exact") c.simulation = TruthSimulation::exact;
  else if (sim == "stitched") c.simulation = TruthSimulation::stitched;
  else throw InvalidArgument("simulation must be auto, exact or stitched");
  if (j.contains("out")) c.out_dir = j["out"].get<std::string>();

  NetworkPlan& p = c.network;
  p.train_grid.center = c.truth;
  p.train_grid.t1 = p.train_grid.t2 = 40;
  const json tr = j.value("training", json::object());
  reject_unknown(tr,
                 {"center", "halfwidth", "t1", "t2", "val_t1", "val_t2", "seeds", "selection", "epochs",
                  "patience", "batch_size", "learning_rate", "architecture", "network", "save_network",
                  "cache_dir"},
                 "training");
  if (tr.contains("center")) {
    const auto ctr = pair_of(tr["center"], "training.center");
    p.train_grid.center = ParamVector{{ctr[0], ctr[1]}, c.model};
  }
  if (tr.contains("halfwidth")) {
    if (tr["halfwidth"].is_number()) {
      const double h = tr["halfwidth"].get<double>();
      p.train_grid.halfwidth = {h, h};
    } else {
      p.train_grid.halfwidth = pair_of(tr["halfwidth"], "training.halfwidth");
    }
  }
  p.train_grid.t1 = tr.value("t1", p.train_grid.t1);
  p.train_grid.t2 = tr.value("t2", p.train_grid.t2);
  p.val_t1 = tr.value("val_t1", p.val_t1);
  p.val_t2 = tr.value("val_t2", p.val_t2);
  p.seeds = tr.value("seeds", std::size_t{10});
  p.selection = parse_selection(tr.value("selection", std::string("val-loss")));
  p.training.max_epochs = tr.value("epochs", p.training.max_epochs);
  p.training.patience = tr.value("patience", p.training.patience);
  p.training.batch_size = tr.value("batch_size", p.training.batch_size);
  p.training.learning_rate = tr.value("learning_rate", p.training.learning_rate);
  if (tr.contains("architecture")) {
    const json& a = tr["architecture"];
    reject_unknown(a, {"filters", "kernels", "pool", "dense"}, "training.architecture");
    if (a.contains("filters")) p.arch.conv_filters = sizes_of(a["filters"], "filters");
    if (a.contains("kernels")) p.arch.conv_kernels = sizes_of(a["kernels"], "kernels");
    p.arch.pool = a.value("pool", p.arch.pool);
    p.arch.dense_units = a.value("dense", p.arch.dense_units);
  }
  if (tr.contains("network")) c.network_file = tr["network"].get<std::string>();
  if (tr.contains("save_network")) c.network_save_path = tr["save_network"].get<std::string>();
  if (tr.contains("cache_dir")) p.cache_dir = tr["cache_dir"].get<std::string>();

  if (c.nx == 0 || c.ny == 0 || c.block_nx == 0 || c.block_ny == 0)
    throw InvalidArgument("domain and block dimensions must be positive");
  if (c.nx % c.block_nx != 0 || c.ny % c.block_ny != 0)
    throw InvalidArgument("block dimensions must divide the domain dimensions");
  if (c.mc_replicates == 0 || c.bootstrap_replicates == 0 || p.seeds == 0)
    throw InvalidArgument("R, B and seeds must be positive");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  return c;
}

StudyConfig load_study_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  try {
    return parse_study_config(j);
  } catch (const json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

std::array<double, kParamDim> coverage(std::span<const std::array<Interval, kParamDim>> intervals,
                                       const ParamVector& truth) {
  if (intervals.empty()) throw InvalidArgument("coverage of an empty interval list");
  std::array<double, kParamDim> cp{};
  for (const auto& iv : intervals)
    for (std::size_t i = 0; i < kParamDim; ++i) cp[i] += iv[i].contains(truth[i]) ? 1.0 : 0.0;
  for (double& v : cp) v = 100.0 * v / static_cast<double>(intervals.size());
  return cp;
}

std::array<std::string, kParamDim> parameter_names(ModelTag model) {
  if (model == ModelTag::gaussian) return {"log_tau2", "log_phi2"};
  return {"theta1", "theta2"};
}

MetricsTable summarize(std::span<const ReplicateRecord> records, const ParamVector& truth) {
  MetricsTable t;
  std::vector<std::array<Interval, kParamDim>> cis;
  std::vector<double> times;
  std::array<std::vector<double>, kParamDim> est, se;
  for (const ReplicateRecord& r : records) {
    if (!r.ok) {
      ++t.failures;
      continue;
    }
    ++t.replicates;
    cis.push_back(r.ci);
    times.push_back(r.seconds);
    for (std::size_t i = 0; i < kParamDim; ++i) {
      est[i].push_back(r.theta_c[i]);
      se[i].push_back(r.se[i]);
    }
  }
  if (t.replicates == 0) return t;
  const auto names = parameter_names(truth.model);
  const auto cp = coverage(cis, truth);
  const double n = static_cast<double>(t.replicates);
  for (std::size_t i = 0; i < kParamDim; ++i) {
    ParameterMetrics m;
    m.parameter = names[i];
    double sum = 0.0, sq = 0.0;
    for (double v : est[i]) {
      sum += v - truth[i];
      sq += (v - truth[i]) * (v - truth[i]);
    }
    m.bias = sum / n;
    m.rmse = std::sqrt(sq / n);
    const double mu = mean(est[i]);
    double dev = 0.0;
    for (double v : est[i]) dev += (v - mu) * (v - mu);
    m.ese = std::sqrt(dev / n);
    m.ase = mean(se[i]);
    m.cp = cp[i];
    t.rows.push_back(m);
  }
  t.time_mean = mean(times);
  t.time_sd = sample_sd(times);
  return t;
}

SelectedNetwork prepare_network(const StudyConfig& config) {
  if (!config.network_file.empty() && std::filesystem::exists(config.network_file)) {
    SelectedNetwork s{read_network(config.network_file), {}, 0.0};
    if (s.net.model() != config.model) throw InvalidArgument("network file was trained for another model");
    return s;
  }
  NetworkPlan plan = config.network;
  plan.model = config.model;
  plan.block_nx = config.block_nx;
  plan.block_ny = config.block_ny;
  plan.spacing = config.spacing;
  plan.master_seed = substream_seed(config.master_seed, 0, 0);
  plan.workers = config.workers;
  SelectedNetwork s = train_and_select(plan);
  const auto save = config.network_save_path.empty() ? config.network_file : config.network_save_path;
  if (!save.empty()) {
    if (save.has_parent_path()) std::filesystem::create_directories(save.parent_path());
    write_network(s.net, save);
  }
  return s;
}

StudyResult run_mc_study(const StudyConfig& config) { return run_mc_study(config, prepare_network(config)); }

StudyResult run_mc_study(const StudyConfig& config, const SelectedNetwork& net) {
  const GridDomain domain = make_grid(config.nx, config.ny, config.spacing);
  const BlockPartition part = partition(domain, config.block_nx, config.block_ny);
  StudyResult result;
  result.config = config;
  result.candidates = net.candidates;
  result.selected = net.net.report;
  result.train_seconds = net.train_seconds;
  const auto draw_truth = truth_sampler(config, domain, result.simulation_label);

  for (std::size_t r = 0; r < config.mc_replicates; ++r) {
    ReplicateRecord rec;
    rec.index = r;
    try {
      Stream truth_stream(substream_seed(config.master_seed, 3, r));
      const Field field = draw_truth(truth_stream);
      const auto t0 = std::chrono::steady_clock::now();
      const BlockEstimates est = block_estimates(net.net, field, part, config.workers);
      rec.theta_m = mean_estimator(est);
      const BootstrapMatrix boot =
          parametric_bootstrap(config.model, rec.theta_m, part, net.net, config.bootstrap_replicates,
                               Stream(substream_seed(config.master_seed, 4, r)), config.workers);
      const WeightMatrix w = optimal_weight(center_replicates(boot), config.ridge);
      const CombinedEstimate c = combine(est, w, config.bootstrap_replicates);
      rec.theta_c = c.theta_c;
      rec.se = standard_errors(c);
      rec.ci = wald_ci(c, config.alpha);
      rec.ridge_applied = c.ridge_applied;
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rec.ok = true;
    } catch (const std::exception& e) {
      rec.error = e.what();
    }
    result.replicates.push_back(std::move(rec));
  }
  result.metrics = summarize(result.replicates, config.truth);
  const std::size_t failed = result.metrics.failures;
  if (static_cast<double>(failed) > 0.01 * static_cast<double>(config.mc_replicates)) {
    std::string first;
    for (const auto& r : result.replicates)
      if (!r.ok) {
        first = r.error;
        break;
      }
    throw NumericalError("study failed: " + std::to_string(failed) + " of " +
                         std::to_string(config.mc_replicates) + " replicates errored (first: " + first + ")");
  }
  return result;
}

void emit_report(const StudyResult& result, const std::filesystem::path& dir) {
  const MetricsTable& m = result.metrics;
  if (m.rows.empty() || m.replicates == 0) throw InvalidArgument("refusing to emit an empty metrics table");
  std::filesystem::create_directories(dir);
  const auto names = parameter_names(result.config.model);

  std::ostringstream metrics;
  metrics << "parameter,BIAS,RMSE,ESE,ASE,CP\n";
  for (const ParameterMetrics& r : m.rows)
    metrics << r.parameter << ',' << format_double(r.bias) << ',' << format_double(r.rmse) << ','
            << format_double(r.ese) << ',' << format_double(r.ase) << ',' << format_double(r.cp) << '\n';
  write_text_file(dir / "metrics.csv", metrics.str());

  std::ostringstream reps;
  reps << "replicate,status";
  for (const char* part : {"theta_m_", "theta_c_", "se_", "ci_lower_", "ci_upper_"})
    for (const auto& n : names) reps << ',' << part << n;
  reps << ",ridge_applied,error\n";
  std::ostringstream timing;
  timing << "replicate,seconds\n";
  for (const ReplicateRecord& r : result.replicates) {
    reps << r.index + 1 << ',' << (r.ok ? "ok" : "error");
    for (std::size_t i = 0; i < kParamDim; ++i) reps << ',' << format_double(r.theta_m[i]);
    for (std::size_t i = 0; i < kParamDim; ++i) reps << ',' << format_double(r.theta_c[i]);
    for (std::size_t i = 0; i < kParamDim; ++i) reps << ',' << format_double(r.se[i]);
    for (std::size_t i = 0; i < kParamDim; ++i) reps << ',' << format_double(r.ci[i].lower);
    for (std::size_t i = 0; i < kParamDim; ++i) reps << ',' << format_double(r.ci[i].upper);
    std::string err = r.error;
    for (char& ch : err)
      if (ch == ',' || ch == '\n' || ch == '"') ch = ' ';
    reps << ',' << (r.ridge_applied ? 1 : 0) << ',' << err << '\n';
    if (r.ok) timing << r.index + 1 << ',' << format_double(r.seconds) << '\n';
  }
  write_text_file(dir / "replicates.csv", reps.str());
  write_text_file(dir / "timing.csv", timing.str());

  const StudyConfig& c = result.config;
  const std::size_t k = (c.nx / c.block_nx) * (c.ny / c.block_ny);
  std::ostringstream table;
  table << c.name << ": " << to_string(c.model) << ", d = " << c.nx << "x" << c.ny << ", blocks "
        << c.block_nx << "x" << c.block_ny << " (K = " << k << "), B = " << c.bootstrap_replicates
        << ", R = " << c.mc_replicates << ", truth simulation " << result.simulation_label << "\n\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %10s %10s %10s %10s %7s\n", "parameter", "BIASx100", "RMSEx100",
                "ESEx100", "ASEx100", "CP");
  table << line;
  for (const ParameterMetrics& r : m.rows) {
    std::snprintf(line, sizeof line, "%-10s %10.3f %10.3f %10.3f %10.3f %7.1f\n", r.parameter.c_str(),
                  100 * r.bias, 100 * r.rmse, 100 * r.ese, 100 * r.ase, r.cp);
    table << line;
  }
  table << "\nmean elapsed time per replicate: " << fixed(m.time_mean, 3) << " s (sd " << fixed(m.time_sd, 3)
        << ")\nfailed replicates: " << m.failures << "\n";
  write_text_file(dir / "table.txt", table.str());

  nlohmann::ordered_json man;
  man["name"] = c.name;
  man["model"] = std::string(to_string(c.model));
  man["truth"] = c.truth.values;
  man["domain"] = {c.nx, c.ny};
  man["block"] = {c.block_nx, c.block_ny};
  man["B"] = c.bootstrap_replicates;
  man["R"] = c.mc_replicates;
  man["alpha"] = c.alpha;
  man["master_seed"] = c.master_seed;
  man["truth_simulation"] = result.simulation_label;
  man["replicate_seeds"] = "truth field r: substream(master, 3, r); bootstrap r: substream(master, 4, r)";
  nlohmann::ordered_json cand = nlohmann::ordered_json::array();
  for (const TrainingReport& t : result.candidates)
    cand.push_back({{"seed", t.seed}, {"best_val_loss", t.best_val_loss}, {"epochs", t.epochs_run}});
  man["network"] = {{"selected_seed", result.selected.seed},
                    {"best_val_loss", result.selected.best_val_loss},
                    {"train_seconds", result.train_seconds},
                    {"candidates", cand}};
  man["files"] = nlohmann::ordered_json::parse(
      manifest_files_json(dir, {"metrics.csv", "replicates.csv", "timing.csv", "table.txt"}));
  write_text_file(dir / "manifest.json", man.dump(2) + "\n");
}

}  // namespace dac
