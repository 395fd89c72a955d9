// Command-line front end wiring the pipeline end to end:
//   generate  -> datasets        identify -> model + report
//   evaluate  -> prediction RMSE report
//   drift / spiral / compare -> closed-loop logs + metrics

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>

#include "koopcar/csvio.hpp"
#include "koopcar/dataset.hpp"
#include "koopcar/scenarios.hpp"

namespace fs = std::filesystem;
using namespace koopcar;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::string scale = "desk";
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "flat key = value config file");
  cmd->add_option("--out-dir", o.out_dir, "output directory");
  cmd->add_option("--scale", o.scale, "preset: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--seed", o.seed, "master seed (overrides the config value)")
      ->each([&o](const std::string&) { o.seed_set = true; });
}

AppConfig resolve_config(const CommonOpts& o) {
  AppConfig cfg;
  cfg.apply_scale(o.scale == "paper" ? Scale::paper : Scale::desk);
  if (!o.config_path.empty()) cfg.apply_store(ConfigStore::from_file(o.config_path));
  if (o.seed_set) cfg.seed = o.seed;
  return cfg;
}

std::string out_path(const CommonOpts& o, const std::string& name) {
  fs::create_directories(o.out_dir);
  return (fs::path(o.out_dir) / name).string();
}

int cmd_generate(const CommonOpts& o) {
  const AppConfig cfg = resolve_config(o);
  const VehicleParams params = cfg.vehicle_params();

  const GammaSet gamma = sample_gamma(cfg.gamma_energy, params, cfg.gamma_n_base,
                                      cfg.gamma_densify_factor, cfg.seed, cfg.gamma_n_total);

  Dataset unc = generate_uncontrolled(gamma, params, cfg.sim_ts, cfg.data_t_uncontrolled);
  unc.config_snapshot = cfg.canonical_text();
  Dataset ctl = generate_controlled(gamma, params, cfg.sim_ts, cfg.data_t_controlled,
                                    cfg.seed, cfg.data_kappa_r_max,
                                    cfg.data_delta_f_max_deg * M_PI / 180.0);
  ctl.config_snapshot = cfg.canonical_text();

  const std::string unc_bin = out_path(o, "uncontrolled.kcds");
  const std::string ctl_bin = out_path(o, "controlled.kcds");
  const std::string unc_csv = out_path(o, "uncontrolled.csv");
  const std::string ctl_csv = out_path(o, "controlled.csv");
  save_dataset(unc, unc_bin);
  save_dataset(ctl, ctl_bin);
  export_dataset_csv(unc, unc_csv);
  export_dataset_csv(ctl, ctl_csv);

  Manifest man;
  if (!o.config_path.empty()) man.add_input(o.config_path);
  man.add_seed("master", cfg.seed);
  for (const auto& p : {unc_bin, ctl_bin, unc_csv, ctl_csv}) man.add_output(p);
  man.write(out_path(o, "generate_manifest.txt"));

  std::cout << "generated " << unc.trajectories.size() << " uncontrolled and "
            << ctl.trajectories.size() << " controlled trajectories\n";
  return 0;
}

int cmd_identify(const CommonOpts& o, const std::string& unc_path_opt,
                 const std::string& ctl_path_opt) {
  const AppConfig cfg = resolve_config(o);
  const std::string unc_path =
      unc_path_opt.empty() ? out_path(o, "uncontrolled.kcds") : unc_path_opt;
  const std::string ctl_path =
      ctl_path_opt.empty() ? out_path(o, "controlled.kcds") : ctl_path_opt;

  const Dataset unc = load_dataset(unc_path);
  const Dataset ctl = load_dataset(ctl_path);

  BFitDiagnostics diag;
  const KoopmanModel model = identify(cfg, unc, ctl, &diag);

  const std::string model_path = out_path(o, "model.kckm");
  save_model(model, model_path);

  const EvalStats ustats = evaluate_uncontrolled(model, cfg);
  const EvalStats cstats = evaluate_controlled(model, cfg);
  const std::string report_path = out_path(o, "identify_report.txt");
  write_identify_report(report_path, model, diag, ustats, cstats);

  Manifest man;
  man.add_input(unc_path);
  man.add_input(ctl_path);
  if (!o.config_path.empty()) man.add_input(o.config_path);
  man.add_seed("master", cfg.seed);
  man.add_output(model_path);
  man.add_output(report_path);
  man.write(out_path(o, "identify_manifest.txt"));

  std::cout << "identified model: dim " << model.dim() << ", table "
            << model.table.size() << " points; held-out rmse mean "
            << ustats.mean << "% (uncontrolled), " << cstats.mean
            << "% (controlled)\n";
  return 0;
}

int cmd_evaluate(const CommonOpts& o, const std::string& model_path_opt) {
  const AppConfig cfg = resolve_config(o);
  const std::string model_path =
      model_path_opt.empty() ? out_path(o, "model.kckm") : model_path_opt;
  const KoopmanModel model = load_model(model_path);

  const EvalStats ustats = evaluate_uncontrolled(model, cfg);
  const EvalStats cstats = evaluate_controlled(model, cfg);

  const std::string report_path = out_path(o, "evaluate_report.txt");
  std::ofstream out(report_path);
  auto print = [&](const char* name, const EvalStats& st) {
    out << name << " rmse_percent: mean " << CsvWriter::format(st.mean) << " std "
        << CsvWriter::format(st.stddev) << " min " << CsvWriter::format(st.min) << " max "
        << CsvWriter::format(st.max) << " count " << st.count << "\n";
    std::cout << name << " mean rmse " << st.mean << "%\n";
  };
  print("uncontrolled", ustats);
  print("controlled", cstats);
  out.close();

  Manifest man;
  man.add_input(model_path);
  man.add_seed("master", cfg.seed);
  man.add_output(report_path);
  man.write(out_path(o, "evaluate_manifest.txt"));
  return 0;
}

int run_scenario_cmd(const CommonOpts& o, const std::string& model_path_opt, bool drift) {
  const AppConfig cfg = resolve_config(o);
  const std::string model_path =
      model_path_opt.empty() ? out_path(o, "model.kckm") : model_path_opt;
  const KoopmanModel model = load_model(model_path);
  fs::create_directories(o.out_dir);

  const ScenarioSpec spec = drift ? drift_scenario(cfg) : spiral_scenario(cfg);
  const ScenarioRun run = run_scenario(spec, model, cfg, o.out_dir);

  const std::string metrics_path = out_path(o, spec.name + "_metrics.txt");
  if (drift) {
    write_drift_metrics(metrics_path, run, cfg);
  } else {
    write_spiral_metrics(metrics_path, run, cfg);
  }

  Manifest man;
  man.add_input(model_path);
  man.add_seed("master", cfg.seed);
  for (const auto* outcome : {&run.koopman, &run.linear}) {
    if (outcome->has_value() && (*outcome)->ran) {
      const std::string which = outcome == &run.koopman ? "koopman" : "linear";
      man.add_output(out_path(o, spec.name + "_" + which + ".csv"));
    }
  }
  man.add_output(metrics_path);
  man.write(out_path(o, spec.name + "_manifest.txt"));

  for (const auto* outcome : {&run.koopman, &run.linear}) {
    if (outcome->has_value() && !(*outcome)->ran) {
      std::cout << "controller failed: " << (*outcome)->error << "\n";
    }
  }
  std::cout << spec.name << " metrics written to " << metrics_path << "\n";
  return 0;
}

int cmd_compare(const CommonOpts& o, const std::string& model_path_opt) {
  const int rc1 = run_scenario_cmd(o, model_path_opt, true);
  const int rc2 = run_scenario_cmd(o, model_path_opt, false);

  std::ofstream out(out_path(o, "compare_summary.txt"));
  out << "scenario comparison: see drift_metrics.txt and spiral_metrics.txt\n";
  for (const char* f : {"drift_metrics.txt", "spiral_metrics.txt"}) {
    std::ifstream in(out_path(o, f));
    out << "---- " << f << "\n" << in.rdbuf() << "\n";
  }
  return rc1 != 0 ? rc1 : rc2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"data-driven lifted-space MPC pipeline for a single-track vehicle"};
  app.require_subcommand(1);

  CommonOpts gen_o, id_o, ev_o, dr_o, sp_o, cp_o;
  std::string id_unc, id_ctl, ev_model, dr_model, sp_model, cp_model;

  CLI::App* gen = app.add_subcommand("generate", "sample starts and roll out datasets");
  add_common(gen, gen_o);

  CLI::App* ident = app.add_subcommand("identify", "fit the lifted linear model");
  add_common(ident, id_o);
  ident->add_option("--uncontrolled", id_unc, "uncontrolled dataset path");
  ident->add_option("--controlled", id_ctl, "controlled dataset path");

  CLI::App* ev = app.add_subcommand("evaluate", "held-out prediction error");
  add_common(ev, ev_o);
  ev->add_option("--model", ev_model, "model file path");

  CLI::App* dr = app.add_subcommand("drift", "sideways-drift recovery experiment");
  add_common(dr, dr_o);
  dr->add_option("--model", dr_model, "model file path");

  CLI::App* sp = app.add_subcommand("spiral", "tightening-spiral tracking experiment");
  add_common(sp, sp_o);
  sp->add_option("--model", sp_model, "model file path");

  CLI::App* cp = app.add_subcommand("compare", "run both experiments");
  add_common(cp, cp_o);
  cp->add_option("--model", cp_model, "model file path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(gen_o);
    if (ident->parsed()) return cmd_identify(id_o, id_unc, id_ctl);
    if (ev->parsed()) return cmd_evaluate(ev_o, ev_model);
    if (dr->parsed()) return run_scenario_cmd(dr_o, dr_model, true);
    if (sp->parsed()) return run_scenario_cmd(sp_o, sp_model, false);
    if (cp->parsed()) return cmd_compare(cp_o, cp_model);
  } catch (const std::exception& e) {
    nlohmann::json err;
    err["error"] = e.what();
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
