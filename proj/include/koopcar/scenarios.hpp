#pragma once

#include <optional>
#include <string>

#include "koopcar/config.hpp"
#include "koopcar/dataset.hpp"
#include "koopcar/koopman.hpp"
#include "koopcar/mpc.hpp"

namespace koopcar {

MpcConfig make_mpc_config(const AppConfig& cfg);
QpSettings make_qp_settings(const AppConfig& cfg);

/// Closed-loop experiment definition: start state, reference generator,
/// duration and which controllers to run.
struct ScenarioSpec {
  enum class ControllerKind { koopman, linear, both };

  std::string name;
  VehicleState x0;
  RefFn reference;
  double t_sim = 10.0;
  ControllerKind kind = ControllerKind::both;
  bool zero_vy_weight = false;  // drop the vy row of Qy (un-referenced output)
};

ScenarioSpec drift_scenario(const AppConfig& cfg);
ScenarioSpec spiral_scenario(const AppConfig& cfg);

/// Full identification pass: eigenvalues, g fit, lift table, B fit.
/// Both datasets must share the sampling time.
KoopmanModel identify(const AppConfig& cfg, const Dataset& uncontrolled,
                      const Dataset& controlled, BFitDiagnostics* diag = nullptr);

struct EvalStats {
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
  int count = 0;
};

/// Held-out prediction quality on fresh starts drawn inside the sampled
/// energy surface, filtered by the low-speed rejection rule. Truth rollouts
/// truncated by the guard are scored on their valid prefix; starts unable
/// to take a single step are redrawn.
EvalStats evaluate_uncontrolled(const KoopmanModel& model, const AppConfig& cfg);
EvalStats evaluate_controlled(const KoopmanModel& model, const AppConfig& cfg);

struct ControllerOutcome {
  bool ran = false;
  std::string error;  // set when the controller aborted
  ClosedLoopLog log;
};

struct ScenarioRun {
  ScenarioSpec spec;
  std::optional<ControllerOutcome> koopman;
  std::optional<ControllerOutcome> linear;
};

/// Runs the scenario with the requested controllers. A failure in one
/// controller is recorded and the other still runs. When out_dir is
/// non-empty, writes <name>_koopman.csv / <name>_linear.csv there.
ScenarioRun run_scenario(const ScenarioSpec& spec, const KoopmanModel& model,
                         const AppConfig& cfg, const std::string& out_dir = "");

// Log metrics (negative when the condition is never met).
double first_time_abs_below(const ClosedLoopLog& log, int state_index, double threshold);
double first_time_within(const ClosedLoopLog& log, int state_index, double target,
                         double tol);
/// RMS tracking error of one state against the logged reference.
double tracking_rmse(const ClosedLoopLog& log, int state_index);

void write_identify_report(const std::string& path, const KoopmanModel& model,
                           const BFitDiagnostics& diag, const EvalStats& uncontrolled,
                           const EvalStats& controlled);
void write_drift_metrics(const std::string& path, const ScenarioRun& run,
                         const AppConfig& cfg);
void write_spiral_metrics(const std::string& path, const ScenarioRun& run,
                          const AppConfig& cfg);

}  // namespace koopcar
