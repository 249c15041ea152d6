#pragma once

#include "spnav/selection.hpp"
#include "spnav/simulator.hpp"
#include "spnav/solver.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace spnav {

enum class Strategy : int {
  PIns = 0,      // point features only
  PlIns,         // points + lines
  PlpIns,        // points + lines + planes
  SpinsRand,     // all features + k random structure priors
  SpinsApprox,   // all features + k greedily selected structure priors
  SpinsOpt,      // all features + exhaustively selected priors (small n only)
  SpinsAll,      // all features + every associated structure prior
};

struct StrategySpec {
  Strategy kind = Strategy::PlpIns;
  int budget = 20;  // used by the budgeted SPINS variants

  std::string label() const;
  bool uses_lines() const { return kind != Strategy::PIns; }
  bool uses_planes() const { return kind != Strategy::PIns && kind != Strategy::PlIns; }
  bool uses_priors() const {
    return kind == Strategy::SpinsRand || kind == Strategy::SpinsApprox ||
           kind == Strategy::SpinsOpt || kind == Strategy::SpinsAll;
  }
};

std::optional<Strategy> strategy_from_token(const std::string& token);
std::string strategy_token(Strategy s);

struct AnchorSigmas {
  double rotation = 1e-4;  // rad
  double position = 1e-4;  // m
  double velocity = 1e-3;  // m/s
  double bias = 1e-2;
};

struct ScenarioConfig {
  std::string name = "default";
  WorldSpec world;
  std::vector<Vec3> waypoints;
  double duration = 60.0;
  OrientationProfile orientation;
  ImuSimSpec imu;
  double measurement_rate_hz = 10.0;
  FovSpec fov;
  MeasurementNoiseSpec meas_noise;
  ExtractOptions prior_opts;
  int confidence_min_obs = 3;
  SolverConfig solver;
  AnchorSigmas anchor;
  std::uint64_t noise_seed_base = 1000;
  int default_runs = 20;

  // Factor weighting floors keep covariances invertible in zero-noise runs.
  double sigma_point_factor() const { return std::max(meas_noise.sigma_point, 1e-6); }
  double sigma_line_factor() const { return std::max(meas_noise.sigma_line, 1e-6); }
  double sigma_plane_factor() const { return std::max(meas_noise.sigma_plane, 1e-6); }

  std::string to_json() const;
  static ScenarioConfig from_json(const std::string& text);
  static ScenarioConfig load(const std::string& path);
  void save(const std::string& path) const;

  // The committed default: desk-scale room, elliptic loop trajectory.
  static ScenarioConfig builtin_default();
};

// --- Sliding-window estimator pipeline -----------------------------------------

struct PipelineStats {
  long total_iterations = 0;
  double optimize_seconds = 0.0;
  double selection_seconds = 0.0;
  int windows = 0;
  int diverged_windows = 0;
  int skipped_factors = 0;
  std::array<double, kNumFactorFamilies> factor_count_sums{};
  double sp_component_sum = 0.0;
  int max_sp_components = 0;
};

class WindowPipeline {
 public:
  WindowPipeline(const ScenarioConfig& scenario, const StrategySpec& strategy,
                 const StructurePriorDB* db, std::uint64_t run_seed);

  // First frame: seeds the window with the initial state and its anchor prior.
  void start(const MeasurementFrame& frame, const ImuState& init);
  // Subsequent frames with the IMU samples covering the preceding interval.
  void process_frame(const MeasurementFrame& frame, const std::vector<ImuSample>& imu_segment);
  // Flushes remaining window states into the estimate trajectory.
  void finish();

  const std::vector<TimedPose>& estimate() const { return estimate_; }
  const PipelineStats& stats() const { return stats_; }
  const FactorGraph& graph() const { return graph_; }

 private:
  void add_frame_measurements(const MeasurementFrame& frame, int frame_id);
  void refresh_structure_priors(int frame_index);
  void record_and_slide();

  ScenarioConfig scenario_;
  StrategySpec strategy_;
  const StructurePriorDB* db_;
  std::uint64_t run_seed_;

  FactorGraph graph_;
  int next_frame_id_ = 0;
  std::map<int, double> frame_times_;
  std::map<VarKey, int> obs_counts_;
  std::vector<TimedPose> estimate_;
  PipelineStats stats_;
};

// --- Experiment runner ------------------------------------------------------------

struct RunResult {
  std::string strategy;
  int budget = 0;
  std::uint64_t seed = 0;
  double trans_rmse_m = 0.0;
  double rot_rmse_deg = 0.0;
  int n_windows = 0;
  long total_iterations = 0;
  int diverged_windows = 0;
  std::array<double, kNumFactorFamilies> mean_factor_counts{};
  double mean_sp_components = 0.0;
  int max_sp_components = 0;
  // Wall-clock values live outside the reproducible CSVs.
  double time_per_iteration_s = 0.0;
  double selection_time_per_window_s = 0.0;
};

struct AggregateRow {
  std::string strategy;
  int budget = 0;
  int runs = 0;
  double mean_trans_rmse_m = 0.0;
  double std_trans_rmse_m = 0.0;
  double mean_rot_rmse_deg = 0.0;
  double std_rot_rmse_deg = 0.0;
  double mean_time_per_iteration_s = 0.0;
};

struct ExperimentReport {
  ScenarioConfig scenario;
  std::vector<RunResult> runs;  // sorted by (strategy, budget, seed)

  std::vector<AggregateRow> aggregate() const;
};

// Executes n_runs Monte-Carlo runs per strategy over a shared world with
// per-run noise seeds, in parallel across workers. Writes results.csv,
// aggregate.csv, metadata.json, timings.json, prior_db.jsonl and
// trajectory_gt.csv into out_dir (when non-empty).
ExperimentReport run_experiment(const ScenarioConfig& scenario,
                                const std::vector<StrategySpec>& strategies, int n_runs,
                                const std::string& out_dir, int workers = 0);

// Single run, exposed for tests.
RunResult run_single(const ScenarioConfig& scenario, const World& world,
                     const StrategySpec& strategy, std::uint64_t run_index);

// Human-readable strategy table plus machine CSV content.
std::string format_table(const ExperimentReport& report);
std::string results_csv(const ExperimentReport& report);
std::string aggregate_csv(const ExperimentReport& report);

// RMSE and timing as the structure-prior budget grows.
struct SweepPoint {
  int budget = -1;  // -1 encodes "all"
  double mean_trans_rmse_m = 0.0;
  double mean_time_per_iteration_s = 0.0;
  double mean_sp_components = 0.0;
};
std::vector<SweepPoint> run_sweep(const ScenarioConfig& scenario, const std::vector<int>& budgets,
                                  int n_runs, const std::string& out_dir, int workers = 0);

}  // namespace spnav
