#include "spnav/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

namespace spnav {

using nlohmann::json;
namespace fs = std::filesystem;

// --- Strategy ---------------------------------------------------------------------

std::string strategy_token(Strategy s) {
  switch (s) {
    case Strategy::PIns: return "p-ins";
    case Strategy::PlIns: return "pl-ins";
    case Strategy::PlpIns: return "plp-ins";
    case Strategy::SpinsRand: return "spins-rand";
    case Strategy::SpinsApprox: return "spins-approx";
    case Strategy::SpinsOpt: return "spins-opt";
    case Strategy::SpinsAll: return "spins-all";
  }
  return "?";
}

std::optional<Strategy> strategy_from_token(const std::string& token) {
  for (Strategy s : {Strategy::PIns, Strategy::PlIns, Strategy::PlpIns, Strategy::SpinsRand,
                     Strategy::SpinsApprox, Strategy::SpinsOpt, Strategy::SpinsAll}) {
    if (token == strategy_token(s)) return s;
  }
  return std::nullopt;
}

std::string StrategySpec::label() const {
  std::string out = strategy_token(kind);
  if (kind == Strategy::SpinsRand || kind == Strategy::SpinsApprox || kind == Strategy::SpinsOpt) {
    out += "-" + std::to_string(budget);
  }
  return out;
}

// --- Scenario JSON -----------------------------------------------------------------

namespace {

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 vec3_from_json(const json& j) { return Vec3(j.at(0), j.at(1), j.at(2)); }

}  // namespace

std::string ScenarioConfig::to_json() const {
  json j;
  j["name"] = name;
  j["world"] = {{"n_points", world.n_points},
                {"n_lines", world.n_lines},
                {"n_planes", world.n_planes},
                {"room_min", vec3_to_json(world.room_min)},
                {"room_max", vec3_to_json(world.room_max)},
                {"grid", world.grid},
                {"clearance", world.clearance},
                {"frac_points_on_structure", world.frac_points_on_structure},
                {"seed", world.seed}};
  json wps = json::array();
  for (const auto& w : waypoints) wps.push_back(vec3_to_json(w));
  j["trajectory"] = {{"waypoints", wps},
                     {"duration", duration},
                     {"roll_amplitude", orientation.roll_amplitude},
                     {"roll_freq", orientation.roll_freq},
                     {"pitch_amplitude", orientation.pitch_amplitude},
                     {"pitch_freq", orientation.pitch_freq}};
  j["imu"] = {{"rate_hz", imu.rate_hz},
              {"gyro_noise_density", imu.noise.gyro_noise_density},
              {"accel_noise_density", imu.noise.accel_noise_density},
              {"gyro_walk_density", imu.noise.gyro_walk_density},
              {"accel_walk_density", imu.noise.accel_walk_density},
              {"gravity", vec3_to_json(imu.gravity)}};
  j["measurements"] = {{"rate_hz", measurement_rate_hz},
                       {"range", fov.range},
                       {"half_angle_deg", fov.half_angle_deg},
                       {"sigma_point", meas_noise.sigma_point},
                       {"sigma_line", meas_noise.sigma_line},
                       {"sigma_plane", meas_noise.sigma_plane}};
  j["priors"] = {{"tau_dist", prior_opts.tau_dist},
                 {"tau_cos", prior_opts.tau_cos},
                 {"sigma_floor", prior_opts.sigma_floor},
                 {"max_cluster_span", prior_opts.max_cluster_span},
                 {"min_support", prior_opts.min_support},
                 {"enable_point_point", prior_opts.enabled[0]},
                 {"confidence_min_obs", confidence_min_obs}};
  j["estimator"] = {{"window_length", solver.window_length},
                    {"huber_delta", solver.huber_delta},
                    {"max_iterations", solver.max_iterations},
                    {"lambda0", solver.lambda0},
                    {"anchor_sigma_rot", anchor.rotation},
                    {"anchor_sigma_pos", anchor.position},
                    {"anchor_sigma_vel", anchor.velocity},
                    {"anchor_sigma_bias", anchor.bias}};
  j["seeds"] = {{"noise_seed_base", noise_seed_base}};
  j["runs"] = default_runs;
  return j.dump(2);
}

ScenarioConfig ScenarioConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  ScenarioConfig c;
  c.name = j.value("name", "scenario");
  const auto& w = j.at("world");
  c.world.n_points = w.at("n_points");
  c.world.n_lines = w.at("n_lines");
  c.world.n_planes = w.at("n_planes");
  c.world.room_min = vec3_from_json(w.at("room_min"));
  c.world.room_max = vec3_from_json(w.at("room_max"));
  c.world.grid = w.value("grid", 0.5);
  c.world.clearance = w.value("clearance", 0.25);
  c.world.frac_points_on_structure = w.value("frac_points_on_structure", 0.5);
  c.world.seed = w.value("seed", 1);
  const auto& t = j.at("trajectory");
  for (const auto& wp : t.at("waypoints")) c.waypoints.push_back(vec3_from_json(wp));
  c.duration = t.at("duration");
  c.orientation.roll_amplitude = t.value("roll_amplitude", 0.0);
  c.orientation.roll_freq = t.value("roll_freq", 0.1);
  c.orientation.pitch_amplitude = t.value("pitch_amplitude", 0.0);
  c.orientation.pitch_freq = t.value("pitch_freq", 0.13);
  const auto& i = j.at("imu");
  c.imu.rate_hz = i.at("rate_hz");
  c.imu.noise.gyro_noise_density = i.at("gyro_noise_density");
  c.imu.noise.accel_noise_density = i.at("accel_noise_density");
  c.imu.noise.gyro_walk_density = i.at("gyro_walk_density");
  c.imu.noise.accel_walk_density = i.at("accel_walk_density");
  c.imu.gravity = vec3_from_json(i.at("gravity"));
  const auto& m = j.at("measurements");
  c.measurement_rate_hz = m.at("rate_hz");
  c.fov.range = m.at("range");
  c.fov.half_angle_deg = m.at("half_angle_deg");
  c.meas_noise.sigma_point = m.at("sigma_point");
  c.meas_noise.sigma_line = m.at("sigma_line");
  c.meas_noise.sigma_plane = m.at("sigma_plane");
  const auto& p = j.at("priors");
  c.prior_opts.tau_dist = p.at("tau_dist");
  c.prior_opts.tau_cos = p.at("tau_cos");
  c.prior_opts.sigma_floor = p.at("sigma_floor");
  c.prior_opts.max_cluster_span = p.value("max_cluster_span", 1e-9);
  c.prior_opts.min_support = p.value("min_support", 1);
  c.prior_opts.enabled[0] = p.value("enable_point_point", false);
  c.confidence_min_obs = p.value("confidence_min_obs", 3);
  const auto& e = j.at("estimator");
  c.solver.window_length = e.at("window_length");
  c.solver.huber_delta = e.value("huber_delta", 1.345);
  c.solver.max_iterations = e.value("max_iterations", 8);
  c.solver.lambda0 = e.value("lambda0", 1e-4);
  c.anchor.rotation = e.value("anchor_sigma_rot", 1e-4);
  c.anchor.position = e.value("anchor_sigma_pos", 1e-4);
  c.anchor.velocity = e.value("anchor_sigma_vel", 1e-3);
  c.anchor.bias = e.value("anchor_sigma_bias", 1e-2);
  c.noise_seed_base = j.at("seeds").value("noise_seed_base", 1000);
  c.default_runs = j.value("runs", 20);
  return c;
}

ScenarioConfig ScenarioConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ScenarioConfig::load: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void ScenarioConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("ScenarioConfig::save: cannot open " + path);
  out << to_json() << "\n";
}

ScenarioConfig ScenarioConfig::builtin_default() {
  ScenarioConfig c;
  c.name = "default";
  c.world = WorldSpec{};
  c.duration = 60.0;
  // Elliptic loop with mild vertical motion, 1.5 revolutions.
  const int n_wp = 28;
  for (int i = 0; i < n_wp; ++i) {
    const double s = static_cast<double>(i) / (n_wp - 1);
    const double ang = 2.0 * M_PI * 1.5 * s;
    c.waypoints.push_back(
        Vec3(3.4 * std::cos(ang), 2.6 * std::sin(ang), 0.35 * std::sin(2.0 * M_PI * s)));
  }
  c.orientation.roll_amplitude = 0.04;
  c.orientation.pitch_amplitude = 0.05;
  c.prior_opts.enabled[0] = false;  // structurally salient points are hard to tell apart
  return c;
}

// --- Pipeline -----------------------------------------------------------------------

WindowPipeline::WindowPipeline(const ScenarioConfig& scenario, const StrategySpec& strategy,
                               const StructurePriorDB* db, std::uint64_t run_seed)
    : scenario_(scenario), strategy_(strategy), db_(db), run_seed_(run_seed) {
  if (strategy_.uses_priors() && db_ == nullptr) {
    throw std::invalid_argument("WindowPipeline: SPINS strategy requires a prior database");
  }
}

void WindowPipeline::start(const MeasurementFrame& frame, const ImuState& init) {
  const int frame_id = next_frame_id_++;
  graph_.state.imu_states().insert(frame_id, init);
  frame_times_[frame_id] = frame.t;

  MatX info = MatX::Zero(15, 15);
  auto block_sigma = [&](int off, double sigma) {
    info.block<3, 3>(off, off) = Mat3::Identity() / (sigma * sigma);
  };
  block_sigma(0, scenario_.anchor.rotation);
  block_sigma(3, scenario_.anchor.position);
  block_sigma(6, scenario_.anchor.velocity);
  block_sigma(9, scenario_.anchor.bias);
  block_sigma(12, scenario_.anchor.bias);
  graph_.factors.push_back(std::make_shared<PriorFactor>(
      std::vector<VarKey>{{VarKind::ImuState, frame_id}}, std::vector<VarValue>{init}, info));

  add_frame_measurements(frame, frame_id);
  refresh_structure_priors(frame_id);

  OptimizeReport rep;
  const auto t0 = std::chrono::steady_clock::now();
  graph_.state = optimize(graph_.factors, graph_.state, scenario_.solver, &rep);
  stats_.optimize_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  stats_.total_iterations += rep.iterations;
  stats_.diverged_windows += rep.diverged ? 1 : 0;
  stats_.skipped_factors += rep.skipped_factors;
  const auto counts = graph_.count_by_family();
  for (int i = 0; i < kNumFactorFamilies; ++i) stats_.factor_count_sums[i] += counts[i];
  stats_.windows++;
}

void WindowPipeline::add_frame_measurements(const MeasurementFrame& frame, int frame_id) {
  const VarKey pose_key{VarKind::ImuState, frame_id};
  const ImuState& est = graph_.state.imu_states().at(frame_id);
  const Mat3 R = est.pose.rotation();

  for (const auto& obs : frame.points) {
    const VarKey key{VarKind::Point, obs.id};
    if (!graph_.state.contains(key)) {
      graph_.state.points().insert(obs.id, Vec3(R.transpose() * obs.z + est.pose.p));
    }
    PointMeasurement m;
    m.z = obs.z;
    m.sigma = Mat3::Identity() * std::pow(scenario_.sigma_point_factor(), 2);
    graph_.factors.push_back(std::make_shared<PointFactor>(pose_key, key, m));
    obs_counts_[key]++;
  }

  if (strategy_.uses_lines()) {
    for (const auto& obs : frame.lines) {
      const VarKey key{VarKind::Line, obs.id};
      if (!graph_.state.contains(key)) {
        PlueckerLine local;
        local.n = obs.z.head<3>();
        local.v = obs.z.tail<3>();
        const PlueckerLine global = transform_line(est.pose.inverse(), local);
        try {
          graph_.state.lines().insert(obs.id, pluecker_to_cp(global));
        } catch (const DegenerateLine&) {
          stats_.skipped_factors++;
          continue;
        }
      }
      LineMeasurement m;
      m.z = obs.z;
      m.sigma = Mat6::Identity() * std::pow(scenario_.sigma_line_factor(), 2);
      graph_.factors.push_back(std::make_shared<LineFactor>(pose_key, key, m));
      obs_counts_[key]++;
    }
  }

  if (strategy_.uses_planes()) {
    for (const auto& obs : frame.planes) {
      const VarKey key{VarKind::Plane, obs.id};
      if (!graph_.state.contains(key)) {
        const double d_b = obs.z.norm();
        const Vec3 n_b = obs.z / d_b;
        const Vec3 n_g = R.transpose() * n_b;
        const double d_g = d_b + est.pose.p.dot(n_g);
        if (d_g < kEpsPlane) {
          stats_.skipped_factors++;
          continue;
        }
        graph_.state.planes().insert(obs.id, PlaneCP::FromNormalDistance(n_g, d_g));
      }
      PlaneMeasurement m;
      m.z = obs.z;
      m.sigma = Mat3::Identity() * std::pow(scenario_.sigma_plane_factor(), 2);
      graph_.factors.push_back(std::make_shared<PlaneFactor>(pose_key, key, m));
      obs_counts_[key]++;
    }
  }
}

void WindowPipeline::refresh_structure_priors(int frame_index) {
  if (!strategy_.uses_priors()) return;
  const auto t0 = std::chrono::steady_clock::now();

  std::erase_if(graph_.factors, [](const std::shared_ptr<Factor>& f) {
    return f->family() == FactorFamily::StructurePrior;
  });

  FeatureEstimates estimates;
  for (const auto& [id, v] : graph_.state.points().items()) estimates.points.emplace_back(id, v);
  for (const auto& [id, v] : graph_.state.lines().items()) estimates.lines.emplace_back(id, v);
  for (const auto& [id, v] : graph_.state.planes().items()) estimates.planes.emplace_back(id, v);

  std::map<VarKey, double> confidences;
  for (const auto& [key, count] : obs_counts_) confidences[key] = static_cast<double>(count);

  const auto candidates =
      associate(estimates, confidences, static_cast<double>(scenario_.confidence_min_obs), *db_,
                scenario_.prior_opts);

  std::vector<int> chosen;
  if (strategy_.kind == Strategy::SpinsAll) {
    chosen.resize(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) chosen[i] = static_cast<int>(i);
  } else if (strategy_.kind == Strategy::SpinsRand) {
    std::vector<int> all(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) all[i] = static_cast<int>(i);
    std::mt19937_64 rng(run_seed_ * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(frame_index));
    std::sample(all.begin(), all.end(), std::back_inserter(chosen),
                static_cast<std::size_t>(std::max(strategy_.budget, 0)), rng);
  } else {
    // Information-gain selection over the window pose marginal.
    std::vector<CandidateInfo> fims;
    std::vector<int> fim_to_candidate;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      auto fim = candidate_fim(candidates[i], graph_.state, static_cast<int>(i));
      if (fim) {
        fims.push_back(std::move(*fim));
        fim_to_candidate.push_back(static_cast<int>(i));
      }
    }
    if (!fims.empty() && strategy_.budget > 0) {
      NormalEquations ne =
          build_normal_equations(graph_.factors, graph_.state, scenario_.solver.huber_delta);
      ne.H.diagonal().array() += 1e-12;
      const int pose_dim = graph_.state.imu_tangent_dim();
      SelectionResult sel;
      if (strategy_.kind == Strategy::SpinsOpt) {
        if (fims.size() > 15) {
          throw std::runtime_error(
              "spins-opt refused: " + std::to_string(fims.size()) +
              " candidates in one window exceed the exhaustive-search limit of 15");
        }
        sel = exhaustive_select(fims, ne.H, pose_dim, strategy_.budget);
      } else {
        sel = greedy_select(fims, ne.H, pose_dim, strategy_.budget);
      }
      chosen = sel.chosen;
    }
  }

  // Stack the selected scalar priors pairwise; a pair carrying both an angle
  // and a distance prior becomes one two-component factor.
  std::map<std::pair<VarKey, VarKey>, std::vector<StructurePriorFactor::Component>> grouped;
  int n_components = 0;
  for (int idx : chosen) {
    const auto& c = candidates[static_cast<std::size_t>(idx)];
    grouped[{c.a, c.b}].push_back({c.kind, c.prior.value, c.prior.sigma});
    n_components++;
  }
  for (auto& [pair, components] : grouped) {
    std::sort(components.begin(), components.end(),
              [](const auto& x, const auto& y) { return static_cast<int>(x.kind) < static_cast<int>(y.kind); });
    graph_.factors.push_back(
        std::make_shared<StructurePriorFactor>(pair.first, pair.second, components));
  }
  stats_.sp_component_sum += n_components;
  stats_.max_sp_components = std::max(stats_.max_sp_components, n_components);
  stats_.selection_seconds +=
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void WindowPipeline::process_frame(const MeasurementFrame& frame,
                                   const std::vector<ImuSample>& imu_segment) {
  const int prev_id = next_frame_id_ - 1;
  const int frame_id = next_frame_id_++;
  const ImuState& prev = graph_.state.imu_states().at(prev_id);

  const PreintegratedImu pre =
      imu_preintegrate(imu_segment, prev.bg, prev.ba, scenario_.imu.noise);
  const ImuState predicted = imu_predict(prev, pre, scenario_.imu.gravity);

  graph_.state.imu_states().insert(frame_id, predicted);
  frame_times_[frame_id] = frame.t;
  graph_.factors.push_back(std::make_shared<ImuFactor>(VarKey{VarKind::ImuState, prev_id},
                                                       VarKey{VarKind::ImuState, frame_id}, pre,
                                                       scenario_.imu.gravity));

  add_frame_measurements(frame, frame_id);
  refresh_structure_priors(frame_id);

  OptimizeReport rep;
  const auto t0 = std::chrono::steady_clock::now();
  graph_.state = optimize(graph_.factors, graph_.state, scenario_.solver, &rep);
  stats_.optimize_seconds +=
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  stats_.total_iterations += rep.iterations;
  stats_.diverged_windows += rep.diverged ? 1 : 0;
  stats_.skipped_factors += rep.skipped_factors;

  const auto counts = graph_.count_by_family();
  for (int i = 0; i < kNumFactorFamilies; ++i) stats_.factor_count_sums[i] += counts[i];
  stats_.windows++;

  record_and_slide();
}

void WindowPipeline::record_and_slide() {
  while (static_cast<int>(graph_.state.imu_states().size()) >
         scenario_.solver.window_length) {
    const int oldest = graph_.state.imu_states().items().front().first;
    estimate_.push_back({frame_times_.at(oldest), graph_.state.imu_states().at(oldest).pose});
    marginalize_oldest(&graph_, scenario_.solver);
    std::erase_if(obs_counts_, [&](const auto& kv) { return !graph_.state.contains(kv.first); });
  }
}

void WindowPipeline::finish() {
  for (const auto& [id, state] : graph_.state.imu_states().items()) {
    estimate_.push_back({frame_times_.at(id), state.pose});
  }
}

// --- Runner --------------------------------------------------------------------------

RunResult run_single(const ScenarioConfig& scenario, const World& world,
                     const StrategySpec& strategy, std::uint64_t run_index) {
  const Trajectory traj = generate_trajectory(scenario.waypoints, scenario.duration,
                                              scenario.orientation, &scenario.world.room_min,
                                              &scenario.world.room_max);
  const std::uint64_t imu_seed = scenario.noise_seed_base + run_index * 7919 + 1;
  const std::uint64_t meas_seed = scenario.noise_seed_base + run_index * 7919 + 2;

  const auto imu_samples = simulate_imu(traj, scenario.imu, imu_seed);
  const auto frames = simulate_measurements(traj, world, scenario.fov, scenario.meas_noise,
                                            scenario.measurement_rate_hz, meas_seed);
  if (frames.empty()) throw std::runtime_error("run_single: no measurement frames");

  ImuState init;
  init.pose = traj.pose(0.0);
  init.v = traj.velocity(0.0);

  WindowPipeline pipeline(scenario, strategy, &world.prior_db, run_index + 1);
  pipeline.start(frames[0], init);

  std::size_t cursor = 0;
  for (std::size_t k = 1; k < frames.size(); ++k) {
    std::vector<ImuSample> segment;
    while (cursor < imu_samples.size() && imu_samples[cursor].t < frames[k].t - 1e-9) {
      segment.push_back(imu_samples[cursor].sample);
      cursor++;
    }
    if (segment.empty()) continue;
    pipeline.process_frame(frames[k], segment);
  }
  pipeline.finish();

  std::vector<TimedPose> gt;
  gt.reserve(pipeline.estimate().size());
  for (const auto& tp : pipeline.estimate()) gt.push_back({tp.t, traj.pose(tp.t)});
  const RmseResult rmse = evaluate_rmse(pipeline.estimate(), gt);

  const PipelineStats& st = pipeline.stats();
  RunResult row;
  row.strategy = strategy.label();
  row.budget = strategy.uses_priors() && strategy.kind != Strategy::SpinsAll ? strategy.budget : 0;
  row.seed = run_index;
  row.trans_rmse_m = rmse.translation_m;
  row.rot_rmse_deg = rmse.rotation_deg;
  row.n_windows = st.windows;
  row.total_iterations = st.total_iterations;
  row.diverged_windows = st.diverged_windows;
  for (int i = 0; i < kNumFactorFamilies; ++i) {
    row.mean_factor_counts[i] = st.factor_count_sums[i] / std::max(1, st.windows);
  }
  row.mean_sp_components = st.sp_component_sum / std::max(1, st.windows);
  row.max_sp_components = st.max_sp_components;
  row.time_per_iteration_s =
      st.optimize_seconds / std::max<long>(1, st.total_iterations);
  row.selection_time_per_window_s = st.selection_seconds / std::max(1, st.windows);
  return row;
}

namespace {

int resolve_workers(int workers) {
  if (workers > 0) return workers;
  if (const char* env = std::getenv("SPNAV_WORKERS")) {
    const int parsed = std::atoi(env);
    if (parsed > 0) return parsed;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 2;
}

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<AggregateRow> ExperimentReport::aggregate() const {
  std::vector<AggregateRow> rows;
  for (const auto& run : runs) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const AggregateRow& a) {
      return a.strategy == run.strategy && a.budget == run.budget;
    });
    if (it == rows.end()) {
      rows.push_back({run.strategy, run.budget, 0, 0.0, 0.0, 0.0, 0.0, 0.0});
      it = rows.end() - 1;
    }
    it->runs++;
    it->mean_trans_rmse_m += run.trans_rmse_m;
    it->mean_rot_rmse_deg += run.rot_rmse_deg;
    it->mean_time_per_iteration_s += run.time_per_iteration_s;
  }
  for (auto& a : rows) {
    a.mean_trans_rmse_m /= a.runs;
    a.mean_rot_rmse_deg /= a.runs;
    a.mean_time_per_iteration_s /= a.runs;
  }
  for (auto& a : rows) {
    double vt = 0.0, vr = 0.0;
    for (const auto& run : runs) {
      if (run.strategy != a.strategy || run.budget != a.budget) continue;
      vt += std::pow(run.trans_rmse_m - a.mean_trans_rmse_m, 2);
      vr += std::pow(run.rot_rmse_deg - a.mean_rot_rmse_deg, 2);
    }
    a.std_trans_rmse_m = a.runs > 1 ? std::sqrt(vt / (a.runs - 1)) : 0.0;
    a.std_rot_rmse_deg = a.runs > 1 ? std::sqrt(vr / (a.runs - 1)) : 0.0;
  }
  return rows;
}

std::string results_csv(const ExperimentReport& report) {
  std::ostringstream os;
  os << "strategy,budget,seed,trans_rmse_m,rot_rmse_deg,n_windows,total_iterations,"
        "diverged_windows,mean_factors_prior,mean_factors_marginal,mean_factors_imu,"
        "mean_factors_point,mean_factors_line,mean_factors_plane,mean_factors_structure,"
        "mean_sp_components,max_sp_components\n";
  for (const auto& r : report.runs) {
    os << r.strategy << "," << r.budget << "," << r.seed << "," << format_g17(r.trans_rmse_m)
       << "," << format_g17(r.rot_rmse_deg) << "," << r.n_windows << "," << r.total_iterations
       << "," << r.diverged_windows;
    for (int i = 0; i < kNumFactorFamilies; ++i) os << "," << format_g17(r.mean_factor_counts[i]);
    os << "," << format_g17(r.mean_sp_components) << "," << r.max_sp_components << "\n";
  }
  return os.str();
}

std::string aggregate_csv(const ExperimentReport& report) {
  std::ostringstream os;
  os << "strategy,budget,runs,mean_trans_rmse_m,std_trans_rmse_m,mean_rot_rmse_deg,"
        "std_rot_rmse_deg\n";
  for (const auto& a : report.aggregate()) {
    os << a.strategy << "," << a.budget << "," << a.runs << "," << format_g17(a.mean_trans_rmse_m)
       << "," << format_g17(a.std_trans_rmse_m) << "," << format_g17(a.mean_rot_rmse_deg) << ","
       << format_g17(a.std_rot_rmse_deg) << "\n";
  }
  return os.str();
}

std::string format_table(const ExperimentReport& report) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-18s %14s %14s %14s\n", "Strategy", "Trans. RMSE [m]",
                "Rot. RMSE [deg]", "Time/iter [s]");
  os << buf;
  os << std::string(64, '-') << "\n";
  for (const auto& a : report.aggregate()) {
    std::snprintf(buf, sizeof(buf), "%-18s %14.4f %14.4f %14.4f\n", a.strategy.c_str(),
                  a.mean_trans_rmse_m, a.mean_rot_rmse_deg, a.mean_time_per_iteration_s);
    os << buf;
  }
  return os.str();
}

ExperimentReport run_experiment(const ScenarioConfig& scenario,
                                const std::vector<StrategySpec>& strategies, int n_runs,
                                const std::string& out_dir, int workers) {
  const World world = generate_world(scenario.world, scenario.prior_opts);

  struct Job {
    StrategySpec strategy;
    std::uint64_t run_index;
  };
  std::vector<Job> jobs;
  for (const auto& s : strategies) {
    for (int r = 0; r < n_runs; ++r) jobs.push_back({s, static_cast<std::uint64_t>(r)});
  }

  std::vector<RunResult> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  const int n_workers = std::min<int>(resolve_workers(workers), static_cast<int>(jobs.size()));

  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        results[i] = run_single(scenario, world, jobs[i].strategy, jobs[i].run_index);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  ExperimentReport report;
  report.scenario = scenario;
  report.runs = std::move(results);
  std::sort(report.runs.begin(), report.runs.end(), [](const RunResult& a, const RunResult& b) {
    if (a.strategy != b.strategy) return a.strategy < b.strategy;
    if (a.budget != b.budget) return a.budget < b.budget;
    return a.seed < b.seed;
  });

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream(fs::path(out_dir) / "results.csv") << results_csv(report);
    std::ofstream(fs::path(out_dir) / "aggregate.csv") << aggregate_csv(report);
    std::ofstream(fs::path(out_dir) / "table.txt") << format_table(report);
    std::ofstream(fs::path(out_dir) / "prior_db.jsonl") << world.prior_db.serialize_jsonl();

    const Trajectory traj = generate_trajectory(scenario.waypoints, scenario.duration,
                                                scenario.orientation, &scenario.world.room_min,
                                                &scenario.world.room_max);
    std::ofstream(fs::path(out_dir) / "trajectory_gt.csv")
        << trajectory_to_csv(traj, scenario.measurement_rate_hz);

    json meta;
    meta["library"] = "spnav 0.1.0";
    meta["scenario"] = json::parse(scenario.to_json());
    meta["n_runs"] = n_runs;
    json strat = json::array();
    for (const auto& s : strategies) strat.push_back(s.label());
    meta["strategies"] = strat;
    meta["seed_derivation"] = "imu_seed = base + run*7919 + 1; meas_seed = base + run*7919 + 2";
    std::ofstream(fs::path(out_dir) / "metadata.json") << meta.dump(2) << "\n";

    json timings;
    json rows = json::array();
    for (const auto& r : report.runs) {
      rows.push_back({{"strategy", r.strategy},
                      {"seed", r.seed},
                      {"time_per_iteration_s", r.time_per_iteration_s},
                      {"selection_time_per_window_s", r.selection_time_per_window_s}});
    }
    timings["runs"] = rows;
    json agg = json::array();
    for (const auto& a : report.aggregate()) {
      agg.push_back({{"strategy", a.strategy},
                     {"mean_time_per_iteration_s", a.mean_time_per_iteration_s}});
    }
    timings["aggregate"] = agg;
    std::ofstream(fs::path(out_dir) / "timings.json") << timings.dump(2) << "\n";
  }
  return report;
}

std::vector<SweepPoint> run_sweep(const ScenarioConfig& scenario, const std::vector<int>& budgets,
                                  int n_runs, const std::string& out_dir, int workers) {
  std::vector<SweepPoint> points;
  for (int budget : budgets) {
    StrategySpec spec;
    if (budget < 0) {
      spec.kind = Strategy::SpinsAll;
    } else if (budget == 0) {
      spec.kind = Strategy::PlpIns;
    } else {
      spec.kind = Strategy::SpinsApprox;
      spec.budget = budget;
    }
    const ExperimentReport report = run_experiment(scenario, {spec}, n_runs, "", workers);
    SweepPoint p;
    p.budget = budget;
    for (const auto& r : report.runs) {
      p.mean_trans_rmse_m += r.trans_rmse_m;
      p.mean_time_per_iteration_s += r.time_per_iteration_s;
      p.mean_sp_components += r.mean_sp_components;
    }
    const double n = std::max<std::size_t>(1, report.runs.size());
    p.mean_trans_rmse_m /= n;
    p.mean_time_per_iteration_s /= n;
    p.mean_sp_components /= n;
    points.push_back(p);
  }
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "sweep.csv");
    out << "budget,mean_trans_rmse_m,mean_time_per_iteration_s,mean_sp_components\n";
    for (const auto& p : points) {
      out << p.budget << "," << format_g17(p.mean_trans_rmse_m) << ","
          << format_g17(p.mean_time_per_iteration_s) << "," << format_g17(p.mean_sp_components)
          << "\n";
    }
  }
  return points;
}

}  // namespace spnav
