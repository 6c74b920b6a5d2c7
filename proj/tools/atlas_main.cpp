#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "atlas/console_ops.h"
#include "atlas/loop_closure.h"
#include "atlas/registration.h"
#include "atlas/semantics.h"
#include "atlas/serialization.h"
#include "atlas/server.h"
#include "atlas/solver.h"
#include "atlas/synthworld.h"
#include "atlas/track_io.h"
#include "atlas/trajectory_io.h"

namespace {

using namespace atlas;

Config loadConfig(const std::string& path) {
  return path.empty() ? Config() : Config::fromFile(path);
}

MissionId missionByIndex(const VIMap& map, int index) {
  int i = 0;
  for (const auto& [mid, m] : map.missions()) {
    if (i++ == index) return mid;
  }
  throw std::runtime_error("unknown mission index " + std::to_string(index));
}

int runLoad(const std::string& path) {
  const VIMap map = deserializeMap(path);
  std::cout << "missions: " << map.missions().size() << "\n"
            << "vertices: " << map.vertices().size() << "\n"
            << "edges: " << map.edges().size() << "\n"
            << "landmarks: " << map.landmarks().size() << "\n";
  const auto problems = map.checkConsistency();
  std::cout << "consistency: " << (problems.empty() ? "ok" : "FAILED") << "\n";
  for (const auto& p : problems) std::cout << "  " << p << "\n";
  return problems.empty() ? 0 : 1;
}

int runOptimize(const std::string& in, const std::string& out, const Config& config,
                const std::string& report_path) {
  VIMap map = deserializeMap(in);
  ensureAnchor(map);
  const SolveReport report = solve(map, SolveOptions::fromConfig(config));
  std::cout << report.toText();
  if (!report_path.empty()) report.writeKeyValue(report_path);
  serializeMap(map, out);
  return 0;
}

int runLc(const std::string& in, const std::string& out, const Config& config) {
  VIMap map = deserializeMap(in);
  evaluateAllLandmarkQualities(map);
  const LoopClosureReport report = runLoopClosure(map, LoopClosureOptions::fromConfig(config));
  std::cout << "loop closure results: " << report.results
            << "\n  edges added: " << report.commit.edges_added
            << "\n  duplicates skipped: " << report.commit.duplicates_skipped
            << "\n  landmarks merged: " << report.commit.landmarks_merged
            << "\n  newly anchored missions: " << report.newly_anchored.size() << "\n";
  serializeMap(map, out);
  return 0;
}

int runIcp(const std::string& in, const std::string& out, const Config& config) {
  VIMap map = deserializeMap(in);
  ServerOptions server_options = ServerOptions::fromConfig(config);
  applyPipelineOps(map, {"lc_icp"}, server_options.context);
  serializeMap(map, out);
  std::cout << "icp registration pass complete\n";
  return 0;
}

int runSemanticLc(const std::string& in, const std::string& out, const Config& config) {
  VIMap map = deserializeMap(in);
  SemanticLcOptions options;
  options.ransac.seed = config.getUint64("seed", 0);
  options.min_cluster = config.getInt("semantic.min_cluster", options.min_cluster);
  options.match.min_cosine_similarity =
      config.getDouble("semantic.min_cosine_similarity", options.match.min_cosine_similarity);
  const SemanticLcReport report = runSemanticLoopClosure(map, options);
  std::cout << "semantic clusters: " << report.clusters
            << "\n  edges added: " << report.commit.edges_added << "\n";
  serializeMap(map, out);
  return 0;
}

int runServer(const std::string& spool, const std::string& out, const Config& config) {
  ServerOptions options = ServerOptions::fromConfig(config);
  MappingServer server(options);
  server.submitSpoolDirectory(spool);
  server.waitUntilIdle();
  VIMap global = server.finalize();
  const ServerStatus status = server.status();
  std::cout << "submaps: " << status.submitted << " submitted, " << status.preprocessed
            << " preprocessed, " << status.concatenated << " concatenated\n"
            << "global updates: " << status.global_updates << "\n";
  for (const auto& d : status.degraded_robots) std::cout << "degraded: " << d << "\n";
  serializeMap(global, out);
  return 0;
}

int runSimulate(const Config& config, const std::string& out_dir, int submap_interval) {
  namespace fs = std::filesystem;
  WorldSpec spec = WorldSpec::fromConfig(config);
  if (spec.robot_waypoints.empty()) {
    spec.robot_waypoints = {{{-6, -6, 1}, {6, -6, 1}, {6, 6, 1}, {-6, 6, 1}, {-6, -6, 1}}};
  }
  const GroundTruthWorld world = generateWorld(spec);

  fs::create_directories(out_dir + "/gt");
  fs::create_directories(out_dir + "/maps");
  fs::create_directories(out_dir + "/tracks");
  fs::create_directories(out_dir + "/spool");

  for (int r = 0; r < static_cast<int>(world.robots.size()); ++r) {
    const SimulatedMission sim = simulateMission(world, r);
    const std::string robot = "robot" + std::to_string(r);

    Trajectory gt;
    for (const auto& [t, pose] : groundTruthTrajectory(world, r)) gt.push_back({t, pose});
    if (spec.with_imu) {
      gt.clear();
      for (std::size_t k = 0; k < sim.gt_T_M_I.size(); ++k) {
        gt.push_back({static_cast<double>(sim.timestamps_ns[k]) * 1e-9,
                      sim.T_G_M_true * sim.gt_T_M_I[k]});
      }
    }
    writeTumFile(gt, out_dir + "/gt/" + robot + ".tum");

    std::ofstream tracks(out_dir + "/tracks/" + robot + ".csv");
    tracks << "track_id,vertex_id,camera_id,u,v,depth,feature_type,descriptor_hex\n"
           << sim.tracks_csv;
    if (!sim.semantic_csv.empty()) {
      std::ofstream sem(out_dir + "/tracks/" + robot + "_semantic.csv");
      sem << "track_id,vertex_id,camera_id,class,x,y,z,descriptor_hex\n" << sim.semantic_csv;
    }

    VIMap map;
    buildMissionMap(map, world, sim);
    if (!sim.semantic_csv.empty()) {
      ingestSemanticTracks(map, parseSemanticCsv(sim.semantic_csv));
    }
    serializeMap(map, out_dir + "/maps/" + robot + ".vmap");

    if (submap_interval > 0) {
      fs::create_directories(out_dir + "/spool/" + robot);
      for (const Submap& submap : splitIntoSubmaps(map, submap_interval, robot)) {
        writeSubmapFile(submap,
                        submapSpoolPath(out_dir + "/spool", robot, submap.sequence_number));
      }
    }
    std::cout << robot << ": " << sim.vertex_ids.size() << " vertices, "
              << map.landmarks().size() << " landmarks\n";
  }
  return 0;
}

int runScript(const std::string& path);

int dispatch(const std::vector<std::string>& args);

int runScript(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open script " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trimString(line);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> args;
    std::istringstream iss(line);
    std::string tok;
    while (iss >> tok) args.push_back(tok);
    std::cout << "# " << line << "\n";
    const int rc = dispatch(args);
    if (rc != 0) {
      std::cerr << "script line " << line_no << " failed\n";
      return rc;
    }
  }
  return 0;
}

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"atlas: multi-mission factor-graph mapping backend"};
  app.require_subcommand(1);

  std::string map_in, map_in_b, map_out, config_path, gt_path, out_path, spool_dir, script_path,
      report_path;
  int mission_index = 0;
  bool align = false;
  double keep_fraction = 1.0;
  double min_dt = 0.0, min_translation = 0.0, min_rotation_deg = 0.0;
  int submap_interval = 20;
  std::string vertex_a_hex, vertex_b_hex;

  auto* load = app.add_subcommand("load", "load a map and print a summary");
  load->add_option("map", map_in)->required();

  auto* save = app.add_subcommand("save", "re-serialize a map (canonical bytes)");
  save->add_option("map", map_in)->required();
  save->add_option("out", map_out)->required();

  auto* merge = app.add_subcommand("merge", "merge two maps with disjoint missions");
  merge->add_option("map_a", map_in)->required();
  merge->add_option("map_b", map_in_b)->required();
  merge->add_option("out", map_out)->required();

  auto* optimize = app.add_subcommand("optimize", "batch bundle adjustment");
  optimize->add_option("map", map_in)->required();
  optimize->add_option("out", map_out)->required();
  optimize->add_option("--config", config_path);
  optimize->add_option("--report", report_path);

  auto* lc = app.add_subcommand("lc", "visual loop closure");
  lc->add_option("map", map_in)->required();
  lc->add_option("out", map_out)->required();
  lc->add_option("--config", config_path);

  auto* icp = app.add_subcommand("icp", "ICP registration between scan-carrying vertices");
  icp->add_option("map", map_in)->required();
  icp->add_option("out", map_out)->required();
  icp->add_option("--config", config_path);

  auto* semantic = app.add_subcommand("semantic-lc", "semantic object loop closure");
  semantic->add_option("map", map_in)->required();
  semantic->add_option("out", map_out)->required();
  semantic->add_option("--config", config_path);

  auto* keyframe = app.add_subcommand("keyframe", "drop redundant vertices");
  keyframe->add_option("map", map_in)->required();
  keyframe->add_option("out", map_out)->required();
  keyframe->add_option("--min-dt", min_dt);
  keyframe->add_option("--min-translation", min_translation);
  keyframe->add_option("--min-rotation-deg", min_rotation_deg);

  auto* sparsify = app.add_subcommand("sparsify", "quality-ranked landmark simplification");
  sparsify->add_option("map", map_in)->required();
  sparsify->add_option("out", map_out)->required();
  sparsify->add_option("--keep-fraction", keep_fraction)->required();

  auto* evaluate = app.add_subcommand("evaluate", "APE RMSE against a TUM ground truth");
  evaluate->add_option("map", map_in)->required();
  evaluate->add_option("--mission", mission_index);
  evaluate->add_option("--gt", gt_path)->required();
  evaluate->add_flag("--align", align);

  auto* exp = app.add_subcommand("export", "export a mission trajectory (TUM) and landmarks");
  exp->add_option("map", map_in)->required();
  exp->add_option("--mission", mission_index);
  exp->add_option("--out", out_path)->required();
  exp->add_option("--landmarks", gt_path);

  auto* server = app.add_subcommand("server", "run the mapping server over a spool directory");
  server->add_option("--spool", spool_dir)->required();
  server->add_option("--out", map_out)->required();
  server->add_option("--config", config_path);

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic scenario directory");
  simulate->add_option("--config", config_path);
  simulate->add_option("--out", out_path)->required();
  simulate->add_option("--submap-interval", submap_interval);

  auto* tracks = app.add_subcommand("ingest-tracks", "ingest a feature-track csv into a map");
  tracks->add_option("map", map_in)->required();
  tracks->add_option("csv", gt_path)->required();
  tracks->add_option("out", map_out)->required();

  auto* script = app.add_subcommand("run", "run a script of atlas commands");
  script->add_option("--script", script_path)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (load->parsed()) return runLoad(map_in);
    if (save->parsed()) {
      serializeMap(deserializeMap(map_in), map_out);
      return 0;
    }
    if (merge->parsed()) {
      serializeMap(mergeMaps(deserializeMap(map_in), deserializeMap(map_in_b)), map_out);
      std::cout << "merged\n";
      return 0;
    }
    if (optimize->parsed()) {
      return runOptimize(map_in, map_out, loadConfig(config_path), report_path);
    }
    if (lc->parsed()) return runLc(map_in, map_out, loadConfig(config_path));
    if (icp->parsed()) return runIcp(map_in, map_out, loadConfig(config_path));
    if (semantic->parsed()) return runSemanticLc(map_in, map_out, loadConfig(config_path));
    if (keyframe->parsed()) {
      VIMap map = deserializeMap(map_in);
      KeyframeParams params;
      params.min_dt_s = min_dt;
      params.min_translation_m = min_translation;
      params.min_rotation_rad = min_rotation_deg * M_PI / 180.0;
      const KeyframeReport report = keyframeMap(map, params);
      std::cout << "removed " << report.removed_vertices << " vertices ("
                << report.retained_for_constraints << " retained for constraints)\n";
      serializeMap(map, map_out);
      return 0;
    }
    if (sparsify->parsed()) {
      VIMap map = deserializeMap(map_in);
      const SparsifyReport report = sparsifyLandmarks(map, keep_fraction);
      std::cout << "kept " << report.kept << ", removed " << report.removed << "\n";
      serializeMap(map, map_out);
      return 0;
    }
    if (evaluate->parsed()) {
      const VIMap map = deserializeMap(map_in);
      const Trajectory estimate = missionTrajectory(map, missionByIndex(map, mission_index));
      const Trajectory gt = readTumFile(gt_path);
      const auto result = evaluateApe(estimate, gt, align);
      if (!result.has_value()) {
        std::cerr << "fewer than 3 associated pairs\n";
        return 1;
      }
      std::cout << "ape_rmse_m " << result->rmse << " pairs " << result->associated_pairs << "\n";
      return 0;
    }
    if (exp->parsed()) {
      const VIMap map = deserializeMap(map_in);
      writeTumFile(missionTrajectory(map, missionByIndex(map, mission_index)), out_path);
      if (!gt_path.empty()) writeLandmarksCsv(map, gt_path);
      std::cout << "exported\n";
      return 0;
    }
    if (server->parsed()) return runServer(spool_dir, map_out, loadConfig(config_path));
    if (simulate->parsed()) {
      return runSimulate(loadConfig(config_path), out_path, submap_interval);
    }
    if (tracks->parsed()) {
      VIMap map = deserializeMap(map_in);
      const auto created = ingestFeatureTracksFile(map, gt_path);
      std::cout << "created " << created.size() << " landmarks\n";
      serializeMap(map, map_out);
      return 0;
    }
    if (script->parsed()) return runScript(script_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args);
}
