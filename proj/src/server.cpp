#include "atlas/server.h"

#include <algorithm>
#include <filesystem>
#include <set>
#include <stdexcept>

#include "atlas/registration.h"
#include "atlas/serialization.h"
#include "atlas/triangulation.h"

namespace atlas {

namespace {

const std::set<std::string> kValidOps = {"optimize", "quality_eval", "lc_visual", "lc_icp",
                                         "outlier_reject_absolute"};

void opOptimize(VIMap& map, const PipelineContext& ctx) {
  ensureAnchor(map);
  solve(map, ctx.solver);
}

void opQualityEval(VIMap& map, const PipelineContext& ctx) {
  evaluateAllLandmarkQualities(map, ctx.quality);
}

void opLcVisual(VIMap& map, const PipelineContext& ctx) { runLoopClosure(map, ctx.lc); }

void opLcIcp(VIMap& map, const PipelineContext& ctx) {
  // Candidate pairs: scan-carrying vertices that are currently estimated to
  // be close and are either cross-mission or temporally separated.
  std::vector<VertexId> with_scans;
  for (const auto& [vid, blob] : map.attachments()) with_scans.push_back(vid);
  for (std::size_t i = 0; i < with_scans.size(); ++i) {
    for (std::size_t j = i + 1; j < with_scans.size(); ++j) {
      const Vertex& a = map.vertex(with_scans[i]);
      const Vertex& b = map.vertex(with_scans[j]);
      const bool cross = a.mission != b.mission;
      if (cross) {
        if (!map.mission(a.mission).baseframe_known || !map.mission(b.mission).baseframe_known) {
          continue;
        }
      } else if (std::abs(a.timestamp_ns - b.timestamp_ns) < ctx.lc.min_time_gap_ns) {
        continue;
      }
      const double distance =
          (map.globalPose(with_scans[i]).t - map.globalPose(with_scans[j]).t).norm();
      if (distance > ctx.icp_pair_radius) continue;
      registerAndCommit(map, with_scans[i], with_scans[j], ctx.icp, ctx.lc);
    }
  }
}

void opOutlierRejectAbsolute(VIMap& map, const PipelineContext& ctx) {
  std::vector<EdgeId> to_remove;
  for (const auto& [eid, edge] : map.edges()) {
    const auto* ab = std::get_if<AbsolutePoseEdge>(&edge.payload);
    if (!ab) continue;
    const Pose6 estimated = map.globalPose(edge.from);
    const Vector6d error = se3Log(ab->T_G_I.inverse() * estimated);
    if (error.head<3>().norm() > ctx.absolute_outlier_rotation_rad ||
        error.tail<3>().norm() > ctx.absolute_outlier_translation_m) {
      to_remove.push_back(eid);
    }
  }
  for (const EdgeId& eid : to_remove) map.removeEdge(eid);
}

}  // namespace

void validatePipelineConfig(const PipelineConfig& config) {
  if (config.submap_ops.empty() || config.global_ops.empty()) {
    throw std::invalid_argument("pipeline: operation lists must be non-empty");
  }
  for (const auto& ops : {config.submap_ops, config.global_ops}) {
    for (const auto& op : ops) {
      if (!kValidOps.count(op)) throw std::invalid_argument("pipeline: unknown operation " + op);
    }
  }
}

void applyPipelineOps(VIMap& map, const std::vector<std::string>& ops,
                      const PipelineContext& context) {
  for (const auto& op : ops) {
    if (op == "optimize") {
      opOptimize(map, context);
    } else if (op == "quality_eval") {
      opQualityEval(map, context);
    } else if (op == "lc_visual") {
      opLcVisual(map, context);
    } else if (op == "lc_icp") {
      opLcIcp(map, context);
    } else if (op == "outlier_reject_absolute") {
      opOutlierRejectAbsolute(map, context);
    } else {
      throw std::invalid_argument("pipeline: unknown operation " + op);
    }
  }
}

ServerOptions ServerOptions::fromConfig(const Config& config) {
  ServerOptions o;
  if (config.has("server.submap_ops")) {
    o.pipeline.submap_ops.clear();
    for (const auto& op : splitString(config.getString("server.submap_ops"), ',')) {
      const std::string t = trimString(op);
      if (!t.empty()) o.pipeline.submap_ops.push_back(t);
    }
  }
  if (config.has("server.global_ops")) {
    o.pipeline.global_ops.clear();
    for (const auto& op : splitString(config.getString("server.global_ops"), ',')) {
      const std::string t = trimString(op);
      if (!t.empty()) o.pipeline.global_ops.push_back(t);
    }
  }
  o.worker_count = config.getInt("server.worker_count", o.worker_count);
  o.seed = config.getUint64("seed", o.seed);
  o.intermediate_global_updates =
      config.getBool("server.intermediate_global_updates", o.intermediate_global_updates);
  o.context.solver = SolveOptions::fromConfig(config);
  o.context.lc = LoopClosureOptions::fromConfig(config);
  o.context.icp = IcpOptions::fromConfig(config);
  o.context.icp_pair_radius = config.getDouble("server.icp_pair_radius", o.context.icp_pair_radius);
  validatePipelineConfig(o.pipeline);
  return o;
}

MappingServer::MappingServer(const ServerOptions& options) : options_(options) {
  validatePipelineConfig(options_.pipeline);
  const int workers = std::max(1, options_.worker_count);
  workers_.reserve(workers);
  for (int i = 0; i < workers; ++i) {
    workers_.emplace_back([this] { workerLoop(); });
  }
}

MappingServer::~MappingServer() {
  {
    std::lock_guard<std::mutex> lock(queue_mutex_);
    shutdown_ = true;
  }
  queue_cv_.notify_all();
  for (auto& worker : workers_) worker.join();
}

bool MappingServer::submit(std::vector<std::uint8_t> submap_bytes) {
  Submap submap;
  try {
    submap = deserializeSubmap(submap_bytes);
  } catch (const std::exception& e) {
    std::lock_guard<std::mutex> lock(global_mutex_);
    status_.degraded_robots.push_back(std::string("unknown: ") + e.what());
    return false;
  }
  submit(std::move(submap));
  return true;
}

void MappingServer::submit(Submap submap) {
  {
    std::lock_guard<std::mutex> lock(queue_mutex_);
    queue_.push_back(std::move(submap));
    ++in_flight_;
  }
  {
    std::lock_guard<std::mutex> lock(global_mutex_);
    ++status_.submitted;
  }
  queue_cv_.notify_one();
}

void MappingServer::submitSpoolDirectory(const std::string& spool_root) {
  namespace fs = std::filesystem;
  std::vector<std::pair<std::string, fs::path>> files;
  for (const auto& robot_dir : fs::directory_iterator(spool_root)) {
    if (!robot_dir.is_directory()) continue;
    for (const auto& entry : fs::directory_iterator(robot_dir.path())) {
      if (entry.path().extension() == ".submap") {
        files.emplace_back(robot_dir.path().filename().string(), entry.path());
      }
    }
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  for (const auto& [robot, path] : files) {
    submit(readFileBytes(path.string()));
  }
}

void MappingServer::workerLoop() {
  while (true) {
    Submap submap;
    {
      std::unique_lock<std::mutex> lock(queue_mutex_);
      queue_cv_.wait(lock, [this] { return shutdown_ || !queue_.empty(); });
      if (queue_.empty()) {
        if (shutdown_) return;
        continue;
      }
      submap = std::move(queue_.front());
      queue_.pop_front();
    }

    // Independent preprocessing; deterministic per chunk regardless of which
    // worker runs it.
    bool ok = true;
    try {
      const PipelineContext ctx =
          serverSubmapContext(options_, submap.robot_id, submap.sequence_number);
      applyPipelineOps(submap.chunk, options_.pipeline.submap_ops, ctx);
    } catch (const std::exception& e) {
      ok = false;
      std::lock_guard<std::mutex> lock(global_mutex_);
      status_.degraded_robots.push_back(submap.robot_id + ": " + e.what());
    }

    {
      std::lock_guard<std::mutex> lock(global_mutex_);
      if (ok) {
        ++status_.preprocessed;
        pending_[submap.robot_id].emplace(submap.sequence_number, submap);
        processed_store_[submap.robot_id].emplace(submap.sequence_number, std::move(submap));
        tryConcatenate();
      }
    }

    {
      std::lock_guard<std::mutex> lock(queue_mutex_);
      --in_flight_;
    }
    idle_cv_.notify_all();
  }
}

void MappingServer::tryConcatenate() {
  // Called with global_mutex_ held. Applies every chunk whose predecessor has
  // arrived, per robot, in sequence order.
  bool applied_any = false;
  for (auto& [robot, chunks] : pending_) {
    std::uint32_t& next = next_sequence_[robot];
    while (true) {
      const auto it = chunks.find(next);
      if (it == chunks.end()) break;
      concatenateSubmap(live_map_, it->second);
      chunks.erase(it);
      ++next;
      ++status_.concatenated;
      applied_any = true;
    }
  }
  status_.buffered = 0;
  for (const auto& [robot, chunks] : pending_) {
    status_.buffered += static_cast<int>(chunks.size());
  }
  if (applied_any && options_.intermediate_global_updates) {
    runGlobalUpdate(live_map_);
    ++status_.global_updates;
  }
}

PipelineContext serverSubmapContext(const ServerOptions& options, const std::string& robot_id,
                                    std::uint32_t sequence_number) {
  PipelineContext ctx = options.context;
  ctx.lc.ransac.seed = splitmix64(options.seed ^ std::hash<std::string>{}(robot_id) ^
                                  (0x5AB17ULL + sequence_number));
  return ctx;
}

PipelineContext serverGlobalContext(const ServerOptions& options) {
  PipelineContext ctx = options.context;
  ctx.lc.ransac.seed = splitmix64(options.seed ^ 0x610BA1ULL);
  return ctx;
}

void MappingServer::runGlobalUpdate(VIMap& map) {
  if (map.missions().empty()) return;
  ensureAnchor(map);
  applyPipelineOps(map, options_.pipeline.global_ops, serverGlobalContext(options_));
}

void MappingServer::waitUntilIdle() {
  std::unique_lock<std::mutex> lock(queue_mutex_);
  idle_cv_.wait(lock, [this] { return queue_.empty() && in_flight_ == 0; });
}

VIMap MappingServer::liveMapSnapshot() {
  std::lock_guard<std::mutex> lock(global_mutex_);
  return live_map_;
}

VIMap MappingServer::finalize() {
  waitUntilIdle();
  std::lock_guard<std::mutex> lock(global_mutex_);
  // Canonical rebuild: concatenation order is fixed by (robot id, sequence),
  // independent of arrival interleaving.
  VIMap result;
  for (const auto& [robot, chunks] : processed_store_) {
    for (const auto& [seq, submap] : chunks) {
      concatenateSubmap(result, submap);
    }
  }
  runGlobalUpdate(result);
  return result;
}

ServerStatus MappingServer::status() {
  std::lock_guard<std::mutex> lock(global_mutex_);
  return status_;
}

}  // namespace atlas
