#pragma once

#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "atlas/config.h"
#include "atlas/icp.h"
#include "atlas/landmark_quality.h"
#include "atlas/loop_closure.h"
#include "atlas/solver.h"
#include "atlas/submap.h"

namespace atlas {

// Operation lists for submap preprocessing and global multi-robot processing.
struct PipelineConfig {
  std::vector<std::string> submap_ops{"optimize"};
  std::vector<std::string> global_ops{"quality_eval", "lc_visual", "optimize"};
};

struct PipelineContext {
  SolveOptions solver;
  LoopClosureOptions lc;
  IcpOptions icp;
  LandmarkQualityOptions quality;
  double icp_pair_radius = 3.0;
  double absolute_outlier_rotation_rad = 0.5;
  double absolute_outlier_translation_m = 1.0;
};

// Runs one operation list on a map. Valid operations: optimize, quality_eval,
// lc_visual, lc_icp, outlier_reject_absolute.
void applyPipelineOps(VIMap& map, const std::vector<std::string>& ops,
                      const PipelineContext& context);

void validatePipelineConfig(const PipelineConfig& config);

struct ServerOptions;

// Contexts with RANSAC seeds derived from the server seed: per submap for
// preprocessing and once for global-scope runs. The offline console path uses
// the same derivations so both routes process identical candidate sets.
PipelineContext serverSubmapContext(const ServerOptions& options, const std::string& robot_id,
                                    std::uint32_t sequence_number);
PipelineContext serverGlobalContext(const ServerOptions& options);

struct ServerOptions {
  PipelineConfig pipeline;
  PipelineContext context;
  int worker_count = 3;
  std::uint64_t seed = 0;
  // Run the global pipeline on the live map after every concatenation batch.
  bool intermediate_global_updates = true;

  static ServerOptions fromConfig(const Config& config);
};

struct ServerStatus {
  int submitted = 0;
  int preprocessed = 0;
  int concatenated = 0;
  int buffered = 0;
  int global_updates = 0;
  std::vector<std::string> degraded_robots;
};

// Centralized mapping server. Submaps from different robots preprocess
// concurrently on a worker pool; concatenation happens in sequence order per
// robot (out-of-order chunks are buffered). The finalized global map is
// rebuilt from the preprocessed chunks in canonical order, so the result is
// byte-identical for every arrival interleaving.
class MappingServer {
 public:
  explicit MappingServer(const ServerOptions& options);
  ~MappingServer();

  MappingServer(const MappingServer&) = delete;
  MappingServer& operator=(const MappingServer&) = delete;

  // Thread-safe; returns false when the payload is rejected as corrupt.
  bool submit(std::vector<std::uint8_t> submap_bytes);
  void submit(Submap submap);

  // Reads spool/<robot_id>/<seq>.submap files and submits them all.
  void submitSpoolDirectory(const std::string& spool_root);

  // Blocks until every submitted chunk is preprocessed and concatenated.
  void waitUntilIdle();

  // Snapshot of the live (streamed) global map.
  VIMap liveMapSnapshot();

  // Canonical result: preprocessed chunks concatenated in (robot, seq) order,
  // then one global pipeline pass.
  VIMap finalize();

  ServerStatus status();

 private:
  void workerLoop();
  void tryConcatenate();
  void runGlobalUpdate(VIMap& map);

  ServerOptions options_;

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::condition_variable idle_cv_;
  std::deque<Submap> queue_;
  int in_flight_ = 0;
  bool shutdown_ = false;

  std::mutex global_mutex_;
  VIMap live_map_;
  std::map<std::string, std::map<std::uint32_t, Submap>> pending_;
  std::map<std::string, std::map<std::uint32_t, Submap>> processed_store_;
  std::map<std::string, std::uint32_t> next_sequence_;
  ServerStatus status_;

  std::vector<std::thread> workers_;
};

}  // namespace atlas
