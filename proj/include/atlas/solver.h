#pragma once

#include <map>
#include <set>
#include <string>

#include "atlas/config.h"
#include "atlas/map.h"
#include "atlas/residuals.h"

namespace atlas {

struct SolveOptions {
  int max_iterations = 50;
  double relative_cost_decrease = 1e-9;
  double min_step_norm = 1e-12;

  double huber_delta = 1.0;  // whitened units, Reprojection + Landmark3D only
  double pixel_sigma = 1.0;
  double landmark3d_sigma = 0.05;
  double bias_walk_sigma_gyro = 1e-4;
  double bias_walk_sigma_accel = 1e-3;
  double gravity = -9.81;

  bool fix_landmarks = false;
  bool fix_switches = false;
  bool fix_baseframes = false;
  std::set<VertexId> fixed_vertices;

  int schur_landmark_threshold = 500;
  int sparse_state_threshold = 1500;  // dense normal equations below this
  int imu_relinearize_every = 5;
  bool parallel = true;
  bool verbose = false;

  static SolveOptions fromConfig(const Config& config);
};

struct SolveReport {
  enum class Termination {
    Converged = 0,
    MaxIterations,
    SmallStep,
    RankDeficient,
    NoResiduals,
  };

  int iterations = 0;  // accepted steps
  double initial_cost = 0.0;
  double final_cost = 0.0;
  Termination termination = Termination::Converged;
  std::string detail;
  std::map<std::string, double> cost_by_kind;
  int residual_count = 0;
  int state_dimension = 0;

  [[nodiscard]] std::string toText() const;
  void writeKeyValue(const std::string& path) const;
};

// Extracted nonlinear least-squares problem over a map.
struct Problem {
  ProblemState state;
  std::vector<ResidualBlock> blocks;

  std::vector<VertexId> vertex_ids;      // parallel to state.poses
  std::vector<MissionId> mission_ids;    // parallel to state.baseframes
  std::vector<LandmarkId> landmark_ids;  // parallel to state.points
  std::vector<EdgeId> switch_edge_ids;   // parallel to state.switches

  std::map<VertexId, int> vertex_index;
  std::map<MissionId, int> mission_index;
};

// Builds the optimization problem: vertex poses (plus velocities/biases where
// IMU edges exist), Good landmarks, anchored baseframes, and loop-closure
// switch variables. Gauge: the root vertex of every mission is held fixed,
// as is the first anchored mission's baseframe.
Problem buildProblem(const VIMap& map, const SolveOptions& options);

// Writes optimized states back into the map.
void writeProblemState(const Problem& problem, VIMap& map);

// Levenberg-Marquardt on the manifold. Accepted cost is monotone;
// deterministic given identical inputs and options.
SolveReport solve(VIMap& map, const SolveOptions& options = {});

// Evaluates the current total cost without iterating.
double evaluateMapCost(const VIMap& map, const SolveOptions& options = {});

}  // namespace atlas
