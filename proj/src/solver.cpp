#include "atlas/solver.h"

#include <omp.h>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "atlas/imu_preintegration.h"
#include "atlas/triangulation.h"

namespace atlas {

SolveOptions SolveOptions::fromConfig(const Config& config) {
  SolveOptions o;
  o.max_iterations = config.getInt("optimizer.max_iterations", o.max_iterations);
  o.relative_cost_decrease =
      config.getDouble("optimizer.relative_cost_decrease", o.relative_cost_decrease);
  o.min_step_norm = config.getDouble("optimizer.min_step_norm", o.min_step_norm);
  o.huber_delta = config.getDouble("optimizer.huber_delta", o.huber_delta);
  o.pixel_sigma = config.getDouble("optimizer.pixel_sigma", o.pixel_sigma);
  o.landmark3d_sigma = config.getDouble("optimizer.landmark3d_sigma", o.landmark3d_sigma);
  o.bias_walk_sigma_gyro =
      config.getDouble("optimizer.bias_walk_sigma_gyro", o.bias_walk_sigma_gyro);
  o.bias_walk_sigma_accel =
      config.getDouble("optimizer.bias_walk_sigma_accel", o.bias_walk_sigma_accel);
  o.fix_landmarks = config.getBool("optimizer.fix_landmarks", o.fix_landmarks);
  o.fix_switches = config.getBool("optimizer.fix_switches", o.fix_switches);
  o.fix_baseframes = config.getBool("optimizer.fix_baseframes", o.fix_baseframes);
  o.schur_landmark_threshold =
      config.getInt("optimizer.schur_landmark_threshold", o.schur_landmark_threshold);
  o.sparse_state_threshold =
      config.getInt("optimizer.sparse_state_threshold", o.sparse_state_threshold);
  o.imu_relinearize_every =
      config.getInt("optimizer.imu_relinearize_every", o.imu_relinearize_every);
  o.parallel = config.getBool("optimizer.parallel", o.parallel);
  o.verbose = config.getBool("optimizer.verbose", o.verbose);
  return o;
}

namespace {

template <int N>
Eigen::Matrix<double, N, N> sqrtInformation(const Eigen::Matrix<double, N, N>& covariance) {
  const Eigen::Matrix<double, N, N> info =
      covariance.llt().solve(Eigen::Matrix<double, N, N>::Identity());
  Eigen::LLT<Eigen::Matrix<double, N, N>> llt(info);
  return llt.matrixL().transpose();
}

struct StateUsage {
  std::vector<bool> pose, velocity, bias_g, bias_a, baseframe, point, switches;
};

}  // namespace

Problem buildProblem(const VIMap& map, const SolveOptions& options) {
  Problem problem;
  ProblemState& state = problem.state;

  for (const auto& [mid, mission] : map.missions()) {
    problem.mission_index[mid] = static_cast<int>(problem.mission_ids.size());
    problem.mission_ids.push_back(mid);
    state.baseframes.push_back(mission.T_G_M);
  }

  std::set<VertexId> mission_roots;
  for (const auto& [mid, mission] : map.missions()) {
    const auto chain = map.missionVertexChain(mid);
    if (!chain.empty()) mission_roots.insert(chain.front());
  }

  for (const auto& [vid, v] : map.vertices()) {
    problem.vertex_index[vid] = static_cast<int>(problem.vertex_ids.size());
    problem.vertex_ids.push_back(vid);
    state.poses.push_back(v.T_M_I);
    state.velocities.push_back(v.v_M);
    state.gyro_biases.push_back(v.bias_gyro);
    state.accel_biases.push_back(v.bias_accel);
  }

  std::map<LandmarkId, int> landmark_index;
  for (const auto& [lid, lm] : map.landmarks()) {
    if (lm.quality != LandmarkQuality::Good) continue;
    landmark_index[lid] = static_cast<int>(problem.landmark_ids.size());
    problem.landmark_ids.push_back(lid);
    state.points.push_back(lm.p_M);
  }

  // Residual blocks.
  auto baseframeIndexOf = [&](const VertexId& vid) {
    return problem.mission_index.at(map.vertex(vid).mission);
  };

  for (const auto& [eid, edge] : map.edges()) {
    const int from = problem.vertex_index.at(edge.from);
    if (const auto* odo = std::get_if<OdometryEdge>(&edge.payload)) {
      ResidualBlock block;
      block.kind = ResidualKind::RelPose;
      block.pose_a = from;
      block.pose_b = problem.vertex_index.at(edge.to);
      block.T_meas = odo->T_A_B;
      block.sqrt_info6 = sqrtInformation<6>(odo->covariance);
      block.source_edge = eid;
      problem.blocks.push_back(block);
    } else if (const auto* lc = std::get_if<LoopClosureEdge>(&edge.payload)) {
      ResidualBlock block;
      block.kind = ResidualKind::RelPose;
      block.pose_a = from;
      block.pose_b = problem.vertex_index.at(edge.to);
      const int base_a = baseframeIndexOf(edge.from);
      const int base_b = baseframeIndexOf(edge.to);
      if (base_a != base_b) {
        block.baseframe_a = base_a;
        block.baseframe_b = base_b;
      }
      block.T_meas = lc->T_A_B;
      block.sqrt_info6 = sqrtInformation<6>(lc->covariance);
      block.switch_index = static_cast<int>(problem.switch_edge_ids.size());
      block.source_edge = eid;
      problem.blocks.push_back(block);

      ResidualBlock prior;
      prior.kind = ResidualKind::SwitchPrior;
      prior.switch_index = block.switch_index;
      prior.inv_sigma_switch = 1.0 / std::sqrt(lc->switch_prior_var);
      prior.source_edge = eid;
      problem.blocks.push_back(prior);

      problem.switch_edge_ids.push_back(eid);
      state.switches.push_back(lc->switch_value);
    } else if (const auto* imu = std::get_if<ImuEdge>(&edge.payload)) {
      ResidualBlock block;
      block.kind = ResidualKind::ImuPreint;
      block.pose_a = from;
      block.pose_b = problem.vertex_index.at(edge.to);
      block.vel_a = block.pose_a;
      block.vel_b = block.pose_b;
      block.delta_q = imu->delta_q;
      block.delta_v = imu->delta_v;
      block.delta_p = imu->delta_p;
      block.delta_t = imu->delta_t;
      block.sqrt_info9 = sqrtInformation<9>(imu->covariance);
      block.gravity = options.gravity;
      block.source_edge = eid;
      problem.blocks.push_back(block);

      ResidualBlock walk;
      walk.kind = ResidualKind::BiasWalk;
      walk.bias_g_a = block.pose_a;
      walk.bias_g_b = block.pose_b;
      walk.bias_a_a = block.pose_a;
      walk.bias_a_b = block.pose_b;
      const double sqrt_dt = std::sqrt(std::max(imu->delta_t, 1e-6));
      walk.inv_sigma_walk_gyro = 1.0 / (options.bias_walk_sigma_gyro * sqrt_dt);
      walk.inv_sigma_walk_accel = 1.0 / (options.bias_walk_sigma_accel * sqrt_dt);
      walk.source_edge = eid;
      problem.blocks.push_back(walk);
    } else if (const auto* ab = std::get_if<AbsolutePoseEdge>(&edge.payload)) {
      ResidualBlock block;
      block.kind = ResidualKind::Absolute;
      block.pose_a = from;
      block.baseframe_a = baseframeIndexOf(edge.from);
      block.T_meas = ab->T_G_I;
      block.sqrt_info6 = sqrtInformation<6>(ab->covariance);
      block.source_edge = eid;
      problem.blocks.push_back(block);
    }
  }

  for (const auto& [lid, index] : landmark_index) {
    const Landmark& lm = map.landmark(lid);
    const int host_base = problem.mission_index.at(map.vertex(lm.host).mission);
    auto refs = lm.observations;
    std::sort(refs.begin(), refs.end());
    for (const auto& ref : refs) {
      const Vertex& v = map.vertex(ref.vertex);
      const Keypoint& kp = map.keypoint(ref);
      const CameraConfig& cam = map.camera(v.frames[ref.frame].camera);
      ResidualBlock block;
      block.pose_a = problem.vertex_index.at(ref.vertex);
      block.point = index;
      const int obs_base = problem.mission_index.at(v.mission);
      if (obs_base != host_base) {
        block.baseframe_a = host_base;
        block.baseframe_b = obs_base;
      }
      block.T_C_I = cam.T_I_C.inverse();
      block.fx = cam.fx;
      block.fy = cam.fy;
      block.cx = cam.cx;
      block.cy = cam.cy;
      block.robust = options.huber_delta > 0.0;
      if (lm.kind == LandmarkKind::Averaged3D) {
        if (!kp.hasDepth()) continue;
        block.kind = ResidualKind::Landmark3D;
        block.p_C_observed = bearingFromPixel(kp.uv, cam.fx, cam.fy, cam.cx, cam.cy) * kp.depth;
        block.inv_sigma = 1.0 / options.landmark3d_sigma;
      } else {
        block.kind = ResidualKind::Reprojection;
        block.uv = kp.uv;
        block.inv_sigma = 1.0 / options.pixel_sigma;
      }
      problem.blocks.push_back(block);
    }
  }

  // Mark which states any residual actually touches.
  StateUsage usage;
  usage.pose.assign(state.poses.size(), false);
  usage.velocity.assign(state.poses.size(), false);
  usage.bias_g.assign(state.poses.size(), false);
  usage.bias_a.assign(state.poses.size(), false);
  usage.baseframe.assign(state.baseframes.size(), false);
  usage.point.assign(state.points.size(), false);
  usage.switches.assign(state.switches.size(), false);
  for (const auto& b : problem.blocks) {
    auto mark = [](std::vector<bool>& v, int i) {
      if (i >= 0) v[i] = true;
    };
    mark(usage.pose, b.pose_a);
    mark(usage.pose, b.pose_b);
    mark(usage.velocity, b.vel_a);
    mark(usage.velocity, b.vel_b);
    mark(usage.bias_g, b.bias_g_a);
    mark(usage.bias_g, b.bias_g_b);
    mark(usage.bias_a, b.bias_a_a);
    mark(usage.bias_a, b.bias_a_b);
    mark(usage.baseframe, b.baseframe_a);
    mark(usage.baseframe, b.baseframe_b);
    mark(usage.point, b.point);
    mark(usage.switches, b.switch_index);
  }

  // Gauge: hold each mission's root vertex and the first anchored mission's
  // baseframe; unknown baseframes are not optimized at all.
  const auto gauge_mission = map.firstAnchoredMission();

  int offset = 0;
  state.pose_offset.assign(state.poses.size(), -1);
  state.velocity_offset.assign(state.poses.size(), -1);
  state.gyro_bias_offset.assign(state.poses.size(), -1);
  state.accel_bias_offset.assign(state.poses.size(), -1);
  state.baseframe_offset.assign(state.baseframes.size(), -1);
  state.point_offset.assign(state.points.size(), -1);
  state.switch_offset.assign(state.switches.size(), -1);

  for (std::size_t i = 0; i < state.poses.size(); ++i) {
    const VertexId vid = problem.vertex_ids[i];
    const bool fixed = mission_roots.count(vid) > 0 || options.fixed_vertices.count(vid) > 0;
    if (usage.pose[i] && !fixed) {
      state.pose_offset[i] = offset;
      offset += 6;
    }
    if (usage.velocity[i]) {
      state.velocity_offset[i] = offset;
      offset += 3;
    }
    if (usage.bias_g[i]) {
      state.gyro_bias_offset[i] = offset;
      offset += 3;
    }
    if (usage.bias_a[i]) {
      state.accel_bias_offset[i] = offset;
      offset += 3;
    }
  }
  for (std::size_t i = 0; i < state.baseframes.size(); ++i) {
    const MissionId mid = problem.mission_ids[i];
    const Mission& mission = map.mission(mid);
    const bool is_gauge = gauge_mission.has_value() && *gauge_mission == mid;
    if (usage.baseframe[i] && mission.baseframe_known && !is_gauge && !options.fix_baseframes) {
      state.baseframe_offset[i] = offset;
      offset += 6;
    }
  }
  for (std::size_t i = 0; i < state.switches.size(); ++i) {
    if (usage.switches[i] && !options.fix_switches) {
      state.switch_offset[i] = offset;
      offset += 1;
    }
  }
  // Landmarks stay last so they can be Schur-eliminated.
  for (std::size_t i = 0; i < state.points.size(); ++i) {
    if (usage.point[i] && !options.fix_landmarks) {
      state.point_offset[i] = offset;
      offset += 3;
    }
  }
  state.dimension = offset;
  return problem;
}

void writeProblemState(const Problem& problem, VIMap& map) {
  for (std::size_t i = 0; i < problem.vertex_ids.size(); ++i) {
    Vertex& v = map.vertex(problem.vertex_ids[i]);
    v.T_M_I = problem.state.poses[i];
    v.v_M = problem.state.velocities[i];
    v.bias_gyro = problem.state.gyro_biases[i];
    v.bias_accel = problem.state.accel_biases[i];
  }
  for (std::size_t i = 0; i < problem.mission_ids.size(); ++i) {
    map.mission(problem.mission_ids[i]).T_G_M = problem.state.baseframes[i];
  }
  for (std::size_t i = 0; i < problem.landmark_ids.size(); ++i) {
    map.landmark(problem.landmark_ids[i]).p_M = problem.state.points[i];
  }
  for (std::size_t i = 0; i < problem.switch_edge_ids.size(); ++i) {
    auto& lc = std::get<LoopClosureEdge>(map.edge(problem.switch_edge_ids[i]).payload);
    lc.switch_value = problem.state.switches[i];
  }
}

namespace {

struct Evaluation {
  std::vector<BlockEval> evals;
  double cost = 0.0;
  int valid_blocks = 0;
};

Evaluation evaluateAll(const std::vector<ResidualBlock>& blocks, const ProblemState& state,
                       bool with_jacobians, double huber_delta, bool parallel) {
  Evaluation out;
  out.evals.resize(blocks.size());
  const std::int64_t n = static_cast<std::int64_t>(blocks.size());
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    out.evals[i] = evaluateResidualBlock(blocks[i], state, with_jacobians, huber_delta);
  }
  // Serial reduction in block order keeps the cost bit-reproducible.
  for (const auto& eval : out.evals) {
    if (!eval.valid) continue;
    out.cost += eval.cost;
    ++out.valid_blocks;
  }
  return out;
}

void relinearizeImuBlocks(std::vector<ResidualBlock>& blocks, const Problem& problem,
                          const VIMap& map) {
  for (auto& block : blocks) {
    if (block.kind != ResidualKind::ImuPreint) continue;
    const auto* samples = map.imuSamples(block.source_edge);
    if (!samples || samples->size() < 2) continue;
    const Eigen::Vector3d bg = problem.state.gyro_biases[block.pose_a];
    const Eigen::Vector3d ba = problem.state.accel_biases[block.pose_a];
    // Deltas are recomputed at the current bias estimate; the stored
    // covariance is kept (its bias sensitivity is second order here).
    Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
    Eigen::Vector3d v = Eigen::Vector3d::Zero();
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i + 1 < samples->size(); ++i) {
      const double dt = (*samples)[i + 1].t - (*samples)[i].t;
      const Eigen::Vector3d omega = 0.5 * ((*samples)[i].gyro + (*samples)[i + 1].gyro) - bg;
      const Eigen::Quaterniond q_next = (q * so3Exp(omega * dt)).normalized();
      const Eigen::Vector3d accel =
          0.5 * (q * ((*samples)[i].accel - ba) + q_next * ((*samples)[i + 1].accel - ba));
      p += v * dt + 0.5 * accel * dt * dt;
      v += accel * dt;
      q = q_next;
    }
    block.delta_q = q;
    block.delta_v = v;
    block.delta_p = p;
  }
}

class NormalEquations {
 public:
  NormalEquations(int dim, bool dense) : dim_(dim), dense_(dense) {
    if (dense_) {
      h_dense_ = Eigen::MatrixXd::Zero(dim, dim);
    }
    g_ = Eigen::VectorXd::Zero(dim);
  }

  void add(const Evaluation& evaluation) {
    for (const auto& eval : evaluation.evals) {
      if (!eval.valid) continue;
      const auto r = eval.residual.head(eval.dim);
      for (std::size_t a = 0; a < eval.jacobians.size(); ++a) {
        const auto& ja = eval.jacobians[a];
        const auto ja_m = ja.j.topLeftCorner(eval.dim, ja.size);
        g_.segment(ja.column, ja.size) += ja_m.transpose() * r;
        for (std::size_t b = 0; b < eval.jacobians.size(); ++b) {
          const auto& jb = eval.jacobians[b];
          if (dense_ && jb.column < ja.column) continue;  // dense keeps upper blocks only
          const auto jb_m = jb.j.topLeftCorner(eval.dim, jb.size);
          if (dense_) {
            h_dense_.block(ja.column, jb.column, ja.size, jb.size) +=
                ja_m.transpose() * jb_m;
          } else {
            const Eigen::MatrixXd prod = ja_m.transpose() * jb_m;
            for (int r0 = 0; r0 < ja.size; ++r0) {
              for (int c0 = 0; c0 < jb.size; ++c0) {
                triplets_.emplace_back(ja.column + r0, jb.column + c0, prod(r0, c0));
              }
            }
          }
        }
      }
    }
  }

  [[nodiscard]] Eigen::VectorXd diagonal() {
    if (dense_) {
      Eigen::VectorXd d = h_dense_.diagonal();
      return d;
    }
    finalizeSparse();
    return h_sparse_.diagonal();
  }

  // Solves (H + lambda * diag) dx = -g. Returns false on factorization failure.
  bool solve(const Eigen::VectorXd& damping, Eigen::VectorXd* dx, int schur_points_start) {
    if (dense_) {
      Eigen::MatrixXd h = h_dense_.selfadjointView<Eigen::Upper>();
      h.diagonal() += damping;
      if (schur_points_start >= 0 && schur_points_start < dim_) {
        return solveSchur(h, schur_points_start, dx);
      }
      Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
      if (ldlt.info() != Eigen::Success) return false;
      *dx = ldlt.solve(-g_);
      return ldlt.info() == Eigen::Success;
    }
    finalizeSparse();
    Eigen::SparseMatrix<double> h = h_sparse_;
    for (int i = 0; i < dim_; ++i) h.coeffRef(i, i) += damping[i];
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    ldlt.compute(h);
    if (ldlt.info() != Eigen::Success) return false;
    *dx = ldlt.solve(-g_);
    return ldlt.info() == Eigen::Success;
  }

  [[nodiscard]] const Eigen::VectorXd& gradient() const { return g_; }

 private:
  void finalizeSparse() {
    if (sparse_final_) return;
    h_sparse_.resize(dim_, dim_);
    h_sparse_.setFromTriplets(triplets_.begin(), triplets_.end());
    sparse_final_ = true;
  }

  bool solveSchur(Eigen::MatrixXd& h, int m, Eigen::VectorXd* dx) {
    const int np = dim_ - m;  // point block size (multiple of 3)
    const auto a = h.topLeftCorner(m, m);
    const auto b = h.topRightCorner(m, np);
    Eigen::MatrixXd c_inv_bt(np, m);
    Eigen::VectorXd c_inv_gp(np);
    const Eigen::VectorXd g_a = g_.head(m);
    const Eigen::VectorXd g_p = g_.tail(np);
    for (int i = 0; i < np; i += 3) {
      const Eigen::Matrix3d c = h.block<3, 3>(m + i, m + i);
      const Eigen::Matrix3d c_inv = c.inverse();
      c_inv_bt.middleRows<3>(i) = c_inv * b.middleCols<3>(i).transpose();
      c_inv_gp.segment<3>(i) = c_inv * g_p.segment<3>(i);
    }
    const Eigen::MatrixXd s = a - b * c_inv_bt;
    const Eigen::VectorXd rhs = -g_a + b * c_inv_gp;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
    if (ldlt.info() != Eigen::Success) return false;
    dx->resize(dim_);
    dx->head(m) = ldlt.solve(rhs);
    if (ldlt.info() != Eigen::Success) return false;
    dx->tail(np) = -c_inv_gp - c_inv_bt * dx->head(m);
    return true;
  }

  int dim_;
  bool dense_;
  Eigen::MatrixXd h_dense_;
  Eigen::SparseMatrix<double> h_sparse_;
  std::vector<Eigen::Triplet<double>> triplets_;
  bool sparse_final_ = false;
  Eigen::VectorXd g_;
};

std::string describeUnconstrained(const Problem& problem, int column) {
  const ProblemState& s = problem.state;
  for (std::size_t i = 0; i < s.pose_offset.size(); ++i) {
    if (s.pose_offset[i] >= 0 && column >= s.pose_offset[i] && column < s.pose_offset[i] + 6) {
      return "vertex pose " + problem.vertex_ids[i].hex();
    }
    if (s.velocity_offset[i] >= 0 && column >= s.velocity_offset[i] &&
        column < s.velocity_offset[i] + 3) {
      return "vertex velocity " + problem.vertex_ids[i].hex();
    }
  }
  for (std::size_t i = 0; i < s.baseframe_offset.size(); ++i) {
    if (s.baseframe_offset[i] >= 0 && column >= s.baseframe_offset[i] &&
        column < s.baseframe_offset[i] + 6) {
      return "mission baseframe " + problem.mission_ids[i].hex();
    }
  }
  for (std::size_t i = 0; i < s.point_offset.size(); ++i) {
    if (s.point_offset[i] >= 0 && column >= s.point_offset[i] &&
        column < s.point_offset[i] + 3) {
      return "landmark " + problem.landmark_ids[i].hex();
    }
  }
  return "state column " + std::to_string(column);
}

}  // namespace

SolveReport solve(VIMap& map, const SolveOptions& options) {
  Problem problem = buildProblem(map, options);
  SolveReport report;
  report.state_dimension = problem.state.dimension;
  report.residual_count = static_cast<int>(problem.blocks.size());

  if (problem.blocks.empty() || problem.state.dimension == 0) {
    report.termination = SolveReport::Termination::NoResiduals;
    const Evaluation eval =
        evaluateAll(problem.blocks, problem.state, false, options.huber_delta, options.parallel);
    report.initial_cost = report.final_cost = eval.cost;
    return report;
  }

  const bool dense = problem.state.dimension <= options.sparse_state_threshold;
  int schur_start = -1;
  int used_points = 0;
  for (const int off : problem.state.point_offset) {
    if (off >= 0) ++used_points;
  }
  if (dense && used_points > options.schur_landmark_threshold) {
    schur_start = problem.state.dimension - 3 * used_points;
  }

  Evaluation current =
      evaluateAll(problem.blocks, problem.state, true, options.huber_delta, options.parallel);
  report.initial_cost = current.cost;

  double lambda = 1e-4;
  int accepted_since_relin = 0;
  bool done = false;

  while (!done && report.iterations < options.max_iterations) {
    NormalEquations normal(problem.state.dimension, dense);
    normal.add(current);

    if (report.iterations == 0) {
      const Eigen::VectorXd diag = normal.diagonal();
      for (int i = 0; i < problem.state.dimension; ++i) {
        if (diag[i] <= 0.0) {
          report.termination = SolveReport::Termination::RankDeficient;
          report.detail = "unconstrained " + describeUnconstrained(problem, i);
          report.final_cost = current.cost;
          writeProblemState(problem, map);
          return report;
        }
      }
    }

    bool stepped = false;
    while (!stepped) {
      Eigen::VectorXd damping = normal.diagonal() * lambda;
      damping = damping.cwiseMax(1e-12 * lambda);
      Eigen::VectorXd dx;
      if (!normal.solve(damping, &dx, schur_start)) {
        lambda *= 10.0;
        if (lambda > 1e14) {
          report.termination = SolveReport::Termination::RankDeficient;
          report.detail = "damped normal equations not positive definite";
          done = true;
          break;
        }
        continue;
      }

      if (dx.norm() < options.min_step_norm) {
        report.termination = SolveReport::Termination::SmallStep;
        done = true;
        break;
      }

      ProblemState candidate = problem.state;
      candidate.applyStep(dx);
      const Evaluation trial =
          evaluateAll(problem.blocks, candidate, true, options.huber_delta, options.parallel);

      if (trial.cost < current.cost) {
        const double decrease = (current.cost - trial.cost) / std::max(current.cost, 1e-300);
        problem.state = std::move(candidate);
        current = trial;
        ++report.iterations;
        ++accepted_since_relin;
        stepped = true;
        lambda = std::max(lambda / 3.0, 1e-12);
        if (options.verbose) {
          std::ostringstream oss;
          oss << "iter " << report.iterations << " cost " << current.cost << " lambda " << lambda;
          fprintf(stderr, "%s\n", oss.str().c_str());
        }
        if (accepted_since_relin >= options.imu_relinearize_every) {
          relinearizeImuBlocks(problem.blocks, problem, map);
          current = evaluateAll(problem.blocks, problem.state, true, options.huber_delta,
                                options.parallel);
          accepted_since_relin = 0;
        }
        if (decrease < options.relative_cost_decrease) {
          report.termination = SolveReport::Termination::Converged;
          done = true;
        }
      } else {
        lambda *= 4.0;
        if (lambda > 1e14) {
          report.termination = SolveReport::Termination::SmallStep;
          report.detail = "no acceptable step";
          done = true;
          break;
        }
      }
    }
  }

  if (!done) {
    report.termination = SolveReport::Termination::MaxIterations;
  }

  report.final_cost = current.cost;
  for (std::size_t i = 0; i < problem.blocks.size(); ++i) {
    if (!current.evals[i].valid) continue;
    report.cost_by_kind[residualKindName(problem.blocks[i].kind)] += current.evals[i].cost;
  }
  writeProblemState(problem, map);
  return report;
}

double evaluateMapCost(const VIMap& map, const SolveOptions& options) {
  Problem problem = buildProblem(map, options);
  return evaluateAll(problem.blocks, problem.state, false, options.huber_delta, options.parallel)
      .cost;
}

std::string SolveReport::toText() const {
  std::ostringstream oss;
  const char* term = "?";
  switch (termination) {
    case Termination::Converged: term = "converged"; break;
    case Termination::MaxIterations: term = "max_iterations"; break;
    case Termination::SmallStep: term = "small_step"; break;
    case Termination::RankDeficient: term = "rank_deficient"; break;
    case Termination::NoResiduals: term = "no_residuals"; break;
  }
  oss << "solve: " << term;
  if (!detail.empty()) oss << " (" << detail << ")";
  oss << "\n  iterations: " << iterations << "\n  cost: " << initial_cost << " -> " << final_cost
      << "\n  residual blocks: " << residual_count << "\n  state dimension: " << state_dimension
      << "\n";
  for (const auto& [kind, cost] : cost_by_kind) {
    oss << "  cost[" << kind << "]: " << cost << "\n";
  }
  return oss.str();
}

void SolveReport::writeKeyValue(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("SolveReport: cannot write " + path);
  out.precision(17);
  out << "iterations = " << iterations << "\n";
  out << "initial_cost = " << initial_cost << "\n";
  out << "final_cost = " << final_cost << "\n";
  out << "termination = " << static_cast<int>(termination) << "\n";
  out << "residual_count = " << residual_count << "\n";
  out << "state_dimension = " << state_dimension << "\n";
  for (const auto& [kind, cost] : cost_by_kind) {
    out << "cost." << kind << " = " << cost << "\n";
  }
}

}  // namespace atlas
