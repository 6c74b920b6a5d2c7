#include "atlas/p3p.h"

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>

#include "atlas/horn.h"

namespace atlas {

namespace {

// Degree-capped polynomial in one variable, coefficients by ascending power.
struct Poly {
  std::array<double, 5> c{};
  int deg = 0;

  static Poly constant(double v) {
    Poly p;
    p.c[0] = v;
    return p;
  }
};

Poly polyMul(const Poly& a, const Poly& b) {
  Poly out;
  out.deg = a.deg + b.deg;
  for (int i = 0; i <= a.deg; ++i) {
    for (int j = 0; j <= b.deg; ++j) {
      out.c[i + j] += a.c[i] * b.c[j];
    }
  }
  return out;
}

Poly polyAdd(const Poly& a, const Poly& b) {
  Poly out;
  out.deg = std::max(a.deg, b.deg);
  for (int i = 0; i <= out.deg; ++i) out.c[i] = a.c[i] + b.c[i];
  return out;
}

Poly polyScale(const Poly& a, double s) {
  Poly out = a;
  for (int i = 0; i <= a.deg; ++i) out.c[i] = a.c[i] * s;
  return out;
}

double polyEval(const Poly& p, double x) {
  double v = 0.0;
  for (int i = p.deg; i >= 0; --i) v = v * x + p.c[i];
  return v;
}

double polyEvalDeriv(const Poly& p, double x) {
  double v = 0.0;
  for (int i = p.deg; i >= 1; --i) v = v * x + i * p.c[i];
  return v;
}

// Real roots of a monic-izable quartic via the companion matrix.
std::vector<double> realRoots(const Poly& p) {
  int deg = p.deg;
  while (deg > 0 && std::abs(p.c[deg]) < 1e-14) --deg;
  std::vector<double> roots;
  if (deg <= 0) return roots;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(deg, deg);
  for (int i = 0; i < deg; ++i) companion(i, deg - 1) = -p.c[i] / p.c[deg];
  for (int i = 1; i < deg; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> eig(companion);
  for (int i = 0; i < deg; ++i) {
    const std::complex<double> r = eig.eigenvalues()[i];
    if (std::abs(r.imag()) < 1e-8 * (1.0 + std::abs(r.real()))) {
      double x = r.real();
      // A couple of Newton steps sharpen the eigenvalue root.
      for (int it = 0; it < 3; ++it) {
        const double f = polyEval(p, x);
        const double df = polyEvalDeriv(p, x);
        if (std::abs(df) < 1e-14) break;
        x -= f / df;
      }
      roots.push_back(x);
    }
  }
  return roots;
}

}  // namespace

std::vector<Pose6> solveP3p(const Eigen::Vector3d bearings[3], const Eigen::Vector3d points[3]) {
  std::vector<Pose6> solutions;

  const Eigen::Vector3d f1 = bearings[0].normalized();
  const Eigen::Vector3d f2 = bearings[1].normalized();
  const Eigen::Vector3d f3 = bearings[2].normalized();

  const double a2 = (points[1] - points[2]).squaredNorm();
  const double b2 = (points[0] - points[2]).squaredNorm();
  const double c2 = (points[0] - points[1]).squaredNorm();
  if (a2 < 1e-16 || b2 < 1e-16 || c2 < 1e-16) return solutions;

  // Collinear world points are degenerate.
  const Eigen::Vector3d e1 = points[1] - points[0];
  const Eigen::Vector3d e2 = points[2] - points[0];
  if (e1.cross(e2).squaredNorm() < 1e-16 * e1.squaredNorm() * e2.squaredNorm()) {
    return solutions;
  }

  const double cos_a = f2.dot(f3);  // subtends side a
  const double cos_b = f1.dot(f3);  // subtends side b
  const double cos_g = f1.dot(f2);  // subtends side c

  // With u = s2/s1, v = s3/s1 and the law-of-cosines constraints, u is a
  // rational function of v; substituting it back yields a quartic in v.
  const double q_ratio = c2 / b2;
  const double r_ratio = a2 / b2;

  Poly k;  // 1 + v^2 - 2 v cos_b
  k.deg = 2;
  k.c[0] = 1.0;
  k.c[1] = -2.0 * cos_b;
  k.c[2] = 1.0;

  // numerator N(v) = v^2 - 1 + (Q - R) * k(v)
  Poly numerator = polyAdd(polyScale(k, q_ratio - r_ratio), [] {
    Poly p;
    p.deg = 2;
    p.c[0] = -1.0;
    p.c[2] = 1.0;
    return p;
  }());
  // denominator D(v) = 2 (v cos_a - cos_g)
  Poly denominator;
  denominator.deg = 1;
  denominator.c[0] = -2.0 * cos_g;
  denominator.c[1] = 2.0 * cos_a;

  // Constraint (from u^2 - 2 u cos_g + 1 - Q k(v) = 0, cleared of D^2):
  // N^2 - 2 cos_g N D + (1 - Q k) D^2 = 0.
  const Poly d2 = polyMul(denominator, denominator);
  Poly quartic = polyMul(numerator, numerator);
  quartic = polyAdd(quartic, polyScale(polyMul(numerator, denominator), -2.0 * cos_g));
  Poly one_minus_qk = polyAdd(Poly::constant(1.0), polyScale(k, -q_ratio));
  quartic = polyAdd(quartic, polyMul(one_minus_qk, d2));

  for (const double v : realRoots(quartic)) {
    if (v <= 0.0) continue;
    const double denom = polyEval(denominator, v);
    if (std::abs(denom) < 1e-12) continue;
    const double u = polyEval(numerator, v) / denom;
    if (u <= 0.0) continue;
    const double k_v = 1.0 + v * v - 2.0 * v * cos_b;
    if (k_v <= 0.0) continue;
    const double s1 = std::sqrt(b2 / k_v);
    const double s2 = u * s1;
    const double s3 = v * s1;
    if (!(s1 > 0.0 && s2 > 0.0 && s3 > 0.0)) continue;

    const Eigen::Vector3d cam_points[3] = {s1 * f1, s2 * f2, s3 * f3};
    const HornResult align = hornAlign(std::span<const Eigen::Vector3d>(points, 3),
                                       std::span<const Eigen::Vector3d>(cam_points, 3));
    if (align.degenerate) continue;
    // align.T_B_A maps world points into the camera frame, i.e. T_C_W.
    solutions.push_back(align.T_B_A.inverse());
  }
  return solutions;
}

}  // namespace atlas
