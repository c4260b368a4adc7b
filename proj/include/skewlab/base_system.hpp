#pragma once

#include "skewlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace skewlab {

struct BaseError : Error {
  enum class Kind {
    bad_input,
    not_unimodular,
    not_hyperbolic,
    orientation_reversed
  };
  Kind kind;
  BaseError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
};

// Hyperbolic toral automorphism with simple positive real spectrum. The
// eigenframe is the working coordinate system for every derivative in the
// library: the derivative of the map is exactly diag(eig) there, and the
// frame metric (frame columns declared orthonormal) is the metric all cone
// and rate computations use.
struct LinearAnosov {
  MatrixXd A, A_inv;
  VectorXd eig;             // ascending, all positive, none equal to 1
  MatrixXd frame, frame_inv;  // columns: unit eigenvectors, ascending rate
  int stable_count = 0;

  int dim() const { return static_cast<int>(eig.size()); }
};

inline LinearAnosov make_linear_anosov(const MatrixXd& entries) {
  const int n = static_cast<int>(entries.rows());
  if (entries.cols() != n || n < 2)
    throw BaseError(BaseError::Kind::bad_input,
                    "base matrix must be square with dimension at least 2");
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (std::abs(entries(i, j) - std::round(entries(i, j))) > 1e-12)
        throw BaseError(BaseError::Kind::bad_input,
                        "base matrix entries must be integers");

  double det = entries.determinant();
  if (std::abs(std::abs(det) - 1.0) > 1e-9)
    throw BaseError(BaseError::Kind::not_unimodular,
                    "base matrix determinant is " + fmt_g17(det) +
                    "; it must be +1 or -1 to act on the torus invertibly");

  Eigen::EigenSolver<MatrixXd> solver(entries);
  for (int i = 0; i < n; ++i)
    if (std::abs(solver.eigenvalues()[i].imag()) > 1e-9)
      throw BaseError(BaseError::Kind::not_hyperbolic,
                      "base matrix has a complex eigenvalue pair; the "
                      "construction needs real simple spectrum");

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    return std::abs(solver.eigenvalues()[i].real()) <
           std::abs(solver.eigenvalues()[j].real());
  });

  LinearAnosov out;
  out.A = entries;
  out.A_inv = entries.inverse();
  out.eig.resize(n);
  out.frame.resize(n, n);
  for (int i = 0; i < n; ++i) {
    double value = solver.eigenvalues()[order[i]].real();
    if (std::abs(std::abs(value) - 1.0) < 1e-9)
      throw BaseError(BaseError::Kind::not_hyperbolic,
                      "base matrix has an eigenvalue on the unit circle");
    if (value <= 0.0)
      throw BaseError(BaseError::Kind::orientation_reversed,
                      "base matrix eigenvalue " + fmt_g17(value) +
                      " is negative; the fiber construction needs every "
                      "invariant line preserved with its orientation");
    out.eig[i] = value;

    VectorXd v = solver.eigenvectors().col(order[i]).real();
    double imag_part = solver.eigenvectors().col(order[i]).imag().norm();
    if (imag_part > 1e-9)
      throw BaseError(BaseError::Kind::not_hyperbolic,
                      "base matrix eigenvector is not real");
    int lead = 0;
    for (int j = 1; j < n; ++j)
      if (std::abs(v[j]) > std::abs(v[lead])) lead = j;
    if (v[lead] < 0.0) v = -v;
    out.frame.col(i) = v / v.norm();
  }

  for (int i = 0; i + 1 < n; ++i)
    if (out.eig[i + 1] - out.eig[i] < 1e-8 * out.eig[i + 1])
      throw BaseError(BaseError::Kind::not_hyperbolic,
                      "base matrix spectrum is not simple");

  out.stable_count = 0;
  while (out.stable_count < n && out.eig[out.stable_count] < 1.0)
    ++out.stable_count;
  if (out.stable_count == 0 || out.stable_count == n)
    throw BaseError(BaseError::Kind::not_hyperbolic,
                    "base matrix needs at least one contracting and one "
                    "expanding eigenvalue");
  out.frame_inv = out.frame.inverse();
  return out;
}

inline MatrixXd int_matrix(std::initializer_list<std::initializer_list<double>> rows) {
  int n = static_cast<int>(rows.size());
  MatrixXd m(n, static_cast<int>(rows.begin()->size()));
  int i = 0;
  for (const auto& row : rows) {
    int j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

inline LinearAnosov cat_map() {
  return make_linear_anosov(int_matrix({{2, 1}, {1, 1}}));
}

// Companion matrices of x^3 - t x^2 + s x - 1: determinant one with three
// positive real roots for the right (t, s). (6, 5) gives two roots inside
// the unit interval, (5, 6) gives one.
inline LinearAnosov t3_two_stable() {
  return make_linear_anosov(int_matrix({{0, 0, 1}, {1, 0, -5}, {0, 1, 6}}));
}

inline LinearAnosov t3_one_stable() {
  return make_linear_anosov(int_matrix({{0, 0, 1}, {1, 0, -6}, {0, 1, 5}}));
}

// Unit-roof suspension of a 2x2 automorphism, carried in an adapted frame:
// the stable and unstable sections are scaled by mu_s^{-s} and mu_u^{-s}
// so that crossing the roof is the identity on frame coordinates. In this
// frame the time-t map of the flow is exactly diag(mu_s^t, 1, mu_u^t).
// Frame axis order is (stable section, flow direction, unstable section).
struct SuspensionFlow {
  LinearAnosov fiber;
  double mu_s = 0.0, mu_u = 0.0;
  double L = 0.0;  // ln(mu_u) = -ln(mu_s) when the fiber map is unimodular

  double beta(double s) const { return std::pow(mu_s, -s); }
  double beta_u(double s) const { return std::pow(mu_u, -s); }
};

inline SuspensionFlow make_suspension(const MatrixXd& fiber_entries) {
  SuspensionFlow flow;
  flow.fiber = make_linear_anosov(fiber_entries);
  if (flow.fiber.dim() != 2)
    throw BaseError(BaseError::Kind::bad_input,
                    "suspension fiber map must be 2x2");
  flow.mu_s = flow.fiber.eig[0];
  flow.mu_u = flow.fiber.eig[1];
  flow.L = std::log(flow.mu_u);
  return flow;
}

enum class BaseKind { toral, suspension };

// A point of the base manifold. Toral mode: x holds torus coordinates in
// [0,1)^m and s is unused. Suspension mode: x holds the 2-torus fiber
// coordinates and s in [0,1) is the roof coordinate.
struct BasePoint {
  VectorXd x;
  double s = 0.0;
};

// Uniform interface over both base models. Everything tangent is expressed
// in frame coordinates with the frame declared orthonormal; `rates` lists
// the per-axis one-step rates of the reference map g in ascending order
// (toral: the eigenvalues; suspension: (mu_s^N, 1, mu_u^N) for g = time-N).
class BaseSystem {
public:
  BaseKind kind = BaseKind::toral;
  LinearAnosov lin;
  SuspensionFlow susp;
  int flow_steps = 0;  // suspension only: g is the time-N map, N = flow_steps

  int dim() const { return kind == BaseKind::toral ? lin.dim() : 3; }

  int stable_count() const {
    return kind == BaseKind::toral ? lin.stable_count : 1;
  }

  int unstable_count() const {
    return kind == BaseKind::toral ? dim() - lin.stable_count : 1;
  }

  VectorXd rates() const {
    if (kind == BaseKind::toral) return lin.eig;
    VectorXd r(3);
    r << std::pow(susp.mu_s, flow_steps), 1.0, std::pow(susp.mu_u, flow_steps);
    return r;
  }

  // Derivative of g_t = sigma_t o g in frame coordinates, where sigma is the
  // flow of the translation field eps * X. Toral translations have identity
  // derivative; the suspension field's stable section varies with the roof
  // coordinate, contributing one shear entry t * eps * ln(mu_u).
  MatrixXd dg_t(double t, double eps) const {
    int n = dim();
    MatrixXd m = MatrixXd::Zero(n, n);
    VectorXd r = rates();
    for (int i = 0; i < n; ++i) m(i, i) = r[i];
    if (kind == BaseKind::suspension) m(0, 1) = t * eps * susp.L;
    return m;
  }

  MatrixXd dg() const { return dg_t(0.0, 0.0); }

  // Derivative of the time-r flow map (suspension only).
  MatrixXd dflow(double r) const {
    if (kind != BaseKind::suspension)
      throw Error("dflow: only defined for the suspension base");
    Eigen::Vector3d d(std::pow(susp.mu_s, r), 1.0, std::pow(susp.mu_u, r));
    return d.asDiagonal();
  }

  BasePoint wrap(BasePoint p) const {
    for (int i = 0; i < p.x.size(); ++i) p.x[i] = wrap_unit(p.x[i]);
    return p;
  }

  BasePoint apply_flow(BasePoint p, double t) const {
    if (kind != BaseKind::suspension)
      throw Error("apply_flow: only defined for the suspension base");
    double s = p.s + t;
    double k = std::floor(s);
    p.s = s - k;
    if (p.s >= 1.0) {  // guard against floor rounding at the roof
      p.s -= 1.0;
      k += 1.0;
    }
    int crossings = static_cast<int>(k);
    const MatrixXd& step =
        crossings >= 0 ? susp.fiber.A : susp.fiber.A_inv;
    for (int i = 0; i < std::abs(crossings); ++i) p.x = step * p.x;
    return wrap(p);
  }

  BasePoint apply_g(BasePoint p) const {
    if (kind == BaseKind::toral) {
      p.x = lin.A * p.x;
      return wrap(p);
    }
    return apply_flow(p, static_cast<double>(flow_steps));
  }

  BasePoint apply_g_inverse(BasePoint p) const {
    if (kind == BaseKind::toral) {
      p.x = lin.A_inv * p.x;
      return wrap(p);
    }
    return apply_flow(p, -static_cast<double>(flow_steps));
  }

  // Frame tangent coefficients to raw tangent (dx..., ds appended in
  // suspension mode), evaluated at p: the suspension frame scales with the
  // roof coordinate, the toral frame is position independent.
  VectorXd frame_to_raw(const BasePoint& p, const VectorXd& coeffs) const {
    if (kind == BaseKind::toral) return lin.frame * coeffs;
    VectorXd raw(3);
    raw.head(2) = coeffs[0] * susp.beta(p.s) * susp.fiber.frame.col(0) +
                  coeffs[2] * susp.beta_u(p.s) * susp.fiber.frame.col(1);
    raw[2] = coeffs[1];
    return raw;
  }

  VectorXd raw_to_frame(const BasePoint& p, const VectorXd& raw) const {
    if (kind == BaseKind::toral) return lin.frame_inv * raw;
    Eigen::Vector2d fiber_part = susp.fiber.frame_inv * raw.head(2);
    VectorXd coeffs(3);
    coeffs[0] = fiber_part[0] / susp.beta(p.s);
    coeffs[1] = raw[2];
    coeffs[2] = fiber_part[1] / susp.beta_u(p.s);
    return coeffs;
  }

  // Translation by t along the field eps * X, where X is x_frame in frame
  // coordinates (toral) or the stable section scaled by beta(s) (suspension,
  // x_frame must be the first axis).
  BasePoint apply_sigma(BasePoint p, double t, double eps,
                        const VectorXd& x_frame) const {
    if (kind == BaseKind::toral) {
      p.x += t * eps * (lin.frame * x_frame);
      return wrap(p);
    }
    p.x += t * eps * x_frame[0] * susp.beta(p.s) * susp.fiber.frame.col(0);
    return wrap(p);
  }
};

inline BaseSystem make_toral_base(const MatrixXd& entries) {
  BaseSystem b;
  b.kind = BaseKind::toral;
  b.lin = make_linear_anosov(entries);
  return b;
}

inline BaseSystem make_suspension_base(const MatrixXd& fiber_entries, int N) {
  if (N < 1)
    throw BaseError(BaseError::Kind::bad_input,
                    "suspension return time N must be a positive integer");
  BaseSystem b;
  b.kind = BaseKind::suspension;
  b.susp = make_suspension(fiber_entries);
  b.lin = b.susp.fiber;
  b.flow_steps = N;
  return b;
}

}  // namespace skewlab
