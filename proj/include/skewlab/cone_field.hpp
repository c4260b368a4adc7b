#pragma once

#include "skewlab/base_system.hpp"
#include "skewlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace skewlab {

struct ConeError : Error {
  enum class Kind { aperture_too_wide, not_transverse, no_power_found, cannot_rescale };
  Kind kind;
  ConeError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
};

// Cone family with constant coefficients in the base frame. Membership is
// q_min(v) >= 0, the worst value over the stored quadratic forms: one form
// gives the classical family {Q >= 0}, several forms give the intersection
// of their families. A nonzero sign_form marks an oriented family whose two
// components are separated by the sign of sign_form . v; the plus component
// is sign_form . v > 0.
struct ConeField {
  std::string name;
  std::vector<MatrixXd> forms;
  VectorXd sign_form;

  int dim() const { return forms.empty() ? 0 : static_cast<int>(forms[0].rows()); }
  bool oriented() const { return sign_form.size() > 0; }

  double q_min(const VectorXd& v) const {
    double m = std::numeric_limits<double>::infinity();
    for (const MatrixXd& q : forms) m = std::min(m, v.dot(q * v));
    return m;
  }
  bool contains(const VectorXd& v) const { return q_min(v) >= 0.0; }
  bool contains_plus(const VectorXd& v) const {
    return q_min(v) >= 0.0 && (!oriented() || sign_form.dot(v) > 0.0);
  }
};

inline ConeField make_quadric_cone(std::string name, MatrixXd q, int sign_axis = -1) {
  ConeField c;
  c.name = std::move(name);
  c.forms.push_back(0.5 * (q + q.transpose()));
  if (sign_axis >= 0) {
    c.sign_form = VectorXd::Zero(q.rows());
    c.sign_form[sign_axis] = 1.0;
  }
  return c;
}

// Image cone under an invertible linear map: {v : Q(v) >= 0} maps to
// {w : Q(L^{-1} w) >= 0}, so every form conjugates by L^{-1} and the sign
// functional pulls back the same way.
inline ConeField pushforward_cone(const ConeField& cone, const MatrixXd& map,
                                  std::string name) {
  MatrixXd inv = map.inverse();
  ConeField out;
  out.name = std::move(name);
  for (const MatrixXd& q : cone.forms) {
    MatrixXd m = inv.transpose() * q * inv;
    out.forms.push_back(0.5 * (m + m.transpose()));
  }
  if (cone.oriented()) out.sign_form = inv.transpose() * cone.sign_form;
  return out;
}

// Closure of the complement, which for a single quadratic form is the
// family of the negated form.
inline ConeField dual_cone(const ConeField& cone, std::string name) {
  if (cone.forms.size() != 1)
    throw Error("dual of a multi-form cone family is not a quadric cone");
  ConeField out;
  out.name = std::move(name);
  out.forms.push_back(-cone.forms[0]);
  return out;
}

struct ConeSamples {
  std::vector<VectorXd> boundary;
  std::vector<VectorXd> interior;
};

inline int default_directions(int dim) { return dim <= 3 ? 64 : 256; }

namespace detail {

inline VectorXd unit_in_span(Rng& rng, const MatrixXd& basis) {
  VectorXd coeff = rng.gaussian_vector(static_cast<int>(basis.cols()));
  VectorXd v = basis * coeff;
  double n = v.norm();
  if (n < 1e-300) {
    v = basis.col(0);
    n = v.norm();
  }
  return v / n;
}

// Boundary of a single-form cone: split the form's eigenbasis into the
// positive part P and the rest N; for unit p in span P and n in span N the
// value Q(cos t p + sin t n) = cos^2 t Q(p) + sin^2 t Q(n) vanishes at
// tan^2 t* = Q(p) / -Q(n), giving exact boundary points. Axis pairs are
// included so that diagonal forms get their extremal directions exactly.
inline ConeSamples sample_single_form(const ConeField& cone, int directions,
                                      uint64_t seed) {
  const MatrixXd& q = cone.forms[0];
  int n = cone.dim();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(q);
  double scale = std::max(std::abs(es.eigenvalues()[0]),
                          std::abs(es.eigenvalues()[n - 1]));
  double tol = 1e-13 * scale;
  std::vector<int> pos, rest;
  for (int i = 0; i < n; ++i)
    (es.eigenvalues()[i] > tol ? pos : rest).push_back(i);

  if (pos.empty()) throw Error("cone family " + cone.name + " has empty interior");
  ConeSamples out;
  MatrixXd pb(n, static_cast<int>(pos.size()));
  for (size_t i = 0; i < pos.size(); ++i)
    pb.col(static_cast<int>(i)) = es.eigenvectors().col(pos[i]);
  MatrixXd nb(n, static_cast<int>(std::max<std::size_t>(rest.size(), 1)));
  for (size_t i = 0; i < rest.size(); ++i)
    nb.col(static_cast<int>(i)) = es.eigenvectors().col(rest[i]);

  auto orient = [&](VectorXd v) {
    if (cone.oriented() && cone.sign_form.dot(v) < 0.0) v = -v;
    return v;
  };

  auto emit = [&](const VectorXd& p, const VectorXd& nn) {
    double qp = p.dot(q * p);
    double qn = -nn.dot(q * nn);
    double tstar = qn <= tol ? 0.5 * M_PI : std::atan(std::sqrt(qp / qn));
    out.boundary.push_back(orient(std::cos(tstar) * p + std::sin(tstar) * nn));
    for (double f : {0.25, 0.5, 0.75})
      out.interior.push_back(
          orient(std::cos(f * tstar) * p + std::sin(f * tstar) * nn));
  };

  for (size_t i = 0; i < pos.size(); ++i) {
    out.interior.push_back(orient(pb.col(i)));
    for (size_t j = 0; j < rest.size(); ++j) emit(pb.col(i), nb.col(j));
  }
  if (!rest.empty()) {
    Rng rng(derive_seed(seed, 0x51));
    for (int k = 0; k < directions; ++k)
      emit(unit_in_span(rng, pb), unit_in_span(rng, nb));
  }
  return out;
}

// Boundary of a multi-form cone: walk from an interior axis toward a random
// orthogonal direction and bisect the first exit of q_min >= 0. The families
// built here are star-shaped around their axis, so this sweeps the whole
// boundary sphere.
inline ConeSamples sample_multi_form(const ConeField& cone, int directions,
                                     uint64_t seed) {
  if (!cone.oriented())
    throw Error("multi-form cone family " + cone.name + " needs a sign axis to sample");
  int n = cone.dim();
  VectorXd axis = cone.sign_form.normalized();
  if (!(cone.q_min(axis) > 0.0))
    throw Error("sign axis of " + cone.name + " is not interior");
  ConeSamples out;
  out.interior.push_back(axis);
  Rng rng(derive_seed(seed, 0x52));
  for (int k = 0; k < directions; ++k) {
    VectorXd w = rng.gaussian_vector(n);
    w -= axis.dot(w) * axis;
    double wn = w.norm();
    if (wn < 1e-12) continue;
    w /= wn;
    auto ray = [&](double alpha) { return std::cos(alpha) * axis + std::sin(alpha) * w; };
    double lo = 0.0, hi = 0.5 * M_PI;
    if (cone.q_min(ray(hi)) >= 0.0) {
      out.interior.push_back(ray(hi));
      continue;
    }
    int grid = 64;
    for (int i = 1; i <= grid; ++i) {
      double alpha = 0.5 * M_PI * i / grid;
      if (cone.q_min(ray(alpha)) < 0.0) {
        hi = alpha;
        lo = 0.5 * M_PI * (i - 1) / grid;
        break;
      }
    }
    for (int it = 0; it < 60; ++it) {
      double mid = 0.5 * (lo + hi);
      (cone.q_min(ray(mid)) >= 0.0 ? lo : hi) = mid;
    }
    out.boundary.push_back(ray(lo));
    for (double f : {0.25, 0.5, 0.75}) out.interior.push_back(ray(f * lo));
  }
  return out;
}

}  // namespace detail

inline ConeSamples sample_cone(const ConeField& cone, int directions, uint64_t seed) {
  return cone.forms.size() == 1 ? detail::sample_single_form(cone, directions, seed)
                                : detail::sample_multi_form(cone, directions, seed);
}

// Strict-inclusion margin: minimum of dst's membership value over mapped
// unit samples of src. A positive value certifies map(src) inside dst at the
// sampled resolution; the caller decides what floor to demand. For oriented
// dst the mapped vector must also land in the plus component whenever src is
// oriented, and a sign failure dominates the margin.
inline double check_inclusion(const ConeField& src, const ConeField& dst,
                              const MatrixXd& map, int directions, uint64_t seed) {
  ConeSamples s = sample_cone(src, directions, seed);
  std::vector<VectorXd> all;
  all.reserve(s.boundary.size() + s.interior.size());
  for (auto& v : s.boundary) all.push_back(v);
  for (auto& v : s.interior) all.push_back(v);

  std::vector<double> mins(all.size());
  parallel_for(static_cast<int>(all.size()), [&](int i) {
    VectorXd w = map * all[i];
    double m = dst.q_min(w);
    if (src.oriented() && dst.oriented()) {
      double sgn = dst.sign_form.dot(w);
      if (sgn <= 0.0) m = std::min(m, sgn);
    }
    mins[i] = m;
  });
  double margin = std::numeric_limits<double>::infinity();
  for (double m : mins) margin = std::min(margin, m);
  return margin;
}

using MarginRows = std::vector<std::pair<std::string, double>>;

struct StandardCones {
  ConeField A, B, C, U;
  double aperture = 0.0;
  MarginRows margins;
};

// Cone families for a base with a dominated splitting, in the eigenframe
// metric: A is the cone of half-angle atan(aperture) around the stable
// directions, B = Dg^2(A), C = Dg(B*), and U is the aperture cone around the
// unstable directions transverse to everything with rate <= 1. The time-zero
// inclusions are certified on sampled directions before returning.
inline StandardCones build_standard_cones(const BaseSystem& base,
                                          double aperture = 0.5,
                                          double margin_floor = 0.0,
                                          int directions = 0,
                                          uint64_t seed = 0x5EED) {
  int n = base.dim();
  int s0 = base.stable_count();
  if (directions <= 0) directions = default_directions(n);
  VectorXd r = base.rates();

  MatrixXd qa = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) qa(i, i) = i < s0 ? aperture * aperture : -1.0;
  MatrixXd qu = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) qu(i, i) = r[i] > 1.0 ? aperture * aperture : -1.0;

  MatrixXd dg = base.dg();
  StandardCones sc;
  sc.aperture = aperture;
  // Only a one dimensional stable part splits A minus zero into two
  // components; with more stable directions the cone is connected and
  // carries no orientation.
  sc.A = make_quadric_cone("A", qa, s0 == 1 ? 0 : -1);
  sc.B = pushforward_cone(sc.A, dg * dg, "B");
  sc.C = pushforward_cone(dual_cone(sc.B, "B*"), dg, "C");
  sc.U = make_quadric_cone("U", qu);

  MatrixXd dg_inv = dg.inverse();
  sc.margins = {
      {"A in Dg(A)", check_inclusion(sc.A, sc.A, dg_inv, directions, derive_seed(seed, 1))},
      {"Dg(A) in B", check_inclusion(sc.A, sc.B, dg, directions, derive_seed(seed, 2))},
      {"B in Dg(B)", check_inclusion(sc.B, sc.B, dg_inv, directions, derive_seed(seed, 3))},
      {"Dg(C) in C", check_inclusion(sc.C, sc.C, dg, directions, derive_seed(seed, 4))},
      {"Dg(U) in U", check_inclusion(sc.U, sc.U, dg, directions, derive_seed(seed, 5))},
  };
  double axis_min = std::numeric_limits<double>::infinity();
  for (int i = 0; i < s0; ++i)
    axis_min = std::min(axis_min, sc.A.q_min(VectorXd::Unit(n, i)));
  sc.margins.emplace_back("stable axes in A", axis_min);

  for (const auto& [label, m] : sc.margins)
    if (!(m > margin_floor))
      throw ConeError(ConeError::Kind::aperture_too_wide,
                      "inclusion " + label + " has margin " + fmt_g17(m) +
                          " at or below the floor " + fmt_g17(margin_floor) +
                          "; narrow the aperture");
  return sc;
}

// Maximum membership value of the two-form intersection over the hyperplane
// transverse to the weak-stable axis. A negative maximum (positive returned
// margin) certifies that the intersection meets that hyperplane only at 0.
inline double max_q_min_off_axis(const MatrixXd& qb, const MatrixXd& qe, int ws,
                                 int directions, uint64_t seed) {
  int n = static_cast<int>(qb.rows());
  auto value = [&](const VectorXd& v) {
    return std::min(v.dot(qb * v), v.dot(qe * v));
  };
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    if (i == ws) continue;
    best = std::max(best, value(VectorXd::Unit(n, i)));
    for (int j = i + 1; j < n; ++j) {
      if (j == ws) continue;
      for (int k = 0; k <= 64; ++k) {
        double t = M_PI * k / 64.0;
        VectorXd v = std::cos(t) * VectorXd::Unit(n, i) + std::sin(t) * VectorXd::Unit(n, j);
        best = std::max(best, value(v));
      }
    }
  }
  Rng rng(derive_seed(seed, 0x53));
  for (int k = 0; k < directions; ++k) {
    VectorXd v = rng.gaussian_vector(n);
    v[ws] = 0.0;
    double norm = v.norm();
    if (norm < 1e-12) continue;
    best = std::max(best, value(v / norm));
  }
  return best;
}

struct GivenXCones {
  ConeField A, B, E, C, U;
  ConeField A_plus, B_plus;
  double C_const = 0.0;
  double ratio_x = 0.0, ratio_pullback = 0.0;
  int power = 0;
  double power_margin = 0.0;
  double zero_margin = 0.0;          // repaired cross-factor 1/2
  double zero_margin_literal = 0.0;  // stated cross-factor 2, recorded as-is
  double x_in_B = 0.0, x_pullback_in_E = 0.0, x_in_A_stated = 0.0;
  MarginRows margins;
};

// Smallest n >= 1 such that sums u + v, with u a unit vector of B cap E and
// v in Dg^n(B*) of norm at most 1, keep their component transverse to the
// strong-stable subspace above the floor. With no strong-stable directions
// the obstruction is empty and n = 1 with the complement cone Dg(B*).
inline int find_C_power(const BaseSystem& base, const ConeField& B,
                        const ConeField& E, double floor, int cap,
                        int directions, uint64_t seed, double* achieved,
                        ConeField* complement) {
  int n = base.dim();
  int s0 = base.stable_count();
  int ss_count = s0 - 1;
  MatrixXd dg = base.dg();

  int ws = s0 - 1;
  ConeField both;
  both.name = "B and E";
  both.forms = {B.forms[0], E.forms[0]};
  both.sign_form = VectorXd::Unit(n, ws);
  ConeSamples us = sample_cone(both, directions, derive_seed(seed, 11));
  std::vector<VectorXd> u_all;
  for (auto& v : us.boundary) {
    u_all.push_back(v);
    u_all.push_back(-v);
  }
  for (auto& v : us.interior) {
    u_all.push_back(v);
    u_all.push_back(-v);
  }

  auto off_ss = [&](const VectorXd& v) {
    double s = 0.0;
    for (int i = ss_count; i < n; ++i) s += v[i] * v[i];
    return std::sqrt(s);
  };

  MatrixXd dgn = MatrixXd::Identity(n, n);
  for (int p = 1; p <= cap; ++p) {
    dgn = dg * dgn;
    ConeField comp = pushforward_cone(dual_cone(B, "B*"), dgn, "C");
    ConeSamples vs = sample_cone(comp, directions, derive_seed(seed, 100 + p));
    std::vector<VectorXd> v_all;
    for (auto& v : vs.boundary) v_all.push_back(v);
    for (auto& v : vs.interior) v_all.push_back(v);

    if (ss_count == 0) {
      double margin = std::numeric_limits<double>::infinity();
      for (const VectorXd& u : u_all) {
        if (!(u[ws] > 0.0)) continue;
        for (const VectorXd& v : v_all)
          for (double s : {0.25, 0.5, 0.75, 1.0})
            margin = std::min(margin, (u + s * v).norm());
      }
      if (achieved) *achieved = margin;
      if (complement) *complement = comp;
      return 1;
    }

    std::vector<double> mins(u_all.size());
    parallel_for(static_cast<int>(u_all.size()), [&](int i) {
      double m = std::numeric_limits<double>::infinity();
      for (const VectorXd& v : v_all)
        for (double s : {0.25, 0.5, 0.75, 1.0})
          m = std::min(m, off_ss(u_all[i] + s * v));
      mins[i] = m;
    });
    double margin = std::numeric_limits<double>::infinity();
    for (double m : mins) margin = std::min(margin, m);
    if (margin > floor) {
      if (achieved) *achieved = margin;
      if (complement) *complement = comp;
      return p;
    }
  }
  throw ConeError(ConeError::Kind::no_power_found,
                  "no power up to " + std::to_string(cap) +
                      " keeps the sampled sums away from the strong-stable "
                      "subspace at floor " + fmt_g17(floor));
}

// Minimum over sampled members of the signed family of the negated
// complement-cone value: positive means the two families only meet at 0.
inline double disjoint_margin(const ConeField& half, const ConeField& comp,
                              int directions, uint64_t seed) {
  ConeSamples s = sample_cone(half, directions, seed);
  double margin = std::numeric_limits<double>::infinity();
  for (const std::vector<VectorXd>* set : {&s.boundary, &s.interior})
    for (const VectorXd& v : *set) margin = std::min(margin, -comp.q_min(v));
  return margin;
}

struct GivenXOptions {
  double c_floor = 0.01;
  double inflate = 1.1;
  double power_floor = 0.05;
  int power_cap = 20;
  double aperture = 0.5;
  int directions = 0;
  uint64_t seed = 0x5EED;
};

// Cone families bootstrapped from a stable vector field X: the constant
// C bounds (|v_ss|^2 + |v_cu|^2) / |v_ws|^2 over samples of X and of
// Dg^{-2} X, inflated by 10%. The families
//   B: |v_cu|^2 <= C |v_ws|^2 + (1/2) |v_ss|^2
//   E: |v_ss|^2 <= C |v_ws|^2 + (1/2) |v_cu|^2
// use cross-factor 1/2 so that membership of both forces, on the
// ws-transverse hyperplane, |v_cu|^2 <= |v_ss|^2 / 2 <= |v_cu|^2 / 4 and
// hence v = 0. The stated cross-factor 2 admits nonzero solutions there
// (equal strong-stable and center-unstable parts satisfy both), so its
// margin is computed and recorded but not demanded. A = Dg^{-2}(B), the
// signed halves are the components of A cap Dg(E) and B cap E, and the
// complement cone C comes from find_C_power.
inline GivenXCones build_cones_given_X(const BaseSystem& base,
                                       const std::vector<VectorXd>& x_samples,
                                       const GivenXOptions& opt = {}) {
  int n = base.dim();
  int s0 = base.stable_count();
  if (s0 < 1 || x_samples.empty())
    throw Error("given-X cones need a stable direction and at least one X sample");
  int ws = s0 - 1;
  int directions = opt.directions > 0 ? opt.directions : default_directions(n);
  MatrixXd dg = base.dg();
  MatrixXd dg_inv2 = (dg * dg).inverse();

  auto ratio = [&](const VectorXd& v) {
    double wsq = v[ws] * v[ws];
    if (!(wsq > 1e-24 * v.squaredNorm()))
      throw ConeError(ConeError::Kind::not_transverse,
                      "X sample has no weak-stable component: " + fmt_g17(v.norm()));
    return (v.squaredNorm() - wsq) / wsq;
  };

  GivenXCones gx;
  for (const VectorXd& x : x_samples) {
    gx.ratio_x = std::max(gx.ratio_x, ratio(x));
    gx.ratio_pullback = std::max(gx.ratio_pullback, ratio(dg_inv2 * x));
  }
  gx.C_const = std::max(opt.inflate * std::max(gx.ratio_x, gx.ratio_pullback),
                        opt.c_floor);

  auto family = [&](double ss_coeff, double cu_coeff) {
    MatrixXd q = MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
      q(i, i) = i == ws ? gx.C_const : (i < ws ? ss_coeff : cu_coeff);
    return q;
  };
  MatrixXd qb = family(0.5, -1.0);
  MatrixXd qe = family(-1.0, 0.5);
  gx.B = make_quadric_cone("B", qb);
  gx.E = make_quadric_cone("E", qe);
  gx.A = pushforward_cone(gx.B, dg_inv2, "A");

  gx.B_plus.name = "B+";
  gx.B_plus.forms = {gx.B.forms[0], gx.E.forms[0]};
  gx.B_plus.sign_form = VectorXd::Unit(n, ws);

  ConeField dgE = pushforward_cone(gx.E, dg, "Dg(E)");
  gx.A_plus.name = "A+";
  gx.A_plus.forms = {gx.A.forms[0], dgE.forms[0]};
  gx.A_plus.sign_form = VectorXd::Unit(n, ws);

  gx.zero_margin =
      -max_q_min_off_axis(qb, qe, ws, directions, derive_seed(opt.seed, 21));
  gx.zero_margin_literal = -max_q_min_off_axis(family(2.0, -1.0), family(-1.0, 2.0),
                                               ws, directions, derive_seed(opt.seed, 22));

  gx.x_in_B = std::numeric_limits<double>::infinity();
  gx.x_pullback_in_E = std::numeric_limits<double>::infinity();
  gx.x_in_A_stated = std::numeric_limits<double>::infinity();
  for (const VectorXd& x : x_samples) {
    VectorXd xu = x.normalized();
    gx.x_in_B = std::min(gx.x_in_B, gx.B.q_min(xu));
    gx.x_pullback_in_E = std::min(gx.x_pullback_in_E, gx.E.q_min((dg_inv2 * x).normalized()));
    gx.x_in_A_stated = std::min(gx.x_in_A_stated, gx.A.q_min(xu));
  }

  gx.power = find_C_power(base, gx.B, gx.E, opt.power_floor, opt.power_cap,
                          directions, derive_seed(opt.seed, 23), &gx.power_margin,
                          &gx.C);

  VectorXd r = base.rates();
  MatrixXd qu = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    qu(i, i) = r[i] > 1.0 ? opt.aperture * opt.aperture : -1.0;
  gx.U = make_quadric_cone("U", qu);

  MatrixXd dg_inv = dg.inverse();
  MatrixXd ident = MatrixXd::Identity(n, n);
  gx.margins = {
      {"A in Dg(A)", check_inclusion(gx.A, gx.A, dg_inv, directions, derive_seed(opt.seed, 31))},
      {"Dg(A) in B", check_inclusion(gx.A, gx.B, dg, directions, derive_seed(opt.seed, 32))},
      {"B in Dg(B)", check_inclusion(gx.B, gx.B, dg_inv, directions, derive_seed(opt.seed, 33))},
      {"Dg(E) in E", check_inclusion(gx.E, gx.E, dg, directions, derive_seed(opt.seed, 34))},
      {"Dg(C) in C", check_inclusion(gx.C, gx.C, dg, directions, derive_seed(opt.seed, 35))},
      {"Dg(U) in U", check_inclusion(gx.U, gx.U, dg, directions, derive_seed(opt.seed, 36))},
      {"A+ in B+", check_inclusion(gx.A_plus, gx.B_plus, ident, directions, derive_seed(opt.seed, 37))},
      {"Dg(A+) in B+", check_inclusion(gx.A_plus, gx.B_plus, dg, directions, derive_seed(opt.seed, 38))},
      {"B+ and C disjoint", disjoint_margin(gx.B_plus, gx.C, directions, derive_seed(opt.seed, 39))},
      {"zero intersection off ws-axis", gx.zero_margin},
  };
  for (const auto& [label, m] : gx.margins)
    if (!(m > 0.0))
      throw ConeError(ConeError::Kind::aperture_too_wide,
                      "inclusion " + label + " has margin " + fmt_g17(m));
  return gx;
}

struct InclusionSpec {
  const ConeField* src;
  const ConeField* dst;
  bool forward;  // true: margin of Dg_t(src) in dst; false: src in Dg_t(dst)
  std::string label;
};

inline std::vector<InclusionSpec> standard_inclusion_specs(const StandardCones& sc) {
  return {
      {&sc.A, &sc.A, false, "A in Dgt(A)"},
      {&sc.A, &sc.B, true, "Dgt(A) in B"},
      {&sc.B, &sc.B, false, "B in Dgt(B)"},
      {&sc.C, &sc.C, true, "Dgt(C) in C"},
      {&sc.U, &sc.U, true, "Dgt(U) in U"},
  };
}

inline std::vector<InclusionSpec> given_x_inclusion_specs(const GivenXCones& gx) {
  return {
      {&gx.A, &gx.A, false, "A in Dgt(A)"},
      {&gx.A, &gx.B, true, "Dgt(A) in B"},
      {&gx.B, &gx.B, false, "B in Dgt(B)"},
      {&gx.E, &gx.E, true, "Dgt(E) in E"},
      {&gx.C, &gx.C, true, "Dgt(C) in C"},
      {&gx.U, &gx.U, true, "Dgt(U) in U"},
  };
}

struct RescaleRow {
  std::string label;
  double t = 0.0;
  double margin = 0.0;
};

struct RescaleResult {
  double eps = 0.0;
  int halvings = 0;
  double worst_margin = 0.0;
  std::vector<RescaleRow> rows;
};

// Halve eps until every inclusion holds for the perturbed derivative Dg_t,
// t on a symmetric grid, with margin at or above the floor. The grid covers
// |t| <= t_max so towers that accumulate shear time across several fiber
// circles can pass their full range.
inline RescaleResult rescale_X_epsilon(const BaseSystem& base,
                                       const std::vector<InclusionSpec>& specs,
                                       double eps0, double margin_floor,
                                       double t_max = 1.0, int t_count = 5,
                                       int directions = 0, uint64_t seed = 0x5EED) {
  if (!(eps0 > 0.0)) throw Error("rescale needs eps0 > 0");
  if (directions <= 0) directions = default_directions(base.dim());
  for (int k = 0; k <= 40; ++k) {
    double eps = eps0 * std::pow(2.0, -k);
    RescaleResult res;
    res.eps = eps;
    res.halvings = k;
    res.worst_margin = std::numeric_limits<double>::infinity();
    for (int ti = 0; ti < t_count; ++ti) {
      double t = t_count == 1 ? 0.0 : -t_max + 2.0 * t_max * ti / (t_count - 1);
      MatrixXd m = base.dg_t(t, eps);
      MatrixXd m_inv = m.inverse();
      for (size_t si = 0; si < specs.size(); ++si) {
        const InclusionSpec& sp = specs[si];
        double margin =
            check_inclusion(*sp.src, *sp.dst, sp.forward ? m : m_inv, directions,
                            derive_seed(seed, 1000 + 10 * si + ti));
        res.rows.push_back({sp.label, t, margin});
        res.worst_margin = std::min(res.worst_margin, margin);
      }
    }
    if (res.worst_margin >= margin_floor) return res;
  }
  throw ConeError(ConeError::Kind::cannot_rescale,
                  "margin floor " + fmt_g17(margin_floor) +
                      " unreachable after 40 halvings of eps0 = " + fmt_g17(eps0));
}

}  // namespace skewlab
