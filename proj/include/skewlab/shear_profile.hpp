#pragma once

#include "skewlab/numerics.hpp"

#include <array>
#include <cmath>
#include <string>

namespace skewlab {

struct ProfileError : Error {
  enum class Kind { bad_constants, branch_overlap, blend_not_monotone };
  Kind kind;
  ProfileError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
};

struct ShearProfileParams {
  double lambda = 0.2;
  double eta = 0.4;
  double mu = 2.5;
  double a = 0.9;
  double N = 2.0;
  int validation_grid = 4097;
};

// Quintic smoothstep: S(0)=0, S(1)=1, S'(0)=S'(1)=S''(0)=S''(1)=0, and
// S'(t) = 30 t^2 (1-t)^2 > 0 strictly inside.
inline double smoothstep5(double t) {
  return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

inline double smoothstep5_prime(double t) {
  double s = t * (1.0 - t);
  return 30.0 * s * s;
}

// Antiderivative of the quintic smoothstep with value 0 at t = 0; equals 1/2
// at t = 1, so a slope ramp from p to q over width w adds (p+q)w/2 of value.
inline double smoothstep5_integral(double t) {
  double t4 = t * t * t * t;
  return t4 * (2.5 + t * (-3.0 + t));
}

// Interval contraction h: [0,1] -> [0,1] with h(z) < z on (0,1), fixed
// endpoints, h = lambda z on the bottom branch, h = 1 - mu (1 - z) on the
// top branch. The two branches are joined by ramping the slope itself:
// h'(z) = lambda + (mu - lambda) S(u) on (blend_lo, a), so h' climbs
// monotonically from lambda to mu and stays pinned inside [lambda, mu]
// everywhere. That pinching is what keeps every fiber derivative between
// the two branch slopes, with no dip below lambda in the transition.
// Matching the top branch value at a fixes the blend start in closed form:
//   blend_lo = a - 2 (h(a) - lambda a) / (mu - lambda),
// since the slope ramp contributes (lambda + mu)/2 times its width.
// The bottom branch must still cover [0, h^3(a)] so that three backward
// steps from a land in the exact-slope region; this is validated, and the
// switching point c is placed at h^3(a)/2 with room to spare.
//
// tau ramps 0 -> 1 over (h^2(a), a): the shear is off below h^2(a), fully on
// above a. rho ramps 1 -> N over (h^3(a), h^2(a)): the flow-time profile is
// at rest below h^3(a) and at full speed N above h^2(a).
class ShearProfile {
public:
  double lambda = 0.0, eta = 0.0, mu = 0.0, a = 0.0, N = 0.0;
  double blend_lo = 0.0;  // start of the slope ramp, at least h^3(a)
  double c = 0.0;         // h^3(a)/2, bottom branch certified on [0, c]
  double h_a = 0.0, h2_a = 0.0, h3_a = 0.0;

  static ShearProfile build(const ShearProfileParams& p) {
    if (!(0.0 < p.lambda && p.lambda < p.eta && p.eta < 1.0 && 1.0 < p.mu))
      throw ProfileError(ProfileError::Kind::bad_constants,
                         "profile constants must satisfy 0 < lambda < eta < 1 < mu");
    if (!(0.0 < p.a && p.a < 1.0))
      throw ProfileError(ProfileError::Kind::bad_constants,
                         "ramp end a must lie in (0, 1)");
    double top_at_a = 1.0 - p.mu * (1.0 - p.a);
    if (!(top_at_a > 0.0))
      throw ProfileError(ProfileError::Kind::bad_constants,
                         "top branch value 1 - mu (1 - a) must be positive; raise a or lower mu");
    if (!(p.N >= 1.0))
      throw ProfileError(ProfileError::Kind::bad_constants,
                         "flow-time ceiling N must be at least 1");

    ShearProfile prof;
    prof.lambda = p.lambda;
    prof.eta = p.eta;
    prof.mu = p.mu;
    prof.a = p.a;
    prof.N = p.N;
    prof.h_a = top_at_a;

    double b = p.a - 2.0 * (top_at_a - p.lambda * p.a) / (p.mu - p.lambda);
    if (!(b > 0.0))
      throw ProfileError(ProfileError::Kind::branch_overlap,
                         "slope ramp would reach below 0; raise a or lambda");
    prof.set_blend(b);
    prof.h2_a = prof.h(prof.h_a);
    prof.h3_a = prof.h(prof.h2_a);
    if (!(prof.h3_a <= b))
      throw ProfileError(ProfileError::Kind::branch_overlap,
                         "bottom branch must cover [0, h^3(a)]; blend starts at " +
                             fmt_g17(b) + " but h^3(a) = " + fmt_g17(prof.h3_a));
    prof.c = 0.5 * prof.h3_a;

    int grid = std::max(p.validation_grid, 65);
    for (int i = 0; i <= grid; ++i) {
      double z = static_cast<double>(i) / grid;
      double v = prof.h(z);
      double s = prof.h_prime(z);
      if (!(s >= p.lambda - 1e-12 && s <= p.mu + 1e-12))
        throw ProfileError(ProfileError::Kind::blend_not_monotone,
                           "h' left [lambda, mu] at z = " + fmt_g17(z));
      if (i > 0 && i < grid && !(v < z))
        throw ProfileError(ProfileError::Kind::blend_not_monotone,
                           "h(z) < z fails at z = " + fmt_g17(z));
    }
    return prof;
  }

  double h(double z) const {
    if (z <= blend_lo) return lambda * z;
    if (z >= a) return 1.0 - mu * (1.0 - z);
    double u = (z - blend_lo) / blend_w_;
    return lambda * z + (mu - lambda) * blend_w_ * smoothstep5_integral(u);
  }

  double h_prime(double z) const {
    if (z <= blend_lo) return lambda;
    if (z >= a) return mu;
    return lambda + (mu - lambda) * smoothstep5((z - blend_lo) / blend_w_);
  }

  double h_inverse(double y) const {
    if (y <= lambda * blend_lo) return y / lambda;
    if (y >= h_a) return 1.0 - (1.0 - y) / mu;
    double lo = blend_lo, hi = a;
    for (int it = 0; it < 90; ++it) {
      double mid = 0.5 * (lo + hi);
      if (h(mid) < y)
        lo = mid;
      else
        hi = mid;
      if (hi - lo < 1e-15) break;
    }
    double z = 0.5 * (lo + hi);
    for (int it = 0; it < 3; ++it) {
      double step = (h(z) - y) / h_prime(z);
      double z_next = z - step;
      if (z_next > blend_lo && z_next < a) z = z_next;
    }
    return z;
  }

  double tau(double z) const {
    if (z <= h2_a) return 0.0;
    if (z >= a) return 1.0;
    return smoothstep5((z - h2_a) / (a - h2_a));
  }

  double tau_prime(double z) const {
    if (z <= h2_a || z >= a) return 0.0;
    return smoothstep5_prime((z - h2_a) / (a - h2_a)) / (a - h2_a);
  }

  double rho(double z) const {
    if (z <= h3_a) return 1.0;
    if (z >= h2_a) return N;
    return 1.0 + (N - 1.0) * smoothstep5((z - h3_a) / (h2_a - h3_a));
  }

  double rho_prime(double z) const {
    if (z <= h3_a || z >= h2_a) return 0.0;
    return (N - 1.0) * smoothstep5_prime((z - h3_a) / (h2_a - h3_a)) /
           (h2_a - h3_a);
  }

private:
  double blend_w_ = 0.0;

  void set_blend(double b) {
    blend_lo = b;
    blend_w_ = a - b;
  }
};

}  // namespace skewlab
