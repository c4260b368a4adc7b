#pragma once

#include "skewlab/base_system.hpp"
#include "skewlab/shear_profile.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace skewlab {

struct TowerError : Error {
  enum class Kind { bad_config, incompatible_rates, rescale_failed };
  Kind kind;
  TowerError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
};

enum class TowerMode { diffeo, flow };

// Which frame axes the translation field charges. aligned: exactly the
// switched stable axes. full_stable: every stable axis, so the field is a
// generic positive combination inside the stable cone rather than an
// eigendirection; the two-sided cone analysis is exercised in this style.
enum class FieldStyle { aligned, full_stable };

// A point of the product of the base with `depth` fiber circles. Each fiber
// coordinate lives in [-1, 1) (or [-1, 3) when the doubled model is on): the
// interval map h acts on |z| and the sign is carried along, which glues the
// two mirrored copies into a circle action fixing z = 0 and the endpoint.
struct SkewPoint {
  BasePoint base;
  VectorXd z;
};

class SwitchTower {
public:
  BaseSystem base;
  ShearProfile prof;                // stage-0 profile, kept for direct access
  std::vector<ShearProfile> profs;  // one per stage; stage k drives z_k
  TowerMode mode = TowerMode::diffeo;
  FieldStyle field_style = FieldStyle::aligned;
  int depth = 1;
  bool doubling = false;
  double eps = 0.0;
  VectorXd x_frame;  // translation field direction in frame coordinates

  int base_dim() const { return base.dim(); }
  int dim() const { return base.dim() + depth; }
  double z_span() const { return doubling ? 4.0 : 2.0; }

  double canon_z(double z) const {
    double span = z_span();
    double w = (z + 1.0) / span;
    return span * (w - std::floor(w)) - 1.0;
  }

  // Mirror reduction of one fiber coordinate: zeta in [-1, 1), plus whether
  // the point sits on the doubled copy (z in [1, 3)).
  struct Fiber {
    double zeta = 0.0;
    bool upper = false;
  };

  Fiber reduce(double z) const {
    Fiber f;
    f.upper = doubling && z >= 1.0;
    f.zeta = f.upper ? z - 2.0 : z;
    return f;
  }

  SkewPoint apply(const SkewPoint& p) const {
    SkewPoint q;
    q.z.resize(depth);
    double shear_time = 0.0;
    double rho_time = 0.0;
    bool low_branch = false;
    for (int k = 0; k < depth; ++k) {
      const ShearProfile& pk = profs[k];
      Fiber f = reduce(p.z[k]);
      double az = std::abs(f.zeta);
      double sign = f.zeta < 0.0 ? -1.0 : 1.0;
      q.z[k] = sign * pk.h(az) + (f.upper ? 2.0 : 0.0);
      shear_time += pk.tau(az);
      if (mode == TowerMode::flow && az < pk.h2_a) {
        low_branch = true;
        rho_time = pk.rho(az);
      }
    }
    if (mode == TowerMode::flow && low_branch) {
      q.base = base.apply_flow(p.base, rho_time);
      return q;
    }
    BasePoint b = base.apply_g(p.base);
    q.base = base.apply_sigma(b, shear_time, eps, x_frame);
    return q;
  }

  SkewPoint apply_inverse(const SkewPoint& p) const {
    SkewPoint q;
    q.z.resize(depth);
    double shear_time = 0.0;
    double rho_time = 0.0;
    bool low_branch = false;
    for (int k = 0; k < depth; ++k) {
      const ShearProfile& pk = profs[k];
      Fiber f = reduce(p.z[k]);
      double az = std::abs(f.zeta);
      double sign = f.zeta < 0.0 ? -1.0 : 1.0;
      double zeta_pre = sign * pk.h_inverse(az);
      q.z[k] = zeta_pre + (f.upper ? 2.0 : 0.0);
      double az_pre = std::abs(zeta_pre);
      shear_time += pk.tau(az_pre);
      if (mode == TowerMode::flow && az_pre < pk.h2_a) {
        low_branch = true;
        rho_time = pk.rho(az_pre);
      }
    }
    if (mode == TowerMode::flow && low_branch) {
      q.base = base.apply_flow(p.base, -rho_time);
      return q;
    }
    BasePoint b = base.apply_sigma(p.base, -shear_time, eps, x_frame);
    q.base = base.apply_g_inverse(b);
    return q;
  }

  // Derivative in frame coordinates at p. Block layout: base axes first,
  // fiber axes after. The base block is the sheared return derivative, the
  // fiber block is diag(h'(|zeta_k|)), and each fiber coordinate feeds the
  // base through one shear column: the derivative of the arrival translation
  // with respect to its own departure height.
  MatrixXd df(const SkewPoint& p) const {
    int m = base_dim(), n = dim();
    MatrixXd out = MatrixXd::Zero(n, n);
    double shear_time = 0.0;
    bool low_branch = false;
    double rho_val = 0.0, rho_slope = 0.0, rho_sign = 1.0;
    for (int k = 0; k < depth; ++k) {
      const ShearProfile& pk = profs[k];
      Fiber f = reduce(p.z[k]);
      double az = std::abs(f.zeta);
      double sign = f.zeta < 0.0 ? -1.0 : 1.0;
      out(m + k, m + k) = pk.h_prime(az);
      shear_time += pk.tau(az);
      if (mode == TowerMode::flow && az < pk.h2_a) {
        low_branch = true;
        rho_val = pk.rho(az);
        rho_slope = pk.rho_prime(az);
        rho_sign = sign;
      } else {
        VectorXd column = eps * pk.tau_prime(az) * sign * x_frame;
        out.block(0, m + k, m, 1) = column;
      }
    }
    if (mode == TowerMode::flow && low_branch) {
      out.block(0, 0, m, m) = base.dflow(rho_val);
      // moving the departure height advances the arrival along the flow line
      out(1, m) = rho_slope * rho_sign;
      return out;
    }
    out.block(0, 0, m, m) = base.dg_t(shear_time, eps);
    return out;
  }

  MatrixXd df_inverse_at(const SkewPoint& p) const {
    return df(apply_inverse(p)).inverse();
  }

  double log_det_df(const SkewPoint& p) const {
    double sum = 0.0;
    for (int k = 0; k < depth; ++k) {
      Fiber f = reduce(p.z[k]);
      sum += std::log(profs[k].h_prime(std::abs(f.zeta)));
    }
    if (mode == TowerMode::flow) {
      Fiber f = reduce(p.z[0]);
      if (std::abs(f.zeta) < prof.h2_a) return sum;  // flow block has det 1
      return sum;  // mu_s^N mu_u^N = 1 for a unimodular fiber map
    }
    for (int i = 0; i < base_dim(); ++i) sum += std::log(base.rates()[i]);
    return sum;
  }

  static SwitchTower build(const BaseSystem& base_in,
                           const std::vector<ShearProfile>& profs_in,
                           TowerMode mode_in, FieldStyle style_in, int depth_in,
                           bool doubling_in, double eps_in) {
    SwitchTower t;
    t.base = base_in;
    t.profs = profs_in;
    t.mode = mode_in;
    t.field_style = style_in;
    t.depth = depth_in;
    t.doubling = doubling_in;
    t.eps = eps_in;

    if (depth_in < 1)
      throw TowerError(TowerError::Kind::bad_config, "tower depth must be >= 1");
    if (static_cast<int>(profs_in.size()) != depth_in)
      throw TowerError(TowerError::Kind::bad_config,
                       "one shear profile per stage is required; got " +
                           std::to_string(profs_in.size()) + " for depth " +
                           std::to_string(depth_in));
    t.prof = profs_in[0];
    if (depth_in > base_in.stable_count())
      throw TowerError(TowerError::Kind::bad_config,
                       "tower depth exceeds the number of stable directions");
    if (style_in == FieldStyle::full_stable && base_in.stable_count() < 2)
      throw TowerError(TowerError::Kind::bad_config,
                       "full_stable field style needs at least two stable "
                       "directions to be distinct from aligned");
    if (mode_in == TowerMode::flow) {
      const ShearProfile& pr = profs_in[0];
      if (base_in.kind != BaseKind::suspension)
        throw TowerError(TowerError::Kind::bad_config,
                         "flow mode requires the suspension base");
      if (depth_in != 1)
        throw TowerError(TowerError::Kind::bad_config,
                         "flow mode supports a single fiber circle");
      double etaN = std::pow(pr.eta, base_in.flow_steps);
      if (!(etaN < pr.lambda))
        throw TowerError(
            TowerError::Kind::incompatible_rates,
            "flow mode needs eta^N < lambda so the slow flow branch still "
            "contracts faster than any fiber rate; got eta^N = " +
                fmt_g17(etaN) + " with lambda = " + fmt_g17(pr.lambda));
      double mu_sN = std::pow(base_in.susp.mu_s, base_in.flow_steps);
      if (!(mu_sN < pr.lambda))
        throw TowerError(
            TowerError::Kind::incompatible_rates,
            "flow mode needs mu_s^N < lambda so the horizontal stable "
            "direction outruns every fiber rate; got mu_s^N = " +
                fmt_g17(mu_sN) + " with lambda = " + fmt_g17(pr.lambda));
      if (!(pr.mu < base_in.susp.mu_u))
        throw TowerError(TowerError::Kind::incompatible_rates,
                         "flow mode needs mu < mu_u so the horizontal unstable "
                         "direction dominates every fiber rate even at unit "
                         "flow time; got mu = " + fmt_g17(pr.mu) +
                             " with mu_u = " + fmt_g17(base_in.susp.mu_u));
    }
    if (!(eps_in >= 0.0))
      throw TowerError(TowerError::Kind::bad_config, "eps must be nonnegative");

    if (mode_in == TowerMode::diffeo) {
      // Stage k switches the weakest remaining stable direction of the stage
      // k-1 map, whose stable rates are the unswitched horizontals together
      // with the earlier fiber rates lambda_0..lambda_{k-1}. Each stage needs
      // its (lambda, eta) window around all of them, so the lambdas decrease
      // strictly along the stages.
      VectorXd r = base_in.rates();
      double min_unstable = r[r.size() - 1];
      for (int i = 0; i < r.size(); ++i)
        if (r[i] > 1.0) {
          min_unstable = r[i];
          break;
        }
      for (int k = 0; k < depth_in; ++k) {
        const ShearProfile& pr = profs_in[k];
        std::string stage = "stage " + std::to_string(k + 1);
        double min_stable = r[0];
        if (k > 0) min_stable = std::min(min_stable, profs_in[k - 1].lambda);
        double max_stable = r[base_in.stable_count() - 1 - k];
        if (!(pr.lambda < min_stable))
          throw TowerError(TowerError::Kind::incompatible_rates,
                           stage + ": lambda must undercut every stable rate of "
                           "its base, including the earlier fiber rates; got "
                           "lambda = " + fmt_g17(pr.lambda) +
                           " against stable rate " + fmt_g17(min_stable));
        if (!(max_stable < pr.eta))
          throw TowerError(TowerError::Kind::incompatible_rates,
                           stage + ": eta must dominate every stable rate of "
                           "its base; got eta = " + fmt_g17(pr.eta) +
                           " against stable rate " + fmt_g17(max_stable));
        if (!(pr.mu < min_unstable))
          throw TowerError(TowerError::Kind::incompatible_rates,
                           stage + ": mu must undercut every unstable rate of "
                           "the base; got mu = " + fmt_g17(pr.mu) +
                           " against unstable rate " + fmt_g17(min_unstable));
      }
    }

    int m = base_in.dim();
    t.x_frame = VectorXd::Zero(m);
    if (style_in == FieldStyle::full_stable) {
      for (int i = 0; i < base_in.stable_count(); ++i) t.x_frame[i] = 1.0;
    } else {
      for (int k = 0; k < depth_in; ++k)
        t.x_frame[base_in.stable_count() - 1 - k] = 1.0;
    }
    return t;
  }

  static SwitchTower build(const BaseSystem& base_in, const ShearProfile& prof_in,
                           TowerMode mode_in, FieldStyle style_in, int depth_in,
                           bool doubling_in, double eps_in) {
    return build(base_in, std::vector<ShearProfile>(depth_in, prof_in), mode_in,
                 style_in, depth_in, doubling_in, eps_in);
  }

  // Indices of the stable frame axes consumed by the switching, weakest
  // first: stage k replaces the (k+1)-th weakest remaining stable direction.
  std::vector<int> switched_axes() const {
    std::vector<int> out;
    for (int k = 0; k < depth; ++k)
      out.push_back(base.stable_count() - 1 - k);
    return out;
  }
};

inline SkewPoint make_skew_point(const SwitchTower& t, const VectorXd& x,
                                 double s, const VectorXd& z) {
  SkewPoint p;
  p.base.x = x;
  p.base.s = s;
  p.z.resize(t.depth);
  for (int k = 0; k < t.depth; ++k) p.z[k] = t.canon_z(z[k]);
  return p;
}

inline SkewPoint random_skew_point(const SwitchTower& t, Rng& rng) {
  SkewPoint p;
  int fiber_dim = t.base.kind == BaseKind::suspension ? 2 : t.base_dim();
  p.base.x.resize(fiber_dim);
  for (int i = 0; i < fiber_dim; ++i) p.base.x[i] = rng.uniform();
  p.base.s = t.base.kind == BaseKind::suspension ? rng.uniform() : 0.0;
  p.z.resize(t.depth);
  for (int k = 0; k < t.depth; ++k)
    p.z[k] = rng.uniform(-1.0, t.doubling ? 3.0 : 1.0);
  return p;
}

// Distance respecting the torus wrap in every periodic coordinate.
inline double skew_distance(const SwitchTower& t, const SkewPoint& a,
                            const SkewPoint& b) {
  double d2 = 0.0;
  for (int i = 0; i < a.base.x.size(); ++i) {
    double diff = std::abs(a.base.x[i] - b.base.x[i]);
    diff = std::min(diff, 1.0 - diff);
    d2 += diff * diff;
  }
  if (t.base.kind == BaseKind::suspension) {
    double diff = std::abs(a.base.s - b.base.s);
    diff = std::min(diff, 1.0 - diff);
    d2 += diff * diff;
  }
  for (int k = 0; k < t.depth; ++k) {
    double diff = std::abs(a.z[k] - b.z[k]);
    diff = std::min(diff, t.z_span() - diff);
    d2 += diff * diff;
  }
  return std::sqrt(d2);
}

}  // namespace skewlab
