#include <catch2/catch_amalgamated.hpp>

#include "skewlab/incoherence.hpp"
#include "towers_fixture.hpp"

#include <cmath>
#include <vector>

using namespace skewlab;
using fixtures::cat_tower;
using fixtures::flow_tower;
using fixtures::susp_diffeo_tower;
using fixtures::t4_full_stable_tower;
using fixtures::t5_tower;

namespace {

SkewPoint fiber_point(const SwitchTower& t, double x0, double x1, double z) {
  VectorXd x(2);
  x << x0, x1;
  return make_skew_point(t, x, 0.0, VectorXd::Constant(1, z));
}

double height(const SwitchTower& t, const SkewPoint& p) {
  return std::abs(t.reduce(p.z[0]).zeta);
}

}  // namespace

TEST_CASE("fall direction solves joint membership with unit horizontal part") {
  SwitchTower t = cat_tower();
  const ShearProfile& pr = t.prof;
  for (double z : {pr.c, 0.4 * pr.c, 0.02 * pr.c, 0.8 * pr.h2_a}) {
    SkewPoint p = fiber_point(t, 0.37, 0.81, z);
    VectorXd d = line_field(t, p);
    REQUIRE(d.size() == 3);
    REQUIRE(d.head(2).norm() == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(std::abs(d[1]) < 1e-10);  // no component off the stable subspace
    REQUIRE(d[0] < 0.0);              // oriented into the negative stable side
    REQUIRE(d[2] < 0.0);              // and therefore falling

    // the direction lies in the center-unstable plane it was solved from
    BundleOptions bo;
    bo.cross_check = false;
    BundleEstimate cu = estimate_bundle(t, p, 2, IterDirection::forward, 40, bo);
    VectorXd residual = d - cu.basis * (cu.basis.transpose() * d);
    REQUIRE(residual.norm() < 1e-9 * d.norm());
  }
}

TEST_CASE("fall direction is invariant under the derivative") {
  SwitchTower t = cat_tower();
  const ShearProfile& pr = t.prof;
  for (double z : {0.9 * pr.c, 0.3 * pr.c, 0.6 * pr.h2_a}) {
    SkewPoint p = fiber_point(t, 0.22, 0.64, z);
    VectorXd d = line_field(t, p);
    MatrixXd jac = t.df(p);
    VectorXd pushed = jac * d;
    pushed /= pushed.head(2).norm();
    if (pushed[0] > 0.0) pushed = -pushed;
    VectorXd next = line_field(t, t.apply(p));
    REQUIRE((pushed - next).norm() < 1e-10);

    // below h^2(a) the shear is off, so the height slope of the line obeys
    // the exact one-step recursion w' = h'(z) w / mu_s
    double w = d[2] / d[0];
    double w_next = next[2] / next[0];
    double predicted = pr.h_prime(z) * w / t.base.rates()[0];
    REQUIRE(w_next == Catch::Approx(predicted).epsilon(1e-12));
  }
}

TEST_CASE("fall rate flips sign with the mirror symmetry") {
  SwitchTower t = cat_tower();
  double z = 0.7 * t.prof.c;
  SkewPoint up = fiber_point(t, 0.37, 0.81, z);
  SkewPoint down = fiber_point(t, 0.37, 0.81, -z);
  VectorXd du = line_field(t, up);
  VectorXd dd = line_field(t, down);
  REQUIRE(du[2] < 0.0);
  REQUIRE(dd[2] > 0.0);
  REQUIRE(du[0] == Catch::Approx(dd[0]).margin(1e-12));
  REQUIRE(du[2] == Catch::Approx(-dd[2]).margin(1e-12));

  DichotomyReport dich = sign_dichotomy(t, 200);
  REQUIRE(dich.points == 200);
  REQUIRE(dich.exceptions == 0);
  REQUIRE(dich.min_rate > 0.0);
}

TEST_CASE("fall field rejects unsupported towers and out-of-domain points") {
  SwitchTower t = cat_tower();
  REQUIRE_THROWS_AS(line_field(t, fiber_point(t, 0.3, 0.4, 0.0)),
                    IncoherenceError);
  REQUIRE_THROWS_AS(line_field(t, fiber_point(t, 0.3, 0.4, 2.0 * t.prof.h2_a)),
                    IncoherenceError);
  REQUIRE_THROWS_AS(FallField(flow_tower()), Error);
  REQUIRE_THROWS_AS(FallField(t5_tower()), Error);

  IntegrateOptions missing_budget;
  REQUIRE_THROWS_AS(
      integrate_falling(t, fiber_point(t, 0.3, 0.4, t.prof.c), missing_budget),
      Error);
  REQUIRE_THROWS_AS(integrate_falling(t, fiber_point(t, 0.3, 0.4, 1e-12), 0.02,
                                      1.0),
                    IncoherenceError);
}

TEST_CASE("falling curves descend monotonically to the floor") {
  SwitchTower t = cat_tower();
  SkewPoint p0 = fiber_point(t, 0.37, 0.81, t.prof.c);
  FallingCurve curve = integrate_falling(t, p0, 0.02, 20.0);

  REQUIRE(curve.hit_floor);
  REQUIRE(curve.terminal_height < 1e-8 * t.prof.c);
  REQUIRE(curve.pts.size() >= 10);
  for (std::size_t i = 1; i < curve.pts.size(); ++i)
    REQUIRE(height(t, curve.pts[i]) < height(t, curve.pts[i - 1]));
  for (double v : curve.rate) REQUIRE(v < 0.0);

  // the parameter is the arclength of the base track
  double polyline = detail::projected_polyline_length(t, curve.pts);
  REQUIRE(polyline == Catch::Approx(curve.projected_length).epsilon(1e-3));
}

TEST_CASE("mirrored starts rise to the mirrored floor") {
  SwitchTower t = cat_tower();
  FallingCurve up = integrate_falling(t, fiber_point(t, 0.37, 0.81, t.prof.c),
                                      0.02, 20.0);
  FallingCurve down = integrate_falling(
      t, fiber_point(t, 0.37, 0.81, -t.prof.c), 0.02, 20.0);
  REQUIRE(down.hit_floor);
  REQUIRE(down.terminal_height < 1e-8 * t.prof.c);
  REQUIRE(down.pts.size() == up.pts.size());
  for (std::size_t i = 0; i < down.pts.size(); ++i) {
    REQUIRE(down.pts[i].z[0] <= 0.0);
    REQUIRE(down.pts[i].z[0] == Catch::Approx(-up.pts[i].z[0]).margin(1e-12));
  }
}

TEST_CASE("pushing a falling curve forward yields a falling curve") {
  SwitchTower t = cat_tower();
  SkewPoint p0 = fiber_point(t, 0.37, 0.81, t.prof.c);

  IntegrateOptions fine;
  fine.step = 0.002;
  fine.max_len = 0.01;
  FallingCurve curve = integrate_falling(t, p0, fine);
  REQUIRE_FALSE(curve.hit_floor);

  std::vector<SkewPoint> pushed = curve.pts;
  for (auto& q : pushed) q = t.apply(q);
  double pushed_len = detail::projected_polyline_length(t, pushed);
  // one image step contracts the projected length by the stable rate
  REQUIRE(pushed_len == Catch::Approx(curve.projected_length *
                                      t.base.rates()[0]).epsilon(1e-6));

  IntegrateOptions follow = fine;
  follow.max_len = pushed_len;
  follow.step = fine.step * t.base.rates()[0];
  FallingCurve image = integrate_falling(t, t.apply(p0), follow);
  double expected = t.prof.h(curve.terminal_height);
  REQUIRE(image.terminal_height == Catch::Approx(expected).epsilon(0.01));
}

TEST_CASE("unit-leg drop bound is positive across the band") {
  SwitchTower t = cat_tower();
  DeltaReport rep = measure_delta(t, 16, 6);
  REQUIRE(rep.curves == 96);
  REQUIRE(rep.delta > 0.0);
  REQUIRE(rep.largest_drop >= rep.delta);
  REQUIRE(rep.gap == Catch::Approx(t.prof.c - t.prof.h(t.prof.c)));
  REQUIRE(rep.delta * rep.L > rep.gap);
  REQUIRE(rep.delta * (rep.L - 1) <= rep.gap);
}

TEST_CASE("band-k descents exit below and inflate under pullback") {
  SwitchTower t = cat_tower();
  DeltaReport delta = measure_delta(t, 8, 4);

  FallnReport base = verify_falln(t, 0, delta.L, 8);
  REQUIRE(base.band_hi == Catch::Approx(t.prof.c));
  REQUIRE(base.all_exit_below);
  REQUIRE(base.min_inflation == Catch::Approx(1.0).margin(1e-12));

  FallnReport deep = verify_falln(t, 3, delta.L, 8);
  REQUIRE(deep.band_hi == Catch::Approx(t.prof.h(t.prof.h(t.prof.h(t.prof.c)))));
  REQUIRE(deep.all_exit_below);
  REQUIRE(deep.worst_terminal < deep.band_lo);
  REQUIRE(deep.inflation_ok);
  // the pullback stretches by the inverse stable rate, eta^{-k} with slack
  double predicted = std::pow(t.prof.eta / t.base.rates()[0], 3);
  REQUIRE(deep.min_inflation == Catch::Approx(predicted).epsilon(0.02));
}

TEST_CASE("foliation tracks fan toward the fixed fiber without crossing") {
  SwitchTower t = cat_tower();
  BasePoint x0;
  x0.x = Eigen::Vector2d(0.37, 0.81);
  auto tracks = foliation_box_demo(t, x0, 4);
  REQUIRE(tracks.size() == 8);
  for (const auto& tr : tracks) {
    REQUIRE_FALSE(tr.crossed);
    REQUIRE(tr.hit_floor);
    REQUIRE(std::abs(tr.samples.back()[1]) < 1e-8 * t.prof.c);
    REQUIRE(tr.samples.back()[0] < 1.0);
  }
  // mirrored pairs trace mirrored heights
  for (std::size_t i = 0; i + 1 < tracks.size(); i += 2) {
    REQUIRE(tracks[i].start_z == Catch::Approx(-tracks[i + 1].start_z));
    REQUIRE(tracks[i].samples.size() == tracks[i + 1].samples.size());
    REQUIRE(tracks[i].samples.back()[1] ==
            Catch::Approx(-tracks[i + 1].samples.back()[1]).margin(1e-15));
  }
}

TEST_CASE("witness report certifies the falling chain") {
  SwitchTower t = cat_tower();
  WitnessOptions wo;
  wo.grid_x = 12;
  wo.grid_z = 4;
  wo.fall_curves = 8;
  wo.dichotomy_points = 200;
  wo.falln_curves = 8;
  LemmaReport rep = witness_incoherence(t, wo);

  REQUIRE(rep.delta > 0.0);
  REQUIRE(rep.delta * rep.L > rep.gap);
  REQUIRE(rep.length_bound == Catch::Approx(rep.L / (1.0 - rep.eta)));
  REQUIRE(rep.monotone);
  REQUIRE(rep.reached_floor);
  REQUIRE(rep.worst_terminal < 1e-8 * t.prof.c);
  REQUIRE(rep.max_projected_length <= rep.length_bound * 1.05);
  REQUIRE(rep.dichotomy_exceptions == 0);
  REQUIRE(rep.selfcheck_rel < 0.005);
  REQUIRE(rep.falln.all_exit_below);
  REQUIRE(rep.falln.inflation_ok);
  REQUIRE(rep.pass);

  LemmaReport again = witness_incoherence(t, wo);
  REQUIRE(again.delta == rep.delta);
  REQUIRE(again.max_projected_length == rep.max_projected_length);
  REQUIRE(again.worst_terminal == rep.worst_terminal);
  REQUIRE(again.selfcheck_rel == rep.selfcheck_rel);
  REQUIRE(again.falln.min_inflation == rep.falln.min_inflation);
}

TEST_CASE("witness extends to the generic-field and suspension towers") {
  WitnessOptions quick;
  quick.grid_x = 8;
  quick.grid_z = 4;
  quick.fall_curves = 8;
  quick.dichotomy_points = 100;
  quick.falln_curves = 8;

  SwitchTower t4 = t4_full_stable_tower();
  LemmaReport generic = witness_incoherence(t4, quick);
  REQUIRE(generic.pass);

  // the generic field spreads the horizontal part over both stable axes and
  // keeps a positive angle to the strong-stable plane
  SkewPoint p = make_skew_point(t4, Eigen::Vector3d(0.37, 0.81, 0.13), 0.0,
                                VectorXd::Constant(1, t4.prof.c));
  VectorXd d = line_field(t4, p);
  REQUIRE(std::abs(d[0]) > 0.1);
  REQUIRE(std::abs(d[1]) > 0.1);
  REQUIRE(d[1] < 0.0);  // oriented by the weak-stable component
  double strong_angle = std::asin(std::abs(d[1]) / d.norm());
  REQUIRE(strong_angle > 0.3);

  LemmaReport susp = witness_incoherence(susp_diffeo_tower(), quick);
  REQUIRE(susp.pass);
}
