#include <catch2/catch_amalgamated.hpp>

#include "skewlab/base_system.hpp"

#include <cmath>
#include <vector>

using namespace skewlab;

namespace {

// Independent root oracle for cubics x^3 - t x^2 + s x - 1: sample sign
// changes on a fine grid and bisect. Avoids any eigenvalue machinery.
std::vector<double> cubic_roots(double t, double s) {
  auto p = [&](double x) { return ((x - t) * x + s) * x - 1.0; };
  std::vector<double> roots;
  double lo = -16.0, step = 1e-3;
  double prev = p(lo);
  for (double x = lo + step; x <= 16.0; x += step) {
    double cur = p(x);
    if (prev == 0.0) roots.push_back(x - step);
    if (prev * cur < 0.0) {
      double a = x - step, b = x;
      bool rising = prev < 0.0;
      for (int it = 0; it < 80; ++it) {
        double mid = 0.5 * (a + b);
        ((p(mid) < 0.0) == rising ? a : b) = mid;
      }
      roots.push_back(0.5 * (a + b));
    }
    prev = cur;
  }
  return roots;
}

struct Pattern {
  int inside = 0, outside = 0;
  bool valid = false;
};

Pattern classify(double t, double s) {
  Pattern out;
  auto roots = cubic_roots(t, s);
  if (roots.size() != 3) return out;
  for (std::size_t i = 0; i + 1 < roots.size(); ++i)
    if (roots[i + 1] - roots[i] < 1e-6) return out;
  for (double r : roots) {
    if (r <= 1e-9) return out;
    if (std::abs(r - 1.0) < 1e-9) return out;
    (r < 1.0 ? out.inside : out.outside) += 1;
  }
  out.valid = true;
  return out;
}

}  // namespace

TEST_CASE("cat map spectrum and frame") {
  LinearAnosov cat = cat_map();
  double golden = (3.0 - std::sqrt(5.0)) / 2.0;
  REQUIRE(cat.eig[0] == Catch::Approx(golden).margin(1e-12));
  REQUIRE(cat.eig[1] == Catch::Approx(1.0 / golden).margin(1e-12));
  REQUIRE(cat.stable_count == 1);

  MatrixXd diag = cat.frame_inv * cat.A * cat.frame;
  REQUIRE(diag(0, 0) == Catch::Approx(cat.eig[0]).margin(1e-12));
  REQUIRE(diag(1, 1) == Catch::Approx(cat.eig[1]).margin(1e-12));
  REQUIRE(std::abs(diag(0, 1)) < 1e-12);
  REQUIRE(std::abs(diag(1, 0)) < 1e-12);
  for (int i = 0; i < 2; ++i)
    REQUIRE(cat.frame.col(i).norm() == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("three-torus matrices carry the advertised spectra") {
  LinearAnosov two = t3_two_stable();
  REQUIRE(two.stable_count == 2);
  auto roots2 = cubic_roots(6.0, 5.0);
  REQUIRE(roots2.size() == 3);
  for (int i = 0; i < 3; ++i)
    REQUIRE(two.eig[i] == Catch::Approx(roots2[i]).margin(1e-9));

  LinearAnosov one = t3_one_stable();
  REQUIRE(one.stable_count == 1);
  auto roots1 = cubic_roots(5.0, 6.0);
  REQUIRE(roots1.size() == 3);
  for (int i = 0; i < 3; ++i)
    REQUIRE(one.eig[i] == Catch::Approx(roots1[i]).margin(1e-9));

  REQUIRE(std::abs(two.A.determinant() - 1.0) < 1e-12);
  REQUIRE(std::abs(one.A.determinant() - 1.0) < 1e-12);
}

TEST_CASE("bounded search over integer companion cubics finds the built-ins") {
  bool found_two = false, found_one = false;
  int two_count = 0, one_count = 0;
  for (int t = -8; t <= 8; ++t) {
    for (int s = -8; s <= 8; ++s) {
      Pattern pat = classify(t, s);
      if (!pat.valid) continue;
      if (pat.inside == 2 && pat.outside == 1) {
        ++two_count;
        if (t == 6 && s == 5) found_two = true;
      }
      if (pat.inside == 1 && pat.outside == 2) {
        ++one_count;
        if (t == 5 && s == 6) found_one = true;
      }
    }
  }
  REQUIRE(found_two);
  REQUIRE(found_one);
  REQUIRE(two_count >= 1);
  REQUIRE(one_count >= 1);
}

TEST_CASE("validation rejects non-hyperbolic and mirrored inputs") {
  REQUIRE_THROWS_MATCHES(
      make_linear_anosov(int_matrix({{2, 0}, {0, 1}})), BaseError,
      Catch::Matchers::Predicate<BaseError>([](const BaseError& e) {
        return e.kind == BaseError::Kind::not_unimodular;
      }));
  REQUIRE_THROWS_MATCHES(
      make_linear_anosov(int_matrix({{1, 0}, {0, 1}})), BaseError,
      Catch::Matchers::Predicate<BaseError>([](const BaseError& e) {
        return e.kind == BaseError::Kind::not_hyperbolic;
      }));
  REQUIRE_THROWS_MATCHES(
      make_linear_anosov(int_matrix({{0, -1}, {1, 0}})), BaseError,
      Catch::Matchers::Predicate<BaseError>([](const BaseError& e) {
        return e.kind == BaseError::Kind::not_hyperbolic;
      }));
  REQUIRE_THROWS_MATCHES(
      make_linear_anosov(int_matrix({{-2, 1}, {1, -1}})), BaseError,
      Catch::Matchers::Predicate<BaseError>([](const BaseError& e) {
        return e.kind == BaseError::Kind::orientation_reversed;
      }));
  REQUIRE_THROWS_MATCHES(
      make_linear_anosov(int_matrix({{1, 1}, {1, 0}})), BaseError,
      Catch::Matchers::Predicate<BaseError>([](const BaseError& e) {
        return e.kind == BaseError::Kind::orientation_reversed;
      }));
}

TEST_CASE("cat map action on the torus") {
  BaseSystem base = make_toral_base(int_matrix({{2, 1}, {1, 1}}));
  BasePoint p;
  p.x = Eigen::Vector2d(0.5, 0.5);
  BasePoint q = base.apply_g(p);
  REQUIRE(q.x[0] == Catch::Approx(0.5).margin(1e-14));
  REQUIRE(q.x[1] == Catch::Approx(0.0).margin(1e-14));
  BasePoint r = base.apply_g_inverse(q);
  REQUIRE(r.x[0] == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(r.x[1] == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("suspension stable section is roof compatible") {
  BaseSystem base = make_suspension_base(int_matrix({{2, 1}, {1, 1}}), 2);
  const SuspensionFlow& flow = base.susp;
  REQUIRE(flow.beta(0.0) == Catch::Approx(flow.mu_s * flow.beta(1.0)).margin(1e-14));
  REQUIRE(flow.beta_u(0.0) == Catch::Approx(flow.mu_u * flow.beta_u(1.0)).margin(1e-14));
  REQUIRE(flow.L == Catch::Approx(-std::log(flow.mu_s)).margin(1e-12));
}

TEST_CASE("suspension flow group law with roof crossings") {
  BaseSystem base = make_suspension_base(int_matrix({{2, 1}, {1, 1}}), 2);
  Rng rng(41);
  for (int trial = 0; trial < 40; ++trial) {
    BasePoint p;
    p.x = Eigen::Vector2d(rng.uniform(), rng.uniform());
    p.s = rng.uniform();
    double t1 = rng.uniform(-3.0, 3.0);
    double t2 = rng.uniform(-3.0, 3.0);
    BasePoint a = base.apply_flow(base.apply_flow(p, t1), t2);
    BasePoint b = base.apply_flow(p, t1 + t2);
    REQUIRE(std::abs(a.s - b.s) < 1e-10);
    for (int i = 0; i < 2; ++i) {
      double diff = std::abs(a.x[i] - b.x[i]);
      diff = std::min(diff, 1.0 - diff);
      REQUIRE(diff < 1e-9);
    }
  }
}

TEST_CASE("suspension derivative is diagonal in the adapted frame") {
  BaseSystem base = make_suspension_base(int_matrix({{2, 1}, {1, 1}}), 2);
  MatrixXd d = base.dflow(0.7);
  REQUIRE(d(0, 0) == Catch::Approx(std::pow(base.susp.mu_s, 0.7)).margin(1e-14));
  REQUIRE(d(1, 1) == 1.0);
  REQUIRE(d(2, 2) == Catch::Approx(std::pow(base.susp.mu_u, 0.7)).margin(1e-14));

  VectorXd r = base.rates();
  REQUIRE(r[0] == Catch::Approx(std::pow(base.susp.mu_s, 2)).margin(1e-14));
  REQUIRE(r[1] == 1.0);
  REQUIRE(r[2] == Catch::Approx(std::pow(base.susp.mu_u, 2)).margin(1e-14));
}

TEST_CASE("sheared return map fixes the advertised center direction") {
  BaseSystem base = make_suspension_base(int_matrix({{2, 1}, {1, 1}}), 2);
  double eps = 0.0015;
  MatrixXd m = base.dg_t(1.0, eps);
  double q = eps * base.susp.L / (1.0 - std::pow(base.susp.mu_s, 2));
  Eigen::Vector3d center(q, 1.0, 0.0);
  Eigen::Vector3d image = m * center;
  REQUIRE((image - center).norm() < 1e-14);
}

TEST_CASE("translation flow composes additively") {
  BaseSystem toral = make_toral_base(int_matrix({{2, 1}, {1, 1}}));
  VectorXd x_frame = VectorXd::Zero(2);
  x_frame[0] = 1.0;
  BasePoint p;
  p.x = Eigen::Vector2d(0.25, 0.7);
  BasePoint a = toral.apply_sigma(toral.apply_sigma(p, 0.3, 0.05, x_frame), 0.5,
                                  0.05, x_frame);
  BasePoint b = toral.apply_sigma(p, 0.8, 0.05, x_frame);
  REQUIRE((a.x - b.x).norm() < 1e-14);

  BaseSystem susp = make_suspension_base(int_matrix({{2, 1}, {1, 1}}), 2);
  VectorXd xs = VectorXd::Zero(3);
  xs[0] = 1.0;
  BasePoint q;
  q.x = Eigen::Vector2d(0.1, 0.9);
  q.s = 0.37;
  BasePoint c = susp.apply_sigma(susp.apply_sigma(q, 0.3, 0.0015, xs), 0.5,
                                 0.0015, xs);
  BasePoint d = susp.apply_sigma(q, 0.8, 0.0015, xs);
  REQUIRE((c.x - d.x).norm() < 1e-14);
  REQUIRE(c.s == d.s);
}
