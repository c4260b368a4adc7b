#pragma once

#include "skewlab/skew_product.hpp"

// Shared tower configurations used across the test suites. The eps values
// here exercise the mechanics; acceptance-grade runs resolve eps through the
// cone rescale loop instead.
namespace fixtures {

using namespace skewlab;

inline ShearProfile default_prof() {
  return ShearProfile::build(ShearProfileParams{});
}

inline ShearProfile wide_eta_prof() {
  ShearProfileParams p;
  p.eta = 0.7;
  return ShearProfile::build(p);
}

// Second-stage constants for two-stage towers: stage 2 treats the stage-1 map
// as its base, whose stable rates include the first fiber rate lambda_1 = 0.2,
// so lambda_2 must undercut it while eta_2 still dominates the remaining
// horizontal stable rate 0.308.
inline ShearProfile stage2_prof() {
  ShearProfileParams p;
  p.lambda = 0.12;
  p.eta = 0.5;
  return ShearProfile::build(p);
}

// Flow-mode constants: lambda sits above the time-one stable rate of the cat
// flow (mu_s = 0.3820) so the horizontal stable direction contracts faster
// than every fiber rate, while eta^2 = 0.36 < lambda keeps the slow branch
// admissible and mu = 2.5 stays below mu_u = 2.618.
inline ShearProfileParams flow_params() {
  ShearProfileParams p;
  p.lambda = 0.4;
  p.eta = 0.6;
  p.mu = 2.5;
  p.a = 0.95;
  p.N = 2.0;
  return p;
}

// Diffeo-mode constants over the same suspension base: here lambda must
// undercut the time-two stable rate mu_s^2 = 0.1459 instead.
inline ShearProfileParams susp_diffeo_params() {
  ShearProfileParams p;
  p.lambda = 0.12;
  p.eta = 0.3;
  p.mu = 2.5;
  p.a = 0.9;
  p.N = 2.0;
  return p;
}

inline SwitchTower cat_tower(bool doubled = false, double eps = 0.05) {
  return SwitchTower::build(make_toral_base(int_matrix({{2, 1}, {1, 1}})),
                            default_prof(), TowerMode::diffeo,
                            FieldStyle::aligned, 1, doubled, eps);
}

inline SwitchTower t5_tower(double eps = 0.05) {
  return SwitchTower::build(make_toral_base(int_matrix({{0, 0, 1}, {1, 0, -5}, {0, 1, 6}})),
                            {wide_eta_prof(), stage2_prof()}, TowerMode::diffeo,
                            FieldStyle::aligned, 2, false, eps);
}

inline SwitchTower t4_full_stable_tower(double eps = 0.05) {
  return SwitchTower::build(make_toral_base(int_matrix({{0, 0, 1}, {1, 0, -5}, {0, 1, 6}})),
                            wide_eta_prof(), TowerMode::diffeo,
                            FieldStyle::full_stable, 1, false, eps);
}

inline SwitchTower flow_tower(double eps = 0.0015) {
  return SwitchTower::build(make_suspension_base(int_matrix({{2, 1}, {1, 1}}), 2),
                            ShearProfile::build(flow_params()), TowerMode::flow,
                            FieldStyle::aligned, 1, false, eps);
}

inline SwitchTower susp_diffeo_tower(double eps = 0.0015) {
  return SwitchTower::build(make_suspension_base(int_matrix({{2, 1}, {1, 1}}), 2),
                            ShearProfile::build(susp_diffeo_params()),
                            TowerMode::diffeo, FieldStyle::aligned, 1, false, eps);
}

}  // namespace fixtures
