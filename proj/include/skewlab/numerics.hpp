#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace skewlab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// splitmix64: statistically solid 64-bit mixer, used to derive independent
// stream seeds from one root seed without correlated low bits.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  return mix64(root ^ mix64(stream + 1));
}

// Deterministic RNG. mt19937_64 output is pinned by the standard, but the
// <random> distributions are not, so the scalings are done explicitly:
// uniform [0,1) from the top 53 bits, normals via Box-Muller.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  VectorXd gaussian_vector(int n) {
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  VectorXd sphere_point(int n) {
    VectorXd v = gaussian_vector(n);
    double r = v.norm();
    while (r < 1e-12) {
      v = gaussian_vector(n);
      r = v.norm();
    }
    return v / r;
  }

private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Halton radical-inverse sequence; indices start at 1 to skip the origin.
inline double halton(std::size_t index, unsigned base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * static_cast<double>(index % base);
    index /= base;
  }
  return r;
}

// Low-discrepancy unit directions: Halton pairs through Box-Muller give an
// even angular cover that is identical on every run and thread count.
inline std::vector<VectorXd> sphere_directions(int dim, int count) {
  static const unsigned primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29};
  if (dim > 10) throw Error("sphere_directions: dimension above prime table");
  std::vector<VectorXd> out;
  out.reserve(count);
  std::size_t index = 1;
  while (static_cast<int>(out.size()) < count) {
    VectorXd v(dim);
    for (int i = 0; i < dim; ++i) {
      double u1 = halton(index, primes[2 * (i / 2)]);
      double u2 = halton(index, primes[2 * (i / 2) + 1]);
      if (u1 < 1e-12) u1 = 1e-12;
      double r = std::sqrt(-2.0 * std::log(u1));
      double a = 2.0 * M_PI * u2;
      v[i] = (i % 2 == 0) ? r * std::cos(a) : r * std::sin(a);
    }
    ++index;
    double n = v.norm();
    if (n < 1e-9) continue;
    out.push_back(v / n);
  }
  return out;
}

// Thin QR with the R-diagonal forced nonnegative, so the returned frame is a
// deterministic function of the input span and column order.
inline MatrixXd orthonormalize(const MatrixXd& m) {
  Eigen::HouseholderQR<MatrixXd> qr(m);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(m.rows(), m.cols());
  MatrixXd r = q.transpose() * m;
  for (int j = 0; j < m.cols(); ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

// QR step for cocycle renormalization: returns Q and the log of |diag R|,
// which accumulates per-column growth rates without overflow.
inline MatrixXd qr_step(const MatrixXd& m, VectorXd& log_diag) {
  Eigen::HouseholderQR<MatrixXd> qr(m);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(m.rows(), m.cols());
  MatrixXd r = q.transpose() * m;
  log_diag.resize(m.cols());
  for (int j = 0; j < m.cols(); ++j) {
    double d = r(j, j);
    if (d < 0.0) q.col(j) = -q.col(j);
    double ad = std::abs(d);
    if (ad < 1e-300) throw Error("qr_step: rank collapse during renormalization");
    log_diag[j] = std::log(ad);
  }
  return q;
}

// Principal angles between the column spans of a and b (orthonormalized
// internally), ascending. cos(theta_i) are the singular values of Qa' Qb.
inline VectorXd principal_angles(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd qa = orthonormalize(a), qb = orthonormalize(b);
  Eigen::JacobiSVD<MatrixXd> svd(qa.transpose() * qb);
  VectorXd s = svd.singularValues();
  int k = static_cast<int>(s.size());
  VectorXd angles(k);
  for (int i = 0; i < k; ++i) {
    double c = std::min(1.0, std::max(-1.0, s[k - 1 - i]));
    angles[i] = std::acos(c);
  }
  return angles;
}

inline double max_principal_angle(const MatrixXd& a, const MatrixXd& b) {
  VectorXd angles = principal_angles(a, b);
  return angles[angles.size() - 1];
}

// Distance between equal-dimensional subspaces: sin of the largest principal
// angle, i.e. the gap metric. 0 = equal span, 1 = some direction orthogonal.
inline double subspace_distance(const MatrixXd& a, const MatrixXd& b) {
  return std::sin(max_principal_angle(a, b));
}

inline double angle_to_subspace(const VectorXd& v, const MatrixXd& basis) {
  MatrixXd q = orthonormalize(basis);
  double in_plane = (q.transpose() * v).norm();
  double c = std::min(1.0, in_plane / v.norm());
  return std::acos(c);
}

// Basis of span(a) intersect span(b) via the nullspace of [Qa | -Qb]: a null
// vector (x; y) has Qa x = Qb y, which is the intersection vector. Viewed as a
// map from the column space, the stacked matrix has cols singular values, the
// last cols - rows of them identically zero whenever it is wide; the kernel is
// spanned by the trailing right singular vectors. The expected_dim smallest
// values must sit at or below tol (realized intersection) and the one above
// them strictly beyond it, or the kernel is larger than asked for and the
// extracted directions would be arbitrary.
inline MatrixXd subspace_intersection(const MatrixXd& a, const MatrixXd& b,
                                      int expected_dim, double tol = 1e-8) {
  MatrixXd qa = orthonormalize(a), qb = orthonormalize(b);
  MatrixXd stacked(a.rows(), qa.cols() + qb.cols());
  stacked << qa, -qb;
  Eigen::JacobiSVD<MatrixXd> svd(stacked, Eigen::ComputeFullV);
  VectorXd s = svd.singularValues();
  int total = static_cast<int>(stacked.cols());
  auto sval = [&](int idx) {  // descending, zero-padded past the real spectrum
    return idx < s.size() ? s[idx] : 0.0;
  };
  for (int i = 0; i < expected_dim; ++i)
    if (sval(total - 1 - i) > tol)
      throw Error("subspace_intersection: expected dimension not realized");
  if (total - expected_dim - 1 >= 0 && sval(total - expected_dim - 1) <= tol)
    throw Error("subspace_intersection: intersection is degenerate beyond the "
                "expected dimension");
  MatrixXd out(a.rows(), expected_dim);
  for (int i = 0; i < expected_dim; ++i) {
    VectorXd xy = svd.matrixV().col(total - 1 - i);
    out.col(i) = qa * xy.head(qa.cols());
  }
  return orthonormalize(out);
}

// Process-wide worker count, settable from the command line; results never
// depend on it, only wall time does.
inline int& thread_count() {
  static int count = std::max(1u, std::thread::hardware_concurrency());
  return count;
}

// Deterministic parallel map: the index space is split into contiguous chunks,
// each body invocation writes only state owned by its index, and any reduction
// is performed afterwards in index order. Results are independent of the
// thread count.
inline void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  int workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error = nullptr;
  std::mutex error_lock;
  for (int w = 0; w < workers; ++w) {
    int lo = static_cast<int>(static_cast<long long>(n) * w / workers);
    int hi = static_cast<int>(static_cast<long long>(n) * (w + 1) / workers);
    pool.emplace_back([&, lo, hi] {
      try {
        for (int i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> guard(error_lock);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline void parallel_for(int n, const std::function<void(int)>& body) {
  parallel_for(n, thread_count(), body);
}

// Shortest-format decimal that round-trips a double (%.17g), for CSV output.
inline std::string fmt_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf);
}

inline double wrap_unit(double x) {
  double y = x - std::floor(x);
  if (y >= 1.0) y = 0.0;
  return y;
}

}  // namespace skewlab
