#include "ota/numerics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "ota/error.hpp"
#include "ota/types.hpp"

namespace ota {

RVec to_real(std::span<const cdouble> v) {
  const std::size_t p = v.size();
  RVec r(2 * p);
  for (std::size_t i = 0; i < p; ++i) {
    r[i] = v[i].real();
    r[p + i] = v[i].imag();
  }
  return r;
}

CVec to_complex(std::span<const double> r) {
  if (r.size() % 2 != 0) throw ShapeError("real vector length must be even, got " + std::to_string(r.size()));
  const std::size_t p = r.size() / 2;
  CVec v(p);
  for (std::size_t i = 0; i < p; ++i) v[i] = {r[i], r[p + i]};
  return v;
}

double energy(std::span<const cdouble> v) {
  double s = 0.0;
  for (const auto& z : v) s += std::norm(z);
  return s;
}

double mean_power(std::span<const cdouble> v) { return v.empty() ? 0.0 : energy(v) / static_cast<double>(v.size()); }

double norm2(std::span<const cdouble> v) { return std::sqrt(energy(v)); }

void RealMatrix::append_row(std::span<const double> r) {
  if (rows_ == 0 && cols_ == 0) cols_ = r.size();
  if (r.size() != cols_) throw ShapeError("row length " + std::to_string(r.size()) + " != " + std::to_string(cols_));
  data_.insert(data_.end(), r.begin(), r.end());
  ++rows_;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  for (auto& x : v) x /= n;
}

}  // namespace

SingularPair first_right_singular(const RealMatrix& m, double tol, std::size_t max_iterations) {
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  if (rows == 0 || cols == 0) throw NumericError("first_right_singular: empty matrix");
  double scale = 0.0;
  for (double x : m.data()) {
    if (!std::isfinite(x)) throw NumericError("first_right_singular: non-finite entry");
    scale = std::max(scale, std::abs(x));
  }
  if (scale == 0.0) throw NumericError("first_right_singular: all-zero matrix");

  // Work on whichever Gram matrix is smaller: M^T M (cols x cols) gives v1
  // directly, M M^T (rows x rows) gives u1 and then v1 = M^T u1 / sigma1.
  const bool use_rows = rows < cols;
  const std::size_t n = use_rows ? rows : cols;
  std::vector<double> gram(n * n, 0.0);
  if (use_rows) {
    for (std::size_t a = 0; a < rows; ++a)
      for (std::size_t b = a; b < rows; ++b) gram[a * n + b] = gram[b * n + a] = dot(m.row(a), m.row(b));
  } else {
    for (std::size_t r = 0; r < rows; ++r) {
      const auto row = m.row(r);
      for (std::size_t a = 0; a < cols; ++a) {
        const double ra = row[a];
        if (ra == 0.0) continue;
        for (std::size_t b = a; b < cols; ++b) gram[a * n + b] += ra * row[b];
      }
    }
    for (std::size_t a = 0; a < cols; ++a)
      for (std::size_t b = a + 1; b < cols; ++b) gram[b * n + a] = gram[a * n + b];
  }

  // Deterministic start: the Gram row with the largest diagonal plus a small
  // all-ones component so the start is never orthogonal to the dominant subspace.
  std::size_t pivot = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (gram[i * n + i] > gram[pivot * n + pivot]) pivot = i;
  std::vector<double> x(gram.begin() + static_cast<std::ptrdiff_t>(pivot * n),
                        gram.begin() + static_cast<std::ptrdiff_t>((pivot + 1) * n));
  const double bump = 1e-3 * std::sqrt(dot(x, x) / static_cast<double>(n));
  for (auto& e : x) e += bump;
  normalize(x);

  std::vector<double> y(n);
  std::size_t it = 0;
  for (; it < max_iterations; ++it) {
    for (std::size_t a = 0; a < n; ++a) y[a] = dot(std::span<const double>(gram.data() + a * n, n), x);
    const double ny = std::sqrt(dot(y, y));
    if (ny == 0.0) throw NumericError("first_right_singular: power iteration collapsed");
    double diff = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      y[a] /= ny;
      diff = std::max(diff, std::abs(y[a] - x[a]));
    }
    x.swap(y);
    if (diff < tol) {
      ++it;
      break;
    }
  }

  std::vector<double> v1(cols, 0.0);
  if (use_rows) {
    for (std::size_t r = 0; r < rows; ++r) {
      const auto row = m.row(r);
      for (std::size_t c = 0; c < cols; ++c) v1[c] += x[r] * row[c];
    }
    normalize(v1);
  } else {
    v1 = x;
  }
  std::size_t big = 0;
  for (std::size_t c = 1; c < cols; ++c)
    if (std::abs(v1[c]) > std::abs(v1[big])) big = c;
  if (v1[big] < 0.0)
    for (auto& e : v1) e = -e;

  double s2 = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double d = dot(m.row(r), v1);
    s2 += d * d;
  }
  return {std::move(v1), std::sqrt(s2), it};
}

std::size_t bisect_iteration_bound(double lo, double hi, double tol) {
  const double ratio = (hi - lo) / tol;
  if (ratio <= 1.0) return 1;
  return static_cast<std::size_t>(std::ceil(std::log2(ratio)));
}

BisectResult bisect(const std::function<bool(double)>& pred, double lo, double hi, double tol) {
  if (!(tol > 0.0)) throw ConfigError("bisect: tolerance must be positive");
  if (!(hi > lo)) throw ConfigError("bisect: empty interval");
  BisectResult r{lo, hi, 0};
  do {
    const double m = r.mid();
    if (pred(m))
      r.hi = m;
    else
      r.lo = m;
    ++r.iterations;
  } while (r.hi - r.lo > tol);
  return r;
}

double bisect_root(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const double flo = f(lo);
  const double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo < 0.0) == (fhi < 0.0))
    throw BracketError("bisect_root: f(lo) and f(hi) have the same sign");
  const bool rising = fhi > 0.0;
  return bisect([&](double x) { return (f(x) >= 0.0) == rising; }, lo, hi, tol).mid();
}

namespace {
std::atomic<std::size_t> g_max_threads{0};
thread_local bool t_in_worker = false;  // nested loops run inline
}

void set_max_threads(std::size_t n) { g_max_threads = n; }

std::size_t max_threads() {
  const std::size_t n = g_max_threads.load();
  if (n != 0) return n;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = t_in_worker ? 1 : std::min(max_threads(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_at = n;
  std::exception_ptr failure;
  auto work = [&] {
    const bool outer = t_in_worker;
    t_in_worker = true;
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        // Keep the lowest failing index so the surfaced error is deterministic.
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
      }
    }
    t_in_worker = outer;
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace ota
