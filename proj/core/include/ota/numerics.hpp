#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace ota {

/// Dense row-major real matrix.
class RealMatrix {
 public:
  RealMatrix() = default;
  RealMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> data() const { return data_; }

  void append_row(std::span<const double> r);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct SingularPair {
  std::vector<double> v1;  // unit right-singular vector
  double sigma1 = 0.0;
  std::size_t iterations = 0;
};

/// Dominant right-singular vector by power iteration on the smaller Gram matrix.
/// Sign convention: the largest-magnitude component of v1 is positive.
/// Throws NumericError for an all-zero or non-finite matrix.
SingularPair first_right_singular(const RealMatrix& m, double tol = 1e-12,
                                  std::size_t max_iterations = 200000);

struct BisectResult {
  double lo = 0.0;  // predicate false side
  double hi = 0.0;  // predicate true side
  std::size_t iterations = 0;
  double mid() const { return 0.5 * (lo + hi); }
};

/// Shrinks [lo, hi] around the switch point of a monotone predicate
/// (false at lo, true at hi). Endpoints are not evaluated. Performs
/// max(1, ceil(log2((hi - lo) / tol))) midpoint evaluations.
BisectResult bisect(const std::function<bool(double)>& pred, double lo, double hi, double tol);

/// Root of a monotone real function with f(lo), f(hi) of opposite sign.
/// Throws BracketError if the endpoints do not bracket a sign change.
double bisect_root(const std::function<double(double)>& f, double lo, double hi, double tol);

std::size_t bisect_iteration_bound(double lo, double hi, double tol);

/// Worker count used by parallel_for; 0 means hardware concurrency.
void set_max_threads(std::size_t n);
std::size_t max_threads();

/// Runs fn(i) for i in [0, n). Work items must write only to their own slot;
/// results are therefore independent of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace ota
