#pragma once

// Dense tableau simplex for  max c'x  s.t.  A x <= b,  x >= 0,  b >= 0.
// The origin is always feasible, so a single phase suffices. Bland's rule
// (smallest eligible index for both entering and leaving) prevents cycling.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "spi/error.hpp"

namespace spi {

enum class SimplexStatus { Optimal, Unbounded, IterationLimit };

template <class T = double>
struct SimplexResult {
  SimplexStatus status = SimplexStatus::Optimal;
  std::vector<T> x;
  T objective{};
  int iterations = 0;
  std::string diagnostics;
};

template <class T = double>
class DenseSimplex {
 public:
  using Matrix = std::vector<std::vector<T>>;

  explicit DenseSimplex(T pivot_tolerance = T(1e-10)) : tol_(pivot_tolerance) {}

  SimplexResult<T> maximize(const Matrix& a, const std::vector<T>& b, const std::vector<T>& c) const {
    const std::size_t rows = b.size();
    const std::size_t cols = c.size();
    if (a.size() != rows) throw ValidationError("simplex: row count mismatch");
    for (const auto& row : a)
      if (row.size() != cols) throw ValidationError("simplex: column count mismatch");
    for (const T& bi : b)
      if (!(bi >= T(0))) throw ValidationError("simplex: right-hand sides must be nonnegative");

    // tableau columns: structural [0, cols), slack [cols, cols + rows), rhs last
    const std::size_t width = cols + rows + 1;
    Matrix tab(rows, std::vector<T>(width, T(0)));
    std::vector<std::size_t> basis(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      T scale = T(0);
      for (const T& v : a[i]) scale = std::max(scale, std::abs(v));
      if (scale == T(0)) scale = T(1);
      for (std::size_t j = 0; j < cols; ++j) tab[i][j] = a[i][j] / scale;
      tab[i][cols + i] = T(1) / scale;
      tab[i][width - 1] = b[i] / scale;
      basis[i] = cols + i;
    }
    // reduced costs of a maximization; optimal when none is positive
    std::vector<T> reduced(width, T(0));
    for (std::size_t j = 0; j < cols; ++j) reduced[j] = c[j];

    SimplexResult<T> result;
    const int max_iterations = static_cast<int>(50 * (rows + cols) + 1000);
    for (;;) {
      std::size_t entering = width;
      for (std::size_t j = 0; j + 1 < width; ++j) {
        if (reduced[j] > tol_) {
          entering = j;
          break;
        }
      }
      if (entering == width) break;

      if (result.iterations >= max_iterations) {
        result.status = SimplexStatus::IterationLimit;
        result.diagnostics = "iteration limit reached after " + std::to_string(result.iterations) + " pivots";
        return result;
      }

      std::size_t leaving = rows;
      T best_ratio{};
      for (std::size_t i = 0; i < rows; ++i) {
        const T coeff = tab[i][entering];
        if (coeff <= tol_) continue;
        const T ratio = tab[i][width - 1] / coeff;
        if (leaving == rows || ratio < best_ratio - tol_ ||
            (std::abs(ratio - best_ratio) <= tol_ && basis[i] < basis[leaving])) {
          leaving = i;
          best_ratio = ratio;
        }
      }
      if (leaving == rows) {
        result.status = SimplexStatus::Unbounded;
        result.diagnostics = "column " + std::to_string(entering) + " has no positive pivot";
        return result;
      }

      pivot(tab, reduced, leaving, entering);
      basis[leaving] = entering;
      ++result.iterations;
    }

    result.x.assign(cols, T(0));
    for (std::size_t i = 0; i < rows; ++i)
      if (basis[i] < cols) result.x[basis[i]] = std::max(T(0), tab[i][width - 1]);
    result.objective = T(0);
    for (std::size_t j = 0; j < cols; ++j) result.objective += c[j] * result.x[j];
    return result;
  }

 private:
  static void pivot(Matrix& tab, std::vector<T>& reduced, std::size_t row, std::size_t col) {
    auto& pr = tab[row];
    const T inv = T(1) / pr[col];
    for (auto& v : pr) v *= inv;
    pr[col] = T(1);
    for (std::size_t i = 0; i < tab.size(); ++i) {
      if (i == row) continue;
      const T f = tab[i][col];
      if (f == T(0)) continue;
      for (std::size_t j = 0; j < pr.size(); ++j) tab[i][j] -= f * pr[j];
      tab[i][col] = T(0);
    }
    const T f = reduced[col];
    for (std::size_t j = 0; j < pr.size(); ++j) reduced[j] -= f * pr[j];
    reduced[col] = T(0);
  }

  T tol_;
};

}  // namespace spi
