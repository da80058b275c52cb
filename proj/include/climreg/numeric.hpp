#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace climreg {

// Points are stored one per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Per-dimension affine standardization z = (x - mean) / scale. Population
// standard deviation is used; constant dimensions get scale 1.
struct Scaler {
    Vector mean;
    Vector scale;

    static Scaler identity(Eigen::Index dim);
    Eigen::Index dim() const noexcept { return mean.size(); }

    Matrix transform(const Matrix& points) const;
    Vector transform(const Vector& point) const;
    Matrix inverse(const Matrix& standardized) const;
    Vector inverse(const Vector& standardized) const;
};

struct Standardized {
    Matrix points;
    Scaler scaler;
};

Scaler fit_scaler(const Matrix& points);
Standardized standardize(const Matrix& points);

// Partition of {0..n-1} into `folds` disjoint index sets after a seeded
// shuffle. Fold sizes differ by at most one; indices within a fold are sorted.
std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t folds, std::uint64_t seed);

// Complement of fold `f` in {0..n-1}, sorted.
std::vector<std::size_t> training_indices(const std::vector<std::vector<std::size_t>>& folds,
                                          std::size_t f);

Matrix select_rows(const Matrix& points, const std::vector<std::size_t>& rows);
Vector select_rows(const Vector& values, const std::vector<std::size_t>& rows);

// Independent per-task seed derived from a master seed (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept;

// Runs fn(0..count-1) on up to `threads` workers. Tasks must write only to
// their own output slot so the result does not depend on scheduling.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn);

unsigned default_threads() noexcept;

}  // namespace climreg
