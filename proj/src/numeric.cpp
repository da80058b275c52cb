#include "climreg/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <atomic>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "climreg/errors.hpp"

namespace climreg {

Scaler Scaler::identity(Eigen::Index dim) {
    return {Vector::Zero(dim), Vector::Ones(dim)};
}

Matrix Scaler::transform(const Matrix& points) const {
    if (points.cols() != dim()) fail(Errc::DimensionMismatch, "scaler dimension mismatch");
    Matrix out = points;
    out.rowwise() -= mean.transpose();
    out.array().rowwise() /= scale.transpose().array();
    return out;
}

Vector Scaler::transform(const Vector& point) const {
    if (point.size() != dim()) fail(Errc::DimensionMismatch, "scaler dimension mismatch");
    return ((point - mean).array() / scale.array()).matrix();
}

Matrix Scaler::inverse(const Matrix& standardized) const {
    if (standardized.cols() != dim()) fail(Errc::DimensionMismatch, "scaler dimension mismatch");
    Matrix out = standardized;
    out.array().rowwise() *= scale.transpose().array();
    out.rowwise() += mean.transpose();
    return out;
}

Vector Scaler::inverse(const Vector& standardized) const {
    if (standardized.size() != dim()) fail(Errc::DimensionMismatch, "scaler dimension mismatch");
    return (standardized.array() * scale.array()).matrix() + mean;
}

Scaler fit_scaler(const Matrix& points) {
    if (points.rows() < 2) fail(Errc::TooFewPoints, "standardization needs at least 2 points");
    if (!points.allFinite()) fail(Errc::NonFiniteInput, "non-finite value in points");
    const double n = static_cast<double>(points.rows());
    Scaler s;
    s.mean = points.colwise().mean().transpose();
    s.scale.resize(points.cols());
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
        const double var = (points.col(j).array() - s.mean(j)).square().sum() / n;
        const double sd = std::sqrt(var);
        // Constant columns (up to rounding of the mean) keep unit scale.
        s.scale(j) = sd > 1e-12 * std::max(1.0, std::abs(s.mean(j))) ? sd : 1.0;
    }
    return s;
}

Standardized standardize(const Matrix& points) {
    Scaler s = fit_scaler(points);
    Matrix z = s.transform(points);
    return {std::move(z), std::move(s)};
}

std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t folds, std::uint64_t seed) {
    if (folds < 1) fail(Errc::InvalidArgument, "fold count must be positive");
    if (n < folds) {
        fail(Errc::TooFewSamples, std::to_string(n) + " samples cannot fill " + std::to_string(folds) + " folds");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::vector<std::size_t>> out(folds);
    const std::size_t base = n / folds;
    const std::size_t extra = n % folds;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < folds; ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        out[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                      order.begin() + static_cast<std::ptrdiff_t>(pos + size));
        std::sort(out[f].begin(), out[f].end());
        pos += size;
    }
    return out;
}

std::vector<std::size_t> training_indices(const std::vector<std::vector<std::size_t>>& folds,
                                          std::size_t f) {
    std::vector<std::size_t> out;
    for (std::size_t g = 0; g < folds.size(); ++g) {
        if (g != f) out.insert(out.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(out.begin(), out.end());
    return out;
}

Matrix select_rows(const Matrix& points, const std::vector<std::size_t>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), points.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = points.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

Vector select_rows(const Vector& values, const std::vector<std::size_t>& rows) {
    Vector out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out(static_cast<Eigen::Index>(i)) = values(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

unsigned default_threads() noexcept {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::size_t first_error_index = count;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                // Report the lowest-index failure, as a sequential loop would.
                if (i < first_error_index) {
                    first_error_index = i;
                    first_error = std::current_exception();
                }
            }
        }
    };
    const auto n_workers = std::min<std::size_t>(threads, count);
    std::vector<std::jthread> pool;
    pool.reserve(n_workers);
    for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    pool.clear();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace climreg
