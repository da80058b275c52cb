#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include "climreg/grid_store.hpp"
#include "climreg/numeric.hpp"

namespace testing {

inline climreg::Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                                     double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    climreg::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
    return m;
}

inline climreg::Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    climreg::Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = d(rng);
    return v;
}

// Random rectangular panel on a small lattice starting at (10, 70).
inline climreg::Dataset random_dataset(std::mt19937_64& rng, int cells, int first_year, int years) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<climreg::RawRecord> rows;
    for (int c = 0; c < cells; ++c) {
        for (int y = 0; y < years; ++y) {
            climreg::RawRecord r;
            r.lat = 10.0 + 2.5 * (c / 13);
            r.lon = 70.0 + 2.5 * (c % 13);
            r.year = first_year + y;
            for (auto& v : r.values) v = n(rng);
            rows.push_back(r);
        }
    }
    return climreg::Dataset::from_records(rows);
}

inline std::string csv_of(const climreg::Dataset& ds) {
    std::ostringstream out;
    ds.write_csv(out);
    return out.str();
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("climreg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    std::string operator/(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace testing
