#pragma once

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

namespace test_util {

namespace fs = std::filesystem;

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = fs::temp_directory_path() / ("tlv_test_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Compares against tests/golden/<name>. Set TLV_UPDATE_GOLDEN=1 to record.
inline void check_golden(const std::string& name, const std::string& actual) {
    const fs::path path = fs::path(TLV_GOLDEN_DIR) / name;
    if (std::getenv("TLV_UPDATE_GOLDEN")) {
        std::ofstream(path, std::ios::binary) << actual;
        MESSAGE("recorded golden " << path.string());
        return;
    }
    REQUIRE_MESSAGE(fs::exists(path), "missing golden file " << path.string());
    CHECK(read_file(path) == actual);
}

// Naive double loop of the one-directional contrastive loss.
inline double naive_info_nce(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double tau) {
    const auto k = x.rows();
    double total = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
        double denom = 0.0;
        for (Eigen::Index j = 0; j < k; ++j) {
            double dot = 0.0;
            for (Eigen::Index t = 0; t < x.cols(); ++t) dot += x(i, t) * y(j, t);
            denom += std::exp(dot / tau);
        }
        double pos = 0.0;
        for (Eigen::Index t = 0; t < x.cols(); ++t) pos += x(i, t) * y(i, t);
        total += -std::log(std::exp(pos / tau) / denom);
    }
    return total / static_cast<double>(k);
}

inline Eigen::MatrixXd normalized_rows(Eigen::MatrixXd m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i).normalize();
    return m;
}

} // namespace test_util
