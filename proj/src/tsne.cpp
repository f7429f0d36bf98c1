#include "tlv/error.hpp"
#include "tlv/evaluation.hpp"
#include "tlv/image.hpp"
#include "tlv/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

namespace tlv {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Row-conditional affinities with a per-row bandwidth hitting the target perplexity.
MatrixXd conditional_affinities(const MatrixXd& d2, double perplexity) {
    const auto n = d2.rows();
    const double target = std::log(perplexity);
    MatrixXd p = MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
        VectorXd row(n);
        for (int it = 0; it < 200; ++it) {
            double sum = 0.0, weighted = 0.0;
            // Shift by the smallest off-diagonal distance for stability.
            double dmin = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j != i) dmin = std::min(dmin, d2(i, j));
            }
            for (Eigen::Index j = 0; j < n; ++j) {
                row(j) = j == i ? 0.0 : std::exp(-beta * (d2(i, j) - dmin));
                sum += row(j);
                weighted += row(j) * (d2(i, j) - dmin);
            }
            const double entropy = std::log(sum) + beta * weighted / sum;
            row /= sum;
            const double diff = entropy - target;
            if (std::abs(diff) < 1e-5) break;
            if (diff > 0) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        p.row(i) = row.transpose();
    }
    return p;
}

// Explicit loops keep the arithmetic identical for identical rows, so exact
// duplicates follow the same trajectory instead of drifting apart on rounding.
MatrixXd squared_distances(const MatrixXd& x) {
    const auto n = x.rows();
    MatrixXd d2 = MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            double acc = 0.0;
            for (Eigen::Index k = 0; k < x.cols(); ++k) {
                const double diff = x(i, k) - x(j, k);
                acc += diff * diff;
            }
            d2(i, j) = acc;
            d2(j, i) = acc;
        }
    }
    return d2;
}

// Jitter is keyed on the row content so identical rows receive identical offsets.
double content_jitter(const MatrixXd& x, Eigen::Index row, Eigen::Index axis, std::uint64_t seed) {
    std::string bytes(static_cast<std::size_t>(x.cols()) * sizeof(double), '\0');
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
        const double v = x(row, k) == 0.0 ? 0.0 : x(row, k);
        std::memcpy(bytes.data() + k * sizeof(double), &v, sizeof(double));
    }
    Rng rng(derive_seed(derive_seed(seed, "tsne"), bytes, static_cast<std::uint64_t>(axis)));
    return rng.normal(0.0, 1e-6);
}

} // namespace

MatrixXd project_2d(const MatrixXd& x, const TsneOptions& options) {
    const auto n = x.rows();
    if (n < 10) throw DegenerateDataError("t-SNE needs at least 10 points, got " + std::to_string(n));
    if (!x.allFinite()) throw NumericError("t-SNE input contains non-finite values");
    const double perplexity = std::min(options.perplexity, static_cast<double>(n - 1) / 3.0);
    const double learning_rate =
        options.learning_rate > 0 ? options.learning_rate : std::max(static_cast<double>(n) / 48.0, 50.0);

    const MatrixXd conditional = conditional_affinities(squared_distances(x), perplexity);
    const MatrixXd p = ((conditional + conditional.transpose()) / (2.0 * static_cast<double>(n))).cwiseMax(1e-12);

    // PCA initialisation scaled to a small spread.
    const MatrixXd centered = x.rowwise() - x.colwise().mean();
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(centered.transpose() * centered);
    const MatrixXd axes = eig.eigenvectors().rightCols(2).rowwise().reverse();
    MatrixXd y = MatrixXd::Zero(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < 2; ++c) {
            double acc = 0.0;
            for (Eigen::Index k = 0; k < x.cols(); ++k) acc += centered(i, k) * axes(k, c);
            y(i, c) = acc;
        }
    }
    for (Eigen::Index c = 0; c < 2; ++c) {
        // Fix the sign so the result does not depend on the eigen solver.
        Eigen::Index arg;
        y.col(c).cwiseAbs().maxCoeff(&arg);
        if (y(arg, c) < 0) y.col(c) = -y.col(c);
    }
    const double spread = std::sqrt(y.col(0).squaredNorm() / static_cast<double>(n));
    y *= spread > 0 ? 1e-4 / spread : 1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < 2; ++c) y(i, c) += content_jitter(x, i, c, options.seed);
    }

    MatrixXd velocity = MatrixXd::Zero(n, 2);
    MatrixXd gains = MatrixXd::Ones(n, 2);
    MatrixXd num(n, n);
    MatrixXd grad(n, 2);
    constexpr int exaggeration_iters = 250;
    for (int it = 0; it < options.iterations; ++it) {
        const double exaggeration = it < exaggeration_iters ? 12.0 : 1.0;
        const double momentum = it < exaggeration_iters ? 0.5 : 0.8;
        if (it == exaggeration_iters) {
            // The second phase starts its own descent; carrying gains over overshoots.
            velocity.setZero();
            gains.setOnes();
        }
        double z = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            num(i, i) = 0.0;
            for (Eigen::Index j = i + 1; j < n; ++j) {
                const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
                const double q = 1.0 / (1.0 + dx * dx + dy * dy);
                num(i, j) = q;
                num(j, i) = q;
                z += 2.0 * q;
            }
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            double gx = 0.0, gy = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) continue;
                const double w = (exaggeration * p(i, j) - num(i, j) / z) * num(i, j);
                gx += w * (y(i, 0) - y(j, 0));
                gy += w * (y(i, 1) - y(j, 1));
            }
            grad(i, 0) = 4.0 * gx;
            grad(i, 1) = 4.0 * gy;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index c = 0; c < 2; ++c) {
                // Grow the gain while the step keeps descending, shrink it once it overshoots.
                const bool reversed = velocity(i, c) * grad(i, c) < 0.0;
                gains(i, c) = std::max(0.01, reversed ? gains(i, c) + 0.2 : gains(i, c) * 0.8);
            }
        }
        velocity = momentum * velocity - learning_rate * gains.cwiseProduct(grad);
        y += velocity;
        y = y.rowwise() - y.colwise().mean();
    }
    if (!y.allFinite()) throw NumericError("t-SNE diverged");
    return y;
}

void write_projection_csv(const std::filesystem::path& path, const MatrixXd& coords, std::span<const int> labels) {
    if (coords.cols() != 2 || coords.rows() != static_cast<Eigen::Index>(labels.size())) {
        throw ShapeError("projection csv: coordinates and labels disagree");
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "x,y,label\n";
    char buf[96];
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
        std::snprintf(buf, sizeof buf, "%.8g,%.8g,%d\n", coords(i, 0), coords(i, 1), labels[i]);
        out << buf;
    }
}

void write_scatter_png(const std::filesystem::path& path, const MatrixXd& coords, std::span<const int> labels,
                       int size) {
    if (coords.cols() != 2 || coords.rows() != static_cast<Eigen::Index>(labels.size())) {
        throw ShapeError("scatter: coordinates and labels disagree");
    }
    if (size < 32) throw DomainError("scatter: image size too small");
    static constexpr std::array<std::array<std::uint8_t, 3>, 10> palette{{{31, 119, 180},
                                                                         {255, 127, 14},
                                                                         {44, 160, 44},
                                                                         {214, 39, 40},
                                                                         {148, 103, 189},
                                                                         {140, 86, 75},
                                                                         {227, 119, 194},
                                                                         {127, 127, 127},
                                                                         {188, 189, 34},
                                                                         {23, 190, 207}}};
    Image img;
    img.height = size;
    img.width = size;
    img.pixels.assign(static_cast<std::size_t>(size) * size * 3, 255);
    if (coords.rows() == 0) {
        write_png(path, img);
        return;
    }
    const Eigen::RowVector2d lo = coords.colwise().minCoeff();
    const Eigen::RowVector2d hi = coords.colwise().maxCoeff();
    const double margin = 12.0;
    const double span_x = std::max(hi(0) - lo(0), 1e-12);
    const double span_y = std::max(hi(1) - lo(1), 1e-12);
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
        const int cx = static_cast<int>(margin + (coords(i, 0) - lo(0)) / span_x * (size - 2 * margin));
        const int cy = static_cast<int>(margin + (hi(1) - coords(i, 1)) / span_y * (size - 2 * margin));
        const auto& color = palette[static_cast<std::size_t>(std::abs(labels[i])) % palette.size()];
        for (int dy = -3; dy <= 3; ++dy) {
            for (int dx = -3; dx <= 3; ++dx) {
                if (dx * dx + dy * dy > 9) continue;
                const int px = cx + dx, py = cy + dy;
                if (px < 0 || py < 0 || px >= size || py >= size) continue;
                auto* pix = &img.pixels[(static_cast<std::size_t>(py) * size + px) * 3];
                std::copy(color.begin(), color.end(), pix);
            }
        }
    }
    write_png(path, img);
}

} // namespace tlv
