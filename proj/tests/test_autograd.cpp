#include "test_util.hpp"

#include "tlv/autograd.hpp"
#include "tlv/error.hpp"
#include "tlv/rng.hpp"

#include <functional>
#include <vector>

using namespace tlv;
using ag::Mat;
using ag::Var;

namespace {

Mat random_mat(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    return m;
}

// Reduces any node to a scalar through fixed random projections u^T X v.
Var project_scalar(const Var& x, std::uint64_t seed) {
    Rng rng(seed);
    const Var u = ag::leaf(random_mat(rng, 1, x->value.rows()));
    const Var v = ag::leaf(random_mat(rng, x->value.cols(), 1));
    return ag::matmul(ag::matmul(u, x), v);
}

// Central finite differences over every entry of every leaf.
void check_gradients(std::vector<Var> leaves, const std::function<Var()>& f, double tol = 1e-6) {
    for (auto& l : leaves) l->zero_grad();
    ag::backward(f());
    const double h = 1e-5;
    for (auto& l : leaves) {
        const Mat analytic = l->grad;
        REQUIRE(analytic.rows() == l->value.rows());
        for (Eigen::Index i = 0; i < l->value.size(); ++i) {
            const double saved = l->value.data()[i];
            l->value.data()[i] = saved + h;
            const double up = f()->value(0, 0);
            l->value.data()[i] = saved - h;
            const double down = f()->value(0, 0);
            l->value.data()[i] = saved;
            const double numeric = (up - down) / (2 * h);
            const double a = analytic.data()[i];
            CHECK(std::abs(a - numeric) <= tol * std::max(1.0, std::abs(numeric)));
        }
    }
}

} // namespace

TEST_CASE("elementwise and matrix ops have correct gradients") {
    Rng rng(1);
    auto a = ag::leaf(random_mat(rng, 3, 4), true);
    auto b = ag::leaf(random_mat(rng, 3, 4), true);
    auto w = ag::leaf(random_mat(rng, 5, 4), true);
    auto bias = ag::leaf(random_mat(rng, 1, 5), true);
    check_gradients({a, b}, [&] { return project_scalar(ag::add(a, ag::scale(b, -0.7)), 11); });
    check_gradients({a, b}, [&] { return project_scalar(ag::mix(a, b, 0.3), 12); });
    check_gradients({a, w}, [&] { return project_scalar(ag::matmul_nt(a, w), 13); });
    check_gradients({a, w, bias}, [&] { return project_scalar(ag::linear(a, w, bias), 14); });
    check_gradients({a}, [&] { return project_scalar(ag::gelu(a), 15); });
}

TEST_CASE("layer norm and normalization have correct gradients") {
    Rng rng(2);
    auto x = ag::leaf(random_mat(rng, 4, 6), true);
    auto gamma = ag::leaf(random_mat(rng, 1, 6), true);
    auto beta = ag::leaf(random_mat(rng, 1, 6), true);
    check_gradients({x, gamma, beta}, [&] { return project_scalar(ag::layer_norm(x, gamma, beta), 21); });
    check_gradients({x}, [&] { return project_scalar(ag::l2_normalize_rows(x), 22); });
}

TEST_CASE("sequence ops have correct gradients") {
    Rng rng(3);
    const auto segments = ag::uniform_segments(2, 3);
    auto q = ag::leaf(random_mat(rng, 6, 4), true);
    auto k = ag::leaf(random_mat(rng, 6, 4), true);
    auto v = ag::leaf(random_mat(rng, 6, 4), true);
    auto pos = ag::leaf(random_mat(rng, 3, 4), true);
    check_gradients({q, k, v}, [&] { return project_scalar(ag::attention(q, k, v, segments, 2), 31); });
    check_gradients({q, pos}, [&] { return project_scalar(ag::add_positional(q, pos, segments), 32); });
    check_gradients({q}, [&] { return project_scalar(ag::segment_mean(q, segments), 33); });

    auto table = ag::leaf(random_mat(rng, 7, 3), true);
    const std::vector<int> ids{4, 0, 4, 6};
    check_gradients({table}, [&] { return project_scalar(ag::embedding(table, ids), 34); });
}

TEST_CASE("contrastive loss has correct gradients in both variants") {
    Rng rng(4);
    auto x = ag::leaf(random_mat(rng, 5, 3), true);
    auto y = ag::leaf(random_mat(rng, 5, 3), true);
    for (bool symmetric : {false, true}) {
        check_gradients({x, y}, [&] {
            return ag::info_nce(ag::l2_normalize_rows(x), ag::l2_normalize_rows(y), 0.5, symmetric);
        });
    }
}

TEST_CASE("contrastive kernel matches the naive double loop") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto k = static_cast<Eigen::Index>(1 + rng.below(8));
        const auto d = static_cast<Eigen::Index>(1 + rng.below(16));
        const Mat x = test_util::normalized_rows(random_mat(rng, k, d));
        const Mat y = test_util::normalized_rows(random_mat(rng, k, d));
        const double tau = rng.uniform(0.05, 2.0);
        CHECK(ag::info_nce_kernel(x, y, tau, false, nullptr) ==
              doctest::Approx(test_util::naive_info_nce(x, y, tau)).epsilon(1e-12));
        const double sym = 0.5 * (test_util::naive_info_nce(x, y, tau) + test_util::naive_info_nce(y, x, tau));
        CHECK(ag::info_nce_kernel(x, y, tau, true, nullptr) == doctest::Approx(sym).epsilon(1e-12));
    }
}

TEST_CASE("zero-norm rows are reported by index") {
    Mat m = Mat::Ones(3, 2);
    m.row(1).setZero();
    try {
        ag::l2_normalize_rows(ag::leaf(m));
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("row 1") != std::string::npos);
    }
}

TEST_CASE("forward-only evaluation keeps no graph") {
    auto a = ag::leaf(Mat::Ones(2, 2));
    auto b = ag::leaf(Mat::Ones(2, 2));
    CHECK(ag::add(a, b)->parents.empty());
    auto c = ag::leaf(Mat::Ones(2, 2), true);
    CHECK(ag::add(a, c)->parents.size() == 2);
}
