#include "test_util.hpp"

#include "tlv/curriculum.hpp"
#include "tlv/error.hpp"
#include "tlv/rng.hpp"

using namespace tlv;

namespace {

CurriculumSchedule schedule(double beta_1, double beta_min, std::int64_t n, bool enabled = true) {
    CurriculumSchedule s;
    s.beta_1 = beta_1;
    s.beta_min = beta_min;
    s.total_steps = n;
    s.enabled = enabled;
    return s;
}

} // namespace

TEST_CASE("beta schedule endpoints and midpoint") {
    const auto s = schedule(0.9, 0.0, 100);
    CHECK(beta_at_step(s, 0) == 0.9);
    CHECK(beta_at_step(s, 100) == 0.0);
    CHECK(beta_at_step(s, 50) == doctest::Approx(0.45).epsilon(1e-15));
}

TEST_CASE("beta schedule is affine and non-increasing") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const double b1 = rng.uniform();
        const double bmin = b1 * rng.uniform();
        const auto n = static_cast<std::int64_t>(1 + rng.below(500));
        const auto s = schedule(b1, bmin, n);
        double previous = beta_at_step(s, 0);
        for (std::int64_t i = 1; i <= n; ++i) {
            const double b = beta_at_step(s, i);
            CHECK(b <= previous);
            const double expected = b1 + (bmin - b1) * static_cast<double>(i) / static_cast<double>(n);
            CHECK(b == doctest::Approx(expected).epsilon(1e-12));
            previous = b;
        }
    }
}

TEST_CASE("disabled schedule always yields zero") {
    const auto s = schedule(0.9, 0.1, 10, false);
    for (std::int64_t i = 0; i <= 10; ++i) CHECK(beta_at_step(s, i) == 0.0);
}

TEST_CASE("beta schedule rejects bad input") {
    CHECK_THROWS_AS(beta_at_step(schedule(0.9, 0.0, 10), 11), DomainError);
    CHECK_THROWS_AS(beta_at_step(schedule(0.9, 0.0, 10), -1), DomainError);
    CHECK_THROWS_AS(beta_at_step(schedule(0.5, 0.6, 10), 0), ConfigError);
    CHECK_THROWS_AS(beta_at_step(schedule(1.2, 0.0, 10), 0), ConfigError);
    CHECK_THROWS_AS(beta_at_step(schedule(0.9, 0.0, 0), 0), ConfigError);
}

TEST_CASE("curriculum mix endpoints and hand example") {
    Eigen::VectorXd v(2), t(2);
    v << 1.0, 0.0;
    t << 0.0, 1.0;
    CHECK(curriculum_mix(v, t, 1.0) == v);
    CHECK(curriculum_mix(v, t, 0.0) == t);
    const Eigen::VectorXd half = curriculum_mix(v, t, 0.5);
    CHECK(half(0) == 0.5);
    CHECK(half(1) == 0.5);
}

TEST_CASE("curriculum mix is linear and norm-bounded") {
    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::MatrixXd v(3, 5), t(3, 5);
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            v.data()[i] = rng.normal();
            t.data()[i] = rng.normal();
        }
        const double beta = rng.uniform();
        const double a = rng.uniform(0.1, 4.0);
        const Eigen::MatrixXd mixed = curriculum_mix(v, t, beta);
        CHECK((curriculum_mix(Eigen::MatrixXd(a * v), Eigen::MatrixXd(a * t), beta) - a * mixed).cwiseAbs().maxCoeff() < 1e-12);
        for (Eigen::Index r = 0; r < 3; ++r) {
            CHECK(mixed.row(r).norm() <= std::max(v.row(r).norm(), t.row(r).norm()) + 1e-12);
        }
    }
}

TEST_CASE("curriculum mix rejects mismatched shapes and bad beta") {
    const Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 3);
    const Eigen::MatrixXd b = Eigen::MatrixXd::Zero(2, 4);
    CHECK_THROWS_AS(curriculum_mix(a, b, 0.5), ShapeError);
    CHECK_THROWS_AS(curriculum_mix(a, a, 1.5), DomainError);
}
