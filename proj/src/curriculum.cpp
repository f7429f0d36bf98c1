#include "tlv/curriculum.hpp"

#include "tlv/error.hpp"

#include <string>

namespace tlv {

void CurriculumSchedule::validate() const {
    if (!(beta_min >= 0.0 && beta_min <= beta_1 && beta_1 <= 1.0)) {
        throw ConfigError("curriculum requires 0 <= beta_min <= beta_1 <= 1");
    }
    if (total_steps < 1) throw ConfigError("curriculum total_steps must be >= 1");
}

double beta_at_step(const CurriculumSchedule& s, std::int64_t step) {
    s.validate();
    if (step < 0 || step > s.total_steps) {
        throw DomainError("step " + std::to_string(step) + " outside [0, " + std::to_string(s.total_steps) + "]");
    }
    if (!s.enabled) return 0.0;
    if (step == s.total_steps) return s.beta_min;
    return s.beta_1 - (static_cast<double>(step) / static_cast<double>(s.total_steps)) * (s.beta_1 - s.beta_min);
}

namespace {

void check_beta(double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError("beta must lie in [0, 1]");
}

} // namespace

Eigen::MatrixXd curriculum_mix(const Eigen::MatrixXd& vision, const Eigen::MatrixXd& touch, double beta) {
    if (vision.rows() != touch.rows() || vision.cols() != touch.cols()) {
        throw ShapeError("curriculum_mix: vision and touch embeddings differ in shape");
    }
    check_beta(beta);
    if (beta == 0.0) return touch;
    if (beta == 1.0) return vision;
    return beta * vision + (1.0 - beta) * touch;
}

Eigen::VectorXd curriculum_mix(const Eigen::VectorXd& vision, const Eigen::VectorXd& touch, double beta) {
    return curriculum_mix(Eigen::MatrixXd(vision), Eigen::MatrixXd(touch), beta);
}

} // namespace tlv
