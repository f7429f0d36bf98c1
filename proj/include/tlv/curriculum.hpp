#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace tlv {

// Teacher (vision) weight schedule. With enabled == false the curriculum
// representation degenerates to the touch embedding alone.
struct CurriculumSchedule {
    double beta_1 = 0.9;
    double beta_min = 0.0;
    std::int64_t total_steps = 1;
    bool enabled = true;

    void validate() const;
};

// beta_1 - (step / N) * (beta_1 - beta_min), or 0 when disabled.
double beta_at_step(const CurriculumSchedule& schedule, std::int64_t step);

// beta * vision + (1 - beta) * touch, element-wise. Works for single rows
// and for whole batches (one beta per step).
Eigen::MatrixXd curriculum_mix(const Eigen::MatrixXd& vision, const Eigen::MatrixXd& touch, double beta);
Eigen::VectorXd curriculum_mix(const Eigen::VectorXd& vision, const Eigen::VectorXd& touch, double beta);

} // namespace tlv
