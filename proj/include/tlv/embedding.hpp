#pragma once

#include <Eigen/Dense>

namespace tlv {

// K row-aligned embeddings of one modality.
struct EmbeddingBatch {
    Eigen::MatrixXd rows;
    bool normalized = false;

    Eigen::Index size() const { return rows.rows(); }
    Eigen::Index dim() const { return rows.cols(); }

    // Throws NumericError on non-finite entries, ContractError when flagged
    // normalized but some row is off the unit sphere by more than 1e-6.
    void validate() const;

    // Row-wise L2 normalization; NumericError naming the row on zero norm.
    static EmbeddingBatch normalize(const Eigen::MatrixXd& rows);
};

} // namespace tlv
