#pragma once

// Minimal reverse-mode automatic differentiation over dense double
// matrices. Graph nodes are created by the free functions below; calling
// backward() on a 1x1 result accumulates gradients into every node that
// requires them. Nodes that do not depend on a gradient-requiring leaf keep
// no parents, so forward-only evaluation retains no graph.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace tlv::ag {

using Mat = Eigen::MatrixXd;

struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    // Gradient buffer, zero-filled on first use.
    Mat& grad_buffer();
    void zero_grad();
};

using Var = std::shared_ptr<Node>;

Var leaf(Mat value, bool requires_grad = false);

// Seeds d(root)/d(root) = 1 and runs the recorded backward closures in
// reverse topological order.
void backward(const Var& root);

// Contiguous rows [offset, offset + length) forming one sequence.
struct Segment {
    Eigen::Index offset = 0;
    Eigen::Index length = 0;
};

std::vector<Segment> uniform_segments(Eigen::Index count, Eigen::Index length);

Var add(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var matmul(const Var& a, const Var& b);
// a * b^T
Var matmul_nt(const Var& a, const Var& b);
// x * W^T + bias, bias is 1 x out (may be null).
Var linear(const Var& x, const Var& weight, const Var& bias);
Var gelu(const Var& x);
// Row-wise layer normalization; gamma and beta are 1 x width.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
// Multi-head scaled dot-product self-attention within each segment.
Var attention(const Var& q, const Var& k, const Var& v, std::span<const Segment> segments, int heads);
// Adds pos.row(j) to the j-th row of every segment.
Var add_positional(const Var& x, const Var& pos, std::span<const Segment> segments);
Var segment_mean(const Var& x, std::span<const Segment> segments);
Var embedding(const Var& table, std::span<const int> ids);
// Throws NumericError naming the row when a row has zero norm.
Var l2_normalize_rows(const Var& x);
// beta * a + (1 - beta) * b
Var mix(const Var& a, const Var& b, double beta);
// Contrastive loss with x rows as anchors over y rows as candidates. With
// symmetric = true the y -> x direction is averaged in.
Var info_nce(const Var& x, const Var& y, double tau, bool symmetric = false);

// Plain kernels shared with the non-differentiable API.
double gelu_value(double x);
// Returns the loss; when `grad_logits` is non-null it receives dL/dS for
// S = x y^T / tau.
double info_nce_kernel(const Mat& x, const Mat& y, double tau, bool symmetric, Mat* grad_logits);

} // namespace tlv::ag
