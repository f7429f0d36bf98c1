#include "tlv/autograd.hpp"

#include "tlv/error.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <unordered_set>

namespace tlv::ag {

Mat& Node::grad_buffer() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
        grad = Mat::Zero(value.rows(), value.cols());
    }
    return grad;
}

void Node::zero_grad() {
    grad = Mat::Zero(value.rows(), value.cols());
}

Var leaf(Mat value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

namespace {

Var make_node(Mat value, std::vector<Var> parents, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const auto& p : parents) {
        if (p && p->requires_grad) {
            n->requires_grad = true;
            break;
        }
    }
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward = std::move(fn);
    }
    return n;
}

bool wants(const Var& v) { return v && v->requires_grad; }

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
    }
}

} // namespace

void backward(const Var& root) {
    if (root->value.size() != 1) throw ShapeError("backward: root must be a scalar");
    if (!root->requires_grad) return;

    // Iterative post-order DFS for a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p && p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->grad_buffer().setConstant(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward) n->backward(*n);
    }
}

std::vector<Segment> uniform_segments(Eigen::Index count, Eigen::Index length) {
    std::vector<Segment> out(static_cast<std::size_t>(count));
    for (Eigen::Index i = 0; i < count; ++i) out[i] = {i * length, length};
    return out;
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "add");
    return make_node(a->value + b->value, {a, b}, [](Node& self) {
        if (wants(self.parents[0])) self.parents[0]->grad_buffer() += self.grad;
        if (wants(self.parents[1])) self.parents[1]->grad_buffer() += self.grad;
    });
}

Var scale(const Var& a, double s) {
    return make_node(s * a->value, {a}, [s](Node& self) { self.parents[0]->grad_buffer() += s * self.grad; });
}

Var mix(const Var& a, const Var& b, double beta) {
    return add(scale(a, beta), scale(b, 1.0 - beta));
}

Var matmul(const Var& a, const Var& b) {
    if (a->value.cols() != b->value.rows()) throw ShapeError("matmul: inner dimensions differ");
    return make_node(a->value * b->value, {a, b}, [](Node& self) {
        const auto& A = self.parents[0];
        const auto& B = self.parents[1];
        if (wants(A)) A->grad_buffer().noalias() += self.grad * B->value.transpose();
        if (wants(B)) B->grad_buffer().noalias() += A->value.transpose() * self.grad;
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    if (a->value.cols() != b->value.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
    return make_node(a->value * b->value.transpose(), {a, b}, [](Node& self) {
        const auto& A = self.parents[0];
        const auto& B = self.parents[1];
        if (wants(A)) A->grad_buffer().noalias() += self.grad * B->value;
        if (wants(B)) B->grad_buffer().noalias() += self.grad.transpose() * A->value;
    });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
    if (x->value.cols() != weight->value.cols()) {
        throw ShapeError("linear: input width " + std::to_string(x->value.cols()) + " != weight columns " +
                         std::to_string(weight->value.cols()));
    }
    Mat out = x->value * weight->value.transpose();
    if (bias) {
        if (bias->value.rows() != 1 || bias->value.cols() != weight->value.rows()) {
            throw ShapeError("linear: bias must be 1 x out");
        }
        out.rowwise() += bias->value.row(0);
    }
    return make_node(std::move(out), {x, weight, bias}, [](Node& self) {
        const auto& X = self.parents[0];
        const auto& W = self.parents[1];
        const auto& b = self.parents[2];
        if (wants(X)) X->grad_buffer().noalias() += self.grad * W->value;
        if (wants(W)) W->grad_buffer().noalias() += self.grad.transpose() * X->value;
        if (wants(b)) b->grad_buffer() += self.grad.colwise().sum();
    });
}

double gelu_value(double x) {
    constexpr double c = 0.7978845608028654; // sqrt(2 / pi)
    return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

Var gelu(const Var& x) {
    Mat out = x->value.unaryExpr([](double v) { return gelu_value(v); });
    return make_node(std::move(out), {x}, [](Node& self) {
        constexpr double c = 0.7978845608028654;
        const Mat& in = self.parents[0]->value;
        Mat d = in.unaryExpr([](double v) {
            const double t = std::tanh(c * (v + 0.044715 * v * v * v));
            return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044715 * v * v);
        });
        self.parents[0]->grad_buffer() += self.grad.cwiseProduct(d);
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Mat& in = x->value;
    const auto width = in.cols();
    if (gamma->value.cols() != width || beta->value.cols() != width) {
        throw ShapeError("layer_norm: parameter width mismatch");
    }
    Mat xhat(in.rows(), width);
    Eigen::VectorXd inv_std(in.rows());
    for (Eigen::Index r = 0; r < in.rows(); ++r) {
        const double mean = in.row(r).mean();
        const double var = (in.row(r).array() - mean).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (in.row(r).array() - mean) * inv_std(r);
    }
    Mat out = xhat;
    for (Eigen::Index r = 0; r < in.rows(); ++r) {
        out.row(r) = xhat.row(r).cwiseProduct(gamma->value.row(0)) + beta->value.row(0);
    }
    return make_node(std::move(out), {x, gamma, beta},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                         const auto& X = self.parents[0];
                         const auto& G = self.parents[1];
                         const auto& B = self.parents[2];
                         if (wants(G)) G->grad_buffer() += self.grad.cwiseProduct(xhat).colwise().sum();
                         if (wants(B)) B->grad_buffer() += self.grad.colwise().sum();
                         if (!wants(X)) return;
                         Mat& dx = X->grad_buffer();
                         const double n = static_cast<double>(xhat.cols());
                         for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                             Eigen::RowVectorXd dxhat = self.grad.row(r).cwiseProduct(G->value.row(0));
                             const double mean_d = dxhat.sum() / n;
                             const double mean_dx = dxhat.dot(xhat.row(r)) / n;
                             dx.row(r) += inv_std(r) *
                                          (dxhat.array() - mean_d - xhat.row(r).array() * mean_dx).matrix();
                         }
                     });
}

Var attention(const Var& q, const Var& k, const Var& v, std::span<const Segment> segments, int heads) {
    require_same_shape(q->value, k->value, "attention");
    require_same_shape(q->value, v->value, "attention");
    const auto width = q->value.cols();
    if (heads <= 0 || width % heads != 0) throw ShapeError("attention: width not divisible by heads");
    const Eigen::Index dh = width / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    Mat out = Mat::Zero(q->value.rows(), width);
    std::vector<Mat> probs;
    probs.reserve(segments.size() * heads);
    for (const auto& seg : segments) {
        for (int h = 0; h < heads; ++h) {
            const auto Q = q->value.block(seg.offset, h * dh, seg.length, dh);
            const auto K = k->value.block(seg.offset, h * dh, seg.length, dh);
            const auto V = v->value.block(seg.offset, h * dh, seg.length, dh);
            Mat s = (Q * K.transpose()) * inv_sqrt;
            for (Eigen::Index r = 0; r < s.rows(); ++r) {
                const double mx = s.row(r).maxCoeff();
                s.row(r) = (s.row(r).array() - mx).exp();
                s.row(r) /= s.row(r).sum();
            }
            out.block(seg.offset, h * dh, seg.length, dh).noalias() = s * V;
            probs.push_back(std::move(s));
        }
    }
    std::vector<Segment> segs(segments.begin(), segments.end());
    return make_node(std::move(out), {q, k, v},
                     [probs = std::move(probs), segs = std::move(segs), heads, dh, inv_sqrt](Node& self) {
                         const auto& Qv = self.parents[0];
                         const auto& Kv = self.parents[1];
                         const auto& Vv = self.parents[2];
                         std::size_t idx = 0;
                         for (const auto& seg : segs) {
                             for (int h = 0; h < heads; ++h, ++idx) {
                                 const Mat& P = probs[idx];
                                 const auto dO = self.grad.block(seg.offset, h * dh, seg.length, dh);
                                 const auto Q = Qv->value.block(seg.offset, h * dh, seg.length, dh);
                                 const auto K = Kv->value.block(seg.offset, h * dh, seg.length, dh);
                                 const auto V = Vv->value.block(seg.offset, h * dh, seg.length, dh);
                                 if (wants(Vv)) {
                                     Vv->grad_buffer().block(seg.offset, h * dh, seg.length, dh).noalias() +=
                                         P.transpose() * dO;
                                 }
                                 if (!wants(Qv) && !wants(Kv)) continue;
                                 Mat dP = dO * V.transpose();
                                 Eigen::VectorXd row_dot = dP.cwiseProduct(P).rowwise().sum();
                                 Mat dS = P.cwiseProduct(dP.colwise() - row_dot) * inv_sqrt;
                                 if (wants(Qv)) {
                                     Qv->grad_buffer().block(seg.offset, h * dh, seg.length, dh).noalias() += dS * K;
                                 }
                                 if (wants(Kv)) {
                                     Kv->grad_buffer().block(seg.offset, h * dh, seg.length, dh).noalias() +=
                                         dS.transpose() * Q;
                                 }
                             }
                         }
                     });
}

Var add_positional(const Var& x, const Var& pos, std::span<const Segment> segments) {
    if (x->value.cols() != pos->value.cols()) throw ShapeError("add_positional: width mismatch");
    Mat out = x->value;
    for (const auto& seg : segments) {
        if (seg.length > pos->value.rows()) throw ShapeError("add_positional: sequence longer than table");
        out.middleRows(seg.offset, seg.length) += pos->value.topRows(seg.length);
    }
    std::vector<Segment> segs(segments.begin(), segments.end());
    return make_node(std::move(out), {x, pos}, [segs = std::move(segs)](Node& self) {
        const auto& X = self.parents[0];
        const auto& P = self.parents[1];
        if (wants(X)) X->grad_buffer() += self.grad;
        if (!wants(P)) return;
        Mat& dp = P->grad_buffer();
        for (const auto& seg : segs) dp.topRows(seg.length) += self.grad.middleRows(seg.offset, seg.length);
    });
}

Var segment_mean(const Var& x, std::span<const Segment> segments) {
    Mat out(static_cast<Eigen::Index>(segments.size()), x->value.cols());
    for (std::size_t s = 0; s < segments.size(); ++s) {
        const auto& seg = segments[s];
        if (seg.length <= 0) throw ShapeError("segment_mean: empty segment");
        out.row(static_cast<Eigen::Index>(s)) = x->value.middleRows(seg.offset, seg.length).colwise().mean();
    }
    std::vector<Segment> segs(segments.begin(), segments.end());
    return make_node(std::move(out), {x}, [segs = std::move(segs)](Node& self) {
        Mat& dx = self.parents[0]->grad_buffer();
        for (std::size_t s = 0; s < segs.size(); ++s) {
            const auto& seg = segs[s];
            const Eigen::RowVectorXd g = self.grad.row(static_cast<Eigen::Index>(s)) / static_cast<double>(seg.length);
            dx.middleRows(seg.offset, seg.length).rowwise() += g;
        }
    });
}

Var embedding(const Var& table, std::span<const int> ids) {
    Mat out(static_cast<Eigen::Index>(ids.size()), table->value.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= table->value.rows()) throw ShapeError("embedding: id out of range");
        out.row(static_cast<Eigen::Index>(i)) = table->value.row(ids[i]);
    }
    std::vector<int> idx(ids.begin(), ids.end());
    return make_node(std::move(out), {table}, [idx = std::move(idx)](Node& self) {
        Mat& dt = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < idx.size(); ++i) dt.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    });
}

Var l2_normalize_rows(const Var& x) {
    Eigen::VectorXd norms = x->value.rowwise().norm();
    for (Eigen::Index r = 0; r < norms.size(); ++r) {
        if (!(norms(r) > 0.0) || !std::isfinite(norms(r))) {
            throw NumericError("cannot normalize row " + std::to_string(r) + ": norm is zero or not finite");
        }
    }
    Mat out = norms.asDiagonal().inverse() * x->value;
    Mat y = out;
    return make_node(std::move(out), {x}, [y = std::move(y), norms = std::move(norms)](Node& self) {
        Eigen::VectorXd dots = self.grad.cwiseProduct(y).rowwise().sum();
        Mat d = self.grad - dots.asDiagonal() * y;
        self.parents[0]->grad_buffer() += norms.asDiagonal().inverse() * d;
    });
}

double info_nce_kernel(const Mat& x, const Mat& y, double tau, bool symmetric, Mat* grad_logits) {
    const auto K = x.rows();
    Mat logits = (x * y.transpose()) / tau;
    auto directional = [K](const Mat& s, Mat* grad) {
        double loss = 0.0;
        if (grad) grad->resize(K, K);
        for (Eigen::Index i = 0; i < K; ++i) {
            const double mx = s.row(i).maxCoeff();
            const double lse = mx + std::log((s.row(i).array() - mx).exp().sum());
            loss += lse - s(i, i);
            if (grad) {
                grad->row(i) = (s.row(i).array() - lse).exp() / static_cast<double>(K);
                (*grad)(i, i) -= 1.0 / static_cast<double>(K);
            }
        }
        return loss / static_cast<double>(K);
    };
    if (!symmetric) return directional(logits, grad_logits);

    Mat g_xy, g_yx;
    const double l_xy = directional(logits, grad_logits ? &g_xy : nullptr);
    const double l_yx = directional(logits.transpose(), grad_logits ? &g_yx : nullptr);
    if (grad_logits) *grad_logits = 0.5 * (g_xy + g_yx.transpose());
    return 0.5 * (l_xy + l_yx);
}

Var info_nce(const Var& x, const Var& y, double tau, bool symmetric) {
    require_same_shape(x->value, y->value, "info_nce");
    if (x->value.rows() == 0) throw DomainError("info_nce: empty batch");
    if (!(tau > 0.0)) throw DomainError("info_nce: temperature must be positive");
    Mat g;
    const double loss = info_nce_kernel(x->value, y->value, tau, symmetric, &g);
    Mat out(1, 1);
    out(0, 0) = loss;
    return make_node(std::move(out), {x, y}, [g = std::move(g), tau](Node& self) {
        const double up = self.grad(0, 0);
        const auto& X = self.parents[0];
        const auto& Y = self.parents[1];
        if (wants(X)) X->grad_buffer().noalias() += (up / tau) * (g * Y->value);
        if (wants(Y)) Y->grad_buffer().noalias() += (up / tau) * (g.transpose() * X->value);
    });
}

} // namespace tlv::ag
