#include "interdiff/autodiff.hpp"

#include <cmath>

namespace interdiff::ad {

const MatX& Var::value() const { return tape->value(id); }

Param::Param(std::string n, MatX v) : name(std::move(n)), value(std::move(v)) {
    grad = MatX::Zero(value.rows(), value.cols());
    adam_m = MatX::Zero(value.rows(), value.cols());
    adam_v = MatX::Zero(value.rows(), value.cols());
}

void Param::zero_grad() { grad.setZero(); }

Var Tape::make(MatX value, bool needs_grad, std::function<void()> backprop) {
    Node node;
    node.value = std::move(value);
    node.needs_grad = needs_grad;
    node.backprop = std::move(backprop);
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

MatX& Tape::grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = MatX::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

bool Tape::any_grad(std::initializer_list<Var> vars) const {
    for (const Var& v : vars) {
        if (nodes_[v.id].needs_grad) return true;
    }
    return false;
}

Var Tape::constant(MatX v) { return make(std::move(v), false); }

Var Tape::leaf(Param& p) {
    Var v = make(p.value, true);
    nodes_[v.id].param = &p;
    return v;
}

namespace {

enum class Bcast { same, scalar, row, col };

Bcast broadcast_kind(const MatX& a, const MatX& b) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::same;
    if (b.rows() == 1 && b.cols() == 1) return Bcast::scalar;
    if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::row;
    if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::col;
    throw ShapeError("autodiff broadcast mismatch: a is " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + ", b is " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
}

MatX expand(const MatX& b, Bcast kind, Eigen::Index rows, Eigen::Index cols) {
    switch (kind) {
        case Bcast::same: return b;
        case Bcast::scalar: return MatX::Constant(rows, cols, b(0, 0));
        case Bcast::row: return b.replicate(rows, 1);
        case Bcast::col: return b.replicate(1, cols);
    }
    return b;
}

// Sums an expanded-shape gradient back down to the broadcast operand's shape.
MatX reduce_to(const MatX& g, Bcast kind) {
    switch (kind) {
        case Bcast::same: return g;
        case Bcast::scalar: {
            MatX out(1, 1);
            out(0, 0) = g.sum();
            return out;
        }
        case Bcast::row: return g.colwise().sum();
        case Bcast::col: return g.rowwise().sum();
    }
    return g;
}

}  // namespace

Var Tape::add(Var a, Var b) {
    const MatX& av = value(a.id);
    const MatX& bv = value(b.id);
    const Bcast kind = broadcast_kind(av, bv);
    MatX out = av + expand(bv, kind, av.rows(), av.cols());
    if (!any_grad({a, b})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, bi = b.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, bi, oi, kind] {
        const MatX& g = nodes_[oi].grad;
        if (nodes_[ai].needs_grad) grad(ai) += g;
        if (nodes_[bi].needs_grad) grad(bi) += reduce_to(g, kind);
    };
    return v;
}

Var Tape::sub(Var a, Var b) {
    const MatX& av = value(a.id);
    const MatX& bv = value(b.id);
    const Bcast kind = broadcast_kind(av, bv);
    MatX out = av - expand(bv, kind, av.rows(), av.cols());
    if (!any_grad({a, b})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, bi = b.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, bi, oi, kind] {
        const MatX& g = nodes_[oi].grad;
        if (nodes_[ai].needs_grad) grad(ai) += g;
        if (nodes_[bi].needs_grad) grad(bi) -= reduce_to(g, kind);
    };
    return v;
}

Var Tape::mul(Var a, Var b) {
    const MatX& av = value(a.id);
    const MatX& bv = value(b.id);
    const Bcast kind = broadcast_kind(av, bv);
    const MatX bexp = expand(bv, kind, av.rows(), av.cols());
    MatX out = av.cwiseProduct(bexp);
    if (!any_grad({a, b})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, bi = b.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, bi, oi, kind, bexp] {
        const MatX& g = nodes_[oi].grad;
        if (nodes_[ai].needs_grad) grad(ai) += g.cwiseProduct(bexp);
        if (nodes_[bi].needs_grad) {
            grad(bi) += reduce_to(g.cwiseProduct(nodes_[ai].value), kind);
        }
    };
    return v;
}

Var Tape::div(Var a, Var b) {
    const MatX& av = value(a.id);
    const MatX& bv = value(b.id);
    const Bcast kind = broadcast_kind(av, bv);
    const MatX bexp = expand(bv, kind, av.rows(), av.cols());
    MatX out = av.cwiseQuotient(bexp);
    if (!any_grad({a, b})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, bi = b.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, bi, oi, kind, bexp] {
        const MatX& g = nodes_[oi].grad;
        if (nodes_[ai].needs_grad) grad(ai) += g.cwiseQuotient(bexp);
        if (nodes_[bi].needs_grad) {
            const MatX da = nodes_[oi].value.cwiseQuotient(bexp);  // a / b^2
            grad(bi) -= reduce_to(g.cwiseProduct(da), kind);
        }
    };
    return v;
}

Var Tape::scale(Var a, double s) {
    MatX out = s * value(a.id);
    if (!any_grad({a})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, oi, s] { grad(ai) += s * nodes_[oi].grad; };
    return v;
}

Var Tape::add_const(Var a, double c) {
    MatX out = value(a.id).array() + c;
    if (!any_grad({a})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, oi] { grad(ai) += nodes_[oi].grad; };
    return v;
}

Var Tape::matmul(Var a, Var b) {
    const MatX& av = value(a.id);
    const MatX& bv = value(b.id);
    if (av.cols() != bv.rows()) {
        throw ShapeError("matmul shape mismatch: " + std::to_string(av.rows()) + "x" +
                         std::to_string(av.cols()) + " * " + std::to_string(bv.rows()) + "x" +
                         std::to_string(bv.cols()));
    }
    MatX out = av * bv;
    if (!any_grad({a, b})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, bi = b.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, bi, oi] {
        const MatX& g = nodes_[oi].grad;
        if (nodes_[ai].needs_grad) grad(ai) += g * nodes_[bi].value.transpose();
        if (nodes_[bi].needs_grad) grad(bi) += nodes_[ai].value.transpose() * g;
    };
    return v;
}

Var Tape::transpose(Var a) {
    MatX out = value(a.id).transpose();
    if (!any_grad({a})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, oi] { grad(ai) += nodes_[oi].grad.transpose(); };
    return v;
}

Var Tape::tanh_(Var a) {
    MatX out = value(a.id).array().tanh();
    if (!any_grad({a})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, oi] {
        const MatX& y = nodes_[oi].value;
        grad(ai) += nodes_[oi].grad.cwiseProduct((1.0 - y.array().square()).matrix());
    };
    return v;
}

namespace {

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_derivative(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return cdf + x * pdf;
}

}  // namespace

Var Tape::gelu(Var a) {
    MatX out = value(a.id).unaryExpr([](double x) { return gelu_scalar(x); });
    if (!any_grad({a})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, oi] {
        const MatX d = nodes_[ai].value.unaryExpr([](double x) { return gelu_derivative(x); });
        grad(ai) += nodes_[oi].grad.cwiseProduct(d);
    };
    return v;
}

Var Tape::sqrt_(Var a) {
    MatX out = value(a.id).array().sqrt();
    if (!any_grad({a})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, oi] {
        grad(ai) += nodes_[oi].grad.cwiseQuotient(2.0 * nodes_[oi].value);
    };
    return v;
}

Var Tape::softmax_rows(Var a) {
    const MatX& x = value(a.id);
    MatX out(x.rows(), x.cols());
    for (int r = 0; r < x.rows(); ++r) {
        const double m = x.row(r).maxCoeff();
        Eigen::ArrayXd e = (x.row(r).array() - m).exp();
        out.row(r) = (e / e.sum()).matrix();
    }
    if (!any_grad({a})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, oi] {
        const MatX& y = nodes_[oi].value;
        const MatX& g = nodes_[oi].grad;
        MatX& ga = grad(ai);
        for (int r = 0; r < y.rows(); ++r) {
            const double dot = y.row(r).dot(g.row(r));
            ga.row(r) += y.row(r).cwiseProduct(g.row(r).array().matrix() -
                                               MatX::Constant(1, y.cols(), dot));
        }
    };
    return v;
}

Var Tape::layernorm_rows(Var a, double eps) {
    const MatX& x = value(a.id);
    const int cols = static_cast<int>(x.cols());
    MatX out(x.rows(), cols);
    VecX inv_sigma(x.rows());
    for (int r = 0; r < x.rows(); ++r) {
        const double mu = x.row(r).mean();
        const double var = (x.row(r).array() - mu).square().sum() / cols;
        inv_sigma[r] = 1.0 / std::sqrt(var + eps);
        out.row(r) = ((x.row(r).array() - mu) * inv_sigma[r]).matrix();
    }
    if (!any_grad({a})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, oi, inv_sigma, cols] {
        const MatX& y = nodes_[oi].value;
        const MatX& g = nodes_[oi].grad;
        MatX& ga = grad(ai);
        for (int r = 0; r < y.rows(); ++r) {
            const double gmean = g.row(r).mean();
            const double gy = g.row(r).dot(y.row(r)) / cols;
            ga.row(r) += inv_sigma[r] * (g.row(r).array() - gmean - y.row(r).array() * gy).matrix();
        }
    };
    return v;
}

Var Tape::slice_rows(Var a, int r0, int n) {
    if (r0 < 0 || n < 0 || r0 + n > value(a.id).rows()) {
        throw ShapeError("slice_rows out of range");
    }
    MatX out = value(a.id).middleRows(r0, n);
    if (!any_grad({a})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, oi, r0, n] {
        grad(ai).middleRows(r0, n) += nodes_[oi].grad;
    };
    return v;
}

Var Tape::slice_cols(Var a, int c0, int n) {
    if (c0 < 0 || n < 0 || c0 + n > value(a.id).cols()) {
        throw ShapeError("slice_cols out of range");
    }
    MatX out = value(a.id).middleCols(c0, n);
    if (!any_grad({a})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, oi, c0, n] {
        grad(ai).middleCols(c0, n) += nodes_[oi].grad;
    };
    return v;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: empty part list");
    Eigen::Index rows = 0;
    const Eigen::Index cols = value(parts[0].id).cols();
    bool needs = false;
    for (const Var& p : parts) {
        rows += value(p.id).rows();
        needs = needs || nodes_[p.id].needs_grad;
    }
    MatX out(rows, cols);
    Eigen::Index at = 0;
    for (const Var& p : parts) {
        out.middleRows(at, value(p.id).rows()) = value(p.id);
        at += value(p.id).rows();
    }
    if (!needs) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    std::vector<int> ids;
    for (const Var& p : parts) ids.push_back(p.id);
    const int oi = v.id;
    nodes_[oi].backprop = [this, ids, oi] {
        Eigen::Index at = 0;
        for (int id : ids) {
            const Eigen::Index n = nodes_[id].value.rows();
            if (nodes_[id].needs_grad) grad(id) += nodes_[oi].grad.middleRows(at, n);
            at += n;
        }
    };
    return v;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: empty part list");
    Eigen::Index cols = 0;
    const Eigen::Index rows = value(parts[0].id).rows();
    bool needs = false;
    for (const Var& p : parts) {
        cols += value(p.id).cols();
        needs = needs || nodes_[p.id].needs_grad;
    }
    MatX out(rows, cols);
    Eigen::Index at = 0;
    for (const Var& p : parts) {
        out.middleCols(at, value(p.id).cols()) = value(p.id);
        at += value(p.id).cols();
    }
    if (!needs) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    std::vector<int> ids;
    for (const Var& p : parts) ids.push_back(p.id);
    const int oi = v.id;
    nodes_[oi].backprop = [this, ids, oi] {
        Eigen::Index at = 0;
        for (int id : ids) {
            const Eigen::Index n = nodes_[id].value.cols();
            if (nodes_[id].needs_grad) grad(id) += nodes_[oi].grad.middleCols(at, n);
            at += n;
        }
    };
    return v;
}

Var Tape::tile_rows(Var a, int times) {
    MatX out = value(a.id).replicate(times, 1);
    if (!any_grad({a})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, oi = v.id;
    const Eigen::Index n = value(a.id).rows();
    nodes_[oi].backprop = [this, ai, oi, n, times] {
        for (int k = 0; k < times; ++k) grad(ai) += nodes_[oi].grad.middleRows(k * n, n);
    };
    return v;
}

Var Tape::sum(Var a) {
    MatX out(1, 1);
    out(0, 0) = value(a.id).sum();
    if (!any_grad({a})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, oi] {
        grad(ai).array() += nodes_[oi].grad(0, 0);
    };
    return v;
}

Var Tape::mean(Var a) {
    const double n = static_cast<double>(value(a.id).size());
    return scale(sum(a), 1.0 / n);
}

Var Tape::rowwise_sum(Var a) {
    MatX out = value(a.id).rowwise().sum();
    if (!any_grad({a})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, oi] {
        grad(ai) += nodes_[oi].grad.replicate(1, nodes_[ai].value.cols());
    };
    return v;
}

Var Tape::colwise_max(Var a) {
    const MatX& x = value(a.id);
    MatX out(1, x.cols());
    std::vector<int> argmax(x.cols());
    for (int c = 0; c < x.cols(); ++c) {
        int r = 0;
        out(0, c) = x.col(c).maxCoeff(&r);
        argmax[c] = r;
    }
    if (!any_grad({a})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, oi, argmax] {
        MatX& ga = grad(ai);
        for (int c = 0; c < ga.cols(); ++c) ga(argmax[c], c) += nodes_[oi].grad(0, c);
    };
    return v;
}

Var Tape::rowwise_min(Var a) {
    const MatX& x = value(a.id);
    MatX out(x.rows(), 1);
    std::vector<int> argmin(x.rows());
    for (int r = 0; r < x.rows(); ++r) {
        int c = 0;
        out(r, 0) = x.row(r).minCoeff(&c);
        argmin[r] = c;
    }
    if (!any_grad({a})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, oi, argmin] {
        MatX& ga = grad(ai);
        for (int r = 0; r < ga.rows(); ++r) ga(r, argmin[r]) += nodes_[oi].grad(r, 0);
    };
    return v;
}

Var Tape::reduce_min(Var a) {
    const MatX& x = value(a.id);
    int r = 0, c = 0;
    MatX out(1, 1);
    out(0, 0) = x.minCoeff(&r, &c);
    if (!any_grad({a})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, oi, r, c] { grad(ai)(r, c) += nodes_[oi].grad(0, 0); };
    return v;
}

Var Tape::cwise_min(Var a, Var b) {
    const MatX& av = value(a.id);
    const MatX& bv = value(b.id);
    if (av.rows() != bv.rows() || av.cols() != bv.cols()) {
        throw ShapeError("cwise_min shape mismatch");
    }
    MatX out = av.cwiseMin(bv);
    if (!any_grad({a, b})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, bi = b.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, bi, oi] {
        const MatX& g = nodes_[oi].grad;
        const MatX mask_a =
            (nodes_[ai].value.array() <= nodes_[bi].value.array()).cast<double>();
        if (nodes_[ai].needs_grad) grad(ai) += g.cwiseProduct(mask_a);
        if (nodes_[bi].needs_grad) {
            grad(bi) += g.cwiseProduct((1.0 - mask_a.array()).matrix());
        }
    };
    return v;
}

Var Tape::cwise_max(Var a, Var b) {
    const MatX& av = value(a.id);
    const MatX& bv = value(b.id);
    if (av.rows() != bv.rows() || av.cols() != bv.cols()) {
        throw ShapeError("cwise_max shape mismatch");
    }
    MatX out = av.cwiseMax(bv);
    if (!any_grad({a, b})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, bi = b.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, bi, oi] {
        const MatX& g = nodes_[oi].grad;
        const MatX mask_a =
            (nodes_[ai].value.array() >= nodes_[bi].value.array()).cast<double>();
        if (nodes_[ai].needs_grad) grad(ai) += g.cwiseProduct(mask_a);
        if (nodes_[bi].needs_grad) {
            grad(bi) += g.cwiseProduct((1.0 - mask_a.array()).matrix());
        }
    };
    return v;
}

Var Tape::clamp(Var a, double lo, double hi) {
    const MatX& x = value(a.id);
    MatX out = x.array().max(lo).min(hi);
    if (!any_grad({a})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, oi, lo, hi] {
        const auto x = nodes_[ai].value.array();
        const MatX mask = ((x > lo) && (x < hi)).cast<double>();
        grad(ai) += nodes_[oi].grad.cwiseProduct(mask);
    };
    return v;
}

Var Tape::cross3(Var a, Var b) {
    const MatX& av = value(a.id);
    const MatX& bv = value(b.id);
    if (av.rows() != 3 || av.cols() != 1 || bv.rows() != 3 || bv.cols() != 1) {
        throw ShapeError("cross3 expects 3x1 vectors");
    }
    const Vec3 x = av.col(0), y = bv.col(0);
    MatX out = x.cross(y);
    if (!any_grad({a, b})) return make(std::move(out), false);
    Var v = make(std::move(out), true);
    const int ai = a.id, bi = b.id, oi = v.id;
    nodes_[oi].backprop = [this, ai, bi, oi] {
        const Vec3 g = nodes_[oi].grad.col(0);
        const Vec3 x = nodes_[ai].value.col(0);
        const Vec3 y = nodes_[bi].value.col(0);
        // d(x × y) wrt x: grad = y × g propogated; wrt y: grad = g × x.
        if (nodes_[ai].needs_grad) grad(ai) += y.cross(g);
        if (nodes_[bi].needs_grad) grad(bi) += g.cross(x);
    };
    return v;
}

void Tape::backward(Var scalar_output) {
    Node& out = nodes_[scalar_output.id];
    if (out.value.rows() != 1 || out.value.cols() != 1) {
        throw ShapeError("backward expects a 1x1 scalar output");
    }
    grad(scalar_output.id)(0, 0) = 1.0;
    for (int id = scalar_output.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.needs_grad || n.grad.size() == 0) continue;
        if (n.backprop) n.backprop();
        if (n.param != nullptr) n.param->grad += n.grad;
    }
}

void Adam::step(std::vector<Param*>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (Param* p : params) {
        p->adam_m = cfg_.beta1 * p->adam_m + (1.0 - cfg_.beta1) * p->grad;
        p->adam_v = cfg_.beta2 * p->adam_v.array() + (1.0 - cfg_.beta2) * p->grad.array().square();
        const MatX m_hat = p->adam_m / bc1;
        const MatX v_hat = p->adam_v / bc2;
        p->value.array() -= cfg_.lr * m_hat.array() / (v_hat.array().sqrt() + cfg_.eps);
    }
}

MatX glorot_init(int rows, int cols, Rng& rng) {
    const double scale = std::sqrt(2.0 / (rows + cols));
    return scale * rng.normal_matrix(rows, cols);
}

}  // namespace interdiff::ad
