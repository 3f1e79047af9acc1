#pragma once

#include <functional>
#include <string>
#include <vector>

#include "interdiff/core_types.hpp"

namespace interdiff::ad {

// Reverse-mode tape over Eigen matrices. Values are MatX; scalars are 1x1.
// A Tape is built per training step (or per inference call) and discarded.

class Tape;

struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const MatX& value() const;
    int rows() const { return static_cast<int>(value().rows()); }
    int cols() const { return static_cast<int>(value().cols()); }
};

// Persistent trainable tensor with its gradient accumulator and Adam moments.
struct Param {
    std::string name;
    MatX value;
    MatX grad;
    MatX adam_m, adam_v;

    Param() = default;
    Param(std::string n, MatX v);
    void zero_grad();
    int size() const { return static_cast<int>(value.size()); }
};

class Tape {
public:
    Var constant(MatX v);
    Var leaf(Param& p);

    // Arithmetic. The second operand of add/sub/mul/div may broadcast as a
    // 1x1 scalar, a 1xC row, or an Rx1 column.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var scale(Var a, double s);
    Var add_const(Var a, double c);
    Var neg(Var a) { return scale(a, -1.0); }

    Var matmul(Var a, Var b);
    Var transpose(Var a);

    Var tanh_(Var a);
    Var gelu(Var a);
    Var sqrt_(Var a);
    Var square(Var a) { return mul(a, a); }

    Var softmax_rows(Var a);
    Var layernorm_rows(Var a, double eps = 1e-6);

    Var slice_rows(Var a, int r0, int n);
    Var slice_cols(Var a, int c0, int n);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);
    Var tile_rows(Var a, int times);

    Var sum(Var a);    // 1x1
    Var mean(Var a);   // 1x1
    Var rowwise_sum(Var a);  // Rx1
    Var colwise_max(Var a);  // 1xC, argmax-routed gradient
    Var rowwise_min(Var a);  // Rx1, argmin-routed gradient
    Var reduce_min(Var a);   // 1x1

    Var cwise_min(Var a, Var b);  // ties route to a
    Var cwise_max(Var a, Var b);
    Var clamp(Var a, double lo, double hi);

    Var cross3(Var a, Var b);  // 3x1 vectors

    void backward(Var scalar_output);

    const MatX& value(int id) const { return nodes_[id].value; }
    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        MatX value;
        MatX grad;
        std::function<void()> backprop;
        bool needs_grad = false;
        Param* param = nullptr;
    };

    Var make(MatX value, bool needs_grad, std::function<void()> backprop = nullptr);
    MatX& grad(int id);
    bool any_grad(std::initializer_list<Var> vars) const;

    std::vector<Node> nodes_;

    friend struct Var;
};

// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(std::vector<Param*>& params);
    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }
    int steps_taken() const { return t_; }

private:
    AdamConfig cfg_;
    int t_ = 0;
};

// Seeded dense initializers.
MatX glorot_init(int rows, int cols, Rng& rng);

}  // namespace interdiff::ad
