#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "interdiff/autodiff.hpp"

using namespace interdiff;
using namespace interdiff::ad;

namespace {

// Central finite differences over every entry of every param.
struct GradCheck {
    std::vector<Param*> params;
    std::function<Var(Tape&)> build;

    double run(double h = 1e-6) {
        for (Param* p : params) p->zero_grad();
        Tape tape;
        Var loss = build(tape);
        tape.backward(loss);

        double worst = 0.0;
        for (Param* p : params) {
            for (int i = 0; i < p->value.size(); ++i) {
                const double saved = p->value.data()[i];
                p->value.data()[i] = saved + h;
                Tape tp;
                const double up = build(tp).value()(0, 0);
                p->value.data()[i] = saved - h;
                Tape tm;
                const double dn = build(tm).value()(0, 0);
                p->value.data()[i] = saved;
                const double fd = (up - dn) / (2.0 * h);
                const double an = p->grad.data()[i];
                const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
                worst = std::max(worst, std::abs(fd - an) / denom);
            }
        }
        return worst;
    }
};

}  // namespace

TEST_CASE("gradients of arithmetic and broadcast ops") {
    Rng rng(101);
    Param a("a", rng.normal_matrix(4, 3));
    Param row("row", rng.normal_matrix(1, 3));
    Param col("col", rng.normal_matrix(4, 1));
    Param s("s", rng.normal_matrix(1, 1));
    // Keep divisors away from zero.
    row.value.array() += 3.0;
    s.value.array() += 3.0;

    GradCheck check;
    check.params = {&a, &row, &col, &s};
    check.build = [&](Tape& t) {
        Var va = t.leaf(a);
        Var vrow = t.leaf(row);
        Var vcol = t.leaf(col);
        Var vs = t.leaf(s);
        Var x = t.add(va, vrow);
        x = t.mul(x, vcol);
        x = t.sub(x, vs);
        x = t.div(x, vrow);
        x = t.add(x, t.scale(va, 0.3));
        return t.mean(t.square(x));
    };
    CHECK(check.run() < 1e-7);
}

TEST_CASE("gradients of matmul transpose slice concat") {
    Rng rng(103);
    Param a("a", glorot_init(5, 4, rng));
    Param b("b", glorot_init(4, 6, rng));

    GradCheck check;
    check.params = {&a, &b};
    check.build = [&](Tape& t) {
        Var va = t.leaf(a);
        Var vb = t.leaf(b);
        Var m = t.matmul(va, vb);                        // 5x6
        Var left = t.slice_cols(m, 0, 3);
        Var right = t.slice_cols(m, 3, 3);
        Var joined = t.concat_rows({left, t.transpose(t.slice_rows(t.transpose(right), 0, 3))});
        Var tiled = t.tile_rows(t.slice_rows(joined, 0, 2), 5);
        return t.mean(t.square(t.concat_cols({joined, t.slice_rows(tiled, 0, joined.rows())})));
    };
    CHECK(check.run() < 1e-7);
}

TEST_CASE("gradients of nonlinearities and normalizations") {
    Rng rng(107);
    Param a("a", rng.normal_matrix(4, 6));

    GradCheck check;
    check.params = {&a};
    check.build = [&](Tape& t) {
        Var x = t.leaf(a);
        Var y = t.gelu(x);
        y = t.add(y, t.tanh_(x));
        y = t.softmax_rows(y);
        y = t.layernorm_rows(t.add(y, x));
        y = t.sqrt_(t.add_const(t.square(y), 0.5));
        return t.mean(y);
    };
    CHECK(check.run() < 1e-6);
}

TEST_CASE("gradients of min max clamp reductions") {
    Rng rng(109);
    Param a("a", rng.normal_matrix(5, 4));
    Param b("b", rng.normal_matrix(5, 4));

    GradCheck check;
    check.params = {&a, &b};
    check.build = [&](Tape& t) {
        Var va = t.leaf(a);
        Var vb = t.leaf(b);
        Var lo = t.cwise_min(va, vb);
        Var hi = t.cwise_max(va, vb);
        Var c = t.clamp(va, -0.5, 0.5);
        Var parts = t.concat_cols({lo, hi, c});
        Var rmin = t.rowwise_min(parts);
        Var cmax = t.colwise_max(parts);
        Var total = t.add(t.sum(rmin), t.sum(cmax));
        total = t.add(total, t.reduce_min(parts));
        total = t.add(total, t.sum(t.rowwise_sum(hi)));
        return total;
    };
    CHECK(check.run() < 1e-6);
}

TEST_CASE("gradient of cross product") {
    Rng rng(113);
    Param a("a", rng.normal_matrix(3, 1));
    Param b("b", rng.normal_matrix(3, 1));

    GradCheck check;
    check.params = {&a, &b};
    check.build = [&](Tape& t) {
        Var c = t.cross3(t.leaf(a), t.leaf(b));
        return t.mean(t.square(c));
    };
    CHECK(check.run() < 1e-7);
}

TEST_CASE("adam reduces a quadratic") {
    Rng rng(127);
    Param w("w", rng.normal_matrix(3, 3));
    const MatX target = rng.normal_matrix(3, 3);
    Adam opt(AdamConfig{0.05});
    std::vector<Param*> params = {&w};
    double first = -1.0;
    double last = -1.0;
    for (int step = 0; step < 300; ++step) {
        w.zero_grad();
        Tape t;
        Var diff = t.sub(t.leaf(w), t.constant(target));
        Var loss = t.mean(t.square(diff));
        if (step == 0) first = loss.value()(0, 0);
        last = loss.value()(0, 0);
        t.backward(loss);
        opt.step(params);
    }
    CHECK(last < 1e-4);
    CHECK(first > last);
}

TEST_CASE("constants do not allocate gradient work") {
    Tape t;
    Var a = t.constant(MatX::Ones(3, 3));
    Var b = t.constant(MatX::Ones(3, 3));
    Var c = t.matmul(a, b);
    CHECK(c.value()(0, 0) == 3.0);
    const size_t before = t.node_count();
    t.mean(c);
    CHECK(t.node_count() == before + 2);  // sum + scale, value-only
}
