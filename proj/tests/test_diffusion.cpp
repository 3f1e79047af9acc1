#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "interdiff/diffusion.hpp"

using namespace interdiff;

namespace {

// Toy trainable denoiser: x-tilde = a * tanh(b * x_t) + c, three scalars.
struct ToyDenoiser final : TrainableDenoiser, Denoiser {
    ad::Param a{"a", MatX::Constant(1, 1, 0.8)};
    ad::Param b{"b", MatX::Constant(1, 1, 0.5)};
    ad::Param c{"c", MatX::Constant(1, 1, 0.1)};

    ad::Var denoise(ad::Tape& t, ad::Var x_t, int, const Condition&) override {
        ad::Var h = t.tanh_(t.mul(x_t, t.leaf(b)));
        return t.add(t.mul(h, t.leaf(a)), t.leaf(c));
    }
    MatX denoise(const MatX& x_t, int, const Condition&) const override {
        return (a.value(0, 0) * (b.value(0, 0) * x_t).array().tanh() + c.value(0, 0)).matrix();
    }
    std::vector<ad::Param*> params() override { return {&a, &b, &c}; }
};

struct OracleDenoiser final : Denoiser {
    MatX truth;
    MatX denoise(const MatX&, int, const Condition&) const override { return truth; }
};

Condition empty_condition() {
    Condition c;
    c.past_features = MatX::Zero(1, 6);
    c.shape_points = MatX::Zero(1, 3);
    return c;
}

}  // namespace

TEST_CASE("linear schedule with explicit DDPM grid matches product oracle") {
    const NoiseSchedule s = make_schedule(100, ScheduleKind::linear, 1e-4, 0.02);
    double prod = 1.0;
    for (int t = 1; t <= 100; ++t) {
        const double beta = 1e-4 + (0.02 - 1e-4) * (t - 1) / 99.0;
        prod *= 1.0 - beta;
    }
    CHECK(s.alpha_bar(100) == doctest::Approx(prod).epsilon(1e-12));
    CHECK(s.alpha_bar(100) == doctest::Approx(0.366).epsilon(0.01));
    CHECK(s.betas[0] == 0.0);
    CHECK(s.alpha_bar(0) == 1.0);
}

TEST_CASE("default schedules keep the terminal alpha-bar small and monotone") {
    for (ScheduleKind kind : {ScheduleKind::linear, ScheduleKind::cosine}) {
        for (int T : {50, 100, 500}) {
            const NoiseSchedule s = make_schedule(T, kind);
            CHECK(s.alpha_bar(0) == 1.0);
            CHECK(s.alpha_bar(T) < 0.01);
            for (int t = 1; t <= T; ++t) {
                CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
                CHECK(s.betas[t] > 0.0);
                CHECK(s.betas[t] < 1.0);
            }
        }
    }
    CHECK_THROWS_AS(make_schedule(1, ScheduleKind::linear), ConfigError);
}

TEST_CASE("q_sample closed form") {
    Rng rng(301);
    const MatX x0 = rng.normal_matrix(3, 4);
    const NoiseSchedule s = make_schedule(10, ScheduleKind::linear);

    // t = 0 is exact.
    const MatX same = q_sample(x0, 0, s, MatX::Zero(3, 4));
    CHECK((same - x0).cwiseAbs().maxCoeff() == 0.0);

    // Hand evaluation at alpha_bar = 0.25.
    NoiseSchedule custom = s;
    custom.alpha_bars[3] = 0.25;
    const MatX eps = rng.normal_matrix(3, 4);
    const MatX xt = q_sample(x0, 3, custom, eps);
    const MatX expect = 0.5 * x0 + std::sqrt(0.75) * eps;
    CHECK((xt - expect).cwiseAbs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(q_sample(x0, 3, s, MatX::Zero(2, 4)), ShapeError);
}

TEST_CASE("q_sample marginal statistics match the closed form") {
    const NoiseSchedule s = make_schedule(100, ScheduleKind::linear);
    Rng rng(303);
    const MatX x0 = rng.normal_matrix(2, 6);
    for (int t : {1, 50, 100}) {
        const double ab = s.alpha_bar(t);
        const double sigma = std::sqrt(1.0 - ab);
        double sum = 0.0, sumsq = 0.0;
        const int n = 20000;
        for (int i = 0; i < n; ++i) {
            const MatX xt = q_sample(x0, t, s, rng.normal_matrix(2, 6));
            const MatX centered = xt - std::sqrt(ab) * x0;
            sum += centered.sum();
            sumsq += centered.array().square().sum();
        }
        const double count = static_cast<double>(n) * 12.0;
        const double mean = sum / count;
        const double var = sumsq / count - mean * mean;
        CHECK(std::abs(mean) < 0.02 * sigma);
        CHECK(std::abs(var - (1.0 - ab)) < 0.02 * (1.0 - ab));
    }
}

TEST_CASE("reverse_step formula and boundaries") {
    const NoiseSchedule s = make_schedule(10, ScheduleKind::linear);
    Rng rng(307);
    const MatX x1 = rng.normal_matrix(2, 6);
    const MatX eps = rng.normal_matrix(2, 6);

    OracleDenoiser oracle;
    oracle.truth = rng.normal_matrix(2, 6);

    // t = 1: x_0 equals the clean estimate exactly.
    const ReverseStepResult r1 = reverse_step(x1, 1, oracle, empty_condition(), s, eps);
    CHECK((r1.next - oracle.truth).cwiseAbs().maxCoeff() == 0.0);

    // Identity denoiser with alpha_bar(t-1) pinned to 0.81.
    struct IdentityDenoiser final : Denoiser {
        MatX denoise(const MatX& x, int, const Condition&) const override { return x; }
    } identity;
    NoiseSchedule custom = s;
    custom.alpha_bars[4] = 0.81;
    const ReverseStepResult r2 = reverse_step(x1, 5, identity, empty_condition(), custom, eps);
    const MatX expect = 0.9 * x1 + std::sqrt(1.0 - 0.81) * eps;
    CHECK((r2.next - expect).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::sqrt(1.0 - 0.81) == doctest::Approx(0.43589).epsilon(1e-4));

    CHECK_THROWS_AS(reverse_step(x1, 0, identity, empty_condition(), s, eps), ShapeError);
}

TEST_CASE("sampling is deterministic and oracle sampling recovers the truth") {
    const NoiseSchedule s = make_schedule(50, ScheduleKind::linear);
    ToyDenoiser toy;
    const Condition cond = empty_condition();

    const SampleResult a = sample_with_correction(cond, toy, s, 4, 6, nullptr, 99);
    const SampleResult b = sample_with_correction(cond, toy, s, 4, 6, nullptr, 99);
    CHECK((a.features - b.features).cwiseAbs().maxCoeff() == 0.0);
    const SampleResult c = sample_with_correction(cond, toy, s, 4, 6, nullptr, 100);
    CHECK((a.features - c.features).cwiseAbs().maxCoeff() > 0.0);

    OracleDenoiser oracle;
    Rng rng(311);
    oracle.truth = rng.normal_matrix(4, 6);
    const SampleResult r = sample_with_correction(cond, oracle, s, 4, 6, nullptr, 1);
    CHECK((r.features - oracle.truth).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a hook that never fires leaves sampling bit-identical") {
    struct NullHook final : CorrectionHook {
        std::optional<MatX> apply(const MatX&, int, CorrectionRecord&) override {
            return std::nullopt;
        }
    } hook;
    const NoiseSchedule s = make_schedule(40, ScheduleKind::linear);
    ToyDenoiser toy;
    const Condition cond = empty_condition();
    const SampleResult plain = sample_with_correction(cond, toy, s, 3, 6, nullptr, 7);
    const SampleResult hooked = sample_with_correction(cond, toy, s, 3, 6, &hook, 7);
    CHECK((plain.features - hooked.features).cwiseAbs().maxCoeff() == 0.0);
    CHECK(hooked.report.size() == 41);  // every step logged, t = 40..0
}

TEST_CASE("hook failures carry the step index") {
    struct ThrowingHook final : CorrectionHook {
        std::optional<MatX> apply(const MatX&, int t, CorrectionRecord&) override {
            if (t == 17) throw std::runtime_error("boom");
            return std::nullopt;
        }
    } hook;
    const NoiseSchedule s = make_schedule(40, ScheduleKind::linear);
    ToyDenoiser toy;
    try {
        sample_with_correction(empty_condition(), toy, s, 3, 6, &hook, 7);
        CHECK(false);
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("step 17") != std::string::npos);
        CHECK(std::string(e.what()).find("boom") != std::string::npos);
    }
}

namespace {

std::vector<TrainingExample> toy_batch(int n, int past, int future, int joints, Rng& rng) {
    std::vector<TrainingExample> batch(n);
    for (auto& ex : batch) {
        ex.features = rng.normal_matrix(past + future, feature_width(joints));
        ex.shape_points = rng.normal_matrix(4, 3);
    }
    return batch;
}

}  // namespace

TEST_CASE("training losses vanish for a ground-truth oracle denoiser") {
    struct GtDenoiser final : TrainableDenoiser {
        MatX target;
        ad::Param dummy{"dummy", MatX::Constant(1, 1, 1.0)};
        ad::Var denoise(ad::Tape& t, ad::Var, int, const Condition&) override {
            // target + 0 * dummy keeps a parameter in the graph.
            return t.add(t.constant(target), t.mul(t.constant(MatX::Zero(target.rows(),
                                                                         target.cols())),
                                                   t.leaf(dummy)));
        }
        std::vector<ad::Param*> params() override { return {&dummy}; }
    } gt;

    Rng rng(313);
    auto batch = toy_batch(1, 2, 3, 2, rng);
    gt.target = batch[0].features.bottomRows(3);
    const NoiseSchedule s = make_schedule(10, ScheduleKind::linear);
    Rng train_rng(1);
    const DiffusionLosses losses =
        train_diffusion_step(batch, gt, s, DiffusionLossWeights{}, 2, 2, train_rng);
    CHECK(losses.l_h == doctest::Approx(0.0));
    CHECK(losses.l_o == doctest::Approx(0.0));
    CHECK(losses.l_vh == doctest::Approx(0.0));
    CHECK(losses.l_vo == doctest::Approx(0.0));
    CHECK(losses.total == doctest::Approx(0.0));
}

TEST_CASE("loss weights select components and the total is their weighted sum") {
    ToyDenoiser toy;
    Rng rng(317);
    auto batch = toy_batch(3, 2, 3, 2, rng);
    const NoiseSchedule s = make_schedule(10, ScheduleKind::linear);

    Rng r1(5);
    DiffusionLossWeights only_h;
    only_h.lambda_h = 1.0;
    only_h.lambda_o = only_h.lambda_vh = only_h.lambda_vo = 0.0;
    const DiffusionLosses a = train_diffusion_step(batch, toy, s, only_h, 2, 2, r1);
    CHECK(a.total == doctest::Approx(a.l_h).epsilon(1e-12));

    Rng r2(5);
    DiffusionLossWeights w;
    const DiffusionLosses b = train_diffusion_step(batch, toy, s, w, 2, 2, r2);
    CHECK(b.total == doctest::Approx(w.lambda_h * b.l_h + w.lambda_o * b.l_o +
                                     w.lambda_vh * b.l_vh + w.lambda_vo * b.l_vo)
                        .epsilon(1e-9));
}

TEST_CASE("diffusion training gradients match finite differences") {
    ToyDenoiser toy;
    Rng rng(319);
    auto batch = toy_batch(2, 2, 3, 2, rng);
    const NoiseSchedule s = make_schedule(10, ScheduleKind::linear);
    const DiffusionLossWeights w;

    auto loss_at = [&](std::uint64_t seed) {
        Rng r(seed);
        for (auto* p : toy.params()) p->zero_grad();
        return train_diffusion_step(batch, toy, s, w, 2, 2, r);
    };

    loss_at(21);  // fills grads
    std::vector<double> analytic;
    for (auto* p : toy.params()) analytic.push_back(p->grad(0, 0));

    const double h = 1e-6;
    int i = 0;
    for (auto* p : toy.params()) {
        const double saved = p->value(0, 0);
        p->value(0, 0) = saved + h;
        const double up = loss_at(21).total;
        p->value(0, 0) = saved - h;
        const double dn = loss_at(21).total;
        p->value(0, 0) = saved;
        const double fd = (up - dn) / (2 * h);
        CHECK(std::abs(fd - analytic[i]) / std::max({std::abs(fd), std::abs(analytic[i]), 1e-8}) <
              1e-4);
        ++i;
    }
}

TEST_CASE("non-finite losses raise a training error") {
    struct NanDenoiser final : TrainableDenoiser {
        ad::Param p{"p", MatX::Constant(1, 1, 0.0)};
        ad::Var denoise(ad::Tape& t, ad::Var x_t, int, const Condition&) override {
            return t.scale(t.add(x_t, t.leaf(p)),
                           std::numeric_limits<double>::quiet_NaN());
        }
        std::vector<ad::Param*> params() override { return {&p}; }
    } bad;
    Rng rng(323);
    auto batch = toy_batch(1, 2, 3, 2, rng);
    const NoiseSchedule s = make_schedule(10, ScheduleKind::linear);
    Rng r(1);
    CHECK_THROWS_AS(train_diffusion_step(batch, bad, s, DiffusionLossWeights{}, 2, 2, r),
                    TrainingError);
}
