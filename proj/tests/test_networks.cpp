#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "interdiff/data_io.hpp"
#include "interdiff/denoiser_net.hpp"
#include "interdiff/predictor.hpp"

using namespace interdiff;

namespace {

DenoiserConfig small_denoiser_config() {
    DenoiserConfig cfg;
    cfg.latent_dim = 32;
    cfg.encoder_layers = 1;
    cfg.decoder_layers = 1;
    cfg.heads = 4;
    cfg.ffn_dim = 64;
    return cfg;
}

Condition random_condition(Rng& rng, int past, int width, int points = 16) {
    Condition c;
    c.past_features = rng.normal_matrix(past, width);
    c.shape_points = 0.1 * rng.normal_matrix(points, 3);
    return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// denoiser_net

TEST_CASE("denoiser output is shape-permutation invariant, exactly") {
    const int width = feature_width(4);
    TransformerDenoiser net(small_denoiser_config(), width, 11);
    Rng rng(401);
    Condition cond = random_condition(rng, 5, width);
    const MatX x_t = rng.normal_matrix(3, width);
    const MatX base = net.denoise(x_t, 7, cond);
    const MatX memory = net.encode_condition(cond);
    CHECK(memory.rows() == 5);

    // Reverse the point order.
    Condition permuted = cond;
    for (int i = 0; i < cond.shape_points.rows(); ++i) {
        permuted.shape_points.row(i) =
            cond.shape_points.row(cond.shape_points.rows() - 1 - i);
    }
    const MatX out = net.denoise(x_t, 7, permuted);
    CHECK((out - base).cwiseAbs().maxCoeff() == 0.0);
    CHECK((net.encode_condition(permuted) - memory).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("different shapes give different memory") {
    const int width = feature_width(4);
    TransformerDenoiser net(small_denoiser_config(), width, 13);
    Rng rng(403);
    Condition a = random_condition(rng, 4, width);
    Condition b = a;
    b.shape_points = 0.1 * rng.normal_matrix(16, 3);
    CHECK((net.encode_condition(a) - net.encode_condition(b)).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("zero-initialized head gives a zero clean estimate") {
    DenoiserConfig cfg = small_denoiser_config();
    cfg.zero_init_head = true;
    const int width = feature_width(4);
    TransformerDenoiser net(cfg, width, 17);
    Rng rng(405);
    Condition cond = random_condition(rng, 4, width);
    const MatX out = net.denoise(rng.normal_matrix(3, width), 3, cond);
    CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("inference is deterministic and time-step sensitive") {
    DenoiserConfig cfg = small_denoiser_config();
    cfg.zero_init_head = false;
    const int width = feature_width(4);
    TransformerDenoiser net(cfg, width, 19);
    Rng rng(407);
    Condition cond = random_condition(rng, 4, width);
    const MatX x_t = rng.normal_matrix(3, width);
    const MatX a = net.denoise(x_t, 1, cond);
    const MatX b = net.denoise(x_t, 1, cond);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    const MatX c = net.denoise(x_t, 50, cond);
    CHECK((a - c).cwiseAbs().maxCoeff() > 1e-10);
}

TEST_CASE("denoiser rejects malformed inputs") {
    const int width = feature_width(4);
    TransformerDenoiser net(small_denoiser_config(), width, 23);
    Rng rng(409);
    Condition cond = random_condition(rng, 4, width);
    Condition empty = cond;
    empty.shape_points = MatX::Zero(0, 3);
    CHECK_THROWS_AS(net.denoise(rng.normal_matrix(3, width), 1, empty), ShapeError);

    DenoiserConfig tiny = small_denoiser_config();
    tiny.max_frames = 4;
    TransformerDenoiser bounded(tiny, width, 23);
    CHECK_THROWS_AS(bounded.denoise(rng.normal_matrix(9, width), 1, cond), ConfigError);
}

TEST_CASE("parameter count is stable and gradients reach every tensor") {
    const int width = feature_width(4);
    TransformerDenoiser a(small_denoiser_config(), width, 29);
    TransformerDenoiser b(small_denoiser_config(), width, 31);
    CHECK(a.param_count() == b.param_count());
    CHECK(a.param_count() > 0);

    // Two optimization steps: the zero-initialized head blocks upstream
    // gradients only until its own first update.
    Rng rng(411);
    std::vector<TrainingExample> batch(2);
    for (auto& ex : batch) {
        ex.features = rng.normal_matrix(7, width);
        ex.shape_points = 0.1 * rng.normal_matrix(8, 3);
    }
    const NoiseSchedule s = make_schedule(10, ScheduleKind::linear);
    ad::Adam opt(ad::AdamConfig{1e-3});
    auto params = a.params();
    Rng train_rng(3);
    for (int step = 0; step < 2; ++step) {
        for (auto* p : params) p->zero_grad();
        train_diffusion_step(batch, a, s, DiffusionLossWeights{}, 3, 4, train_rng);
        if (step == 1) {
            for (auto* p : params) {
                INFO(p->name);
                CHECK(p->grad.cwiseAbs().maxCoeff() > 0.0);
            }
        }
        opt.step(params);
    }
}

TEST_CASE("denoiser checkpoint round trip") {
    const int width = feature_width(4);
    DenoiserConfig cfg = small_denoiser_config();
    cfg.zero_init_head = false;
    TransformerDenoiser net(cfg, width, 37);
    Rng rng(413);
    Condition cond = random_condition(rng, 4, width);
    const MatX x_t = rng.normal_matrix(3, width);
    const MatX before = net.denoise(x_t, 5, cond);

    const std::string path = "/tmp/interdiff_test_denoiser.ckpt";
    net.save(path, "{\"note\":42}");
    std::string extra;
    auto loaded = TransformerDenoiser::load(path, &extra);
    CHECK((loaded->denoise(x_t, 5, cond) - before).cwiseAbs().maxCoeff() == 0.0);
    CHECK(extra.find("42") != std::string::npos);
    std::remove(path.c_str());
}

TEST_CASE("denoiser overfits a single synthetic clip") {
    const BodyProxy body = default_body();
    const ObjectShape shape = make_box_shape(Vec3(0.05, 0.04, 0.06), 64, 12, 5);
    Scenario sc;
    sc.kind = ScenarioKind::carry;
    sc.duration = 12;
    sc.past = 4;
    sc.future = 8;
    sc.seed = 77;
    const HoiSequence clip = generate_synthetic(sc, body, shape);
    const MatX features = flatten_state(clip);
    const NormStats stats = fit_norm_stats({features});
    const MatX norm = stats.normalize(features);

    DenoiserConfig cfg = small_denoiser_config();
    cfg.latent_dim = 48;
    cfg.ffn_dim = 96;
    const int width = feature_width(clip.joint_count());
    TransformerDenoiser net(cfg, width, 41);
    const NoiseSchedule schedule = make_schedule(50, ScheduleKind::linear);

    // One clip, many (t, noise) draws per optimizer step.
    std::vector<TrainingExample> batch(24);
    for (auto& ex : batch) {
        ex.features = norm;
        ex.shape_points = shape.points;
    }

    ad::Adam opt(ad::AdamConfig{1e-2});
    auto params = net.params();
    Rng rng(43);
    for (int step = 0; step < 200; ++step) {
        opt.set_lr(1e-2 * (1.0 - 0.95 * step / 200.0));
        for (auto* p : params) p->zero_grad();
        train_diffusion_step(batch, net, schedule, DiffusionLossWeights{}, sc.past,
                             clip.joint_count(), rng);
        opt.step(params);
    }

    Condition cond;
    cond.past_features = norm.topRows(sc.past);
    cond.shape_points = shape.points;
    const MatX target = norm.bottomRows(sc.future);
    Rng noise_rng(45);
    const MatX x1 = q_sample(target, 1, schedule, noise_rng.normal_matrix(sc.future, width));
    const MatX recon = net.denoise(x1, 1, cond);
    const double mse = (recon - target).array().square().mean();
    CHECK(mse < 1e-3);
}

// ---------------------------------------------------------------------------
// predictor: DCT

TEST_CASE("dct basics") {
    const DctBasis full = DctBasis::make(8, 8);
    CHECK((full.C * full.C.transpose() - MatX::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-12);

    // Constant signal: only the DC coefficient is nonzero.
    const MatX constant = MatX::Constant(8, 2, 1.7);
    const MatX coeffs = dct_forward(constant, full);
    CHECK(coeffs.row(0).cwiseAbs().minCoeff() > 0.1);
    CHECK(coeffs.bottomRows(7).cwiseAbs().maxCoeff() < 1e-12);

    Rng rng(501);
    const MatX track = rng.normal_matrix(8, 3);
    CHECK((dct_inverse(dct_forward(track, full), full) - track).cwiseAbs().maxCoeff() < 1e-9);

    // Truncated basis equals the explicit projection oracle.
    const DctBasis trunc = DctBasis::make(3, 8);
    const MatX projected = dct_inverse(dct_forward(track, trunc), trunc);
    const MatX oracle = trunc.C.transpose() * trunc.C * track;
    CHECK((projected - oracle).cwiseAbs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(dct_forward(rng.normal_matrix(5, 3), trunc), ShapeError);
    CHECK_THROWS_AS(DctBasis::make(9, 8), ConfigError);
}

TEST_CASE("dct truncation on a 35-frame track matches the projection oracle") {
    Rng rng(503);
    const MatX track = rng.normal_matrix(35, 9);
    const DctBasis basis = DctBasis::make(10, 35);
    const MatX reconstructed = dct_inverse(dct_forward(track, basis), basis);
    const MatX oracle = basis.C.transpose() * basis.C * track;
    CHECK((reconstructed - oracle).cwiseAbs().maxCoeff() < 1e-9);
}

// ---------------------------------------------------------------------------
// predictor: STGNN

namespace {

PredictorConfig small_predictor_config() {
    PredictorConfig cfg;
    cfg.dct_bases = 6;
    cfg.blocks = 2;
    cfg.width = 24;
    cfg.loss_points = 32;
    return cfg;
}

StGraph random_graph(Rng& rng, int nodes, int frames) {
    StGraph g;
    for (int n = 0; n < nodes; ++n) g.nodes.push_back(rng.normal_matrix(frames, 9));
    return g;
}

}  // namespace

TEST_CASE("zero-initialized stgnn holds the last frame exactly") {
    Rng rng(507);
    StgnnModel model(small_predictor_config(), 5, 61);
    const StGraph graph = random_graph(rng, 5, 4);
    const StGraph future = predict_relative(graph, model, 6);
    CHECK(future.node_count() == 5);
    CHECK(future.frames() == 6);
    for (int n = 0; n < 5; ++n) {
        for (int f = 0; f < 6; ++f) {
            CHECK((future.nodes[n].row(f) - graph.nodes[n].row(3)).cwiseAbs().maxCoeff() == 0.0);
        }
    }
}

TEST_CASE("stgnn rejects node mismatch") {
    Rng rng(509);
    StgnnModel model(small_predictor_config(), 5, 63);
    const StGraph graph = random_graph(rng, 4, 4);
    CHECK_THROWS_AS(predict_relative(graph, model, 6), ShapeError);
}

TEST_CASE("predictor checkpoint round trip") {
    StgnnModel model(small_predictor_config(), 5, 67);
    // Perturb away from the zero init so the round trip is meaningful.
    for (auto* p : model.params()) {
        Rng r(71);
        p->value += 0.01 * r.normal_matrix(p->value.rows(), p->value.cols());
    }
    Rng rng(73);
    const StGraph graph = random_graph(rng, 5, 4);
    const StGraph before = predict_relative(graph, model, 6);

    const std::string path = "/tmp/interdiff_test_predictor.ckpt";
    model.save(path);
    auto loaded = StgnnModel::load(path);
    const StGraph after = predict_relative(graph, *loaded, 6);
    for (int n = 0; n < 5; ++n) {
        CHECK((after.nodes[n] - before.nodes[n]).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK_THROWS_AS(TransformerDenoiser::load(path), VersionError);
    std::remove(path.c_str());
}

// ---------------------------------------------------------------------------
// predictor: interaction_predict

namespace {

struct CarrySetup {
    BodyProxy body;
    ObjectShape shape;
    HoiSequence clip;
};

CarrySetup make_carry(std::uint64_t seed, int past = 4, int future = 6) {
    CarrySetup setup;
    setup.body = default_body();
    setup.shape = make_box_shape(Vec3(0.05, 0.05, 0.05), 48, 12, seed);
    Scenario sc;
    sc.kind = ScenarioKind::carry;
    sc.duration = past + future;
    sc.past = past;
    sc.future = future;
    sc.seed = seed;
    setup.clip = generate_synthetic(sc, setup.body, setup.shape);
    return setup;
}

}  // namespace

TEST_CASE("interaction_predict keeps human channels bit-identical") {
    CarrySetup setup = make_carry(81);
    StgnnModel model(small_predictor_config(), 17, 83);
    const ContactState c = contact_state(setup.clip, setup.shape, setup.body,
                                         ContactMode::marker);
    const ReferenceChoice s = select_reference(c, 0.05);
    CHECK(!s.is_ground());

    const HoiSequence out = interaction_predict(setup.clip, s, model, setup.body);
    for (int f = 0; f < setup.clip.frames(); ++f) {
        CHECK((out.human[f].joints - setup.clip.human[f].joints).cwiseAbs().maxCoeff() == 0.0);
    }
    // Past object frames pass through.
    for (int f = 0; f < setup.clip.past_frames; ++f) {
        CHECK((out.object[f].translation - setup.clip.object[f].translation).norm() == 0.0);
    }
}

TEST_CASE("ground reference makes re-anchoring the identity") {
    CarrySetup setup = make_carry(87);
    StgnnModel model(small_predictor_config(), 17, 89);
    ReferenceChoice ground;
    ground.s = -1;
    const HoiSequence out = interaction_predict(setup.clip, ground, model, setup.body);

    const StGraph graph = build_st_graph(setup.clip, setup.body, ContactMode::marker,
                                         OrientationMode::translation_only);
    const StGraph future = predict_relative(graph, model, setup.clip.future_frames);
    for (int i = 0; i < setup.clip.future_frames; ++i) {
        const Eigen::Matrix<double, 9, 1> feat =
            future.nodes[0].row(i).transpose();
        const ObjectPose expect = object_from_features(feat);
        CHECK((out.object[setup.clip.past_frames + i].translation - expect.translation).norm() <
              1e-12);
    }

    ReferenceChoice bad;
    bad.s = 99;
    CHECK_THROWS_AS(interaction_predict(setup.clip, bad, model, setup.body), ShapeError);
}

TEST_CASE("zero-init model on a rigid carry rides the marker exactly") {
    CarrySetup setup = make_carry(91);
    StgnnModel model(small_predictor_config(), 17, 93);  // zero residual: last-frame hold
    const ContactState c = contact_state(setup.clip, setup.shape, setup.body,
                                         ContactMode::marker);
    const ReferenceChoice s = select_reference(c, 0.05);
    REQUIRE(!s.is_ground());

    const HoiSequence out = interaction_predict(setup.clip, s, model, setup.body);
    // Carry: relative translation is constant, so last-frame hold plus
    // re-anchoring reproduces the true object track.
    const int H = setup.clip.past_frames;
    for (int i = 0; i < setup.clip.future_frames; ++i) {
        CHECK((out.object[H + i].translation - setup.clip.object[H + i].translation).norm() <
              1e-6);
    }
}

// ---------------------------------------------------------------------------
// predictor: training

namespace {

// Toy model: track_n = padded_n + C^T (a * ones + b * coeffs_n), 2 params.
struct ToyPredictor final : PredictorModel {
    ad::Param a{"a", MatX::Constant(1, 1, 0.01)};
    ad::Param b{"b", MatX::Constant(1, 1, 0.02)};
    int bases;

    explicit ToyPredictor(int dct_bases) : bases(dct_bases) {}

    std::vector<ad::Var> predict_tracks(ad::Tape& tape, const StGraph& graph, int total_frames,
                                        bool train) override {
        const DctBasis basis = DctBasis::make(std::min(bases, total_frames), total_frames);
        std::vector<ad::Var> out;
        for (const MatX& node : graph.nodes) {
            MatX padded(total_frames, node.cols());
            padded.topRows(node.rows()) = node;
            for (int i = static_cast<int>(node.rows()); i < total_frames; ++i) {
                padded.row(i) = node.row(node.rows() - 1);
            }
            const MatX coeffs = basis.C * padded;
            ad::Var va = train ? tape.leaf(a) : tape.constant(a.value);
            ad::Var vb = train ? tape.leaf(b) : tape.constant(b.value);
            ad::Var delta = tape.add(tape.mul(tape.constant(coeffs), vb),
                                     tape.mul(tape.constant(MatX::Ones(coeffs.rows(),
                                                                       coeffs.cols())),
                                              va));
            out.push_back(tape.add(tape.constant(padded),
                                   tape.matmul(tape.constant(MatX(basis.C.transpose())), delta)));
        }
        return out;
    }
    std::vector<ad::Param*> params() override { return {&a, &b}; }
};

}  // namespace

TEST_CASE("predictor losses vanish for a ground-truth hold and an outside object") {
    // A static carry clip: the object is rigidly attached and the human holds
    // still, so a zero-residual model reproduces the ground truth.
    CarrySetup setup = make_carry(95);
    // Freeze motion: replace all frames with frame 0.
    for (int f = 1; f < setup.clip.frames(); ++f) {
        setup.clip.human[f] = setup.clip.human[0];
        setup.clip.object[f] = setup.clip.object[0];
    }
    StgnnModel model(small_predictor_config(), 17, 97);  // zero residual

    PredictorConfig cfg = small_predictor_config();
    cfg.lambda_c = 0.0;  // contact term measures distance, not error; see below
    cfg.lambda_p = 0.1;
    std::vector<PredictorExample> batch(1);
    batch[0].seq = setup.clip;
    batch[0].shape = setup.shape;
    const PredictorLosses losses =
        train_predictor_step(batch, model, cfg, setup.body, PredictorTrainOptions{});
    CHECK(losses.l_o == doctest::Approx(0.0));
    CHECK(losses.l_vo == doctest::Approx(0.0));

    // Object far outside the body: no penetration loss.
    CHECK(losses.l_p == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("predictor training gradients match finite differences") {
    CarrySetup setup = make_carry(99, 3, 4);
    ToyPredictor toy(4);
    PredictorConfig cfg = small_predictor_config();
    cfg.loss_points = 16;
    std::vector<PredictorExample> batch(1);
    batch[0].seq = setup.clip;
    batch[0].shape = setup.shape;

    PredictorTrainOptions options;
    auto loss_at = [&]() {
        for (auto* p : toy.params()) p->zero_grad();
        return train_predictor_step(batch, toy, cfg, setup.body, options);
    };

    const PredictorLosses base = loss_at();
    CHECK(base.l_c > 0.0);  // the attached marker stays below the threshold
    std::vector<double> analytic;
    for (auto* p : toy.params()) analytic.push_back(p->grad(0, 0));

    const double h = 1e-6;
    int i = 0;
    for (auto* p : toy.params()) {
        const double saved = p->value(0, 0);
        p->value(0, 0) = saved + h;
        const double up = loss_at().total;
        p->value(0, 0) = saved - h;
        const double dn = loss_at().total;
        p->value(0, 0) = saved;
        const double fd = (up - dn) / (2 * h);
        INFO("param " << i << " fd=" << fd << " an=" << analytic[i]);
        CHECK(std::abs(fd - analytic[i]) / std::max({std::abs(fd), std::abs(analytic[i]), 1e-8}) <
              1e-4);
        ++i;
    }
}

TEST_CASE("stgnn overfits a single carry clip in the relative domain") {
    CarrySetup setup = make_carry(103, 4, 6);
    PredictorConfig cfg = small_predictor_config();
    cfg.lambda_c = 0.0;
    cfg.lambda_p = 0.0;
    StgnnModel model(cfg, 17, 105);

    std::vector<PredictorExample> batch(1);
    batch[0].seq = setup.clip;
    batch[0].shape = setup.shape;
    PredictorTrainOptions options;

    ad::Adam opt(ad::AdamConfig{2e-3});
    auto params = model.params();
    for (int step = 0; step < 60; ++step) {
        for (auto* p : params) p->zero_grad();
        train_predictor_step(batch, model, cfg, setup.body, options);
        opt.step(params);
    }

    const ContactState c = contact_state(setup.clip, setup.shape, setup.body,
                                         ContactMode::marker);
    const ReferenceChoice s = select_reference(c, 0.05);
    REQUIRE(!s.is_ground());
    const StGraph graph = build_st_graph(setup.clip, setup.body, ContactMode::marker,
                                         OrientationMode::translation_only);
    const StGraph future = predict_relative(graph, model, setup.clip.future_frames);

    const auto anchors = contact_point_tracks(setup.clip, setup.body, ContactMode::marker, 0,
                                              setup.clip.frames());
    const std::vector<ObjectPose> gt_future(setup.clip.object.begin() + setup.clip.past_frames,
                                            setup.clip.object.end());
    const std::vector<Vec3> anchor_future(anchors[s.s].begin() + setup.clip.past_frames,
                                          anchors[s.s].end());
    const MatX gt_rel = object_track_features(
        to_reference(gt_future, anchor_future, OrientationMode::translation_only));
    const double mse = (future.nodes[s.s + 1] - gt_rel).array().square().mean();
    CHECK(mse < 1e-3);
}
