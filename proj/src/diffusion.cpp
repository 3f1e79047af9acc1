#include "interdiff/diffusion.hpp"

#include <cmath>

namespace interdiff {

ScheduleKind schedule_kind_from_string(const std::string& name) {
    if (name == "linear") return ScheduleKind::linear;
    if (name == "cosine") return ScheduleKind::cosine;
    throw ConfigError("unknown schedule kind: " + name);
}

NoiseSchedule make_schedule(int T, ScheduleKind kind, double beta_min, double beta_max) {
    if (T < 2) throw ConfigError("schedule needs T >= 2, got " + std::to_string(T));
    NoiseSchedule s;
    s.T = T;
    s.betas = VecX::Zero(T + 1);
    if (kind == ScheduleKind::linear) {
        if (beta_min < 0.0 || beta_max < 0.0) {
            const double scale = 1000.0 / T;
            beta_max = std::min(0.02 * scale, 0.8);  // clamp for very short schedules
            beta_min = std::min(1e-4 * scale, beta_max / 10.0);
        }
        for (int t = 1; t <= T; ++t) {
            s.betas[t] = beta_min + (beta_max - beta_min) * (t - 1) / (T - 1);
        }
    } else {
        // Cosine alpha-bar profile with clipped per-step betas.
        const double offset = 0.008;
        auto f = [&](double t) {
            const double v = std::cos((t / T + offset) / (1.0 + offset) * M_PI / 2.0);
            return v * v;
        };
        for (int t = 1; t <= T; ++t) {
            const double beta = 1.0 - f(t) / f(t - 1.0);
            s.betas[t] = std::min(std::max(beta, 1e-8), 0.999);
        }
    }
    for (int t = 1; t <= T; ++t) {
        if (!(s.betas[t] > 0.0 && s.betas[t] < 1.0)) {
            throw ConfigError("beta outside (0,1) at step " + std::to_string(t));
        }
    }
    s.alphas = VecX::Ones(T + 1) - s.betas;
    s.alpha_bars = VecX::Ones(T + 1);
    for (int t = 1; t <= T; ++t) s.alpha_bars[t] = s.alpha_bars[t - 1] * s.alphas[t];
    return s;
}

MatX q_sample(const MatX& x0, int t, const NoiseSchedule& schedule, const MatX& noise) {
    if (t < 0 || t > schedule.T) {
        throw ShapeError("q_sample step out of range: " + std::to_string(t));
    }
    if (noise.rows() != x0.rows() || noise.cols() != x0.cols()) {
        throw ShapeError("q_sample noise shape mismatch");
    }
    const double ab = schedule.alpha_bar(t);
    if (t == 0) return x0;
    return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * noise;
}

ReverseStepResult reverse_step(const MatX& x_t, int t, const Denoiser& denoiser,
                               const Condition& cond, const NoiseSchedule& schedule,
                               const MatX& noise) {
    if (t < 1 || t > schedule.T) {
        throw ShapeError("reverse_step needs t in [1, T], got " + std::to_string(t));
    }
    ReverseStepResult out;
    out.clean = denoiser.denoise(x_t, t, cond);
    if (out.clean.rows() != x_t.rows() || out.clean.cols() != x_t.cols()) {
        throw TrainingError("denoiser violated its shape contract at step " + std::to_string(t));
    }
    const double ab_prev = schedule.alpha_bar(t - 1);
    if (t - 1 == 0) {
        out.next = out.clean;  // alpha_bar(0) = 1: no re-noising
    } else {
        out.next = std::sqrt(ab_prev) * out.clean + std::sqrt(1.0 - ab_prev) * noise;
    }
    return out;
}

SampleResult sample_with_correction(const Condition& cond, const Denoiser& denoiser,
                                    const NoiseSchedule& schedule, int future_frames,
                                    int width, CorrectionHook* hook, std::uint64_t seed) {
    Rng rng(seed);
    SampleResult result;
    MatX x = rng.normal_matrix(future_frames, width);
    for (int t = schedule.T; t >= 1; --t) {
        MatX clean = denoiser.denoise(x, t, cond);
        if (clean.rows() != x.rows() || clean.cols() != x.cols()) {
            throw TrainingError("denoiser violated its shape contract at step " +
                                std::to_string(t));
        }
        if (hook != nullptr) {
            CorrectionRecord record;
            record.t = t;
            try {
                if (auto corrected = hook->apply(clean, t, record)) {
                    clean = std::move(*corrected);
                }
            } catch (const std::exception& e) {
                throw TrainingError("correction hook failed at step " + std::to_string(t) +
                                    ": " + e.what());
            }
            result.report.push_back(record);
        }
        const double ab_prev = schedule.alpha_bar(t - 1);
        if (t - 1 == 0) {
            x = std::move(clean);
        } else {
            x = std::sqrt(ab_prev) * clean +
                std::sqrt(1.0 - ab_prev) * rng.normal_matrix(future_frames, width);
        }
    }
    // Final correction opportunity on the finished sample (blend weight 0).
    if (hook != nullptr) {
        CorrectionRecord record;
        record.t = 0;
        try {
            if (auto corrected = hook->apply(x, 0, record)) {
                x = std::move(*corrected);
            }
        } catch (const std::exception& e) {
            throw TrainingError(std::string("correction hook failed at step 0: ") + e.what());
        }
        result.report.push_back(record);
    }
    result.features = std::move(x);
    return result;
}

DiffusionLosses train_diffusion_step(const std::vector<TrainingExample>& batch,
                                     TrainableDenoiser& denoiser, const NoiseSchedule& schedule,
                                     const DiffusionLossWeights& weights, int past_frames,
                                     int joints, Rng& rng) {
    if (batch.empty()) throw TrainingError("train_diffusion_step: empty batch");
    const int width = static_cast<int>(batch.front().features.cols());
    const int human_cols = joints * 3;
    if (width != feature_width(joints)) {
        throw ShapeError("batch feature width " + std::to_string(width) +
                         " does not match joint count " + std::to_string(joints));
    }

    ad::Tape tape;
    ad::Var l_h, l_o, l_vh, l_vo;
    bool first = true;
    for (const TrainingExample& ex : batch) {
        const int frames = static_cast<int>(ex.features.rows());
        const int future = frames - past_frames;
        if (future < 1) throw ShapeError("example has no future frames");
        const MatX past = ex.features.topRows(past_frames);
        const MatX target = ex.features.bottomRows(future);

        const int t = rng.uniform_int(1, schedule.T);
        const MatX x_t = q_sample(target, t, schedule, rng.normal_matrix(future, width));

        Condition cond;
        cond.past_features = past;
        cond.shape_points = ex.shape_points;
        ad::Var clean = denoiser.denoise(tape, tape.constant(x_t), t, cond);
        if (clean.rows() != future || clean.cols() != width) {
            throw TrainingError("denoiser output shape mismatch in training step");
        }

        ad::Var diff = tape.sub(clean, tape.constant(target));
        ad::Var human_err = tape.mean(tape.square(tape.slice_cols(diff, 0, human_cols)));
        ad::Var object_err =
            tape.mean(tape.square(tape.slice_cols(diff, human_cols, width - human_cols)));

        // Velocity error across the future window; the first difference spans
        // the boundary from the last given past frame.
        MatX gt_vel(future, width);
        gt_vel.row(0) = target.row(0) - past.row(past_frames - 1);
        for (int i = 1; i < future; ++i) gt_vel.row(i) = target.row(i) - target.row(i - 1);
        ad::Var prev = tape.concat_rows(
            {tape.constant(past.bottomRows(1)), tape.slice_rows(clean, 0, future - 1)});
        ad::Var vel = tape.sub(tape.sub(clean, prev), tape.constant(gt_vel));
        ad::Var human_vel = tape.mean(tape.square(tape.slice_cols(vel, 0, human_cols)));
        ad::Var object_vel =
            tape.mean(tape.square(tape.slice_cols(vel, human_cols, width - human_cols)));

        if (first) {
            l_h = human_err;
            l_o = object_err;
            l_vh = human_vel;
            l_vo = object_vel;
            first = false;
        } else {
            l_h = tape.add(l_h, human_err);
            l_o = tape.add(l_o, object_err);
            l_vh = tape.add(l_vh, human_vel);
            l_vo = tape.add(l_vo, object_vel);
        }
    }
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    l_h = tape.scale(l_h, inv_n);
    l_o = tape.scale(l_o, inv_n);
    l_vh = tape.scale(l_vh, inv_n);
    l_vo = tape.scale(l_vo, inv_n);

    ad::Var total = tape.add(
        tape.add(tape.scale(l_h, weights.lambda_h), tape.scale(l_o, weights.lambda_o)),
        tape.add(tape.scale(l_vh, weights.lambda_vh), tape.scale(l_vo, weights.lambda_vo)));

    DiffusionLosses losses;
    losses.l_h = l_h.value()(0, 0);
    losses.l_o = l_o.value()(0, 0);
    losses.l_vh = l_vh.value()(0, 0);
    losses.l_vo = l_vo.value()(0, 0);
    losses.total = total.value()(0, 0);
    if (!std::isfinite(losses.total)) {
        throw TrainingError("non-finite diffusion loss: l_h=" + std::to_string(losses.l_h) +
                            " l_o=" + std::to_string(losses.l_o) +
                            " l_vh=" + std::to_string(losses.l_vh) +
                            " l_vo=" + std::to_string(losses.l_vo));
    }
    tape.backward(total);
    return losses;
}

}  // namespace interdiff
