#include "interdiff/eval.hpp"

#include <cmath>

#include <json.hpp>

namespace interdiff {

namespace {

void check_same_size(size_t a, size_t b, const char* what) {
    if (a != b) {
        throw ShapeError(std::string(what) + ": size mismatch " + std::to_string(a) + " vs " +
                         std::to_string(b));
    }
}

}  // namespace

double mpjpe(const std::vector<HumanPose>& pred, const std::vector<HumanPose>& gt) {
    check_same_size(pred.size(), gt.size(), "mpjpe frames");
    if (pred.empty()) throw ShapeError("mpjpe: empty input");
    double total = 0.0;
    long count = 0;
    for (size_t f = 0; f < pred.size(); ++f) {
        if (pred[f].joint_count() != gt[f].joint_count()) {
            throw ShapeError("mpjpe: joint count mismatch");
        }
        for (int j = 0; j < pred[f].joint_count(); ++j) {
            total += (pred[f].joints.row(j) - gt[f].joints.row(j)).norm();
            ++count;
        }
    }
    return 1000.0 * total / static_cast<double>(count);
}

double mpjpe_o(const std::vector<ObjectPose>& pred, const std::vector<ObjectPose>& gt,
               const ObjectShape& shape) {
    check_same_size(pred.size(), gt.size(), "mpjpe_o frames");
    if (pred.empty()) throw ShapeError("mpjpe_o: empty input");
    if (shape.keypoints.empty()) throw ShapeError("mpjpe_o: shape has no keypoints");
    double total = 0.0;
    long count = 0;
    for (size_t f = 0; f < pred.size(); ++f) {
        const MatX kp = posed_keypoints(shape, pred[f]);
        const MatX kg = posed_keypoints(shape, gt[f]);
        for (int k = 0; k < kp.rows(); ++k) {
            total += (kp.row(k) - kg.row(k)).norm();
            ++count;
        }
    }
    return 1000.0 * total / static_cast<double>(count);
}

double trans_err(const std::vector<ObjectPose>& pred, const std::vector<ObjectPose>& gt) {
    check_same_size(pred.size(), gt.size(), "trans_err frames");
    if (pred.empty()) throw ShapeError("trans_err: empty input");
    double total = 0.0;
    for (size_t f = 0; f < pred.size(); ++f) {
        total += (pred[f].translation - gt[f].translation).norm();
    }
    return 1000.0 * total / static_cast<double>(pred.size());
}

double rot_err_quats(const std::vector<Quatd>& pred, const std::vector<Quatd>& gt) {
    check_same_size(pred.size(), gt.size(), "rot_err frames");
    if (pred.empty()) throw ShapeError("rot_err: empty input");
    double total = 0.0;
    for (size_t f = 0; f < pred.size(); ++f) {
        if (std::abs(pred[f].norm() - 1.0) > 1e-6 || std::abs(gt[f].norm() - 1.0) > 1e-6) {
            throw ShapeError("rot_err: non-unit quaternion input");
        }
        const VecX dp = (pred[f].coeffs() - gt[f].coeffs()).cwiseAbs();
        const VecX dn = (pred[f].coeffs() + gt[f].coeffs()).cwiseAbs();
        total += std::min(dp.sum(), dn.sum());  // double cover
    }
    return 1000.0 * total / static_cast<double>(pred.size());
}

double rot_err(const std::vector<ObjectPose>& pred, const std::vector<ObjectPose>& gt) {
    std::vector<Quatd> qp, qg;
    qp.reserve(pred.size());
    qg.reserve(gt.size());
    for (const auto& p : pred) qp.push_back(p.rotation());
    for (const auto& g : gt) qg.push_back(g.rotation());
    return rot_err_quats(qp, qg);
}

double pene_fraction(const HoiSequence& seq, const ObjectShape& shape, const BodyProxy& body,
                     bool skeletal_mode) {
    if (skeletal_mode) {
        throw NotApplicableError("the penetration metric is undefined for skeletal HOIs");
    }
    validate_shape(shape);
    const int H = seq.past_frames;
    const int F = seq.future_frames;
    double fraction_sum = 0.0;
    for (int i = 0; i < F; ++i) {
        const MatX cloud = posed_points(shape, seq.object[H + i]);
        const VecX sdf = body_sdf_batch(seq.human[H + i], body.skeleton, cloud);
        int inside = 0;
        for (int k = 0; k < sdf.size(); ++k) {
            if (sdf[k] < 0.0) ++inside;
        }
        fraction_sum += static_cast<double>(inside) / static_cast<double>(cloud.rows());
    }
    return fraction_sum / static_cast<double>(F);
}

namespace {

HoiSequence truncate_future(const HoiSequence& seq, int frames) {
    if (frames == seq.future_frames) return seq;
    if (frames > seq.future_frames) {
        throw ShapeError("evaluate: sequence has " + std::to_string(seq.future_frames) +
                         " future frames, need " + std::to_string(frames));
    }
    HoiSequence out = seq;
    out.human.resize(seq.past_frames + frames);
    out.object.resize(seq.past_frames + frames);
    out.future_frames = frames;
    return out;
}

}  // namespace

MetricsReport evaluate_sequences(const HoiSequence& pred, const HoiSequence& gt,
                                 const ObjectShape& shape, const BodyProxy& body, int frames,
                                 bool mesh_mode) {
    const HoiSequence p = truncate_future(pred, frames);
    const HoiSequence g = truncate_future(gt, frames);
    const int hp = p.past_frames, hg = g.past_frames;

    const std::vector<HumanPose> ph(p.human.begin() + hp, p.human.end());
    const std::vector<HumanPose> gh(g.human.begin() + hg, g.human.end());
    const std::vector<ObjectPose> po(p.object.begin() + hp, p.object.end());
    const std::vector<ObjectPose> go(g.object.begin() + hg, g.object.end());

    MetricsReport report;
    report.mpjpe_h = mpjpe(ph, gh);
    report.mpjpe_o = mpjpe_o(po, go, shape);
    report.trans_err = trans_err(po, go);
    report.rot_err = rot_err(po, go);
    if (mesh_mode) {
        report.pene_fraction = pene_fraction(p, shape, body);
        report.pene = 1e4 * report.pene_fraction;
        report.has_pene = true;
    }
    return report;
}

std::string MetricsReport::to_json_string() const {
    nlohmann::json j;
    j["mpjpe_h_mm"] = mpjpe_h;
    j["mpjpe_o_mm"] = mpjpe_o;
    j["trans_err_mm"] = trans_err;
    j["rot_err_1e3"] = rot_err;
    if (has_pene) {
        j["pene_1e2_percent"] = pene;
        j["pene_fraction"] = pene_fraction;
    } else {
        j["pene_1e2_percent"] = nullptr;
        j["pene_fraction"] = nullptr;
    }
    return j.dump();
}

MetricsReport best_of_many(const SeededSampler& sampler, const HoiSequence& gt,
                           const ObjectShape& shape, const BodyProxy& body, int n_samples,
                           std::uint64_t seed, bool mesh_mode) {
    if (n_samples < 1) throw ConfigError("best_of_many needs n_samples >= 1");
    MetricsReport best;
    for (int i = 0; i < n_samples; ++i) {
        HoiSequence candidate;
        try {
            candidate = sampler(seed + static_cast<std::uint64_t>(i));
        } catch (const std::exception& e) {
            throw TrainingError("best_of_many: candidate " + std::to_string(i) + " failed: " +
                                e.what());
        }
        const MetricsReport r = evaluate_sequences(candidate, gt, shape, body,
                                                   candidate.future_frames, mesh_mode);
        if (i == 0) {
            best = r;
        } else {
            best.mpjpe_h = std::min(best.mpjpe_h, r.mpjpe_h);
            best.mpjpe_o = std::min(best.mpjpe_o, r.mpjpe_o);
            best.trans_err = std::min(best.trans_err, r.trans_err);
            best.rot_err = std::min(best.rot_err, r.rot_err);
            if (mesh_mode) {
                best.pene = std::min(best.pene, r.pene);
                best.pene_fraction = std::min(best.pene_fraction, r.pene_fraction);
            }
        }
    }
    return best;
}

HoiSequence autoregressive_rollout(const WindowSampler& sampler, const HoiSequence& initial_past,
                                   int total_frames, int past_frames, int future_frames,
                                   std::uint64_t seed) {
    if (total_frames <= 0) throw ConfigError("rollout needs total_frames > 0");
    if (initial_past.frames() < past_frames) {
        throw ShapeError("rollout: initial past shorter than H");
    }

    std::vector<HumanPose> human(initial_past.human.end() - past_frames,
                                 initial_past.human.end());
    std::vector<ObjectPose> object(initial_past.object.end() - past_frames,
                                   initial_past.object.end());
    int generated = 0;
    int round = 0;
    while (generated < total_frames) {
        PastWindow window;
        window.fps = initial_past.fps;
        window.human.assign(human.end() - past_frames, human.end());
        window.object.assign(object.end() - past_frames, object.end());

        HoiSequence sampled;
        try {
            sampled = sampler(window, seed + static_cast<std::uint64_t>(round));
        } catch (const std::exception& e) {
            HoiSequence partial;
            partial.fps = initial_past.fps;
            partial.past_frames = past_frames;
            partial.future_frames = generated;
            partial.human = human;
            partial.object = object;
            throw RolloutError("rollout failed in round " + std::to_string(round) + " after " +
                                   std::to_string(generated) + " frames: " + e.what(),
                               std::move(partial), generated);
        }
        if (sampled.future_frames != future_frames || sampled.past_frames != past_frames) {
            throw ShapeError("rollout: sampler returned unexpected split");
        }
        for (int i = 0; i < future_frames && generated < total_frames; ++i) {
            human.push_back(sampled.human[past_frames + i]);
            object.push_back(sampled.object[past_frames + i]);
            ++generated;
        }
        ++round;
    }

    HoiSequence out;
    out.fps = initial_past.fps;
    out.past_frames = past_frames;
    out.future_frames = total_frames;
    out.human = std::move(human);
    out.object = std::move(object);
    validate_sequence(out);
    return out;
}

}  // namespace interdiff
