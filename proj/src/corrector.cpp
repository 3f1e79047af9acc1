#include "interdiff/corrector.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace interdiff {

std::string to_string(CorrectionTrigger trigger) {
    switch (trigger) {
        case CorrectionTrigger::penetration: return "penetration";
        case CorrectionTrigger::no_contact: return "no_contact";
        case CorrectionTrigger::schedule_only: return "schedule_only";
        case CorrectionTrigger::none: return "none";
    }
    return "none";
}

ShouldCorrectResult should_correct(const PenetrationState& penetration,
                                   const ContactState& contact, int t, int T,
                                   const CorrectorConfig& cfg) {
    ShouldCorrectResult out;
    const double window = cfg.late_fraction * T;
    if (t > window || (t % cfg.stride) != 0) return out;

    if (cfg.mode == "skeletal") {
        out.fire = true;
        out.trigger = CorrectionTrigger::schedule_only;
        return out;
    }
    const double sqrt_f = std::sqrt(static_cast<double>(contact.frames()));
    if (penetration.norm() > cfg.eps_penetration * sqrt_f) {
        out.fire = true;
        out.trigger = CorrectionTrigger::penetration;
        return out;
    }
    if (contact.min_column_norm() > cfg.eps_contact * sqrt_f) {
        out.fire = true;
        out.trigger = CorrectionTrigger::no_contact;
        return out;
    }
    return out;
}

MatX blend_features(const MatX& denoised, const MatX& corrected, int t, int T, int joints) {
    if (denoised.rows() != corrected.rows() || denoised.cols() != corrected.cols()) {
        throw ShapeError("blend: feature shape mismatch");
    }
    if (denoised.cols() != feature_width(joints)) {
        throw ShapeError("blend: feature width does not match joint count");
    }
    const double w = static_cast<double>(t) / T;
    if (w >= 1.0) return denoised;

    const int obj0 = joints * 3;
    MatX out = denoised;  // human channels pass through
    if (w <= 0.0) {
        out.rightCols(kObjectFeatureDim) = corrected.rightCols(kObjectFeatureDim);
    } else {
        // corrected + w * (denoised - corrected): exact at equal inputs.
        out.rightCols(kObjectFeatureDim) =
            corrected.rightCols(kObjectFeatureDim) +
            w * (denoised.rightCols(kObjectFeatureDim) - corrected.rightCols(kObjectFeatureDim));
    }
    // Re-orthonormalize rotation features of genuinely mixed rows; rows equal
    // to either input keep their (already valid or already raw) bits.
    for (int i = 0; i < out.rows(); ++i) {
        const Rot6d mixed = out.row(i).segment(obj0, 6).transpose();
        const Rot6d from_denoised = denoised.row(i).segment(obj0, 6).transpose();
        const Rot6d from_corrected = corrected.row(i).segment(obj0, 6).transpose();
        if (std::memcmp(mixed.data(), from_denoised.data(), 6 * sizeof(double)) == 0 ||
            std::memcmp(mixed.data(), from_corrected.data(), 6 * sizeof(double)) == 0) {
            continue;
        }
        out.row(i).segment(obj0, 6) = quat_to_rot6d(rot6d_to_quat(mixed)).transpose();
    }
    return out;
}

HoiSequence blend(const HoiSequence& denoised, const HoiSequence& corrected, int t, int T) {
    if (denoised.frames() != corrected.frames() ||
        denoised.joint_count() != corrected.joint_count()) {
        throw ShapeError("blend: sequence shape mismatch");
    }
    const MatX mixed = blend_features(flatten_state(denoised), flatten_state(corrected), t, T,
                                      denoised.joint_count());
    return unflatten_state(mixed, denoised.fps, denoised.past_frames, denoised.future_frames);
}

InteractionCorrector::InteractionCorrector(Setup setup) : s_(std::move(setup)) {
    if (s_.body == nullptr || s_.shape == nullptr || s_.model == nullptr) {
        throw ConfigError("InteractionCorrector needs body, shape, and model");
    }
    if (s_.past_human.empty() || s_.past_human.size() != s_.past_object.size()) {
        throw ShapeError("InteractionCorrector needs a non-empty past context");
    }
    contact_mode_ = s_.corrector.mode == "skeletal" ? ContactMode::joint : ContactMode::marker;
    s_.predict.contact_mode = contact_mode_;
}

std::optional<MatX> InteractionCorrector::apply(const MatX& clean_features, int t,
                                                CorrectionRecord& record) {
    record.t = t;
    const int T = s_.total_steps;
    const double window = s_.corrector.late_fraction * T;
    if (t > window || (t % s_.corrector.stride) != 0) {
        return std::nullopt;  // outside the window; geometry never evaluated
    }

    const int H = static_cast<int>(s_.past_human.size());
    const int F = static_cast<int>(clean_features.rows());
    const int joints = s_.past_human.front().joint_count();
    if (clean_features.cols() != feature_width(joints)) {
        throw ShapeError("corrector: feature width mismatch");
    }

    const MatX raw_future =
        s_.stats != nullptr ? s_.stats->denormalize(clean_features) : clean_features;

    // Assemble the denoised HOI from the clean past plus the decoded future.
    HoiSequence denoised;
    denoised.fps = s_.fps;
    denoised.past_frames = H;
    denoised.future_frames = F;
    denoised.human = s_.past_human;
    denoised.object = s_.past_object;
    denoised.human.resize(H + F);
    denoised.object.resize(H + F);
    for (int i = 0; i < F; ++i) {
        HumanPose pose;
        pose.joints.resize(joints, 3);
        for (int j = 0; j < joints; ++j) {
            pose.joints.row(j) = raw_future.block<1, 3>(i, j * 3);
        }
        denoised.human[H + i] = pose;
        Eigen::Matrix<double, kObjectFeatureDim, 1> feat =
            raw_future.block<1, kObjectFeatureDim>(i, joints * 3).transpose();
        denoised.object[H + i] = object_from_features(feat);
    }

    const ContactState contact = contact_state(denoised, *s_.shape, *s_.body, contact_mode_);
    PenetrationState penetration;
    penetration.depths = VecX::Zero(F);
    if (s_.corrector.mode == "mesh") {
        penetration = penetration_state(denoised, *s_.shape, *s_.body);
        record.p_norm = penetration.norm();
    }
    record.min_c = contact.min_column_norm();

    const ShouldCorrectResult decision = should_correct(penetration, contact, t, T, s_.corrector);
    record.trigger = to_string(decision.trigger);
    if (!decision.fire) return std::nullopt;

    const ReferenceChoice choice = select_reference(contact, s_.corrector.eps_contact);
    record.fired = true;
    record.s = choice.s;

    const HoiSequence corrected =
        interaction_predict(denoised, choice, *s_.model, *s_.body, s_.predict);

    // Blend in the raw feature domain, then restore the sampler's domain.
    MatX corrected_future(F, clean_features.cols());
    for (int i = 0; i < F; ++i) {
        corrected_future.row(i) = raw_future.row(i);
        corrected_future.block<1, kObjectFeatureDim>(i, joints * 3) =
            object_features(corrected.object[H + i]).transpose();
    }
    if ((corrected_future.array() == raw_future.array()).all()) {
        return std::nullopt;  // blend(x, x) = x
    }

    const MatX blended = blend_features(raw_future, corrected_future, t, T, joints);
    MatX out = clean_features;
    const MatX blended_norm = s_.stats != nullptr ? s_.stats->normalize(blended) : blended;
    out.rightCols(kObjectFeatureDim) = blended_norm.rightCols(kObjectFeatureDim);
    return out;
}

void write_correction_report(const std::string& path,
                             const std::vector<CorrectionRecord>& report) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write correction report: " + path);
    for (const CorrectionRecord& r : report) {
        nlohmann::json j;
        j["t"] = r.t;
        j["fired"] = r.fired;
        j["trigger"] = r.trigger;
        j["s"] = r.s;
        if (std::isnan(r.p_norm)) j["p_norm"] = nullptr; else j["p_norm"] = r.p_norm;
        if (std::isnan(r.min_c)) j["min_c"] = nullptr; else j["min_c"] = r.min_c;
        out << j.dump() << "\n";
    }
}

}  // namespace interdiff
