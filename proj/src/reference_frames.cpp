#include "interdiff/reference_frames.hpp"

namespace interdiff {

OrientationMode orientation_mode_from_string(const std::string& name) {
    if (name == "translation_only") return OrientationMode::translation_only;
    if (name == "bone_frame") return OrientationMode::bone_frame;
    throw ConfigError("unknown orientation mode: " + name);
}

std::string to_string(OrientationMode mode) {
    return mode == OrientationMode::translation_only ? "translation_only" : "bone_frame";
}

namespace {

void check_track_sizes(size_t motion, size_t anchors, OrientationMode mode,
                       const std::vector<Quatd>* bone_frames) {
    if (motion != anchors) {
        throw ShapeError("reference transform frame-count mismatch: motion=" +
                         std::to_string(motion) + " anchors=" + std::to_string(anchors));
    }
    if (mode == OrientationMode::bone_frame) {
        if (bone_frames == nullptr || bone_frames->size() != motion) {
            throw ShapeError("bone_frame mode requires one bone frame per frame");
        }
    }
}

}  // namespace

std::vector<ObjectPose> to_reference(const std::vector<ObjectPose>& object_motion,
                                     const std::vector<Vec3>& anchor_track,
                                     OrientationMode mode,
                                     const std::vector<Quatd>* bone_frames) {
    check_track_sizes(object_motion.size(), anchor_track.size(), mode, bone_frames);
    std::vector<ObjectPose> out = object_motion;
    for (size_t i = 0; i < out.size(); ++i) {
        if (mode == OrientationMode::translation_only) {
            out[i].translation -= anchor_track[i];
        } else {
            const Quatd inv = (*bone_frames)[i].conjugate();
            out[i] = ObjectPose(inv * object_motion[i].rotation(),
                                inv * (object_motion[i].translation - anchor_track[i]));
        }
    }
    return out;
}

std::vector<ObjectPose> from_reference(const std::vector<ObjectPose>& relative_motion,
                                       const std::vector<Vec3>& anchor_track,
                                       OrientationMode mode,
                                       const std::vector<Quatd>* bone_frames) {
    check_track_sizes(relative_motion.size(), anchor_track.size(), mode, bone_frames);
    std::vector<ObjectPose> out = relative_motion;
    for (size_t i = 0; i < out.size(); ++i) {
        if (mode == OrientationMode::translation_only) {
            out[i].translation += anchor_track[i];
        } else {
            const Quatd& frame = (*bone_frames)[i];
            out[i] = ObjectPose(frame * relative_motion[i].rotation(),
                                frame * relative_motion[i].translation + anchor_track[i]);
        }
    }
    return out;
}

std::vector<std::vector<Vec3>> contact_point_tracks(const HoiSequence& seq, const BodyProxy& body,
                                                    ContactMode mode, int begin, int end) {
    const int n_points = mode == ContactMode::marker ? static_cast<int>(body.markers.size())
                                                     : seq.joint_count();
    std::vector<std::vector<Vec3>> tracks(n_points);
    for (auto& t : tracks) t.reserve(end - begin);
    for (int frame = begin; frame < end; ++frame) {
        const MatX pts = contact_points(seq.human[frame], body, mode);
        for (int j = 0; j < n_points; ++j) tracks[j].emplace_back(pts.row(j));
    }
    return tracks;
}

std::vector<std::vector<Quatd>> contact_frame_tracks(const HoiSequence& seq, const BodyProxy& body,
                                                     ContactMode mode, int begin, int end) {
    const int n_points = mode == ContactMode::marker ? static_cast<int>(body.markers.size())
                                                     : seq.joint_count();
    std::vector<std::vector<Quatd>> tracks(n_points);
    for (int frame = begin; frame < end; ++frame) {
        for (int j = 0; j < n_points; ++j) {
            const int bone = mode == ContactMode::marker ? body.markers[j].bone
                                                         : joint_frame_bone(body.skeleton, j);
            tracks[j].push_back(bone_frame_rotation(seq.human[frame], body.skeleton, bone));
        }
    }
    return tracks;
}

StGraph build_st_graph(const HoiSequence& seq, const BodyProxy& body, ContactMode contact_mode,
                       OrientationMode orientation_mode) {
    const int H = seq.past_frames;
    if (H < 1) throw ShapeError("build_st_graph requires at least one past frame");
    const std::vector<ObjectPose> past_object(seq.object.begin(), seq.object.begin() + H);

    const auto anchors = contact_point_tracks(seq, body, contact_mode, 0, H);
    std::vector<std::vector<Quatd>> frames;
    if (orientation_mode == OrientationMode::bone_frame) {
        frames = contact_frame_tracks(seq, body, contact_mode, 0, H);
    }

    StGraph graph;
    graph.nodes.reserve(1 + anchors.size());
    graph.nodes.push_back(object_track_features(past_object));
    for (size_t j = 0; j < anchors.size(); ++j) {
        const std::vector<Quatd>* bone_frames =
            orientation_mode == OrientationMode::bone_frame ? &frames[j] : nullptr;
        graph.nodes.push_back(object_track_features(
            to_reference(past_object, anchors[j], orientation_mode, bone_frames)));
    }
    return graph;
}

}  // namespace interdiff
