#include "interdiff/core_types.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace interdiff {

Quatd canonical_sign(const Quatd& q) {
    if (q.w() < 0.0) return Quatd(-q.w(), -q.x(), -q.y(), -q.z());
    return q;
}

Quatd normalized_canonical(const Quatd& q) {
    Quatd out = q;
    const double n = out.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw DegenerateRotationError("quaternion has zero or non-finite norm");
    }
    out.coeffs() /= n;
    return canonical_sign(out);
}

ObjectPose::ObjectPose() : translation(Vec3::Zero()) {
    rot6d_ << 1, 0, 0, 0, 1, 0;
    rotation_ = Quatd::Identity();
}

ObjectPose::ObjectPose(const Quatd& rot, const Vec3& trans) : translation(trans) {
    rot6d_ = quat_to_rot6d(normalized_canonical(rot));
    rotation_ = rot6d_to_quat(rot6d_);
}

ObjectPose ObjectPose::from_rot6d(const Rot6d& r6, const Vec3& trans) {
    ObjectPose pose;
    pose.rot6d_ = r6;
    pose.rotation_ = rot6d_to_quat(r6);
    pose.translation = trans;
    return pose;
}

Eigen::Matrix<double, 6, 1> quat_to_rot6d(const Quatd& q) {
    const Mat3 r = q.toRotationMatrix();
    Eigen::Matrix<double, 6, 1> out;
    out << r(0, 0), r(1, 0), r(2, 0), r(0, 1), r(1, 1), r(2, 1);
    return out;
}

Mat3 rot6d_to_matrix(const Eigen::Matrix<double, 6, 1>& r6) {
    const Vec3 a1 = r6.head<3>();
    const Vec3 a2 = r6.tail<3>();
    const double n1 = a1.norm();
    if (n1 < 1e-8) {
        throw DegenerateRotationError("rot6d first column is near zero");
    }
    const Vec3 b1 = a1 / n1;
    const Vec3 a2p = a2 - b1.dot(a2) * b1;
    const double n2 = a2p.norm();
    if (n2 < 1e-8) {
        throw DegenerateRotationError("rot6d columns are near parallel");
    }
    const Vec3 b2 = a2p / n2;
    const Vec3 b3 = b1.cross(b2);
    Mat3 r;
    r.col(0) = b1;
    r.col(1) = b2;
    r.col(2) = b3;
    return r;
}

Quatd rot6d_to_quat(const Eigen::Matrix<double, 6, 1>& r6) {
    return normalized_canonical(Quatd(rot6d_to_matrix(r6)));
}

namespace {

Quatd parse_rotation(const VecX& value, RotRepr source) {
    switch (source) {
        case RotRepr::quat: {
            if (value.size() != 4) throw ShapeError("quat value must have 4 entries");
            return normalized_canonical(Quatd(value[0], value[1], value[2], value[3]));
        }
        case RotRepr::rot6d: {
            if (value.size() != 6) throw ShapeError("rot6d value must have 6 entries");
            Eigen::Matrix<double, 6, 1> r6 = value;
            return rot6d_to_quat(r6);
        }
        case RotRepr::matrix: {
            if (value.size() != 9) throw ShapeError("matrix value must have 9 entries");
            Mat3 m;
            m << value[0], value[1], value[2],
                 value[3], value[4], value[5],
                 value[6], value[7], value[8];
            return normalized_canonical(Quatd(m));
        }
    }
    throw ConfigError("unknown rotation representation");
}

VecX emit_rotation(const Quatd& q, RotRepr target) {
    switch (target) {
        case RotRepr::quat: {
            VecX out(4);
            out << q.w(), q.x(), q.y(), q.z();
            return out;
        }
        case RotRepr::rot6d: {
            VecX out(6);
            out = quat_to_rot6d(q);
            return out;
        }
        case RotRepr::matrix: {
            const Mat3 m = q.toRotationMatrix();
            VecX out(9);
            out << m(0, 0), m(0, 1), m(0, 2),
                   m(1, 0), m(1, 1), m(1, 2),
                   m(2, 0), m(2, 1), m(2, 2);
            return out;
        }
    }
    throw ConfigError("unknown rotation representation");
}

}  // namespace

VecX convert_rotation(const VecX& value, RotRepr source, RotRepr target) {
    return emit_rotation(parse_rotation(value, source), target);
}

void validate_human_pose(const HumanPose& pose) {
    if (pose.joint_count() < 2) {
        throw ShapeError("human pose needs at least 2 joints, got " +
                         std::to_string(pose.joint_count()));
    }
    if (!pose.joints.allFinite()) {
        throw ShapeError("human pose contains non-finite coordinates");
    }
}

Se3Transform compose(const Se3Transform& a, const Se3Transform& b) {
    return Se3Transform(a.rotation * b.rotation, a.translation + a.rotation * b.translation);
}

Se3Transform invert(const Se3Transform& a) {
    const Quatd inv = a.rotation.conjugate();
    return Se3Transform(inv, -(inv * a.translation));
}

HoiSequence HoiSequence::make(std::vector<HumanPose> human, std::vector<ObjectPose> object,
                              double fps, int past, int future) {
    HoiSequence seq;
    seq.human = std::move(human);
    seq.object = std::move(object);
    seq.fps = fps;
    seq.past_frames = past;
    seq.future_frames = future;
    validate_sequence(seq);
    return seq;
}

void validate_sequence(const HoiSequence& seq) {
    if (seq.past_frames < 1 || seq.future_frames < 1) {
        throw ShapeError("sequence split needs H >= 1 and F >= 1, got H=" +
                         std::to_string(seq.past_frames) + " F=" +
                         std::to_string(seq.future_frames));
    }
    const int frames = seq.past_frames + seq.future_frames;
    if (static_cast<int>(seq.human.size()) != frames ||
        static_cast<int>(seq.object.size()) != frames) {
        throw ShapeError("sequence frame count mismatch: expected " + std::to_string(frames) +
                         ", got human=" + std::to_string(seq.human.size()) +
                         " object=" + std::to_string(seq.object.size()));
    }
    if (!(seq.fps > 0.0)) throw ShapeError("fps must be positive");
    const int joints = seq.human.front().joint_count();
    for (const auto& pose : seq.human) {
        validate_human_pose(pose);
        if (pose.joint_count() != joints) {
            throw ShapeError("inconsistent joint count across frames");
        }
    }
    for (const auto& pose : seq.object) {
        if (!pose.translation.allFinite() || !pose.rotation().coeffs().allFinite()) {
            throw ShapeError("object pose contains non-finite values");
        }
    }
}

MatX ObjectShape::keypoint_matrix() const {
    MatX out(static_cast<int>(keypoints.size()), 3);
    for (size_t i = 0; i < keypoints.size(); ++i) {
        out.row(static_cast<int>(i)) = points.row(keypoints[i]);
    }
    return out;
}

void validate_shape(const ObjectShape& shape) {
    if (shape.point_count() < 1) throw ShapeError("object shape has empty point cloud");
    if (!shape.points.allFinite()) throw ShapeError("object shape has non-finite points");
    for (int k : shape.keypoints) {
        if (k < 0 || k >= shape.point_count()) {
            throw ShapeError("shape keypoint index out of range: " + std::to_string(k));
        }
    }
}

MatX posed_points(const ObjectShape& shape, const ObjectPose& pose) {
    const Mat3 r = pose.rotation().toRotationMatrix();
    MatX out = shape.points * r.transpose();
    out.rowwise() += pose.translation.transpose();
    return out;
}

MatX posed_keypoints(const ObjectShape& shape, const ObjectPose& pose) {
    const Mat3 r = pose.rotation().toRotationMatrix();
    MatX out = shape.keypoint_matrix() * r.transpose();
    out.rowwise() += pose.translation.transpose();
    return out;
}

Eigen::Matrix<double, kObjectFeatureDim, 1> object_features(const ObjectPose& pose) {
    Eigen::Matrix<double, kObjectFeatureDim, 1> out;
    out.head<6>() = pose.rot6d();
    out.tail<3>() = pose.translation;
    return out;
}

ObjectPose object_from_features(const Eigen::Matrix<double, kObjectFeatureDim, 1>& feat) {
    return ObjectPose::from_rot6d(feat.head<6>(), feat.tail<3>());
}

MatX object_track_features(const std::vector<ObjectPose>& track) {
    MatX out(static_cast<int>(track.size()), kObjectFeatureDim);
    for (size_t i = 0; i < track.size(); ++i) {
        out.row(static_cast<int>(i)) = object_features(track[i]).transpose();
    }
    return out;
}

std::vector<ObjectPose> object_track_from_features(const MatX& features) {
    if (features.cols() != kObjectFeatureDim) {
        throw ShapeError("object track features must have width 9, got " +
                         std::to_string(features.cols()));
    }
    std::vector<ObjectPose> out;
    out.reserve(features.rows());
    for (int i = 0; i < features.rows(); ++i) {
        Eigen::Matrix<double, kObjectFeatureDim, 1> row = features.row(i).transpose();
        out.push_back(object_from_features(row));
    }
    return out;
}

MatX flatten_state(const HoiSequence& seq) {
    const int joints = seq.joint_count();
    const int width = feature_width(joints);
    MatX out(seq.frames(), width);
    for (int i = 0; i < seq.frames(); ++i) {
        for (int j = 0; j < joints; ++j) {
            out.block<1, 3>(i, j * 3) = seq.human[i].joints.row(j);
        }
        out.block<1, kObjectFeatureDim>(i, joints * 3) =
            object_features(seq.object[i]).transpose();
    }
    return out;
}

HoiSequence unflatten_state(const MatX& features, double fps, int past, int future) {
    const int width = static_cast<int>(features.cols());
    if ((width - kObjectFeatureDim) % 3 != 0 || width < 6 + kObjectFeatureDim) {
        throw ShapeError("feature width " + std::to_string(width) +
                         " does not decompose as J*3 + 9");
    }
    const int joints = (width - kObjectFeatureDim) / 3;
    const int frames = static_cast<int>(features.rows());
    if (frames != past + future) {
        throw ShapeError("feature rows " + std::to_string(frames) + " != H+F = " +
                         std::to_string(past + future));
    }
    std::vector<HumanPose> human(frames);
    std::vector<ObjectPose> object(frames);
    for (int i = 0; i < frames; ++i) {
        human[i].joints.resize(joints, 3);
        for (int j = 0; j < joints; ++j) {
            human[i].joints.row(j) = features.block<1, 3>(i, j * 3);
        }
        Eigen::Matrix<double, kObjectFeatureDim, 1> feat =
            features.block<1, kObjectFeatureDim>(i, joints * 3).transpose();
        object[i] = object_from_features(feat);
    }
    return HoiSequence::make(std::move(human), std::move(object), fps, past, future);
}

double Rng::uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 = static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * M_PI * u2;
    spare_ = mag * std::sin(ang);
    has_spare_ = true;
    return mag * std::cos(ang);
}

int Rng::uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(gen_() % span);
}

Vec3 Rng::normal_vec3() {
    Vec3 v;
    for (int i = 0; i < 3; ++i) v[i] = normal();
    return v;
}

MatX Rng::normal_matrix(int rows, int cols) {
    MatX out(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) out(r, c) = normal();
    }
    return out;
}

}  // namespace interdiff
