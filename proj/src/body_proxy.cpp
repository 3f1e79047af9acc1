#include "interdiff/body_proxy.hpp"

#include <algorithm>
#include <cmath>

namespace interdiff {

namespace {

// Rest-pose positions by accumulating offsets up the parent chain.
std::vector<Vec3> rest_positions(const Skeleton& skeleton) {
    std::vector<Vec3> pos(skeleton.joint_count());
    for (int j = 0; j < skeleton.joint_count(); ++j) {
        pos[j] = skeleton.rest_offsets[j];
        if (skeleton.parents[j] >= 0) pos[j] += pos[skeleton.parents[j]];
    }
    return pos;
}

double collinearity_sine(const Vec3& u, const Vec3& v) {
    const double nu = u.norm(), nv = v.norm();
    if (nu < 1e-12 || nv < 1e-12) return 0.0;
    return u.cross(v).norm() / (nu * nv);
}

}  // namespace

void Skeleton::finalize() {
    const int joints = joint_count();
    if (joints < 2) throw ShapeError("skeleton needs at least 2 joints");
    if (static_cast<int>(rest_offsets.size()) != joints) {
        throw ShapeError("skeleton rest_offsets size mismatch");
    }
    if (static_cast<int>(capsule_radii.size()) != bone_count()) {
        throw ShapeError("skeleton capsule_radii must have one entry per bone");
    }
    if (parents[0] != -1) throw ShapeError("joint 0 must be the root (parent -1)");
    for (int j = 1; j < joints; ++j) {
        if (parents[j] < 0 || parents[j] >= j) {
            throw ShapeError("parents must be topologically ordered with parent < joint");
        }
    }
    for (double r : capsule_radii) {
        if (!(r > 0.0)) throw ShapeError("capsule radii must be positive");
    }
    for (const Vec3& o : rest_offsets) {
        if (!o.allFinite()) throw ShapeError("rest offsets must be finite");
    }
    for (int b = 0; b < bone_count(); ++b) {
        if (rest_offsets[b + 1].norm() <= 0.0) {
            throw ShapeError("bone rest length must be strictly positive");
        }
    }

    // Pick the frame auxiliary joint per bone from the rest pose: ancestors of
    // the parent joint first, then siblings, then children of the child, then
    // any joint. First sufficiently non-collinear candidate wins.
    const auto rest = rest_positions(*this);
    frame_aux.assign(bone_count(), -1);
    for (int b = 0; b < bone_count(); ++b) {
        const int p = bone_parent_joint(b);
        const int c = bone_child_joint(b);
        const Vec3 u = rest[c] - rest[p];

        std::vector<int> candidates;
        for (int a = parents[p]; a >= 0; a = parents[a]) candidates.push_back(a);
        for (int j = 1; j < joints; ++j) {
            if (parents[j] == p && j != c) candidates.push_back(j);
        }
        for (int j = 1; j < joints; ++j) {
            if (parents[j] == c) candidates.push_back(j);
        }
        for (int j = 0; j < joints; ++j) {
            if (j != p && j != c) candidates.push_back(j);
        }
        for (int a : candidates) {
            if (collinearity_sine(u, rest[a] - rest[p]) > 1e-3) {
                frame_aux[b] = a;
                break;
            }
        }
    }
}

void validate_markers(const MarkerSet& markers, const Skeleton& skeleton) {
    if (markers.empty()) throw ShapeError("marker set must be non-empty");
    for (const Marker& m : markers) {
        if (m.bone < 0 || m.bone >= skeleton.bone_count()) {
            throw ShapeError("marker bone index out of range: " + std::to_string(m.bone));
        }
        if (m.t < 0.0 || m.t > 1.0) {
            throw ShapeError("marker barycentric position must lie in [0, 1]");
        }
    }
}

std::vector<Se3Transform> forward_kinematics_frames(const Skeleton& skeleton,
                                                    const std::vector<Quatd>& joint_rotations,
                                                    const Se3Transform& root) {
    const int joints = skeleton.joint_count();
    if (static_cast<int>(joint_rotations.size()) != joints) {
        throw ShapeError("joint rotation count " + std::to_string(joint_rotations.size()) +
                         " != joint count " + std::to_string(joints));
    }
    std::vector<Se3Transform> frames(joints);
    for (int j = 0; j < joints; ++j) {
        const Se3Transform local(joint_rotations[j], Vec3::Zero());
        if (skeleton.parents[j] < 0) {
            frames[j] = Se3Transform(root.rotation * joint_rotations[j],
                                     root.translation + root.rotation * skeleton.rest_offsets[j]);
        } else {
            const Se3Transform& parent = frames[skeleton.parents[j]];
            frames[j] = Se3Transform(parent.rotation * joint_rotations[j],
                                     parent.translation + parent.rotation * skeleton.rest_offsets[j]);
        }
    }
    return frames;
}

HumanPose forward_kinematics(const Skeleton& skeleton, const std::vector<Quatd>& joint_rotations,
                             const Se3Transform& root) {
    const auto frames = forward_kinematics_frames(skeleton, joint_rotations, root);
    HumanPose pose;
    pose.joints.resize(skeleton.joint_count(), 3);
    for (int j = 0; j < skeleton.joint_count(); ++j) {
        pose.joints.row(j) = frames[j].translation.transpose();
    }
    return pose;
}

Quatd bone_frame_rotation(const HumanPose& pose, const Skeleton& skeleton, int bone) {
    const int p = skeleton.bone_parent_joint(bone);
    const int c = skeleton.bone_child_joint(bone);
    const Vec3 a = pose.joints.row(p);
    const Vec3 b = pose.joints.row(c);
    Vec3 e1 = b - a;
    const double len = e1.norm();
    if (len < 1e-12) throw ShapeError("degenerate bone: coincident joints");
    e1 /= len;

    Vec3 v = Vec3::UnitZ();
    const int aux = skeleton.frame_aux.empty() ? -1 : skeleton.frame_aux[bone];
    if (aux >= 0) v = Vec3(pose.joints.row(aux)) - a;
    Vec3 e2 = v - e1.dot(v) * e1;
    if (e2.norm() < 1e-8) {
        // Degenerate at runtime: complete with the least-aligned world axis.
        int axis = 0;
        e1.cwiseAbs().minCoeff(&axis);
        Vec3 w = Vec3::Zero();
        w[axis] = 1.0;
        e2 = w - e1.dot(w) * e1;
    }
    e2.normalize();
    const Vec3 e3 = e1.cross(e2);
    Mat3 r;
    r.col(0) = e1;
    r.col(1) = e2;
    r.col(2) = e3;
    return normalized_canonical(Quatd(r));
}

int joint_frame_bone(const Skeleton& skeleton, int joint) {
    if (joint > 0) return joint - 1;
    for (int j = 1; j < skeleton.joint_count(); ++j) {
        if (skeleton.parents[j] == 0) return j - 1;
    }
    throw ShapeError("root joint has no outgoing bone");
}

Vec3 marker_position(const HumanPose& pose, const Skeleton& skeleton, const Marker& marker) {
    const int p = skeleton.bone_parent_joint(marker.bone);
    const int c = skeleton.bone_child_joint(marker.bone);
    const Vec3 a = pose.joints.row(p);
    const Vec3 b = pose.joints.row(c);
    const Vec3 base = a + marker.t * (b - a);
    if (marker.offset.isZero(0.0)) return base;
    const Quatd frame = bone_frame_rotation(pose, skeleton, marker.bone);
    return base + frame * marker.offset;
}

MatX marker_positions(const HumanPose& pose, const Skeleton& skeleton, const MarkerSet& markers) {
    MatX out(static_cast<int>(markers.size()), 3);
    for (size_t i = 0; i < markers.size(); ++i) {
        out.row(static_cast<int>(i)) = marker_position(pose, skeleton, markers[i]).transpose();
    }
    return out;
}

namespace {

double segment_distance(const Vec3& q, const Vec3& a, const Vec3& b) {
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 <= 0.0) return (q - a).norm();
    const double t = std::clamp((q - a).dot(ab) / len2, 0.0, 1.0);
    return (q - (a + t * ab)).norm();
}

}  // namespace

double body_sdf(const HumanPose& pose, const Skeleton& skeleton, const Vec3& query) {
    double best = std::numeric_limits<double>::infinity();
    for (int b = 0; b < skeleton.bone_count(); ++b) {
        const Vec3 a = pose.joints.row(skeleton.bone_parent_joint(b));
        const Vec3 c = pose.joints.row(skeleton.bone_child_joint(b));
        best = std::min(best, segment_distance(query, a, c) - skeleton.capsule_radii[b]);
    }
    return best;
}

VecX body_sdf_batch(const HumanPose& pose, const Skeleton& skeleton, const MatX& queries) {
    VecX out(queries.rows());
    for (int i = 0; i < queries.rows(); ++i) {
        out[i] = body_sdf(pose, skeleton, Vec3(queries.row(i)));
    }
    return out;
}

Skeleton default_skeleton() {
    Skeleton s;
    // 21 joints: torso/head column, two arms with hands, two legs to the ankle.
    //                parent   offset                      bone radius (into joint)
    const struct {
        int parent;
        double x, y, z;
        double radius;  // radius of the bone ending at this joint; ignored for root
    } spec[] = {
        {-1, 0.00, 0.00, 0.95, 0.0},    // 0 pelvis
        {0, 0.00, 0.00, 0.12, 0.11},    // 1 spine1
        {1, 0.00, 0.00, 0.12, 0.11},    // 2 spine2
        {2, 0.00, 0.00, 0.12, 0.12},    // 3 chest
        {3, 0.00, 0.00, 0.10, 0.05},    // 4 neck
        {4, 0.00, 0.00, 0.08, 0.09},    // 5 head
        {5, 0.02, 0.00, 0.12, 0.09},    // 6 head_top
        {3, 0.00, 0.18, 0.06, 0.05},    // 7 l_shoulder
        {7, 0.00, 0.26, -0.02, 0.045},  // 8 l_elbow
        {8, 0.00, 0.25, -0.02, 0.04},   // 9 l_wrist
        {9, 0.00, 0.09, -0.01, 0.035},  // 10 l_hand
        {3, 0.00, -0.18, 0.06, 0.05},   // 11 r_shoulder
        {11, 0.00, -0.26, -0.02, 0.045},// 12 r_elbow
        {12, 0.00, -0.25, -0.02, 0.04}, // 13 r_wrist
        {13, 0.00, -0.09, -0.01, 0.035},// 14 r_hand
        {0, 0.00, 0.09, -0.06, 0.07},   // 15 l_hip
        {15, 0.00, 0.01, -0.40, 0.06},  // 16 l_knee
        {16, 0.00, 0.00, -0.40, 0.05},  // 17 l_ankle
        {0, 0.00, -0.09, -0.06, 0.07},  // 18 r_hip
        {18, 0.00, -0.01, -0.40, 0.06}, // 19 r_knee
        {19, 0.00, 0.00, -0.40, 0.05},  // 20 r_ankle
    };
    for (const auto& row : spec) {
        s.parents.push_back(row.parent);
        s.rest_offsets.emplace_back(row.x, row.y, row.z);
        if (row.parent >= 0) s.capsule_radii.push_back(row.radius);
    }
    s.finalize();
    return s;
}

MarkerSet default_marker_set() {
    // 16 markers; offsets lie on the capsule surface (|offset| = bone radius)
    // along the second bone-frame axis, except on-axis joint markers.
    auto surface = [](int child_joint, double t, double radius) {
        Marker m;
        m.bone = child_joint - 1;
        m.t = t;
        m.offset = Vec3(0.0, radius, 0.0);
        return m;
    };
    auto on_axis = [](int child_joint, double t) {
        Marker m;
        m.bone = child_joint - 1;
        m.t = t;
        return m;
    };
    MarkerSet markers;
    markers.push_back(surface(10, 0.5, 0.035));  // 0 l_palm
    markers.push_back(surface(14, 0.5, 0.035));  // 1 r_palm
    markers.push_back(surface(9, 0.5, 0.04));    // 2 l_forearm
    markers.push_back(surface(13, 0.5, 0.04));   // 3 r_forearm
    markers.push_back(on_axis(8, 1.0));          // 4 l_elbow
    markers.push_back(on_axis(12, 1.0));         // 5 r_elbow
    markers.push_back(on_axis(7, 1.0));          // 6 l_shoulder
    markers.push_back(on_axis(11, 1.0));         // 7 r_shoulder
    markers.push_back(surface(3, 1.0, 0.12));    // 8 chest
    markers.push_back(surface(1, 0.5, 0.11));    // 9 belly
    markers.push_back(surface(6, 0.5, 0.09));    // 10 head
    markers.push_back(on_axis(16, 1.0));         // 11 l_knee
    markers.push_back(on_axis(19, 1.0));         // 12 r_knee
    markers.push_back(on_axis(17, 1.0));         // 13 l_foot
    markers.push_back(on_axis(20, 1.0));         // 14 r_foot
    markers.push_back(surface(1, 0.0, 0.11));    // 15 pelvis_back
    return markers;
}

BodyProxy default_body() {
    BodyProxy body;
    body.skeleton = default_skeleton();
    body.markers = default_marker_set();
    validate_markers(body.markers, body.skeleton);
    return body;
}

}  // namespace interdiff
