#pragma once

#include <vector>

#include "interdiff/core_types.hpp"

namespace interdiff {

// Articulated capsule body standing in for a skinned mesh. Bone b connects
// parents[b+1] -> joint b+1, so a skeleton with J joints has J-1 bones.
struct Skeleton {
    std::vector<int> parents;       // parent index per joint, root (index 0) = -1
    std::vector<Vec3> rest_offsets; // offset from parent frame, meters
    std::vector<double> capsule_radii;  // per bone

    int joint_count() const { return static_cast<int>(parents.size()); }
    int bone_count() const { return joint_count() - 1; }
    int bone_parent_joint(int bone) const { return parents[bone + 1]; }
    int bone_child_joint(int bone) const { return bone + 1; }

    // Auxiliary joint per bone used to complete the position-derived bone frame;
    // chosen once from the rest pose. -1 marks bones that fall back to a world-up frame.
    std::vector<int> frame_aux;

    // Validates the tree (topological parent order), radii, offsets, and fills frame_aux.
    void finalize();
};

// Marker rigidly attached to a capsule: barycentric position along the bone
// plus an offset expressed in the bone-local frame.
struct Marker {
    int bone = 0;
    double t = 0.0;   // 0 = parent joint, 1 = child joint
    Vec3 offset = Vec3::Zero();
};

using MarkerSet = std::vector<Marker>;

void validate_markers(const MarkerSet& markers, const Skeleton& skeleton);

struct BodyProxy {
    Skeleton skeleton;
    MarkerSet markers;
};

// ---------------------------------------------------------------------------
// Forward kinematics.

// One local rotation per joint; root is additionally transformed by `root`.
HumanPose forward_kinematics(const Skeleton& skeleton, const std::vector<Quatd>& joint_rotations,
                             const Se3Transform& root = Se3Transform());

// World frame per joint (rotation + origin), same traversal as forward_kinematics.
std::vector<Se3Transform> forward_kinematics_frames(const Skeleton& skeleton,
                                                    const std::vector<Quatd>& joint_rotations,
                                                    const Se3Transform& root = Se3Transform());

// ---------------------------------------------------------------------------
// Position-derived bone frames and markers.
//
// The frame is built only from joint positions so it is available for denoised
// poses: e1 along the bone, e2 from the auxiliary joint direction by
// Gram-Schmidt, e3 = e1 x e2. SE(3)-equivariant away from degenerate poses.

Quatd bone_frame_rotation(const HumanPose& pose, const Skeleton& skeleton, int bone);

// Bone used for a joint's frame in skeletal mode: the bone ending at the joint,
// or the first outgoing bone for the root.
int joint_frame_bone(const Skeleton& skeleton, int joint);

Vec3 marker_position(const HumanPose& pose, const Skeleton& skeleton, const Marker& marker);
MatX marker_positions(const HumanPose& pose, const Skeleton& skeleton, const MarkerSet& markers);

// ---------------------------------------------------------------------------
// Signed distance: min over bones of (distance to segment - radius).
// Negative inside the body.

double body_sdf(const HumanPose& pose, const Skeleton& skeleton, const Vec3& query);
VecX body_sdf_batch(const HumanPose& pose, const Skeleton& skeleton, const MatX& queries);

// ---------------------------------------------------------------------------
// Default synthetic body: 21-joint humanoid, capsule radii 3.5-12 cm,
// 16 capsule-surface markers.

Skeleton default_skeleton();
MarkerSet default_marker_set();
BodyProxy default_body();

}  // namespace interdiff
