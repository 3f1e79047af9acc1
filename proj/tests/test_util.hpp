#pragma once

#include <vector>

#include "interdiff/body_proxy.hpp"
#include "interdiff/core_types.hpp"

namespace interdiff::testutil {

inline Quatd random_unit_quat(Rng& rng) {
    Quatd q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    return normalized_canonical(q);
}

inline Se3Transform random_transform(Rng& rng, double trans_scale = 1.0) {
    return Se3Transform(random_unit_quat(rng), trans_scale * rng.normal_vec3());
}

inline std::vector<Quatd> random_joint_rotations(Rng& rng, int joints, double angle_scale = 0.3) {
    std::vector<Quatd> rots;
    rots.reserve(joints);
    for (int j = 0; j < joints; ++j) {
        Vec3 axis = rng.normal_vec3();
        if (axis.norm() < 1e-9) axis = Vec3::UnitX();
        axis.normalize();
        rots.emplace_back(Eigen::AngleAxisd(angle_scale * rng.normal(), axis));
    }
    return rots;
}

inline HumanPose random_human_pose(Rng& rng, int joints = 5) {
    HumanPose pose;
    pose.joints = rng.normal_matrix(joints, 3);
    return pose;
}

inline ObjectPose random_object_pose(Rng& rng, double trans_scale = 1.0) {
    return ObjectPose(random_unit_quat(rng), trans_scale * rng.normal_vec3());
}

inline HoiSequence random_sequence(Rng& rng, int past = 3, int future = 4, int joints = 5) {
    std::vector<HumanPose> human;
    std::vector<ObjectPose> object;
    for (int i = 0; i < past + future; ++i) {
        human.push_back(random_human_pose(rng, joints));
        object.push_back(random_object_pose(rng));
    }
    return HoiSequence::make(std::move(human), std::move(object), 30.0, past, future);
}

inline ObjectShape random_cloud_shape(Rng& rng, int points, int keypoints = 4) {
    ObjectShape shape;
    shape.points = 0.1 * rng.normal_matrix(points, 3);
    for (int k = 0; k < keypoints && k < points; ++k) shape.keypoints.push_back(k);
    shape.name = "random";
    return shape;
}

}  // namespace interdiff::testutil
