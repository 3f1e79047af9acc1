#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "interdiff/errors.hpp"

namespace interdiff {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quatd = Eigen::Quaterniond;
using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

// Number of object pose features at the feature/file boundary: 6D rotation + translation.
inline constexpr int kObjectFeatureDim = 9;

inline int feature_width(int joint_count) { return joint_count * 3 + kObjectFeatureDim; }

// ---------------------------------------------------------------------------
// Rotation representations.
//
// Internal representation is always a unit quaternion with non-negative scalar
// part; 6D (first two rotation-matrix columns, column stacked) appears only at
// feature and file boundaries.

enum class RotRepr { quat, rot6d, matrix };

using Rot6d = Eigen::Matrix<double, 6, 1>;

// Flips sign so the scalar part is >= 0.
Quatd canonical_sign(const Quatd& q);

// Normalizes and sign-canonicalizes.
Quatd normalized_canonical(const Quatd& q);

Eigen::Matrix<double, 6, 1> quat_to_rot6d(const Quatd& q);
// Gram-Schmidt; throws DegenerateRotationError on near-zero or near-parallel columns.
Quatd rot6d_to_quat(const Eigen::Matrix<double, 6, 1>& r6);
Mat3 rot6d_to_matrix(const Eigen::Matrix<double, 6, 1>& r6);

// Generic conversion between representations. Value layout:
//   quat   = (w, x, y, z), 4 entries
//   rot6d  = 6 entries
//   matrix = row-major 3x3, 9 entries
VecX convert_rotation(const VecX& value, RotRepr source, RotRepr target);

// ---------------------------------------------------------------------------
// Pose and sequence model.

struct HumanPose {
    // J x 3 joint positions, meters, world frame.
    Eigen::Matrix<double, Eigen::Dynamic, 3> joints;

    int joint_count() const { return static_cast<int>(joints.rows()); }
};

// Throws ShapeError if J < 2 or any coordinate is non-finite.
void validate_human_pose(const HumanPose& pose);

// Rotation is carried as the 6D feature form (the network/file boundary
// representation); the unit quaternion is derived from those bits, so
// flatten/unflatten round trips preserve poses exactly. Construction from a
// quaternion canonicalizes (unit norm, scalar >= 0).
class ObjectPose {
public:
    Vec3 translation;

    ObjectPose();
    ObjectPose(const Quatd& rot, const Vec3& trans);

    // Preserves the given feature bits; throws DegenerateRotationError if the
    // 6D block has no valid Gram-Schmidt interpretation.
    static ObjectPose from_rot6d(const Rot6d& r6, const Vec3& trans);

    const Quatd& rotation() const { return rotation_; }
    const Rot6d& rot6d() const { return rot6d_; }

private:
    Rot6d rot6d_;
    Quatd rotation_;  // always rot6d_to_quat(rot6d_)
};

struct Se3Transform {
    Quatd rotation;
    Vec3 translation;

    Se3Transform() : rotation(Quatd::Identity()), translation(Vec3::Zero()) {}
    Se3Transform(const Quatd& rot, const Vec3& trans)
        : rotation(normalized_canonical(rot)), translation(trans) {}

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

Se3Transform compose(const Se3Transform& a, const Se3Transform& b);
Se3Transform invert(const Se3Transform& a);

struct HoiSequence {
    std::vector<HumanPose> human;
    std::vector<ObjectPose> object;
    double fps = 30.0;
    int past_frames = 0;    // H
    int future_frames = 0;  // F

    int frames() const { return static_cast<int>(human.size()); }
    int joint_count() const { return human.empty() ? 0 : human.front().joint_count(); }

    // Validates frame count = H + F, H >= 1, F >= 1, consistent J, finite poses.
    static HoiSequence make(std::vector<HumanPose> human, std::vector<ObjectPose> object,
                            double fps, int past, int future);
};

void validate_sequence(const HoiSequence& seq);

// Canonical-pose object point cloud with a designated keypoint subset.
struct ObjectShape {
    MatX points;                 // N x 3
    std::vector<int> keypoints;  // indices into points
    std::string name;

    int point_count() const { return static_cast<int>(points.rows()); }
    MatX keypoint_matrix() const;
};

void validate_shape(const ObjectShape& shape);

// Rigidly poses the cloud: R * p + t per point.
MatX posed_points(const ObjectShape& shape, const ObjectPose& pose);
MatX posed_keypoints(const ObjectShape& shape, const ObjectPose& pose);

// ---------------------------------------------------------------------------
// Network-facing layout: one row per frame,
//   [ j0.x j0.y j0.z  j1.x ... jJ-1.z | r6d(6) | t(3) ].

MatX flatten_state(const HoiSequence& seq);
HoiSequence unflatten_state(const MatX& features, double fps, int past, int future);

Eigen::Matrix<double, kObjectFeatureDim, 1> object_features(const ObjectPose& pose);
ObjectPose object_from_features(const Eigen::Matrix<double, kObjectFeatureDim, 1>& feat);

// Flattens only the object channels of a pose track.
MatX object_track_features(const std::vector<ObjectPose>& track);
std::vector<ObjectPose> object_track_from_features(const MatX& features);

// ---------------------------------------------------------------------------
// Deterministic RNG. Box-Muller on explicit mantissa bits so that sequences
// are reproducible across standard libraries.

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);
    double normal();                        // standard normal
    int uniform_int(int lo, int hi);        // inclusive range
    Vec3 normal_vec3();
    MatX normal_matrix(int rows, int cols);

    std::uint64_t raw() { return gen_(); }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace interdiff
