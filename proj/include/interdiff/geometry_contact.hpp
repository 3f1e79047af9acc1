#pragma once

#include "interdiff/body_proxy.hpp"
#include "interdiff/core_types.hpp"

namespace interdiff {

// Which points on the body act as contact candidates, and which object points
// they are measured against: markers vs the full cloud (mesh-style), or
// joints vs the keypoint subset (skeletal-style).
enum class ContactMode { marker, joint };

struct ContactState {
    // F x contact-point-count matrix of min distances, meters.
    MatX distances;

    int frames() const { return static_cast<int>(distances.rows()); }
    int contact_points() const { return static_cast<int>(distances.cols()); }
    // l2 over the future frames of one contact point's column.
    double column_norm(int j) const { return distances.col(j).norm(); }
    double min_column_norm() const;
};

struct PenetrationState {
    VecX depths;  // per future frame, meters (summed penetration depth)

    int frames() const { return static_cast<int>(depths.size()); }
    double norm() const { return depths.norm(); }
};

// -1 selects the ground system, otherwise the index of the chosen contact point.
struct ReferenceChoice {
    int s = -1;

    bool is_ground() const { return s < 0; }
};

// Body-side contact point positions for one frame.
MatX contact_points(const HumanPose& pose, const BodyProxy& body, ContactMode mode);

// Object-side cloud used for contact distances in the given mode.
MatX contact_cloud(const ObjectShape& shape, const ObjectPose& pose, ContactMode mode);

// C^i[j] = min_k || p_j^i - v_k^i ||_2 over the F future frames.
ContactState contact_state(const HoiSequence& seq, const ObjectShape& shape,
                           const BodyProxy& body, ContactMode mode);

// P^i = sum_k -min(sdf(v_k^i), 0) over the full object cloud, future frames.
PenetrationState penetration_state(const HoiSequence& seq, const ObjectShape& shape,
                                   const BodyProxy& body);

// Ground if every column norm is >= eps_contact * sqrt(F); otherwise the
// argmin column, ties to the lowest index. eps_contact is per-frame, meters.
ReferenceChoice select_reference(const ContactState& contact, double eps_contact);

}  // namespace interdiff
