#include "interdiff/geometry_contact.hpp"

#include <cmath>
#include <limits>

namespace interdiff {

double ContactState::min_column_norm() const {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < contact_points(); ++j) best = std::min(best, column_norm(j));
    return best;
}

MatX contact_points(const HumanPose& pose, const BodyProxy& body, ContactMode mode) {
    if (mode == ContactMode::marker) {
        return marker_positions(pose, body.skeleton, body.markers);
    }
    MatX out = pose.joints;
    return out;
}

MatX contact_cloud(const ObjectShape& shape, const ObjectPose& pose, ContactMode mode) {
    if (mode == ContactMode::joint && !shape.keypoints.empty()) {
        return posed_keypoints(shape, pose);
    }
    return posed_points(shape, pose);
}

ContactState contact_state(const HoiSequence& seq, const ObjectShape& shape,
                           const BodyProxy& body, ContactMode mode) {
    validate_shape(shape);
    if (shape.point_count() == 0) throw ShapeError("contact_state: empty object point cloud");
    const int F = seq.future_frames;
    const int H = seq.past_frames;
    const int n_points = mode == ContactMode::marker
                             ? static_cast<int>(body.markers.size())
                             : seq.joint_count();
    ContactState state;
    state.distances.resize(F, n_points);
    for (int i = 0; i < F; ++i) {
        const int frame = H + i;
        const MatX pts = contact_points(seq.human[frame], body, mode);
        const MatX cloud = contact_cloud(shape, seq.object[frame], mode);
        for (int j = 0; j < n_points; ++j) {
            double best = std::numeric_limits<double>::infinity();
            const Vec3 p = pts.row(j);
            for (int k = 0; k < cloud.rows(); ++k) {
                best = std::min(best, (p - Vec3(cloud.row(k))).norm());
            }
            state.distances(i, j) = best;
        }
    }
    return state;
}

PenetrationState penetration_state(const HoiSequence& seq, const ObjectShape& shape,
                                   const BodyProxy& body) {
    validate_shape(shape);
    const int F = seq.future_frames;
    const int H = seq.past_frames;
    PenetrationState state;
    state.depths.resize(F);
    for (int i = 0; i < F; ++i) {
        const int frame = H + i;
        const MatX cloud = posed_points(shape, seq.object[frame]);
        const VecX sdf = body_sdf_batch(seq.human[frame], body.skeleton, cloud);
        double total = 0.0;
        for (int k = 0; k < sdf.size(); ++k) total += -std::min(sdf[k], 0.0);
        state.depths[i] = total;
    }
    return state;
}

ReferenceChoice select_reference(const ContactState& contact, double eps_contact) {
    const double threshold = eps_contact * std::sqrt(static_cast<double>(contact.frames()));
    int best = -1;
    double best_norm = std::numeric_limits<double>::infinity();
    for (int j = 0; j < contact.contact_points(); ++j) {
        const double n = contact.column_norm(j);
        if (n < best_norm) {
            best_norm = n;
            best = j;
        }
    }
    ReferenceChoice choice;
    choice.s = (best_norm >= threshold) ? -1 : best;
    return choice;
}

}  // namespace interdiff
