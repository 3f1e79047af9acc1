#pragma once

#include <optional>
#include <vector>

#include "interdiff/geometry_contact.hpp"

namespace interdiff {

// How object orientation is expressed under a contact-point reference.
// translation_only keeps world orientation (the ground node stays a strict
// special case); bone_frame re-expresses it in the anchor bone's frame.
enum class OrientationMode { translation_only, bone_frame };

OrientationMode orientation_mode_from_string(const std::string& name);
std::string to_string(OrientationMode mode);

// Object motion re-expressed relative to a moving anchor point.
std::vector<ObjectPose> to_reference(const std::vector<ObjectPose>& object_motion,
                                     const std::vector<Vec3>& anchor_track,
                                     OrientationMode mode,
                                     const std::vector<Quatd>* bone_frames = nullptr);

// Exact inverse of to_reference.
std::vector<ObjectPose> from_reference(const std::vector<ObjectPose>& relative_motion,
                                       const std::vector<Vec3>& anchor_track,
                                       OrientationMode mode,
                                       const std::vector<Quatd>* bone_frames = nullptr);

// Object motion under the ground system and every contact-point system,
// node 0 = ground. Features per node: frames x 9 (6D rotation + translation).
struct StGraph {
    std::vector<MatX> nodes;

    int node_count() const { return static_cast<int>(nodes.size()); }
    int frames() const { return nodes.empty() ? 0 : static_cast<int>(nodes.front().rows()); }
};

// Per-contact-point world position tracks over frames [begin, end).
std::vector<std::vector<Vec3>> contact_point_tracks(const HoiSequence& seq, const BodyProxy& body,
                                                    ContactMode mode, int begin, int end);

// Per-contact-point bone-frame rotation tracks, for OrientationMode::bone_frame.
std::vector<std::vector<Quatd>> contact_frame_tracks(const HoiSequence& seq, const BodyProxy& body,
                                                     ContactMode mode, int begin, int end);

// Builds the graph over the past H frames of seq.
StGraph build_st_graph(const HoiSequence& seq, const BodyProxy& body, ContactMode contact_mode,
                       OrientationMode orientation_mode);

}  // namespace interdiff
