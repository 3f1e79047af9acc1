#pragma once

#include <string>
#include <vector>

#include "interdiff/body_proxy.hpp"
#include "interdiff/config.hpp"
#include "interdiff/core_types.hpp"

namespace interdiff {

// ---------------------------------------------------------------------------
// Parametric object shapes. The first `keypoints` rows of the cloud are the
// designated keypoints; keypoint 0 is the grip point scenarios attach to.

ObjectShape make_box_shape(const Vec3& half_extents, int points, int keypoints,
                           std::uint64_t seed);
ObjectShape make_cylinder_shape(double radius, double height, int points, int keypoints,
                                std::uint64_t seed);
ObjectShape make_sphere_shell_shape(double radius, int points, int keypoints,
                                    std::uint64_t seed);

// Seeded pick among the primitives with desk-scale dimensions.
ObjectShape make_random_shape(std::uint64_t seed, int points = 256, int keypoints = 12);

// ---------------------------------------------------------------------------
// Synthetic scenarios.

enum class ScenarioKind { carry, swing, release, push, no_contact };

ScenarioKind scenario_kind_from_string(const std::string& name);
std::string to_string(ScenarioKind kind);

struct Scenario {
    ScenarioKind kind = ScenarioKind::carry;
    int duration = 35;  // frames, >= past + future
    std::uint64_t seed = 0;
    int past = 10;
    int future = 25;
    double fps = 30.0;
    int attach_marker = -1;  // -1: seeded choice among the palm markers
};

// Smooth random joint-angle splines through FK; the object obeys the
// scenario's contact pattern exactly (see the per-kind guarantees in tests).
// Fully determined by scenario.seed.
HoiSequence generate_synthetic(const Scenario& scenario, const BodyProxy& body,
                               const ObjectShape& shape);

// ---------------------------------------------------------------------------
// Serialization. JSON is the canonical interchange format; a packed binary
// twin with the same schema handles large corpora. Dispatch is by extension
// (.json / .bin).

inline constexpr const char* kSequenceFormatVersion = "interdiff-hoi/1";

struct StoredSequence {
    HoiSequence seq;
    ObjectShape shape;
};

void save_sequence(const StoredSequence& stored, const std::string& path);
StoredSequence load_sequence(const std::string& path);

void save_sequence_json(const StoredSequence& stored, const std::string& path);
StoredSequence load_sequence_json(const std::string& path);
void save_sequence_binary(const StoredSequence& stored, const std::string& path);
StoredSequence load_sequence_binary(const std::string& path);

// Body definitions are loadable from JSON config.
BodyProxy load_body_json(const std::string& path);
void save_body_json(const BodyProxy& body, const std::string& path);

// Adapter seam for real mocap corpora (BEHAVE / GRAB style recordings).
// Nothing in this repository implements it; external loaders plug in here and
// everything downstream (training, sampling, evaluation) consumes the same
// StoredSequence clips.
class DatasetAdapter {
public:
    virtual ~DatasetAdapter() = default;
    virtual int clip_count() const = 0;
    virtual StoredSequence load_clip(int index) const = 0;
    virtual BodyProxy body() const = 0;
};

// ---------------------------------------------------------------------------
// Per-feature normalization statistics.

struct NormStats {
    VecX mean;
    VecX stddev;                   // effective scale; 1 for degenerate features
    std::vector<bool> degenerate;  // flagged zero-variance features

    MatX normalize(const MatX& features) const;
    MatX denormalize(const MatX& features) const;

    std::string to_json_string() const;
    static NormStats from_json_string(const std::string& text);
};

NormStats fit_norm_stats(const std::vector<MatX>& corpus_features);

}  // namespace interdiff
