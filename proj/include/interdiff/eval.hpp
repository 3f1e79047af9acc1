#pragma once

#include <functional>

#include "interdiff/data_io.hpp"
#include "interdiff/geometry_contact.hpp"

namespace interdiff {

// Units follow the reporting convention: position errors in mm, quaternion l1
// in 1e-3, penetration as a 1e-2 % scale alongside the raw fraction.
struct MetricsReport {
    double mpjpe_h = 0;
    double mpjpe_o = 0;
    double trans_err = 0;
    double rot_err = 0;
    double pene = 0;           // pene_fraction * 1e4
    double pene_fraction = 0;  // raw mean penetrating-vertex fraction
    bool has_pene = false;

    std::string to_json_string() const;
};

// Mean per-joint position error over frames, mm.
double mpjpe(const std::vector<HumanPose>& pred, const std::vector<HumanPose>& gt);

// Mean object keypoint error over frames, mm.
double mpjpe_o(const std::vector<ObjectPose>& pred, const std::vector<ObjectPose>& gt,
               const ObjectShape& shape);

// Mean object translation error over frames, mm.
double trans_err(const std::vector<ObjectPose>& pred, const std::vector<ObjectPose>& gt);

// Mean quaternion l1 distance over frames, double cover resolved, x1000.
double rot_err(const std::vector<ObjectPose>& pred, const std::vector<ObjectPose>& gt);
double rot_err_quats(const std::vector<Quatd>& pred, const std::vector<Quatd>& gt);

// Mean fraction of object cloud points with negative body SDF over the future
// frames. Throws NotApplicableError in skeletal mode.
double pene_fraction(const HoiSequence& seq, const ObjectShape& shape, const BodyProxy& body,
                     bool skeletal_mode = false);

// Metrics of pred vs gt over the first `frames` future frames of each.
MetricsReport evaluate_sequences(const HoiSequence& pred, const HoiSequence& gt,
                                 const ObjectShape& shape, const BodyProxy& body, int frames,
                                 bool mesh_mode = true);

// ---------------------------------------------------------------------------
// Best-of-Many: per-metric minima over independently seeded candidates. The
// candidate for (seed, i) is identical however large n is, so nested sets are
// monotone by construction.
using SeededSampler = std::function<HoiSequence(std::uint64_t seed)>;

MetricsReport best_of_many(const SeededSampler& sampler, const HoiSequence& gt,
                           const ObjectShape& shape, const BodyProxy& body, int n_samples,
                           std::uint64_t seed, bool mesh_mode = true);

// ---------------------------------------------------------------------------
// Autoregressive rollout: repeatedly condition on the last H generated frames
// until total_frames future frames exist.

struct PastWindow {
    std::vector<HumanPose> human;  // H frames
    std::vector<ObjectPose> object;
    double fps = 30.0;
};

// Returns an H+F sequence extending the window (same past, fresh future).
using WindowSampler = std::function<HoiSequence(const PastWindow& window,
                                                std::uint64_t round_seed)>;

struct RolloutError : std::runtime_error {
    RolloutError(const std::string& msg, HoiSequence partial_result, int frames_done)
        : std::runtime_error(msg), partial(std::move(partial_result)),
          frames_completed(frames_done) {}
    HoiSequence partial;
    int frames_completed = 0;
};

HoiSequence autoregressive_rollout(const WindowSampler& sampler, const HoiSequence& initial_past,
                                   int total_frames, int past_frames, int future_frames,
                                   std::uint64_t seed);

}  // namespace interdiff
