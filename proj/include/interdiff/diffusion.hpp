#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "interdiff/autodiff.hpp"
#include "interdiff/config.hpp"
#include "interdiff/core_types.hpp"

namespace interdiff {

// ---------------------------------------------------------------------------
// Noise schedule. Indexed 0..T with beta_0 = 0, so alpha_bar(0) = 1 and the
// final reverse step returns the clean estimate exactly.

enum class ScheduleKind { linear, cosine };

ScheduleKind schedule_kind_from_string(const std::string& name);

struct NoiseSchedule {
    VecX betas;       // T+1 entries, betas[0] = 0
    VecX alphas;      // 1 - beta
    VecX alpha_bars;  // running product
    int T = 0;

    double alpha_bar(int t) const { return alpha_bars[t]; }
};

// beta_min/beta_max < 0 selects the DDPM-standard range [1e-4, 0.02] scaled by
// 1000/T (linear only), which keeps alpha_bar(T) < 0.01 at any step count.
NoiseSchedule make_schedule(int T, ScheduleKind kind, double beta_min = -1.0,
                            double beta_max = -1.0);

// ---------------------------------------------------------------------------
// Denoiser interfaces. Features are (frames x width) matrices; the condition
// carries the past-frame features plus the canonical-pose shape cloud.

struct Condition {
    MatX past_features;  // H x width
    MatX shape_points;   // N x 3
};

class Denoiser {
public:
    virtual ~Denoiser() = default;
    // Clean-signal estimate for the noised future features at step t.
    virtual MatX denoise(const MatX& x_t, int t, const Condition& cond) const = 0;
};

// Autodiff-capable counterpart used by the training step.
class TrainableDenoiser {
public:
    virtual ~TrainableDenoiser() = default;
    virtual ad::Var denoise(ad::Tape& tape, ad::Var x_t, int t, const Condition& cond) = 0;
    virtual std::vector<ad::Param*> params() = 0;
};

// ---------------------------------------------------------------------------
// Forward and reverse processes.

// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) noise.
MatX q_sample(const MatX& x0, int t, const NoiseSchedule& schedule, const MatX& noise);

struct ReverseStepResult {
    MatX clean;  // x-tilde
    MatX next;   // x_{t-1}
};

ReverseStepResult reverse_step(const MatX& x_t, int t, const Denoiser& denoiser,
                               const Condition& cond, const NoiseSchedule& schedule,
                               const MatX& noise);

// ---------------------------------------------------------------------------
// Sampling loop with correction hooks.

struct CorrectionRecord {
    int t = 0;
    bool fired = false;
    std::string trigger = "none";  // penetration | no_contact | schedule_only | none
    int s = -1;
    // ||P|| and min_j ||C[j]||; NaN when the step was outside the correction
    // window and the geometry was never evaluated.
    double p_norm = std::numeric_limits<double>::quiet_NaN();
    double min_c = std::numeric_limits<double>::quiet_NaN();
};

// Feature-level correction hook. Returns the corrected clean features, or
// nullopt to leave the estimate untouched (the sampler state then stays
// bit-identical to the plain loop).
class CorrectionHook {
public:
    virtual ~CorrectionHook() = default;
    virtual std::optional<MatX> apply(const MatX& clean_features, int t,
                                      CorrectionRecord& record) = 0;
};

struct SampleResult {
    MatX features;  // F x width clean sample
    std::vector<CorrectionRecord> report;
};

// Algorithm: for t = T..1 run the reverse step, letting the hook rewrite the
// clean estimate before re-noising; a final hook call at t = 0 sees the
// finished sample. With hook == nullptr this is plain DDPM sampling.
SampleResult sample_with_correction(const Condition& cond, const Denoiser& denoiser,
                                    const NoiseSchedule& schedule, int future_frames,
                                    int width, CorrectionHook* hook, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Training.

struct DiffusionLosses {
    double l_h = 0, l_o = 0, l_vh = 0, l_vo = 0, total = 0;
};

struct TrainingExample {
    MatX features;      // (H+F) x width, in the training (normalized) domain
    MatX shape_points;  // N x 3
};

// One optimization step's losses over a batch: disentangled human/object
// reconstruction plus velocity regularizers over the future window (the
// boundary difference uses the given past frame H). Gradients are accumulated
// into the denoiser's params; the caller applies the optimizer.
DiffusionLosses train_diffusion_step(const std::vector<TrainingExample>& batch,
                                     TrainableDenoiser& denoiser, const NoiseSchedule& schedule,
                                     const DiffusionLossWeights& weights, int past_frames,
                                     int joints, Rng& rng);

}  // namespace interdiff
