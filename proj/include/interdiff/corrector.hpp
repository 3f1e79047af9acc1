#pragma once

#include "interdiff/config.hpp"
#include "interdiff/data_io.hpp"
#include "interdiff/diffusion.hpp"
#include "interdiff/predictor.hpp"

namespace interdiff {

enum class CorrectionTrigger { penetration, no_contact, schedule_only, none };

std::string to_string(CorrectionTrigger trigger);

struct ShouldCorrectResult {
    bool fire = false;
    CorrectionTrigger trigger = CorrectionTrigger::none;
};

// Gate of the correction scheduler. A step is eligible when it falls in the
// late window (t <= late_fraction * T) on the configured stride; mesh mode
// additionally requires a geometric trigger (penetration norm above eps_1 or
// every contact column above eps_2, both per-frame thresholds scaled by
// sqrt(F)). Skeletal mode fires on the window alone.
ShouldCorrectResult should_correct(const PenetrationState& penetration,
                                   const ContactState& contact, int t, int T,
                                   const CorrectorConfig& cfg);

// Algorithm blend x-tilde * t/T + x-hat * (1 - t/T) on the object channels;
// human channels come from x-tilde. Mixed rotation features are
// re-orthonormalized; rows equal to either input pass through bit-exact, so
// blend(x, x, t) == x.
HoiSequence blend(const HoiSequence& denoised, const HoiSequence& corrected, int t, int T);

// Feature-level counterpart used inside the sampling loop.
MatX blend_features(const MatX& denoised, const MatX& corrected, int t, int T, int joints);

// ---------------------------------------------------------------------------
// The correction hook wired into sample_with_correction: senses contact and
// penetration on the decoded clean estimate, consults the scheduler, runs the
// interaction predictor, and blends the result back into the feature tensor.
class InteractionCorrector final : public CorrectionHook {
public:
    struct Setup {
        const BodyProxy* body = nullptr;
        const ObjectShape* shape = nullptr;
        PredictorModel* model = nullptr;
        CorrectorConfig corrector;
        InteractionPredictOptions predict;
        // Clean past context (H frames) the sampled future extends.
        std::vector<HumanPose> past_human;
        std::vector<ObjectPose> past_object;
        double fps = 30.0;
        int total_steps = 100;  // T
        // Feature normalization of the sampler state; identity when null.
        const NormStats* stats = nullptr;
    };

    explicit InteractionCorrector(Setup setup);

    std::optional<MatX> apply(const MatX& clean_features, int t,
                              CorrectionRecord& record) override;

private:
    Setup s_;
    ContactMode contact_mode_;
};

// One JSON object per scheduler decision, in step order.
void write_correction_report(const std::string& path,
                             const std::vector<CorrectionRecord>& report);

}  // namespace interdiff
