#pragma once

#include <memory>

#include "interdiff/checkpoint.hpp"
#include "interdiff/config.hpp"
#include "interdiff/reference_frames.hpp"

namespace interdiff {

// ---------------------------------------------------------------------------
// Orthonormal DCT-II basis over the padded horizon.

struct DctBasis {
    MatX C;  // bases x frames, C * C^T = I

    int bases() const { return static_cast<int>(C.rows()); }
    int frames() const { return static_cast<int>(C.cols()); }

    static DctBasis make(int bases, int frames);
};

// track: frames x D -> bases x D (and back). With bases == frames the round
// trip is exact; truncated bases give the orthogonal projection.
MatX dct_forward(const MatX& track, const DctBasis& basis);
MatX dct_inverse(const MatX& coeffs, const DctBasis& basis);

// ---------------------------------------------------------------------------
// Predictor models. The training step is generic over this interface so toy
// models can drive it (gradient checks) alongside the real STGNN.

class PredictorModel {
public:
    virtual ~PredictorModel() = default;

    // Consumes the past-motion graph and returns one predicted track per node
    // over all total_frames = H+F frames (recovered past + future), each an
    // (H+F) x 9 Var. `train` switches parameters between leaves and constants.
    virtual std::vector<ad::Var> predict_tracks(ad::Tape& tape, const StGraph& graph,
                                                int total_frames, bool train) = 0;
    virtual std::vector<ad::Param*> params() = 0;
};

// Residual graph-convolution network over reference-system nodes, operating
// on truncated DCT coefficients. The network output is a frequency-domain
// delta added to the padded input track, so a zero-initialized final layer
// predicts exactly the replicated last frame.
class StgnnModel final : public PredictorModel {
public:
    StgnnModel(PredictorConfig cfg, int nodes, std::uint64_t seed);

    std::vector<ad::Var> predict_tracks(ad::Tape& tape, const StGraph& graph, int total_frames,
                                        bool train) override;
    std::vector<ad::Param*> params() override { return store_.all(); }
    int param_count() const { return store_.total_size(); }
    int nodes() const { return nodes_; }
    const PredictorConfig& config() const { return cfg_; }

    void save(const std::string& path, const std::string& extra_json = "{}") const;
    static std::unique_ptr<StgnnModel> load(const std::string& path,
                                            std::string* extra_json = nullptr);

private:
    PredictorConfig cfg_;
    int nodes_ = 0;
    ParamStore store_;
};

// Future-frame slice of the model's prediction, node for node.
StGraph predict_relative(const StGraph& past_graph, PredictorModel& model, int future_frames);

// ---------------------------------------------------------------------------
// Full interaction predictor: graph from the denoised HOI, model forecast for
// the chosen reference node, re-anchored to world coordinates. Human channels
// pass through untouched.
struct InteractionPredictOptions {
    ContactMode contact_mode = ContactMode::marker;
    OrientationMode orientation_mode = OrientationMode::translation_only;
};

HoiSequence interaction_predict(const HoiSequence& denoised, const ReferenceChoice& s,
                                PredictorModel& model, const BodyProxy& body,
                                const InteractionPredictOptions& options = {});

// ---------------------------------------------------------------------------
// Training on clean sequences.

struct PredictorLosses {
    double l_o = 0, l_vo = 0, l_c = 0, l_p = 0, total = 0;
};

struct PredictorExample {
    HoiSequence seq;
    ObjectShape shape;
};

// How the supervised reference node is picked: by contact as in the paper's
// pipeline, or pinned to the ground node (world-frame ablation).
enum class ReferenceSelection { by_contact, ground };

struct PredictorTrainOptions {
    ContactMode contact_mode = ContactMode::marker;
    OrientationMode orientation_mode = OrientationMode::translation_only;
    ReferenceSelection reference = ReferenceSelection::by_contact;
    double eps_contact = 0.05;  // contact threshold for reference choice and L_c pairs
    bool skeletal = false;      // drops L_c / L_p
};

PredictorLosses train_predictor_step(const std::vector<PredictorExample>& batch,
                                     PredictorModel& model, const PredictorConfig& cfg,
                                     const BodyProxy& body,
                                     const PredictorTrainOptions& options);

}  // namespace interdiff
