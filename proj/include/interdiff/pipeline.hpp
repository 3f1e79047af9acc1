#pragma once

#include <functional>
#include <memory>

#include "interdiff/corrector.hpp"
#include "interdiff/denoiser_net.hpp"
#include "interdiff/eval.hpp"

namespace interdiff {

// End-to-end glue over the modules: corpus -> training -> sampling/rollout.

struct Corpus {
    std::vector<StoredSequence> clips;
};

// Seeded mixed-scenario corpus; each clip draws its own primitive shape.
Corpus generate_corpus(const std::vector<ScenarioKind>& kinds, int count, int duration,
                       std::uint64_t seed, const BodyProxy& body, const DataConfig& data);

struct TrainedDenoiser {
    std::unique_ptr<TransformerDenoiser> model;
    NormStats stats;
};

using DiffusionProgress = std::function<void(int epoch, const DiffusionLosses&)>;
using PredictorProgress = std::function<void(int epoch, const PredictorLosses&)>;

// Trains on the leading H+F window of every clip; features are normalized by
// stats fit on the corpus.
TrainedDenoiser train_denoiser(const Corpus& corpus, const Config& cfg,
                               const DiffusionProgress& progress = {});

std::unique_ptr<StgnnModel> train_predictor(const Corpus& corpus, const Config& cfg,
                                            const BodyProxy& body,
                                            ReferenceSelection reference,
                                            const PredictorProgress& progress = {});

// ---------------------------------------------------------------------------

struct SamplerContext {
    const TransformerDenoiser* denoiser = nullptr;
    const NormStats* stats = nullptr;
    StgnnModel* predictor = nullptr;  // required only when correct = true
    const BodyProxy* body = nullptr;
    Config cfg;
    bool correct = false;
};

// One H+F window extending `window`; pure function of (inputs, seed, config).
HoiSequence sample_window(const SamplerContext& ctx, const PastWindow& window,
                          const ObjectShape& shape, std::uint64_t seed,
                          std::vector<CorrectionRecord>* report = nullptr);

// Autoregressive rollout driven by sample_window.
HoiSequence rollout(const SamplerContext& ctx, const HoiSequence& initial_past,
                    const ObjectShape& shape, int total_frames, std::uint64_t seed,
                    std::vector<CorrectionRecord>* report = nullptr);

// Denoiser + stats + config checkpoint round trip. The stored config pins the
// horizons and normalization the model was trained with.
void save_denoiser_checkpoint(const TrainedDenoiser& trained, const Config& cfg,
                              const std::string& path);

struct LoadedDenoiser {
    TrainedDenoiser trained;
    Config cfg;
};
LoadedDenoiser load_denoiser_checkpoint(const std::string& path);

}  // namespace interdiff
