#pragma once

#include <functional>
#include <memory>

#include "interdiff/checkpoint.hpp"
#include "interdiff/config.hpp"
#include "interdiff/diffusion.hpp"

namespace interdiff {

// Conditional denoiser G: a transformer encoder over the past HOI tokens
// (with the PointNet-style shape embedding added to every token) and a
// transformer decoder over the noised future tokens with cross-attention to
// the encoder memory. Predicts the clean signal directly.
class TransformerDenoiser final : public Denoiser, public TrainableDenoiser {
public:
    TransformerDenoiser(DenoiserConfig cfg, int feature_width, std::uint64_t seed);

    // Inference path (deterministic; dropout off).
    MatX denoise(const MatX& x_t, int t, const Condition& cond) const override;

    // Training path; builds the graph on the caller's tape.
    ad::Var denoise(ad::Tape& tape, ad::Var x_t, int t, const Condition& cond) override;

    std::vector<ad::Param*> params() override { return store_.all(); }
    int param_count() const { return store_.total_size(); }

    // Condition memory (H x latent), value-only.
    MatX encode_condition(const Condition& cond) const;

    const DenoiserConfig& config() const { return cfg_; }
    int feature_width() const { return width_; }

    // extra_json rides along in the checkpoint header (e.g. normalization stats).
    void save(const std::string& path, const std::string& extra_json = "{}") const;
    static std::unique_ptr<TransformerDenoiser> load(const std::string& path,
                                                     std::string* extra_json = nullptr);

private:
    using UseFn = std::function<ad::Var(const ad::Param&)>;

    ad::Var forward(ad::Tape& tape, ad::Var x_t, int t, const Condition& cond,
                    const UseFn& use) const;
    ad::Var build_memory(ad::Tape& tape, const Condition& cond, const UseFn& use) const;
    ad::Var attention(ad::Tape& tape, ad::Var q_in, ad::Var kv_in, const std::string& prefix,
                      const UseFn& use) const;
    ad::Var ffn(ad::Tape& tape, ad::Var x, const std::string& prefix, const UseFn& use) const;

    DenoiserConfig cfg_;
    int width_ = 0;
    MatX positional_;  // max_frames x latent, sinusoidal
    ParamStore store_;
    // Dropout applies only on training passes; inference stays deterministic.
    mutable bool training_pass_ = false;
    mutable Rng dropout_rng_{0x9e3779b97f4a7c15ull};
};

// Sinusoidal embedding row used for positions and the timestep base.
MatX sinusoidal_embedding(int index, int dim);

}  // namespace interdiff
