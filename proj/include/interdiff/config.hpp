#pragma once

#include <string>

namespace interdiff {

struct DiffusionConfig {
    int T = 100;
    std::string schedule = "linear";
    // Negative means auto-scale the DDPM-standard range [1e-4, 0.02] by 1000/T
    // so the terminal alpha-bar stays small for any T.
    double beta_min = -1.0;
    double beta_max = -1.0;
};

struct DiffusionLossWeights {
    double lambda_h = 1.0;
    double lambda_o = 0.1;
    double lambda_vh = 0.2;
    double lambda_vo = 0.02;
};

struct DenoiserConfig {
    int latent_dim = 64;
    int encoder_layers = 2;
    int decoder_layers = 2;
    int heads = 4;
    int ffn_dim = 128;
    double dropout = 0.0;
    int max_frames = 256;
    bool zero_init_head = true;
};

struct PredictorConfig {
    int dct_bases = 10;
    int blocks = 4;
    int width = 64;
    double lambda_o = 1.0;
    double lambda_vo = 0.1;
    double lambda_c = 1.0;
    double lambda_p = 0.1;
    // Object points subsampled for the contact/penetration losses.
    int loss_points = 64;
};

struct CorrectorConfig {
    double eps_penetration = 0.01;  // per-frame, meters; compared against ||P|| / sqrt(F)
    double eps_contact = 0.05;      // per-frame, meters; compared against ||C[j]|| / sqrt(F)
    double late_fraction = 0.1;     // correction window as a fraction of T
    int stride = 2;                 // apply every k eligible steps
    std::string mode = "mesh";      // mesh | skeletal
};

struct FramesConfig {
    std::string orientation_mode = "translation_only";
};

struct DataConfig {
    int joints = 21;
    int past = 10;    // H
    int future = 25;  // F
    double fps = 30.0;
    int shape_points = 256;
    int shape_keypoints = 12;
};

struct TrainConfig {
    int epochs = 120;
    int batch = 16;
    double lr = 2e-3;
    int seed = 1;
};

struct Config {
    DiffusionConfig diffusion;
    DiffusionLossWeights loss;
    DenoiserConfig denoiser;
    PredictorConfig predictor;
    CorrectorConfig corrector;
    FramesConfig frames;
    DataConfig data;
    TrainConfig train;

    // "paper": 8+8 transformer layers, latent 256. "skeletal": joint-mode
    // horizons H=10, F=10.
    void apply_preset(const std::string& name);

    static Config load(const std::string& path);
    void save(const std::string& path) const;
    std::string to_json_string() const;
    static Config from_json_string(const std::string& text);
};

void validate_config(const Config& cfg);

}  // namespace interdiff
