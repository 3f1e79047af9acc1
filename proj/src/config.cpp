#include "interdiff/config.hpp"

#include <fstream>

#include <json.hpp>

#include "interdiff/errors.hpp"

namespace interdiff {

using nlohmann::json;

namespace {

// Reads cfg[key] into out if present; leaves the default otherwise.
template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

json diffusion_json(const DiffusionConfig& c) {
    return {{"T", c.T}, {"schedule", c.schedule}, {"beta_min", c.beta_min},
            {"beta_max", c.beta_max}};
}

json loss_json(const DiffusionLossWeights& c) {
    return {{"lambda_h", c.lambda_h}, {"lambda_o", c.lambda_o},
            {"lambda_vh", c.lambda_vh}, {"lambda_vo", c.lambda_vo}};
}

json denoiser_json(const DenoiserConfig& c) {
    return {{"latent_dim", c.latent_dim}, {"encoder_layers", c.encoder_layers},
            {"decoder_layers", c.decoder_layers}, {"heads", c.heads},
            {"ffn_dim", c.ffn_dim}, {"dropout", c.dropout},
            {"max_frames", c.max_frames}, {"zero_init_head", c.zero_init_head}};
}

json predictor_json(const PredictorConfig& c) {
    return {{"dct_bases", c.dct_bases}, {"blocks", c.blocks}, {"width", c.width},
            {"lambda_o", c.lambda_o}, {"lambda_vo", c.lambda_vo},
            {"lambda_c", c.lambda_c}, {"lambda_p", c.lambda_p},
            {"loss_points", c.loss_points}};
}

json corrector_json(const CorrectorConfig& c) {
    return {{"eps_penetration", c.eps_penetration}, {"eps_contact", c.eps_contact},
            {"late_fraction", c.late_fraction}, {"stride", c.stride}, {"mode", c.mode}};
}

json data_json(const DataConfig& c) {
    return {{"joints", c.joints}, {"past", c.past}, {"future", c.future}, {"fps", c.fps},
            {"shape_points", c.shape_points}, {"shape_keypoints", c.shape_keypoints}};
}

json train_json(const TrainConfig& c) {
    return {{"epochs", c.epochs}, {"batch", c.batch}, {"lr", c.lr}, {"seed", c.seed}};
}

}  // namespace

void Config::apply_preset(const std::string& name) {
    if (name == "desk") {
        *this = Config{};
    } else if (name == "paper") {
        denoiser.latent_dim = 256;
        denoiser.encoder_layers = 8;
        denoiser.decoder_layers = 8;
        denoiser.heads = 8;
        denoiser.ffn_dim = 512;
    } else if (name == "skeletal") {
        data.past = 10;
        data.future = 10;
        corrector.mode = "skeletal";
        predictor.lambda_c = 0.0;
        predictor.lambda_p = 0.0;
    } else {
        throw ConfigError("unknown preset: " + name);
    }
}

std::string Config::to_json_string() const {
    json j;
    j["diffusion"] = diffusion_json(diffusion);
    j["loss"] = loss_json(loss);
    j["denoiser"] = denoiser_json(denoiser);
    j["predictor"] = predictor_json(predictor);
    j["corrector"] = corrector_json(corrector);
    j["frames"] = {{"orientation_mode", frames.orientation_mode}};
    j["data"] = data_json(data);
    j["train"] = train_json(train);
    return j.dump(2);
}

Config Config::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("config parse error: ") + e.what());
    }
    Config cfg;
    try {
        if (j.contains("preset")) cfg.apply_preset(j.at("preset").get<std::string>());
        if (j.contains("diffusion")) {
            const json& d = j["diffusion"];
            read(d, "T", cfg.diffusion.T);
            read(d, "schedule", cfg.diffusion.schedule);
            read(d, "beta_min", cfg.diffusion.beta_min);
            read(d, "beta_max", cfg.diffusion.beta_max);
        }
        if (j.contains("loss")) {
            const json& d = j["loss"];
            read(d, "lambda_h", cfg.loss.lambda_h);
            read(d, "lambda_o", cfg.loss.lambda_o);
            read(d, "lambda_vh", cfg.loss.lambda_vh);
            read(d, "lambda_vo", cfg.loss.lambda_vo);
        }
        if (j.contains("denoiser")) {
            const json& d = j["denoiser"];
            read(d, "latent_dim", cfg.denoiser.latent_dim);
            read(d, "encoder_layers", cfg.denoiser.encoder_layers);
            read(d, "decoder_layers", cfg.denoiser.decoder_layers);
            read(d, "heads", cfg.denoiser.heads);
            read(d, "ffn_dim", cfg.denoiser.ffn_dim);
            read(d, "dropout", cfg.denoiser.dropout);
            read(d, "max_frames", cfg.denoiser.max_frames);
            read(d, "zero_init_head", cfg.denoiser.zero_init_head);
        }
        if (j.contains("predictor")) {
            const json& d = j["predictor"];
            read(d, "dct_bases", cfg.predictor.dct_bases);
            read(d, "blocks", cfg.predictor.blocks);
            read(d, "width", cfg.predictor.width);
            read(d, "lambda_o", cfg.predictor.lambda_o);
            read(d, "lambda_vo", cfg.predictor.lambda_vo);
            read(d, "lambda_c", cfg.predictor.lambda_c);
            read(d, "lambda_p", cfg.predictor.lambda_p);
            read(d, "loss_points", cfg.predictor.loss_points);
        }
        if (j.contains("corrector")) {
            const json& d = j["corrector"];
            read(d, "eps_penetration", cfg.corrector.eps_penetration);
            read(d, "eps_contact", cfg.corrector.eps_contact);
            read(d, "late_fraction", cfg.corrector.late_fraction);
            read(d, "stride", cfg.corrector.stride);
            read(d, "mode", cfg.corrector.mode);
        }
        if (j.contains("frames")) {
            read(j["frames"], "orientation_mode", cfg.frames.orientation_mode);
        }
        if (j.contains("data")) {
            const json& d = j["data"];
            read(d, "joints", cfg.data.joints);
            read(d, "past", cfg.data.past);
            read(d, "future", cfg.data.future);
            read(d, "fps", cfg.data.fps);
            read(d, "shape_points", cfg.data.shape_points);
            read(d, "shape_keypoints", cfg.data.shape_keypoints);
        }
        if (j.contains("train")) {
            const json& d = j["train"];
            read(d, "epochs", cfg.train.epochs);
            read(d, "batch", cfg.train.batch);
            read(d, "lr", cfg.train.lr);
            read(d, "seed", cfg.train.seed);
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("config field error: ") + e.what());
    }
    validate_config(cfg);
    return cfg;
}

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_string(text);
}

void Config::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write config file: " + path);
    out << to_json_string() << "\n";
}

void validate_config(const Config& cfg) {
    if (cfg.diffusion.T < 2) throw ConfigError("diffusion.T must be >= 2");
    if (cfg.diffusion.schedule != "linear" && cfg.diffusion.schedule != "cosine") {
        throw ConfigError("diffusion.schedule must be linear or cosine");
    }
    if (cfg.denoiser.latent_dim % cfg.denoiser.heads != 0) {
        throw ConfigError("denoiser.latent_dim must be divisible by heads");
    }
    if (cfg.corrector.eps_penetration <= 0 || cfg.corrector.eps_contact <= 0) {
        throw ConfigError("corrector thresholds must be positive");
    }
    if (cfg.corrector.late_fraction <= 0 || cfg.corrector.late_fraction > 1) {
        throw ConfigError("corrector.late_fraction must lie in (0, 1]");
    }
    if (cfg.corrector.stride < 1) throw ConfigError("corrector.stride must be >= 1");
    if (cfg.corrector.mode != "mesh" && cfg.corrector.mode != "skeletal") {
        throw ConfigError("corrector.mode must be mesh or skeletal");
    }
    if (cfg.data.past < 1 || cfg.data.future < 1) {
        throw ConfigError("data.past and data.future must be >= 1");
    }
    if (cfg.predictor.dct_bases < 1) throw ConfigError("predictor.dct_bases must be >= 1");
    if (cfg.predictor.width < 1 || cfg.predictor.blocks < 0) {
        throw ConfigError("predictor.width must be >= 1 and blocks >= 0");
    }
}

}  // namespace interdiff
