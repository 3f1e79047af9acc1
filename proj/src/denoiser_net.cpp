#include "interdiff/denoiser_net.hpp"

#include <cmath>

#include <json.hpp>

namespace interdiff {

using nlohmann::json;

MatX sinusoidal_embedding(int index, int dim) {
    MatX row(1, dim);
    for (int i = 0; i < dim; i += 2) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / dim);
        row(0, i) = std::sin(index * freq);
        if (i + 1 < dim) row(0, i + 1) = std::cos(index * freq);
    }
    return row;
}

TransformerDenoiser::TransformerDenoiser(DenoiserConfig cfg, int feature_width,
                                         std::uint64_t seed)
    : cfg_(cfg), width_(feature_width) {
    if (cfg_.latent_dim % cfg_.heads != 0) {
        throw ConfigError("latent_dim must be divisible by heads");
    }
    Rng rng(seed);
    const int d = cfg_.latent_dim;

    positional_.resize(cfg_.max_frames, d);
    for (int i = 0; i < cfg_.max_frames; ++i) positional_.row(i) = sinusoidal_embedding(i, d);

    auto dense = [&](const std::string& name, int rows, int cols) {
        store_.add(name + ".w", ad::glorot_init(rows, cols, rng));
        store_.add(name + ".b", MatX::Zero(1, cols));
    };
    auto attention_block = [&](const std::string& prefix) {
        dense(prefix + ".q", d, d);
        dense(prefix + ".k", d, d);
        dense(prefix + ".v", d, d);
        dense(prefix + ".o", d, d);
    };
    auto ffn_block = [&](const std::string& prefix) {
        dense(prefix + ".1", d, cfg_.ffn_dim);
        dense(prefix + ".2", cfg_.ffn_dim, d);
    };

    dense("shape.1", 3, d);
    dense("shape.2", d, d);
    dense("embed.past", width_, d);
    dense("embed.x", width_, d);
    dense("time.1", d, d);
    dense("time.2", d, d);
    for (int l = 0; l < cfg_.encoder_layers; ++l) {
        const std::string p = "enc" + std::to_string(l);
        attention_block(p + ".attn");
        ffn_block(p + ".ffn");
    }
    for (int l = 0; l < cfg_.decoder_layers; ++l) {
        const std::string p = "dec" + std::to_string(l);
        attention_block(p + ".self");
        attention_block(p + ".cross");
        ffn_block(p + ".ffn");
    }
    dense("head", d, width_);
    if (cfg_.zero_init_head) {
        store_.at("head.w").value.setZero();
    }
}

namespace {

ad::Var linear(ad::Tape& tape, ad::Var x, ad::Var w, ad::Var b) {
    return tape.add(tape.matmul(x, w), b);
}

}  // namespace

ad::Var TransformerDenoiser::attention(ad::Tape& tape, ad::Var q_in, ad::Var kv_in,
                                       const std::string& prefix, const UseFn& use) const {
    const int d = cfg_.latent_dim;
    const int hd = d / cfg_.heads;
    ad::Var q = linear(tape, q_in, use(store_.at(prefix + ".q.w")), use(store_.at(prefix + ".q.b")));
    ad::Var k = linear(tape, kv_in, use(store_.at(prefix + ".k.w")), use(store_.at(prefix + ".k.b")));
    ad::Var v = linear(tape, kv_in, use(store_.at(prefix + ".v.w")), use(store_.at(prefix + ".v.b")));
    std::vector<ad::Var> heads;
    heads.reserve(cfg_.heads);
    for (int h = 0; h < cfg_.heads; ++h) {
        ad::Var qh = tape.slice_cols(q, h * hd, hd);
        ad::Var kh = tape.slice_cols(k, h * hd, hd);
        ad::Var vh = tape.slice_cols(v, h * hd, hd);
        ad::Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), 1.0 / std::sqrt(hd));
        heads.push_back(tape.matmul(tape.softmax_rows(scores), vh));
    }
    ad::Var cat = tape.concat_cols(heads);
    return linear(tape, cat, use(store_.at(prefix + ".o.w")), use(store_.at(prefix + ".o.b")));
}

ad::Var TransformerDenoiser::ffn(ad::Tape& tape, ad::Var x, const std::string& prefix,
                                 const UseFn& use) const {
    ad::Var h = tape.gelu(
        linear(tape, x, use(store_.at(prefix + ".1.w")), use(store_.at(prefix + ".1.b"))));
    if (training_pass_ && cfg_.dropout > 0.0) {
        MatX mask(h.rows(), h.cols());
        const double keep = 1.0 - cfg_.dropout;
        for (int r = 0; r < mask.rows(); ++r) {
            for (int c = 0; c < mask.cols(); ++c) {
                mask(r, c) = dropout_rng_.uniform() < keep ? 1.0 / keep : 0.0;
            }
        }
        h = tape.mul(h, tape.constant(mask));
    }
    return linear(tape, h, use(store_.at(prefix + ".2.w")), use(store_.at(prefix + ".2.b")));
}

ad::Var TransformerDenoiser::build_memory(ad::Tape& tape, const Condition& cond,
                                          const UseFn& use) const {
    if (cond.shape_points.rows() < 1) {
        throw ShapeError("encode_condition: empty shape point cloud");
    }
    if (cond.past_features.rows() < 1) {
        throw ShapeError("encode_condition: no past frames");
    }
    if (cond.past_features.cols() != width_) {
        throw ShapeError("condition width " + std::to_string(cond.past_features.cols()) +
                         " != model width " + std::to_string(width_));
    }
    const int H = static_cast<int>(cond.past_features.rows());
    if (H > cfg_.max_frames) throw ConfigError("past length exceeds max_frames");

    // Permutation-invariant shape embedding: per-point MLP, max-pool.
    ad::Var pts = tape.constant(cond.shape_points);
    ad::Var ph = tape.gelu(
        linear(tape, pts, use(store_.at("shape.1.w")), use(store_.at("shape.1.b"))));
    ad::Var pfeat = linear(tape, ph, use(store_.at("shape.2.w")), use(store_.at("shape.2.b")));
    ad::Var shape_emb = tape.colwise_max(pfeat);  // 1 x latent

    ad::Var tok = linear(tape, tape.constant(cond.past_features),
                         use(store_.at("embed.past.w")), use(store_.at("embed.past.b")));
    tok = tape.add(tok, tape.constant(positional_.topRows(H)));
    tok = tape.add(tok, shape_emb);

    for (int l = 0; l < cfg_.encoder_layers; ++l) {
        const std::string p = "enc" + std::to_string(l);
        ad::Var n = tape.layernorm_rows(tok);
        tok = tape.add(tok, attention(tape, n, n, p + ".attn", use));
        tok = tape.add(tok, ffn(tape, tape.layernorm_rows(tok), p + ".ffn", use));
    }
    return tape.layernorm_rows(tok);
}

ad::Var TransformerDenoiser::forward(ad::Tape& tape, ad::Var x_t, int t, const Condition& cond,
                                     const UseFn& use) const {
    if (x_t.cols() != width_) {
        throw ShapeError("denoise input width " + std::to_string(x_t.cols()) +
                         " != model width " + std::to_string(width_));
    }
    const int F = x_t.rows();
    if (F > cfg_.max_frames) throw ConfigError("future length exceeds max_frames");
    if (t < 0) throw ShapeError("negative diffusion step");

    ad::Var memory = build_memory(tape, cond, use);

    ad::Var time_base = tape.constant(sinusoidal_embedding(t, cfg_.latent_dim));
    ad::Var time_emb = linear(
        tape,
        tape.gelu(linear(tape, time_base, use(store_.at("time.1.w")), use(store_.at("time.1.b")))),
        use(store_.at("time.2.w")), use(store_.at("time.2.b")));

    ad::Var tok = linear(tape, x_t, use(store_.at("embed.x.w")), use(store_.at("embed.x.b")));
    tok = tape.add(tok, tape.constant(positional_.topRows(F)));
    tok = tape.add(tok, time_emb);

    for (int l = 0; l < cfg_.decoder_layers; ++l) {
        const std::string p = "dec" + std::to_string(l);
        ad::Var n = tape.layernorm_rows(tok);
        tok = tape.add(tok, attention(tape, n, n, p + ".self", use));
        tok = tape.add(tok, attention(tape, tape.layernorm_rows(tok), memory, p + ".cross", use));
        tok = tape.add(tok, ffn(tape, tape.layernorm_rows(tok), p + ".ffn", use));
    }
    return linear(tape, tape.layernorm_rows(tok), use(store_.at("head.w")),
                  use(store_.at("head.b")));
}

MatX TransformerDenoiser::denoise(const MatX& x_t, int t, const Condition& cond) const {
    ad::Tape tape;
    const UseFn use = [&tape](const ad::Param& p) { return tape.constant(p.value); };
    return forward(tape, tape.constant(x_t), t, cond, use).value();
}

ad::Var TransformerDenoiser::denoise(ad::Tape& tape, ad::Var x_t, int t, const Condition& cond) {
    const UseFn use = [&tape](const ad::Param& p) {
        return tape.leaf(const_cast<ad::Param&>(p));
    };
    training_pass_ = true;
    ad::Var out = forward(tape, x_t, t, cond, use);
    training_pass_ = false;
    return out;
}

MatX TransformerDenoiser::encode_condition(const Condition& cond) const {
    ad::Tape tape;
    const UseFn use = [&tape](const ad::Param& p) { return tape.constant(p.value); };
    return build_memory(tape, cond, use).value();
}

void TransformerDenoiser::save(const std::string& path, const std::string& extra_json) const {
    json header;
    header["width"] = width_;
    header["config"] = {{"latent_dim", cfg_.latent_dim},
                        {"encoder_layers", cfg_.encoder_layers},
                        {"decoder_layers", cfg_.decoder_layers},
                        {"heads", cfg_.heads},
                        {"ffn_dim", cfg_.ffn_dim},
                        {"dropout", cfg_.dropout},
                        {"max_frames", cfg_.max_frames},
                        {"zero_init_head", cfg_.zero_init_head}};
    header["extra"] = json::parse(extra_json);
    save_checkpoint(path, "denoiser", header.dump(), store_);
}

std::unique_ptr<TransformerDenoiser> TransformerDenoiser::load(const std::string& path,
                                                               std::string* extra_json) {
    const LoadedCheckpoint ckpt = load_checkpoint(path);
    if (ckpt.kind != "denoiser") {
        throw VersionError("checkpoint kind is '" + ckpt.kind + "', expected 'denoiser'");
    }
    json header;
    try {
        header = json::parse(ckpt.header_json);
    } catch (const json::exception& e) {
        throw ParseError(std::string("denoiser checkpoint header: ") + e.what());
    }
    DenoiserConfig cfg;
    const json& c = header.at("config");
    cfg.latent_dim = c.at("latent_dim").get<int>();
    cfg.encoder_layers = c.at("encoder_layers").get<int>();
    cfg.decoder_layers = c.at("decoder_layers").get<int>();
    cfg.heads = c.at("heads").get<int>();
    cfg.ffn_dim = c.at("ffn_dim").get<int>();
    cfg.dropout = c.at("dropout").get<double>();
    cfg.max_frames = c.at("max_frames").get<int>();
    cfg.zero_init_head = c.at("zero_init_head").get<bool>();
    auto model = std::make_unique<TransformerDenoiser>(cfg, header.at("width").get<int>(),
                                                       /*seed=*/0);
    restore_params(ckpt, model->store_);
    if (extra_json != nullptr) *extra_json = header.value("extra", json::object()).dump();
    return model;
}

}  // namespace interdiff
