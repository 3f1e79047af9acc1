#include "interdiff/pipeline.hpp"

#include <algorithm>
#include <numeric>

#include <json.hpp>

namespace interdiff {

Corpus generate_corpus(const std::vector<ScenarioKind>& kinds, int count, int duration,
                       std::uint64_t seed, const BodyProxy& body, const DataConfig& data) {
    if (kinds.empty()) throw ConfigError("generate_corpus: no scenario kinds");
    Corpus corpus;
    corpus.clips.reserve(count);
    for (int i = 0; i < count; ++i) {
        const std::uint64_t clip_seed = seed * 7919ull + static_cast<std::uint64_t>(i);
        Scenario sc;
        sc.kind = kinds[i % kinds.size()];
        sc.duration = duration;
        sc.seed = clip_seed;
        sc.past = data.past;
        sc.future = duration - data.past;
        sc.fps = data.fps;
        StoredSequence stored;
        stored.shape = make_random_shape(clip_seed, data.shape_points, data.shape_keypoints);
        stored.seq = generate_synthetic(sc, body, stored.shape);
        corpus.clips.push_back(std::move(stored));
    }
    return corpus;
}

namespace {

// Leading H+F window of a clip as a training sequence.
HoiSequence leading_window(const HoiSequence& seq, int past, int future) {
    const int frames = past + future;
    if (seq.frames() < frames) {
        throw ShapeError("clip too short: " + std::to_string(seq.frames()) + " < " +
                         std::to_string(frames));
    }
    HoiSequence out;
    out.fps = seq.fps;
    out.past_frames = past;
    out.future_frames = future;
    out.human.assign(seq.human.begin(), seq.human.begin() + frames);
    out.object.assign(seq.object.begin(), seq.object.begin() + frames);
    return out;
}

std::vector<int> shuffled_indices(int n, Rng& rng) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = n - 1; i > 0; --i) {
        std::swap(idx[i], idx[rng.uniform_int(0, i)]);
    }
    return idx;
}

}  // namespace

TrainedDenoiser train_denoiser(const Corpus& corpus, const Config& cfg,
                               const DiffusionProgress& progress) {
    if (corpus.clips.empty()) throw TrainingError("train_denoiser: empty corpus");
    const int H = cfg.data.past;
    const int F = cfg.data.future;
    const int width = feature_width(cfg.data.joints);

    std::vector<MatX> features;
    features.reserve(corpus.clips.size());
    for (const auto& stored : corpus.clips) {
        features.push_back(flatten_state(leading_window(stored.seq, H, F)));
        if (features.back().cols() != width) {
            throw ShapeError("corpus joint count does not match config");
        }
    }
    TrainedDenoiser out;
    out.stats = fit_norm_stats(features);

    std::vector<TrainingExample> examples(corpus.clips.size());
    for (size_t i = 0; i < corpus.clips.size(); ++i) {
        examples[i].features = out.stats.normalize(features[i]);
        examples[i].shape_points = corpus.clips[i].shape.points;
    }

    out.model = std::make_unique<TransformerDenoiser>(
        cfg.denoiser, width, static_cast<std::uint64_t>(cfg.train.seed));
    const NoiseSchedule schedule =
        make_schedule(cfg.diffusion.T, schedule_kind_from_string(cfg.diffusion.schedule),
                      cfg.diffusion.beta_min, cfg.diffusion.beta_max);

    ad::Adam opt(ad::AdamConfig{cfg.train.lr});
    auto params = out.model->params();
    Rng rng(static_cast<std::uint64_t>(cfg.train.seed) * 1009ull + 17ull);

    const int n = static_cast<int>(examples.size());
    const int batch_size = std::min(cfg.train.batch, n);
    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        const auto order = shuffled_indices(n, rng);
        DiffusionLosses epoch_losses;
        int batches = 0;
        for (int at = 0; at + batch_size <= n; at += batch_size) {
            std::vector<TrainingExample> batch;
            batch.reserve(batch_size);
            for (int b = 0; b < batch_size; ++b) batch.push_back(examples[order[at + b]]);
            for (auto* p : params) p->zero_grad();
            const DiffusionLosses losses =
                train_diffusion_step(batch, *out.model, schedule, cfg.loss, H,
                                     cfg.data.joints, rng);
            opt.step(params);
            epoch_losses.l_h += losses.l_h;
            epoch_losses.l_o += losses.l_o;
            epoch_losses.l_vh += losses.l_vh;
            epoch_losses.l_vo += losses.l_vo;
            epoch_losses.total += losses.total;
            ++batches;
        }
        if (progress && batches > 0) {
            epoch_losses.l_h /= batches;
            epoch_losses.l_o /= batches;
            epoch_losses.l_vh /= batches;
            epoch_losses.l_vo /= batches;
            epoch_losses.total /= batches;
            progress(epoch, epoch_losses);
        }
    }
    return out;
}

std::unique_ptr<StgnnModel> train_predictor(const Corpus& corpus, const Config& cfg,
                                            const BodyProxy& body,
                                            ReferenceSelection reference,
                                            const PredictorProgress& progress) {
    if (corpus.clips.empty()) throw TrainingError("train_predictor: empty corpus");
    const bool skeletal = cfg.corrector.mode == "skeletal";
    const ContactMode contact_mode = skeletal ? ContactMode::joint : ContactMode::marker;
    const int n_points = contact_mode == ContactMode::marker
                             ? static_cast<int>(body.markers.size())
                             : cfg.data.joints;

    auto model = std::make_unique<StgnnModel>(cfg.predictor, 1 + n_points,
                                              static_cast<std::uint64_t>(cfg.train.seed));

    std::vector<PredictorExample> examples(corpus.clips.size());
    for (size_t i = 0; i < corpus.clips.size(); ++i) {
        examples[i].seq = leading_window(corpus.clips[i].seq, cfg.data.past, cfg.data.future);
        examples[i].shape = corpus.clips[i].shape;
    }

    PredictorTrainOptions options;
    options.contact_mode = contact_mode;
    options.orientation_mode = orientation_mode_from_string(cfg.frames.orientation_mode);
    options.reference = reference;
    options.eps_contact = cfg.corrector.eps_contact;
    options.skeletal = skeletal;

    ad::Adam opt(ad::AdamConfig{cfg.train.lr});
    auto params = model->params();
    Rng rng(static_cast<std::uint64_t>(cfg.train.seed) * 2003ull + 29ull);

    const int n = static_cast<int>(examples.size());
    const int batch_size = std::min(cfg.train.batch, n);
    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        const auto order = shuffled_indices(n, rng);
        PredictorLosses epoch_losses;
        int batches = 0;
        for (int at = 0; at + batch_size <= n; at += batch_size) {
            std::vector<PredictorExample> batch;
            batch.reserve(batch_size);
            for (int b = 0; b < batch_size; ++b) batch.push_back(examples[order[at + b]]);
            for (auto* p : params) p->zero_grad();
            const PredictorLosses losses =
                train_predictor_step(batch, *model, cfg.predictor, body, options);
            opt.step(params);
            epoch_losses.l_o += losses.l_o;
            epoch_losses.l_vo += losses.l_vo;
            epoch_losses.l_c += losses.l_c;
            epoch_losses.l_p += losses.l_p;
            epoch_losses.total += losses.total;
            ++batches;
        }
        if (progress && batches > 0) {
            epoch_losses.l_o /= batches;
            epoch_losses.l_vo /= batches;
            epoch_losses.l_c /= batches;
            epoch_losses.l_p /= batches;
            epoch_losses.total /= batches;
            progress(epoch, epoch_losses);
        }
    }
    return model;
}

HoiSequence sample_window(const SamplerContext& ctx, const PastWindow& window,
                          const ObjectShape& shape, std::uint64_t seed,
                          std::vector<CorrectionRecord>* report) {
    if (ctx.denoiser == nullptr || ctx.stats == nullptr || ctx.body == nullptr) {
        throw ConfigError("sample_window: incomplete sampler context");
    }
    const int H = static_cast<int>(window.human.size());
    const int F = ctx.cfg.data.future;
    if (H != ctx.cfg.data.past) {
        throw ShapeError("sample_window: window length " + std::to_string(H) +
                         " != configured past " + std::to_string(ctx.cfg.data.past));
    }
    const int joints = window.human.front().joint_count();
    const int width = feature_width(joints);

    MatX past(H, width);
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < joints; ++j) {
            past.block<1, 3>(i, j * 3) = window.human[i].joints.row(j);
        }
        past.block<1, kObjectFeatureDim>(i, joints * 3) =
            object_features(window.object[i]).transpose();
    }

    Condition cond;
    cond.past_features = ctx.stats->normalize(past);
    cond.shape_points = shape.points;

    const NoiseSchedule schedule = make_schedule(
        ctx.cfg.diffusion.T, schedule_kind_from_string(ctx.cfg.diffusion.schedule),
        ctx.cfg.diffusion.beta_min, ctx.cfg.diffusion.beta_max);

    std::unique_ptr<InteractionCorrector> hook;
    if (ctx.correct) {
        if (ctx.predictor == nullptr) {
            throw ConfigError("sample_window: correction requested without a predictor");
        }
        InteractionCorrector::Setup setup;
        setup.body = ctx.body;
        setup.shape = &shape;
        setup.model = ctx.predictor;
        setup.corrector = ctx.cfg.corrector;
        setup.predict.orientation_mode =
            orientation_mode_from_string(ctx.cfg.frames.orientation_mode);
        setup.past_human = window.human;
        setup.past_object = window.object;
        setup.fps = window.fps;
        setup.total_steps = schedule.T;
        setup.stats = ctx.stats;
        hook = std::make_unique<InteractionCorrector>(std::move(setup));
    }

    const SampleResult result = sample_with_correction(cond, *ctx.denoiser, schedule, F, width,
                                                       hook.get(), seed);
    if (report != nullptr) {
        report->insert(report->end(), result.report.begin(), result.report.end());
    }

    const MatX raw = ctx.stats->denormalize(result.features);
    HoiSequence out;
    out.fps = window.fps;
    out.past_frames = H;
    out.future_frames = F;
    out.human = window.human;
    out.object = window.object;
    out.human.resize(H + F);
    out.object.resize(H + F);
    for (int i = 0; i < F; ++i) {
        HumanPose pose;
        pose.joints.resize(joints, 3);
        for (int j = 0; j < joints; ++j) {
            pose.joints.row(j) = raw.block<1, 3>(i, j * 3);
        }
        out.human[H + i] = pose;
        Eigen::Matrix<double, kObjectFeatureDim, 1> feat =
            raw.block<1, kObjectFeatureDim>(i, joints * 3).transpose();
        out.object[H + i] = object_from_features(feat);
    }
    return out;
}

HoiSequence rollout(const SamplerContext& ctx, const HoiSequence& initial_past,
                    const ObjectShape& shape, int total_frames, std::uint64_t seed,
                    std::vector<CorrectionRecord>* report) {
    const WindowSampler sampler = [&](const PastWindow& window, std::uint64_t round_seed) {
        return sample_window(ctx, window, shape, round_seed, report);
    };
    return autoregressive_rollout(sampler, initial_past, total_frames, ctx.cfg.data.past,
                                  ctx.cfg.data.future, seed);
}

void save_denoiser_checkpoint(const TrainedDenoiser& trained, const Config& cfg,
                              const std::string& path) {
    nlohmann::json extra;
    extra["norm_stats"] = nlohmann::json::parse(trained.stats.to_json_string());
    extra["config"] = nlohmann::json::parse(cfg.to_json_string());
    trained.model->save(path, extra.dump());
}

LoadedDenoiser load_denoiser_checkpoint(const std::string& path) {
    LoadedDenoiser out;
    std::string extra;
    out.trained.model = TransformerDenoiser::load(path, &extra);
    const auto j = nlohmann::json::parse(extra);
    if (!j.contains("norm_stats") || !j.contains("config")) {
        throw VersionError("denoiser checkpoint is missing normalization stats or config");
    }
    out.trained.stats = NormStats::from_json_string(j.at("norm_stats").dump());
    out.cfg = Config::from_json_string(j.at("config").dump());
    return out;
}

}  // namespace interdiff
