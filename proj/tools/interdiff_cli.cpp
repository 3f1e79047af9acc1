// Command-line front end: synthetic data generation, training, sampling with
// optional interaction correction, autoregressive rollout, evaluation, and
// format export.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "interdiff/pipeline.hpp"

namespace fs = std::filesystem;
using namespace interdiff;
using nlohmann::json;

namespace {

std::vector<std::string> list_sequence_files(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".json" || ext == ".bin") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ParseError("no sequence files (*.json, *.bin) in " + dir);
    return files;
}

Corpus load_corpus(const std::string& dir) {
    Corpus corpus;
    for (const auto& file : list_sequence_files(dir)) {
        corpus.clips.push_back(load_sequence(file));
    }
    return corpus;
}

Config load_config_or_default(const std::string& path) {
    if (path.empty()) return Config{};
    return Config::load(path);
}

int run_gen_data(const std::string& scenario, int count, std::uint64_t seed, int duration,
                 const std::string& out_dir, const std::string& format,
                 const std::string& config_path) {
    const Config cfg = load_config_or_default(config_path);
    const BodyProxy body = default_body();

    std::vector<ScenarioKind> kinds;
    if (scenario == "mixed") {
        kinds = {ScenarioKind::carry, ScenarioKind::swing, ScenarioKind::release,
                 ScenarioKind::push, ScenarioKind::no_contact};
    } else {
        kinds = {scenario_kind_from_string(scenario)};
    }
    if (duration <= 0) duration = cfg.data.past + cfg.data.future;

    fs::create_directories(out_dir);
    const Corpus corpus = generate_corpus(kinds, count, duration, seed, body, cfg.data);
    for (size_t i = 0; i < corpus.clips.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "clip_%05zu.%s", i, format.c_str());
        save_sequence(corpus.clips[i], (fs::path(out_dir) / name).string());
    }
    std::cout << "wrote " << corpus.clips.size() << " clips to " << out_dir << "\n";
    return 0;
}

int run_train_diffusion(const std::string& config_path, const std::string& data_dir,
                        const std::string& out_path) {
    const Config cfg = load_config_or_default(config_path);
    const Corpus corpus = load_corpus(data_dir);
    std::cout << "training diffusion on " << corpus.clips.size() << " clips\n";
    const TrainedDenoiser trained =
        train_denoiser(corpus, cfg, [&](int epoch, const DiffusionLosses& l) {
            if (epoch % 10 == 0 || epoch == cfg.train.epochs - 1) {
                std::cout << "epoch " << epoch << " total " << l.total << " (h " << l.l_h
                          << ", o " << l.l_o << ", vh " << l.l_vh << ", vo " << l.l_vo << ")\n";
            }
        });
    save_denoiser_checkpoint(trained, cfg, out_path);
    std::cout << "saved denoiser (" << trained.model->param_count() << " parameters) to "
              << out_path << "\n";
    return 0;
}

int run_train_predictor(const std::string& config_path, const std::string& data_dir,
                        const std::string& out_path, const std::string& reference) {
    const Config cfg = load_config_or_default(config_path);
    const Corpus corpus = load_corpus(data_dir);
    const BodyProxy body = default_body();
    const ReferenceSelection ref =
        reference == "ground" ? ReferenceSelection::ground : ReferenceSelection::by_contact;
    std::cout << "training predictor on " << corpus.clips.size() << " clips\n";
    auto model = train_predictor(corpus, cfg, body, ref,
                                 [&](int epoch, const PredictorLosses& l) {
                                     if (epoch % 10 == 0 || epoch == cfg.train.epochs - 1) {
                                         std::cout << "epoch " << epoch << " total " << l.total
                                                   << " (o " << l.l_o << ", vo " << l.l_vo
                                                   << ", c " << l.l_c << ", p " << l.l_p
                                                   << ")\n";
                                     }
                                 });
    json extra;
    extra["config"] = json::parse(cfg.to_json_string());
    model->save(out_path, extra.dump());
    std::cout << "saved predictor (" << model->param_count() << " parameters) to " << out_path
              << "\n";
    return 0;
}

struct SamplingSetup {
    LoadedDenoiser denoiser;
    std::unique_ptr<StgnnModel> predictor;
    BodyProxy body;
    SamplerContext ctx;
    StoredSequence past;
    PastWindow window;
};

SamplingSetup prepare_sampling(const std::string& past_path, const std::string& denoiser_path,
                               const std::string& predictor_path, bool correct,
                               const std::string& config_path) {
    SamplingSetup s;
    s.denoiser = load_denoiser_checkpoint(denoiser_path);
    Config cfg = s.denoiser.cfg;
    if (!config_path.empty()) {
        // Corrector/frames knobs may be overridden at sampling time; the
        // training-bound data split stays with the checkpoint.
        const Config override_cfg = Config::load(config_path);
        cfg.corrector = override_cfg.corrector;
        cfg.frames = override_cfg.frames;
        cfg.diffusion = override_cfg.diffusion;
    }
    s.body = default_body();
    if (!predictor_path.empty()) {
        s.predictor = StgnnModel::load(predictor_path);
    }
    if (correct && s.predictor == nullptr) {
        throw ConfigError("--correct requires --predictor");
    }
    s.past = load_sequence(past_path);
    const int H = cfg.data.past;
    if (s.past.seq.past_frames < H) {
        throw ShapeError("past file has " + std::to_string(s.past.seq.past_frames) +
                         " past frames; the model needs " + std::to_string(H));
    }
    s.window.fps = s.past.seq.fps;
    s.window.human.assign(s.past.seq.human.begin() + s.past.seq.past_frames - H,
                          s.past.seq.human.begin() + s.past.seq.past_frames);
    s.window.object.assign(s.past.seq.object.begin() + s.past.seq.past_frames - H,
                           s.past.seq.object.begin() + s.past.seq.past_frames);

    s.ctx.denoiser = s.denoiser.trained.model.get();
    s.ctx.stats = &s.denoiser.trained.stats;
    s.ctx.predictor = s.predictor.get();
    s.ctx.body = &s.body;
    s.ctx.cfg = cfg;
    s.ctx.correct = correct;
    return s;
}

int run_sample(const std::string& past_path, const std::string& denoiser_path,
               const std::string& predictor_path, bool correct, int n, std::uint64_t seed,
               const std::string& out_dir, const std::string& config_path) {
    SamplingSetup s = prepare_sampling(past_path, denoiser_path, predictor_path, correct,
                                       config_path);
    fs::create_directories(out_dir);
    for (int i = 0; i < n; ++i) {
        std::vector<CorrectionRecord> report;
        const HoiSequence sampled =
            sample_window(s.ctx, s.window, s.past.shape, seed + i, &report);
        char name[64];
        std::snprintf(name, sizeof(name), "sample_%03d.json", i);
        StoredSequence stored;
        stored.seq = sampled;
        stored.shape = s.past.shape;
        save_sequence(stored, (fs::path(out_dir) / name).string());
        if (s.ctx.correct) {
            std::snprintf(name, sizeof(name), "sample_%03d.report.jsonl", i);
            write_correction_report((fs::path(out_dir) / name).string(), report);
        }
    }
    std::cout << "wrote " << n << " samples to " << out_dir << "\n";
    return 0;
}

int run_rollout(const std::string& past_path, const std::string& denoiser_path,
                const std::string& predictor_path, bool correct, int frames, std::uint64_t seed,
                const std::string& out_dir, const std::string& config_path) {
    SamplingSetup s = prepare_sampling(past_path, denoiser_path, predictor_path, correct,
                                       config_path);
    fs::create_directories(out_dir);
    HoiSequence initial;
    initial.fps = s.window.fps;
    initial.past_frames = static_cast<int>(s.window.human.size());
    initial.future_frames = 1;
    initial.human = s.window.human;
    initial.object = s.window.object;
    initial.human.push_back(s.window.human.back());
    initial.object.push_back(s.window.object.back());
    initial.human.pop_back();
    initial.object.pop_back();

    std::vector<CorrectionRecord> report;
    HoiSequence rolled;
    try {
        rolled = rollout(s.ctx, initial, s.past.shape, frames, seed, &report);
    } catch (const RolloutError& e) {
        // Save what exists, then fail.
        StoredSequence partial;
        partial.seq = e.partial;
        partial.shape = s.past.shape;
        if (e.partial.future_frames > 0) {
            save_sequence(partial, (fs::path(out_dir) / "rollout_partial.json").string());
        }
        throw;
    }
    StoredSequence stored;
    stored.seq = rolled;
    stored.shape = s.past.shape;
    save_sequence(stored, (fs::path(out_dir) / "rollout.json").string());
    if (s.ctx.correct) {
        write_correction_report((fs::path(out_dir) / "rollout.report.jsonl").string(), report);
    }
    std::cout << "wrote " << frames << "-frame rollout to " << out_dir << "\n";
    return 0;
}

int run_eval(const std::string& pred_dir, const std::string& gt_dir,
             const std::string& report_path, bool skeletal, const std::string& config_path) {
    const Config cfg = load_config_or_default(config_path);
    const BodyProxy body = default_body();
    const auto pred_files = list_sequence_files(pred_dir);

    json per_clip = json::array();
    MetricsReport mean;
    int n = 0;
    for (const auto& pred_file : pred_files) {
        const fs::path name = fs::path(pred_file).filename();
        fs::path gt_file = fs::path(gt_dir) / name;
        if (!fs::exists(gt_file)) {
            // Allow cross-format comparison.
            fs::path alt = gt_file;
            alt.replace_extension(gt_file.extension() == ".json" ? ".bin" : ".json");
            if (!fs::exists(alt)) {
                throw ParseError("no ground-truth file for " + name.string());
            }
            gt_file = alt;
        }
        const StoredSequence pred = load_sequence(pred_file);
        const StoredSequence gt = load_sequence(gt_file.string());
        const int frames = std::min(pred.seq.future_frames, gt.seq.future_frames);
        const MetricsReport r =
            evaluate_sequences(pred.seq, gt.seq, gt.shape, body, frames, !skeletal);
        json entry = json::parse(r.to_json_string());
        entry["clip"] = name.string();
        per_clip.push_back(entry);
        mean.mpjpe_h += r.mpjpe_h;
        mean.mpjpe_o += r.mpjpe_o;
        mean.trans_err += r.trans_err;
        mean.rot_err += r.rot_err;
        mean.pene += r.pene;
        mean.pene_fraction += r.pene_fraction;
        mean.has_pene = r.has_pene;
        ++n;
    }
    mean.mpjpe_h /= n;
    mean.mpjpe_o /= n;
    mean.trans_err /= n;
    mean.rot_err /= n;
    mean.pene /= n;
    mean.pene_fraction /= n;

    json report;
    report["clips"] = n;
    report["mean"] = json::parse(mean.to_json_string());
    report["per_clip"] = per_clip;
    report["mode"] = skeletal ? "skeletal" : "mesh";
    report["config"] = json::parse(cfg.to_json_string());
    std::ofstream out(report_path);
    if (!out) throw ParseError("cannot write report: " + report_path);
    out << report.dump(2) << "\n";
    std::cout << "evaluated " << n << " clips; mean MPJPE-H " << mean.mpjpe_h
              << " mm, Trans.Err " << mean.trans_err << " mm\n";
    return 0;
}

int run_export(const std::string& seq_path, const std::string& format,
               const std::string& out_path) {
    const StoredSequence stored = load_sequence(seq_path);
    if (format == "json") {
        save_sequence_json(stored, out_path);
    } else if (format == "csv") {
        std::ofstream out(out_path);
        if (!out) throw ParseError("cannot write csv: " + out_path);
        const int joints = stored.seq.joint_count();
        out << "frame";
        for (int j = 0; j < joints; ++j) {
            out << ",j" << j << "_x,j" << j << "_y,j" << j << "_z";
        }
        for (int k = 0; k < 6; ++k) out << ",rot6d_" << k;
        out << ",trans_x,trans_y,trans_z\n";
        out.precision(17);
        for (int f = 0; f < stored.seq.frames(); ++f) {
            out << f;
            for (int j = 0; j < joints; ++j) {
                const Vec3 p = stored.seq.human[f].joints.row(j);
                out << "," << p.x() << "," << p.y() << "," << p.z();
            }
            const Rot6d r6 = stored.seq.object[f].rot6d();
            for (int k = 0; k < 6; ++k) out << "," << r6[k];
            const Vec3 t = stored.seq.object[f].translation;
            out << "," << t.x() << "," << t.y() << "," << t.z() << "\n";
        }
    } else {
        throw ConfigError("export format must be json or csv");
    }
    std::cout << "exported " << seq_path << " to " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"InterDiff: physics-informed diffusion over human-object interactions"};
    app.require_subcommand(1);

    // gen-data
    std::string gd_scenario = "mixed", gd_out, gd_format = "json", gd_config;
    int gd_count = 100, gd_duration = 0;
    std::uint64_t gd_seed = 7;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic HOI corpus");
    gen->add_option("--scenario", gd_scenario,
                    "carry|swing|release|push|no_contact|mixed");
    gen->add_option("--count", gd_count, "number of clips")->required();
    gen->add_option("--seed", gd_seed, "corpus seed");
    gen->add_option("--duration", gd_duration, "frames per clip (default H+F)");
    gen->add_option("--out", gd_out, "output directory")->required();
    gen->add_option("--format", gd_format, "json|bin");
    gen->add_option("--config", gd_config, "config file");

    // train-diffusion
    std::string td_config, td_data, td_out;
    auto* td = app.add_subcommand("train-diffusion", "train the interaction diffusion model");
    td->add_option("--config", td_config, "config file");
    td->add_option("--data", td_data, "corpus directory")->required();
    td->add_option("--out", td_out, "checkpoint path")->required();

    // train-predictor
    std::string tp_config, tp_data, tp_out, tp_reference = "contact";
    auto* tp = app.add_subcommand("train-predictor", "train the interaction predictor");
    tp->add_option("--config", tp_config, "config file");
    tp->add_option("--data", tp_data, "corpus directory")->required();
    tp->add_option("--out", tp_out, "checkpoint path")->required();
    tp->add_option("--reference", tp_reference, "contact|ground supervision frame");

    // sample
    std::string sm_past, sm_denoiser, sm_predictor, sm_out, sm_config;
    bool sm_correct = false;
    int sm_n = 10;
    std::uint64_t sm_seed = 0;
    auto* sm = app.add_subcommand("sample", "sample future HOIs for a past window");
    sm->add_option("--past", sm_past, "conditioning sequence file")->required();
    sm->add_option("--denoiser", sm_denoiser, "denoiser checkpoint")->required();
    sm->add_option("--predictor", sm_predictor, "predictor checkpoint");
    sm->add_flag("--correct", sm_correct, "enable interaction correction");
    sm->add_option("--n", sm_n, "number of samples");
    sm->add_option("--seed", sm_seed, "base seed");
    sm->add_option("--out", sm_out, "output directory")->required();
    sm->add_option("--config", sm_config, "override corrector/frames/diffusion config");

    // rollout
    std::string ro_past, ro_denoiser, ro_predictor, ro_out, ro_config;
    bool ro_correct = false;
    int ro_frames = 100;
    std::uint64_t ro_seed = 0;
    auto* ro = app.add_subcommand("rollout", "autoregressive long-horizon generation");
    ro->add_option("--past", ro_past, "conditioning sequence file")->required();
    ro->add_option("--denoiser", ro_denoiser, "denoiser checkpoint")->required();
    ro->add_option("--predictor", ro_predictor, "predictor checkpoint");
    ro->add_flag("--correct", ro_correct, "enable interaction correction");
    ro->add_option("--frames", ro_frames, "total future frames");
    ro->add_option("--seed", ro_seed, "seed");
    ro->add_option("--out", ro_out, "output directory")->required();
    ro->add_option("--config", ro_config, "override corrector/frames/diffusion config");

    // eval
    std::string ev_pred, ev_gt, ev_report = "report.json", ev_config;
    bool ev_skeletal = false;
    auto* ev = app.add_subcommand("eval", "compare predictions against ground truth");
    ev->add_option("--pred", ev_pred, "prediction directory")->required();
    ev->add_option("--gt", ev_gt, "ground-truth directory")->required();
    ev->add_option("--report", ev_report, "output report path");
    ev->add_flag("--skeletal", ev_skeletal, "skeletal mode (no penetration metric)");
    ev->add_option("--config", ev_config, "config file echoed into the report");

    // export
    std::string ex_seq, ex_format = "csv", ex_out;
    auto* ex = app.add_subcommand("export", "convert a sequence file");
    ex->add_option("--seq", ex_seq, "sequence file")->required();
    ex->add_option("--format", ex_format, "json|csv");
    ex->add_option("--out", ex_out, "output path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            return run_gen_data(gd_scenario, gd_count, gd_seed, gd_duration, gd_out, gd_format,
                                gd_config);
        }
        if (td->parsed()) return run_train_diffusion(td_config, td_data, td_out);
        if (tp->parsed()) return run_train_predictor(tp_config, tp_data, tp_out, tp_reference);
        if (sm->parsed()) {
            return run_sample(sm_past, sm_denoiser, sm_predictor, sm_correct, sm_n, sm_seed,
                              sm_out, sm_config);
        }
        if (ro->parsed()) {
            return run_rollout(ro_past, ro_denoiser, ro_predictor, ro_correct, ro_frames,
                               ro_seed, ro_out, ro_config);
        }
        if (ev->parsed()) return run_eval(ev_pred, ev_gt, ev_report, ev_skeletal, ev_config);
        if (ex->parsed()) return run_export(ex_seq, ex_format, ex_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
