#include "interdiff/predictor.hpp"

#include <cmath>

#include <json.hpp>

namespace interdiff {

using nlohmann::json;

DctBasis DctBasis::make(int bases, int frames) {
    if (frames < 1 || bases < 1 || bases > frames) {
        throw ConfigError("DCT basis needs 1 <= bases <= frames, got bases=" +
                          std::to_string(bases) + " frames=" + std::to_string(frames));
    }
    DctBasis b;
    b.C.resize(bases, frames);
    for (int k = 0; k < bases; ++k) {
        const double s = k == 0 ? std::sqrt(1.0 / frames) : std::sqrt(2.0 / frames);
        for (int n = 0; n < frames; ++n) {
            b.C(k, n) = s * std::cos(M_PI / frames * (n + 0.5) * k);
        }
    }
    return b;
}

MatX dct_forward(const MatX& track, const DctBasis& basis) {
    if (track.rows() != basis.frames()) {
        throw ShapeError("dct_forward: track has " + std::to_string(track.rows()) +
                         " frames, basis expects " + std::to_string(basis.frames()));
    }
    return basis.C * track;
}

MatX dct_inverse(const MatX& coeffs, const DctBasis& basis) {
    if (coeffs.rows() != basis.bases()) {
        throw ShapeError("dct_inverse: coefficient count mismatch");
    }
    return basis.C.transpose() * coeffs;
}

// ---------------------------------------------------------------------------

namespace {

MatX pad_replicate_last(const MatX& track, int total_frames) {
    MatX out(total_frames, track.cols());
    out.topRows(track.rows()) = track;
    for (int i = static_cast<int>(track.rows()); i < total_frames; ++i) {
        out.row(i) = track.row(track.rows() - 1);
    }
    return out;
}

MatX matrix_to_row(const MatX& m) {
    MatX row(1, m.size());
    int at = 0;
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) row(0, at++) = m(r, c);
    }
    return row;
}

ad::Var row_to_matrix(ad::Tape& tape, ad::Var row, int rows, int cols) {
    std::vector<ad::Var> parts;
    parts.reserve(rows);
    for (int r = 0; r < rows; ++r) {
        parts.push_back(tape.slice_cols(row, r * cols, cols));
    }
    return tape.concat_rows(parts);
}

}  // namespace

StgnnModel::StgnnModel(PredictorConfig cfg, int nodes, std::uint64_t seed)
    : cfg_(cfg), nodes_(nodes) {
    if (nodes_ < 1) throw ConfigError("StgnnModel needs at least one node");
    Rng rng(seed);
    const int din = kObjectFeatureDim * cfg_.dct_bases;
    const int w = cfg_.width;

    auto adjacency = [&](const std::string& name) {
        MatX a = MatX::Identity(nodes_, nodes_) + 0.01 * rng.normal_matrix(nodes_, nodes_);
        store_.add(name, std::move(a));
    };

    adjacency("in.a");
    store_.add("in.w", ad::glorot_init(din, w, rng));
    store_.add("in.b", MatX::Zero(1, w));
    for (int b = 0; b < cfg_.blocks; ++b) {
        const std::string p = "block" + std::to_string(b);
        adjacency(p + ".a1");
        store_.add(p + ".w1", ad::glorot_init(w, w, rng));
        store_.add(p + ".b1", MatX::Zero(1, w));
        adjacency(p + ".a2");
        store_.add(p + ".w2", ad::glorot_init(w, w, rng));
        store_.add(p + ".b2", MatX::Zero(1, w));
    }
    adjacency("out.a");
    store_.add("out.w", MatX::Zero(w, din));  // zero residual at init
    store_.add("out.b", MatX::Zero(1, din));
}

std::vector<ad::Var> StgnnModel::predict_tracks(ad::Tape& tape, const StGraph& graph,
                                                int total_frames, bool train) {
    if (graph.node_count() != nodes_) {
        throw ShapeError("graph has " + std::to_string(graph.node_count()) +
                         " nodes, model expects " + std::to_string(nodes_));
    }
    const int H = graph.frames();
    if (H < 1 || total_frames <= H) {
        throw ShapeError("predict_tracks needs total_frames > past frames");
    }
    const int bases = std::min(cfg_.dct_bases, total_frames);
    const DctBasis basis = DctBasis::make(bases, total_frames);
    const int din = kObjectFeatureDim * bases;

    const auto use = [&](const std::string& name) {
        return train ? tape.leaf(store_.at(name)) : tape.constant(store_.at(name).value);
    };

    // Frequency-domain node features from the padded tracks.
    std::vector<MatX> padded(nodes_);
    MatX x0(nodes_, din);
    for (int n = 0; n < nodes_; ++n) {
        padded[n] = pad_replicate_last(graph.nodes[n], total_frames);
        x0.row(n) = matrix_to_row(dct_forward(padded[n], basis));
    }

    ad::Var x = tape.tanh_(tape.add(
        tape.matmul(tape.matmul(use("in.a"), tape.constant(x0)), use("in.w")), use("in.b")));
    for (int b = 0; b < cfg_.blocks; ++b) {
        const std::string p = "block" + std::to_string(b);
        ad::Var y = tape.tanh_(tape.add(
            tape.matmul(tape.matmul(use(p + ".a1"), x), use(p + ".w1")), use(p + ".b1")));
        y = tape.add(tape.matmul(tape.matmul(use(p + ".a2"), y), use(p + ".w2")), use(p + ".b2"));
        x = tape.add(x, y);
    }
    ad::Var delta = tape.add(
        tape.matmul(tape.matmul(use("out.a"), x), use("out.w")), use("out.b"));

    // Time-domain residual against the padded track, so a zero delta is an
    // exact last-frame hold.
    const ad::Var ct = tape.constant(basis.C.transpose());
    std::vector<ad::Var> tracks;
    tracks.reserve(nodes_);
    for (int n = 0; n < nodes_; ++n) {
        ad::Var coeffs = row_to_matrix(tape, tape.slice_rows(delta, n, 1), bases,
                                       kObjectFeatureDim);
        tracks.push_back(tape.add(tape.constant(padded[n]), tape.matmul(ct, coeffs)));
    }
    return tracks;
}

void StgnnModel::save(const std::string& path, const std::string& extra_json) const {
    json header;
    header["nodes"] = nodes_;
    header["config"] = {{"dct_bases", cfg_.dct_bases}, {"blocks", cfg_.blocks},
                        {"width", cfg_.width},         {"lambda_o", cfg_.lambda_o},
                        {"lambda_vo", cfg_.lambda_vo}, {"lambda_c", cfg_.lambda_c},
                        {"lambda_p", cfg_.lambda_p},   {"loss_points", cfg_.loss_points}};
    header["extra"] = json::parse(extra_json);
    save_checkpoint(path, "predictor", header.dump(), store_);
}

std::unique_ptr<StgnnModel> StgnnModel::load(const std::string& path, std::string* extra_json) {
    const LoadedCheckpoint ckpt = load_checkpoint(path);
    if (ckpt.kind != "predictor") {
        throw VersionError("checkpoint kind is '" + ckpt.kind + "', expected 'predictor'");
    }
    json header;
    try {
        header = json::parse(ckpt.header_json);
    } catch (const json::exception& e) {
        throw ParseError(std::string("predictor checkpoint header: ") + e.what());
    }
    PredictorConfig cfg;
    const json& c = header.at("config");
    cfg.dct_bases = c.at("dct_bases").get<int>();
    cfg.blocks = c.at("blocks").get<int>();
    cfg.width = c.at("width").get<int>();
    cfg.lambda_o = c.at("lambda_o").get<double>();
    cfg.lambda_vo = c.at("lambda_vo").get<double>();
    cfg.lambda_c = c.at("lambda_c").get<double>();
    cfg.lambda_p = c.at("lambda_p").get<double>();
    cfg.loss_points = c.at("loss_points").get<int>();
    auto model = std::make_unique<StgnnModel>(cfg, header.at("nodes").get<int>(), /*seed=*/0);
    restore_params(ckpt, model->store_);
    if (extra_json != nullptr) *extra_json = header.value("extra", json::object()).dump();
    return model;
}

StGraph predict_relative(const StGraph& past_graph, PredictorModel& model, int future_frames) {
    const int total = past_graph.frames() + future_frames;
    ad::Tape tape;
    const auto tracks = model.predict_tracks(tape, past_graph, total, /*train=*/false);
    StGraph out;
    out.nodes.reserve(tracks.size());
    for (const auto& track : tracks) {
        out.nodes.push_back(track.value().bottomRows(future_frames));
    }
    return out;
}

HoiSequence interaction_predict(const HoiSequence& denoised, const ReferenceChoice& s,
                                PredictorModel& model, const BodyProxy& body,
                                const InteractionPredictOptions& options) {
    const int H = denoised.past_frames;
    const int F = denoised.future_frames;
    const int total = H + F;
    const int n_points = options.contact_mode == ContactMode::marker
                             ? static_cast<int>(body.markers.size())
                             : denoised.joint_count();
    if (s.s < -1 || s.s >= n_points) {
        throw ShapeError("reference index out of range: " + std::to_string(s.s));
    }

    const StGraph graph =
        build_st_graph(denoised, body, options.contact_mode, options.orientation_mode);

    ad::Tape tape;
    const auto tracks = model.predict_tracks(tape, graph, total, /*train=*/false);
    const MatX track = tracks[s.s + 1].value();

    std::vector<ObjectPose> predicted;
    if (s.is_ground()) {
        predicted = object_track_from_features(track);
    } else {
        const auto anchors =
            contact_point_tracks(denoised, body, options.contact_mode, 0, total);
        const std::vector<ObjectPose> rel = object_track_from_features(track);
        if (options.orientation_mode == OrientationMode::bone_frame) {
            const auto frames =
                contact_frame_tracks(denoised, body, options.contact_mode, 0, total);
            predicted = from_reference(rel, anchors[s.s], options.orientation_mode,
                                       &frames[s.s]);
        } else {
            predicted = from_reference(rel, anchors[s.s], options.orientation_mode);
        }
    }

    HoiSequence out = denoised;
    for (int i = H; i < total; ++i) out.object[i] = predicted[i];
    return out;
}

// ---------------------------------------------------------------------------
// Differentiable pieces for the training losses.

namespace {

// Row-wise Euclidean norm with a tiny floor inside the sqrt.
ad::Var rowwise_norm(ad::Tape& tape, ad::Var m) {
    return tape.sqrt_(tape.add_const(tape.rowwise_sum(tape.square(m)), 1e-12));
}

// Gram-Schmidt rotation matrix (columns) from a 1x6 feature row.
ad::Var rotation_from_rot6d_row(ad::Tape& tape, ad::Var row) {
    ad::Var a1 = tape.transpose(tape.slice_cols(row, 0, 3));  // 3x1
    ad::Var a2 = tape.transpose(tape.slice_cols(row, 3, 3));
    ad::Var n1 = tape.sqrt_(tape.add_const(tape.sum(tape.square(a1)), 1e-12));
    ad::Var b1 = tape.div(a1, n1);
    ad::Var d = tape.sum(tape.mul(b1, a2));
    ad::Var a2p = tape.sub(a2, tape.mul(b1, d));
    ad::Var n2 = tape.sqrt_(tape.add_const(tape.sum(tape.square(a2p)), 1e-12));
    ad::Var b2 = tape.div(a2p, n2);
    ad::Var b3 = tape.cross3(b1, b2);
    return tape.concat_cols({b1, b2, b3});
}

// First two columns of R flattened back to a 1x6 row.
ad::Var rot6d_row_from_rotation(ad::Tape& tape, ad::Var r) {
    return tape.concat_cols(
        {tape.transpose(tape.slice_cols(r, 0, 1)), tape.transpose(tape.slice_cols(r, 1, 1))});
}

struct FramePosed {
    ad::Var points;  // K x 3 posed object points
};

FramePosed pose_points_var(ad::Tape& tape, const MatX& canonical, ad::Var rot6d_row,
                           ad::Var trans_row) {
    ad::Var r = rotation_from_rot6d_row(tape, rot6d_row);
    FramePosed out;
    out.points = tape.add(tape.matmul(tape.constant(canonical), tape.transpose(r)), trans_row);
    return out;
}

// Capsule-union signed distances of a posed point set against a fixed pose.
ad::Var sdf_vars(ad::Tape& tape, ad::Var points, const HumanPose& pose,
                 const Skeleton& skeleton) {
    std::vector<ad::Var> per_bone;
    per_bone.reserve(skeleton.bone_count());
    for (int b = 0; b < skeleton.bone_count(); ++b) {
        const Vec3 a = pose.joints.row(skeleton.bone_parent_joint(b));
        const Vec3 c = pose.joints.row(skeleton.bone_child_joint(b));
        const Vec3 u = c - a;
        const double len2 = u.squaredNorm();
        ad::Var pa = tape.sub(points, tape.constant(a.transpose()));
        ad::Var t = tape.clamp(
            tape.scale(tape.matmul(pa, tape.constant(MatX(u))), 1.0 / len2), 0.0, 1.0);
        ad::Var proj = tape.matmul(t, tape.constant(MatX(u.transpose())));
        ad::Var dist = rowwise_norm(tape, tape.sub(pa, proj));
        per_bone.push_back(tape.add_const(dist, -skeleton.capsule_radii[b]));
    }
    return tape.rowwise_min(tape.concat_cols(per_bone));
}

}  // namespace

PredictorLosses train_predictor_step(const std::vector<PredictorExample>& batch,
                                     PredictorModel& model, const PredictorConfig& cfg,
                                     const BodyProxy& body,
                                     const PredictorTrainOptions& options) {
    if (batch.empty()) throw TrainingError("train_predictor_step: empty batch");

    ad::Tape tape;
    ad::Var l_o, l_vo, l_c, l_p;
    bool have_o = false;
    bool have_c = false;
    bool have_p = false;
    int contact_pairs = 0;
    int pen_frames = 0;

    for (const PredictorExample& ex : batch) {
        const HoiSequence& seq = ex.seq;
        const int H = seq.past_frames;
        const int F = seq.future_frames;
        const int total = H + F;

        // Reference from the clean data, as in the decoupled training scheme.
        const ContactState contact = contact_state(seq, ex.shape, body, options.contact_mode);
        ReferenceChoice s;
        if (options.reference == ReferenceSelection::by_contact) {
            s = select_reference(contact, options.eps_contact);
        }

        const StGraph graph =
            build_st_graph(seq, body, options.contact_mode, options.orientation_mode);
        auto tracks = model.predict_tracks(tape, graph, total, /*train=*/true);
        ad::Var rel = tracks[s.s + 1];

        // Re-anchor to the world frame along the ground-truth tracks.
        ad::Var world;
        if (s.is_ground()) {
            world = rel;
        } else {
            const auto anchors =
                contact_point_tracks(seq, body, options.contact_mode, 0, total);
            MatX anchor_mat(total, 3);
            for (int i = 0; i < total; ++i) anchor_mat.row(i) = anchors[s.s][i];
            if (options.orientation_mode == OrientationMode::translation_only) {
                ad::Var rot = tape.slice_cols(rel, 0, 6);
                ad::Var trans = tape.add(tape.slice_cols(rel, 6, 3), tape.constant(anchor_mat));
                world = tape.concat_cols({rot, trans});
            } else {
                const auto frames =
                    contact_frame_tracks(seq, body, options.contact_mode, 0, total);
                std::vector<ad::Var> rows;
                rows.reserve(total);
                for (int i = 0; i < total; ++i) {
                    const MatX rb = frames[s.s][i].toRotationMatrix();
                    ad::Var row = tape.slice_rows(rel, i, 1);
                    ad::Var r_rel = rotation_from_rot6d_row(tape, tape.slice_cols(row, 0, 6));
                    ad::Var r_world = tape.matmul(tape.constant(rb), r_rel);
                    ad::Var t_world = tape.add(
                        tape.transpose(tape.matmul(tape.constant(rb),
                                                   tape.transpose(tape.slice_cols(row, 6, 3)))),
                        tape.constant(MatX(anchor_mat.row(i))));
                    rows.push_back(
                        tape.concat_cols({rot6d_row_from_rotation(tape, r_world), t_world}));
                }
                world = tape.concat_rows(rows);
            }
        }

        const std::vector<ObjectPose> gt(seq.object.begin(), seq.object.end());
        const MatX gt_feats = object_track_features(gt);
        ad::Var diff = tape.sub(world, tape.constant(gt_feats));
        ad::Var o_err = tape.mean(tape.square(diff));
        const MatX gt_vel = gt_feats.bottomRows(total - 1) - gt_feats.topRows(total - 1);
        ad::Var vel = tape.sub(tape.slice_rows(world, 1, total - 1),
                               tape.slice_rows(world, 0, total - 1));
        ad::Var vo_err = tape.mean(tape.square(tape.sub(vel, tape.constant(gt_vel))));
        if (!have_o) {
            l_o = o_err;
            l_vo = vo_err;
            have_o = true;
        } else {
            l_o = tape.add(l_o, o_err);
            l_vo = tape.add(l_vo, vo_err);
        }

        // Contact and penetration terms on the predicted future object track.
        const bool want_c = !options.skeletal && cfg.lambda_c != 0.0;
        const bool want_p = !options.skeletal && cfg.lambda_p != 0.0;
        if (!want_c && !want_p) continue;

        const int K = std::min<int>(cfg.loss_points, ex.shape.point_count());
        const MatX subcloud = ex.shape.points.topRows(K);
        const auto anchors = contact_point_tracks(seq, body, options.contact_mode, 0, total);

        for (int i = 0; i < F; ++i) {
            const int frame = H + i;
            ad::Var row = tape.slice_rows(world, frame, 1);
            const FramePosed posed = pose_points_var(tape, subcloud,
                                                     tape.slice_cols(row, 0, 6),
                                                     tape.slice_cols(row, 6, 3));
            if (want_p) {
                ad::Var sdf = sdf_vars(tape, posed.points, seq.human[frame], body.skeleton);
                ad::Var depth = tape.clamp(tape.neg(sdf), 0.0, 1e30);
                ad::Var pen = tape.sum(depth);
                l_p = have_p ? tape.add(l_p, pen) : pen;
                have_p = true;
                ++pen_frames;
            }
            if (want_c) {
                for (int j = 0; j < contact.contact_points(); ++j) {
                    if (contact.distances(i, j) >= options.eps_contact) continue;
                    const MatX anchor_row = anchors[j][frame].transpose();
                    ad::Var d = rowwise_norm(
                        tape, tape.sub(posed.points, tape.constant(anchor_row)));
                    ad::Var dmin = tape.reduce_min(d);
                    l_c = have_c ? tape.add(l_c, dmin) : dmin;
                    have_c = true;
                    ++contact_pairs;
                }
            }
        }
    }

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    l_o = tape.scale(l_o, inv_n);
    l_vo = tape.scale(l_vo, inv_n);
    if (have_c) l_c = tape.scale(l_c, 1.0 / contact_pairs);
    if (have_p) l_p = tape.scale(l_p, 1.0 / pen_frames);

    ad::Var total = tape.add(tape.scale(l_o, cfg.lambda_o), tape.scale(l_vo, cfg.lambda_vo));
    if (have_c) total = tape.add(total, tape.scale(l_c, cfg.lambda_c));
    if (have_p) total = tape.add(total, tape.scale(l_p, cfg.lambda_p));

    PredictorLosses losses;
    losses.l_o = l_o.value()(0, 0);
    losses.l_vo = l_vo.value()(0, 0);
    losses.l_c = have_c ? l_c.value()(0, 0) : 0.0;
    losses.l_p = have_p ? l_p.value()(0, 0) : 0.0;
    losses.total = total.value()(0, 0);
    if (!std::isfinite(losses.total)) {
        throw TrainingError("non-finite predictor loss: l_o=" + std::to_string(losses.l_o) +
                            " l_vo=" + std::to_string(losses.l_vo) +
                            " l_c=" + std::to_string(losses.l_c) +
                            " l_p=" + std::to_string(losses.l_p));
    }
    tape.backward(total);
    return losses;
}

}  // namespace interdiff
