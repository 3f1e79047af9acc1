#include "interdiff/data_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "interdiff/geometry_contact.hpp"

namespace interdiff {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Shapes

namespace {

MatX surface_box(const Vec3& he, int n, Rng& rng) {
    MatX pts(n, 3);
    for (int i = 0; i < n; ++i) {
        const int face = rng.uniform_int(0, 5);
        const int axis = face / 2;
        const double sign = face % 2 == 0 ? 1.0 : -1.0;
        Vec3 p(rng.uniform(-1, 1) * he.x(), rng.uniform(-1, 1) * he.y(),
               rng.uniform(-1, 1) * he.z());
        p[axis] = sign * he[axis];
        pts.row(i) = p;
    }
    return pts;
}

}  // namespace

ObjectShape make_box_shape(const Vec3& he, int points, int keypoints, std::uint64_t seed) {
    if (points < keypoints || keypoints < 1) {
        throw ConfigError("shape needs points >= keypoints >= 1");
    }
    Rng rng(seed);
    ObjectShape shape;
    shape.name = "box";
    shape.points.resize(points, 3);
    // Keypoints first: 8 corners, then face centers.
    int at = 0;
    for (int sx : {-1, 1}) {
        for (int sy : {-1, 1}) {
            for (int sz : {-1, 1}) {
                if (at < keypoints) {
                    shape.points.row(at++) = Vec3(sx * he.x(), sy * he.y(), sz * he.z());
                }
            }
        }
    }
    for (int f = 0; f < 6 && at < keypoints; ++f) {
        Vec3 p = Vec3::Zero();
        p[f / 2] = (f % 2 == 0 ? 1.0 : -1.0) * he[f / 2];
        shape.points.row(at++) = p;
    }
    const MatX rest = surface_box(he, points - at, rng);
    shape.points.bottomRows(points - at) = rest;
    for (int k = 0; k < keypoints; ++k) shape.keypoints.push_back(k);
    validate_shape(shape);
    return shape;
}

ObjectShape make_cylinder_shape(double radius, double height, int points, int keypoints,
                                std::uint64_t seed) {
    if (points < keypoints || keypoints < 1) {
        throw ConfigError("shape needs points >= keypoints >= 1");
    }
    Rng rng(seed);
    ObjectShape shape;
    shape.name = "cylinder";
    shape.points.resize(points, 3);
    const double hh = height / 2.0;
    int at = 0;
    // Keypoints: cap centers, then rim points.
    if (at < keypoints) shape.points.row(at++) = Vec3(0, 0, hh);
    if (at < keypoints) shape.points.row(at++) = Vec3(0, 0, -hh);
    for (int i = 0; at < keypoints; ++i) {
        const double ang = 2.0 * M_PI * i / std::max(1, keypoints - 2);
        const double z = i % 2 == 0 ? hh : -hh;
        shape.points.row(at++) = Vec3(radius * std::cos(ang), radius * std::sin(ang), z);
    }
    for (; at < points; ++at) {
        // Side wall vs caps, area-weighted.
        const double side_area = 2.0 * M_PI * radius * height;
        const double cap_area = 2.0 * M_PI * radius * radius;
        const double ang = rng.uniform(0.0, 2.0 * M_PI);
        if (rng.uniform() < side_area / (side_area + cap_area)) {
            shape.points.row(at) =
                Vec3(radius * std::cos(ang), radius * std::sin(ang), rng.uniform(-hh, hh));
        } else {
            const double r = radius * std::sqrt(rng.uniform());
            const double z = rng.uniform() < 0.5 ? hh : -hh;
            shape.points.row(at) = Vec3(r * std::cos(ang), r * std::sin(ang), z);
        }
    }
    for (int k = 0; k < keypoints; ++k) shape.keypoints.push_back(k);
    validate_shape(shape);
    return shape;
}

ObjectShape make_sphere_shell_shape(double radius, int points, int keypoints,
                                    std::uint64_t seed) {
    if (points < keypoints || keypoints < 1) {
        throw ConfigError("shape needs points >= keypoints >= 1");
    }
    Rng rng(seed);
    ObjectShape shape;
    shape.name = "sphere_shell";
    shape.points.resize(points, 3);
    // Keypoints: axis poles plus a deterministic equatorial ring.
    int at = 0;
    if (at < keypoints) shape.points.row(at++) = Vec3(0, 0, radius);
    if (at < keypoints) shape.points.row(at++) = Vec3(0, 0, -radius);
    for (int i = 0; at < keypoints; ++i) {
        const double ang = 2.0 * M_PI * i / std::max(1, keypoints - 2);
        shape.points.row(at++) = Vec3(radius * std::cos(ang), radius * std::sin(ang), 0);
    }
    for (; at < points; ++at) {
        Vec3 d = rng.normal_vec3();
        while (d.norm() < 1e-9) d = rng.normal_vec3();
        shape.points.row(at) = radius * d.normalized();
    }
    for (int k = 0; k < keypoints; ++k) shape.keypoints.push_back(k);
    validate_shape(shape);
    return shape;
}

ObjectShape make_random_shape(std::uint64_t seed, int points, int keypoints) {
    Rng rng(seed ^ 0xabcdef12345ull);
    const int kind = rng.uniform_int(0, 2);
    if (kind == 0) {
        const Vec3 he(rng.uniform(0.03, 0.09), rng.uniform(0.03, 0.09), rng.uniform(0.03, 0.09));
        return make_box_shape(he, points, keypoints, seed);
    }
    if (kind == 1) {
        return make_cylinder_shape(rng.uniform(0.02, 0.05), rng.uniform(0.08, 0.2), points,
                                   keypoints, seed);
    }
    return make_sphere_shell_shape(rng.uniform(0.04, 0.1), points, keypoints, seed);
}

// ---------------------------------------------------------------------------
// Scenario generator

ScenarioKind scenario_kind_from_string(const std::string& name) {
    if (name == "carry") return ScenarioKind::carry;
    if (name == "swing") return ScenarioKind::swing;
    if (name == "release") return ScenarioKind::release;
    if (name == "push") return ScenarioKind::push;
    if (name == "no_contact") return ScenarioKind::no_contact;
    throw ConfigError("unknown scenario kind: " + name);
}

std::string to_string(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::carry: return "carry";
        case ScenarioKind::swing: return "swing";
        case ScenarioKind::release: return "release";
        case ScenarioKind::push: return "push";
        case ScenarioKind::no_contact: return "no_contact";
    }
    return "carry";
}

namespace {

// Catmull-Rom through uniformly spaced waypoints with clamped ends.
class Spline {
public:
    Spline(std::vector<double> waypoints, int frames)
        : w_(std::move(waypoints)), frames_(frames) {}

    double at(int frame) const {
        const int n = static_cast<int>(w_.size());
        if (n == 1) return w_[0];
        const double u = static_cast<double>(frame) / std::max(1, frames_ - 1) * (n - 1);
        const int i = std::min(static_cast<int>(u), n - 2);
        const double t = u - i;
        const double p0 = w_[std::max(i - 1, 0)];
        const double p1 = w_[i];
        const double p2 = w_[i + 1];
        const double p3 = w_[std::min(i + 2, n - 1)];
        return 0.5 * ((2.0 * p1) + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t +
                      (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t * t * t);
    }

private:
    std::vector<double> w_;
    int frames_;
};

Spline random_spline(Rng& rng, int frames, double amplitude, int waypoints = 5) {
    std::vector<double> w(waypoints);
    for (double& v : w) v = amplitude * rng.uniform(-1.0, 1.0);
    return Spline(std::move(w), frames);
}

// Joint amplitude groups for the default 21-joint humanoid.
double joint_amplitude(int joint) {
    switch (joint) {
        case 0: return 0.0;                          // pelvis handled by root
        case 1: case 2: case 3: return 0.08;         // spine
        case 4: case 5: case 6: return 0.15;         // neck/head
        case 7: case 11: return 0.45;                // shoulders
        case 8: case 12: return 0.5;                 // elbows
        case 9: case 13: return 0.25;                // wrists
        case 10: case 14: return 0.15;               // hands
        case 15: case 18: return 0.2;                // hips
        case 16: case 19: return 0.3;                // knees
        default: return 0.15;                        // ankles
    }
}

struct HumanMotion {
    std::vector<HumanPose> poses;
};

HumanMotion generate_human(Rng& rng, const BodyProxy& body, int frames) {
    const Skeleton& skel = body.skeleton;
    const int joints = skel.joint_count();

    // Slightly bent base pose keeps arm bone frames well-conditioned.
    std::vector<Quatd> base(joints, Quatd::Identity());
    auto bend = [&](int j, const Vec3& axis, double angle) {
        base[j] = Quatd(Eigen::AngleAxisd(angle, axis.normalized()));
    };
    if (joints == 21) {
        bend(7, Vec3::UnitX(), 0.25);
        bend(11, Vec3::UnitX(), -0.25);
        bend(8, Vec3::UnitX(), 0.55);
        bend(12, Vec3::UnitX(), -0.55);
        bend(16, Vec3::UnitY(), 0.12);
        bend(19, Vec3::UnitY(), 0.12);
    }

    std::vector<Vec3> axes(joints);
    std::vector<Spline> angles;
    angles.reserve(joints);
    for (int j = 0; j < joints; ++j) {
        Vec3 a = rng.normal_vec3();
        if (a.norm() < 1e-9) a = Vec3::UnitX();
        axes[j] = a.normalized();
        angles.push_back(random_spline(rng, frames, joint_amplitude(j)));
    }
    Spline root_x = random_spline(rng, frames, 0.25);
    Spline root_y = random_spline(rng, frames, 0.25);
    Spline root_z = random_spline(rng, frames, 0.04);
    Spline root_yaw = random_spline(rng, frames, 0.4);

    HumanMotion motion;
    motion.poses.reserve(frames);
    for (int f = 0; f < frames; ++f) {
        std::vector<Quatd> rots(joints);
        for (int j = 0; j < joints; ++j) {
            rots[j] = base[j] * Quatd(Eigen::AngleAxisd(angles[j].at(f), axes[j]));
        }
        const Se3Transform root(
            Quatd(Eigen::AngleAxisd(root_yaw.at(f), Vec3::UnitZ())),
            Vec3(root_x.at(f), root_y.at(f), root_z.at(f)));
        motion.poses.push_back(forward_kinematics(skel, rots, root));
    }
    return motion;
}

double mean_penetration(const std::vector<HumanPose>& human,
                        const std::vector<ObjectPose>& object, const ObjectShape& shape,
                        const Skeleton& skel) {
    const int K = std::min<int>(64, shape.point_count());
    const MatX sub = shape.points.topRows(K);
    double total = 0.0;
    for (size_t f = 0; f < human.size(); ++f) {
        const Mat3 r = object[f].rotation().toRotationMatrix();
        MatX cloud = sub * r.transpose();
        cloud.rowwise() += object[f].translation.transpose();
        const VecX sdf = body_sdf_batch(human[f], skel, cloud);
        for (int k = 0; k < sdf.size(); ++k) total += -std::min(sdf[k], 0.0);
    }
    return total / static_cast<double>(human.size());
}

double min_marker_distance(const std::vector<HumanPose>& human,
                           const std::vector<ObjectPose>& object, const ObjectShape& shape,
                           const BodyProxy& body) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t f = 0; f < human.size(); ++f) {
        const MatX markers = marker_positions(human[f], body.skeleton, body.markers);
        const MatX cloud = posed_points(shape, object[f]);
        for (int j = 0; j < markers.rows(); ++j) {
            for (int k = 0; k < cloud.rows(); ++k) {
                best = std::min(best, (Vec3(markers.row(j)) - Vec3(cloud.row(k))).norm());
            }
        }
    }
    return best;
}

struct Attempt {
    std::vector<HumanPose> human;
    std::vector<ObjectPose> object;
    double penalty = 0.0;
};

Attempt generate_attempt(const Scenario& sc, const BodyProxy& body, const ObjectShape& shape,
                         std::uint64_t sub_seed) {
    Rng rng(sub_seed);
    const int frames = sc.duration;
    Attempt attempt;
    attempt.human = generate_human(rng, body, frames).poses;

    const Vec3 grip = shape.points.row(shape.keypoints.empty() ? 0 : shape.keypoints[0]);

    int marker_index = sc.attach_marker;
    if (marker_index < 0) {
        // Palm markers in the default set; fall back to the first marker.
        const int palms[2] = {0, 1};
        marker_index = static_cast<int>(body.markers.size()) > 1 ? palms[rng.uniform_int(0, 1)]
                                                                 : 0;
    }
    std::vector<Vec3> anchor(frames);
    for (int f = 0; f < frames; ++f) {
        anchor[f] = marker_position(attempt.human[f], body.skeleton,
                                    body.markers[marker_index]);
    }

    const Quatd base_rot = normalized_canonical(
        Quatd(rng.normal(), rng.normal(), rng.normal(), rng.normal()));
    attempt.object.resize(frames);

    switch (sc.kind) {
        case ScenarioKind::carry: {
            for (int f = 0; f < frames; ++f) {
                attempt.object[f] = ObjectPose(base_rot, anchor[f] - base_rot * grip);
            }
            break;
        }
        case ScenarioKind::swing: {
            // Constant-rate rotation about a fixed axis through the marker.
            Vec3 axis = rng.normal_vec3();
            if (axis.norm() < 1e-9) axis = Vec3::UnitZ();
            axis.normalize();
            const double omega = rng.uniform(0.5, 2.0) * (rng.uniform() < 0.5 ? 1.0 : -1.0);
            for (int f = 0; f < frames; ++f) {
                const double theta = omega * f / sc.fps;
                const Quatd r = Quatd(Eigen::AngleAxisd(theta, axis)) * base_rot;
                attempt.object[f] = ObjectPose(r, anchor[f] - r * grip);
            }
            break;
        }
        case ScenarioKind::release: {
            const int k_rel =
                static_cast<int>(frames * rng.uniform(0.4, 0.7));
            for (int f = 0; f < frames; ++f) {
                if (f < k_rel) {
                    attempt.object[f] = ObjectPose(base_rot, anchor[f] - base_rot * grip);
                } else {
                    attempt.object[f] = attempt.object[k_rel - 1];
                }
            }
            break;
        }
        case ScenarioKind::push: {
            const int k = std::max(2, static_cast<int>(frames * rng.uniform(0.3, 0.6)));
            for (int f = 0; f < frames && f < k; ++f) {
                attempt.object[f] = ObjectPose(base_rot, anchor[f] - base_rot * grip);
            }
            const Vec3 v = (attempt.object[k - 1].translation -
                            attempt.object[k - 2].translation);
            for (int f = k; f < frames; ++f) {
                attempt.object[f] = ObjectPose(
                    base_rot, attempt.object[k - 1].translation + v * (f - k + 1));
            }
            break;
        }
        case ScenarioKind::no_contact: {
            const Vec3 center = Vec3(attempt.human[0].joints.row(0)) +
                                Vec3(1.6, rng.uniform(-0.4, 0.4), rng.uniform(0.0, 0.4));
            Spline ox = random_spline(rng, frames, 0.15);
            Spline oy = random_spline(rng, frames, 0.15);
            Spline oz = random_spline(rng, frames, 0.1);
            Spline oyaw = random_spline(rng, frames, 0.8);
            for (int f = 0; f < frames; ++f) {
                const Quatd r = Quatd(Eigen::AngleAxisd(oyaw.at(f), Vec3::UnitZ())) * base_rot;
                attempt.object[f] =
                    ObjectPose(r, center + Vec3(ox.at(f), oy.at(f), oz.at(f)));
            }
            break;
        }
    }

    if (sc.kind == ScenarioKind::no_contact) {
        const double d = min_marker_distance(attempt.human, attempt.object, shape, body);
        attempt.penalty = d > 0.2 ? 0.0 : (0.2 - d);
    } else {
        attempt.penalty =
            mean_penetration(attempt.human, attempt.object, shape, body.skeleton);
    }
    return attempt;
}

}  // namespace

HoiSequence generate_synthetic(const Scenario& scenario, const BodyProxy& body,
                               const ObjectShape& shape) {
    validate_shape(shape);
    if (scenario.duration < scenario.past + scenario.future) {
        throw GenerationError("scenario duration " + std::to_string(scenario.duration) +
                              " < H+F = " + std::to_string(scenario.past + scenario.future));
    }
    if (scenario.attach_marker >= static_cast<int>(body.markers.size())) {
        throw GenerationError("attach marker index out of range");
    }

    // Deterministic retries: derived sub-seeds until the scenario's geometric
    // budget is met; otherwise the best attempt wins.
    Attempt best;
    double best_penalty = std::numeric_limits<double>::infinity();
    for (int trial = 0; trial < 8; ++trial) {
        const std::uint64_t sub_seed = scenario.seed * 1000003ull + trial;
        Attempt attempt = generate_attempt(scenario, body, shape, sub_seed);
        if (attempt.penalty < best_penalty) {
            best_penalty = attempt.penalty;
            best = std::move(attempt);
        }
        if (best_penalty <= 1e-4) break;
    }
    return HoiSequence::make(std::move(best.human), std::move(best.object), scenario.fps,
                             scenario.past, scenario.duration - scenario.past);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json matrix_to_json(const MatX& m) {
    json rows = json::array();
    for (int r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

MatX matrix_from_json(const json& rows, int expect_cols, const std::string& field) {
    if (!rows.is_array() || rows.empty()) {
        throw ParseError("field '" + field + "' must be a non-empty array");
    }
    const int r = static_cast<int>(rows.size());
    const int c = static_cast<int>(rows.at(0).size());
    if (expect_cols > 0 && c != expect_cols) {
        throw ParseError("field '" + field + "' needs " + std::to_string(expect_cols) +
                         " columns, got " + std::to_string(c));
    }
    MatX m(r, c);
    for (int i = 0; i < r; ++i) {
        const json& row = rows.at(i);
        if (static_cast<int>(row.size()) != c) {
            throw ParseError("field '" + field + "' has ragged rows (row " + std::to_string(i) +
                             ")");
        }
        for (int j = 0; j < c; ++j) m(i, j) = row.at(j).get<double>();
    }
    return m;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(),
                                                  suffix) == 0;
}

constexpr char kBinaryMagic[8] = {'I', 'D', 'S', 'E', 'Q', 'B', '0', '1'};

}  // namespace

void save_sequence_json(const StoredSequence& stored, const std::string& path) {
    const HoiSequence& seq = stored.seq;
    validate_sequence(seq);
    const int frames = seq.frames();
    const int joints = seq.joint_count();

    MatX human(frames, joints * 3);
    MatX rot6d(frames, 6);
    MatX trans(frames, 3);
    for (int f = 0; f < frames; ++f) {
        for (int j = 0; j < joints; ++j) {
            human.block<1, 3>(f, j * 3) = seq.human[f].joints.row(j);
        }
        rot6d.row(f) = seq.object[f].rot6d().transpose();
        trans.row(f) = seq.object[f].translation.transpose();
    }

    json j;
    j["version"] = kSequenceFormatVersion;
    j["fps"] = seq.fps;
    j["split"] = {{"H", seq.past_frames}, {"F", seq.future_frames}};
    j["human"] = {{"joints", matrix_to_json(human)}};
    j["object"] = {{"rot6d", matrix_to_json(rot6d)}, {"trans", matrix_to_json(trans)}};
    j["shape"] = {{"points", matrix_to_json(stored.shape.points)},
                  {"keypoints", stored.shape.keypoints},
                  {"name", stored.shape.name}};

    std::ofstream out(path);
    if (!out) throw ParseError("cannot write sequence file: " + path);
    out << j.dump() << "\n";
    if (!out) throw ParseError("sequence write failed: " + path);
}

StoredSequence load_sequence_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open sequence file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("sequence parse error in " + path + ": " + e.what());
    }
    try {
        if (!j.contains("version")) throw VersionError("missing version field in " + path);
        const std::string version = j.at("version").get<std::string>();
        if (version != kSequenceFormatVersion) {
            throw VersionError("unsupported sequence version '" + version + "' in " + path);
        }
        const double fps = j.at("fps").get<double>();
        const int past = j.at("split").at("H").get<int>();
        const int future = j.at("split").at("F").get<int>();
        const MatX human = matrix_from_json(j.at("human").at("joints"), -1, "human.joints");
        const MatX rot6d = matrix_from_json(j.at("object").at("rot6d"), 6, "object.rot6d");
        const MatX trans = matrix_from_json(j.at("object").at("trans"), 3, "object.trans");
        if (human.cols() % 3 != 0) throw ParseError("human.joints width must be divisible by 3");
        const int joints = static_cast<int>(human.cols()) / 3;
        const int frames = static_cast<int>(human.rows());
        if (rot6d.rows() != frames || trans.rows() != frames) {
            throw ParseError("human/object frame counts disagree in " + path);
        }

        StoredSequence stored;
        std::vector<HumanPose> poses(frames);
        std::vector<ObjectPose> object(frames);
        for (int f = 0; f < frames; ++f) {
            poses[f].joints.resize(joints, 3);
            for (int jj = 0; jj < joints; ++jj) {
                poses[f].joints.row(jj) = human.block<1, 3>(f, jj * 3);
            }
            object[f] = ObjectPose::from_rot6d(rot6d.row(f).transpose(), trans.row(f));
        }
        stored.seq = HoiSequence::make(std::move(poses), std::move(object), fps, past, future);
        stored.shape.points = matrix_from_json(j.at("shape").at("points"), 3, "shape.points");
        stored.shape.keypoints = j.at("shape").at("keypoints").get<std::vector<int>>();
        stored.shape.name = j.at("shape").value("name", "");
        validate_shape(stored.shape);
        return stored;
    } catch (const json::exception& e) {
        throw ParseError("sequence field error in " + path + ": " + e.what());
    }
}

namespace {

void write_matrix_bin(std::ofstream& out, const MatX& m) {
    const std::uint64_t rows = m.rows(), cols = m.cols();
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * m.size()));
}

MatX read_matrix_bin(std::ifstream& in, const std::string& what) {
    std::uint64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    if (!in || rows > (1u << 24) || cols > (1u << 24)) {
        throw ParseError("binary sequence truncated or corrupt at " + what);
    }
    MatX m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!in) throw ParseError("binary sequence truncated inside " + what);
    return m;
}

}  // namespace

void save_sequence_binary(const StoredSequence& stored, const std::string& path) {
    const HoiSequence& seq = stored.seq;
    validate_sequence(seq);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write sequence file: " + path);
    out.write(kBinaryMagic, sizeof(kBinaryMagic));
    const double fps = seq.fps;
    const std::uint32_t past = seq.past_frames, future = seq.future_frames;
    out.write(reinterpret_cast<const char*>(&fps), sizeof(fps));
    out.write(reinterpret_cast<const char*>(&past), sizeof(past));
    out.write(reinterpret_cast<const char*>(&future), sizeof(future));

    const int frames = seq.frames();
    const int joints = seq.joint_count();
    MatX human(frames, joints * 3);
    MatX rot6d(frames, 6);
    MatX trans(frames, 3);
    for (int f = 0; f < frames; ++f) {
        for (int j = 0; j < joints; ++j) {
            human.block<1, 3>(f, j * 3) = seq.human[f].joints.row(j);
        }
        rot6d.row(f) = seq.object[f].rot6d().transpose();
        trans.row(f) = seq.object[f].translation.transpose();
    }
    write_matrix_bin(out, human);
    write_matrix_bin(out, rot6d);
    write_matrix_bin(out, trans);
    write_matrix_bin(out, stored.shape.points);
    const std::uint64_t nk = stored.shape.keypoints.size();
    out.write(reinterpret_cast<const char*>(&nk), sizeof(nk));
    for (int k : stored.shape.keypoints) {
        const std::int32_t v = k;
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    if (!out) throw ParseError("sequence write failed: " + path);
}

StoredSequence load_sequence_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open sequence file: " + path);
    char magic[sizeof(kBinaryMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kBinaryMagic, sizeof(magic)) != 0) {
        throw VersionError("not a binary interdiff sequence: " + path);
    }
    double fps = 0;
    std::uint32_t past = 0, future = 0;
    in.read(reinterpret_cast<char*>(&fps), sizeof(fps));
    in.read(reinterpret_cast<char*>(&past), sizeof(past));
    in.read(reinterpret_cast<char*>(&future), sizeof(future));
    if (!in) throw ParseError("binary sequence truncated in header: " + path);

    const MatX human = read_matrix_bin(in, "human");
    const MatX rot6d = read_matrix_bin(in, "rot6d");
    const MatX trans = read_matrix_bin(in, "trans");
    StoredSequence stored;
    stored.shape.points = read_matrix_bin(in, "shape.points");
    std::uint64_t nk = 0;
    in.read(reinterpret_cast<char*>(&nk), sizeof(nk));
    if (!in || nk > (1u << 20)) throw ParseError("binary sequence truncated at keypoints");
    for (std::uint64_t i = 0; i < nk; ++i) {
        std::int32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!in) throw ParseError("binary sequence truncated inside keypoints");
        stored.shape.keypoints.push_back(v);
    }

    if (human.cols() % 3 != 0) throw ParseError("human joint width corrupt in " + path);
    const int joints = static_cast<int>(human.cols()) / 3;
    const int frames = static_cast<int>(human.rows());
    if (rot6d.rows() != frames || rot6d.cols() != 6 || trans.rows() != frames) {
        throw ParseError("binary sequence matrix shapes disagree in " + path);
    }
    std::vector<HumanPose> poses(frames);
    std::vector<ObjectPose> object(frames);
    for (int f = 0; f < frames; ++f) {
        poses[f].joints.resize(joints, 3);
        for (int j = 0; j < joints; ++j) {
            poses[f].joints.row(j) = human.block<1, 3>(f, j * 3);
        }
        object[f] = ObjectPose::from_rot6d(rot6d.row(f).transpose(), trans.row(f));
    }
    stored.seq = HoiSequence::make(std::move(poses), std::move(object), fps,
                                   static_cast<int>(past), static_cast<int>(future));
    validate_shape(stored.shape);
    return stored;
}

void save_sequence(const StoredSequence& stored, const std::string& path) {
    if (ends_with(path, ".bin")) {
        save_sequence_binary(stored, path);
    } else {
        save_sequence_json(stored, path);
    }
}

StoredSequence load_sequence(const std::string& path) {
    if (ends_with(path, ".bin")) return load_sequence_binary(path);
    return load_sequence_json(path);
}

BodyProxy load_body_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open body config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("body config parse error: " + std::string(e.what()));
    }
    try {
        BodyProxy body;
        body.skeleton.parents = j.at("parents").get<std::vector<int>>();
        const MatX offsets = matrix_from_json(j.at("rest_offsets"), 3, "rest_offsets");
        for (int i = 0; i < offsets.rows(); ++i) {
            body.skeleton.rest_offsets.emplace_back(offsets.row(i));
        }
        body.skeleton.capsule_radii = j.at("capsule_radii").get<std::vector<double>>();
        body.skeleton.finalize();
        for (const json& m : j.at("markers")) {
            Marker marker;
            marker.bone = m.at("bone").get<int>();
            marker.t = m.at("t").get<double>();
            const auto off = m.at("offset").get<std::vector<double>>();
            if (off.size() != 3) throw ParseError("marker offset must have 3 entries");
            marker.offset = Vec3(off[0], off[1], off[2]);
            body.markers.push_back(marker);
        }
        validate_markers(body.markers, body.skeleton);
        return body;
    } catch (const json::exception& e) {
        throw ParseError("body config field error: " + std::string(e.what()));
    }
}

void save_body_json(const BodyProxy& body, const std::string& path) {
    json j;
    j["parents"] = body.skeleton.parents;
    MatX offsets(body.skeleton.joint_count(), 3);
    for (int i = 0; i < body.skeleton.joint_count(); ++i) {
        offsets.row(i) = body.skeleton.rest_offsets[i].transpose();
    }
    j["rest_offsets"] = matrix_to_json(offsets);
    j["capsule_radii"] = body.skeleton.capsule_radii;
    json markers = json::array();
    for (const Marker& m : body.markers) {
        markers.push_back({{"bone", m.bone},
                           {"t", m.t},
                           {"offset", {m.offset.x(), m.offset.y(), m.offset.z()}}});
    }
    j["markers"] = markers;
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write body config: " + path);
    out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Normalization

MatX NormStats::normalize(const MatX& features) const {
    if (features.cols() != mean.size()) throw ShapeError("normalize: feature width mismatch");
    MatX out = features;
    out.rowwise() -= mean.transpose();
    out.array().rowwise() /= stddev.transpose().array();
    return out;
}

MatX NormStats::denormalize(const MatX& features) const {
    if (features.cols() != mean.size()) throw ShapeError("denormalize: feature width mismatch");
    MatX out = features;
    out.array().rowwise() *= stddev.transpose().array();
    out.rowwise() += mean.transpose();
    return out;
}

NormStats fit_norm_stats(const std::vector<MatX>& corpus_features) {
    if (corpus_features.empty()) throw ShapeError("fit_norm_stats: empty corpus");
    const int width = static_cast<int>(corpus_features.front().cols());
    double count = 0;
    VecX sum = VecX::Zero(width);
    VecX sumsq = VecX::Zero(width);
    for (const MatX& m : corpus_features) {
        if (m.cols() != width) throw ShapeError("fit_norm_stats: inconsistent widths");
        sum += m.colwise().sum().transpose();
        sumsq += m.array().square().colwise().sum().matrix().transpose();
        count += static_cast<double>(m.rows());
    }
    NormStats stats;
    stats.mean = sum / count;
    stats.stddev.resize(width);
    stats.degenerate.assign(width, false);
    for (int c = 0; c < width; ++c) {
        const double var = std::max(0.0, sumsq[c] / count - stats.mean[c] * stats.mean[c]);
        const double sd = std::sqrt(var);
        if (sd < 1e-9) {
            stats.degenerate[c] = true;
            stats.stddev[c] = 1.0;
        } else {
            stats.stddev[c] = sd;
        }
    }
    return stats;
}

std::string NormStats::to_json_string() const {
    json j;
    j["mean"] = std::vector<double>(mean.data(), mean.data() + mean.size());
    j["stddev"] = std::vector<double>(stddev.data(), stddev.data() + stddev.size());
    j["degenerate"] = degenerate;
    return j.dump();
}

NormStats NormStats::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("norm stats parse error: ") + e.what());
    }
    NormStats stats;
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto stddev = j.at("stddev").get<std::vector<double>>();
    stats.mean = Eigen::Map<const VecX>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    stats.stddev =
        Eigen::Map<const VecX>(stddev.data(), static_cast<Eigen::Index>(stddev.size()));
    stats.degenerate = j.at("degenerate").get<std::vector<bool>>();
    return stats;
}

}  // namespace interdiff
