#include "aacn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "aacn/tensor_io.hpp"

namespace aacn {

namespace {

struct NormPoint {
    double x, y;
};

// Canonical standing skeleton in normalized image coordinates.
constexpr std::array<NormPoint, kKeypointCount> kCanonicalPose = {{
    {0.50, 0.05},  // head_top
    {0.32, 0.22},  // r_shoulder
    {0.50, 0.18},  // neck
    {0.68, 0.22},  // l_shoulder
    {0.40, 0.50},  // r_hip
    {0.38, 0.71},  // r_knee
    {0.37, 0.93},  // r_ankle
    {0.60, 0.50},  // l_hip
    {0.62, 0.71},  // l_knee
    {0.63, 0.93},  // l_ankle
    {0.24, 0.37},  // r_elbow
    {0.20, 0.51},  // r_wrist
    {0.76, 0.37},  // l_elbow
    {0.80, 0.51},  // l_wrist
}};

NormPoint rotated(NormPoint v, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {v.x * c - v.y * s, v.x * s + v.y * c};
}

NormPoint minus(NormPoint a, NormPoint b) { return {a.x - b.x, a.y - b.y}; }
NormPoint plus(NormPoint a, NormPoint b) { return {a.x + b.x, a.y + b.y}; }

} // namespace

PoseAnnotation sample_pose(Rng& rng, const GtConfig& cfg) {
    std::array<NormPoint, kKeypointCount> p = kCanonicalPose;

    // Small independent wobble on the trunk anchors.
    for (int k : {kHeadTop, kRShoulder, kNeck, kLShoulder, kRHip, kLHip}) {
        p[static_cast<size_t>(k)].x += rng.uniform(-0.02, 0.02);
        p[static_cast<size_t>(k)].y += rng.uniform(-0.02, 0.02);
    }

    // Limb chains rotate around their (already wobbled) parent joints.
    auto articulate = [&](int parent, int mid, int tip, double a1_max, double a2_max) {
        const double a1 = rng.uniform(-a1_max, a1_max);
        const double a2 = rng.uniform(-a2_max, a2_max);
        const auto pi = static_cast<size_t>(parent);
        const auto mi = static_cast<size_t>(mid);
        const auto ti = static_cast<size_t>(tip);
        const NormPoint upper = minus(kCanonicalPose[mi], kCanonicalPose[pi]);
        const NormPoint lower = minus(kCanonicalPose[ti], kCanonicalPose[mi]);
        p[mi] = plus(p[pi], rotated(upper, a1));
        p[ti] = plus(p[mi], rotated(lower, a1 + a2));
    };
    articulate(kRShoulder, kRElbow, kRWrist, 0.50, 0.60);
    articulate(kLShoulder, kLElbow, kLWrist, 0.50, 0.60);
    articulate(kRHip, kRKnee, kRAnkle, 0.20, 0.25);
    articulate(kLHip, kLKnee, kLAnkle, 0.20, 0.25);

    // Global scale and translation wobble.
    const double scale = rng.uniform(0.85, 1.0);
    const double cx = 0.5 + rng.uniform(-0.04, 0.04);
    const double cy = 0.5 + rng.uniform(-0.02, 0.02);

    PoseAnnotation pose;
    for (int k = 0; k < kKeypointCount; ++k) {
        const auto i = static_cast<size_t>(k);
        const double nx = cx + (p[i].x - 0.5) * scale;
        const double ny = cy + (p[i].y - 0.5) * scale;
        pose.points[i].x = std::clamp(nx * cfg.image_w, 1.0, static_cast<double>(cfg.image_w - 2));
        pose.points[i].y = std::clamp(ny * cfg.image_h, 1.0, static_cast<double>(cfg.image_h - 2));
        pose.visible[i] = true;
    }
    return pose;
}

IdentitySpec sample_identity(const std::string& name, int channels, Rng& rng,
                             const std::vector<IdentitySpec>& existing) {
    if (channels <= 0) throw std::invalid_argument("sample_identity: channel count must be positive");
    const double min_dist = 0.1 * std::sqrt(2.0 * channels);
    for (int attempt = 0; attempt < 100; ++attempt) {
        IdentitySpec spec;
        spec.identity = name;
        spec.channels = channels;
        spec.signatures.resize(static_cast<size_t>(kPartCount) * static_cast<size_t>(channels));
        for (double& v : spec.signatures) v = rng.normal();

        bool separated = true;
        for (const IdentitySpec& other : existing) {
            for (int part = 0; part < kPartCount && separated; ++part) {
                double d2 = 0.0;
                const auto a = spec.signature(part);
                const auto b = other.signature(part);
                for (int c = 0; c < channels; ++c) {
                    const double d = a[static_cast<size_t>(c)] - b[static_cast<size_t>(c)];
                    d2 += d * d;
                }
                if (std::sqrt(d2) < min_dist) separated = false;
            }
            if (!separated) break;
        }
        if (separated) return spec;
    }
    throw std::runtime_error("sample_identity: could not separate signatures after 100 attempts");
}

namespace {

// Region cells of one part occluded by a rectangle cut growing from one side
// of the region's bounding box until it covers >= fraction of the area.
std::vector<char> occlude_region(const AttentionMap& region, double fraction, int side) {
    const int h = region.height, w = region.width;
    std::vector<char> occluded(static_cast<size_t>(h) * static_cast<size_t>(w), 0);
    int area = 0;
    int min_x = w, max_x = -1, min_y = h, max_y = -1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (region.at(y, x) > 0.5) {
                ++area;
                min_x = std::min(min_x, x);
                max_x = std::max(max_x, x);
                min_y = std::min(min_y, y);
                max_y = std::max(max_y, y);
            }
    if (area == 0 || fraction <= 0.0) return occluded;
    const int target = static_cast<int>(std::ceil(fraction * area));

    auto count_cut = [&](int cut) {
        // Cells of the region inside the rectangle clipped at `cut` cells
        // from the chosen side of the bounding box.
        int n = 0;
        for (int y = min_y; y <= max_y; ++y)
            for (int x = min_x; x <= max_x; ++x) {
                if (region.at(y, x) <= 0.5) continue;
                const bool inside = (side == 0 && y - min_y < cut) || (side == 1 && max_y - y < cut) ||
                                    (side == 2 && x - min_x < cut) || (side == 3 && max_x - x < cut);
                if (inside) ++n;
            }
        return n;
    };
    const int span = (side <= 1) ? (max_y - min_y + 1) : (max_x - min_x + 1);
    int cut = 0;
    while (cut < span && count_cut(cut) < target) ++cut;
    for (int y = min_y; y <= max_y; ++y)
        for (int x = min_x; x <= max_x; ++x) {
            if (region.at(y, x) <= 0.5) continue;
            const bool inside = (side == 0 && y - min_y < cut) || (side == 1 && max_y - y < cut) ||
                                (side == 2 && x - min_x < cut) || (side == 3 && max_x - x < cut);
            if (inside) occluded[static_cast<size_t>(y) * static_cast<size_t>(w) + static_cast<size_t>(x)] = 1;
        }
    return occluded;
}

std::vector<int> part_keypoints(int canonical_index) {
    if (canonical_index < kNonRigidPartCount) {
        const NonRigidPartDef& def = nonrigid_parts()[static_cast<size_t>(canonical_index)];
        return {def.endpoint_a, def.endpoint_b};
    }
    return rigid_parts()[static_cast<size_t>(canonical_index - kNonRigidPartCount)].keypoint_set;
}

} // namespace

RenderResult render_scene(const IdentitySpec& id, const SceneSpec& scene, const GtConfig& cfg) {
    cfg.validate();
    if (id.channels <= 0) throw std::invalid_argument("render_scene: identity has no channels");
    Rng rng(scene.seed);

    RenderResult result;
    result.annotated_pose = scene.pose;
    const std::vector<AttentionMap> regions = all_part_gt_maps(scene.pose, cfg);
    const int h = cfg.map_h, w = cfg.map_w;
    const size_t cells = static_cast<size_t>(h) * static_cast<size_t>(w);

    result.occluded_cells.assign(kPartCount, std::vector<char>(cells, 0));
    for (const OcclusionSpec& occ : scene.occlusions) {
        if (occ.part_id < 0 || occ.part_id >= kPartCount)
            throw std::invalid_argument("render_scene: occlusion part id out of range");
        if (occ.fraction < 0.0 || occ.fraction > 1.0)
            throw std::invalid_argument("render_scene: occlusion fraction outside [0, 1]");
        const int side = rng.uniform_int(0, 3);
        result.occluded_cells[static_cast<size_t>(occ.part_id)] =
            occlude_region(regions[static_cast<size_t>(occ.part_id)], occ.fraction, side);
    }

    // Occlusion-aware attention and full-occlusion bookkeeping.
    result.occluded_attention.reserve(kPartCount);
    for (int p = 0; p < kPartCount; ++p) {
        const auto pi = static_cast<size_t>(p);
        AttentionMap m = regions[pi];
        int region_cells = 0, occluded_count = 0;
        for (size_t i = 0; i < cells; ++i) {
            if (m.values[i] > 0.5) ++region_cells;
            if (result.occluded_cells[pi][i]) {
                m.values[i] = 0.0;
                ++occluded_count;
            }
        }
        result.occluded_attention.push_back(std::move(m));
        if (region_cells > 0 && occluded_count == region_cells) {
            for (int k : part_keypoints(p)) result.annotated_pose.visible[static_cast<size_t>(k)] = false;
        }
    }

    // Paint signatures, then clutter over uncovered cells.
    result.features = FeatureMap(id.channels, h, w);
    std::vector<char> covered(cells, 0);
    for (int p = 0; p < kPartCount; ++p) {
        const auto pi = static_cast<size_t>(p);
        const auto sig = id.signature(p);
        for (size_t i = 0; i < cells; ++i) {
            if (regions[pi].values[i] <= 0.5 || result.occluded_cells[pi][i]) continue;
            covered[i] = 1;
            const int y = static_cast<int>(i) / w;
            const int x = static_cast<int>(i) % w;
            for (int c = 0; c < id.channels; ++c) result.features.at(c, y, x) += sig[static_cast<size_t>(c)];
        }
    }
    if (scene.clutter_level > 0.0) {
        for (size_t i = 0; i < cells; ++i) {
            if (covered[i]) continue;
            const int y = static_cast<int>(i) / w;
            const int x = static_cast<int>(i) % w;
            for (int c = 0; c < id.channels; ++c)
                result.features.at(c, y, x) = rng.normal(0.0, scene.clutter_level);
        }
    }
    return result;
}

std::vector<GeneratedSample> generate_samples(const BenchmarkConfig& cfg) {
    if (cfg.n_ids < 2 || cfg.samples_per_id < 2)
        throw std::invalid_argument("generate_samples: need at least 2 identities with 2 samples each");
    if (cfg.occlusion_rate < 0.0 || cfg.occlusion_rate > 1.0)
        throw std::invalid_argument("generate_samples: occlusion rate outside [0, 1]");
    GtConfig base = cfg.gt;
    if (cfg.band_auto) base.sigma_band = 1.0; // placeholder; resolved per pose below
    base.validate();

    Rng master(cfg.seed);

    // Shared per-part base appearance; each identity is base + contrast *
    // offset, with the offsets kept separated by rejection sampling.
    std::vector<double> shared_base(static_cast<size_t>(kPartCount) * static_cast<size_t>(cfg.channels));
    Rng base_rng = master.fork(0xBA5Eu);
    for (double& v : shared_base) v = base_rng.normal();

    std::vector<IdentitySpec> offsets;
    std::vector<IdentitySpec> identities;
    identities.reserve(static_cast<size_t>(cfg.n_ids));
    for (int i = 0; i < cfg.n_ids; ++i) {
        char name[16];
        std::snprintf(name, sizeof(name), "id%04d", i);
        Rng id_rng = master.fork(0x10000u + static_cast<uint64_t>(i));
        offsets.push_back(sample_identity(name, cfg.channels, id_rng, offsets));
        IdentitySpec spec = offsets.back();
        for (size_t k = 0; k < spec.signatures.size(); ++k)
            spec.signatures[k] = shared_base[k] + cfg.signature_contrast * offsets.back().signatures[k];
        identities.push_back(std::move(spec));
    }

    std::vector<GeneratedSample> out;
    out.reserve(static_cast<size_t>(cfg.n_ids) * static_cast<size_t>(cfg.samples_per_id));
    int global_index = 0;
    for (int i = 0; i < cfg.n_ids; ++i) {
        for (int j = 0; j < cfg.samples_per_id; ++j, ++global_index) {
            Rng rng = master.fork((static_cast<uint64_t>(i) << 20) | static_cast<uint64_t>(j));
            GeneratedSample sample;
            sample.gt = cfg.gt;
            SceneSpec scene;
            scene.identity = identities[static_cast<size_t>(i)].identity;
            scene.camera = "c" + std::to_string(j % 2);
            scene.pose = sample_pose(rng, cfg.gt);
            scene.clutter_level = cfg.clutter_level;
            if (cfg.band_auto) sample.gt.sigma_band = default_band(scene.pose, sample.gt);

            // Redraw occlusions that would wipe out nearly the whole pose.
            for (int attempt = 0; attempt < 20; ++attempt) {
                scene.occlusions.clear();
                for (int p = 0; p < kPartCount; ++p) {
                    if (rng.uniform() >= cfg.occlusion_rate) continue;
                    OcclusionSpec occ;
                    occ.part_id = p;
                    occ.fraction = rng.uniform() < 0.4 ? 1.0 : rng.uniform(0.3, 0.9);
                    scene.occlusions.push_back(occ);
                }
                scene.seed = rng.next_u64();
                sample.render = render_scene(identities[static_cast<size_t>(i)], scene, sample.gt);
                if (sample.render.annotated_pose.visible_count() >= 4) break;
            }

            char sid[16];
            std::snprintf(sid, sizeof(sid), "s%05d", global_index);
            sample.meta.id = sid;
            sample.meta.identity = scene.identity;
            sample.meta.camera = scene.camera;
            sample.meta.split = (j == 0) ? "query" : "gallery";
            sample.meta.feature_file = std::string(sid) + ".feat.bin";
            sample.meta.pose_file = "poses.jsonl";
            for (const OcclusionSpec& occ : scene.occlusions)
                sample.meta.occlusions.emplace_back(occ.part_id, occ.fraction);
            out.push_back(std::move(sample));
        }
    }
    return out;
}

Manifest generate_benchmark(const BenchmarkConfig& cfg) {
    if (cfg.out_dir.empty()) throw std::invalid_argument("generate_benchmark: output directory not set");
    std::filesystem::create_directories(cfg.out_dir);
    std::vector<GeneratedSample> samples = generate_samples(cfg);

    Manifest manifest;
    std::vector<NamedPose> poses;
    for (const GeneratedSample& s : samples) {
        write_tensor(cfg.out_dir / s.meta.feature_file, s.render.features.to_tensor());
        Tensor attn({kPartCount, cfg.gt.map_h, cfg.gt.map_w});
        for (int p = 0; p < kPartCount; ++p)
            std::copy(s.render.occluded_attention[static_cast<size_t>(p)].values.begin(),
                      s.render.occluded_attention[static_cast<size_t>(p)].values.end(),
                      attn.data.begin() + static_cast<long>(p) * cfg.gt.map_h * cfg.gt.map_w);
        write_tensor(cfg.out_dir / attention_file_for(s.meta.feature_file), attn);
        poses.push_back({s.meta.id, s.render.annotated_pose});
        manifest.samples.push_back(s.meta);
    }
    write_pose_jsonl(cfg.out_dir / "poses.jsonl", poses);
    write_manifest(cfg.out_dir / "manifest.json", manifest);
    return manifest;
}

} // namespace aacn
