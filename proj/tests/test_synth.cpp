#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <filesystem>
#include <fstream>

#include "aacn/matcher.hpp"
#include "aacn/pipeline.hpp"
#include "aacn/synth.hpp"
#include "aacn/tensor_io.hpp"

using namespace aacn;

namespace {

GtConfig synth_cfg() {
    GtConfig cfg;
    cfg.map_h = 28;
    cfg.map_w = 12;
    cfg.image_h = 448;
    cfg.image_w = 192;
    cfg.sigma_band = 1.4;
    cfg.sigma_gauss = 2.0;
    return cfg;
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("sampled poses stay in bounds with all keypoints visible") {
    GtConfig cfg = synth_cfg();
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        PoseAnnotation pose = sample_pose(rng, cfg);
        CHECK(pose.visible_count() == kKeypointCount);
        for (const Point& p : pose.points) {
            CHECK(p.x >= 0.0);
            CHECK(p.x <= cfg.image_w - 1);
            CHECK(p.y >= 0.0);
            CHECK(p.y <= cfg.image_h - 1);
        }
    }
}

TEST_CASE("render: clutter 0 and no occlusion leaves non-part cells exactly zero") {
    GtConfig cfg = synth_cfg();
    Rng rng(7);
    IdentitySpec id = sample_identity("id0", 6, rng, {});
    SceneSpec scene;
    scene.identity = "id0";
    scene.camera = "c0";
    scene.pose = sample_pose(rng, cfg);
    scene.clutter_level = 0.0;
    scene.seed = 11;
    RenderResult r = render_scene(id, scene, cfg);

    const std::vector<AttentionMap> regions = all_part_gt_maps(scene.pose, cfg);
    for (int y = 0; y < cfg.map_h; ++y)
        for (int x = 0; x < cfg.map_w; ++x) {
            bool in_any = false;
            for (const AttentionMap& m : regions) in_any = in_any || m.at(y, x) > 0.5;
            if (!in_any)
                for (int c = 0; c < 6; ++c) CHECK(r.features.at(c, y, x) == 0.0);
        }
}

TEST_CASE("render: fully occluding a part removes every trace of its signature") {
    GtConfig cfg = synth_cfg();
    Rng rng(9);
    IdentitySpec id = sample_identity("id0", 4, rng, {});
    SceneSpec scene;
    scene.identity = "id0";
    scene.camera = "c0";
    scene.pose = sample_pose(rng, cfg);
    scene.clutter_level = 0.0;
    scene.seed = 13;
    scene.occlusions = {{3, 1.0}};
    RenderResult r = render_scene(id, scene, cfg);

    // Where only part 3 covered a cell, the render must now be zero; the
    // occlusion-aware map must be all zero; its endpoints must be invisible.
    const std::vector<AttentionMap> regions = all_part_gt_maps(scene.pose, cfg);
    for (int y = 0; y < cfg.map_h; ++y)
        for (int x = 0; x < cfg.map_w; ++x) {
            if (regions[3].at(y, x) <= 0.5) continue;
            bool other = false;
            for (int p = 0; p < kPartCount; ++p)
                if (p != 3 && regions[static_cast<size_t>(p)].at(y, x) > 0.5) other = true;
            if (!other)
                for (int c = 0; c < 4; ++c) CHECK(r.features.at(c, y, x) == 0.0);
        }
    CHECK(visibility_score(r.occluded_attention[3]) == 0.0);
    const NonRigidPartDef& def = nonrigid_parts()[3];
    CHECK_FALSE(r.annotated_pose.visible[static_cast<size_t>(def.endpoint_a)]);
    CHECK_FALSE(r.annotated_pose.visible[static_cast<size_t>(def.endpoint_b)]);
}

TEST_CASE("pooling an isolated part's attention recovers its signature in closed form") {
    GtConfig cfg = synth_cfg();
    Rng rng(11);
    IdentitySpec id = sample_identity("id0", 8, rng, {});

    // Only the endpoints of non-rigid part 3 are visible, so every other
    // part map is zero and no region overlaps it.
    const NonRigidPartDef& def = nonrigid_parts()[3];
    SceneSpec scene;
    scene.identity = "id0";
    scene.camera = "c0";
    scene.pose.points[static_cast<size_t>(def.endpoint_a)] = {40.0, 100.0};
    scene.pose.points[static_cast<size_t>(def.endpoint_b)] = {120.0, 260.0};
    scene.pose.visible[static_cast<size_t>(def.endpoint_a)] = true;
    scene.pose.visible[static_cast<size_t>(def.endpoint_b)] = true;
    scene.clutter_level = 0.0;
    scene.seed = 3;
    RenderResult r = render_scene(id, scene, cfg);

    const AttentionMap gt = nonrigid_gt_map(scene.pose, def, cfg);
    const double area = visibility_score(gt);
    REQUIRE(area > 0.0);
    const std::vector<double> pooled = mask_and_pool(r.features, normalize_attention(gt));
    const double scale = area / static_cast<double>(cfg.map_h * cfg.map_w);
    for (int c = 0; c < 8; ++c) {
        const double expected = id.signature(3)[static_cast<size_t>(c)] * scale;
        CHECK(std::abs(pooled[static_cast<size_t>(c)] - expected) <= 1e-6 * std::max(1.0, std::abs(expected)));
    }
}

TEST_CASE("occlusion-aware visibility decreases monotonically with the occluded fraction") {
    GtConfig cfg = synth_cfg();
    Rng rng(13);
    IdentitySpec id = sample_identity("id0", 3, rng, {});
    SceneSpec scene;
    scene.identity = "id0";
    scene.camera = "c0";
    scene.pose = sample_pose(rng, cfg);
    scene.clutter_level = 0.0;

    // Rigid part 1 (canonical index 12) has a large region on this grid.
    const int part = kNonRigidPartCount + 1;
    double prev = std::numeric_limits<double>::infinity();
    for (double fraction : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        scene.occlusions = fraction == 0.0 ? std::vector<OcclusionSpec>{} : std::vector<OcclusionSpec>{{part, fraction}};
        scene.seed = 17; // same cut direction each time
        RenderResult r = render_scene(id, scene, cfg);
        const double v = visibility_score(r.occluded_attention[static_cast<size_t>(part)]);
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("identity signatures are separated by rejection sampling") {
    Rng rng(15);
    std::vector<IdentitySpec> ids;
    for (int i = 0; i < 10; ++i) ids.push_back(sample_identity("id" + std::to_string(i), 16, rng, ids));
    const double min_dist = 0.1 * std::sqrt(2.0 * 16);
    for (size_t a = 0; a < ids.size(); ++a)
        for (size_t b = a + 1; b < ids.size(); ++b)
            for (int p = 0; p < kPartCount; ++p) {
                double d2 = 0.0;
                for (int c = 0; c < 16; ++c) {
                    const double d = ids[a].signature(p)[static_cast<size_t>(c)] -
                                     ids[b].signature(p)[static_cast<size_t>(c)];
                    d2 += d * d;
                }
                CHECK(std::sqrt(d2) >= min_dist);
            }
}

TEST_CASE("generate_benchmark is byte-identical for identical seeds") {
    namespace fs = std::filesystem;
    const fs::path dir_a = fs::temp_directory_path() / "aacn_bench_a";
    const fs::path dir_b = fs::temp_directory_path() / "aacn_bench_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);

    BenchmarkConfig cfg;
    cfg.n_ids = 3;
    cfg.samples_per_id = 2;
    cfg.occlusion_rate = 0.4;
    cfg.clutter_level = 0.2;
    cfg.channels = 5;
    cfg.seed = 99;
    cfg.gt = synth_cfg();
    cfg.band_auto = true;
    cfg.out_dir = dir_a;
    Manifest ma = generate_benchmark(cfg);
    cfg.out_dir = dir_b;
    Manifest mb = generate_benchmark(cfg);

    REQUIRE(ma.samples.size() == mb.samples.size());
    for (const ManifestSample& s : ma.samples) {
        CHECK(read_bytes(dir_a / s.feature_file) == read_bytes(dir_b / s.feature_file));
        CHECK(read_bytes(dir_a / attention_file_for(s.feature_file)) ==
              read_bytes(dir_b / attention_file_for(s.feature_file)));
    }
    CHECK(read_bytes(dir_a / "manifest.json") == read_bytes(dir_b / "manifest.json"));
    CHECK(read_bytes(dir_a / "poses.jsonl") == read_bytes(dir_b / "poses.jsonl"));
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("occlusion_rate 0 emits no occlusion labels") {
    BenchmarkConfig cfg;
    cfg.n_ids = 3;
    cfg.samples_per_id = 2;
    cfg.occlusion_rate = 0.0;
    cfg.channels = 3;
    cfg.seed = 5;
    cfg.gt = synth_cfg();
    cfg.band_auto = true;
    for (const GeneratedSample& s : generate_samples(cfg)) CHECK(s.meta.occlusions.empty());
}

TEST_CASE("occlusion_rate 0.5 occludes about half of all parts") {
    BenchmarkConfig cfg;
    cfg.n_ids = 25;
    cfg.samples_per_id = 40; // 1000 samples
    cfg.occlusion_rate = 0.5;
    cfg.channels = 2;
    cfg.seed = 31;
    cfg.gt = synth_cfg();
    cfg.band_auto = true;
    long long occluded = 0, total = 0;
    for (const GeneratedSample& s : generate_samples(cfg)) {
        occluded += static_cast<long long>(s.meta.occlusions.size());
        total += kPartCount;
    }
    const double rate = static_cast<double>(occluded) / static_cast<double>(total);
    CHECK(rate >= 0.45);
    CHECK(rate <= 0.55);
}

TEST_CASE("invalid benchmark configs are rejected") {
    BenchmarkConfig cfg;
    cfg.n_ids = 1;
    CHECK_THROWS_AS(generate_samples(cfg), std::invalid_argument);
    cfg.n_ids = 3;
    cfg.samples_per_id = 1;
    CHECK_THROWS_AS(generate_samples(cfg), std::invalid_argument);
}

TEST_CASE("separability: clutter 0, no occlusion gives CMC(1) = 1 on aligned features") {
    BenchmarkConfig cfg; // default grid; fine rasterization keeps areas stable
    cfg.n_ids = 6;
    cfg.samples_per_id = 3;
    cfg.occlusion_rate = 0.0;
    cfg.clutter_level = 0.0;
    cfg.channels = 24;
    cfg.seed = 61;
    std::vector<GeneratedSample> samples = generate_samples(cfg);

    std::vector<GalleryEntry> queries, gallery;
    for (const GeneratedSample& s : samples) {
        GtConfig gt_cfg = s.gt;
        PartFeatureSet parts = align_features(s.render.features, all_part_gt_maps(s.render.annotated_pose, gt_cfg));
        GalleryEntry e{s.meta.id, s.meta.identity, s.meta.camera, parts.aligned};
        (s.meta.split == "query" ? queries : gallery).push_back(std::move(e));
    }
    EvalReport report = evaluate(queries, gallery);
    CHECK(report.query_count == 6);
    CHECK(report.cmc.at(1) == 1.0);
}
