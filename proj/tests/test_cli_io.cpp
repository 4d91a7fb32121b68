#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "aacn/config.hpp"
#include "aacn/dataset_io.hpp"
#include "aacn/pipeline.hpp"
#include "aacn/rng.hpp"
#include "aacn/tensor_io.hpp"

using namespace aacn;

namespace {

namespace fs = std::filesystem;

fs::path tmp_file(const std::string& name) { return fs::temp_directory_path() / name; }

// f32-representable random values so write -> read is bitwise.
Tensor random_f32_tensor(const std::vector<int>& shape, Rng& rng) {
    Tensor t(shape);
    for (double& v : t.data) v = static_cast<double>(static_cast<float>(rng.uniform(-10.0, 10.0)));
    return t;
}

} // namespace

TEST_CASE("tensor file round-trips bitwise") {
    Rng rng(1);
    Tensor t = random_f32_tensor({2, 3}, rng);
    const fs::path path = tmp_file("aacn_t1.bin");
    write_tensor(path, t);
    Tensor back = read_tensor(path);
    CHECK(back.shape == t.shape);
    CHECK(back.data == t.data);
    fs::remove(path);
}

TEST_CASE("tensor file validates magic, version and payload length") {
    Rng rng(2);
    const fs::path path = tmp_file("aacn_t2.bin");
    write_tensor(path, random_f32_tensor({4, 4}, rng));

    SUBCASE("bad magic") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXX", 4);
        f.close();
        try {
            read_tensor(path);
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(e.code == IoErrorCode::bad_magic);
        }
    }

    SUBCASE("version mismatch") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        const char v[4] = {9, 0, 0, 0};
        f.write(v, 4);
        f.close();
        try {
            read_tensor(path);
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(e.code == IoErrorCode::version_mismatch);
        }
    }

    SUBCASE("payload one float short") {
        const auto size = fs::file_size(path);
        fs::resize_file(path, size - 4);
        try {
            read_tensor(path);
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(e.code == IoErrorCode::truncated);
        }
    }

    fs::remove(path);
}

TEST_CASE("rank-1 and empty-dimension tensors round-trip") {
    Rng rng(3);
    const fs::path path = tmp_file("aacn_t3.bin");
    Tensor rank1 = random_f32_tensor({7}, rng);
    write_tensor(path, rank1);
    CHECK(read_tensor(path).data == rank1.data);

    Tensor empty({3, 0, 5});
    write_tensor(path, empty);
    Tensor back = read_tensor(path);
    CHECK(back.shape == std::vector<int>{3, 0, 5});
    CHECK(back.data.empty());
    fs::remove(path);
}

TEST_CASE("checkpoints round-trip named parameters in order") {
    Rng rng(4);
    const fs::path path = tmp_file("aacn_ckpt.bin");
    NamedTensors params;
    params.emplace_back("layer.w", random_f32_tensor({3, 2}, rng));
    params.emplace_back("layer.b", random_f32_tensor({3}, rng));
    write_checkpoint(path, params);
    NamedTensors back = read_checkpoint(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].first == "layer.w");
    CHECK(back[0].second.data == params[0].second.data);
    CHECK(back[1].first == "layer.b");
    CHECK(back[1].second.shape == params[1].second.shape);

    // Live Parameter round-trip with name/shape validation.
    Parameter w("layer.w", Tensor({3, 2})), b("layer.b", Tensor({3}));
    load_parameters(path, {&w, &b});
    CHECK(w.value.data == params[0].second.data);
    Parameter wrong("other.w", Tensor({3, 2}));
    CHECK_THROWS_AS(load_parameters(path, {&wrong, &b}), IoError);
    fs::remove(path);
}

TEST_CASE("pose JSONL round-trips annotations") {
    const fs::path path = tmp_file("aacn_poses.jsonl");
    std::vector<NamedPose> poses(2);
    poses[0].id = "s0";
    poses[1].id = "s1";
    Rng rng(5);
    for (NamedPose& np : poses)
        for (int i = 0; i < kKeypointCount; ++i) {
            const auto idx = static_cast<size_t>(i);
            np.pose.points[idx] = {rng.uniform(0.0, 100.0), rng.uniform(0.0, 200.0)};
            np.pose.visible[idx] = rng.uniform() < 0.8;
        }
    write_pose_jsonl(path, poses);
    std::vector<NamedPose> back = read_pose_jsonl(path);
    REQUIRE(back.size() == 2);
    for (size_t s = 0; s < 2; ++s) {
        CHECK(back[s].id == poses[s].id);
        for (int i = 0; i < kKeypointCount; ++i) {
            const auto idx = static_cast<size_t>(i);
            CHECK(back[s].pose.visible[idx] == poses[s].pose.visible[idx]);
            CHECK(back[s].pose.points[idx].x == doctest::Approx(poses[s].pose.points[idx].x));
        }
    }

    std::ofstream(path) << "{\"id\": \"x\", \"keypoints\": [[1,2,3]]}\n";
    CHECK_THROWS_AS(read_pose_jsonl(path), IoError);
    fs::remove(path);
}

TEST_CASE("manifest round-trips samples and occlusions") {
    const fs::path path = tmp_file("aacn_manifest.json");
    Manifest m;
    ManifestSample s;
    s.id = "s00000";
    s.identity = "id0001";
    s.camera = "c1";
    s.split = "gallery";
    s.feature_file = "s00000.feat.bin";
    s.pose_file = "poses.jsonl";
    s.occlusions = {{3, 1.0}, {12, 0.5}};
    m.samples.push_back(s);
    write_manifest(path, m);
    Manifest back = read_manifest(path);
    REQUIRE(back.samples.size() == 1);
    CHECK(back.samples[0].identity == "id0001");
    CHECK(back.samples[0].occlusions.size() == 2);
    CHECK(back.samples[0].occlusions[1].first == 12);
    CHECK(attention_file_for(back.samples[0].feature_file) == "s00000.attn.bin");
    fs::remove(path);
}

TEST_CASE("config parsing: defaults, overrides, unknown keys named in errors") {
    RunConfig cfg;
    CHECK(cfg.grid_h == 14);
    CHECK(cfg.grid_w == 6);
    CHECK(cfg.band_auto());

    cfg.apply("grid", "28x12");
    CHECK(cfg.grid_h == 28);
    cfg.apply("band", "2.5");
    CHECK_FALSE(cfg.band_auto());
    cfg.apply("band", "auto");
    CHECK(cfg.band_auto());
    cfg.apply("metric", "cosine");
    CHECK(cfg.metric == Metric::cosine);

    try {
        cfg.apply("granularity", "3");
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("granularity") != std::string::npos);
    }
    try {
        cfg.apply("mu1", "fast");
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("mu1") != std::string::npos);
    }
}

TEST_CASE("config files: key=value and JSON forms") {
    const fs::path kv = tmp_file("aacn_cfg.txt");
    std::ofstream(kv) << "# comment\ngrid=8x4\nmu1=0.5\nseed=42\n";
    RunConfig cfg;
    cfg.load_file(kv);
    CHECK(cfg.grid_h == 8);
    CHECK(cfg.mu1 == 0.5);
    CHECK(cfg.seed == 42);

    const fs::path js = tmp_file("aacn_cfg.json");
    std::ofstream(js) << "{\"grid\": \"6x3\", \"lr\": 0.1, \"attn\": \"file\"}";
    cfg.load_file(js);
    CHECK(cfg.grid_w == 3);
    CHECK(cfg.lr == 0.1);
    CHECK(cfg.attention == AttentionSource::file);

    std::ofstream(js) << "{\"grib\": \"6x3\"}";
    try {
        cfg.load_file(js);
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("grib") != std::string::npos);
    }
    fs::remove(kv);
    fs::remove(js);
}

TEST_CASE("report JSON carries exactly the cmc/mAP/queries fields") {
    EvalReport r;
    r.cmc = {{1, 0.5}, {5, 0.75}, {10, 0.75}, {20, 1.0}};
    r.map_score = 0.625;
    r.query_count = 4;
    const std::string json = report_to_json(r);
    CHECK(json.find("\"cmc\"") != std::string::npos);
    CHECK(json.find("\"1\": 0.5") != std::string::npos);
    CHECK(json.find("\"20\": 1.0") != std::string::npos);
    CHECK(json.find("\"mAP\": 0.625") != std::string::npos);
    CHECK(json.find("\"queries\": 4") != std::string::npos);
    CHECK(json.find("rejected") == std::string::npos);
}

TEST_CASE("PGM export writes the expected header and bytes") {
    const fs::path path = tmp_file("aacn_map.pgm");
    AttentionMap m(2, 3);
    m.values = {0.0, 0.5, 1.0, 0.25, 2.0 /*clamped*/, -1.0 /*clamped*/};
    write_pgm(path, m);
    std::ifstream is(path, std::ios::binary);
    std::string header;
    std::getline(is, header);
    CHECK(header == "P5");
    int w = 0, h = 0, maxv = 0;
    is >> w >> h >> maxv;
    CHECK(w == 3);
    CHECK(h == 2);
    CHECK(maxv == 255);
    is.get(); // single whitespace after maxval
    unsigned char bytes[6];
    is.read(reinterpret_cast<char*>(bytes), 6);
    CHECK(bytes[0] == 0);
    CHECK(bytes[1] == 128);
    CHECK(bytes[2] == 255);
    CHECK(bytes[3] == 64);
    CHECK(bytes[4] == 255);
    CHECK(bytes[5] == 0);
    fs::remove(path);
}
