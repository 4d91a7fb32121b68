#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aacn/afc.hpp"
#include "aacn/attention.hpp"
#include "aacn/dataset_io.hpp"
#include "aacn/pose.hpp"
#include "aacn/rng.hpp"

namespace aacn {

// One synthetic person: a constant signature vector per body part. Painted
// over the part's region, this makes pooled features predictable in closed
// form.
struct IdentitySpec {
    std::string identity;
    int channels = 0;
    std::vector<double> signatures; // kPartCount * channels, part-major

    std::span<const double> signature(int part) const {
        return {signatures.data() + static_cast<size_t>(part) * static_cast<size_t>(channels),
                static_cast<size_t>(channels)};
    }
};

struct OcclusionSpec {
    int part_id = 0;     // canonical part index in [0, 13]
    double fraction = 0; // occluded share of the part's region area
};

struct SceneSpec {
    std::string identity;
    std::string camera;
    PoseAnnotation pose; // image space
    std::vector<OcclusionSpec> occlusions;
    double clutter_level = 0.0;
    uint64_t seed = 0;
};

struct RenderResult {
    FeatureMap features;
    PoseAnnotation annotated_pose;              // keypoints of fully occluded parts marked invisible
    std::vector<AttentionMap> occluded_attention; // 14 GT maps with occluded cells zeroed
    std::vector<std::vector<char>> occluded_cells; // per part, 1 where the region cell is occluded
};

// Draws a pose by jittering a canonical standing skeleton: bounded rotations
// of limb segments around their parent joints plus a global scale/translation
// wobble. Keypoints stay inside the image.
PoseAnnotation sample_pose(Rng& rng, const GtConfig& cfg);

// Draws part signatures; redraws until the new identity is separated from
// every existing one (minimum per-part signature distance).
IdentitySpec sample_identity(const std::string& name, int channels, Rng& rng,
                             const std::vector<IdentitySpec>& existing);

// Paints each part's signature over its GT region, overwrites the occluded
// portion of listed parts with clutter, and fills cells outside all part
// regions with clutter noise. Deterministic in SceneSpec::seed.
RenderResult render_scene(const IdentitySpec& id, const SceneSpec& scene, const GtConfig& cfg);

struct BenchmarkConfig {
    int n_ids = 10;
    int samples_per_id = 4;
    double occlusion_rate = 0.0;
    double clutter_level = 0.0;
    uint64_t seed = 1;
    int channels = 256;
    // Identities share a per-part base appearance and differ by an offset of
    // this relative scale. Small contrast makes matching sensitive to
    // occlusion and clutter instead of trivially separable.
    double signature_contrast = 0.35;
    GtConfig gt{2.0, 2.0, 24, 56, 192, 448}; // band resolved per pose when band_auto
    bool band_auto = true;
    std::filesystem::path out_dir;
};

// Writes feature files, occlusion-aware attention files, poses.jsonl and
// manifest.json under out_dir; the first sample of each identity is the
// query split. Byte-identical for identical configs.
Manifest generate_benchmark(const BenchmarkConfig& cfg);

// In-memory variant used by tests and the acceptance suite.
struct GeneratedSample {
    ManifestSample meta;
    RenderResult render;
    GtConfig gt; // band already resolved for this pose
};
std::vector<GeneratedSample> generate_samples(const BenchmarkConfig& cfg);

} // namespace aacn
