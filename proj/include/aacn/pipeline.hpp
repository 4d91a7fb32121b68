#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aacn/afc.hpp"
#include "aacn/config.hpp"
#include "aacn/dataset_io.hpp"
#include "aacn/matcher.hpp"
#include "aacn/ppa.hpp"
#include "aacn/synth.hpp"

namespace aacn {

// One benchmark sample with its attention maps resolved from the configured
// source (rasterized from the pose, predicted by a PPA checkpoint, or read
// from the generator's occlusion-aware files).
struct DatasetSample {
    ManifestSample meta;
    FeatureMap features;
    PoseAnnotation pose;
    std::vector<AttentionMap> attention;
};

struct AttentionOptions {
    AttentionSource source = AttentionSource::gt;
    GtConfig gt;              // band <= 0 means auto (0.15 x torso diagonal)
    const PpaNet* ppa = nullptr;
};

std::vector<DatasetSample> load_dataset(const std::filesystem::path& manifest_path, const AttentionOptions& options);

enum class FeatureVariant { composed, aligned, global };
FeatureVariant parse_variant(const std::string& s);

// Extracts one feature vector per sample and writes it as a TensorFile of
// shape {D,1,1} under out_dir/<split>/<identity>_<camera>_<id>.bin.
// Deterministic regardless of thread count.
void extract_features(const std::vector<DatasetSample>& samples, const std::filesystem::path& out_dir,
                      FeatureVariant variant, const CompositionHead* head, const GcnNet* gcn, int threads);

// In-memory variant used by the evaluation harness.
std::vector<GalleryEntry> extract_entries(const std::vector<DatasetSample>& samples, FeatureVariant variant,
                                          const CompositionHead* head, const GcnNet* gcn, int threads,
                                          const std::string& split_filter);

// Reads every "<identity>_<camera>_<sample>.bin" feature file in a directory.
std::vector<GalleryEntry> load_feature_dir(const std::filesystem::path& dir);

// Report JSON with exactly the fields {"cmc":{"1","5","10","20"},"mAP","queries"}.
std::string report_to_json(const EvalReport& report);

// Checkpoint loaders that recover the architecture from stored shapes.
PpaNet load_ppa_checkpoint(const std::filesystem::path& path);
CompositionHead load_head_checkpoint(const std::filesystem::path& path);
GcnNet load_gcn_checkpoint(const std::filesystem::path& path);

// Simple blocked parallel loop; fn(index) must be independent per index.
void parallel_for(size_t count, int threads, const std::function<void(size_t)>& fn);

} // namespace aacn
