#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "aacn/pose.hpp"

namespace aacn {

// Pose annotation file: one JSON object per line,
//   {"id": string, "keypoints": [[x, y, v] x 14]} with v in {0, 1}.
struct NamedPose {
    std::string id;
    PoseAnnotation pose;
};

void write_pose_jsonl(const std::filesystem::path& path, const std::vector<NamedPose>& poses);
std::vector<NamedPose> read_pose_jsonl(const std::filesystem::path& path);

struct ManifestSample {
    std::string id;
    std::string identity;
    std::string camera;
    std::string split; // "query" or "gallery"
    std::string feature_file;
    std::string pose_file;
    std::vector<std::pair<int, double>> occlusions; // (part, fraction)
};

struct Manifest {
    std::vector<ManifestSample> samples;
};

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

// Occlusion-aware attention maps live next to each feature file:
// "x.feat.bin" -> "x.attn.bin".
std::string attention_file_for(const std::string& feature_file);

} // namespace aacn
