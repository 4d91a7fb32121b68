#include "aacn/dataset_io.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "aacn/tensor_io.hpp"

namespace aacn {

using nlohmann::ordered_json;

void write_pose_jsonl(const std::filesystem::path& path, const std::vector<NamedPose>& poses) {
    std::ofstream os(path);
    if (!os) throw IoError(IoErrorCode::open_failed, "cannot open '" + path.string() + "' for writing");
    for (const NamedPose& np : poses) {
        ordered_json obj;
        obj["id"] = np.id;
        ordered_json kps = ordered_json::array();
        for (int i = 0; i < kKeypointCount; ++i) {
            const auto idx = static_cast<size_t>(i);
            kps.push_back({np.pose.points[idx].x, np.pose.points[idx].y, np.pose.visible[idx] ? 1 : 0});
        }
        obj["keypoints"] = std::move(kps);
        os << obj.dump() << "\n";
    }
    if (!os) throw IoError(IoErrorCode::open_failed, "write failed for '" + path.string() + "'");
}

std::vector<NamedPose> read_pose_jsonl(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError(IoErrorCode::open_failed, "cannot open '" + path.string() + "'");
    std::vector<NamedPose> out;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json obj;
        try {
            obj = ordered_json::parse(line);
        } catch (const ordered_json::parse_error& e) {
            throw IoError(IoErrorCode::malformed,
                          path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        NamedPose np;
        if (!obj.contains("id") || !obj["id"].is_string())
            throw IoError(IoErrorCode::malformed, path.string() + ":" + std::to_string(line_no) + ": missing id");
        np.id = obj["id"].get<std::string>();
        if (!obj.contains("keypoints") || !obj["keypoints"].is_array() ||
            obj["keypoints"].size() != kKeypointCount)
            throw IoError(IoErrorCode::malformed, path.string() + ":" + std::to_string(line_no) +
                                                      ": keypoints must be an array of 14 [x,y,v] triples");
        for (int i = 0; i < kKeypointCount; ++i) {
            const auto& kp = obj["keypoints"][static_cast<size_t>(i)];
            if (!kp.is_array() || kp.size() != 3)
                throw IoError(IoErrorCode::malformed,
                              path.string() + ":" + std::to_string(line_no) + ": keypoint " + std::to_string(i) +
                                  " is not an [x,y,v] triple");
            const auto idx = static_cast<size_t>(i);
            np.pose.points[idx].x = kp[0].get<double>();
            np.pose.points[idx].y = kp[1].get<double>();
            const int v = kp[2].get<int>();
            if (v != 0 && v != 1)
                throw IoError(IoErrorCode::malformed, path.string() + ":" + std::to_string(line_no) +
                                                          ": visibility flag must be 0 or 1");
            np.pose.visible[idx] = v == 1;
        }
        out.push_back(std::move(np));
    }
    return out;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    ordered_json root;
    ordered_json samples = ordered_json::array();
    for (const ManifestSample& s : manifest.samples) {
        ordered_json obj;
        obj["id"] = s.id;
        obj["identity"] = s.identity;
        obj["camera"] = s.camera;
        obj["split"] = s.split;
        obj["feature_file"] = s.feature_file;
        obj["pose_file"] = s.pose_file;
        ordered_json occ = ordered_json::array();
        for (const auto& [part, frac] : s.occlusions) occ.push_back({part, frac});
        obj["occlusions"] = std::move(occ);
        samples.push_back(std::move(obj));
    }
    root["samples"] = std::move(samples);
    std::ofstream os(path);
    if (!os) throw IoError(IoErrorCode::open_failed, "cannot open '" + path.string() + "' for writing");
    os << root.dump(2) << "\n";
    if (!os) throw IoError(IoErrorCode::open_failed, "write failed for '" + path.string() + "'");
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError(IoErrorCode::open_failed, "cannot open '" + path.string() + "'");
    ordered_json root;
    try {
        is >> root;
    } catch (const ordered_json::parse_error& e) {
        throw IoError(IoErrorCode::malformed, path.string() + ": " + e.what());
    }
    if (!root.contains("samples") || !root["samples"].is_array())
        throw IoError(IoErrorCode::malformed, path.string() + ": missing samples array");
    Manifest manifest;
    for (const auto& obj : root["samples"]) {
        ManifestSample s;
        for (const char* key : {"id", "identity", "camera", "split", "feature_file", "pose_file"}) {
            if (!obj.contains(key) || !obj[key].is_string())
                throw IoError(IoErrorCode::malformed, path.string() + ": sample missing string field '" +
                                                          std::string(key) + "'");
        }
        s.id = obj["id"].get<std::string>();
        s.identity = obj["identity"].get<std::string>();
        s.camera = obj["camera"].get<std::string>();
        s.split = obj["split"].get<std::string>();
        s.feature_file = obj["feature_file"].get<std::string>();
        s.pose_file = obj["pose_file"].get<std::string>();
        if (obj.contains("occlusions")) {
            for (const auto& occ : obj["occlusions"]) {
                if (!occ.is_array() || occ.size() != 2)
                    throw IoError(IoErrorCode::malformed, path.string() + ": occlusion entries must be [part, fraction]");
                s.occlusions.emplace_back(occ[0].get<int>(), occ[1].get<double>());
            }
        }
        manifest.samples.push_back(std::move(s));
    }
    return manifest;
}

std::string attention_file_for(const std::string& feature_file) {
    const std::string suffix = ".feat.bin";
    if (feature_file.size() >= suffix.size() &&
        feature_file.compare(feature_file.size() - suffix.size(), suffix.size(), suffix) == 0)
        return feature_file.substr(0, feature_file.size() - suffix.size()) + ".attn.bin";
    return feature_file + ".attn.bin";
}

} // namespace aacn
