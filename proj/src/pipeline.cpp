#include "aacn/pipeline.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "aacn/tensor_io.hpp"

namespace aacn {

void parallel_for(size_t count, int threads, const std::function<void(size_t)>& fn) {
    if (threads <= 1 || count <= 1) {
        for (size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    const size_t n_threads = std::min<size_t>(static_cast<size_t>(threads), count);
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (size_t t = 0; t < n_threads; ++t) {
        pool.emplace_back([&, t]() {
            for (size_t i = t; i < count; i += n_threads) fn(i);
        });
    }
    for (std::thread& th : pool) th.join();
}

namespace {

std::vector<AttentionMap> tensor_to_attention(const Tensor& t) {
    if (t.rank() != 3 || t.dim(0) != kPartCount)
        throw std::invalid_argument("attention tensor must have shape [14,H,W]");
    std::vector<AttentionMap> maps;
    maps.reserve(kPartCount);
    for (int p = 0; p < kPartCount; ++p) {
        AttentionMap m(t.dim(1), t.dim(2));
        std::copy(t.data.begin() + static_cast<long>(p) * t.dim(1) * t.dim(2),
                  t.data.begin() + static_cast<long>(p + 1) * t.dim(1) * t.dim(2), m.values.begin());
        maps.push_back(std::move(m));
    }
    return maps;
}

std::vector<AttentionMap> ppa_part_maps(const PpaNet& net, const FeatureMap& features) {
    auto outs = net.predict(features.to_tensor());
    std::vector<AttentionMap> maps = std::move(outs.second.nonrigid);
    for (AttentionMap& m : outs.second.rigid) maps.push_back(std::move(m));
    return maps;
}

} // namespace

std::vector<DatasetSample> load_dataset(const std::filesystem::path& manifest_path,
                                        const AttentionOptions& options) {
    const Manifest manifest = read_manifest(manifest_path);
    const std::filesystem::path base = manifest_path.parent_path();

    // Pose files are shared JSONL documents; cache them by path.
    std::map<std::string, std::map<std::string, PoseAnnotation>> pose_cache;
    auto pose_for = [&](const ManifestSample& s) -> PoseAnnotation {
        auto [it, inserted] = pose_cache.try_emplace(s.pose_file);
        if (inserted) {
            for (NamedPose& np : read_pose_jsonl(base / s.pose_file)) it->second.emplace(np.id, np.pose);
        }
        auto found = it->second.find(s.id);
        if (found == it->second.end())
            throw std::invalid_argument("pose file '" + s.pose_file + "' has no entry for sample '" + s.id + "'");
        return found->second;
    };

    std::vector<DatasetSample> samples;
    samples.reserve(manifest.samples.size());
    for (const ManifestSample& meta : manifest.samples) {
        DatasetSample sample;
        sample.meta = meta;
        sample.features = FeatureMap::from_tensor(read_tensor(base / meta.feature_file));
        sample.pose = pose_for(meta);
        switch (options.source) {
        case AttentionSource::gt: {
            GtConfig cfg = options.gt;
            if (cfg.sigma_band <= 0.0) cfg.sigma_band = default_band(sample.pose, cfg);
            sample.attention = all_part_gt_maps(sample.pose, cfg);
            break;
        }
        case AttentionSource::ppa: {
            if (!options.ppa) throw std::invalid_argument("attention source 'ppa' requires a PPA checkpoint");
            sample.attention = ppa_part_maps(*options.ppa, sample.features);
            break;
        }
        case AttentionSource::file: {
            sample.attention = tensor_to_attention(read_tensor(base / attention_file_for(meta.feature_file)));
            break;
        }
        }
        if (static_cast<int>(sample.attention.size()) != kPartCount ||
            sample.attention[0].height != sample.features.height ||
            sample.attention[0].width != sample.features.width)
            throw std::invalid_argument("sample '" + meta.id + "': attention grid does not match feature grid");
        samples.push_back(std::move(sample));
    }
    return samples;
}

FeatureVariant parse_variant(const std::string& s) {
    if (s == "composed") return FeatureVariant::composed;
    if (s == "aligned") return FeatureVariant::aligned;
    if (s == "global") return FeatureVariant::global;
    throw std::invalid_argument("variant must be composed|aligned|global, got '" + s + "'");
}

namespace {

std::vector<double> feature_for(const DatasetSample& sample, FeatureVariant variant, const CompositionHead* head,
                                const GcnNet* gcn) {
    const FeatureMap* context = &sample.features;
    FeatureMap transformed;
    if (gcn) {
        transformed = gcn->apply(sample.features);
        context = &transformed;
    }
    switch (variant) {
    case FeatureVariant::global:
        return global_pooled(*context);
    case FeatureVariant::aligned:
        return align_features(*context, sample.attention).aligned;
    case FeatureVariant::composed: {
        if (!head) throw std::invalid_argument("composed variant requires a composition head checkpoint");
        return compose(align_features(*context, sample.attention), *head);
    }
    }
    throw std::logic_error("unreachable");
}

} // namespace

std::vector<GalleryEntry> extract_entries(const std::vector<DatasetSample>& samples, FeatureVariant variant,
                                          const CompositionHead* head, const GcnNet* gcn, int threads,
                                          const std::string& split_filter) {
    std::vector<size_t> selected;
    for (size_t i = 0; i < samples.size(); ++i)
        if (split_filter.empty() || samples[i].meta.split == split_filter) selected.push_back(i);

    std::vector<GalleryEntry> entries(selected.size());
    parallel_for(selected.size(), threads, [&](size_t i) {
        const DatasetSample& s = samples[selected[i]];
        entries[i] = GalleryEntry{s.meta.id, s.meta.identity, s.meta.camera,
                                  feature_for(s, variant, head, gcn)};
    });
    return entries;
}

void extract_features(const std::vector<DatasetSample>& samples, const std::filesystem::path& out_dir,
                      FeatureVariant variant, const CompositionHead* head, const GcnNet* gcn, int threads) {
    std::filesystem::create_directories(out_dir / "query");
    std::filesystem::create_directories(out_dir / "gallery");
    parallel_for(samples.size(), threads, [&](size_t i) {
        const DatasetSample& s = samples[i];
        const std::vector<double> feature = feature_for(s, variant, head, gcn);
        Tensor t = Tensor::from({static_cast<int>(feature.size()), 1, 1}, feature);
        const std::string name = s.meta.identity + "_" + s.meta.camera + "_" + s.meta.id + ".bin";
        const std::string split = s.meta.split == "query" ? "query" : "gallery";
        write_tensor(out_dir / split / name, t);
    });
}

std::vector<GalleryEntry> load_feature_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw std::invalid_argument("feature directory '" + dir.string() + "' does not exist");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".bin") files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<GalleryEntry> entries;
    entries.reserve(files.size());
    for (const auto& file : files) {
        const std::string stem = file.stem().string();
        const size_t first = stem.find('_');
        const size_t second = first == std::string::npos ? std::string::npos : stem.find('_', first + 1);
        if (first == std::string::npos || second == std::string::npos || stem.find('_', second + 1) != std::string::npos)
            throw std::invalid_argument("feature file '" + file.string() +
                                        "' is not named <identity>_<camera>_<sample>.bin");
        GalleryEntry e;
        e.identity = stem.substr(0, first);
        e.camera = stem.substr(first + 1, second - first - 1);
        e.sample_id = stem.substr(second + 1);
        Tensor t = read_tensor(file);
        e.feature = std::move(t.data);
        entries.push_back(std::move(e));
    }
    return entries;
}

std::string report_to_json(const EvalReport& report) {
    nlohmann::ordered_json root;
    nlohmann::ordered_json cmc;
    for (int r : kCmcRanks) cmc[std::to_string(r)] = report.cmc.at(r);
    root["cmc"] = std::move(cmc);
    root["mAP"] = report.map_score;
    root["queries"] = report.query_count;
    return root.dump(2);
}

PpaNet load_ppa_checkpoint(const std::filesystem::path& path) {
    const NamedTensors named = read_checkpoint(path);
    const bool with_keypoints = !named.empty() && named[0].first == "s1.k.c1.w";
    if (named.empty() || (!with_keypoints && named[0].first != "s1.n.c1.w") || named[0].second.rank() != 4)
        throw IoError(IoErrorCode::malformed, "'" + path.string() + "' is not a PPA checkpoint");
    const int hidden = named[0].second.dim(0);
    const int in_channels = named[0].second.dim(1);
    PpaNet net(in_channels, /*seed=*/0, hidden, with_keypoints);
    load_parameters(path, net.parameters());
    return net;
}

CompositionHead load_head_checkpoint(const std::filesystem::path& path) {
    const NamedTensors named = read_checkpoint(path);
    if (named.empty() || named[0].first != "weight_fc.w" || named[0].second.rank() != 2)
        throw IoError(IoErrorCode::malformed, "'" + path.string() + "' is not a composition head checkpoint");
    const int parts = named[0].second.dim(0);
    if (parts <= 0 || named[0].second.dim(1) % parts != 0)
        throw IoError(IoErrorCode::malformed, "composition head shapes are inconsistent in '" + path.string() + "'");
    const int fdim = named[0].second.dim(1) / parts - 1;
    CompositionHead head(parts, fdim, /*seed=*/0);
    load_parameters(path, head.parameters());
    return head;
}

GcnNet load_gcn_checkpoint(const std::filesystem::path& path) {
    const NamedTensors named = read_checkpoint(path);
    if (named.size() < 6 || named[0].first != "gcn.c1.w" || named[0].second.rank() != 4)
        throw IoError(IoErrorCode::malformed, "'" + path.string() + "' is not a context network checkpoint");
    const int hidden = named[0].second.dim(0);
    const int in_channels = named[0].second.dim(1);
    const int out_channels = named[4].second.dim(0);
    GcnNet gcn(in_channels, hidden, out_channels, /*seed=*/0);
    load_parameters(path, gcn.parameters());
    return gcn;
}

} // namespace aacn
