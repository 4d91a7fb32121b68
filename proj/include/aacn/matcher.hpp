#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace aacn {

enum class Metric { euclidean, cosine };
enum class QueryMode { single, multi };

struct GalleryEntry {
    std::string sample_id;
    std::string identity;
    std::string camera;
    std::vector<double> feature;
};

struct EvalReport {
    std::map<int, double> cmc; // ranks 1, 5, 10, 20
    double map_score = 0.0;
    int query_count = 0;
    std::vector<std::string> rejected; // query ids with no valid gallery match
};

inline constexpr int kCmcRanks[] = {1, 5, 10, 20};

// Euclidean by default; cosine distance is 1 - cos similarity (zero-norm
// vectors are treated as dissimilar). Throws on dimension mismatch.
double distance(std::span<const double> a, std::span<const double> b, Metric metric = Metric::euclidean);

struct RankedMatch {
    size_t gallery_index;
    double dist;
};

// Deterministic ordering of score/id pairs: ascending score, ties broken by
// id. This is the single ranking rule every caller shares.
std::vector<size_t> rank_order(const std::vector<double>& scores, const std::vector<std::string>& ids);

// Ranks the (filtered) gallery by ascending distance to the query feature.
// `accept` decides which entries participate; an empty filtered gallery is an
// error.
std::vector<RankedMatch> rank_gallery(std::span<const double> query, const std::vector<GalleryEntry>& gallery,
                                      const std::function<bool(const GalleryEntry&)>& accept,
                                      Metric metric = Metric::euclidean);

struct EvalOptions {
    Metric metric = Metric::euclidean;
    QueryMode mode = QueryMode::single;
    // Standard protocol: gallery entries sharing both identity and camera
    // with the query are excluded. Disable for datasets without cameras.
    bool cross_camera_filter = true;
};

// CMC at ranks 1/5/10/20 plus mAP. Queries whose identity has no admissible
// gallery match are rejected (reported in EvalReport::rejected) and excluded
// from the averages. Multi-query mode averages the features of each
// (identity, camera) query group before matching.
EvalReport evaluate(const std::vector<GalleryEntry>& queries, const std::vector<GalleryEntry>& gallery,
                    const EvalOptions& options = {});

} // namespace aacn
