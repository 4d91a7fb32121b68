#include "aacn/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace aacn {

double distance(std::span<const double> a, std::span<const double> b, Metric metric) {
    if (a.size() != b.size())
        throw std::invalid_argument("distance: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
    if (metric == Metric::euclidean) {
        double acc = 0.0;
        for (size_t i = 0; i < a.size(); ++i) {
            const double d = a[i] - b[i];
            acc += d * d;
        }
        return std::sqrt(acc);
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 1.0;
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<size_t> rank_order(const std::vector<double>& scores, const std::vector<std::string>& ids) {
    if (scores.size() != ids.size()) throw std::invalid_argument("rank_order: score/id length mismatch");
    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t l, size_t r) {
        if (scores[l] != scores[r]) return scores[l] < scores[r];
        return ids[l] < ids[r];
    });
    return order;
}

std::vector<RankedMatch> rank_gallery(std::span<const double> query, const std::vector<GalleryEntry>& gallery,
                                      const std::function<bool(const GalleryEntry&)>& accept, Metric metric) {
    std::vector<double> scores;
    std::vector<std::string> ids;
    std::vector<size_t> indices;
    for (size_t i = 0; i < gallery.size(); ++i) {
        if (accept && !accept(gallery[i])) continue;
        scores.push_back(distance(query, gallery[i].feature, metric));
        ids.push_back(gallery[i].sample_id);
        indices.push_back(i);
    }
    if (indices.empty()) throw std::invalid_argument("rank_gallery: no gallery entries pass the filter");
    std::vector<RankedMatch> out;
    out.reserve(indices.size());
    for (size_t pos : rank_order(scores, ids)) out.push_back({indices[pos], scores[pos]});
    return out;
}

namespace {

// Aggregates multi-query groups: one averaged feature per (identity, camera),
// keeping the lexicographically smallest member id for tie-breaking.
std::vector<GalleryEntry> aggregate_multi_query(const std::vector<GalleryEntry>& queries) {
    std::map<std::pair<std::string, std::string>, std::vector<size_t>> groups;
    for (size_t i = 0; i < queries.size(); ++i) groups[{queries[i].identity, queries[i].camera}].push_back(i);
    std::vector<GalleryEntry> out;
    out.reserve(groups.size());
    for (const auto& [key, members] : groups) {
        GalleryEntry agg;
        agg.identity = key.first;
        agg.camera = key.second;
        agg.sample_id = queries[members[0]].sample_id;
        agg.feature.assign(queries[members[0]].feature.size(), 0.0);
        for (size_t m : members) {
            const auto& f = queries[m].feature;
            if (f.size() != agg.feature.size())
                throw std::invalid_argument("evaluate: feature dimension mismatch inside multi-query group");
            agg.sample_id = std::min(agg.sample_id, queries[m].sample_id);
            for (size_t j = 0; j < f.size(); ++j) agg.feature[j] += f[j];
        }
        const double inv = 1.0 / static_cast<double>(members.size());
        for (double& v : agg.feature) v *= inv;
        out.push_back(std::move(agg));
    }
    return out;
}

} // namespace

EvalReport evaluate(const std::vector<GalleryEntry>& queries, const std::vector<GalleryEntry>& gallery,
                    const EvalOptions& options) {
    if (gallery.empty()) throw std::invalid_argument("evaluate: empty gallery");
    std::vector<GalleryEntry> effective_queries =
        options.mode == QueryMode::multi ? aggregate_multi_query(queries) : queries;

    EvalReport report;
    for (int r : kCmcRanks) report.cmc[r] = 0.0;

    // Per-query stats are collected first and reduced afterwards so the
    // reduction order never depends on evaluation order.
    std::vector<double> ap_per_query;
    std::vector<int> first_correct_rank;

    for (const GalleryEntry& q : effective_queries) {
        auto accept = [&](const GalleryEntry& g) {
            if (!options.cross_camera_filter) return true;
            return !(g.identity == q.identity && g.camera == q.camera);
        };
        std::vector<RankedMatch> ranked;
        try {
            ranked = rank_gallery(q.feature, gallery, accept, options.metric);
        } catch (const std::invalid_argument&) {
            report.rejected.push_back(q.sample_id);
            continue;
        }

        int correct_total = 0;
        for (const RankedMatch& m : ranked)
            if (gallery[m.gallery_index].identity == q.identity) ++correct_total;
        if (correct_total == 0) {
            report.rejected.push_back(q.sample_id);
            continue;
        }

        int first_rank = 0;
        int correct_seen = 0;
        double precision_acc = 0.0;
        for (size_t pos = 0; pos < ranked.size(); ++pos) {
            if (gallery[ranked[pos].gallery_index].identity != q.identity) continue;
            ++correct_seen;
            const int rank = static_cast<int>(pos) + 1;
            if (first_rank == 0) first_rank = rank;
            precision_acc += static_cast<double>(correct_seen) / static_cast<double>(rank);
        }
        ap_per_query.push_back(precision_acc / static_cast<double>(correct_total));
        first_correct_rank.push_back(first_rank);
    }

    report.query_count = static_cast<int>(ap_per_query.size());
    if (report.query_count == 0) return report;

    const double n = static_cast<double>(report.query_count);
    for (int r : kCmcRanks) {
        int hits = 0;
        for (int fr : first_correct_rank)
            if (fr <= r) ++hits;
        report.cmc[r] = static_cast<double>(hits) / n;
    }
    double ap_sum = 0.0;
    for (double ap : ap_per_query) ap_sum += ap;
    report.map_score = ap_sum / n;
    return report;
}

} // namespace aacn
