#pragma once

// Independent re-implementations used as test oracles. These deliberately
// take different computational routes from the library (rotated frames
// instead of projections, stable_sort instead of sort) so agreement is
// meaningful.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "aacn/attention.hpp"
#include "aacn/matcher.hpp"
#include "aacn/pose.hpp"
#include "aacn/rng.hpp"

namespace aacn::testing {

// Membership in the keypoint connection band, evaluated in the segment's
// rotated frame: x' along the segment, y' perpendicular.
inline bool oracle_band_member(Point a, Point b, double band, Point x) {
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double len = std::sqrt(ex * ex + ey * ey);
    const double dx = x.x - a.x, dy = x.y - a.y;
    if (len == 0.0) return std::sqrt(dx * dx + dy * dy) <= band / 2.0;
    const double ux = ex / len, uy = ey / len;
    const double along = dx * ux + dy * uy;
    const double across = -dx * uy + dy * ux;
    return along >= 0.0 && along <= len && std::abs(across) <= band / 2.0;
}

inline AttentionMap oracle_nonrigid_map(const PoseAnnotation& pose, const NonRigidPartDef& part,
                                        const GtConfig& cfg) {
    AttentionMap m(cfg.map_h, cfg.map_w);
    if (!pose.visible[static_cast<size_t>(part.endpoint_a)] || !pose.visible[static_cast<size_t>(part.endpoint_b)])
        return m;
    const Point a = to_map_space(pose.points[static_cast<size_t>(part.endpoint_a)], cfg);
    const Point b = to_map_space(pose.points[static_cast<size_t>(part.endpoint_b)], cfg);
    for (int y = 0; y < cfg.map_h; ++y)
        for (int x = 0; x < cfg.map_w; ++x)
            m.at(y, x) =
                oracle_band_member(a, b, cfg.sigma_band, {static_cast<double>(x), static_cast<double>(y)}) ? 1.0
                                                                                                           : 0.0;
    return m;
}

inline AttentionMap oracle_rigid_map(const PoseAnnotation& pose, const RigidPartDef& part, const GtConfig& cfg) {
    AttentionMap m(cfg.map_h, cfg.map_w);
    std::vector<Point> pts;
    for (int k : part.keypoint_set)
        if (pose.visible[static_cast<size_t>(k)]) pts.push_back(to_map_space(pose.points[static_cast<size_t>(k)], cfg));
    if (pts.size() < 2) return m;
    double min_x = pts[0].x, max_x = pts[0].x, min_y = pts[0].y, max_y = pts[0].y;
    for (const Point& p : pts) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    for (int y = 0; y < cfg.map_h; ++y)
        for (int x = 0; x < cfg.map_w; ++x) {
            const bool inside = static_cast<double>(x) >= min_x && static_cast<double>(x) <= max_x &&
                                static_cast<double>(y) >= min_y && static_cast<double>(y) <= max_y;
            m.at(y, x) = inside ? 1.0 : 0.0;
        }
    return m;
}

inline PoseAnnotation random_pose(Rng& rng, int image_w, int image_h, double invisible_prob = 0.0) {
    PoseAnnotation pose;
    for (int i = 0; i < kKeypointCount; ++i) {
        const auto idx = static_cast<size_t>(i);
        pose.points[idx].x = rng.uniform(0.0, static_cast<double>(image_w - 1));
        pose.points[idx].y = rng.uniform(0.0, static_cast<double>(image_h - 1));
        pose.visible[idx] = rng.uniform() >= invisible_prob;
    }
    return pose;
}

// Brute-force CMC/mAP evaluation, single-query protocol.
inline EvalReport oracle_evaluate(const std::vector<GalleryEntry>& queries,
                                  const std::vector<GalleryEntry>& gallery, const EvalOptions& options) {
    EvalReport report;
    for (int r : kCmcRanks) report.cmc[r] = 0.0;
    std::vector<double> aps;
    std::vector<int> first_ranks;

    for (const GalleryEntry& q : queries) {
        struct Row {
            double dist;
            const GalleryEntry* entry;
        };
        std::vector<Row> rows;
        for (const GalleryEntry& g : gallery) {
            if (options.cross_camera_filter && g.identity == q.identity && g.camera == q.camera) continue;
            double acc = 0.0;
            for (size_t i = 0; i < q.feature.size(); ++i) {
                const double d = q.feature[i] - g.feature[i];
                acc += d * d;
            }
            rows.push_back({std::sqrt(acc), &g});
        }
        std::stable_sort(rows.begin(), rows.end(), [](const Row& l, const Row& r) {
            if (l.dist != r.dist) return l.dist < r.dist;
            return l.entry->sample_id < r.entry->sample_id;
        });
        int total_correct = 0;
        for (const Row& row : rows)
            if (row.entry->identity == q.identity) ++total_correct;
        if (rows.empty() || total_correct == 0) {
            report.rejected.push_back(q.sample_id);
            continue;
        }
        int seen = 0, first = 0;
        double prec = 0.0;
        for (size_t pos = 0; pos < rows.size(); ++pos) {
            if (rows[pos].entry->identity != q.identity) continue;
            ++seen;
            if (first == 0) first = static_cast<int>(pos) + 1;
            prec += static_cast<double>(seen) / static_cast<double>(pos + 1);
        }
        aps.push_back(prec / static_cast<double>(total_correct));
        first_ranks.push_back(first);
    }

    report.query_count = static_cast<int>(aps.size());
    if (report.query_count == 0) return report;
    for (int r : kCmcRanks) {
        int hits = 0;
        for (int fr : first_ranks)
            if (fr <= r) ++hits;
        report.cmc[r] = static_cast<double>(hits) / static_cast<double>(report.query_count);
    }
    double sum = 0.0;
    for (double ap : aps) sum += ap;
    report.map_score = sum / static_cast<double>(report.query_count);
    return report;
}

} // namespace aacn::testing
