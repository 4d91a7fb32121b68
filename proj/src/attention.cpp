#include "aacn/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace aacn {

void GtConfig::validate() const {
    if (sigma_band <= 0.0 || sigma_gauss <= 0.0)
        throw std::invalid_argument("GtConfig: bandwidths must be positive");
    if (map_w <= 0 || map_h <= 0 || image_w <= 0 || image_h <= 0)
        throw std::invalid_argument("GtConfig: dimensions must be positive");
    if (image_w % map_w != 0 || image_h % map_h != 0)
        throw std::invalid_argument("GtConfig: map dimensions must divide image dimensions (got map " +
                                    std::to_string(map_h) + "x" + std::to_string(map_w) + ", image " +
                                    std::to_string(image_h) + "x" + std::to_string(image_w) + ")");
}

Point to_map_space(Point p, const GtConfig& cfg) {
    return {p.x * cfg.scale_x(), p.y * cfg.scale_y()};
}

double torso_diagonal(const PoseAnnotation& pose, const GtConfig& cfg) {
    const RigidPartDef& upper_torso = rigid_parts()[1];
    double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
    double max_x = -min_x, max_y = -min_x;
    int n = 0;
    for (int k : upper_torso.keypoint_set) {
        if (!pose.visible[static_cast<size_t>(k)]) continue;
        Point m = to_map_space(pose.points[static_cast<size_t>(k)], cfg);
        min_x = std::min(min_x, m.x);
        max_x = std::max(max_x, m.x);
        min_y = std::min(min_y, m.y);
        max_y = std::max(max_y, m.y);
        ++n;
    }
    if (n < 2) return std::hypot(static_cast<double>(cfg.map_w), static_cast<double>(cfg.map_h));
    return std::hypot(max_x - min_x, max_y - min_y);
}

double default_band(const PoseAnnotation& pose, const GtConfig& cfg) {
    return 0.15 * torso_diagonal(pose, cfg);
}

AttentionMap gaussian_keypoint_map(const PoseAnnotation& pose, int keypoint, const GtConfig& cfg) {
    cfg.validate();
    if (keypoint < 0 || keypoint >= kKeypointCount)
        throw std::invalid_argument("gaussian_keypoint_map: keypoint id out of range");
    AttentionMap m(cfg.map_h, cfg.map_w);
    if (!pose.visible[static_cast<size_t>(keypoint)]) return m;

    const Point c = to_map_space(pose.points[static_cast<size_t>(keypoint)], cfg);
    const double denom = 2.0 * cfg.sigma_gauss * cfg.sigma_gauss;
    for (int y = 0; y < cfg.map_h; ++y) {
        for (int x = 0; x < cfg.map_w; ++x) {
            const double dx = static_cast<double>(x) - c.x;
            const double dy = static_cast<double>(y) - c.y;
            m.at(y, x) = std::exp(-(dx * dx + dy * dy) / denom);
        }
    }
    return m;
}

bool nonrigid_region_membership(Point a, Point b, double sigma_band, Point x) {
    const double half = sigma_band / 2.0;
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double len2 = ex * ex + ey * ey;
    const double dx = x.x - a.x, dy = x.y - a.y;
    if (len2 == 0.0) {
        // Degenerate part: disc of radius sigma_band/2 around a.
        return dx * dx + dy * dy <= half * half;
    }
    const double t = dx * ex + dy * ey; // projection scaled by |b-a|
    if (t < 0.0 || t > len2) return false;
    const double perp2 = (dx * dx + dy * dy) - t * t / len2;
    return perp2 <= half * half;
}

AttentionMap nonrigid_gt_map(const PoseAnnotation& pose, const NonRigidPartDef& part, const GtConfig& cfg) {
    cfg.validate();
    AttentionMap m(cfg.map_h, cfg.map_w);
    if (!pose.visible[static_cast<size_t>(part.endpoint_a)] || !pose.visible[static_cast<size_t>(part.endpoint_b)])
        return m;
    const Point a = to_map_space(pose.points[static_cast<size_t>(part.endpoint_a)], cfg);
    const Point b = to_map_space(pose.points[static_cast<size_t>(part.endpoint_b)], cfg);
    for (int y = 0; y < cfg.map_h; ++y)
        for (int x = 0; x < cfg.map_w; ++x)
            m.at(y, x) = nonrigid_region_membership(a, b, cfg.sigma_band,
                                                    {static_cast<double>(x), static_cast<double>(y)})
                             ? 1.0
                             : 0.0;
    return m;
}

AttentionMap rigid_gt_map(const PoseAnnotation& pose, const RigidPartDef& part, const GtConfig& cfg) {
    cfg.validate();
    AttentionMap m(cfg.map_h, cfg.map_w);
    double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
    double max_x = -min_x, max_y = -min_x;
    int n_visible = 0;
    for (int k : part.keypoint_set) {
        if (!pose.visible[static_cast<size_t>(k)]) continue;
        const Point p = to_map_space(pose.points[static_cast<size_t>(k)], cfg);
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
        ++n_visible;
    }
    if (n_visible < 2) return m;
    for (int y = 0; y < cfg.map_h; ++y) {
        const double fy = static_cast<double>(y);
        for (int x = 0; x < cfg.map_w; ++x) {
            const double fx = static_cast<double>(x);
            m.at(y, x) = (fx >= min_x && fx <= max_x && fy >= min_y && fy <= max_y) ? 1.0 : 0.0;
        }
    }
    return m;
}

std::vector<AttentionMap> all_part_gt_maps(const PoseAnnotation& pose, const GtConfig& cfg) {
    std::vector<AttentionMap> maps;
    maps.reserve(kPartCount);
    for (const NonRigidPartDef& def : nonrigid_parts()) maps.push_back(nonrigid_gt_map(pose, def, cfg));
    for (const RigidPartDef& def : rigid_parts()) maps.push_back(rigid_gt_map(pose, def, cfg));
    return maps;
}

double visibility_score(const AttentionMap& m) {
    double acc = 0.0;
    for (double v : m.values) acc += std::abs(v);
    return acc;
}

double part_iou(const AttentionMap& pred, const AttentionMap& gt, double threshold) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw std::invalid_argument("part_iou: dimension mismatch");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("part_iou: threshold must lie in (0, 1)");
    long long inter = 0, uni = 0;
    for (size_t i = 0; i < pred.values.size(); ++i) {
        const bool p = pred.values[i] >= threshold;
        const bool g = gt.values[i] > 0.5;
        inter += (p && g) ? 1 : 0;
        uni += (p || g) ? 1 : 0;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

} // namespace aacn
