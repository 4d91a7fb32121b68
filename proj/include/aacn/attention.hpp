#pragma once

#include <vector>

#include "aacn/pose.hpp"

namespace aacn {

// Single-channel confidence grid. Values live in [0, 1]; ground-truth part
// maps are exactly binary. Row-major, values[y * width + x].
struct AttentionMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    AttentionMap() = default;
    AttentionMap(int h, int w) : height(h), width(w), values(static_cast<size_t>(h) * static_cast<size_t>(w), 0.0) {}

    double& at(int y, int x) { return values[static_cast<size_t>(y) * static_cast<size_t>(width) + static_cast<size_t>(x)]; }
    double at(int y, int x) const { return values[static_cast<size_t>(y) * static_cast<size_t>(width) + static_cast<size_t>(x)]; }
    int cells() const { return height * width; }
};

// Rasterization settings. Bandwidths are expressed in map-grid cells; when
// the map and image dimensions coincide, cells equal pixels. Keypoints are
// scaled from image space by (map_w/image_w, map_h/image_h), and every cell
// samples at its integer lattice point (pixel-center convention).
struct GtConfig {
    double sigma_band = 2.0;   // full width of the non-rigid connection band
    double sigma_gauss = 2.0;  // keypoint Gaussian spread
    int map_w = 6;
    int map_h = 14;
    int image_w = 192;
    int image_h = 448;

    double scale_x() const { return static_cast<double>(map_w) / static_cast<double>(image_w); }
    double scale_y() const { return static_cast<double>(map_h) / static_cast<double>(image_h); }
    void validate() const;
};

// Keypoint-to-map-space scaling used by every rasterizer below.
Point to_map_space(Point image_point, const GtConfig& cfg);

// Torso reference length for the band default, in map cells: the diagonal of
// the bounding box of the visible upper-torso keypoints. Falls back to the
// map diagonal when fewer than two of them are visible.
double torso_diagonal(const PoseAnnotation& pose, const GtConfig& cfg);

// 0.15 x torso diagonal; the per-pose bandwidth used when no explicit value
// is configured.
double default_band(const PoseAnnotation& pose, const GtConfig& cfg);

// exp(-||x - x_k||^2 / (2 sigma_gauss^2)), peak 1 at the keypoint cell.
// Invisible keypoint yields the all-zero map.
AttentionMap gaussian_keypoint_map(const PoseAnnotation& pose, int keypoint, const GtConfig& cfg);

// True iff x projects onto segment ab within [0, |b-a|] and its perpendicular
// distance to the line is at most sigma_band/2. a == b degenerates to a disc
// of radius sigma_band/2 around a.
bool nonrigid_region_membership(Point a, Point b, double sigma_band, Point x);

// Binary indicator of the connection band between the part's endpoints.
// Either endpoint invisible yields the all-zero map.
AttentionMap nonrigid_gt_map(const PoseAnnotation& pose, const NonRigidPartDef& part, const GtConfig& cfg);

// Binary indicator of the axis-aligned bounding rectangle of the visible
// keypoints of the set. Fewer than two visible yields the all-zero map.
AttentionMap rigid_gt_map(const PoseAnnotation& pose, const RigidPartDef& part, const GtConfig& cfg);

// All 14 part maps in canonical order (11 non-rigid, then 3 rigid).
std::vector<AttentionMap> all_part_gt_maps(const PoseAnnotation& pose, const GtConfig& cfg);

// Sum of absolute values; the part visibility proxy.
double visibility_score(const AttentionMap& m);

// Binarizes pred at threshold, compares against gt (positive where > 0.5).
// An empty union is defined as IoU 1. Threshold must lie in (0, 1).
double part_iou(const AttentionMap& pred, const AttentionMap& gt, double threshold = 0.5);

} // namespace aacn
