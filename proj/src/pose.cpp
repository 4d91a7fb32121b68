#include "aacn/pose.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace aacn {

namespace {

constexpr std::array<std::string_view, kKeypointCount> kKeypointNames = {
    "head_top",   "r_shoulder", "neck",    "l_shoulder", "r_hip",   "r_knee",  "r_ankle",
    "l_hip",      "l_knee",     "l_ankle", "r_elbow",    "r_wrist", "l_elbow", "l_wrist",
};

} // namespace

std::string_view keypoint_name(int id) {
    if (id < 0 || id >= kKeypointCount) throw std::out_of_range("keypoint_name: id out of range");
    return kKeypointNames[static_cast<size_t>(id)];
}

int PoseAnnotation::visible_count() const {
    int n = 0;
    for (bool v : visible)
        if (v) ++n;
    return n;
}

const std::vector<NonRigidPartDef>& nonrigid_parts() {
    static const std::vector<NonRigidPartDef> table = {
        {0, kHeadTop, kNeck, "head_neck"},
        {1, kNeck, kRShoulder, "neck_r_shoulder"},
        {2, kNeck, kLShoulder, "neck_l_shoulder"},
        {3, kRShoulder, kRElbow, "r_upper_arm"},
        {4, kLShoulder, kLElbow, "l_upper_arm"},
        {5, kRElbow, kRWrist, "r_lower_arm"},
        {6, kLElbow, kLWrist, "l_lower_arm"},
        {7, kRHip, kRKnee, "r_upper_leg"},
        {8, kLHip, kLKnee, "l_upper_leg"},
        {9, kRKnee, kRAnkle, "r_lower_leg"},
        {10, kLKnee, kLAnkle, "l_lower_leg"},
    };
    return table;
}

const std::vector<RigidPartDef>& rigid_parts() {
    static const std::vector<RigidPartDef> table = {
        {0, {kHeadTop, kRShoulder, kLShoulder}, "head_shoulder"},
        {1, {kRShoulder, kLShoulder, kRHip, kLHip}, "upper_torso"},
        {2, {kRHip, kRKnee, kLHip, kLKnee}, "lower_torso"},
    };
    return table;
}

std::pair<const std::vector<NonRigidPartDef>&, const std::vector<RigidPartDef>&> canonical_part_table() {
    return {nonrigid_parts(), rigid_parts()};
}

std::string_view part_name(int canonical_index) {
    if (canonical_index < 0 || canonical_index >= kPartCount)
        throw std::out_of_range("part_name: index out of range");
    if (canonical_index < kNonRigidPartCount)
        return nonrigid_parts()[static_cast<size_t>(canonical_index)].name;
    return rigid_parts()[static_cast<size_t>(canonical_index - kNonRigidPartCount)].name;
}

ValidatedPose validate_pose(const PoseAnnotation& pose, int image_w, int image_h) {
    if (image_w <= 0 || image_h <= 0) throw std::invalid_argument("validate_pose: image dimensions must be positive");
    if (pose.visible_count() == 0)
        throw std::invalid_argument("validate_pose: all 14 keypoints invisible, annotation unusable");

    ValidatedPose out;
    out.pose = pose;
    for (int i = 0; i < kKeypointCount; ++i) {
        auto idx = static_cast<size_t>(i);
        if (!pose.visible[idx]) continue;
        Point& p = out.pose.points[idx];
        if (!std::isfinite(p.x) || !std::isfinite(p.y))
            throw std::invalid_argument("validate_pose: non-finite coordinate for keypoint " +
                                        std::string(keypoint_name(i)));
        p.x = std::clamp(p.x, 0.0, static_cast<double>(image_w - 1));
        p.y = std::clamp(p.y, 0.0, static_cast<double>(image_h - 1));
    }

    for (const NonRigidPartDef& def : nonrigid_parts()) {
        const bool any_visible = out.pose.visible[static_cast<size_t>(def.endpoint_a)] ||
                                 out.pose.visible[static_cast<size_t>(def.endpoint_b)];
        out.nonrigid_absent[static_cast<size_t>(def.part_id)] = !any_visible;
    }
    for (const RigidPartDef& def : rigid_parts()) {
        bool any_visible = false;
        for (int k : def.keypoint_set) any_visible = any_visible || out.pose.visible[static_cast<size_t>(k)];
        out.rigid_absent[static_cast<size_t>(def.part_id)] = !any_visible;
    }
    return out;
}

} // namespace aacn
