#pragma once

#include <array>
#include <string_view>
#include <utility>
#include <vector>

namespace aacn {

inline constexpr int kKeypointCount = 14;
inline constexpr int kNonRigidPartCount = 11;
inline constexpr int kRigidPartCount = 3;
inline constexpr int kPartCount = kNonRigidPartCount + kRigidPartCount;

// Keypoint ids. Chosen so the rigid part sets {0,1,3}, {1,3,4,7} and
// {4,5,7,8} read as head+shoulders, shoulders+hips and hips+knees; legs are
// stored as hip->knee->ankle chains, right side first.
enum Keypoint : int {
    kHeadTop = 0,
    kRShoulder = 1,
    kNeck = 2,
    kLShoulder = 3,
    kRHip = 4,
    kRKnee = 5,
    kRAnkle = 6,
    kLHip = 7,
    kLKnee = 8,
    kLAnkle = 9,
    kRElbow = 10,
    kRWrist = 11,
    kLElbow = 12,
    kLWrist = 13,
};

std::string_view keypoint_name(int id);

struct Point {
    double x = 0.0;
    double y = 0.0;
};

// Image-space pose: origin top-left, x rightward, y downward, continuous
// pixel coordinates. Invisible keypoints are ignored by all geometry.
struct PoseAnnotation {
    std::array<Point, kKeypointCount> points{};
    std::array<bool, kKeypointCount> visible{};

    int visible_count() const;
};

struct NonRigidPartDef {
    int part_id;
    int endpoint_a;
    int endpoint_b;
    std::string_view name;
};

struct RigidPartDef {
    int part_id;
    std::vector<int> keypoint_set;
    std::string_view name;
};

// The fixed limb-segment table (11 entries) and rigid trunk table (3 entries).
const std::vector<NonRigidPartDef>& nonrigid_parts();
const std::vector<RigidPartDef>& rigid_parts();
std::pair<const std::vector<NonRigidPartDef>&, const std::vector<RigidPartDef>&> canonical_part_table();

// Canonical composition order: the 11 non-rigid parts, then the 3 rigid ones.
std::string_view part_name(int canonical_index);

struct ValidatedPose {
    PoseAnnotation pose;
    std::array<bool, kNonRigidPartCount> nonrigid_absent{};
    std::array<bool, kRigidPartCount> rigid_absent{};
};

// Clamps visible keypoints into [0, w-1] x [0, h-1] and flags parts whose
// required keypoints are all invisible. Throws std::invalid_argument when no
// keypoint is visible at all.
ValidatedPose validate_pose(const PoseAnnotation& pose, int image_w, int image_h);

} // namespace aacn
