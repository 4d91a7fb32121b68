#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "aacn/attention.hpp"
#include "aacn/autodiff.hpp"
#include "aacn/tensor.hpp"

namespace aacn {

// Per-stage prediction: 14 keypoint confidence maps, 11 non-rigid part
// attentions, 3 rigid part attentions, all sigmoid-squashed to [0, 1].
struct PpaOutputs {
    std::vector<AttentionMap> keypoints;
    std::vector<AttentionMap> nonrigid;
    std::vector<AttentionMap> rigid;
};

struct PpaLossWeights {
    double mu1 = 1.0;
    double mu2 = 1.0;
};

// Rasterized supervision for one sample, shapes [14,H,W], [11,H,W], [3,H,W].
struct PpaGroundTruth {
    Tensor keypoints;
    Tensor nonrigid;
    Tensor rigid;
};

PpaGroundTruth rasterize_ppa_gt(const PoseAnnotation& pose, const GtConfig& cfg);

// Two 3x3 conv layers (relu) followed by a 1x1 projection; shared building
// block for every prediction branch.
struct ConvBranch {
    Parameter w1, b1, w2, b2, w3, b3;

    ConvBranch() = default;
    ConvBranch(const std::string& prefix, int in_channels, int hidden, int out_channels, Rng& rng);
    Tape::Var forward(Tape& tape, Tape::Var x) const;
    void collect(std::vector<Parameter*>& out);
};

// Pose-guided part attention predictor. Stage 1 reads the provider features
// alone; stage 2 reads the features concatenated with all 28 stage-1 maps.
// The keypoint branch is an auxiliary task and can be removed, in which case
// stage 2 reads only the 14 part maps and no keypoint loss is applied.
class PpaNet {
public:
    PpaNet(int in_channels, uint64_t seed, int hidden = 16, bool keypoint_branch = true);

    struct StageVars {
        Tape::Var keypoints, nonrigid, rigid; // keypoints invalid when the branch is removed
    };

    // Returns (stage1, stage2) sigmoid outputs as tape values.
    std::pair<StageVars, StageVars> forward(Tape& tape, Tape::Var features) const;

    // Pure prediction from a [C,H,W] feature tensor.
    std::pair<PpaOutputs, PpaOutputs> predict(const Tensor& features) const;

    std::vector<Parameter*> parameters();
    std::vector<Parameter*> parameters() const;
    int in_channels() const { return in_channels_; }
    bool has_keypoint_branch() const { return keypoint_branch_; }

private:
    int in_channels_;
    int hidden_;
    bool keypoint_branch_;
    mutable ConvBranch s1_k_, s1_n_, s1_r_;
    mutable ConvBranch s2_k_, s2_n_, s2_r_;
};

// Sum over both stages of
//   (1/14)||K* - K^t||^2 + mu1 (1/11)||N* - N^t||^2 + mu2 (1/3)||R* - R^t||^2
// with per-branch sums of squared differences.
Tape::Var ppa_loss_var(Tape& tape, const PpaNet::StageVars& s1, const PpaNet::StageVars& s2,
                       const PpaGroundTruth& gt, const PpaLossWeights& w);

// Same quantity evaluated on concrete predictions.
double ppa_loss(const std::pair<PpaOutputs, PpaOutputs>& outs, const PpaGroundTruth& gt, const PpaLossWeights& w);

// Loss restricted to one stage (t = 1 or 2); used for refinement comparisons.
double ppa_stage_loss(const PpaOutputs& stage, const PpaGroundTruth& gt, const PpaLossWeights& w);

struct PpaTrainSample {
    std::string id;
    Tensor features; // [C,H,W]
    PpaGroundTruth gt;
};

struct PpaTrainConfig {
    int epochs = 200;
    double lr = 0.02;
    PpaLossWeights weights;
    uint64_t seed = 1;
};

struct PpaTrainResult {
    std::vector<double> epoch_loss; // mean per-sample loss per epoch
};

// Plain per-sample SGD over the multi-task objective. Throws
// TrainingDivergence when the loss stops being finite.
PpaTrainResult train_ppa(PpaNet& net, const std::vector<PpaTrainSample>& samples, const PpaTrainConfig& cfg);

// Mean per-sample loss of each stage over a sample set.
std::pair<double, double> ppa_stage_losses(const PpaNet& net, const std::vector<PpaTrainSample>& samples,
                                           const PpaLossWeights& w);

} // namespace aacn
