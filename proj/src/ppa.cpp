#include "aacn/ppa.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace aacn {

namespace {

Tensor maps_to_tensor(const std::vector<AttentionMap>& maps) {
    const int c = static_cast<int>(maps.size());
    const int h = maps.empty() ? 0 : maps[0].height;
    const int w = maps.empty() ? 0 : maps[0].width;
    Tensor t({c, h, w});
    for (int i = 0; i < c; ++i)
        std::copy(maps[static_cast<size_t>(i)].values.begin(), maps[static_cast<size_t>(i)].values.end(),
                  t.data.begin() + static_cast<long>(i) * h * w);
    return t;
}

std::vector<AttentionMap> tensor_to_maps(const Tensor& t) {
    std::vector<AttentionMap> maps;
    const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    maps.reserve(static_cast<size_t>(c));
    for (int i = 0; i < c; ++i) {
        AttentionMap m(h, w);
        std::copy(t.data.begin() + static_cast<long>(i) * h * w, t.data.begin() + static_cast<long>(i + 1) * h * w,
                  m.values.begin());
        maps.push_back(std::move(m));
    }
    return maps;
}

double block_ssd(const std::vector<AttentionMap>& pred, const Tensor& gt) {
    double acc = 0.0;
    size_t idx = 0;
    for (const AttentionMap& m : pred)
        for (double v : m.values) {
            const double d = v - gt.data[idx++];
            acc += d * d;
        }
    return acc;
}

} // namespace

PpaGroundTruth rasterize_ppa_gt(const PoseAnnotation& pose, const GtConfig& cfg) {
    PpaGroundTruth gt;
    std::vector<AttentionMap> k;
    k.reserve(kKeypointCount);
    for (int i = 0; i < kKeypointCount; ++i) k.push_back(gaussian_keypoint_map(pose, i, cfg));
    std::vector<AttentionMap> n;
    n.reserve(kNonRigidPartCount);
    for (const NonRigidPartDef& def : nonrigid_parts()) n.push_back(nonrigid_gt_map(pose, def, cfg));
    std::vector<AttentionMap> r;
    r.reserve(kRigidPartCount);
    for (const RigidPartDef& def : rigid_parts()) r.push_back(rigid_gt_map(pose, def, cfg));
    gt.keypoints = maps_to_tensor(k);
    gt.nonrigid = maps_to_tensor(n);
    gt.rigid = maps_to_tensor(r);
    return gt;
}

ConvBranch::ConvBranch(const std::string& prefix, int in_channels, int hidden, int out_channels, Rng& rng) {
    w1 = Parameter(prefix + ".c1.w", Tensor({hidden, in_channels, 3, 3}));
    b1 = Parameter(prefix + ".c1.b", Tensor({hidden}));
    w2 = Parameter(prefix + ".c2.w", Tensor({hidden, hidden, 3, 3}));
    b2 = Parameter(prefix + ".c2.b", Tensor({hidden}));
    w3 = Parameter(prefix + ".c3.w", Tensor({out_channels, hidden, 1, 1}));
    b3 = Parameter(prefix + ".c3.b", Tensor({out_channels}));
    glorot_init(w1, in_channels * 9, hidden * 9, rng);
    glorot_init(w2, hidden * 9, hidden * 9, rng);
    glorot_init(w3, hidden, out_channels, rng);
}

Tape::Var ConvBranch::forward(Tape& tape, Tape::Var x) const {
    auto& self = const_cast<ConvBranch&>(*this);
    Tape::Var h1 = tape.relu(tape.conv2d(x, tape.param(self.w1), tape.param(self.b1)));
    Tape::Var h2 = tape.relu(tape.conv2d(h1, tape.param(self.w2), tape.param(self.b2)));
    return tape.sigmoid(tape.conv2d(h2, tape.param(self.w3), tape.param(self.b3)));
}

void ConvBranch::collect(std::vector<Parameter*>& out) {
    out.push_back(&w1);
    out.push_back(&b1);
    out.push_back(&w2);
    out.push_back(&b2);
    out.push_back(&w3);
    out.push_back(&b3);
}

PpaNet::PpaNet(int in_channels, uint64_t seed, int hidden, bool keypoint_branch)
    : in_channels_(in_channels), hidden_(hidden), keypoint_branch_(keypoint_branch) {
    if (in_channels <= 0) throw std::invalid_argument("PpaNet: input channel count must be positive");
    Rng rng(seed);
    const int part_channels = kNonRigidPartCount + kRigidPartCount;
    const int stage2_in = in_channels + part_channels + (keypoint_branch ? kKeypointCount : 0);
    if (keypoint_branch) s1_k_ = ConvBranch("s1.k", in_channels, hidden, kKeypointCount, rng);
    s1_n_ = ConvBranch("s1.n", in_channels, hidden, kNonRigidPartCount, rng);
    s1_r_ = ConvBranch("s1.r", in_channels, hidden, kRigidPartCount, rng);
    if (keypoint_branch) s2_k_ = ConvBranch("s2.k", stage2_in, hidden, kKeypointCount, rng);
    s2_n_ = ConvBranch("s2.n", stage2_in, hidden, kNonRigidPartCount, rng);
    s2_r_ = ConvBranch("s2.r", stage2_in, hidden, kRigidPartCount, rng);
}

std::pair<PpaNet::StageVars, PpaNet::StageVars> PpaNet::forward(Tape& tape, Tape::Var features) const {
    const Tensor& f = tape.value(features);
    if (f.rank() != 3 || f.dim(0) != in_channels_)
        throw std::invalid_argument("PpaNet::forward: expected " + std::to_string(in_channels_) +
                                    " input channels, got " + (f.rank() == 3 ? std::to_string(f.dim(0)) : "non-3D"));
    StageVars s1;
    if (keypoint_branch_) s1.keypoints = s1_k_.forward(tape, features);
    s1.nonrigid = s1_n_.forward(tape, features);
    s1.rigid = s1_r_.forward(tape, features);

    std::vector<Tape::Var> stack = {features};
    if (keypoint_branch_) stack.push_back(s1.keypoints);
    stack.push_back(s1.nonrigid);
    stack.push_back(s1.rigid);
    Tape::Var stacked = tape.concat(stack);
    StageVars s2;
    if (keypoint_branch_) s2.keypoints = s2_k_.forward(tape, stacked);
    s2.nonrigid = s2_n_.forward(tape, stacked);
    s2.rigid = s2_r_.forward(tape, stacked);
    return {s1, s2};
}

std::pair<PpaOutputs, PpaOutputs> PpaNet::predict(const Tensor& features) const {
    Tape tape;
    auto [s1, s2] = forward(tape, tape.constant(features));
    auto stage_outputs = [&](const StageVars& s) {
        PpaOutputs o;
        if (s.keypoints.valid()) o.keypoints = tensor_to_maps(tape.value(s.keypoints));
        o.nonrigid = tensor_to_maps(tape.value(s.nonrigid));
        o.rigid = tensor_to_maps(tape.value(s.rigid));
        return o;
    };
    return {stage_outputs(s1), stage_outputs(s2)};
}

std::vector<Parameter*> PpaNet::parameters() {
    std::vector<Parameter*> out;
    if (keypoint_branch_) s1_k_.collect(out);
    s1_n_.collect(out);
    s1_r_.collect(out);
    if (keypoint_branch_) s2_k_.collect(out);
    s2_n_.collect(out);
    s2_r_.collect(out);
    return out;
}

std::vector<Parameter*> PpaNet::parameters() const { return const_cast<PpaNet*>(this)->parameters(); }

namespace {

Tape::Var stage_loss_var(Tape& tape, const PpaNet::StageVars& s, const PpaGroundTruth& gt,
                         const PpaLossWeights& w) {
    Tape::Var ln = tape.scale(tape.mse_loss(s.nonrigid, tape.constant(gt.nonrigid)), w.mu1 / kNonRigidPartCount);
    Tape::Var lr = tape.scale(tape.mse_loss(s.rigid, tape.constant(gt.rigid)), w.mu2 / kRigidPartCount);
    Tape::Var parts = tape.add(ln, lr);
    if (!s.keypoints.valid()) return parts; // auxiliary branch removed
    Tape::Var lk = tape.scale(tape.mse_loss(s.keypoints, tape.constant(gt.keypoints)), 1.0 / kKeypointCount);
    return tape.add(lk, parts);
}

void check_gt_grid(const PpaGroundTruth& gt, const Tensor& pred) {
    if (gt.nonrigid.dim(1) != pred.dim(1) || gt.nonrigid.dim(2) != pred.dim(2))
        throw std::invalid_argument("ppa_loss: ground-truth grid does not match prediction grid");
}

} // namespace

Tape::Var ppa_loss_var(Tape& tape, const PpaNet::StageVars& s1, const PpaNet::StageVars& s2,
                       const PpaGroundTruth& gt, const PpaLossWeights& w) {
    check_gt_grid(gt, tape.value(s1.nonrigid));
    return tape.add(stage_loss_var(tape, s1, gt, w), stage_loss_var(tape, s2, gt, w));
}

double ppa_stage_loss(const PpaOutputs& stage, const PpaGroundTruth& gt, const PpaLossWeights& w) {
    if (!(stage.keypoints.empty() || stage.keypoints.size() == kKeypointCount) ||
        stage.nonrigid.size() != kNonRigidPartCount || stage.rigid.size() != kRigidPartCount)
        throw std::invalid_argument("ppa_stage_loss: wrong branch channel counts");
    if (stage.nonrigid[0].height != gt.nonrigid.dim(1) || stage.nonrigid[0].width != gt.nonrigid.dim(2))
        throw std::invalid_argument("ppa_stage_loss: grid mismatch");
    double loss = w.mu1 * block_ssd(stage.nonrigid, gt.nonrigid) / kNonRigidPartCount +
                  w.mu2 * block_ssd(stage.rigid, gt.rigid) / kRigidPartCount;
    if (!stage.keypoints.empty()) loss += block_ssd(stage.keypoints, gt.keypoints) / kKeypointCount;
    return loss;
}

double ppa_loss(const std::pair<PpaOutputs, PpaOutputs>& outs, const PpaGroundTruth& gt, const PpaLossWeights& w) {
    return ppa_stage_loss(outs.first, gt, w) + ppa_stage_loss(outs.second, gt, w);
}

PpaTrainResult train_ppa(PpaNet& net, const std::vector<PpaTrainSample>& samples, const PpaTrainConfig& cfg) {
    if (samples.empty()) throw std::invalid_argument("train_ppa: need at least one sample");
    std::vector<Parameter*> params = net.parameters();
    PpaTrainResult result;
    result.epoch_loss.reserve(static_cast<size_t>(cfg.epochs));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_acc = 0.0;
        for (const PpaTrainSample& sample : samples) {
            Tape tape;
            auto [s1, s2] = net.forward(tape, tape.constant(sample.features));
            Tape::Var loss = ppa_loss_var(tape, s1, s2, sample.gt, cfg.weights);
            const double loss_value = tape.value(loss).data[0];
            if (!std::isfinite(loss_value))
                throw TrainingDivergence("train_ppa: non-finite loss at epoch " + std::to_string(epoch) +
                                         ", sample '" + sample.id + "'");
            epoch_acc += loss_value;
            tape.backward(loss);
            sgd_step(params, cfg.lr);
        }
        result.epoch_loss.push_back(epoch_acc / static_cast<double>(samples.size()));
    }
    return result;
}

std::pair<double, double> ppa_stage_losses(const PpaNet& net, const std::vector<PpaTrainSample>& samples,
                                           const PpaLossWeights& w) {
    if (samples.empty()) throw std::invalid_argument("ppa_stage_losses: empty sample set");
    double l1 = 0.0, l2 = 0.0;
    for (const PpaTrainSample& sample : samples) {
        auto outs = net.predict(sample.features);
        l1 += ppa_stage_loss(outs.first, sample.gt, w);
        l2 += ppa_stage_loss(outs.second, sample.gt, w);
    }
    const double n = static_cast<double>(samples.size());
    return {l1 / n, l2 / n};
}

} // namespace aacn
