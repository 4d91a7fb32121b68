#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aacn/attention.hpp"
#include "aacn/autodiff.hpp"
#include "aacn/tensor.hpp"

namespace aacn {

inline constexpr int kComposedDim = 1024;

// Dense per-image activation grid, [channel][y][x].
struct FeatureMap {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    FeatureMap() = default;
    FeatureMap(int c, int h, int w)
        : channels(c), height(h), width(w),
          data(static_cast<size_t>(c) * static_cast<size_t>(h) * static_cast<size_t>(w), 0.0) {}

    double& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * static_cast<size_t>(height) + static_cast<size_t>(y)) *
                        static_cast<size_t>(width) +
                    static_cast<size_t>(x)];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * static_cast<size_t>(height) + static_cast<size_t>(y)) *
                        static_cast<size_t>(width) +
                    static_cast<size_t>(x)];
    }

    Tensor to_tensor() const;
    static FeatureMap from_tensor(const Tensor& t);
};

// Per-part pooled features plus visibility scores, in canonical part order.
// The fixed order is what aligns features across images.
struct PartFeatureSet {
    int part_count = 0;
    int feature_dim = 0;
    int grid_cells = 0;            // H*W of the source grid, for visibility scaling
    std::vector<double> aligned;   // part_count * feature_dim, the vector f^a
    std::vector<double> visibility;

    std::span<const double> part(int p) const {
        return {aligned.data() + static_cast<size_t>(p) * static_cast<size_t>(feature_dim),
                static_cast<size_t>(feature_dim)};
    }
};

// Divide by the map maximum; an all-zero map (absent part) stays all-zero.
AttentionMap normalize_attention(const AttentionMap& m);

// f_p[c] = (1/HW) sum_{x,y} F[c,y,x] * m(y,x). The map is expected to be
// normalized already.
std::vector<double> mask_and_pool(const FeatureMap& features, const AttentionMap& normalized);

// Normalize + mask + pool each of the 14 canonical part maps. Visibility
// comes from the un-normalized maps.
PartFeatureSet align_features(const FeatureMap& features, const std::vector<AttentionMap>& maps);

// Per-channel mean over the grid; the no-attention baseline feature.
std::vector<double> global_pooled(const FeatureMap& features);

// Learned composition: a weight head mapping concat(v, f^a) to P sigmoid
// weights, then a linear fusion of the weighted part blocks down to 1024.
struct CompositionHead {
    int part_count = 0;
    int feature_dim = 0;
    Parameter weight_fc_w, weight_fc_b; // [P, P + P*C], [P]
    Parameter fuse_w, fuse_b;           // [1024, P*C], [1024]

    CompositionHead() = default;
    CompositionHead(int parts, int feature_dim, uint64_t seed);

    std::vector<Parameter*> parameters();
    int input_dim() const { return part_count + part_count * feature_dim; }
};

// The learned part weights w = sigmoid(weight_fc(concat(v/HW, f^a))).
std::vector<double> part_weights(const PartFeatureSet& parts, const CompositionHead& head);

// Compositional 1024-d feature from visibility-weighted part blocks.
std::vector<double> compose(const PartFeatureSet& parts, const CompositionHead& head);

struct LabeledParts {
    std::string identity;
    PartFeatureSet parts;
};

struct CompositionTrainConfig {
    int steps = 400;
    double lr = 0.05;
    double margin = 1.0;
    uint64_t seed = 1;
};

// Margin-based contrastive training on pairs of composed features: pull
// same-identity pairs together, push different-identity pairs beyond the
// margin. Returns the per-step loss history. Requires at least two
// identities (negative pairs) and one identity with two samples.
std::vector<double> train_composition(const std::vector<LabeledParts>& samples, CompositionHead& head,
                                      const CompositionTrainConfig& cfg);

// Toy three-layer convolutional context provider: conv3x3-relu, conv3x3-relu,
// conv1x1. Stands in for the full-scale base network.
struct GcnNet {
    int in_channels = 0;
    int hidden = 0;
    int out_channels = 0;
    Parameter w1, b1, w2, b2, w3, b3;

    GcnNet() = default;
    GcnNet(int in_channels, int hidden, int out_channels, uint64_t seed);

    Tape::Var forward(Tape& tape, Tape::Var image) const;
    FeatureMap apply(const FeatureMap& input) const;
    std::vector<Parameter*> parameters();
};

struct JointSample {
    std::string identity;
    FeatureMap input;                // raw grid fed to the GCN
    std::vector<AttentionMap> maps;  // 14 canonical attention maps
};

// Independent context training: contrastive loss on globally pooled GCN
// output. The first step of the progressive schedule.
std::vector<double> train_gcn(const std::vector<JointSample>& samples, GcnNet& gcn,
                              const CompositionTrainConfig& cfg);

// Joint fine-tuning: gradients flow through composition, pooling and masking
// into the GCN. The final step of the progressive schedule.
std::vector<double> train_composition_joint(const std::vector<JointSample>& samples, GcnNet& gcn,
                                            CompositionHead& head, const CompositionTrainConfig& cfg);

} // namespace aacn
