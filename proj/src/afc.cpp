#include "aacn/afc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "aacn/rng.hpp"

namespace aacn {

Tensor FeatureMap::to_tensor() const {
    Tensor t;
    t.shape = {channels, height, width};
    t.data = data;
    return t;
}

FeatureMap FeatureMap::from_tensor(const Tensor& t) {
    if (t.rank() != 3) throw std::invalid_argument("FeatureMap::from_tensor: expected rank-3 tensor");
    FeatureMap f(t.dim(0), t.dim(1), t.dim(2));
    f.data = t.data;
    return f;
}

AttentionMap normalize_attention(const AttentionMap& m) {
    double max_v = 0.0;
    for (double v : m.values) max_v = std::max(max_v, v);
    AttentionMap out(m.height, m.width);
    if (max_v == 0.0) return out; // absent part stays absent
    for (size_t i = 0; i < m.values.size(); ++i) out.values[i] = m.values[i] / max_v;
    return out;
}

std::vector<double> mask_and_pool(const FeatureMap& features, const AttentionMap& normalized) {
    if (features.height != normalized.height || features.width != normalized.width)
        throw std::invalid_argument("mask_and_pool: grid mismatch (features " + std::to_string(features.height) +
                                    "x" + std::to_string(features.width) + ", map " +
                                    std::to_string(normalized.height) + "x" + std::to_string(normalized.width) + ")");
    const int hw = features.height * features.width;
    std::vector<double> pooled(static_cast<size_t>(features.channels), 0.0);
    const double inv = 1.0 / static_cast<double>(hw);
    for (int c = 0; c < features.channels; ++c) {
        double acc = 0.0;
        const double* base = &features.data[static_cast<size_t>(c) * static_cast<size_t>(hw)];
        for (int i = 0; i < hw; ++i) acc += base[i] * normalized.values[static_cast<size_t>(i)];
        pooled[static_cast<size_t>(c)] = acc * inv;
    }
    return pooled;
}

PartFeatureSet align_features(const FeatureMap& features, const std::vector<AttentionMap>& maps) {
    if (static_cast<int>(maps.size()) != kPartCount)
        throw std::invalid_argument("align_features: expected " + std::to_string(kPartCount) + " maps, got " +
                                    std::to_string(maps.size()));
    PartFeatureSet set;
    set.part_count = kPartCount;
    set.feature_dim = features.channels;
    set.grid_cells = features.height * features.width;
    set.aligned.reserve(static_cast<size_t>(kPartCount) * static_cast<size_t>(features.channels));
    set.visibility.reserve(kPartCount);
    for (const AttentionMap& m : maps) {
        set.visibility.push_back(visibility_score(m));
        const std::vector<double> pooled = mask_and_pool(features, normalize_attention(m));
        set.aligned.insert(set.aligned.end(), pooled.begin(), pooled.end());
    }
    return set;
}

std::vector<double> global_pooled(const FeatureMap& features) {
    AttentionMap ones(features.height, features.width);
    std::fill(ones.values.begin(), ones.values.end(), 1.0);
    return mask_and_pool(features, ones);
}

CompositionHead::CompositionHead(int parts, int fdim, uint64_t seed) : part_count(parts), feature_dim(fdim) {
    Rng rng(seed);
    const int in = parts + parts * fdim;
    weight_fc_w = Parameter("weight_fc.w", Tensor({parts, in}));
    weight_fc_b = Parameter("weight_fc.b", Tensor({parts}));
    fuse_w = Parameter("fuse_conv.w", Tensor({kComposedDim, parts * fdim}));
    fuse_b = Parameter("fuse_conv.b", Tensor({kComposedDim}));
    glorot_init(weight_fc_w, in, parts, rng);
    glorot_init(fuse_w, parts * fdim, kComposedDim, rng);
}

std::vector<Parameter*> CompositionHead::parameters() {
    return {&weight_fc_w, &weight_fc_b, &fuse_w, &fuse_b};
}

namespace {

// Graph shared by inference and every training path: concat(v/HW, f^a) ->
// sigmoid weights -> weighted blocks -> linear fusion.
Tape::Var compose_from_vars(Tape& tape, Tape::Var v_scaled, Tape::Var fa, CompositionHead& head) {
    Tape::Var x = tape.concat({v_scaled, fa});
    Tape::Var w = tape.sigmoid(tape.linear(x, tape.param(head.weight_fc_w), tape.param(head.weight_fc_b)));
    Tape::Var weighted = tape.block_scale(fa, w, head.feature_dim);
    return tape.linear(weighted, tape.param(head.fuse_w), tape.param(head.fuse_b));
}

Tape::Var compose_graph(Tape& tape, const PartFeatureSet& parts, CompositionHead& head) {
    if (parts.part_count != head.part_count || parts.feature_dim != head.feature_dim)
        throw std::invalid_argument("compose: head shaped for " + std::to_string(head.part_count) + "x" +
                                    std::to_string(head.feature_dim) + ", parts are " +
                                    std::to_string(parts.part_count) + "x" + std::to_string(parts.feature_dim));
    std::vector<double> v_scaled(parts.visibility);
    const double inv_cells = parts.grid_cells > 0 ? 1.0 / static_cast<double>(parts.grid_cells) : 0.0;
    for (double& v : v_scaled) v *= inv_cells;

    Tape::Var v_in = tape.constant(Tensor::from({parts.part_count}, std::move(v_scaled)));
    Tape::Var fa = tape.constant(Tensor::from({parts.part_count * parts.feature_dim}, parts.aligned));
    return compose_from_vars(tape, v_in, fa, head);
}

} // namespace

std::vector<double> part_weights(const PartFeatureSet& parts, const CompositionHead& head) {
    auto& h = const_cast<CompositionHead&>(head);
    Tape tape;
    std::vector<double> v_scaled(parts.visibility);
    const double inv_cells = parts.grid_cells > 0 ? 1.0 / static_cast<double>(parts.grid_cells) : 0.0;
    for (double& v : v_scaled) v *= inv_cells;
    Tape::Var v_in = tape.constant(Tensor::from({parts.part_count}, std::move(v_scaled)));
    Tape::Var fa = tape.constant(Tensor::from({parts.part_count * parts.feature_dim}, parts.aligned));
    Tape::Var x = tape.concat({v_in, fa});
    Tape::Var w = tape.sigmoid(tape.linear(x, tape.param(h.weight_fc_w), tape.param(h.weight_fc_b)));
    return tape.value(w).data;
}

std::vector<double> compose(const PartFeatureSet& parts, const CompositionHead& head) {
    auto& h = const_cast<CompositionHead&>(head);
    Tape tape;
    Tape::Var out = compose_graph(tape, parts, h);
    const Tensor& t = tape.value(out);
    if (!t.all_finite()) throw std::runtime_error("compose: non-finite output");
    return t.data;
}

namespace {

struct PairSampler {
    std::vector<std::vector<size_t>> by_identity; // sample indices per identity
    std::vector<size_t> positive_ids;             // identities with >= 2 samples

    template <typename GetIdentity>
    PairSampler(size_t count, GetIdentity&& identity_of) {
        std::vector<std::string> names;
        for (size_t i = 0; i < count; ++i) {
            const std::string& id = identity_of(i);
            auto it = std::find(names.begin(), names.end(), id);
            if (it == names.end()) {
                names.push_back(id);
                by_identity.push_back({i});
            } else {
                by_identity[static_cast<size_t>(it - names.begin())].push_back(i);
            }
        }
        for (size_t g = 0; g < by_identity.size(); ++g)
            if (by_identity[g].size() >= 2) positive_ids.push_back(g);
        if (by_identity.size() < 2)
            throw std::invalid_argument("contrastive training: single-identity dataset has no negative pairs");
        if (positive_ids.empty())
            throw std::invalid_argument("contrastive training: no identity has two samples, no positive pairs");
    }

    std::pair<size_t, size_t> positive(Rng& rng) const {
        const auto& group = by_identity[positive_ids[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int>(positive_ids.size()) - 1))]];
        int a = rng.uniform_int(0, static_cast<int>(group.size()) - 1);
        int b = rng.uniform_int(0, static_cast<int>(group.size()) - 2);
        if (b >= a) ++b;
        return {group[static_cast<size_t>(a)], group[static_cast<size_t>(b)]};
    }

    std::pair<size_t, size_t> negative(Rng& rng) const {
        int ga = rng.uniform_int(0, static_cast<int>(by_identity.size()) - 1);
        int gb = rng.uniform_int(0, static_cast<int>(by_identity.size()) - 2);
        if (gb >= ga) ++gb;
        const auto& a = by_identity[static_cast<size_t>(ga)];
        const auto& b = by_identity[static_cast<size_t>(gb)];
        return {a[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(a.size()) - 1))],
                b[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(b.size()) - 1))]};
    }
};

// d^2 for the positive pair plus max(0, m - d)^2 for the negative pair.
Tape::Var contrastive_pair_loss(Tape& tape, Tape::Var pos_a, Tape::Var pos_b, Tape::Var neg_a, Tape::Var neg_b,
                                double margin) {
    Tape::Var pos_d2 = tape.mse_loss(pos_a, pos_b);
    Tape::Var neg_d = tape.sqrt_op(tape.mse_loss(neg_a, neg_b));
    Tape::Var hinge = tape.relu(tape.scale(tape.add_scalar(neg_d, -margin), -1.0));
    return tape.add(pos_d2, tape.elementwise_mul(hinge, hinge));
}

} // namespace

std::vector<double> train_composition(const std::vector<LabeledParts>& samples, CompositionHead& head,
                                      const CompositionTrainConfig& cfg) {
    PairSampler sampler(samples.size(), [&](size_t i) -> const std::string& { return samples[i].identity; });
    Rng rng(cfg.seed);
    std::vector<Parameter*> params = head.parameters();
    std::vector<double> history;
    history.reserve(static_cast<size_t>(cfg.steps));
    for (int step = 0; step < cfg.steps; ++step) {
        const auto [pa, pb] = sampler.positive(rng);
        const auto [na, nb] = sampler.negative(rng);
        Tape tape;
        Tape::Var ea = compose_graph(tape, samples[pa].parts, head);
        Tape::Var eb = compose_graph(tape, samples[pb].parts, head);
        Tape::Var ec = compose_graph(tape, samples[na].parts, head);
        Tape::Var ed = compose_graph(tape, samples[nb].parts, head);
        Tape::Var loss = contrastive_pair_loss(tape, ea, eb, ec, ed, cfg.margin);
        const double loss_value = tape.value(loss).data[0];
        if (!std::isfinite(loss_value))
            throw TrainingDivergence("train_composition: non-finite loss at step " + std::to_string(step));
        history.push_back(loss_value);
        tape.backward(loss);
        sgd_step(params, cfg.lr);
    }
    return history;
}

GcnNet::GcnNet(int in_c, int hid, int out_c, uint64_t seed) : in_channels(in_c), hidden(hid), out_channels(out_c) {
    Rng rng(seed);
    w1 = Parameter("gcn.c1.w", Tensor({hidden, in_channels, 3, 3}));
    b1 = Parameter("gcn.c1.b", Tensor({hidden}));
    w2 = Parameter("gcn.c2.w", Tensor({hidden, hidden, 3, 3}));
    b2 = Parameter("gcn.c2.b", Tensor({hidden}));
    w3 = Parameter("gcn.c3.w", Tensor({out_channels, hidden, 1, 1}));
    b3 = Parameter("gcn.c3.b", Tensor({out_channels}));
    glorot_init(w1, in_channels * 9, hidden * 9, rng);
    glorot_init(w2, hidden * 9, hidden * 9, rng);
    glorot_init(w3, hidden, out_channels, rng);
}

Tape::Var GcnNet::forward(Tape& tape, Tape::Var image) const {
    auto& self = const_cast<GcnNet&>(*this);
    Tape::Var h1 = tape.relu(tape.conv2d(image, tape.param(self.w1), tape.param(self.b1)));
    Tape::Var h2 = tape.relu(tape.conv2d(h1, tape.param(self.w2), tape.param(self.b2)));
    return tape.conv2d(h2, tape.param(self.w3), tape.param(self.b3));
}

FeatureMap GcnNet::apply(const FeatureMap& input) const {
    Tape tape;
    Tape::Var out = forward(tape, tape.constant(input.to_tensor()));
    return FeatureMap::from_tensor(tape.value(out));
}

std::vector<Parameter*> GcnNet::parameters() { return {&w1, &b1, &w2, &b2, &w3, &b3}; }

namespace {

// Mask the feature stack with a constant per-part attention, pool, and
// produce (f^a, v/HW) as tape values. Gradients flow into `features`.
std::pair<Tape::Var, Tape::Var> align_on_tape(Tape& tape, Tape::Var features,
                                              const std::vector<AttentionMap>& maps) {
    const Tensor& f = tape.value(features);
    const int c = f.dim(0), h = f.dim(1), w = f.dim(2);
    std::vector<Tape::Var> pooled;
    std::vector<double> v_scaled;
    pooled.reserve(maps.size());
    for (const AttentionMap& m : maps) {
        if (m.height != h || m.width != w) throw std::invalid_argument("align_on_tape: grid mismatch");
        v_scaled.push_back(visibility_score(m) / static_cast<double>(h * w));
        const AttentionMap norm = normalize_attention(m);
        Tensor broadcast({c, h, w});
        for (int ci = 0; ci < c; ++ci)
            std::copy(norm.values.begin(), norm.values.end(),
                      broadcast.data.begin() + static_cast<long>(ci) * h * w);
        Tape::Var masked = tape.elementwise_mul(features, tape.constant(std::move(broadcast)));
        pooled.push_back(tape.global_avg_pool(masked));
    }
    Tape::Var fa = tape.concat(pooled);
    Tape::Var v = tape.constant(Tensor::from({static_cast<int>(maps.size())}, std::move(v_scaled)));
    return {fa, v};
}

} // namespace

std::vector<double> train_gcn(const std::vector<JointSample>& samples, GcnNet& gcn,
                              const CompositionTrainConfig& cfg) {
    PairSampler sampler(samples.size(), [&](size_t i) -> const std::string& { return samples[i].identity; });
    Rng rng(cfg.seed);
    std::vector<Parameter*> params = gcn.parameters();
    std::vector<double> history;
    for (int step = 0; step < cfg.steps; ++step) {
        const auto [pa, pb] = sampler.positive(rng);
        const auto [na, nb] = sampler.negative(rng);
        Tape tape;
        auto embed = [&](size_t idx) {
            Tape::Var out = gcn.forward(tape, tape.constant(samples[idx].input.to_tensor()));
            return tape.global_avg_pool(out);
        };
        Tape::Var loss =
            contrastive_pair_loss(tape, embed(pa), embed(pb), embed(na), embed(nb), cfg.margin);
        const double loss_value = tape.value(loss).data[0];
        if (!std::isfinite(loss_value))
            throw TrainingDivergence("train_gcn: non-finite loss at step " + std::to_string(step));
        history.push_back(loss_value);
        tape.backward(loss);
        sgd_step(params, cfg.lr);
    }
    return history;
}

std::vector<double> train_composition_joint(const std::vector<JointSample>& samples, GcnNet& gcn,
                                            CompositionHead& head, const CompositionTrainConfig& cfg) {
    PairSampler sampler(samples.size(), [&](size_t i) -> const std::string& { return samples[i].identity; });
    Rng rng(cfg.seed);
    std::vector<Parameter*> params = gcn.parameters();
    for (Parameter* p : head.parameters()) params.push_back(p);
    std::vector<double> history;
    for (int step = 0; step < cfg.steps; ++step) {
        const auto [pa, pb] = sampler.positive(rng);
        const auto [na, nb] = sampler.negative(rng);
        Tape tape;
        auto embed = [&](size_t idx) {
            Tape::Var context = gcn.forward(tape, tape.constant(samples[idx].input.to_tensor()));
            auto [fa, v] = align_on_tape(tape, context, samples[idx].maps);
            return compose_from_vars(tape, v, fa, head);
        };
        Tape::Var loss =
            contrastive_pair_loss(tape, embed(pa), embed(pb), embed(na), embed(nb), cfg.margin);
        const double loss_value = tape.value(loss).data[0];
        if (!std::isfinite(loss_value))
            throw TrainingDivergence("train_composition_joint: non-finite loss at step " + std::to_string(step));
        history.push_back(loss_value);
        tape.backward(loss);
        sgd_step(params, cfg.lr);
    }
    return history;
}

} // namespace aacn
