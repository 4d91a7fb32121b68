#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aacn/rng.hpp"
#include "aacn/tensor.hpp"

namespace aacn {

// Thrown when training produces non-finite losses or gradients.
struct TrainingDivergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Learnable weight. Gradients accumulate across backward passes until the
// next sgd_step (or zero_grad) clears them.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor(value.shape);
    }

    void zero_grad() { grad.fill(0.0); }
};

// Glorot-uniform init: U[-a, a] with a = sqrt(6 / (fan_in + fan_out)).
void glorot_init(Parameter& p, int fan_in, int fan_out, Rng& rng);

// Reverse-mode tape over a fixed op vocabulary. One tape records one forward
// pass; backward() may be called once per recorded graph.
class Tape {
public:
    struct Var {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaves. Parameter leaves reference the live tensor (no copy); the
    // Parameter must outlive the tape and keep its value unchanged between
    // forward recording and backward().
    Var constant(Tensor t);          // no gradient is tracked
    Var input(Tensor t);             // gradient tracked (readable via grad())
    Var param(Parameter& p);         // gradient accumulated into p.grad on backward()

    // Ops. conv2d runs stride-1 cross-correlation with zero padding; the
    // default pad (k-1)/2 preserves H and W for odd kernels.
    Var conv2d(Var x, Var w, Var b, int pad = -1);
    Var linear(Var x, Var w, Var b);
    Var relu(Var x);
    Var sigmoid(Var x);
    Var sqrt_op(Var x);
    Var global_avg_pool(Var x);
    Var elementwise_mul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var scale(Var a, double s);
    Var add_scalar(Var a, double c);
    Var concat(const std::vector<Var>& parts);
    std::vector<Var> split(Var x, const std::vector<int>& sizes);
    // out[p*block + i] = x[p*block + i] * w[p]
    Var block_scale(Var x, Var w, int block);
    // Sum of squared differences, ||target - pred||^2, as a scalar node.
    Var mse_loss(Var pred, Var target);

    const Tensor& value(Var v) const;
    const Tensor& grad(Var v) const;

    // Reverse pass from a scalar root. Throws std::invalid_argument for a
    // non-scalar root and std::logic_error on a second call.
    void backward(Var root);

    // Sign pattern of every relu input, in recording order. Finite-difference
    // harnesses use this to detect kink crossings, where a two-sided
    // difference is not a valid derivative estimate.
    const std::vector<uint8_t>& relu_pattern() const { return relu_pattern_; }

    size_t node_count() const { return nodes_.size(); }

private:
    enum class Op {
        Constant, Input, Param,
        Conv2d, Linear, Relu, Sigmoid, Sqrt, GlobalAvgPool,
        Mul, Add, Sub, Scale, AddScalar, Concat, Split, BlockScale, MseLoss,
    };

    struct Node {
        Op op;
        Tensor value;
        Tensor grad;              // allocated lazily during backward
        std::vector<int> inputs;
        int iarg = 0;             // pad / block / split offset
        double darg = 0.0;        // scalar for Scale / AddScalar
        Parameter* bound = nullptr;
        bool needs_grad = false;
    };

    Var push(Node n);
    Node& node(Var v);
    const Node& node(Var v) const;
    const Tensor& val(int id) const;
    Tensor& grad_buffer(int id);

    std::vector<Node> nodes_;
    std::vector<uint8_t> relu_pattern_;
    bool backward_done_ = false;
};

// value <- value - lr * grad, then grads are zeroed.
// Throws TrainingDivergence if any gradient is non-finite.
void sgd_step(std::span<Parameter* const> params, double lr);
void zero_grads(std::span<Parameter* const> params);

} // namespace aacn
