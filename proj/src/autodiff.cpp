#include "aacn/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace aacn {

void glorot_init(Parameter& p, int fan_in, int fan_out, Rng& rng) {
    double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : p.value.data) v = rng.uniform(-a, a);
    p.zero_grad();
}

Tape::Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Var v) {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
        throw std::invalid_argument("Tape: invalid Var");
    return nodes_[static_cast<size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
        throw std::invalid_argument("Tape: invalid Var");
    return nodes_[static_cast<size_t>(v.id)];
}

// Parameter leaves reference the live tensor instead of copying it; the
// owning Parameter must outlive the tape.
const Tensor& Tape::val(int id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    return n.bound ? n.bound->value : n.value;
}

Tensor& Tape::grad_buffer(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.data.empty()) n.grad = Tensor(val(id).shape);
    return n.grad;
}

Tape::Var Tape::constant(Tensor t) {
    Node n;
    n.op = Op::Constant;
    n.value = std::move(t);
    n.needs_grad = false;
    return push(std::move(n));
}

Tape::Var Tape::input(Tensor t) {
    Node n;
    n.op = Op::Input;
    n.value = std::move(t);
    n.needs_grad = true;
    return push(std::move(n));
}

Tape::Var Tape::param(Parameter& p) {
    Node n;
    n.op = Op::Param;
    n.bound = &p;
    n.needs_grad = true;
    return push(std::move(n));
}

Tape::Var Tape::conv2d(Var x, Var w, Var b, int pad) {
    const Tensor& in = val(x.id);
    const Tensor& wt = val(w.id);
    const Tensor& bt = val(b.id);
    if (in.rank() != 3) throw std::invalid_argument("conv2d: input must be CxHxW");
    if (wt.rank() != 4) throw std::invalid_argument("conv2d: weights must be OxCxKhxKw");
    if (wt.dim(2) != wt.dim(3)) throw std::invalid_argument("conv2d: kernel must be square");
    const int c_in = in.dim(0), h = in.dim(1), w_in = in.dim(2);
    const int c_out = wt.dim(0), k = wt.dim(2);
    if (wt.dim(1) != c_in)
        throw std::invalid_argument("conv2d: weight channel count " + std::to_string(wt.dim(1)) +
                                    " does not match input channels " + std::to_string(c_in));
    if (bt.rank() != 1 || bt.dim(0) != c_out) throw std::invalid_argument("conv2d: bias must be [C_out]");
    if (pad < 0) pad = (k - 1) / 2;
    if (k > h + 2 * pad || k > w_in + 2 * pad)
        throw std::invalid_argument("conv2d: kernel larger than padded input");

    Node n;
    n.op = Op::Conv2d;
    n.inputs = {x.id, w.id, b.id};
    n.iarg = pad;
    const int h_out = h + 2 * pad - k + 1;
    const int w_out = w_in + 2 * pad - k + 1;
    Tensor out({c_out, h_out, w_out});
    for (int o = 0; o < c_out; ++o) {
        for (int y = 0; y < h_out; ++y) {
            for (int xx = 0; xx < w_out; ++xx) {
                double acc = bt.data[static_cast<size_t>(o)];
                for (int c = 0; c < c_in; ++c) {
                    for (int dy = 0; dy < k; ++dy) {
                        const int iy = y + dy - pad;
                        if (iy < 0 || iy >= h) continue;
                        for (int dx = 0; dx < k; ++dx) {
                            const int ix = xx + dx - pad;
                            if (ix < 0 || ix >= w_in) continue;
                            acc += wt.data[static_cast<size_t>(((o * c_in + c) * k + dy) * k + dx)] *
                                   in.data[static_cast<size_t>((c * h + iy) * w_in + ix)];
                        }
                    }
                }
                out.data[static_cast<size_t>((o * h_out + y) * w_out + xx)] = acc;
            }
        }
    }
    n.value = std::move(out);
    n.needs_grad = node(x).needs_grad || node(w).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::linear(Var x, Var w, Var b) {
    const Tensor& xv = val(x.id);
    const Tensor& wv = val(w.id);
    const Tensor& bv = val(b.id);
    if (xv.rank() != 1) throw std::invalid_argument("linear: input must be a vector");
    if (wv.rank() != 2 || wv.dim(1) != xv.dim(0))
        throw std::invalid_argument("linear: weight must be [out, in] with in = input length");
    if (bv.rank() != 1 || bv.dim(0) != wv.dim(0)) throw std::invalid_argument("linear: bias must be [out]");
    const int in = xv.dim(0), out_dim = wv.dim(0);
    Node n;
    n.op = Op::Linear;
    n.inputs = {x.id, w.id, b.id};
    Tensor out({out_dim});
    for (int i = 0; i < out_dim; ++i) {
        double acc = bv.data[static_cast<size_t>(i)];
        const double* row = &wv.data[static_cast<size_t>(i) * static_cast<size_t>(in)];
        for (int j = 0; j < in; ++j) acc += row[j] * xv.data[static_cast<size_t>(j)];
        out.data[static_cast<size_t>(i)] = acc;
    }
    n.value = std::move(out);
    n.needs_grad = node(x).needs_grad || node(w).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::relu(Var x) {
    const Tensor& xv = val(x.id);
    Node n;
    n.op = Op::Relu;
    n.inputs = {x.id};
    Tensor out(xv.shape);
    for (size_t i = 0; i < xv.data.size(); ++i) {
        const bool pos = xv.data[i] > 0.0;
        out.data[i] = pos ? xv.data[i] : 0.0;
        relu_pattern_.push_back(pos ? 1 : 0);
    }
    n.value = std::move(out);
    n.needs_grad = node(x).needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::sigmoid(Var x) {
    const Tensor& xv = val(x.id);
    Node n;
    n.op = Op::Sigmoid;
    n.inputs = {x.id};
    Tensor out(xv.shape);
    for (size_t i = 0; i < xv.data.size(); ++i) {
        const double v = xv.data[i];
        out.data[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    n.value = std::move(out);
    n.needs_grad = node(x).needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::sqrt_op(Var x) {
    const Tensor& xv = val(x.id);
    Node n;
    n.op = Op::Sqrt;
    n.inputs = {x.id};
    Tensor out(xv.shape);
    for (size_t i = 0; i < xv.data.size(); ++i) {
        if (xv.data[i] < 0.0) throw std::invalid_argument("sqrt_op: negative input");
        out.data[i] = std::sqrt(xv.data[i]);
    }
    n.value = std::move(out);
    n.needs_grad = node(x).needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::global_avg_pool(Var x) {
    const Tensor& xv = val(x.id);
    if (xv.rank() != 3 || xv.dim(1) < 1 || xv.dim(2) < 1)
        throw std::invalid_argument("global_avg_pool: input must be CxHxW with H,W >= 1");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    Node n;
    n.op = Op::GlobalAvgPool;
    n.inputs = {x.id};
    Tensor out({c});
    const double inv = 1.0 / static_cast<double>(h * w);
    for (int ci = 0; ci < c; ++ci) {
        double acc = 0.0;
        const double* base = &xv.data[static_cast<size_t>(ci) * static_cast<size_t>(h * w)];
        for (int i = 0; i < h * w; ++i) acc += base[i];
        out.data[static_cast<size_t>(ci)] = acc * inv;
    }
    n.value = std::move(out);
    n.needs_grad = node(x).needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::elementwise_mul(Var a, Var b) {
    const Tensor& av = val(a.id);
    const Tensor& bv = val(b.id);
    if (!av.same_shape(bv)) throw std::invalid_argument("elementwise_mul: shape mismatch");
    Node n;
    n.op = Op::Mul;
    n.inputs = {a.id, b.id};
    Tensor out(av.shape);
    for (size_t i = 0; i < av.data.size(); ++i) out.data[i] = av.data[i] * bv.data[i];
    n.value = std::move(out);
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::add(Var a, Var b) {
    const Tensor& av = val(a.id);
    const Tensor& bv = val(b.id);
    if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch");
    Node n;
    n.op = Op::Add;
    n.inputs = {a.id, b.id};
    Tensor out(av.shape);
    for (size_t i = 0; i < av.data.size(); ++i) out.data[i] = av.data[i] + bv.data[i];
    n.value = std::move(out);
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::sub(Var a, Var b) {
    const Tensor& av = val(a.id);
    const Tensor& bv = val(b.id);
    if (!av.same_shape(bv)) throw std::invalid_argument("sub: shape mismatch");
    Node n;
    n.op = Op::Sub;
    n.inputs = {a.id, b.id};
    Tensor out(av.shape);
    for (size_t i = 0; i < av.data.size(); ++i) out.data[i] = av.data[i] - bv.data[i];
    n.value = std::move(out);
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::scale(Var a, double s) {
    const Tensor& av = val(a.id);
    Node n;
    n.op = Op::Scale;
    n.inputs = {a.id};
    n.darg = s;
    Tensor out(av.shape);
    for (size_t i = 0; i < av.data.size(); ++i) out.data[i] = av.data[i] * s;
    n.value = std::move(out);
    n.needs_grad = node(a).needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::add_scalar(Var a, double c) {
    const Tensor& av = val(a.id);
    Node n;
    n.op = Op::AddScalar;
    n.inputs = {a.id};
    n.darg = c;
    Tensor out(av.shape);
    for (size_t i = 0; i < av.data.size(); ++i) out.data[i] = av.data[i] + c;
    n.value = std::move(out);
    n.needs_grad = node(a).needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    // Concatenation runs along axis 0; trailing dimensions must agree.
    const Tensor& first = val(parts[0].id);
    std::vector<int> trailing(first.shape.begin() + 1, first.shape.end());
    int total = 0;
    bool needs = false;
    for (Var p : parts) {
        const Tensor& t = val(p.id);
        if (t.rank() != first.rank() ||
            !std::equal(trailing.begin(), trailing.end(), t.shape.begin() + 1))
            throw std::invalid_argument("concat: trailing dimensions differ");
        total += t.dim(0);
        needs = needs || node(p).needs_grad;
    }
    Node n;
    n.op = Op::Concat;
    for (Var p : parts) n.inputs.push_back(p.id);
    std::vector<int> shape = {total};
    shape.insert(shape.end(), trailing.begin(), trailing.end());
    Tensor out(std::move(shape));
    size_t off = 0;
    for (Var p : parts) {
        const Tensor& t = val(p.id);
        std::copy(t.data.begin(), t.data.end(), out.data.begin() + static_cast<long>(off));
        off += t.data.size();
    }
    n.value = std::move(out);
    n.needs_grad = needs;
    return push(std::move(n));
}

std::vector<Tape::Var> Tape::split(Var x, const std::vector<int>& sizes) {
    const Tensor& xv = val(x.id);
    int total = 0;
    for (int s : sizes) total += s;
    if (total != xv.dim(0)) throw std::invalid_argument("split: sizes do not sum to axis-0 length");
    std::vector<int> trailing(xv.shape.begin() + 1, xv.shape.end());
    long long inner = 1;
    for (int d : trailing) inner *= d;

    std::vector<Var> out;
    int offset = 0;
    for (int s : sizes) {
        Node n;
        n.op = Op::Split;
        n.inputs = {x.id};
        n.iarg = offset;
        std::vector<int> shape = {s};
        shape.insert(shape.end(), trailing.begin(), trailing.end());
        Tensor t(std::move(shape));
        const size_t begin = static_cast<size_t>(offset) * static_cast<size_t>(inner);
        std::copy(xv.data.begin() + static_cast<long>(begin),
                  xv.data.begin() + static_cast<long>(begin + t.data.size()), t.data.begin());
        n.value = std::move(t);
        n.needs_grad = node(x).needs_grad;
        out.push_back(push(std::move(n)));
        offset += s;
    }
    return out;
}

Tape::Var Tape::block_scale(Var x, Var w, int block) {
    const Tensor& xv = val(x.id);
    const Tensor& wv = val(w.id);
    if (xv.rank() != 1 || wv.rank() != 1) throw std::invalid_argument("block_scale: vector inputs required");
    if (block <= 0 || xv.dim(0) != wv.dim(0) * block)
        throw std::invalid_argument("block_scale: length must equal parts * block");
    Node n;
    n.op = Op::BlockScale;
    n.inputs = {x.id, w.id};
    n.iarg = block;
    Tensor out(xv.shape);
    for (int p = 0; p < wv.dim(0); ++p) {
        const double s = wv.data[static_cast<size_t>(p)];
        for (int i = 0; i < block; ++i) {
            const size_t idx = static_cast<size_t>(p * block + i);
            out.data[idx] = xv.data[idx] * s;
        }
    }
    n.value = std::move(out);
    n.needs_grad = node(x).needs_grad || node(w).needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::mse_loss(Var pred, Var target) {
    const Tensor& pv = val(pred.id);
    const Tensor& tv = val(target.id);
    if (!pv.same_shape(tv)) throw std::invalid_argument("mse_loss: shape mismatch");
    Node n;
    n.op = Op::MseLoss;
    n.inputs = {pred.id, target.id};
    double acc = 0.0;
    for (size_t i = 0; i < pv.data.size(); ++i) {
        const double d = pv.data[i] - tv.data[i];
        acc += d * d;
    }
    n.value = Tensor::from({1}, {acc});
    n.needs_grad = node(pred).needs_grad || node(target).needs_grad;
    return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
    node(v); // bounds check
    return val(v.id);
}

const Tensor& Tape::grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.data.empty()) throw std::logic_error("Tape::grad: no gradient recorded (run backward first)");
    return n.grad;
}

void Tape::backward(Var root) {
    if (backward_done_) throw std::logic_error("Tape::backward: called twice without a new forward pass");
    node(root); // bounds check
    if (val(root.id).size() != 1) throw std::invalid_argument("Tape::backward: root must be scalar");
    backward_done_ = true;
    grad_buffer(root.id).data[0] = 1.0;

    for (int id = root.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.data.empty() || !n.needs_grad) continue;
        const Tensor& g = n.grad;
        switch (n.op) {
        case Op::Constant:
        case Op::Input:
        case Op::Param:
            break;
        case Op::Conv2d: {
            const Tensor& in = val(n.inputs[0]);
            const Tensor& wt = val(n.inputs[1]);
            const int c_in = in.dim(0), h = in.dim(1), w_in = in.dim(2);
            const int c_out = wt.dim(0), k = wt.dim(2), pad = n.iarg;
            const int h_out = n.value.dim(1), w_out = n.value.dim(2);
            Tensor* gx = nodes_[static_cast<size_t>(n.inputs[0])].needs_grad ? &grad_buffer(n.inputs[0]) : nullptr;
            Tensor* gw = nodes_[static_cast<size_t>(n.inputs[1])].needs_grad ? &grad_buffer(n.inputs[1]) : nullptr;
            Tensor* gb = nodes_[static_cast<size_t>(n.inputs[2])].needs_grad ? &grad_buffer(n.inputs[2]) : nullptr;
            for (int o = 0; o < c_out; ++o) {
                for (int y = 0; y < h_out; ++y) {
                    for (int xx = 0; xx < w_out; ++xx) {
                        const double go = g.data[static_cast<size_t>((o * h_out + y) * w_out + xx)];
                        if (go == 0.0) continue;
                        if (gb) gb->data[static_cast<size_t>(o)] += go;
                        for (int c = 0; c < c_in; ++c) {
                            for (int dy = 0; dy < k; ++dy) {
                                const int iy = y + dy - pad;
                                if (iy < 0 || iy >= h) continue;
                                for (int dx = 0; dx < k; ++dx) {
                                    const int ix = xx + dx - pad;
                                    if (ix < 0 || ix >= w_in) continue;
                                    const size_t widx = static_cast<size_t>(((o * c_in + c) * k + dy) * k + dx);
                                    const size_t iidx = static_cast<size_t>((c * h + iy) * w_in + ix);
                                    if (gx) gx->data[iidx] += wt.data[widx] * go;
                                    if (gw) gw->data[widx] += in.data[iidx] * go;
                                }
                            }
                        }
                    }
                }
            }
            break;
        }
        case Op::Linear: {
            const Tensor& xv = val(n.inputs[0]);
            const Tensor& wv = val(n.inputs[1]);
            const int in = xv.dim(0), out_dim = wv.dim(0);
            Tensor* gx = nodes_[static_cast<size_t>(n.inputs[0])].needs_grad ? &grad_buffer(n.inputs[0]) : nullptr;
            Tensor* gw = nodes_[static_cast<size_t>(n.inputs[1])].needs_grad ? &grad_buffer(n.inputs[1]) : nullptr;
            Tensor* gb = nodes_[static_cast<size_t>(n.inputs[2])].needs_grad ? &grad_buffer(n.inputs[2]) : nullptr;
            for (int i = 0; i < out_dim; ++i) {
                const double go = g.data[static_cast<size_t>(i)];
                if (go == 0.0) continue;
                if (gb) gb->data[static_cast<size_t>(i)] += go;
                const size_t row = static_cast<size_t>(i) * static_cast<size_t>(in);
                for (int j = 0; j < in; ++j) {
                    if (gx) gx->data[static_cast<size_t>(j)] += wv.data[row + static_cast<size_t>(j)] * go;
                    if (gw) gw->data[row + static_cast<size_t>(j)] += xv.data[static_cast<size_t>(j)] * go;
                }
            }
            break;
        }
        case Op::Relu: {
            if (!nodes_[static_cast<size_t>(n.inputs[0])].needs_grad) break;
            const Tensor& xv = val(n.inputs[0]);
            Tensor& gx = grad_buffer(n.inputs[0]);
            for (size_t i = 0; i < g.data.size(); ++i)
                if (xv.data[i] > 0.0) gx.data[i] += g.data[i];
            break;
        }
        case Op::Sigmoid: {
            if (!nodes_[static_cast<size_t>(n.inputs[0])].needs_grad) break;
            Tensor& gx = grad_buffer(n.inputs[0]);
            for (size_t i = 0; i < g.data.size(); ++i) {
                const double s = n.value.data[i];
                gx.data[i] += s * (1.0 - s) * g.data[i];
            }
            break;
        }
        case Op::Sqrt: {
            if (!nodes_[static_cast<size_t>(n.inputs[0])].needs_grad) break;
            Tensor& gx = grad_buffer(n.inputs[0]);
            for (size_t i = 0; i < g.data.size(); ++i) {
                // Subgradient 0 at the origin keeps zero-distance pairs from
                // poisoning the update with NaNs.
                if (n.value.data[i] > 0.0) gx.data[i] += 0.5 / n.value.data[i] * g.data[i];
            }
            break;
        }
        case Op::GlobalAvgPool: {
            if (!nodes_[static_cast<size_t>(n.inputs[0])].needs_grad) break;
            const Tensor& xv = val(n.inputs[0]);
            Tensor& gx = grad_buffer(n.inputs[0]);
            const int c = xv.dim(0), hw = xv.dim(1) * xv.dim(2);
            const double inv = 1.0 / static_cast<double>(hw);
            for (int ci = 0; ci < c; ++ci) {
                const double go = g.data[static_cast<size_t>(ci)] * inv;
                double* base = &gx.data[static_cast<size_t>(ci) * static_cast<size_t>(hw)];
                for (int i = 0; i < hw; ++i) base[i] += go;
            }
            break;
        }
        case Op::Mul: {
            const Tensor& av = val(n.inputs[0]);
            const Tensor& bv = val(n.inputs[1]);
            if (nodes_[static_cast<size_t>(n.inputs[0])].needs_grad) {
                Tensor& ga = grad_buffer(n.inputs[0]);
                for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += bv.data[i] * g.data[i];
            }
            if (nodes_[static_cast<size_t>(n.inputs[1])].needs_grad) {
                Tensor& gb = grad_buffer(n.inputs[1]);
                for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] += av.data[i] * g.data[i];
            }
            break;
        }
        case Op::Add: {
            for (int s = 0; s < 2; ++s) {
                if (!nodes_[static_cast<size_t>(n.inputs[static_cast<size_t>(s)])].needs_grad) continue;
                Tensor& gi = grad_buffer(n.inputs[static_cast<size_t>(s)]);
                for (size_t i = 0; i < g.data.size(); ++i) gi.data[i] += g.data[i];
            }
            break;
        }
        case Op::Sub: {
            if (nodes_[static_cast<size_t>(n.inputs[0])].needs_grad) {
                Tensor& ga = grad_buffer(n.inputs[0]);
                for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
            }
            if (nodes_[static_cast<size_t>(n.inputs[1])].needs_grad) {
                Tensor& gb = grad_buffer(n.inputs[1]);
                for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] -= g.data[i];
            }
            break;
        }
        case Op::Scale: {
            if (!nodes_[static_cast<size_t>(n.inputs[0])].needs_grad) break;
            Tensor& gx = grad_buffer(n.inputs[0]);
            for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] += n.darg * g.data[i];
            break;
        }
        case Op::AddScalar: {
            if (!nodes_[static_cast<size_t>(n.inputs[0])].needs_grad) break;
            Tensor& gx = grad_buffer(n.inputs[0]);
            for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
            break;
        }
        case Op::Concat: {
            size_t off = 0;
            for (int in_id : n.inputs) {
                const size_t len = val(in_id).data.size();
                if (nodes_[static_cast<size_t>(in_id)].needs_grad) {
                    Tensor& gi = grad_buffer(in_id);
                    for (size_t i = 0; i < len; ++i) gi.data[i] += g.data[off + i];
                }
                off += len;
            }
            break;
        }
        case Op::Split: {
            if (!nodes_[static_cast<size_t>(n.inputs[0])].needs_grad) break;
            const Tensor& xv = val(n.inputs[0]);
            Tensor& gx = grad_buffer(n.inputs[0]);
            long long inner = 1;
            for (int d = 1; d < xv.rank(); ++d) inner *= xv.dim(d);
            const size_t begin = static_cast<size_t>(n.iarg) * static_cast<size_t>(inner);
            for (size_t i = 0; i < g.data.size(); ++i) gx.data[begin + i] += g.data[i];
            break;
        }
        case Op::BlockScale: {
            const Tensor& xv = val(n.inputs[0]);
            const Tensor& wv = val(n.inputs[1]);
            const int block = n.iarg;
            const int parts = wv.dim(0);
            Tensor* gx = nodes_[static_cast<size_t>(n.inputs[0])].needs_grad ? &grad_buffer(n.inputs[0]) : nullptr;
            Tensor* gw = nodes_[static_cast<size_t>(n.inputs[1])].needs_grad ? &grad_buffer(n.inputs[1]) : nullptr;
            for (int p = 0; p < parts; ++p) {
                const double s = wv.data[static_cast<size_t>(p)];
                for (int i = 0; i < block; ++i) {
                    const size_t idx = static_cast<size_t>(p * block + i);
                    if (gx) gx->data[idx] += s * g.data[idx];
                    if (gw) gw->data[static_cast<size_t>(p)] += xv.data[idx] * g.data[idx];
                }
            }
            break;
        }
        case Op::MseLoss: {
            const Tensor& pv = val(n.inputs[0]);
            const Tensor& tv = val(n.inputs[1]);
            const double go = g.data[0];
            if (nodes_[static_cast<size_t>(n.inputs[0])].needs_grad) {
                Tensor& gp = grad_buffer(n.inputs[0]);
                for (size_t i = 0; i < pv.data.size(); ++i)
                    gp.data[i] += 2.0 * (pv.data[i] - tv.data[i]) * go;
            }
            if (nodes_[static_cast<size_t>(n.inputs[1])].needs_grad) {
                Tensor& gt = grad_buffer(n.inputs[1]);
                for (size_t i = 0; i < pv.data.size(); ++i)
                    gt.data[i] -= 2.0 * (pv.data[i] - tv.data[i]) * go;
            }
            break;
        }
        }
    }

    // Route accumulated leaf gradients into their bound parameters.
    for (Node& n : nodes_) {
        if (n.op == Op::Param && n.bound && !n.grad.data.empty()) {
            for (size_t i = 0; i < n.grad.data.size(); ++i) n.bound->grad.data[i] += n.grad.data[i];
        }
    }
}

void sgd_step(std::span<Parameter* const> params, double lr) {
    for (Parameter* p : params) {
        if (!p->grad.all_finite())
            throw TrainingDivergence("sgd_step: non-finite gradient in parameter '" + p->name + "'");
    }
    for (Parameter* p : params) {
        for (size_t i = 0; i < p->value.data.size(); ++i) p->value.data[i] -= lr * p->grad.data[i];
        p->zero_grad();
    }
}

void zero_grads(std::span<Parameter* const> params) {
    for (Parameter* p : params) p->zero_grad();
}

} // namespace aacn
