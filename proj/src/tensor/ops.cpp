#include "pmaa/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "pmaa/kernels.hpp"

namespace pmaa {

namespace {

using Index = std::ptrdiff_t;

template <class F>
void for_each_index(std::size_t count, F&& f) {
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < Index(count); ++i) f(std::size_t(i));
}

[[noreturn]] void invalid(const std::string& what) { throw std::invalid_argument(what); }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.defined() || !b.defined()) invalid(std::string(op) + ": undefined operand");
    const Shape& x = a.shape();
    const Shape& y = b.shape();
    if (x == y) return;
    const char* dim = x.n != y.n ? "n" : x.c != y.c ? "c" : x.h != y.h ? "h" : "w";
    invalid(std::string(op) + ": shape mismatch in dimension " + dim + " (" + x.str() + " vs " +
            y.str() + ")");
}

// ---------------------------------------------------------------- conv2d

class Conv2dNode final : public Node {
public:
    Conv2dNode(const Tensor& in, const Tensor& w, const Tensor& b, kernels::ConvGeometry g)
        : Node({in, w, b}), geom_(g) {}
    const char* name() const override { return "conv2d"; }

protected:
    void apply(std::span<const double> grad_out) override {
        const auto& in = inputs();
        if (auto gi = input_grad(0); !gi.empty())
            kernels::conv2d_backward_input(geom_, grad_out, in[1].data(), gi);
        auto gw = input_grad(1);
        auto gb = input_grad(2);
        if (!gw.empty() || !gb.empty())
            kernels::conv2d_backward_weight(geom_, grad_out, in[0].data(), gw, gb);
    }

private:
    kernels::ConvGeometry geom_;
};

// ---------------------------------------------------------------- pooling

struct Bin {
    std::size_t begin;
    std::size_t end;
};

Bin pool_bin(std::size_t i, std::size_t in, std::size_t out) {
    return {(i * in) / out, ((i + 1) * in + out - 1) / out};
}

class AvgPoolNode final : public Node {
public:
    AvgPoolNode(const Tensor& in, Shape out) : Node({in}), out_(out) {}
    const char* name() const override { return "adaptive_avg_pool2d"; }

protected:
    void apply(std::span<const double> grad_out) override {
        auto gi = input_grad(0);
        if (gi.empty()) return;
        const Shape& s = inputs()[0].shape();
        for_each_index(s.n * s.c, [&](std::size_t p) {
            for (std::size_t oy = 0; oy < out_.h; ++oy) {
                const Bin by = pool_bin(oy, s.h, out_.h);
                for (std::size_t ox = 0; ox < out_.w; ++ox) {
                    const Bin bx = pool_bin(ox, s.w, out_.w);
                    const double share = grad_out[(p * out_.h + oy) * out_.w + ox] /
                                         double((by.end - by.begin) * (bx.end - bx.begin));
                    for (std::size_t y = by.begin; y < by.end; ++y)
                        for (std::size_t x = bx.begin; x < bx.end; ++x)
                            gi[(p * s.h + y) * s.w + x] += share;
                }
            }
        });
    }

private:
    Shape out_;
};

class UpsampleNode final : public Node {
public:
    UpsampleNode(const Tensor& in, std::size_t factor) : Node({in}), factor_(factor) {}
    const char* name() const override { return "upsample_nearest"; }

protected:
    void apply(std::span<const double> grad_out) override {
        auto gi = input_grad(0);
        if (gi.empty()) return;
        const Shape& s = inputs()[0].shape();
        const std::size_t ow = s.w * factor_;
        const std::size_t oh = s.h * factor_;
        for_each_index(s.n * s.c, [&](std::size_t p) {
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x = 0; x < ow; ++x)
                    gi[(p * s.h + y / factor_) * s.w + x / factor_] += grad_out[(p * oh + y) * ow + x];
        });
    }

private:
    std::size_t factor_;
};

// ---------------------------------------------------------------- norm

class InstanceNormNode final : public Node {
public:
    InstanceNormNode(const Tensor& in, const Tensor& gamma, const Tensor& beta,
                     kernels::NormGeometry g, std::vector<double> normalized,
                     std::vector<double> inv_std)
        : Node({in, gamma, beta}),
          geom_(g),
          normalized_(std::move(normalized)),
          inv_std_(std::move(inv_std)) {}
    const char* name() const override { return "instance_norm2d"; }

protected:
    void apply(std::span<const double> grad_out) override {
        kernels::instance_norm_backward(geom_, grad_out, normalized_, inv_std_, inputs()[1].data(),
                                        input_grad(0), input_grad(1), input_grad(2));
    }

private:
    kernels::NormGeometry geom_;
    std::vector<double> normalized_;
    std::vector<double> inv_std_;
};

// ---------------------------------------------------------------- pointwise

class AddNode final : public Node {
public:
    AddNode(const Tensor& a, const Tensor& b, double sign) : Node({a, b}), sign_(sign) {}
    const char* name() const override { return sign_ > 0 ? "add" : "sub"; }

protected:
    void apply(std::span<const double> grad_out) override {
        if (auto ga = input_grad(0); !ga.empty())
            for_each_index(ga.size(), [&](std::size_t i) { ga[i] += grad_out[i]; });
        if (auto gb = input_grad(1); !gb.empty())
            for_each_index(gb.size(), [&](std::size_t i) { gb[i] += sign_ * grad_out[i]; });
    }

private:
    double sign_;
};

class MulNode final : public Node {
public:
    MulNode(const Tensor& a, const Tensor& b) : Node({a, b}) {}
    const char* name() const override { return "mul"; }

protected:
    void apply(std::span<const double> grad_out) override {
        const auto a = inputs()[0].data();
        const auto b = inputs()[1].data();
        if (auto ga = input_grad(0); !ga.empty())
            for_each_index(ga.size(), [&](std::size_t i) { ga[i] += grad_out[i] * b[i]; });
        if (auto gb = input_grad(1); !gb.empty())
            for_each_index(gb.size(), [&](std::size_t i) { gb[i] += grad_out[i] * a[i]; });
    }
};

class ScaleNode final : public Node {
public:
    ScaleNode(const Tensor& x, const Tensor& alpha) : Node({x, alpha}) {}
    const char* name() const override { return "scale"; }

protected:
    void apply(std::span<const double> grad_out) override {
        const auto x = inputs()[0].data();
        const double alpha = inputs()[1].data()[0];
        if (auto gx = input_grad(0); !gx.empty())
            for_each_index(gx.size(), [&](std::size_t i) { gx[i] += alpha * grad_out[i]; });
        if (auto ga = input_grad(1); !ga.empty()) {
            double acc = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) acc += grad_out[i] * x[i];
            ga[0] += acc;
        }
    }
};

class ConstScaleNode final : public Node {
public:
    ConstScaleNode(const Tensor& x, double alpha) : Node({x}), alpha_(alpha) {}
    const char* name() const override { return "scale_const"; }

protected:
    void apply(std::span<const double> grad_out) override {
        if (auto gx = input_grad(0); !gx.empty())
            for_each_index(gx.size(), [&](std::size_t i) { gx[i] += alpha_ * grad_out[i]; });
    }

private:
    double alpha_;
};

enum class Activation { Relu, Sigmoid, Tanh };

class ActivationNode final : public Node {
public:
    ActivationNode(const Tensor& x, Activation kind, std::vector<double> out)
        : Node({x}), kind_(kind), out_(std::move(out)) {}
    const char* name() const override {
        switch (kind_) {
            case Activation::Relu: return "relu";
            case Activation::Sigmoid: return "sigmoid";
            case Activation::Tanh: return "tanh";
        }
        return "activation";
    }

protected:
    void apply(std::span<const double> grad_out) override {
        auto gx = input_grad(0);
        if (gx.empty()) return;
        switch (kind_) {
            case Activation::Relu:
                // subgradient 0 at exactly 0
                for_each_index(gx.size(), [&](std::size_t i) {
                    if (out_[i] > 0.0) gx[i] += grad_out[i];
                });
                break;
            case Activation::Sigmoid:
                for_each_index(gx.size(), [&](std::size_t i) {
                    gx[i] += grad_out[i] * out_[i] * (1.0 - out_[i]);
                });
                break;
            case Activation::Tanh:
                for_each_index(gx.size(), [&](std::size_t i) {
                    gx[i] += grad_out[i] * (1.0 - out_[i] * out_[i]);
                });
                break;
        }
    }

private:
    Activation kind_;
    std::vector<double> out_;
};

Tensor activation(const Tensor& x, Activation kind) {
    if (!x.defined()) invalid("activation: undefined operand");
    const auto in = x.data();
    std::vector<double> out(in.size());
    switch (kind) {
        case Activation::Relu:
            for_each_index(out.size(), [&](std::size_t i) { out[i] = in[i] > 0.0 ? in[i] : 0.0; });
            break;
        case Activation::Sigmoid:
            for_each_index(out.size(), [&](std::size_t i) {
                // split by sign so exp never overflows
                if (in[i] >= 0.0) {
                    out[i] = 1.0 / (1.0 + std::exp(-in[i]));
                } else {
                    const double e = std::exp(in[i]);
                    out[i] = e / (1.0 + e);
                }
            });
            break;
        case Activation::Tanh:
            for_each_index(out.size(), [&](std::size_t i) { out[i] = std::tanh(in[i]); });
            break;
    }
    std::shared_ptr<Node> node;
    if (should_record({&x})) node = std::make_shared<ActivationNode>(x, kind, out);
    return make_result(x.shape(), std::move(out), std::move(node));
}

// ---------------------------------------------------------------- channels

class ConcatNode final : public Node {
public:
    explicit ConcatNode(std::vector<Tensor> inputs) : Node(std::move(inputs)) {}
    const char* name() const override { return "concat_channels"; }

protected:
    void apply(std::span<const double> grad_out) override {
        const Shape& first = inputs()[0].shape();
        std::size_t total_c = 0;
        for (const auto& t : inputs()) total_c += t.shape().c;
        const std::size_t plane = first.plane();
        std::size_t c0 = 0;
        for (std::size_t k = 0; k < inputs().size(); ++k) {
            const std::size_t ck = inputs()[k].shape().c;
            if (auto g = input_grad(k); !g.empty()) {
                for (std::size_t n = 0; n < first.n; ++n) {
                    const double* src = grad_out.data() + (n * total_c + c0) * plane;
                    double* dst = g.data() + n * ck * plane;
                    for (std::size_t i = 0; i < ck * plane; ++i) dst[i] += src[i];
                }
            }
            c0 += ck;
        }
    }
};

class SliceNode final : public Node {
public:
    SliceNode(const Tensor& x, std::size_t begin, std::size_t count)
        : Node({x}), begin_(begin), count_(count) {}
    const char* name() const override { return "slice_channels"; }

protected:
    void apply(std::span<const double> grad_out) override {
        auto g = input_grad(0);
        if (g.empty()) return;
        const Shape& s = inputs()[0].shape();
        const std::size_t plane = s.plane();
        for (std::size_t n = 0; n < s.n; ++n) {
            const double* src = grad_out.data() + n * count_ * plane;
            double* dst = g.data() + (n * s.c + begin_) * plane;
            for (std::size_t i = 0; i < count_ * plane; ++i) dst[i] += src[i];
        }
    }

private:
    std::size_t begin_;
    std::size_t count_;
};

// ---------------------------------------------------------------- reductions

class SumNode final : public Node {
public:
    SumNode(const Tensor& x, double factor) : Node({x}), factor_(factor) {}
    const char* name() const override { return "sum"; }

protected:
    void apply(std::span<const double> grad_out) override {
        auto g = input_grad(0);
        const double v = grad_out[0] * factor_;
        for (double& gi : g) gi += v;
    }

private:
    double factor_;
};

Tensor reduce(const Tensor& x, double factor) {
    if (!x.defined()) invalid("sum: undefined operand");
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    std::shared_ptr<Node> node;
    if (should_record({&x})) node = std::make_shared<SumNode>(x, factor);
    return make_result(Shape{1, 1, 1, 1}, {acc * factor}, std::move(node));
}

// ---------------------------------------------------------------- attention

class AttentionNode final : public Node {
public:
    AttentionNode(const Tensor& q, const Tensor& k, const Tensor& v, kernels::AttentionGeometry g,
                  std::vector<double> probs)
        : Node({q, k, v}), geom_(g), probs_(std::move(probs)) {}
    const char* name() const override { return "patch_attention"; }

protected:
    void apply(std::span<const double> grad_out) override {
        kernels::attention_backward(geom_, grad_out, inputs()[0].data(), inputs()[1].data(),
                                    inputs()[2].data(), probs_, input_grad(0), input_grad(1),
                                    input_grad(2));
    }

private:
    kernels::AttentionGeometry geom_;
    std::vector<double> probs_;
};

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const Conv2dOptions& options) {
    if (!input.defined() || !weight.defined()) invalid("conv2d: undefined operand");
    const Shape& in = input.shape();
    const Shape& w = weight.shape();
    const std::size_t groups = options.groups;
    if (groups == 0) invalid("conv2d: groups must be positive");
    if (options.stride_h == 0 || options.stride_w == 0) invalid("conv2d: stride must be positive");
    if (in.c % groups != 0)
        invalid("conv2d: input channels c=" + std::to_string(in.c) + " not divisible by groups=" +
                std::to_string(groups));
    if (w.n % groups != 0)
        invalid("conv2d: output channels co=" + std::to_string(w.n) + " not divisible by groups=" +
                std::to_string(groups));
    if (w.c != in.c / groups)
        invalid("conv2d: weight dimension c=" + std::to_string(w.c) + " must equal input c/groups=" +
                std::to_string(in.c / groups));
    if (w.h % 2 == 0 || w.w % 2 == 0)
        invalid("conv2d: kernel dimensions h/w must be odd, got " + w.str());
    if (bias.defined() && bias.numel() != w.n)
        invalid("conv2d: bias dimension n=" + std::to_string(bias.numel()) +
                " must equal output channels " + std::to_string(w.n));
    if (in.h + 2 * options.pad_h < w.h) invalid("conv2d: kernel h larger than padded input h");
    if (in.w + 2 * options.pad_w < w.w) invalid("conv2d: kernel w larger than padded input w");

    kernels::ConvGeometry g;
    g.in = in;
    g.weight = w;
    g.out = Shape{in.n, w.n, (in.h + 2 * options.pad_h - w.h) / options.stride_h + 1,
                  (in.w + 2 * options.pad_w - w.w) / options.stride_w + 1};
    g.stride_h = options.stride_h;
    g.stride_w = options.stride_w;
    g.pad_h = options.pad_h;
    g.pad_w = options.pad_w;
    g.groups = groups;

    std::vector<double> out(g.out.numel());
    kernels::conv2d_forward(g, input.data(),
                            weight.data(), bias.defined() ? bias.data() : std::span<const double>{},
                            out);
    std::shared_ptr<Node> node;
    if (should_record({&input, &weight, &bias}))
        node = std::make_shared<Conv2dNode>(input, weight, bias, g);
    return make_result(g.out, std::move(out), std::move(node));
}

Tensor adaptive_avg_pool2d(const Tensor& input, std::size_t out_h, std::size_t out_w) {
    if (!input.defined()) invalid("adaptive_avg_pool2d: undefined operand");
    const Shape& s = input.shape();
    if (out_h == 0 || out_w == 0) invalid("adaptive_avg_pool2d: output size must be positive");
    if (out_h > s.h) invalid("adaptive_avg_pool2d: output h larger than input h");
    if (out_w > s.w) invalid("adaptive_avg_pool2d: output w larger than input w");
    const Shape os{s.n, s.c, out_h, out_w};
    const auto in = input.data();
    std::vector<double> out(os.numel());
    for_each_index(s.n * s.c, [&](std::size_t p) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const Bin by = pool_bin(oy, s.h, out_h);
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const Bin bx = pool_bin(ox, s.w, out_w);
                double acc = 0.0;
                for (std::size_t y = by.begin; y < by.end; ++y)
                    for (std::size_t x = bx.begin; x < bx.end; ++x) acc += in[(p * s.h + y) * s.w + x];
                out[(p * out_h + oy) * out_w + ox] =
                    acc / double((by.end - by.begin) * (bx.end - bx.begin));
            }
        }
    });
    std::shared_ptr<Node> node;
    if (should_record({&input})) node = std::make_shared<AvgPoolNode>(input, os);
    return make_result(os, std::move(out), std::move(node));
}

Tensor upsample_nearest(const Tensor& input, std::size_t factor) {
    if (!input.defined()) invalid("upsample_nearest: undefined operand");
    if (factor == 0) invalid("upsample_nearest: factor must be positive");
    const Shape& s = input.shape();
    const Shape os{s.n, s.c, s.h * factor, s.w * factor};
    const auto in = input.data();
    std::vector<double> out(os.numel());
    for_each_index(s.n * s.c, [&](std::size_t p) {
        for (std::size_t y = 0; y < os.h; ++y)
            for (std::size_t x = 0; x < os.w; ++x)
                out[(p * os.h + y) * os.w + x] = in[(p * s.h + y / factor) * s.w + x / factor];
    });
    std::shared_ptr<Node> node;
    if (should_record({&input})) node = std::make_shared<UpsampleNode>(input, factor);
    return make_result(os, std::move(out), std::move(node));
}

Tensor instance_norm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps) {
    if (!input.defined() || !gamma.defined() || !beta.defined())
        invalid("instance_norm2d: undefined operand");
    const Shape& s = input.shape();
    if (s.plane() == 0) invalid("instance_norm2d: empty spatial plane");
    if (gamma.numel() != s.c) invalid("instance_norm2d: gamma size must equal channels c");
    if (beta.numel() != s.c) invalid("instance_norm2d: beta size must equal channels c");
    kernels::NormGeometry g{s, eps};
    std::vector<double> out(s.numel());
    std::vector<double> normalized(s.numel());
    std::vector<double> inv_std(s.n * s.c);
    kernels::instance_norm_forward(g, input.data(), gamma.data(), beta.data(), out, normalized,
                                   inv_std);
    std::shared_ptr<Node> node;
    if (should_record({&input, &gamma, &beta}))
        node = std::make_shared<InstanceNormNode>(input, gamma, beta, g, std::move(normalized),
                                                  std::move(inv_std));
    return make_result(s, std::move(out), std::move(node));
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    const auto x = a.data();
    const auto y = b.data();
    std::vector<double> out(x.size());
    for_each_index(out.size(), [&](std::size_t i) { out[i] = x[i] + y[i]; });
    std::shared_ptr<Node> node;
    if (should_record({&a, &b})) node = std::make_shared<AddNode>(a, b, 1.0);
    return make_result(a.shape(), std::move(out), std::move(node));
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    const auto x = a.data();
    const auto y = b.data();
    std::vector<double> out(x.size());
    for_each_index(out.size(), [&](std::size_t i) { out[i] = x[i] - y[i]; });
    std::shared_ptr<Node> node;
    if (should_record({&a, &b})) node = std::make_shared<AddNode>(a, b, -1.0);
    return make_result(a.shape(), std::move(out), std::move(node));
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.numel());
    kernels::mul(a.data(), b.data(), out);
    std::shared_ptr<Node> node;
    if (should_record({&a, &b})) node = std::make_shared<MulNode>(a, b);
    return make_result(a.shape(), std::move(out), std::move(node));
}

Tensor scale(const Tensor& x, const Tensor& alpha) {
    if (!x.defined() || !alpha.defined()) invalid("scale: undefined operand");
    if (alpha.numel() != 1) invalid("scale: alpha must hold a single value, got " + alpha.shape().str());
    const double a = alpha.data()[0];
    const auto in = x.data();
    std::vector<double> out(in.size());
    for_each_index(out.size(), [&](std::size_t i) { out[i] = a * in[i]; });
    std::shared_ptr<Node> node;
    if (should_record({&x, &alpha})) node = std::make_shared<ScaleNode>(x, alpha);
    return make_result(x.shape(), std::move(out), std::move(node));
}

Tensor scale(const Tensor& x, double alpha) {
    if (!x.defined()) invalid("scale: undefined operand");
    const auto in = x.data();
    std::vector<double> out(in.size());
    for_each_index(out.size(), [&](std::size_t i) { out[i] = alpha * in[i]; });
    std::shared_ptr<Node> node;
    if (should_record({&x})) node = std::make_shared<ConstScaleNode>(x, alpha);
    return make_result(x.shape(), std::move(out), std::move(node));
}

Tensor relu(const Tensor& x) { return activation(x, Activation::Relu); }
Tensor sigmoid(const Tensor& x) { return activation(x, Activation::Sigmoid); }
Tensor tanh(const Tensor& x) { return activation(x, Activation::Tanh); }

Tensor concat_channels(std::span<const Tensor> inputs) {
    if (inputs.empty()) invalid("concat_channels: no inputs");
    const Shape& first = inputs.front().shape();
    std::size_t total_c = 0;
    for (const Tensor& t : inputs) {
        const Shape& s = t.shape();
        if (s.n != first.n) invalid("concat_channels: mismatched dimension n");
        if (s.h != first.h) invalid("concat_channels: mismatched dimension h");
        if (s.w != first.w) invalid("concat_channels: mismatched dimension w");
        total_c += s.c;
    }
    const Shape os{first.n, total_c, first.h, first.w};
    const std::size_t plane = first.plane();
    std::vector<double> out(os.numel());
    std::size_t c0 = 0;
    for (const Tensor& t : inputs) {
        const std::size_t ck = t.shape().c;
        const auto src = t.data();
        for (std::size_t n = 0; n < first.n; ++n)
            std::copy_n(src.data() + n * ck * plane, ck * plane,
                        out.data() + (n * total_c + c0) * plane);
        c0 += ck;
    }
    std::shared_ptr<Node> node;
    if (should_record(inputs))
        node = std::make_shared<ConcatNode>(std::vector<Tensor>(inputs.begin(), inputs.end()));
    return make_result(os, std::move(out), std::move(node));
}

Tensor concat_channels(std::initializer_list<Tensor> inputs) {
    return concat_channels(std::span<const Tensor>(inputs.begin(), inputs.size()));
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count) {
    if (!x.defined()) invalid("slice_channels: undefined operand");
    const Shape& s = x.shape();
    if (begin + count > s.c) invalid("slice_channels: channel range exceeds c");
    const Shape os{s.n, count, s.h, s.w};
    const std::size_t plane = s.plane();
    const auto src = x.data();
    std::vector<double> out(os.numel());
    for (std::size_t n = 0; n < s.n; ++n)
        std::copy_n(src.data() + (n * s.c + begin) * plane, count * plane,
                    out.data() + n * count * plane);
    std::shared_ptr<Node> node;
    if (should_record({&x})) node = std::make_shared<SliceNode>(x, begin, count);
    return make_result(os, std::move(out), std::move(node));
}

Tensor sum(const Tensor& x) { return reduce(x, 1.0); }

Tensor mean(const Tensor& x) {
    if (!x.defined() || x.numel() == 0) invalid("mean: empty operand");
    return reduce(x, 1.0 / double(x.numel()));
}

Tensor patch_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t patch) {
    require_same_shape("patch_attention", q, k);
    require_same_shape("patch_attention", q, v);
    const Shape& s = q.shape();
    if (patch == 0) invalid("patch_attention: patch size must be positive");
    if (s.h % patch != 0) invalid("patch_attention: patch size does not divide h");
    if (s.w % patch != 0) invalid("patch_attention: patch size does not divide w");
    kernels::AttentionGeometry g{s, patch};
    std::vector<double> out(s.numel());
    std::vector<double> probs(g.probs_size());
    kernels::attention_forward(g, q.data(), k.data(), v.data(), out, probs);
    std::shared_ptr<Node> node;
    if (should_record({&q, &k, &v})) node = std::make_shared<AttentionNode>(q, k, v, g, std::move(probs));
    return make_result(s, std::move(out), std::move(node));
}

}  // namespace pmaa
