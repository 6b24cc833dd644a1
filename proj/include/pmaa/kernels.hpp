#pragma once

// Compute kernels behind the autodiff primitives.
//
// Two implementations exist for every heavy kernel:
//   reference::  plain serial loops, written for obviousness. Forward kernels
//                count one MAC per multiply they execute, including taps that
//                land on zero padding, so running a model under the reference
//                backend doubles as an instrumented cost oracle.
//   parallel::   OpenMP versions. Each output element is owned by exactly one
//                thread and reductions run in a fixed order, so results do not
//                depend on the thread count.
//
// The dispatch functions in this header pick one based on the calling
// thread's current backend.

#include <cstddef>
#include <cstdint>
#include <span>

#include "pmaa/tensor.hpp"

namespace pmaa::kernels {

enum class Backend { Parallel, Reference };

Backend backend();
void set_backend(Backend b);

class ScopedBackend {
public:
    explicit ScopedBackend(Backend b) : previous_(backend()) { set_backend(b); }
    ~ScopedBackend() { set_backend(previous_); }
    ScopedBackend(const ScopedBackend&) = delete;
    ScopedBackend& operator=(const ScopedBackend&) = delete;

private:
    Backend previous_;
};

/// Multiplies counted by reference forward kernels on this thread.
std::uint64_t mac_count();
void reset_mac_count();
void add_macs(std::uint64_t n);

struct ConvGeometry {
    Shape in;
    Shape weight;  // (co, ci / groups, kh, kw)
    Shape out;
    std::size_t stride_h = 1;
    std::size_t stride_w = 1;
    std::size_t pad_h = 0;
    std::size_t pad_w = 0;
    std::size_t groups = 1;
};

struct NormGeometry {
    Shape shape;
    double eps = 1e-5;
};

/// Per-patch softmax attention over q, k, v of identical shape (n, d, h, w).
/// `probs` holds one (p*p) x (p*p) matrix per (sample, patch).
struct AttentionGeometry {
    Shape shape;
    std::size_t patch = 1;

    std::size_t positions() const { return patch * patch; }
    std::size_t patches_per_sample() const { return (shape.h / patch) * (shape.w / patch); }
    std::size_t probs_size() const {
        return shape.n * patches_per_sample() * positions() * positions();
    }
};

namespace reference {

void conv2d_forward(const ConvGeometry& g, std::span<const double> in,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in);
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> grad_out,
                            std::span<const double> in, std::span<double> grad_weight,
                            std::span<double> grad_bias);

void instance_norm_forward(const NormGeometry& g, std::span<const double> in,
                           std::span<const double> gamma, std::span<const double> beta,
                           std::span<double> out, std::span<double> normalized,
                           std::span<double> inv_std);
void instance_norm_backward(const NormGeometry& g, std::span<const double> grad_out,
                            std::span<const double> normalized, std::span<const double> inv_std,
                            std::span<const double> gamma, std::span<double> grad_in,
                            std::span<double> grad_gamma, std::span<double> grad_beta);

void mul(std::span<const double> a, std::span<const double> b, std::span<double> out);

void attention_forward(const AttentionGeometry& g, std::span<const double> q,
                       std::span<const double> k, std::span<const double> v,
                       std::span<double> out, std::span<double> probs);
void attention_backward(const AttentionGeometry& g, std::span<const double> grad_out,
                        std::span<const double> q, std::span<const double> k,
                        std::span<const double> v, std::span<const double> probs,
                        std::span<double> grad_q, std::span<double> grad_k,
                        std::span<double> grad_v);

}  // namespace reference

namespace parallel {

void conv2d_forward(const ConvGeometry& g, std::span<const double> in,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in);
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> grad_out,
                            std::span<const double> in, std::span<double> grad_weight,
                            std::span<double> grad_bias);

void instance_norm_forward(const NormGeometry& g, std::span<const double> in,
                           std::span<const double> gamma, std::span<const double> beta,
                           std::span<double> out, std::span<double> normalized,
                           std::span<double> inv_std);
void instance_norm_backward(const NormGeometry& g, std::span<const double> grad_out,
                            std::span<const double> normalized, std::span<const double> inv_std,
                            std::span<const double> gamma, std::span<double> grad_in,
                            std::span<double> grad_gamma, std::span<double> grad_beta);

void mul(std::span<const double> a, std::span<const double> b, std::span<double> out);

void attention_forward(const AttentionGeometry& g, std::span<const double> q,
                       std::span<const double> k, std::span<const double> v,
                       std::span<double> out, std::span<double> probs);
void attention_backward(const AttentionGeometry& g, std::span<const double> grad_out,
                        std::span<const double> q, std::span<const double> k,
                        std::span<const double> v, std::span<const double> probs,
                        std::span<double> grad_q, std::span<double> grad_k,
                        std::span<double> grad_v);

}  // namespace parallel

// Dispatch on the current backend. Output buffers of forward kernels are
// overwritten; gradient buffers of backward kernels are accumulated into.

void conv2d_forward(const ConvGeometry& g, std::span<const double> in,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in);
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> grad_out,
                            std::span<const double> in, std::span<double> grad_weight,
                            std::span<double> grad_bias);
void instance_norm_forward(const NormGeometry& g, std::span<const double> in,
                           std::span<const double> gamma, std::span<const double> beta,
                           std::span<double> out, std::span<double> normalized,
                           std::span<double> inv_std);
void instance_norm_backward(const NormGeometry& g, std::span<const double> grad_out,
                            std::span<const double> normalized, std::span<const double> inv_std,
                            std::span<const double> gamma, std::span<double> grad_in,
                            std::span<double> grad_gamma, std::span<double> grad_beta);
void mul(std::span<const double> a, std::span<const double> b, std::span<double> out);
void attention_forward(const AttentionGeometry& g, std::span<const double> q,
                       std::span<const double> k, std::span<const double> v,
                       std::span<double> out, std::span<double> probs);
void attention_backward(const AttentionGeometry& g, std::span<const double> grad_out,
                        std::span<const double> q, std::span<const double> k,
                        std::span<const double> v, std::span<const double> probs,
                        std::span<double> grad_q, std::span<double> grad_k,
                        std::span<double> grad_v);

}  // namespace pmaa::kernels
