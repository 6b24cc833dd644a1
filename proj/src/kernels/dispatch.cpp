#include "pmaa/kernels.hpp"

namespace pmaa::kernels {

namespace {

thread_local Backend t_backend = Backend::Parallel;
thread_local std::uint64_t t_macs = 0;

bool use_reference() { return t_backend == Backend::Reference; }

}  // namespace

Backend backend() { return t_backend; }
void set_backend(Backend b) { t_backend = b; }

std::uint64_t mac_count() { return t_macs; }
void reset_mac_count() { t_macs = 0; }
void add_macs(std::uint64_t n) { t_macs += n; }

void conv2d_forward(const ConvGeometry& g, std::span<const double> in,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out) {
    if (use_reference()) return reference::conv2d_forward(g, in, weight, bias, out);
    parallel::conv2d_forward(g, in, weight, bias, out);
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in) {
    if (use_reference()) return reference::conv2d_backward_input(g, grad_out, weight, grad_in);
    parallel::conv2d_backward_input(g, grad_out, weight, grad_in);
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> grad_out,
                            std::span<const double> in, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
    if (use_reference())
        return reference::conv2d_backward_weight(g, grad_out, in, grad_weight, grad_bias);
    parallel::conv2d_backward_weight(g, grad_out, in, grad_weight, grad_bias);
}

void instance_norm_forward(const NormGeometry& g, std::span<const double> in,
                           std::span<const double> gamma, std::span<const double> beta,
                           std::span<double> out, std::span<double> normalized,
                           std::span<double> inv_std) {
    if (use_reference())
        return reference::instance_norm_forward(g, in, gamma, beta, out, normalized, inv_std);
    parallel::instance_norm_forward(g, in, gamma, beta, out, normalized, inv_std);
}

void instance_norm_backward(const NormGeometry& g, std::span<const double> grad_out,
                            std::span<const double> normalized, std::span<const double> inv_std,
                            std::span<const double> gamma, std::span<double> grad_in,
                            std::span<double> grad_gamma, std::span<double> grad_beta) {
    if (use_reference())
        return reference::instance_norm_backward(g, grad_out, normalized, inv_std, gamma, grad_in,
                                                 grad_gamma, grad_beta);
    parallel::instance_norm_backward(g, grad_out, normalized, inv_std, gamma, grad_in, grad_gamma,
                                     grad_beta);
}

void mul(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    if (use_reference()) return reference::mul(a, b, out);
    parallel::mul(a, b, out);
}

void attention_forward(const AttentionGeometry& g, std::span<const double> q,
                       std::span<const double> k, std::span<const double> v,
                       std::span<double> out, std::span<double> probs) {
    if (use_reference()) return reference::attention_forward(g, q, k, v, out, probs);
    parallel::attention_forward(g, q, k, v, out, probs);
}

void attention_backward(const AttentionGeometry& g, std::span<const double> grad_out,
                        std::span<const double> q, std::span<const double> k,
                        std::span<const double> v, std::span<const double> probs,
                        std::span<double> grad_q, std::span<double> grad_k,
                        std::span<double> grad_v) {
    if (use_reference())
        return reference::attention_backward(g, grad_out, q, k, v, probs, grad_q, grad_k, grad_v);
    parallel::attention_backward(g, grad_out, q, k, v, probs, grad_q, grad_k, grad_v);
}

}  // namespace pmaa::kernels
