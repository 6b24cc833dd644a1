// Serial reference kernels. Deliberately naive; see kernels.hpp.

#include <cmath>
#include <cstdint>
#include <vector>

#include "pmaa/kernels.hpp"

namespace pmaa::kernels::reference {

namespace {

using Index = std::ptrdiff_t;

std::size_t offset(const Shape& s, std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return ((n * s.c + c) * s.h + y) * s.w + x;
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> in,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out) {
    const std::size_t ci_per_group = g.weight.c;
    const std::size_t co_per_group = g.out.c / g.groups;
    std::uint64_t macs = 0;
    for (std::size_t n = 0; n < g.out.n; ++n) {
        for (std::size_t co = 0; co < g.out.c; ++co) {
            const std::size_t group = co / co_per_group;
            for (std::size_t oy = 0; oy < g.out.h; ++oy) {
                for (std::size_t ox = 0; ox < g.out.w; ++ox) {
                    double acc = bias.empty() ? 0.0 : bias[co];
                    for (std::size_t cl = 0; cl < ci_per_group; ++cl) {
                        const std::size_t ci = group * ci_per_group + cl;
                        for (std::size_t ky = 0; ky < g.weight.h; ++ky) {
                            for (std::size_t kx = 0; kx < g.weight.w; ++kx) {
                                const Index iy = Index(oy * g.stride_h + ky) - Index(g.pad_h);
                                const Index ix = Index(ox * g.stride_w + kx) - Index(g.pad_w);
                                const bool inside = iy >= 0 && ix >= 0 && iy < Index(g.in.h) &&
                                                    ix < Index(g.in.w);
                                const double x =
                                    inside ? in[offset(g.in, n, ci, std::size_t(iy), std::size_t(ix))]
                                           : 0.0;
                                acc += weight[offset(g.weight, co, cl, ky, kx)] * x;
                                ++macs;
                            }
                        }
                    }
                    out[offset(g.out, n, co, oy, ox)] = acc;
                }
            }
        }
    }
    add_macs(macs);
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in) {
    const std::size_t ci_per_group = g.weight.c;
    const std::size_t co_per_group = g.out.c / g.groups;
    for (std::size_t n = 0; n < g.out.n; ++n) {
        for (std::size_t co = 0; co < g.out.c; ++co) {
            const std::size_t group = co / co_per_group;
            for (std::size_t oy = 0; oy < g.out.h; ++oy) {
                for (std::size_t ox = 0; ox < g.out.w; ++ox) {
                    const double go = grad_out[offset(g.out, n, co, oy, ox)];
                    for (std::size_t cl = 0; cl < ci_per_group; ++cl) {
                        const std::size_t ci = group * ci_per_group + cl;
                        for (std::size_t ky = 0; ky < g.weight.h; ++ky) {
                            for (std::size_t kx = 0; kx < g.weight.w; ++kx) {
                                const Index iy = Index(oy * g.stride_h + ky) - Index(g.pad_h);
                                const Index ix = Index(ox * g.stride_w + kx) - Index(g.pad_w);
                                if (iy < 0 || ix < 0 || iy >= Index(g.in.h) || ix >= Index(g.in.w))
                                    continue;
                                grad_in[offset(g.in, n, ci, std::size_t(iy), std::size_t(ix))] +=
                                    go * weight[offset(g.weight, co, cl, ky, kx)];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> grad_out,
                            std::span<const double> in, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
    const std::size_t ci_per_group = g.weight.c;
    const std::size_t co_per_group = g.out.c / g.groups;
    for (std::size_t n = 0; n < g.out.n; ++n) {
        for (std::size_t co = 0; co < g.out.c; ++co) {
            const std::size_t group = co / co_per_group;
            for (std::size_t oy = 0; oy < g.out.h; ++oy) {
                for (std::size_t ox = 0; ox < g.out.w; ++ox) {
                    const double go = grad_out[offset(g.out, n, co, oy, ox)];
                    if (!grad_bias.empty()) grad_bias[co] += go;
                    if (grad_weight.empty()) continue;
                    for (std::size_t cl = 0; cl < ci_per_group; ++cl) {
                        const std::size_t ci = group * ci_per_group + cl;
                        for (std::size_t ky = 0; ky < g.weight.h; ++ky) {
                            for (std::size_t kx = 0; kx < g.weight.w; ++kx) {
                                const Index iy = Index(oy * g.stride_h + ky) - Index(g.pad_h);
                                const Index ix = Index(ox * g.stride_w + kx) - Index(g.pad_w);
                                if (iy < 0 || ix < 0 || iy >= Index(g.in.h) || ix >= Index(g.in.w))
                                    continue;
                                grad_weight[offset(g.weight, co, cl, ky, kx)] +=
                                    go * in[offset(g.in, n, ci, std::size_t(iy), std::size_t(ix))];
                            }
                        }
                    }
                }
            }
        }
    }
}

void instance_norm_forward(const NormGeometry& g, std::span<const double> in,
                           std::span<const double> gamma, std::span<const double> beta,
                           std::span<double> out, std::span<double> normalized,
                           std::span<double> inv_std) {
    const std::size_t m = g.shape.plane();
    for (std::size_t n = 0; n < g.shape.n; ++n) {
        for (std::size_t c = 0; c < g.shape.c; ++c) {
            const std::size_t base = (n * g.shape.c + c) * m;
            double mean = 0.0;
            for (std::size_t i = 0; i < m; ++i) mean += in[base + i];
            mean /= double(m);
            double var = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                const double d = in[base + i] - mean;
                var += d * d;
            }
            var /= double(m);
            const double istd = 1.0 / std::sqrt(var + g.eps);
            inv_std[n * g.shape.c + c] = istd;
            for (std::size_t i = 0; i < m; ++i) {
                const double xhat = (in[base + i] - mean) * istd;
                normalized[base + i] = xhat;
                out[base + i] = gamma[c] * xhat + beta[c];
            }
        }
    }
}

void instance_norm_backward(const NormGeometry& g, std::span<const double> grad_out,
                            std::span<const double> normalized, std::span<const double> inv_std,
                            std::span<const double> gamma, std::span<double> grad_in,
                            std::span<double> grad_gamma, std::span<double> grad_beta) {
    const std::size_t m = g.shape.plane();
    for (std::size_t n = 0; n < g.shape.n; ++n) {
        for (std::size_t c = 0; c < g.shape.c; ++c) {
            const std::size_t base = (n * g.shape.c + c) * m;
            double sum_g = 0.0;
            double sum_gx = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                sum_g += grad_out[base + i];
                sum_gx += grad_out[base + i] * normalized[base + i];
            }
            if (!grad_gamma.empty()) grad_gamma[c] += sum_gx;
            if (!grad_beta.empty()) grad_beta[c] += sum_g;
            if (grad_in.empty()) continue;
            const double k = gamma[c] * inv_std[n * g.shape.c + c] / double(m);
            for (std::size_t i = 0; i < m; ++i) {
                grad_in[base + i] +=
                    k * (double(m) * grad_out[base + i] - sum_g - normalized[base + i] * sum_gx);
            }
        }
    }
}

void mul(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    std::uint64_t macs = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] * b[i];
        ++macs;
    }
    add_macs(macs);
}

namespace {

// Flat index of position p (row-major inside the patch) of patch (py, px).
std::size_t patch_pixel(const AttentionGeometry& g, std::size_t py, std::size_t px, std::size_t p) {
    const std::size_t y = py * g.patch + p / g.patch;
    const std::size_t x = px * g.patch + p % g.patch;
    return y * g.shape.w + x;
}

}  // namespace

void attention_forward(const AttentionGeometry& g, std::span<const double> q,
                       std::span<const double> k, std::span<const double> v,
                       std::span<double> out, std::span<double> probs) {
    const std::size_t d = g.shape.c;
    const std::size_t hw = g.shape.plane();
    const std::size_t p2 = g.positions();
    const double scale = 1.0 / std::sqrt(double(d));
    std::uint64_t macs = 0;
    std::vector<double> row(p2);
    std::size_t prob_base = 0;
    for (std::size_t n = 0; n < g.shape.n; ++n) {
        const std::size_t sample = n * d * hw;
        for (std::size_t py = 0; py < g.shape.h / g.patch; ++py) {
            for (std::size_t px = 0; px < g.shape.w / g.patch; ++px, prob_base += p2 * p2) {
                for (std::size_t i = 0; i < p2; ++i) {
                    const std::size_t pi = patch_pixel(g, py, px, i);
                    double max_score = -INFINITY;
                    for (std::size_t j = 0; j < p2; ++j) {
                        const std::size_t pj = patch_pixel(g, py, px, j);
                        double s = 0.0;
                        for (std::size_t c = 0; c < d; ++c) {
                            s += q[sample + c * hw + pi] * k[sample + c * hw + pj];
                            ++macs;
                        }
                        row[j] = s * scale;
                        if (row[j] > max_score) max_score = row[j];
                    }
                    double total = 0.0;
                    for (std::size_t j = 0; j < p2; ++j) {
                        row[j] = std::exp(row[j] - max_score);
                        total += row[j];
                    }
                    for (std::size_t j = 0; j < p2; ++j) probs[prob_base + i * p2 + j] = row[j] / total;
                    for (std::size_t c = 0; c < d; ++c) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < p2; ++j) {
                            acc += probs[prob_base + i * p2 + j] *
                                   v[sample + c * hw + patch_pixel(g, py, px, j)];
                            ++macs;
                        }
                        out[sample + c * hw + pi] = acc;
                    }
                }
            }
        }
    }
    add_macs(macs);
}

void attention_backward(const AttentionGeometry& g, std::span<const double> grad_out,
                        std::span<const double> q, std::span<const double> k,
                        std::span<const double> v, std::span<const double> probs,
                        std::span<double> grad_q, std::span<double> grad_k,
                        std::span<double> grad_v) {
    const std::size_t d = g.shape.c;
    const std::size_t hw = g.shape.plane();
    const std::size_t p2 = g.positions();
    const double scale = 1.0 / std::sqrt(double(d));
    std::vector<double> dprob(p2);
    std::size_t prob_base = 0;
    for (std::size_t n = 0; n < g.shape.n; ++n) {
        const std::size_t sample = n * d * hw;
        for (std::size_t py = 0; py < g.shape.h / g.patch; ++py) {
            for (std::size_t px = 0; px < g.shape.w / g.patch; ++px, prob_base += p2 * p2) {
                for (std::size_t i = 0; i < p2; ++i) {
                    const std::size_t pi = patch_pixel(g, py, px, i);
                    const double* a = &probs[prob_base + i * p2];
                    double dot = 0.0;
                    for (std::size_t j = 0; j < p2; ++j) {
                        const std::size_t pj = patch_pixel(g, py, px, j);
                        double s = 0.0;
                        for (std::size_t c = 0; c < d; ++c) {
                            const double go = grad_out[sample + c * hw + pi];
                            s += go * v[sample + c * hw + pj];
                            if (!grad_v.empty()) grad_v[sample + c * hw + pj] += a[j] * go;
                        }
                        dprob[j] = s;
                        dot += a[j] * s;
                    }
                    for (std::size_t j = 0; j < p2; ++j) {
                        const std::size_t pj = patch_pixel(g, py, px, j);
                        const double ds = a[j] * (dprob[j] - dot) * scale;
                        for (std::size_t c = 0; c < d; ++c) {
                            if (!grad_q.empty())
                                grad_q[sample + c * hw + pi] += ds * k[sample + c * hw + pj];
                            if (!grad_k.empty())
                                grad_k[sample + c * hw + pj] += ds * q[sample + c * hw + pi];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace pmaa::kernels::reference
