// OpenMP kernels. Work is split so that every output element has exactly one
// writer; inner sums run in a fixed order independent of the thread count.

#include <algorithm>
#include <cmath>
#include <vector>

#include "pmaa/kernels.hpp"

namespace pmaa::kernels::parallel {

namespace {

using Index = std::ptrdiff_t;

// Output columns [lo, hi) whose input column ox*stride + k - pad is inside [0, in_w).
struct ColumnRange {
    std::size_t lo;
    std::size_t hi;
};

ColumnRange valid_columns(std::size_t out_w, std::size_t in_w, std::size_t stride, std::size_t k,
                          std::size_t pad) {
    std::size_t lo = 0;
    if (pad > k) lo = (pad - k + stride - 1) / stride;
    // largest ox with ox*stride + k - pad <= in_w - 1
    const Index top = Index(in_w) - 1 + Index(pad) - Index(k);
    std::size_t hi = top < 0 ? 0 : std::size_t(top) / stride + 1;
    hi = std::min(hi, out_w);
    if (lo > hi) lo = hi;
    return {lo, hi};
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> in,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out) {
    const std::size_t ci_per_group = g.weight.c;
    const std::size_t co_per_group = g.out.c / g.groups;
    const std::size_t in_plane = g.in.plane();
    const std::size_t out_plane = g.out.plane();
    const Index jobs = Index(g.out.n * g.out.c);

#pragma omp parallel for schedule(static)
    for (Index job = 0; job < jobs; ++job) {
        const std::size_t n = std::size_t(job) / g.out.c;
        const std::size_t co = std::size_t(job) % g.out.c;
        const std::size_t group = co / co_per_group;
        double* o = out.data() + std::size_t(job) * out_plane;
        std::fill(o, o + out_plane, bias.empty() ? 0.0 : bias[co]);
        for (std::size_t cl = 0; cl < ci_per_group; ++cl) {
            const std::size_t ci = group * ci_per_group + cl;
            const double* ip = in.data() + (n * g.in.c + ci) * in_plane;
            const double* wp = weight.data() + (co * ci_per_group + cl) * g.weight.plane();
            for (std::size_t ky = 0; ky < g.weight.h; ++ky) {
                for (std::size_t kx = 0; kx < g.weight.w; ++kx) {
                    const double wv = wp[ky * g.weight.w + kx];
                    const ColumnRange cols = valid_columns(g.out.w, g.in.w, g.stride_w, kx, g.pad_w);
                    if (cols.lo >= cols.hi) continue;
                    for (std::size_t oy = 0; oy < g.out.h; ++oy) {
                        const Index iy = Index(oy * g.stride_h + ky) - Index(g.pad_h);
                        if (iy < 0 || iy >= Index(g.in.h)) continue;
                        const double* row = ip + std::size_t(iy) * g.in.w;
                        double* orow = o + oy * g.out.w;
                        if (g.stride_w == 1) {
                            const double* src = row + (cols.lo + kx - g.pad_w);
                            for (std::size_t ox = cols.lo; ox < cols.hi; ++ox)
                                orow[ox] += wv * src[ox - cols.lo];
                        } else {
                            for (std::size_t ox = cols.lo; ox < cols.hi; ++ox)
                                orow[ox] += wv * row[ox * g.stride_w + kx - g.pad_w];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in) {
    const std::size_t ci_per_group = g.weight.c;
    const std::size_t co_per_group = g.out.c / g.groups;
    const std::size_t in_plane = g.in.plane();
    const std::size_t out_plane = g.out.plane();
    const Index jobs = Index(g.in.n * g.in.c);

#pragma omp parallel for schedule(static)
    for (Index job = 0; job < jobs; ++job) {
        const std::size_t n = std::size_t(job) / g.in.c;
        const std::size_t ci = std::size_t(job) % g.in.c;
        const std::size_t group = ci / ci_per_group;
        const std::size_t cl = ci % ci_per_group;
        double* gi = grad_in.data() + std::size_t(job) * in_plane;
        for (std::size_t co = group * co_per_group; co < (group + 1) * co_per_group; ++co) {
            const double* go = grad_out.data() + (n * g.out.c + co) * out_plane;
            const double* wp = weight.data() + (co * ci_per_group + cl) * g.weight.plane();
            for (std::size_t ky = 0; ky < g.weight.h; ++ky) {
                for (std::size_t kx = 0; kx < g.weight.w; ++kx) {
                    const double wv = wp[ky * g.weight.w + kx];
                    const ColumnRange cols = valid_columns(g.out.w, g.in.w, g.stride_w, kx, g.pad_w);
                    if (cols.lo >= cols.hi) continue;
                    for (std::size_t oy = 0; oy < g.out.h; ++oy) {
                        const Index iy = Index(oy * g.stride_h + ky) - Index(g.pad_h);
                        if (iy < 0 || iy >= Index(g.in.h)) continue;
                        double* row = gi + std::size_t(iy) * g.in.w;
                        const double* grow = go + oy * g.out.w;
                        for (std::size_t ox = cols.lo; ox < cols.hi; ++ox)
                            row[ox * g.stride_w + kx - g.pad_w] += wv * grow[ox];
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
    const std::size_t in_plane = g.in.plane();
    const std::size_t out_plane = g.out.plane();
    const Index jobs = Index(g.out.c);

#pragma omp parallel for schedule(static)
    for (Index job = 0; job < jobs; ++job) {
        const std::size_t co = std::size_t(job);
        const std::size_t group = co / co_per_group;
        if (!grad_bias.empty()) {
            double acc = 0.0;
            for (std::size_t n = 0; n < g.out.n; ++n) {
                const double* go = grad_out.data() + (n * g.out.c + co) * out_plane;
                for (std::size_t i = 0; i < out_plane; ++i) acc += go[i];
            }
            grad_bias[co] += acc;
        }
        if (grad_weight.empty()) continue;
        for (std::size_t cl = 0; cl < ci_per_group; ++cl) {
            const std::size_t ci = group * ci_per_group + cl;
            double* gw = grad_weight.data() + (co * ci_per_group + cl) * g.weight.plane();
            for (std::size_t ky = 0; ky < g.weight.h; ++ky) {
                for (std::size_t kx = 0; kx < g.weight.w; ++kx) {
                    const ColumnRange cols = valid_columns(g.out.w, g.in.w, g.stride_w, kx, g.pad_w);
                    if (cols.lo >= cols.hi) continue;
                    double acc = 0.0;
                    for (std::size_t n = 0; n < g.out.n; ++n) {
                        const double* go = grad_out.data() + (n * g.out.c + co) * out_plane;
                        const double* ip = in.data() + (n * g.in.c + ci) * in_plane;
                        for (std::size_t oy = 0; oy < g.out.h; ++oy) {
                            const Index iy = Index(oy * g.stride_h + ky) - Index(g.pad_h);
                            if (iy < 0 || iy >= Index(g.in.h)) continue;
                            const double* row = ip + std::size_t(iy) * g.in.w;
                            const double* grow = go + oy * g.out.w;
                            for (std::size_t ox = cols.lo; ox < cols.hi; ++ox)
                                acc += grow[ox] * row[ox * g.stride_w + kx - g.pad_w];
                        }
                    }
                    gw[ky * g.weight.w + kx] += acc;
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
    const Index jobs = Index(g.shape.n * g.shape.c);

#pragma omp parallel for schedule(static)
    for (Index job = 0; job < jobs; ++job) {
        const std::size_t c = std::size_t(job) % g.shape.c;
        const double* x = in.data() + std::size_t(job) * m;
        double mean = 0.0;
        for (std::size_t i = 0; i < m; ++i) mean += x[i];
        mean /= double(m);
        double var = 0.0;
        for (std::size_t i = 0; i < m; ++i) var += (x[i] - mean) * (x[i] - mean);
        var /= double(m);
        const double istd = 1.0 / std::sqrt(var + g.eps);
        inv_std[std::size_t(job)] = istd;
        double* xh = normalized.data() + std::size_t(job) * m;
        double* y = out.data() + std::size_t(job) * m;
        for (std::size_t i = 0; i < m; ++i) {
            xh[i] = (x[i] - mean) * istd;
            y[i] = gamma[c] * xh[i] + beta[c];
        }
    }
}

void instance_norm_backward(const NormGeometry& g, std::span<const double> grad_out,
                            std::span<const double> normalized, std::span<const double> inv_std,
                            std::span<const double> gamma, std::span<double> grad_in,
                            std::span<double> grad_gamma, std::span<double> grad_beta) {
    const std::size_t m = g.shape.plane();
    const std::size_t planes = g.shape.n * g.shape.c;
    std::vector<double> sum_g(planes);
    std::vector<double> sum_gx(planes);

#pragma omp parallel for schedule(static)
    for (Index job = 0; job < Index(planes); ++job) {
        const double* go = grad_out.data() + std::size_t(job) * m;
        const double* xh = normalized.data() + std::size_t(job) * m;
        double sg = 0.0;
        double sgx = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            sg += go[i];
            sgx += go[i] * xh[i];
        }
        sum_g[std::size_t(job)] = sg;
        sum_gx[std::size_t(job)] = sgx;
        if (grad_in.empty()) continue;
        const std::size_t c = std::size_t(job) % g.shape.c;
        const double k = gamma[c] * inv_std[std::size_t(job)] / double(m);
        double* gi = grad_in.data() + std::size_t(job) * m;
        for (std::size_t i = 0; i < m; ++i) gi[i] += k * (double(m) * go[i] - sg - xh[i] * sgx);
    }
    for (std::size_t n = 0; n < g.shape.n; ++n) {
        for (std::size_t c = 0; c < g.shape.c; ++c) {
            if (!grad_gamma.empty()) grad_gamma[c] += sum_gx[n * g.shape.c + c];
            if (!grad_beta.empty()) grad_beta[c] += sum_g[n * g.shape.c + c];
        }
    }
}

void mul(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    const Index size = Index(out.size());
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < size; ++i) out[std::size_t(i)] = a[std::size_t(i)] * b[std::size_t(i)];
}

namespace {

// Gathers a patch of a (d, h, w) sample into a (d, p*p) matrix.
void gather_patch(const AttentionGeometry& g, const double* sample, std::size_t py, std::size_t px,
                  double* dst) {
    const std::size_t hw = g.shape.plane();
    const std::size_t p2 = g.positions();
    for (std::size_t c = 0; c < g.shape.c; ++c) {
        for (std::size_t p = 0; p < p2; ++p) {
            const std::size_t y = py * g.patch + p / g.patch;
            const std::size_t x = px * g.patch + p % g.patch;
            dst[c * p2 + p] = sample[c * hw + y * g.shape.w + x];
        }
    }
}

void scatter_add_patch(const AttentionGeometry& g, const double* src, std::size_t py,
                       std::size_t px, double* sample) {
    const std::size_t hw = g.shape.plane();
    const std::size_t p2 = g.positions();
    for (std::size_t c = 0; c < g.shape.c; ++c) {
        for (std::size_t p = 0; p < p2; ++p) {
            const std::size_t y = py * g.patch + p / g.patch;
            const std::size_t x = px * g.patch + p % g.patch;
            sample[c * hw + y * g.shape.w + x] += src[c * p2 + p];
        }
    }
}

}  // namespace

void attention_forward(const AttentionGeometry& g, std::span<const double> q,
                       std::span<const double> k, std::span<const double> v,
                       std::span<double> out, std::span<double> probs) {
    const std::size_t d = g.shape.c;
    const std::size_t hw = g.shape.plane();
    const std::size_t p2 = g.positions();
    const std::size_t per_sample = g.patches_per_sample();
    const std::size_t across = g.shape.w / g.patch;
    const double scale = 1.0 / std::sqrt(double(d));
    const Index jobs = Index(g.shape.n * per_sample);

#pragma omp parallel
    {
        std::vector<double> qp(d * p2), kp(d * p2), vp(d * p2), op(d * p2);
#pragma omp for schedule(static)
        for (Index job = 0; job < jobs; ++job) {
            const std::size_t n = std::size_t(job) / per_sample;
            const std::size_t patch = std::size_t(job) % per_sample;
            const std::size_t py = patch / across;
            const std::size_t px = patch % across;
            gather_patch(g, q.data() + n * d * hw, py, px, qp.data());
            gather_patch(g, k.data() + n * d * hw, py, px, kp.data());
            gather_patch(g, v.data() + n * d * hw, py, px, vp.data());
            double* a = probs.data() + std::size_t(job) * p2 * p2;
            for (std::size_t i = 0; i < p2; ++i) {
                double max_score = -INFINITY;
                for (std::size_t j = 0; j < p2; ++j) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < d; ++c) s += qp[c * p2 + i] * kp[c * p2 + j];
                    a[i * p2 + j] = s * scale;
                    max_score = std::max(max_score, a[i * p2 + j]);
                }
                double total = 0.0;
                for (std::size_t j = 0; j < p2; ++j) {
                    a[i * p2 + j] = std::exp(a[i * p2 + j] - max_score);
                    total += a[i * p2 + j];
                }
                for (std::size_t j = 0; j < p2; ++j) a[i * p2 + j] /= total;
                for (std::size_t c = 0; c < d; ++c) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < p2; ++j) acc += a[i * p2 + j] * vp[c * p2 + j];
                    op[c * p2 + i] = acc;
                }
            }
            // scatter (overwrite) the patch output
            for (std::size_t c = 0; c < d; ++c) {
                for (std::size_t p = 0; p < p2; ++p) {
                    const std::size_t y = py * g.patch + p / g.patch;
                    const std::size_t x = px * g.patch + p % g.patch;
                    out[n * d * hw + c * hw + y * g.shape.w + x] = op[c * p2 + p];
                }
            }
        }
    }
}

void attention_backward(const AttentionGeometry& g, std::span<const double> grad_out,
                        std::span<const double> q, std::span<const double> k,
                        std::span<const double> v, std::span<const double> probs,
                        std::span<double> grad_q, std::span<double> grad_k,
                        std::span<double> grad_v) {
    const std::size_t d = g.shape.c;
    const std::size_t hw = g.shape.plane();
    const std::size_t p2 = g.positions();
    const std::size_t per_sample = g.patches_per_sample();
    const std::size_t across = g.shape.w / g.patch;
    const double scale = 1.0 / std::sqrt(double(d));
    const Index jobs = Index(g.shape.n * per_sample);

#pragma omp parallel
    {
        std::vector<double> qp(d * p2), kp(d * p2), vp(d * p2), gop(d * p2);
        std::vector<double> gq(d * p2), gk(d * p2), gv(d * p2), dprob(p2);
#pragma omp for schedule(static)
        for (Index job = 0; job < jobs; ++job) {
            const std::size_t n = std::size_t(job) / per_sample;
            const std::size_t patch = std::size_t(job) % per_sample;
            const std::size_t py = patch / across;
            const std::size_t px = patch % across;
            gather_patch(g, q.data() + n * d * hw, py, px, qp.data());
            gather_patch(g, k.data() + n * d * hw, py, px, kp.data());
            gather_patch(g, v.data() + n * d * hw, py, px, vp.data());
            gather_patch(g, grad_out.data() + n * d * hw, py, px, gop.data());
            std::fill(gq.begin(), gq.end(), 0.0);
            std::fill(gk.begin(), gk.end(), 0.0);
            std::fill(gv.begin(), gv.end(), 0.0);
            const double* a = probs.data() + std::size_t(job) * p2 * p2;
            for (std::size_t i = 0; i < p2; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < p2; ++j) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                        s += gop[c * p2 + i] * vp[c * p2 + j];
                        gv[c * p2 + j] += a[i * p2 + j] * gop[c * p2 + i];
                    }
                    dprob[j] = s;
                    dot += a[i * p2 + j] * s;
                }
                for (std::size_t j = 0; j < p2; ++j) {
                    const double ds = a[i * p2 + j] * (dprob[j] - dot) * scale;
                    for (std::size_t c = 0; c < d; ++c) {
                        gq[c * p2 + i] += ds * kp[c * p2 + j];
                        gk[c * p2 + j] += ds * qp[c * p2 + i];
                    }
                }
            }
            if (!grad_q.empty()) scatter_add_patch(g, gq.data(), py, px, grad_q.data() + n * d * hw);
            if (!grad_k.empty()) scatter_add_patch(g, gk.data(), py, px, grad_k.data() + n * d * hw);
            if (!grad_v.empty()) scatter_add_patch(g, gv.data(), py, px, grad_v.data() + n * d * hw);
        }
    }
}

}  // namespace pmaa::kernels::parallel
