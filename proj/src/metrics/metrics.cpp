#include "pmaa/metrics.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "pmaa/ops.hpp"

namespace pmaa {

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;

std::array<double, kWindow> gaussian_taps() {
    std::array<double, kWindow> g{};
    double total = 0.0;
    for (std::size_t i = 0; i < kWindow; ++i) {
        const double d = double(i) - double(kWindow / 2);
        g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        total += g[i];
    }
    for (double& v : g) v /= total;
    return g;
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                                    b.shape().str());
}

/// Valid-mode separable filtering of one plane.
std::vector<double> filter_plane(const double* x, std::size_t h, std::size_t w,
                                 const std::array<double, kWindow>& g) {
    const std::size_t ow = w - kWindow + 1;
    const std::size_t oh = h - kWindow + 1;
    std::vector<double> rows(h * ow);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t ox = 0; ox < ow; ++ox) {
            double acc = 0.0;
            for (std::size_t k = 0; k < kWindow; ++k) acc += g[k] * x[y * w + ox + k];
            rows[y * ow + ox] = acc;
        }
    std::vector<double> out(oh * ow);
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
            double acc = 0.0;
            for (std::size_t k = 0; k < kWindow; ++k) acc += g[k] * rows[(oy + k) * ow + ox];
            out[oy * ow + ox] = acc;
        }
    return out;
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b, double data_range) {
    require_same("psnr", a, b);
    if (!(data_range > 0.0)) throw std::invalid_argument("psnr: data_range must be positive");
    if (a.numel() == 0) throw std::invalid_argument("psnr: empty tensors");
    double sq = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        sq += d * d;
    }
    const double mse = sq / double(a.numel());
    if (mse == 0.0) return kInfinitePsnr;
    return 10.0 * std::log10(data_range * data_range / mse);
}

double ssim(const Tensor& a, const Tensor& b, double data_range) {
    require_same("ssim", a, b);
    const Shape& s = a.shape();
    if (s.h < kWindow || s.w < kWindow)
        throw std::invalid_argument("ssim: spatial size " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                                    " is smaller than the 11x11 window");
    if (s.n * s.c == 0) throw std::invalid_argument("ssim: empty tensors");
    const auto g = gaussian_taps();
    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);
    const std::size_t plane = s.plane();

    double total = 0.0;
    std::size_t count = 0;
    std::vector<double> aa(plane), bb(plane), ab(plane);
    for (std::size_t p = 0; p < s.n * s.c; ++p) {
        const double* x = a.data().data() + p * plane;
        const double* y = b.data().data() + p * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            aa[i] = x[i] * x[i];
            bb[i] = y[i] * y[i];
            ab[i] = x[i] * y[i];
        }
        const auto mu_a = filter_plane(x, s.h, s.w, g);
        const auto mu_b = filter_plane(y, s.h, s.w, g);
        const auto e_aa = filter_plane(aa.data(), s.h, s.w, g);
        const auto e_bb = filter_plane(bb.data(), s.h, s.w, g);
        const auto e_ab = filter_plane(ab.data(), s.h, s.w, g);
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double ma = mu_a[i];
            const double mb = mu_b[i];
            const double va = e_aa[i] - ma * ma;
            const double vb = e_bb[i] - mb * mb;
            const double cov = e_ab[i] - ma * mb;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        count += mu_a.size();
    }
    return total / double(count);
}

Tensor to_unit_range(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x.data()[i] + 1.0) * 0.5;
    return Tensor::from_data(x.shape(), std::move(out));
}

std::string format_metric(double v) {
    if (std::isinf(v) && v > 0) return "inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

MetricsReport MetricsReport::summarize(std::vector<SampleMetrics> samples) {
    MetricsReport r;
    r.samples = std::move(samples);
    double psnr_sum = 0.0;
    double ssim_sum = 0.0;
    std::size_t finite = 0;
    for (const auto& s : r.samples) {
        if (std::isinf(s.psnr)) {
            ++r.infinite_psnr;
        } else {
            psnr_sum += s.psnr;
            ++finite;
        }
        ssim_sum += s.ssim;
    }
    r.mean_psnr = finite ? psnr_sum / double(finite) : kInfinitePsnr;
    r.mean_ssim = r.samples.empty() ? 0.0 : ssim_sum / double(r.samples.size());
    return r;
}

std::string MetricsReport::to_tsv() const {
    std::ostringstream os;
    for (const auto& s : samples)
        os << "sample\t" << s.id << "\t" << format_metric(s.psnr) << "\t" << format_metric(s.ssim) << "\n";
    os << "samples\t" << samples.size() << "\n";
    os << "mean_psnr\t" << format_metric(mean_psnr) << "\n";
    os << "infinite_psnr\t" << infinite_psnr << "\n";
    os << "mean_ssim\t" << format_metric(mean_ssim) << "\n";
    return os.str();
}

MetricsReport evaluate_dataset(const Model& model, std::span<const Sample> samples) {
    if (samples.empty()) throw std::invalid_argument("evaluate_dataset: empty dataset");
    NoGradGuard no_grad;
    std::vector<SampleMetrics> out;
    out.reserve(samples.size());
    for (const Sample& s : samples) {
        Tensor pred = to_unit_range(pmaa_forward(s.cloudy, model.params, model.config).final);
        Tensor target = to_unit_range(s.target);
        out.push_back({s.id, psnr(pred, target), ssim(pred, target)});
    }
    return MetricsReport::summarize(std::move(out));
}

}  // namespace pmaa
