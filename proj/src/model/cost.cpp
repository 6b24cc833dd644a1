#include "pmaa/cost.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "pmaa/kernels.hpp"

namespace pmaa {

namespace {

using u64 = std::uint64_t;

const char* const kStageParts[] = {"adapter", "encoder", "fusion", "transformer",
                                   "selective", "decoder", "head"};

void add_canonical_components(CostReport& r, std::size_t stages) {
    r.at("bottleneck");
    for (std::size_t t = 0; t < stages; ++t)
        for (const char* part : kStageParts) r.at(stage_prefix(t) + "." + part);
}

u64 conv_macs(u64 co, u64 ci_per_group, u64 k, u64 out_area) { return co * ci_per_group * k * k * out_area; }

}  // namespace

std::uint64_t CostReport::total_params() const {
    u64 n = 0;
    for (const auto& e : entries) n += e.params;
    return n;
}

std::uint64_t CostReport::total_macs() const {
    u64 n = 0;
    for (const auto& e : entries) n += e.macs;
    return n;
}

CostEntry& CostReport::at(const std::string& component) {
    for (auto& e : entries)
        if (e.component == component) return e;
    entries.push_back({component, 0, 0});
    return entries.back();
}

const CostEntry* CostReport::find(const std::string& component) const {
    for (const auto& e : entries)
        if (e.component == component) return &e;
    return nullptr;
}

std::string CostReport::to_tsv() const {
    std::ostringstream os;
    os << "height\t" << height << "\n";
    os << "width\t" << width << "\n";
    for (const auto& e : entries) {
        os << "params." << e.component << "\t" << e.params << "\n";
        os << "macs." << e.component << "\t" << e.macs << "\n";
    }
    os << "params.total\t" << total_params() << "\n";
    os << "macs.total\t" << total_macs() << "\n";
    return os.str();
}

std::string CostReport::to_table() const {
    std::size_t width_name = 9;
    for (const auto& e : entries) width_name = std::max(width_name, e.component.size());
    std::ostringstream os;
    auto row = [&](const std::string& name, u64 p, u64 m) {
        os << std::left << std::setw(int(width_name)) << name << std::right << std::setw(12) << p
           << std::setw(10) << std::fixed << std::setprecision(4) << double(p) / 1e6 << std::setw(16)
           << m << std::setw(10) << std::setprecision(3) << double(m) / 1e9 << "\n";
    };
    os << std::left << std::setw(int(width_name)) << "component" << std::right << std::setw(12)
       << "params" << std::setw(10) << "M" << std::setw(16) << "macs" << std::setw(10) << "G"
       << "\n";
    for (const auto& e : entries) row(e.component, e.params, e.macs);
    row("total", total_params(), total_macs());
    return os.str();
}

std::string component_of(const std::string& name) {
    const auto first = name.find('.');
    const std::string head = name.substr(0, first);
    if (head == "bottleneck" || first == std::string::npos) return head;
    const auto second = name.find('.', first + 1);
    return name.substr(0, second);
}

CostReport count_params(const ParamStore& params) {
    CostReport r;
    std::size_t stages = 0;
    for (const auto& e : params.entries())
        if (e.name.rfind("stage", 0) == 0) stages = std::max<std::size_t>(stages, std::stoul(e.name.substr(5)) + 1);
    add_canonical_components(r, stages);
    for (const auto& e : params.entries()) r.at(component_of(e.name)).params += e.tensor.numel();
    return r;
}

CostReport count_macs(const ModelConfig& cfg, std::size_t height, std::size_t width) {
    ModelConfig probe = cfg;
    probe.height = height;
    probe.width = width;
    probe.validate();

    CostReport r;
    r.height = height;
    r.width = width;
    add_canonical_components(r, cfg.stages);

    const u64 C = cfg.hidden_channels;
    const u64 R = cfg.ffn_channels();
    const u64 k = cfg.attention_kernel;
    const u64 N = cfg.downsamples;
    const u64 img = cfg.in_channels_per_image;
    const u64 S = cfg.stage_channels();
    auto area = [&](u64 i) { return u64(height >> i) * u64(width >> i); };
    const u64 full = area(0);
    const u64 coarse = area(N);

    r.at("bottleneck").macs = cfg.num_images * (conv_macs(cfg.bottleneck_channels, img, 3, full) +
                                                conv_macs(img, cfg.bottleneck_channels, 3, full));

    for (std::size_t t = 0; t < cfg.stages; ++t) {
        const std::string s = stage_prefix(t) + ".";
        r.at(s + "adapter").macs = conv_macs(S - img, S, 1, full);

        u64 enc = conv_macs(C, S, 3, full);
        for (u64 i = 1; i <= N; ++i) enc += conv_macs(C, 1, 3, area(i)) + conv_macs(C, C, 1, area(i));
        r.at(s + "encoder").macs = enc;

        if (cfg.fusion == FusionMode::Concat) r.at(s + "fusion").macs = conv_macs(C, (N + 1) * C, 1, coarse);

        if (cfg.attention != AttentionMode::Off) {
            u64 m = 3 * conv_macs(C, C, 1, coarse) + C * coarse;  // w1..w3 and the gate
            m += conv_macs(R, C, 1, coarse) + conv_macs(C, R, 1, coarse);
            if (cfg.attention == AttentionMode::NonPatch) {
                m += conv_macs(C, 1, k, coarse) + conv_macs(R, 1, k, coarse);
            } else {
                const u64 P2 = u64(cfg.patch_size) * cfg.patch_size;
                m += 3 * conv_macs(C, C, 1, coarse) + 2 * P2 * C * coarse;
                m += 3 * conv_macs(R, R, 1, coarse) + 2 * P2 * R * coarse;
            }
            r.at(s + "transformer").macs = m;
        }

        if (cfg.selective_attention) {
            u64 m = 2 * conv_macs(C, C, 1, coarse);
            for (u64 i = 0; i <= N; ++i) m += conv_macs(C, C, 1, area(i)) + C * area(i);
            r.at(s + "selective").macs = m;
        }

        u64 dec = 0;
        for (u64 j = 1; j <= N; ++j) {
            const u64 in = area(N - j + 1);
            const u64 out = area(N - j);
            if (cfg.lim) {
                const u64 sep_in = conv_macs(C, 1, 3, in) + conv_macs(C, C, 1, in);
                const u64 sep_out = conv_macs(C, 1, 3, out) + conv_macs(C, C, 1, out);
                dec += 2 * sep_in + sep_out + C * out;
            } else {
                dec += conv_macs(C, 2 * C, 1, out);
            }
        }
        r.at(s + "decoder").macs = dec;

        r.at(s + "head").macs = conv_macs(img, C, 3, full);
    }
    return r;
}

CostReport cost_report(const Model& model, std::size_t height, std::size_t width) {
    CostReport r = count_macs(model.config, height, width);
    const CostReport p = count_params(model.params);
    for (const auto& e : p.entries) r.at(e.component).params = e.params;
    return r;
}

std::uint64_t instrumented_macs(const Model& model, std::size_t height, std::size_t width) {
    ModelConfig cfg = model.config;
    cfg.height = height;
    cfg.width = width;
    cfg.validate();
    std::vector<Tensor> images(cfg.num_images,
                               Tensor::zeros({1, cfg.in_channels_per_image, height, width}));
    NoGradGuard no_grad;
    kernels::ScopedBackend scope(kernels::Backend::Reference);
    kernels::reset_mac_count();
    pmaa_forward(images, model.params, cfg);
    return kernels::mac_count();
}

}  // namespace pmaa
