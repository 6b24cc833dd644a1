#include "pmaa/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "pmaa/ops.hpp"
#include "pmaa/random.hpp"

namespace pmaa {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw std::invalid_argument(what); }

std::string join(std::string_view a, std::string_view b) {
    std::string s(a);
    s += '.';
    s += b;
    return s;
}

// ---------------------------------------------------------------- registration

enum class Init { Uniform, One, Zero };

struct InitSpec {
    Init kind = Init::Uniform;
    std::size_t fan_in = 1;
};

struct Registrar {
    ParamStore& store;
    std::vector<InitSpec> specs;  // parallel to store.entries()

    void conv(const std::string& name, std::size_t co, std::size_t ci_per_group, std::size_t k) {
        const std::size_t fan_in = ci_per_group * k * k;
        store.add(name + ".weight", {co, ci_per_group, k, k});
        store.add(name + ".bias", {co, 1, 1, 1});
        specs.push_back({Init::Uniform, fan_in});
        specs.push_back({Init::Uniform, fan_in});
    }
    void depthwise(const std::string& name, std::size_t c, std::size_t k) { conv(name, c, 1, k); }
    void norm(const std::string& name, std::size_t c) {
        store.add(name + ".gamma", {c, 1, 1, 1}, false);
        store.add(name + ".beta", {c, 1, 1, 1}, false);
        specs.push_back({Init::One, 1});
        specs.push_back({Init::Zero, 1});
    }
    void scalar(const std::string& name) {
        store.add(name, {1, 1, 1, 1}, false);
        specs.push_back({Init::One, 1});
    }
};

std::vector<InitSpec> register_params(ParamStore& store, const ModelConfig& cfg) {
    Registrar r{store, {}};
    const std::size_t C = cfg.hidden_channels;
    const std::size_t R = cfg.ffn_channels();
    const std::size_t k = cfg.attention_kernel;

    r.conv("bottleneck.conv1", cfg.bottleneck_channels, cfg.in_channels_per_image, 3);
    r.norm("bottleneck.norm1", cfg.bottleneck_channels);
    r.conv("bottleneck.conv2", cfg.in_channels_per_image, cfg.bottleneck_channels, 3);

    for (std::size_t t = 0; t < cfg.stages; ++t) {
        const std::string s = stage_prefix(t);
        r.conv(s + ".adapter", cfg.stage_channels() - cfg.in_channels_per_image, cfg.stage_channels(), 1);

        r.conv(s + ".encoder.stem", C, cfg.stage_channels(), 3);
        r.norm(s + ".encoder.stem_norm", C);
        for (std::size_t i = 1; i <= cfg.downsamples; ++i) {
            const std::string d = s + ".encoder.down" + std::to_string(i);
            r.depthwise(d + ".dw", C, 3);
            r.conv(d + ".pw", C, C, 1);
            r.norm(d + ".norm", C);
        }

        if (cfg.fusion == FusionMode::Concat) r.conv(s + ".fusion.reduce", C, (cfg.downsamples + 1) * C, 1);

        if (cfg.attention != AttentionMode::Off) {
            const std::string m = s + ".transformer";
            r.conv(m + ".w1", C, C, 1);
            r.conv(m + ".w2", C, C, 1);
            r.conv(m + ".w3", C, C, 1);
            r.scalar(m + ".alpha");
            r.conv(m + ".v1", R, C, 1);
            r.conv(m + ".v2", C, R, 1);
            r.norm(m + ".ffn_norm", C);
            r.scalar(m + ".beta");
            if (cfg.attention == AttentionMode::NonPatch) {
                r.depthwise(m + ".dconv", C, k);
                r.depthwise(m + ".ffn_dconv", R, k);
            } else {
                for (const char* q : {"q", "k", "v"}) r.conv(m + ".attn." + q, C, C, 1);
                for (const char* q : {"q", "k", "v"}) r.conv(m + ".ffn_attn." + q, R, R, 1);
            }
        }

        if (cfg.selective_attention) {
            r.conv(s + ".selective.z1", C, C, 1);
            r.conv(s + ".selective.z2", C, C, 1);
            r.conv(s + ".selective.z3", C, C, 1);
        }

        for (std::size_t j = 1; j <= cfg.downsamples; ++j) {
            const std::string d = s + ".decoder.step" + std::to_string(j);
            if (cfg.lim) {
                for (const char* name : {"d1", "d2", "d3"}) {
                    r.depthwise(d + "." + name + ".dw", C, 3);
                    r.conv(d + "." + name + ".pw", C, C, 1);
                }
                r.norm(d + ".d2.norm", C);
                r.norm(d + ".d3.norm", C);
            } else {
                r.conv(d + ".fuse", C, 2 * C, 1);
            }
        }

        r.conv(s + ".head", cfg.in_channels_per_image, C, 3);
    }
    return std::move(r.specs);
}

void initialize(ParamEntry& e, const InitSpec& spec, std::uint64_t seed) {
    auto data = e.tensor.mutable_data();
    switch (spec.kind) {
        case Init::One: std::fill(data.begin(), data.end(), 1.0); return;
        case Init::Zero: std::fill(data.begin(), data.end(), 0.0); return;
        case Init::Uniform: break;
    }
    const double bound = 1.0 / std::sqrt(double(spec.fan_in));
    Rng rng(seed ^ fnv1a(e.name));
    for (double& v : data) v = rng.uniform(-bound, bound);
}

// ---------------------------------------------------------------- blocks

Tensor conv(const ParamStore& p, const std::string& name, const Tensor& x,
            const Conv2dOptions& o = {}) {
    return conv2d(x, p.get(name + ".weight"), p.get(name + ".bias"), o);
}

Tensor depthwise(const ParamStore& p, const std::string& name, const Tensor& x, std::size_t stride = 1) {
    const Tensor& w = p.get(name + ".weight");
    return conv2d(x, w, p.get(name + ".bias"), Conv2dOptions::same(w.shape().h, stride, w.shape().n));
}

Tensor norm(const ParamStore& p, const std::string& name, const Tensor& x) {
    return instance_norm2d(x, p.get(name + ".gamma"), p.get(name + ".beta"));
}

Tensor separable(const ParamStore& p, const std::string& name, const Tensor& x) {
    return conv(p, name + ".pw", depthwise(p, name + ".dw", x));
}

Tensor attention_block(const ParamStore& p, const std::string& name, const Tensor& x,
                       std::size_t patch) {
    return patch_attention(conv(p, name + ".q", x), conv(p, name + ".k", x), conv(p, name + ".v", x),
                           patch);
}

}  // namespace

// ---------------------------------------------------------------- config

std::string to_string(FusionMode m) {
    switch (m) {
        case FusionMode::Sum: return "sum";
        case FusionMode::Concat: return "concat";
        case FusionMode::None: return "none";
    }
    return "?";
}

std::string to_string(AttentionMode m) {
    switch (m) {
        case AttentionMode::NonPatch: return "nonpatch";
        case AttentionMode::Patch: return "patch";
        case AttentionMode::Off: return "off";
    }
    return "?";
}

FusionMode parse_fusion_mode(std::string_view s) {
    if (s == "sum") return FusionMode::Sum;
    if (s == "concat") return FusionMode::Concat;
    if (s == "none") return FusionMode::None;
    invalid("unknown fusion mode '" + std::string(s) + "' (expected sum, concat or none)");
}

AttentionMode parse_attention_mode(std::string_view s) {
    if (s == "nonpatch") return AttentionMode::NonPatch;
    if (s == "patch") return AttentionMode::Patch;
    if (s == "off") return AttentionMode::Off;
    invalid("unknown attention mode '" + std::string(s) + "' (expected nonpatch, patch or off)");
}

std::size_t ModelConfig::ffn_channels() const {
    const double r = std::round(ffn_expansion * double(hidden_channels));
    return r < 1.0 ? 1 : std::size_t(r);
}

void ModelConfig::validate() const {
    if (in_channels_per_image == 0) invalid("in_channels_per_image must be positive");
    if (num_images < 2) invalid("num_images must be at least 2 so the stage adapter has outputs");
    if (hidden_channels == 0) invalid("hidden_channels must be positive");
    if (downsamples == 0) invalid("downsamples must be at least 1");
    if (stages == 0) invalid("stages must be at least 1");
    if (bottleneck_channels == 0) invalid("bottleneck_channels must be positive");
    if (attention_kernel % 2 == 0) invalid("attention_kernel must be odd");
    if (!(ffn_expansion > 0.0)) invalid("ffn_expansion must be positive");
    if (height == 0 || width == 0) invalid("height and width must be positive");
    if (downsamples >= 31) invalid("downsamples too large");
    const std::size_t f = std::size_t(1) << downsamples;
    if (height % f != 0) invalid("height " + std::to_string(height) + " not divisible by 2^downsamples");
    if (width % f != 0) invalid("width " + std::to_string(width) + " not divisible by 2^downsamples");
    if (attention == AttentionMode::Patch) {
        if (patch_size == 0) invalid("patch_size must be positive");
        if ((height / f) % patch_size != 0 || (width / f) % patch_size != 0)
            invalid("patch_size must divide the coarsest feature map");
    }
}

// ---------------------------------------------------------------- store

Tensor& ParamStore::add(const std::string& name, const Shape& shape, bool decay) {
    if (contains(name)) invalid("parameter '" + name + "' registered twice");
    index_.emplace(name, entries_.size());
    entries_.push_back({name, Tensor::zeros(shape, true), decay});
    return entries_.back().tensor;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) invalid("unknown parameter '" + name + "'");
    return entries_[it->second].tensor;
}

Tensor& ParamStore::get(const std::string& name) {
    return const_cast<Tensor&>(std::as_const(*this).get(name));
}

std::size_t ParamStore::total_scalars() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

std::string stage_prefix(std::size_t t) { return "stage" + std::to_string(t); }

Model build_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Model m{config, {}};
    const auto specs = register_params(m.params, config);
    for (std::size_t i = 0; i < specs.size(); ++i) initialize(m.params.entries()[i], specs[i], seed);
    return m;
}

// ---------------------------------------------------------------- forward

Tensor bottleneck_forward(const Tensor& x, const ParamStore& p) {
    const auto o = Conv2dOptions::same(3);
    Tensor h = relu(norm(p, "bottleneck.norm1", conv(p, "bottleneck.conv1", x, o)));
    return add(x, conv(p, "bottleneck.conv2", h, o));
}

std::vector<Tensor> encoder_forward(const Tensor& stage_input, const ParamStore& p,
                                    std::string_view stage, const ModelConfig& cfg) {
    const Shape& s = stage_input.shape();
    const std::size_t f = std::size_t(1) << cfg.downsamples;
    if (s.h % f != 0 || s.w % f != 0)
        invalid("encoder input " + s.str() + " not divisible by 2^" + std::to_string(cfg.downsamples));
    const std::string e = join(stage, "encoder");
    std::vector<Tensor> features;
    features.push_back(
        relu(norm(p, e + ".stem_norm", conv(p, e + ".stem", stage_input, Conv2dOptions::same(3)))));
    for (std::size_t i = 1; i <= cfg.downsamples; ++i) {
        const std::string d = e + ".down" + std::to_string(i);
        Tensor h = depthwise(p, d + ".dw", features.back(), 2);
        features.push_back(relu(norm(p, d + ".norm", conv(p, d + ".pw", h))));
    }
    return features;
}

Tensor multi_scale_fusion(std::span<const Tensor> features, const ParamStore& p,
                          std::string_view stage, const ModelConfig& cfg) {
    if (features.empty()) invalid("multi_scale_fusion: no features");
    const Tensor& coarsest = features.back();
    if (cfg.fusion == FusionMode::None) return coarsest;
    std::vector<Tensor> pooled;
    for (std::size_t i = 0; i < features.size(); ++i) {
        const bool last = i + 1 == features.size();
        pooled.push_back(last ? features[i]
                              : adaptive_avg_pool2d(features[i], coarsest.shape().h, coarsest.shape().w));
    }
    if (cfg.fusion == FusionMode::Concat)
        return conv(p, join(stage, "fusion.reduce"), concat_channels(pooled));
    Tensor acc = pooled[0];
    for (std::size_t i = 1; i < pooled.size(); ++i) acc = add(acc, pooled[i]);
    return acc;
}

Tensor transformer_layer(const Tensor& f, const ParamStore& p, std::string_view stage,
                         const ModelConfig& cfg) {
    if (cfg.attention == AttentionMode::Off) return f;
    const std::string m = join(stage, "transformer");
    const bool patch = cfg.attention == AttentionMode::Patch;
    if (patch && (f.shape().h % cfg.patch_size != 0 || f.shape().w % cfg.patch_size != 0))
        invalid("transformer_layer: patch_size " + std::to_string(cfg.patch_size) +
                " does not divide " + f.shape().str());

    auto mix = [&](const std::string& name, const Tensor& x) {
        return patch ? attention_block(p, m + "." + (name == "dconv" ? "attn" : "ffn_attn"), x,
                                       cfg.patch_size)
                     : depthwise(p, m + "." + name, x);
    };

    Tensor w1 = conv(p, m + ".w1", f);
    Tensor w2 = conv(p, m + ".w2", f);
    Tensor modulated = conv(p, m + ".w3", mul(mix("dconv", w1), w2));
    Tensor fa = add(f, scale(modulated, p.get(m + ".alpha")));

    Tensor v1 = conv(p, m + ".v1", fa);
    Tensor ffn = norm(p, m + ".ffn_norm", conv(p, m + ".v2", add(v1, mix("ffn_dconv", v1))));
    return add(fa, scale(ffn, p.get(m + ".beta")));
}

std::vector<Tensor> selective_attention(const Tensor& global, std::span<const Tensor> features,
                                        const ParamStore& p, std::string_view stage,
                                        const ModelConfig& cfg) {
    std::vector<Tensor> out(features.begin(), features.end());
    if (!cfg.selective_attention) return out;
    const std::string z = join(stage, "selective");
    Tensor gate = sigmoid(conv(p, z + ".z1", global));
    Tensor shift = conv(p, z + ".z3", global);
    for (std::size_t i = 0; i < features.size(); ++i) {
        const Shape& s = features[i].shape();
        if (s.h % global.shape().h != 0 || s.h / global.shape().h != s.w / global.shape().w)
            invalid("selective_attention: scale " + std::to_string(i) + " shape " + s.str() +
                    " is not an integer multiple of " + global.shape().str());
        const std::size_t factor = s.h / global.shape().h;
        Tensor g = factor == 1 ? gate : upsample_nearest(gate, factor);
        Tensor b = factor == 1 ? shift : upsample_nearest(shift, factor);
        out[i] = add(mul(g, conv(p, z + ".z2", features[i])), b);
    }
    return out;
}

Tensor lim_forward(const Tensor& o_prev, const Tensor& skip, const ParamStore& p,
                   std::string_view step) {
    const Shape& a = o_prev.shape();
    const Shape& b = skip.shape();
    if (b.h != 2 * a.h || b.w != 2 * a.w || a.c != b.c || a.n != b.n)
        invalid("lim_forward: skip " + b.str() + " must be twice the spatial size of " + a.str());
    const std::string s(step);
    Tensor gate = upsample_nearest(sigmoid(separable(p, s + ".d1", o_prev)), 2);
    Tensor local = norm(p, s + ".d2.norm", separable(p, s + ".d2", skip));
    Tensor shift = upsample_nearest(norm(p, s + ".d3.norm", separable(p, s + ".d3", o_prev)), 2);
    return add(mul(gate, local), shift);
}

Tensor plain_decoder_step(const Tensor& o_prev, const Tensor& skip, const ParamStore& p,
                          std::string_view step) {
    const Shape& a = o_prev.shape();
    const Shape& b = skip.shape();
    if (b.h != 2 * a.h || b.w != 2 * a.w || a.c != b.c || a.n != b.n)
        invalid("decoder step: skip " + b.str() + " must be twice the spatial size of " + a.str());
    return conv(p, join(step, "fuse"), concat_channels({upsample_nearest(o_prev, 2), skip}));
}

Tensor autoencoder_forward(const Tensor& stage_input, const ParamStore& p, std::size_t stage,
                           const ModelConfig& cfg) {
    const std::string s = stage_prefix(stage);
    std::vector<Tensor> features = encoder_forward(stage_input, p, s, cfg);
    Tensor fused = multi_scale_fusion(features, p, s, cfg);
    Tensor global = transformer_layer(fused, p, s, cfg);
    std::vector<Tensor> skips = selective_attention(global, features, p, s, cfg);

    // Without selective attention the coarsest skip is the raw F_N, so the
    // decoder starts from the transformer output instead.
    Tensor o = cfg.selective_attention ? skips.back() : global;
    const std::size_t N = cfg.downsamples;
    for (std::size_t j = 1; j <= N; ++j) {
        const std::string step = s + ".decoder.step" + std::to_string(j);
        o = cfg.lim ? lim_forward(o, skips[N - j], p, step) : plain_decoder_step(o, skips[N - j], p, step);
    }
    return tanh(conv(p, s + ".head", o, Conv2dOptions::same(3)));
}

Tensor bottleneck_concat(std::span<const Tensor> images, const ParamStore& p) {
    std::vector<Tensor> u;
    u.reserve(images.size());
    for (const Tensor& x : images) u.push_back(bottleneck_forward(x, p));
    return concat_channels(u);
}

PmaaOutput pmaa_forward(std::span<const Tensor> images, const ParamStore& p,
                        const ModelConfig& cfg) {
    if (images.size() != cfg.num_images)
        invalid("pmaa_forward: expected " + std::to_string(cfg.num_images) + " images, got " +
                std::to_string(images.size()));
    const Shape& s = images.front().shape();
    for (const Tensor& x : images) {
        if (x.shape() != s) invalid("pmaa_forward: cloudy images differ in shape");
        if (x.shape().c != cfg.in_channels_per_image)
            invalid("pmaa_forward: image has " + std::to_string(x.shape().c) + " channels, expected " +
                    std::to_string(cfg.in_channels_per_image));
    }
    Tensor uc = bottleneck_concat(images, p);
    PmaaOutput out;
    Tensor q = Tensor::zeros(s);
    for (std::size_t t = 0; t < cfg.stages; ++t) {
        Tensor adapted = conv(p, stage_prefix(t) + ".adapter", uc);
        q = autoencoder_forward(concat_channels({q, adapted}), p, t, cfg);
        out.stages.push_back(q);
    }
    out.final = q;
    return out;
}

}  // namespace pmaa
