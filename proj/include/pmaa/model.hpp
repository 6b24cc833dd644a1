#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pmaa/tensor.hpp"

namespace pmaa {

enum class FusionMode { Sum, Concat, None };
enum class AttentionMode { NonPatch, Patch, Off };

std::string to_string(FusionMode m);
std::string to_string(AttentionMode m);
FusionMode parse_fusion_mode(std::string_view s);
AttentionMode parse_attention_mode(std::string_view s);

struct ModelConfig {
    std::size_t in_channels_per_image = 4;
    std::size_t num_images = 3;
    std::size_t hidden_channels = 32;
    std::size_t downsamples = 4;
    std::size_t attention_kernel = 11;
    double ffn_expansion = 2.0;
    std::size_t stages = 3;
    std::size_t bottleneck_channels = 16;
    FusionMode fusion = FusionMode::Sum;
    AttentionMode attention = AttentionMode::NonPatch;
    bool selective_attention = true;
    bool lim = true;
    std::size_t patch_size = 4;
    std::size_t height = 256;
    std::size_t width = 256;

    std::size_t ffn_channels() const;
    /// Channels fed to every stage: all images stacked.
    std::size_t stage_channels() const { return in_channels_per_image * num_images; }
    /// Throws std::invalid_argument naming the first violated constraint.
    void validate() const;
};

struct ParamEntry {
    std::string name;
    Tensor tensor;
    bool decay = true;
};

/// Ordered, name-addressed registry of learnable tensors. Each tensor is
/// registered exactly once.
class ParamStore {
public:
    Tensor& add(const std::string& name, const Shape& shape, bool decay = true);
    const Tensor& get(const std::string& name) const;
    Tensor& get(const std::string& name);
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const std::vector<ParamEntry>& entries() const { return entries_; }
    std::vector<ParamEntry>& entries() { return entries_; }
    std::size_t size() const { return entries_.size(); }
    std::size_t total_scalars() const;
    void zero_grad();

private:
    std::vector<ParamEntry> entries_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

struct Model {
    ModelConfig config;
    ParamStore params;
};

/// Registers every parameter for `config` and initializes it. Each tensor is
/// seeded from (seed, name), so equally named tensors agree across configs.
Model build_model(const ModelConfig& config, std::uint64_t seed);

std::string stage_prefix(std::size_t t);

Tensor bottleneck_forward(const Tensor& x, const ParamStore& p);

/// F_0 .. F_N for one stage.
std::vector<Tensor> encoder_forward(const Tensor& stage_input, const ParamStore& p,
                                    std::string_view stage, const ModelConfig& cfg);

Tensor multi_scale_fusion(std::span<const Tensor> features, const ParamStore& p,
                          std::string_view stage, const ModelConfig& cfg);

Tensor transformer_layer(const Tensor& f, const ParamStore& p, std::string_view stage,
                         const ModelConfig& cfg);

/// F_i' for every scale. Returns the features unchanged when the toggle is off.
std::vector<Tensor> selective_attention(const Tensor& global, std::span<const Tensor> features,
                                        const ParamStore& p, std::string_view stage,
                                        const ModelConfig& cfg);

/// One decoder step: coarse O_prev and a skip at twice its resolution.
Tensor lim_forward(const Tensor& o_prev, const Tensor& skip, const ParamStore& p,
                   std::string_view step);
Tensor plain_decoder_step(const Tensor& o_prev, const Tensor& skip, const ParamStore& p,
                          std::string_view step);

Tensor autoencoder_forward(const Tensor& stage_input, const ParamStore& p, std::size_t stage,
                           const ModelConfig& cfg);

struct PmaaOutput {
    Tensor final;
    std::vector<Tensor> stages;  // Q_1 .. Q_T
};

/// Full progressive network on the cloudy images (num_images of them).
PmaaOutput pmaa_forward(std::span<const Tensor> images, const ParamStore& p,
                        const ModelConfig& cfg);

/// Stacks one sample's cloudy images (or a batch of them) into the stage
/// input width after the shared bottleneck.
Tensor bottleneck_concat(std::span<const Tensor> images, const ParamStore& p);

}  // namespace pmaa
