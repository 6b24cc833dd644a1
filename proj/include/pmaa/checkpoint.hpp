#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pmaa/model.hpp"
#include "pmaa/train.hpp"

namespace pmaa {

struct CheckpointRecord {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

/// Everything stored in a checkpoint file, independent of any live model.
struct Checkpoint {
    std::vector<CheckpointRecord> records;  // "param/..", "adam_m/..", "adam_v/.."
    std::uint32_t epoch = 0;
    double best_ssim = 0.0;
    std::string config_text;

    /// Sum of element counts over "param/" records.
    std::uint64_t parameter_scalars() const;
    const CheckpointRecord* find(const std::string& name) const;
};

/// "PMAACKPT", u32 version, u32 record count, records, then metadata.
std::vector<unsigned char> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::span<const unsigned char> bytes);

Checkpoint make_checkpoint(const Model& model, const OptimState* optim, std::uint32_t epoch,
                           double best_ssim);
void save_checkpoint(const std::filesystem::path& path, const Model& model, const OptimState* optim,
                     std::uint32_t epoch, double best_ssim);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies parameters into `model`; the first disagreement in name set or
/// shape raises std::runtime_error naming that tensor.
void restore_parameters(const Checkpoint& c, Model& model);
/// Restores moments and step for `model`'s parameter order.
OptimState restore_optimizer(const Checkpoint& c, const Model& model);

/// Builds the model described by the checkpoint's config and loads it.
Model load_model(const std::filesystem::path& path);

}  // namespace pmaa
