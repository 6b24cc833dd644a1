#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pmaa/model.hpp"

namespace pmaa {

struct CostEntry {
    std::string component;
    std::uint64_t params = 0;
    std::uint64_t macs = 0;
};

/// Parameter and multiply-accumulate counts per component at one input size.
struct CostReport {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<CostEntry> entries;

    std::uint64_t total_params() const;
    std::uint64_t total_macs() const;
    CostEntry& at(const std::string& component);
    const CostEntry* find(const std::string& component) const;

    /// "key<TAB>value" lines: params.<component>, macs.<component>, totals.
    std::string to_tsv() const;
    /// Aligned columns with exact counts, millions of params and GMACs.
    std::string to_table() const;
};

/// Reference figures for the default configuration at 256x256.
inline constexpr double kReferenceParamsM = 3.44;
inline constexpr double kReferenceMacsG = 91.94;

/// Component a parameter belongs to: "bottleneck" or "stage<t>.<part>".
std::string component_of(const std::string& param_name);

/// Exact scalar count of every registered tensor, grouped by component.
CostReport count_params(const ParamStore& params);

/// Analytic MACs for one sample: convolutions, gating products and patch
/// attention products. Additions, activations, pooling and upsampling are free.
CostReport count_macs(const ModelConfig& config, std::size_t height, std::size_t width);

/// Both counts merged into one report.
CostReport cost_report(const Model& model, std::size_t height, std::size_t width);

/// Multiplies counted while running one forward pass on the reference
/// kernels. Independent of count_macs.
std::uint64_t instrumented_macs(const Model& model, std::size_t height, std::size_t width);

}  // namespace pmaa
