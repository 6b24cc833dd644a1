#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pmaa/tensor.hpp"

namespace pmaa {

/// Malformed file or text, with the byte offset or line where it was found.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t position)
        : std::runtime_error(what), position_(position) {}
    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

/// Three cloudy views and the clear target, each [1, c, h, w] in [-1, 1].
struct Sample {
    std::string id;
    std::vector<Tensor> cloudy;
    Tensor target;
};

// ---------------------------------------------------------------- tensor files

/// "PMAT", u32 version 1, u32 n c h w, then float32 values, all little-endian.
void write_tensor_file(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor_file(const std::filesystem::path& path);
std::vector<unsigned char> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const unsigned char> bytes);

// ---------------------------------------------------------------- normalization

/// raw in [0, pixel_max] -> [-1, 1]. Out-of-range values are clamped and
/// counted in `clamped` when given.
Tensor normalize_pixels(const Tensor& raw, double pixel_max, std::size_t* clamped = nullptr);
Tensor denormalize_pixels(const Tensor& normalized, double pixel_max);

// ---------------------------------------------------------------- manifests

struct ManifestRecord {
    std::string id;
    std::string cloudy[3];
    std::string target;
};

/// Tab-separated records, one per line; "#" lines and blank lines are kept
/// verbatim so that format(parse(text)) == text.
class Manifest {
public:
    static Manifest parse(const std::string& text);
    static Manifest read(const std::filesystem::path& path);
    std::string format() const;
    void write(const std::filesystem::path& path) const;

    void add(ManifestRecord r);
    void add_comment(const std::string& line);
    std::vector<ManifestRecord> records() const;
    std::size_t size() const;

private:
    struct Line {
        std::string raw;
        std::optional<ManifestRecord> record;
    };
    std::vector<Line> lines_;
    bool trailing_newline_ = true;
};

/// Samples in manifest order, paths resolved against the manifest's folder.
std::vector<Sample> load_dataset(const std::filesystem::path& manifest_path, double pixel_max);

std::filesystem::path manifest_path(const std::filesystem::path& root, const std::string& split);

// ---------------------------------------------------------------- synthetic data

struct SynthOptions {
    std::filesystem::path root;
    std::string split = "train";
    std::size_t count = 8;
    std::size_t size = 64;
    double coverage = 0.3;
    std::uint64_t seed = 0;
    double pixel_max = 10000.0;
};

struct SynthSample {
    std::vector<std::vector<float>> cloudy;  // three [4, size, size] raw images
    std::vector<float> target;
    std::vector<std::vector<float>> masks;   // cloud opacity per view, [size, size]
};

/// One raw sample, a pure function of (options, index).
SynthSample synth_sample(const SynthOptions& options, std::size_t index);

/// Writes <root>/<split>/<id>_{c0,c1,c2,target}.pmat and <root>/<split>.manifest.
std::filesystem::path synth_generate(const SynthOptions& options);

// ---------------------------------------------------------------- batching

struct Batch {
    std::vector<Tensor> cloudy;  // num_images tensors of [b, c, h, w]
    Tensor target;
};

Batch make_batch(std::span<const Sample> samples, std::span<const std::size_t> indices);

}  // namespace pmaa
