#include "pmaa/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <numbers>
#include <set>
#include <sstream>

#include "pmaa/random.hpp"

namespace pmaa {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'P', 'M', 'A', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 24;
constexpr std::size_t kChannels = 4;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const unsigned char> b, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[at + i]) << (8 * i);
    return v;
}

std::vector<unsigned char> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        fields.push_back(line.substr(start, tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return fields;
}

std::string format_record(const ManifestRecord& r) {
    return r.id + "\t" + r.cloudy[0] + "\t" + r.cloudy[1] + "\t" + r.cloudy[2] + "\t" + r.target;
}

// ---------------------------------------------------------------- synthesis

/// Smooth field on a size x size grid: sum of 8 plane waves with amplitude
/// inversely proportional to frequency (cycles per image).
std::vector<double> wave_field(Rng& rng, std::size_t size, double min_freq, double max_freq) {
    constexpr int kWaves = 8;
    double fx[kWaves], fy[kWaves], amp[kWaves], phase[kWaves];
    for (int k = 0; k < kWaves; ++k) {
        const double f = rng.uniform(min_freq, max_freq);
        const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
        fx[k] = f * std::cos(theta);
        fy[k] = f * std::sin(theta);
        amp[k] = 1.0 / f;
        phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    std::vector<double> field(size * size);
    const double step = 2.0 * std::numbers::pi / double(size);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            double v = 0.0;
            for (int k = 0; k < kWaves; ++k)
                v += amp[k] * std::sin(step * (fx[k] * double(x) + fy[k] * double(y)) + phase[k]);
            field[y * size + x] = v;
        }
    return field;
}

/// Opacity in [0, 1] that is nonzero on exactly round(coverage * pixels)
/// pixels, with a soft edge just above the threshold.
std::vector<double> cloud_mask(Rng& rng, std::size_t size, double coverage) {
    std::vector<double> field = wave_field(rng, size, 1.0, 3.0);
    const std::size_t pixels = field.size();
    const auto covered = std::size_t(std::llround(coverage * double(pixels)));
    std::vector<double> mask(pixels, 0.0);
    if (covered == 0) return mask;
    if (covered >= pixels) {
        std::fill(mask.begin(), mask.end(), 1.0);
        return mask;
    }
    std::vector<double> sorted = field;
    std::nth_element(sorted.begin(), sorted.begin() + std::ptrdiff_t(covered), sorted.end(),
                     std::greater<>());
    const double threshold = sorted[covered];
    const auto [lo, hi] = std::minmax_element(field.begin(), field.end());
    const double edge = 0.1 * (*hi - *lo);
    for (std::size_t i = 0; i < pixels; ++i)
        if (field[i] > threshold) mask[i] = std::min(1.0, (field[i] - threshold) / edge + 0.05);
    return mask;
}

}  // namespace

// ---------------------------------------------------------------- tensor files

std::vector<unsigned char> encode_tensor(const Tensor& t) {
    const Shape& s = t.shape();
    for (std::size_t d : {s.n, s.c, s.h, s.w})
        if (d > 0xffffffffu) throw std::invalid_argument("tensor dimension exceeds u32");
    std::vector<unsigned char> out(kMagic, kMagic + 4);
    out.reserve(kHeaderBytes + 4 * t.numel());
    put_u32(out, kVersion);
    for (std::size_t d : {s.n, s.c, s.h, s.w}) put_u32(out, std::uint32_t(d));
    for (double v : t.data()) {
        if (!std::isfinite(v)) throw std::invalid_argument("cannot store non-finite value");
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
}

Tensor decode_tensor(std::span<const unsigned char> b) {
    if (b.size() < 4 || !std::equal(kMagic, kMagic + 4, b.begin()))
        throw ParseError("bad magic at byte offset 0 (expected PMAT)", 0);
    if (b.size() < 8) throw ParseError("truncated header at byte offset 4", 4);
    if (const auto v = get_u32(b, 4); v != kVersion)
        throw ParseError("unsupported version " + std::to_string(v) + " at byte offset 4", 4);
    if (b.size() < kHeaderBytes)
        throw ParseError("truncated header at byte offset " + std::to_string(b.size() & ~std::size_t(3)),
                         b.size() & ~std::size_t(3));
    const Shape s{get_u32(b, 8), get_u32(b, 12), get_u32(b, 16), get_u32(b, 20)};
    const std::size_t expected = 4 * s.numel();
    const std::size_t found = b.size() - kHeaderBytes;
    if (found != expected)
        throw ParseError("payload at byte offset 24 holds " + std::to_string(found) + " bytes, header " +
                             s.str() + " requires " + std::to_string(expected),
                         kHeaderBytes);
    std::vector<double> data(s.numel());
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = std::bit_cast<float>(get_u32(b, kHeaderBytes + 4 * i));
    return Tensor::from_data(s, std::move(data));
}

void write_tensor_file(const fs::path& path, const Tensor& t) {
    const auto bytes = encode_tensor(t);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

Tensor read_tensor_file(const fs::path& path) {
    const auto bytes = read_bytes(path);
    try {
        return decode_tensor(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.position());
    }
}

// ---------------------------------------------------------------- normalization

Tensor normalize_pixels(const Tensor& raw, double pixel_max, std::size_t* clamped) {
    if (!(pixel_max > 0.0)) throw std::invalid_argument("pixel_max must be positive");
    std::size_t n_clamped = 0;
    std::vector<double> out(raw.numel());
    const auto in = raw.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = in[i];
        if (v < 0.0 || v > pixel_max) {
            v = std::clamp(v, 0.0, pixel_max);
            ++n_clamped;
        }
        out[i] = (v / pixel_max - 0.5) / 0.5;
    }
    if (clamped) *clamped = n_clamped;
    return Tensor::from_data(raw.shape(), std::move(out));
}

Tensor denormalize_pixels(const Tensor& normalized, double pixel_max) {
    if (!(pixel_max > 0.0)) throw std::invalid_argument("pixel_max must be positive");
    std::vector<double> out(normalized.numel());
    const auto in = normalized.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (in[i] * 0.5 + 0.5) * pixel_max;
    return Tensor::from_data(normalized.shape(), std::move(out));
}

// ---------------------------------------------------------------- manifests

Manifest Manifest::parse(const std::string& text) {
    Manifest m;
    m.lines_.clear();
    std::set<std::string> ids;
    std::size_t start = 0;
    std::size_t line_no = 0;
    m.trailing_newline_ = text.empty() || text.back() == '\n';
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string raw = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        Line line{raw, std::nullopt};
        std::string body = raw;
        if (!body.empty() && body.back() == '\r') body.pop_back();
        if (!body.empty() && body.front() != '#') {
            auto fields = split_tabs(body);
            if (fields.size() != 5)
                throw ParseError("manifest line " + std::to_string(line_no) + ": expected 5 tab-separated fields, found " +
                                     std::to_string(fields.size()),
                                 line_no);
            for (const auto& f : fields)
                if (f.empty()) throw ParseError("manifest line " + std::to_string(line_no) + ": empty field", line_no);
            if (!ids.insert(fields[0]).second)
                throw ParseError("manifest line " + std::to_string(line_no) + ": duplicate id '" + fields[0] + "'",
                                 line_no);
            line.record = ManifestRecord{fields[0], {fields[1], fields[2], fields[3]}, fields[4]};
        }
        m.lines_.push_back(std::move(line));
    }
    return m;
}

Manifest Manifest::read(const fs::path& path) {
    try {
        return parse(read_text(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.position());
    }
}

std::string Manifest::format() const {
    std::string out;
    for (std::size_t i = 0; i < lines_.size(); ++i) {
        out += lines_[i].raw;
        if (i + 1 < lines_.size() || trailing_newline_) out += '\n';
    }
    return out;
}

void Manifest::write(const fs::path& path) const { write_text(path, format()); }

void Manifest::add(ManifestRecord r) {
    for (const auto& existing : records())
        if (existing.id == r.id) throw std::invalid_argument("duplicate manifest id '" + r.id + "'");
    for (const std::string* f : {&r.id, &r.cloudy[0], &r.cloudy[1], &r.cloudy[2], &r.target})
        if (f->empty() || f->find_first_of("\t\n") != std::string::npos)
            throw std::invalid_argument("manifest fields must be non-empty and free of tabs/newlines");
    std::string raw = format_record(r);
    lines_.push_back({std::move(raw), std::move(r)});
    trailing_newline_ = true;
}

void Manifest::add_comment(const std::string& line) {
    lines_.push_back({"# " + line, std::nullopt});
    trailing_newline_ = true;
}

std::vector<ManifestRecord> Manifest::records() const {
    std::vector<ManifestRecord> out;
    for (const auto& l : lines_)
        if (l.record) out.push_back(*l.record);
    return out;
}

std::size_t Manifest::size() const {
    return std::size_t(std::count_if(lines_.begin(), lines_.end(), [](const Line& l) { return bool(l.record); }));
}

fs::path manifest_path(const fs::path& root, const std::string& split) { return root / (split + ".manifest"); }

std::vector<Sample> load_dataset(const fs::path& manifest_file, double pixel_max) {
    const Manifest manifest = Manifest::read(manifest_file);
    const fs::path base = manifest_file.parent_path();
    std::vector<Sample> samples;
    for (const auto& r : manifest.records()) {
        auto load = [&](const std::string& rel) {
            const fs::path p = base / rel;
            if (!fs::exists(p))
                throw std::runtime_error("sample '" + r.id + "': missing file " + p.string());
            std::size_t clamped = 0;
            Tensor t = normalize_pixels(read_tensor_file(p), pixel_max, &clamped);
            if (clamped)
                std::cerr << "warning: " << p.string() << ": clamped " << clamped
                          << " values outside [0, " << pixel_max << "]\n";
            return t;
        };
        Sample s;
        s.id = r.id;
        for (const auto& c : r.cloudy) s.cloudy.push_back(load(c));
        s.target = load(r.target);
        for (const auto& c : s.cloudy)
            if (c.shape() != s.target.shape())
                throw std::runtime_error("sample '" + r.id + "': cloudy and target shapes differ");
        samples.push_back(std::move(s));
    }
    return samples;
}

// ---------------------------------------------------------------- synthetic data

SynthSample synth_sample(const SynthOptions& o, std::size_t index) {
    if (o.size == 0 || o.size % 16 != 0)
        throw std::invalid_argument("size must be a positive multiple of 16, got " + std::to_string(o.size));
    if (!(o.coverage >= 0.0 && o.coverage <= 1.0)) throw std::invalid_argument("coverage must lie in [0, 1]");
    if (!(o.pixel_max > 0.0)) throw std::invalid_argument("pixel_max must be positive");

    const std::size_t plane = o.size * o.size;
    SynthSample s;
    std::vector<double> target(kChannels * plane);
    for (std::size_t c = 0; c < kChannels; ++c) {
        Rng rng(o.seed, (std::uint64_t(index) << 8) | c);
        auto field = wave_field(rng, o.size, 0.5, 4.0);
        const auto [lo, hi] = std::minmax_element(field.begin(), field.end());
        const double span = std::max(*hi - *lo, 1e-12);
        for (std::size_t i = 0; i < plane; ++i)
            target[c * plane + i] = (0.1 + 0.8 * (field[i] - *lo) / span) * o.pixel_max;
    }
    s.target.assign(target.begin(), target.end());

    const double cloud = 0.95 * o.pixel_max;
    for (std::size_t v = 0; v < 3; ++v) {
        Rng rng(o.seed, (std::uint64_t(index) << 8) | (0x10 + v));
        auto mask = cloud_mask(rng, o.size, o.coverage);
        const double jitter = rng.uniform(-0.02, 0.02) * o.pixel_max;
        std::vector<float> img(kChannels * plane);
        for (std::size_t c = 0; c < kChannels; ++c)
            for (std::size_t i = 0; i < plane; ++i) {
                const double a = mask[i];
                const double value = (1.0 - a) * target[c * plane + i] + a * cloud + jitter;
                img[c * plane + i] = static_cast<float>(std::clamp(value, 0.0, o.pixel_max));
            }
        s.cloudy.push_back(std::move(img));
        s.masks.emplace_back(mask.begin(), mask.end());
    }
    return s;
}

fs::path synth_generate(const SynthOptions& o) {
    if (o.count == 0) throw std::invalid_argument("count must be at least 1");
    if (o.split.empty() || o.split.find_first_of("/\\") != std::string::npos)
        throw std::invalid_argument("invalid split name '" + o.split + "'");
    synth_sample(o, 0);  // validates options before touching the filesystem
    const fs::path dir = o.root / o.split;
    fs::create_directories(dir);

    Manifest manifest;
    std::ostringstream header;
    header << "synthetic split=" << o.split << " count=" << o.count << " size=" << o.size
           << " coverage=" << o.coverage << " seed=" << o.seed << " pixel_max=" << o.pixel_max;
    manifest.add_comment(header.str());

    const Shape shape{1, kChannels, o.size, o.size};
    auto save = [&](const std::string& name, const std::vector<float>& v) {
        write_tensor_file(dir / name, Tensor::from_data(shape, {v.begin(), v.end()}));
        return o.split + "/" + name;
    };
    for (std::size_t i = 0; i < o.count; ++i) {
        const SynthSample s = synth_sample(o, i);
        char id[32];
        std::snprintf(id, sizeof id, "s%04zu", i);
        ManifestRecord r;
        r.id = id;
        for (std::size_t v = 0; v < 3; ++v) r.cloudy[v] = save(r.id + "_c" + std::to_string(v) + ".pmat", s.cloudy[v]);
        r.target = save(r.id + "_target.pmat", s.target);
        manifest.add(std::move(r));
    }
    const fs::path mp = manifest_path(o.root, o.split);
    manifest.write(mp);
    return mp;
}

// ---------------------------------------------------------------- batching

Batch make_batch(std::span<const Sample> samples, std::span<const std::size_t> indices) {
    if (indices.empty()) throw std::invalid_argument("empty batch");
    const Sample& first = samples[indices[0]];
    const Shape one = first.target.shape();
    const std::size_t views = first.cloudy.size();
    const Shape batched{indices.size(), one.c, one.h, one.w};
    auto stack = [&](auto&& pick) {
        std::vector<double> v;
        v.reserve(batched.numel());
        for (std::size_t i : indices) {
            const Tensor& t = pick(samples[i]);
            if (t.shape() != one) throw std::invalid_argument("batch samples differ in shape");
            v.insert(v.end(), t.data().begin(), t.data().end());
        }
        return Tensor::from_data(batched, std::move(v));
    };
    Batch b;
    for (std::size_t k = 0; k < views; ++k)
        b.cloudy.push_back(stack([k](const Sample& s) -> const Tensor& { return s.cloudy.at(k); }));
    b.target = stack([](const Sample& s) -> const Tensor& { return s.target; });
    return b;
}

}  // namespace pmaa
