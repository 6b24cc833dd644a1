#include "pmaa/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "pmaa/config.hpp"
#include "pmaa/data.hpp"

namespace pmaa {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'P', 'M', 'A', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
const std::string kParam = "param/";
const std::string kFirst = "adam_m/";
const std::string kSecond = "adam_v/";
const std::string kStep = "adam/step";

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out.insert(out.end(), s.begin(), s.end());
    }
    std::vector<unsigned char> out;
};

class Reader {
public:
    explicit Reader(std::span<const unsigned char> b) : b_(b) {}
    std::size_t offset() const { return pos_; }
    bool done() const { return pos_ == b_.size(); }
    void need(std::size_t n, const char* what) {
        if (b_.size() - pos_ < n)
            throw ParseError("checkpoint truncated at byte offset " + std::to_string(pos_) + " while reading " + what,
                             pos_);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(b_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(b_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
    std::string str(const char* what) {
        const std::uint32_t n = u32(what);
        need(n, what);
        std::string s(b_.begin() + std::ptrdiff_t(pos_), b_.begin() + std::ptrdiff_t(pos_ + n));
        pos_ += n;
        return s;
    }

private:
    std::span<const unsigned char> b_;
    std::size_t pos_ = 0;
};

CheckpointRecord record_of(const std::string& name, const Shape& shape, std::span<const double> values) {
    return {name, shape, {values.begin(), values.end()}};
}

}  // namespace

std::uint64_t Checkpoint::parameter_scalars() const {
    std::uint64_t total = 0;
    for (const auto& r : records)
        if (r.name.starts_with(kParam)) total += r.values.size();
    return total;
}

const CheckpointRecord* Checkpoint::find(const std::string& name) const {
    for (const auto& r : records)
        if (r.name == name) return &r;
    return nullptr;
}

std::vector<unsigned char> encode_checkpoint(const Checkpoint& c) {
    Writer w;
    w.out.insert(w.out.end(), kMagic, kMagic + 8);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(c.records.size()));
    for (const auto& r : c.records) {
        if (r.values.size() != r.shape.numel())
            throw std::invalid_argument("checkpoint record " + r.name + " has inconsistent size");
        w.str(r.name);
        for (std::size_t d : {r.shape.n, r.shape.c, r.shape.h, r.shape.w}) w.u32(static_cast<std::uint32_t>(d));
        for (double v : r.values) w.f64(v);
    }
    w.u32(c.epoch);
    w.f64(c.best_ssim);
    w.str(c.config_text);
    return std::move(w.out);
}

Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
    if (bytes.size() < 8 || !std::equal(kMagic, kMagic + 8, bytes.begin()))
        throw ParseError("bad checkpoint magic at byte offset 0 (expected PMAACKPT)", 0);
    Reader r(bytes.subspan(8));
    auto at = [&] { return r.offset() + 8; };
    if (const auto v = r.u32("version"); v != kVersion)
        throw ParseError("unsupported checkpoint version " + std::to_string(v) + " at byte offset 8", 8);
    Checkpoint c;
    const std::uint32_t count = r.u32("record count");
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointRecord rec;
        rec.name = r.str("record name");
        const std::size_t dims[4] = {r.u32("shape"), r.u32("shape"), r.u32("shape"), r.u32("shape")};
        rec.shape = Shape{dims[0], dims[1], dims[2], dims[3]};
        const std::size_t n = rec.shape.numel();
        if (n > (bytes.size() - at()) / 8)
            throw ParseError("checkpoint record " + rec.name + " payload truncated at byte offset " +
                                 std::to_string(at()),
                             at());
        rec.values.resize(n);
        for (double& v : rec.values) v = r.f64("payload");
        c.records.push_back(std::move(rec));
    }
    c.epoch = r.u32("epoch");
    c.best_ssim = r.f64("best ssim");
    c.config_text = r.str("config");
    if (!r.done())
        throw ParseError("trailing bytes after checkpoint metadata at byte offset " + std::to_string(at()), at());
    return c;
}

Checkpoint make_checkpoint(const Model& model, const OptimState* optim, std::uint32_t epoch, double best_ssim) {
    Checkpoint c;
    c.epoch = epoch;
    c.best_ssim = best_ssim;
    c.config_text = format_model_config(model.config);
    const auto& entries = model.params.entries();
    for (const auto& e : entries) c.records.push_back(record_of(kParam + e.name, e.tensor.shape(), e.tensor.data()));
    if (optim) {
        if (optim->m.size() != entries.size() || optim->v.size() != entries.size())
            throw std::invalid_argument("optimizer state does not match parameters");
        for (std::size_t k = 0; k < entries.size(); ++k)
            c.records.push_back(record_of(kFirst + entries[k].name, entries[k].tensor.shape(), optim->m[k]));
        for (std::size_t k = 0; k < entries.size(); ++k)
            c.records.push_back(record_of(kSecond + entries[k].name, entries[k].tensor.shape(), optim->v[k]));
        const double step = double(optim->step);
        c.records.push_back(record_of(kStep, Shape{1, 1, 1, 1}, std::span(&step, 1)));
    }
    return c;
}

void save_checkpoint(const fs::path& path, const Model& model, const OptimState* optim, std::uint32_t epoch,
                     double best_ssim) {
    const auto bytes = encode_checkpoint(make_checkpoint(model, optim, epoch, best_ssim));
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = fs::path(path).concat(".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

Checkpoint read_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    try {
        return decode_checkpoint(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.position());
    }
}

void restore_parameters(const Checkpoint& c, Model& model) {
    for (auto& e : model.params.entries()) {
        const CheckpointRecord* r = c.find(kParam + e.name);
        if (!r) throw std::runtime_error("checkpoint is missing tensor " + e.name);
        if (r->shape != e.tensor.shape())
            throw std::runtime_error("shape mismatch for tensor " + e.name + ": checkpoint " + r->shape.str() +
                                     ", model " + e.tensor.shape().str());
    }
    for (const auto& r : c.records)
        if (r.name.starts_with(kParam) && !model.params.contains(r.name.substr(kParam.size())))
            throw std::runtime_error("checkpoint tensor " + r.name.substr(kParam.size()) +
                                     " does not exist in the configured model");
    for (auto& e : model.params.entries()) {
        const auto& values = c.find(kParam + e.name)->values;
        std::copy(values.begin(), values.end(), e.tensor.mutable_data().begin());
    }
}

OptimState restore_optimizer(const Checkpoint& c, const Model& model) {
    OptimState s = OptimState::zeros_like(model.params);
    const CheckpointRecord* step = c.find(kStep);
    if (!step) throw std::runtime_error("checkpoint has no optimizer state");
    s.step = std::uint64_t(step->values.at(0));
    const auto& entries = model.params.entries();
    for (std::size_t k = 0; k < entries.size(); ++k) {
        const CheckpointRecord* m = c.find(kFirst + entries[k].name);
        const CheckpointRecord* v = c.find(kSecond + entries[k].name);
        if (!m || !v) throw std::runtime_error("checkpoint is missing optimizer moments for " + entries[k].name);
        if (m->shape != entries[k].tensor.shape() || v->shape != entries[k].tensor.shape())
            throw std::runtime_error("optimizer moment shape mismatch for " + entries[k].name);
        s.m[k] = m->values;
        s.v[k] = v->values;
    }
    return s;
}

Model load_model(const fs::path& path) {
    const Checkpoint c = read_checkpoint(path);
    Model m = build_model(model_config_from_text(c.config_text), 0);
    restore_parameters(c, m);
    return m;
}

}  // namespace pmaa
