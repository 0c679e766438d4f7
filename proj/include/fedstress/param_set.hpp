#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "fedstress/binio.hpp"
#include "fedstress/errors.hpp"
#include "fedstress/tensor.hpp"

namespace fedstress {

// Aggregatable entries take part in server-side averaging under every
// strategy; norm-local entries (batch-norm scale/shift/running stats) are the
// ones FedBN keeps on the client.
enum class ParamTag : uint8_t { Aggregatable = 0, NormLocal = 1 };

template <typename T>
struct ParamEntry {
    std::string name;
    Tensor<T> tensor;
    ParamTag tag = ParamTag::Aggregatable;
    bool trainable = true;
};

// Ordered, uniquely named tensor collection. Iteration order is insertion
// order, which build_model makes deterministic.
template <typename T>
class ParameterSet {
public:
    using Entry = ParamEntry<T>;

    void add(const std::string& name, Tensor<T> tensor, ParamTag tag, bool trainable) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        if (trainable) tensor.enable_grad();
        index_[name] = entries_.size();
        entries_.push_back(Entry{name, std::move(tensor), tag, trainable});
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Entry& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ShapeError("unknown parameter: " + name);
        return entries_[it->second];
    }
    const Entry& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ShapeError("unknown parameter: " + name);
        return entries_[it->second];
    }

    Tensor<T>& tensor(const std::string& name) { return at(name).tensor; }
    const Tensor<T>& tensor(const std::string& name) const { return at(name).tensor; }

    size_t size() const { return entries_.size(); }
    Entry& operator[](size_t i) { return entries_[i]; }
    const Entry& operator[](size_t i) const { return entries_[i]; }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    void zero_grads() {
        for (auto& e : entries_) e.tensor.zero_grad();
    }

    size_t total_values() const {
        size_t n = 0;
        for (const auto& e : entries_) n += e.tensor.numel();
        return n;
    }

    bool shape_compatible(const ParameterSet& other) const {
        if (size() != other.size()) return false;
        for (size_t i = 0; i < size(); ++i) {
            if (entries_[i].name != other.entries_[i].name) return false;
            if (entries_[i].tensor.shape != other.entries_[i].tensor.shape) return false;
        }
        return true;
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

// Running statistics are state, not weights; everything else is trained.
inline bool param_name_trainable(const std::string& name) {
    auto ends_with = [&](const char* suf) {
        std::string_view s(suf);
        return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    return !ends_with(".running_mean") && !ends_with(".running_var");
}

// Checkpoint file: magic "FSTP", version, entry count, then per entry the
// name, tag byte, rank, dims and a float32 payload. Always little-endian.
inline constexpr uint32_t kParamSetVersion = 1;

template <typename T>
void save_param_set(const ParameterSet<T>& params, const std::string& path) {
    BinWriter w(path);
    w.bytes("FSTP", 4);
    w.u32(kParamSetVersion);
    w.u32(static_cast<uint32_t>(params.size()));
    for (const auto& e : params) {
        w.str(e.name);
        w.u8(static_cast<uint8_t>(e.tag));
        w.u32(static_cast<uint32_t>(e.tensor.shape.size()));
        for (int d : e.tensor.shape) w.u32(static_cast<uint32_t>(d));
        for (const T& v : e.tensor.data) w.f32(static_cast<float>(v));
    }
    w.close();
}

template <typename T>
ParameterSet<T> load_param_set(const std::string& path) {
    BinReader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::string(magic, 4) != "FSTP") throw FormatError("bad magic, expected FSTP", 0);
    uint32_t version = r.u32();
    if (version != kParamSetVersion)
        throw FormatError("unsupported FSTP version " + std::to_string(version), 4);
    uint32_t count = r.u32();
    ParameterSet<T> params;
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        uint8_t tag = r.u8();
        if (tag > 1) throw FormatError("bad tag byte for " + name, r.offset() - 1);
        uint32_t rank = r.u32();
        if (rank > 8) throw FormatError("implausible rank for " + name, r.offset() - 4);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(r.u32());
        Tensor<T> t(shape);
        for (auto& v : t.data) v = static_cast<T>(r.f32());
        params.add(name, std::move(t), static_cast<ParamTag>(tag), param_name_trainable(name));
    }
    r.expect_eof("FSTP payload");
    return params;
}

}  // namespace fedstress
