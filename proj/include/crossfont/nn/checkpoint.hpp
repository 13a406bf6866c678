#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "crossfont/core/tensor.hpp"
#include "crossfont/nn/adam.hpp"
#include "crossfont/nn/module.hpp"

namespace crossfont {

/// Versioned checkpoint container: resolved config text, a named tensor
/// table, and (optionally) optimizer moments stored under "opt.m." /
/// "opt.v." prefixes. Loading validates the name/shape table and fails
/// loudly on any mismatch.
namespace ckpt {

constexpr char kMagic[8] = {'C', 'F', 'C', 'K', 'P', 'T', '0', '1'};

namespace detail {

inline void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    require(bool(is), "checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
    std::uint64_t n = read_u64(is);
    require(n < (1ull << 32), "checkpoint: absurd string length");
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    require(bool(is), "checkpoint: truncated string");
    return s;
}

template <typename T>
void write_tensor(std::ostream& os, const std::string& name, const Tensor<T>& t) {
    write_string(os, name);
    write_u64(os, static_cast<std::uint64_t>(t.rank()));
    for (long d : t.shape()) write_u64(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(sizeof(T) * t.size()));
}

template <typename T>
std::pair<std::string, Tensor<T>> read_tensor(std::istream& is) {
    std::string name = read_string(is);
    auto rank = read_u64(is);
    require(rank <= 8, "checkpoint: absurd tensor rank");
    std::vector<long> shape;
    for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(static_cast<long>(read_u64(is)));
    Tensor<T> t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(sizeof(T) * t.size()));
    require(bool(is), "checkpoint: truncated tensor data for " + name);
    return {name, t};
}

}  // namespace detail

template <typename T>
struct Contents {
    std::string config_text;
    std::uint64_t step = 0;
    std::map<std::string, Tensor<T>> tensors;
};

template <typename T>
void save(const std::string& path, const std::string& config_text, std::uint64_t step,
          const ParamRegistry<T>& params, const Adam<T>* opt = nullptr) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    require(bool(os), "checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 8);
    detail::write_u64(os, sizeof(T));
    detail::write_u64(os, step);
    detail::write_string(os, config_text);
    std::uint64_t count = params.size();
    if (opt) count += 2 * params.size() + 1;
    detail::write_u64(os, count);
    for (std::size_t i = 0; i < params.size(); ++i)
        detail::write_tensor<T>(os, params.names()[i], params.params()[i].value());
    if (opt) {
        for (std::size_t i = 0; i < params.size(); ++i)
            detail::write_tensor<T>(os, "opt.m." + params.names()[i], opt->moment1()[i]);
        for (std::size_t i = 0; i < params.size(); ++i)
            detail::write_tensor<T>(os, "opt.v." + params.names()[i], opt->moment2()[i]);
        detail::write_tensor<T>(os, "opt.step",
                                Tensor<T>::scalar(static_cast<T>(opt->step_count())));
    }
    require(bool(os), "checkpoint: write failed for " + path);
}

template <typename T>
Contents<T> load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(bool(is), "checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    require(bool(is) && std::memcmp(magic, kMagic, 8) == 0,
            "checkpoint: bad magic in " + path);
    auto scalar_size = detail::read_u64(is);
    require(scalar_size == sizeof(T), "checkpoint: scalar width " + std::to_string(scalar_size) +
                                          " does not match build (" +
                                          std::to_string(sizeof(T)) + ")");
    Contents<T> c;
    c.step = detail::read_u64(is);
    c.config_text = detail::read_string(is);
    auto count = detail::read_u64(is);
    for (std::uint64_t i = 0; i < count; ++i) {
        auto [name, t] = detail::read_tensor<T>(is);
        require(!c.tensors.count(name), "checkpoint: duplicate tensor " + name);
        c.tensors.emplace(std::move(name), std::move(t));
    }
    return c;
}

/// Copy tensors into an existing registry. The stored table must contain
/// exactly the registry's names with identical shapes.
template <typename T>
void restore_params(const Contents<T>& c, ParamRegistry<T>& params) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string& name = params.names()[i];
        auto it = c.tensors.find(name);
        require(it != c.tensors.end(), "checkpoint: missing tensor " + name);
        require(it->second.shape() == params.params()[i].shape(),
                "checkpoint: shape mismatch for " + name + ": stored " +
                    shape_str(it->second.shape()) + ", model wants " +
                    shape_str(params.params()[i].shape()));
        params.params()[i].value() = it->second.clone();
    }
}

template <typename T>
void restore_adam(const Contents<T>& c, const ParamRegistry<T>& params, Adam<T>& opt) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string& name = params.names()[i];
        auto m = c.tensors.find("opt.m." + name);
        auto v = c.tensors.find("opt.v." + name);
        require(m != c.tensors.end() && v != c.tensors.end(),
                "checkpoint: missing optimizer state for " + name);
        opt.moment1()[i] = m->second.clone();
        opt.moment2()[i] = v->second.clone();
    }
    auto st = c.tensors.find("opt.step");
    require(st != c.tensors.end(), "checkpoint: missing opt.step");
    opt.set_step_count(static_cast<long>(st->second[0]));
}

}  // namespace ckpt

}  // namespace crossfont
