// Named-tensor checkpoint file: magic "DSUP", version 1, little-endian.
#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "common.hpp"
#include "tensor.hpp"

namespace swinlet {

namespace detail {

inline void write_u32(std::ostream& os, u32 v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline u32 read_u32(std::istream& is) {
    u32 v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    check(bool(is), "checkpoint: truncated file");
    return v;
}

template <typename T>
constexpr u8 dtype_code() {
    if constexpr (std::is_same_v<T, float>)
        return 1;
    else
        return 2;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::map<std::string, Tensor<T>>& tensors, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    check(bool(f), "save_checkpoint: cannot open " + path.string());
    f.write("DSUP", 4);
    detail::write_u32(f, 1);  // version
    detail::write_u32(f, u32(tensors.size()));
    for (const auto& [name, t] : tensors) {
        detail::write_u32(f, u32(name.size()));
        f.write(name.data(), std::streamsize(name.size()));
        detail::write_u32(f, u32(t.dims.size()));
        for (i64 d : t.dims) detail::write_u32(f, u32(d));
        const u8 code = detail::dtype_code<T>();
        f.write(reinterpret_cast<const char*>(&code), 1);
        f.write(reinterpret_cast<const char*>(t.data.data()), std::streamsize(t.data.size() * sizeof(T)));
    }
    check(bool(f), "save_checkpoint: short write to " + path.string());
}

template <typename T>
std::map<std::string, Tensor<T>> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    check(bool(f), "load_checkpoint: cannot open " + path.string());
    char magic[4] = {};
    f.read(magic, 4);
    check(bool(f) && std::memcmp(magic, "DSUP", 4) == 0, "load_checkpoint: bad magic in " + path.string());
    const u32 version = detail::read_u32(f);
    check(version == 1, "load_checkpoint: unsupported version " + std::to_string(version));
    const u32 count = detail::read_u32(f);
    std::map<std::string, Tensor<T>> out;
    for (u32 i = 0; i < count; ++i) {
        const u32 name_len = detail::read_u32(f);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        const u32 rank = detail::read_u32(f);
        Dims dims(rank);
        for (u32 r = 0; r < rank; ++r) dims[r] = i64(detail::read_u32(f));
        u8 code = 0;
        f.read(reinterpret_cast<char*>(&code), 1);
        check(bool(f), "load_checkpoint: truncated record in " + path.string());
        check(code == detail::dtype_code<T>(),
              "load_checkpoint: dtype mismatch for '" + name + "' in " + path.string());
        Tensor<T> t(dims);
        f.read(reinterpret_cast<char*>(t.data.data()), std::streamsize(t.data.size() * sizeof(T)));
        check(bool(f), "load_checkpoint: truncated data for '" + name + "'");
        check(!out.count(name), "load_checkpoint: duplicate tensor '" + name + "'");
        out.emplace(name, std::move(t));
    }
    return out;
}

}  // namespace swinlet
