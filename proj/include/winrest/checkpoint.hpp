// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include <zlib.h>

#include "winrest/error.hpp"
#include "winrest/nn.hpp"
#include "winrest/optim.hpp"
#include "winrest/rng.hpp"
#include "winrest/tensor.hpp"

namespace winrest {

/// FNV-1a over a byte string. Used to fingerprint configuration text so a
/// checkpoint refuses to load into a differently configured model.
inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

/// On-disk training-state container.
///
/// Layout (little-endian):
///   magic "WRCHKPT1", u32 format version,
///   role string, u64 config fingerprint, config string,
///   tensor table (name, u8 element size, u32 rank, u64 dims, raw values),
///   extras table (name, raw bytes),
///   u32 crc32 of everything before it.
/// The checksum is verified before any field is interpreted.
class Checkpoint {
public:
    struct TensorEntry {
        std::vector<std::size_t> dims;
        std::size_t elem_size = 0;
        std::vector<unsigned char> bytes;
    };

    std::string role;
    std::string config_text;

    template <typename T>
    void add_tensor(const std::string& name, const Tensor<T>& t) {
        require(!has_tensor(name), ErrorKind::checkpoint, "checkpoint: duplicate tensor ", name);
        TensorEntry e;
        e.dims = t.dims();
        e.elem_size = sizeof(T);
        e.bytes.resize(t.numel() * sizeof(T));
        std::memcpy(e.bytes.data(), t.data(), e.bytes.size());
        tensors_.emplace_back(name, std::move(e));
    }

    bool has_tensor(const std::string& name) const { return find_tensor(name) != nullptr; }

    template <typename T>
    Tensor<T> get_tensor(const std::string& name) const {
        const TensorEntry* e = find_tensor(name);
        require(e != nullptr, ErrorKind::checkpoint, "checkpoint: missing tensor ", name);
        require(e->elem_size == sizeof(T), ErrorKind::checkpoint,
                "checkpoint: tensor ", name, " stores ", e->elem_size,
                "-byte elements, requested ", sizeof(T));
        Tensor<T> t(e->dims);
        std::memcpy(t.data(), e->bytes.data(), e->bytes.size());
        return t;
    }

    void add_extra(const std::string& name, std::vector<unsigned char> bytes) {
        require(!has_extra(name), ErrorKind::checkpoint, "checkpoint: duplicate extra ", name);
        extras_.emplace_back(name, std::move(bytes));
    }

    bool has_extra(const std::string& name) const { return find_extra(name) != nullptr; }

    const std::vector<unsigned char>& get_extra(const std::string& name) const {
        const auto* e = find_extra(name);
        require(e != nullptr, ErrorKind::checkpoint, "checkpoint: missing extra ", name);
        return *e;
    }

    void add_u64(const std::string& name, std::uint64_t v) {
        std::vector<unsigned char> b(8);
        store_u64(b.data(), v);
        add_extra(name, std::move(b));
    }

    std::uint64_t get_u64(const std::string& name) const {
        const auto& b = get_extra(name);
        require(b.size() == 8, ErrorKind::checkpoint, "checkpoint: extra ", name, " is not a u64");
        return load_u64(b.data());
    }

    void add_f64(const std::string& name, double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        add_u64(name, bits);
    }

    double get_f64(const std::string& name) const {
        const std::uint64_t bits = get_u64(name);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    void add_rng(const std::string& name, const Rng& rng) {
        std::vector<unsigned char> b(32);
        const auto& s = rng.state();
        for (int i = 0; i < 4; ++i) store_u64(b.data() + 8 * i, s[i]);
        add_extra(name, std::move(b));
    }

    Rng get_rng(const std::string& name) const {
        const auto& b = get_extra(name);
        require(b.size() == 32, ErrorKind::checkpoint,
                "checkpoint: extra ", name, " is not an rng state");
        Rng::State s{};
        for (int i = 0; i < 4; ++i) s[i] = load_u64(b.data() + 8 * i);
        Rng rng(0);
        rng.set_state(s);
        return rng;
    }

    const std::vector<std::pair<std::string, TensorEntry>>& tensors() const { return tensors_; }

    std::uint64_t config_hash() const { return fnv1a64(config_text); }

    void save(const std::string& path) const {
        std::vector<unsigned char> buf;
        buf.reserve(1024);
        append_bytes(buf, kMagic, 8);
        append_u32(buf, kVersion);
        append_str(buf, role);
        append_u64(buf, config_hash());
        append_str(buf, config_text);
        append_u32(buf, static_cast<std::uint32_t>(tensors_.size()));
        for (const auto& [name, e] : tensors_) {
            append_str(buf, name);
            buf.push_back(static_cast<unsigned char>(e.elem_size));
            append_u32(buf, static_cast<std::uint32_t>(e.dims.size()));
            for (std::size_t d : e.dims) append_u64(buf, d);
            append_bytes(buf, e.bytes.data(), e.bytes.size());
        }
        append_u32(buf, static_cast<std::uint32_t>(extras_.size()));
        for (const auto& [name, bytes] : extras_) {
            append_str(buf, name);
            append_u64(buf, bytes.size());
            append_bytes(buf, bytes.data(), bytes.size());
        }
        const auto crc = static_cast<std::uint32_t>(
            ::crc32(0, buf.data(), static_cast<uInt>(buf.size())));
        append_u32(buf, crc);

        std::FILE* f = std::fopen(path.c_str(), "wb");
        require(f != nullptr, ErrorKind::io, "checkpoint: cannot open ", path, " for writing");
        const std::size_t written = std::fwrite(buf.data(), 1, buf.size(), f);
        const int rc = std::fclose(f);
        require(written == buf.size() && rc == 0, ErrorKind::io,
                "checkpoint: short write to ", path);
    }

    static Checkpoint load(const std::string& path) {
        std::FILE* f = std::fopen(path.c_str(), "rb");
        require(f != nullptr, ErrorKind::io, "checkpoint: cannot open ", path);
        std::fseek(f, 0, SEEK_END);
        const long size = std::ftell(f);
        std::fseek(f, 0, SEEK_SET);
        std::vector<unsigned char> buf(size > 0 ? static_cast<std::size_t>(size) : 0);
        const std::size_t got = std::fread(buf.data(), 1, buf.size(), f);
        std::fclose(f);
        require(got == buf.size(), ErrorKind::io, "checkpoint: short read from ", path);

        require(buf.size() >= 16, ErrorKind::checkpoint, "checkpoint: file ", path, " is truncated");
        const std::size_t body = buf.size() - 4;
        const std::uint32_t stored = load_u32(buf.data() + body);
        const auto actual = static_cast<std::uint32_t>(
            ::crc32(0, buf.data(), static_cast<uInt>(body)));
        require(stored == actual, ErrorKind::checkpoint,
                "checkpoint: checksum mismatch in ", path);

        Reader r{buf.data(), body, 0, path};
        char magic[8];
        r.read(magic, 8);
        require(std::memcmp(magic, kMagic, 8) == 0, ErrorKind::checkpoint,
                "checkpoint: bad magic in ", path);
        const std::uint32_t version = r.u32();
        require(version == kVersion, ErrorKind::checkpoint,
                "checkpoint: format version ", version, " not supported");

        Checkpoint c;
        c.role = r.str();
        const std::uint64_t stored_hash = r.u64();
        c.config_text = r.str();
        require(stored_hash == c.config_hash(), ErrorKind::checkpoint,
                "checkpoint: config fingerprint mismatch in ", path);
        const std::uint32_t ntensors = r.u32();
        for (std::uint32_t i = 0; i < ntensors; ++i) {
            std::string name = r.str();
            TensorEntry e;
            e.elem_size = r.u8();
            require(e.elem_size == 4 || e.elem_size == 8, ErrorKind::checkpoint,
                    "checkpoint: tensor ", name, " has unsupported element size ", e.elem_size);
            const std::uint32_t rank = r.u32();
            require(rank >= 1 && rank <= 4, ErrorKind::checkpoint,
                    "checkpoint: tensor ", name, " has unsupported rank ", rank);
            std::size_t numel = 1;
            for (std::uint32_t d = 0; d < rank; ++d) {
                e.dims.push_back(static_cast<std::size_t>(r.u64()));
                numel *= e.dims.back();
            }
            e.bytes.resize(numel * e.elem_size);
            r.read(e.bytes.data(), e.bytes.size());
            c.tensors_.emplace_back(std::move(name), std::move(e));
        }
        const std::uint32_t nextras = r.u32();
        for (std::uint32_t i = 0; i < nextras; ++i) {
            std::string name = r.str();
            std::vector<unsigned char> bytes(static_cast<std::size_t>(r.u64()));
            r.read(bytes.data(), bytes.size());
            c.extras_.emplace_back(std::move(name), std::move(bytes));
        }
        require(r.pos == r.len, ErrorKind::checkpoint,
                "checkpoint: trailing bytes in ", path);
        return c;
    }

private:
    static constexpr char kMagic[9] = "WRCHKPT1";
    static constexpr std::uint32_t kVersion = 1;

    struct Reader {
        const unsigned char* data;
        std::size_t len;
        std::size_t pos;
        const std::string& path;

        void read(void* out, std::size_t n) {
            require(pos + n <= len, ErrorKind::checkpoint, "checkpoint: file ", path,
                    " is truncated");
            std::memcpy(out, data + pos, n);
            pos += n;
        }
        std::uint8_t u8() {
            std::uint8_t v;
            read(&v, 1);
            return v;
        }
        std::uint32_t u32() {
            unsigned char b[4];
            read(b, 4);
            return load_u32(b);
        }
        std::uint64_t u64() {
            unsigned char b[8];
            read(b, 8);
            return load_u64(b);
        }
        std::string str() {
            const std::uint32_t n = u32();
            require(n <= (1u << 20), ErrorKind::checkpoint, "checkpoint: oversized string in ",
                    path);
            std::string s(n, '\0');
            read(s.data(), n);
            return s;
        }
    };

    static void store_u32(unsigned char* out, std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out[i] = static_cast<unsigned char>(v >> (8 * i));
    }
    static void store_u64(unsigned char* out, std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out[i] = static_cast<unsigned char>(v >> (8 * i));
    }
    static std::uint32_t load_u32(const unsigned char* p) {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
        return v;
    }
    static std::uint64_t load_u64(const unsigned char* p) {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
        return v;
    }
    static void append_bytes(std::vector<unsigned char>& buf, const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        buf.insert(buf.end(), p, p + n);
    }
    static void append_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
        unsigned char b[4];
        store_u32(b, v);
        append_bytes(buf, b, 4);
    }
    static void append_u64(std::vector<unsigned char>& buf, std::uint64_t v) {
        unsigned char b[8];
        store_u64(b, v);
        append_bytes(buf, b, 8);
    }
    static void append_str(std::vector<unsigned char>& buf, const std::string& s) {
        append_u32(buf, static_cast<std::uint32_t>(s.size()));
        append_bytes(buf, s.data(), s.size());
    }

    const TensorEntry* find_tensor(const std::string& name) const {
        for (const auto& [n, e] : tensors_) {
            if (n == name) return &e;
        }
        return nullptr;
    }
    const std::vector<unsigned char>* find_extra(const std::string& name) const {
        for (const auto& [n, b] : extras_) {
            if (n == name) return &b;
        }
        return nullptr;
    }

    std::vector<std::pair<std::string, TensorEntry>> tensors_;
    std::vector<std::pair<std::string, std::vector<unsigned char>>> extras_;
};

/// Stores every parameter tensor under its own name.
template <typename T>
void save_params(Checkpoint& c, const ParamList<T>& params) {
    for (const auto* p : params) c.add_tensor(p->name, p->value);
}

/// Restores every parameter tensor by name; shapes must match exactly.
template <typename T>
void load_params(const Checkpoint& c, const ParamList<T>& params) {
    for (auto* p : params) {
        Tensor<T> t = c.get_tensor<T>(p->name);
        require(t.dims() == p->value.dims(), ErrorKind::checkpoint,
                "checkpoint: tensor ", p->name, " has mismatched shape");
        p->value = std::move(t);
    }
}

/// Stores optimizer moments and step count alongside the parameters they track.
/// `tag` namespaces the step counter so one file can hold several optimizers.
template <typename T>
void save_optimizer(Checkpoint& c, const Adam<T>& opt, const std::string& tag = {}) {
    const auto& params = opt.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        c.add_tensor(params[i]->name + ".m1", opt.first_moments()[i]);
        c.add_tensor(params[i]->name + ".m2", opt.second_moments()[i]);
    }
    c.add_u64(tag.empty() ? "adam.steps" : tag + ".adam.steps", opt.steps_taken());
}

template <typename T>
void load_optimizer(const Checkpoint& c, Adam<T>& opt, const std::string& tag = {}) {
    const auto& params = opt.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<T> m1 = c.get_tensor<T>(params[i]->name + ".m1");
        Tensor<T> m2 = c.get_tensor<T>(params[i]->name + ".m2");
        require(m1.dims() == params[i]->value.dims() && m2.dims() == params[i]->value.dims(),
                ErrorKind::checkpoint, "checkpoint: moments for ", params[i]->name,
                " have mismatched shape");
        opt.first_moments()[i] = std::move(m1);
        opt.second_moments()[i] = std::move(m2);
    }
    opt.set_steps_taken(c.get_u64(tag.empty() ? "adam.steps" : tag + ".adam.steps"));
}

}  // namespace winrest
