#include "prnet/prnf.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <limits>
#include <vector>

namespace prnet::prnf {

namespace {

constexpr unsigned char kMagic[4] = {0x50, 0x52, 0x4E, 0x46};
constexpr std::size_t kMaxNdim = 16;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xFF));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xFF));
    out.push_back(static_cast<unsigned char>((v >> 24) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void write(const std::string& path, const Tensor& t) {
    if (!t.defined()) {
        throw Error(Error::Kind::io, "prnf: cannot write undefined tensor to " + path);
    }
    std::vector<unsigned char> bytes;
    bytes.reserve(12 + 4 * t.ndim() + 4 * static_cast<std::size_t>(t.size()));
    bytes.insert(bytes.end(), kMagic, kMagic + 4);
    put_u32(bytes, kVersion);
    put_u32(bytes, static_cast<std::uint32_t>(t.ndim()));
    for (std::int64_t e : t.shape()) {
        if (e < 0 || e > static_cast<std::int64_t>(std::numeric_limits<std::uint32_t>::max())) {
            throw Error(Error::Kind::bad_extents,
                        "prnf: extent " + std::to_string(e) + " does not fit u32");
        }
        put_u32(bytes, static_cast<std::uint32_t>(e));
    }
    const std::int64_t n = t.size();
    dispatch_dtype(t.dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        const T* p = t.data<T>();
        for (std::int64_t i = 0; i < n; ++i) {
            const float f = static_cast<float>(p[i]);
            put_u32(bytes, std::bit_cast<std::uint32_t>(f));
        }
    });

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(Error::Kind::io, "prnf: cannot open " + path + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error(Error::Kind::io, "prnf: short write to " + path);
    }
}

Tensor read(const std::string& path, DType dt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Error::Kind::io, "prnf: cannot open " + path);
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw Error(Error::Kind::io, "prnf: read failure on " + path);
    }

    if (bytes.size() < 12) {
        throw Error(Error::Kind::corrupt_payload,
                    "prnf: " + path + " truncated before header (" +
                        std::to_string(bytes.size()) + " bytes)");
    }
    for (int i = 0; i < 4; ++i) {
        if (bytes[static_cast<std::size_t>(i)] != kMagic[i]) {
            throw Error(Error::Kind::bad_magic, "prnf: " + path + " has wrong magic bytes");
        }
    }
    const std::uint32_t version = get_u32(bytes.data() + 4);
    if (version != kVersion) {
        throw Error(Error::Kind::bad_version,
                    "prnf: " + path + " has version " + std::to_string(version) + ", expected " +
                        std::to_string(kVersion));
    }
    const std::uint32_t ndim = get_u32(bytes.data() + 8);
    if (ndim == 0 || ndim > kMaxNdim) {
        throw Error(Error::Kind::bad_extents,
                    "prnf: " + path + " has implausible ndim " + std::to_string(ndim));
    }
    if (bytes.size() < 12 + 4 * static_cast<std::size_t>(ndim)) {
        throw Error(Error::Kind::corrupt_payload,
                    "prnf: " + path + " truncated inside extent list");
    }
    Shape shape(ndim);
    std::int64_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
        const std::uint32_t e = get_u32(bytes.data() + 12 + 4 * d);
        shape[d] = static_cast<std::int64_t>(e);
        if (numel > 0 && e > 0 &&
            numel > std::numeric_limits<std::int64_t>::max() / static_cast<std::int64_t>(e)) {
            throw Error(Error::Kind::bad_extents, "prnf: " + path + " extents overflow");
        }
        numel *= static_cast<std::int64_t>(e);
    }
    const std::size_t header = 12 + 4 * static_cast<std::size_t>(ndim);
    const std::size_t expect = header + 4 * static_cast<std::size_t>(numel);
    if (bytes.size() < expect) {
        throw Error(Error::Kind::corrupt_payload,
                    "prnf: " + path + " payload truncated (" + std::to_string(bytes.size()) +
                        " bytes, expected " + std::to_string(expect) + ")");
    }
    if (bytes.size() > expect) {
        throw Error(Error::Kind::corrupt_payload,
                    "prnf: " + path + " has trailing bytes past the payload");
    }

    Tensor t = Tensor::zeros(shape, dt);
    dispatch_dtype(dt, [&](auto tag) {
        using T = typename decltype(tag)::type;
        T* p = t.data<T>();
        for (std::int64_t i = 0; i < numel; ++i) {
            const std::uint32_t u = get_u32(bytes.data() + header + 4 * static_cast<std::size_t>(i));
            p[i] = static_cast<T>(std::bit_cast<float>(u));
        }
    });
    return t;
}

}  // namespace prnet::prnf
