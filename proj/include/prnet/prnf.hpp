#pragma once

#include <stdexcept>
#include <string>

#include "prnet/tensor.hpp"

// PRNF tensor files: magic "PRNF" (0x50 0x52 0x4E 0x46), u32 LE version (=1),
// u32 LE ndim, ndim x u32 LE extents, then the payload as f32 LE row-major.
// Bytes are packed explicitly, so files are identical regardless of host
// endianness.

namespace prnet::prnf {

struct Error : std::runtime_error {
    enum class Kind { io, bad_magic, bad_version, bad_extents, corrupt_payload };
    Kind kind;
    Error(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

constexpr std::uint32_t kVersion = 1;

// Payload is always f32; an f64 tensor is narrowed on write.
void write(const std::string& path, const Tensor& t);

// Reads the f32 payload into a tensor of dtype dt (widening if f64).
Tensor read(const std::string& path, DType dt = DType::f32);

}  // namespace prnet::prnf
