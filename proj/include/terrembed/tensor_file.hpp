#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace terrembed {

enum class ElementType : std::uint8_t { f32, f64 };

struct NamedTensor {
    std::string name;
    std::vector<std::uint32_t> shape;
    std::vector<double> data;

    std::size_t element_count() const;
};

/// Named-tensor container shared by the weight and pipeline files:
/// magic(4) | u16 version | u32 count | per tensor: u16 name length, name
/// bytes, u8 rank, u32 dims[rank], little-endian elements (f32 or f64,
/// fixed per container).
struct TensorFileFormat {
    std::string magic;
    std::uint16_t version = 1;
    ElementType element = ElementType::f32;
};

std::vector<std::uint8_t> encode_tensors(const TensorFileFormat& format, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_tensors(const TensorFileFormat& format, const std::vector<std::uint8_t>& bytes,
                                        const std::string& context);

}  // namespace terrembed
