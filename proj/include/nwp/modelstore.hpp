#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nwp/corpus.hpp"
#include "nwp/model.hpp"

namespace nwp {

// NWPM model file, little-endian throughout:
//   magic "NWPM", u32 version
//   header: u32 parameterization, u32 d, u32 k, u32 r' (0 = absent),
//           u32 |V|, u32 dtype (0 = f32, 1 = f16)
//   vocabulary: u32 count, then per word u32 byte length + UTF-8 bytes,
//               in id order
//   tensors: u32 count, then per tensor u32 name length + bytes, u32 dtype,
//            u32 ndims, u32 dims[ndims], row-major payload (4 or 2 bytes per
//            element; f16 payloads hold IEEE binary16 bit patterns)
// load(save(m)) restores bit-identical tensors; f16 models decode to 32-bit
// values on load and keep the f16 dtype tag.
inline constexpr uint32_t kModelFormatVersion = 1;

// Writes the model, returns the file's byte count.
uint64_t save_model(const LmParams<float>& params, const Vocabulary& vocab,
                    const std::string& path);

std::pair<LmParams<float>, Vocabulary> load_model(const std::string& path);

// Byte accounting of the serialized form without writing it. total_bytes
// equals the exact file size save_model produces.
struct TensorLayout {
    std::string name;
    int64_t params = 0;
    int64_t payload_bytes = 0;
};
struct FileLayout {
    std::vector<TensorLayout> tensors;
    int64_t overhead_bytes = 0; // magic, header, vocabulary, tensor metadata
    int64_t total_bytes = 0;
};
FileLayout file_layout(const LmParams<float>& params, const Vocabulary& vocab);

} // namespace nwp
