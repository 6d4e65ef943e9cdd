#pragma once

// Binary tensor-table file used for checkpoints and extractor weights.
//
// Layout (all integers little-endian):
//   "DOCBINCK"                  8-byte magic
//   u32 version                 currently 1
//   u64 meta_len, meta bytes    compact JSON, keys sorted
//   u64 tensor_count
//   per tensor:
//     u32 name_len, name bytes
//     u32 ndim, i64 dims[ndim]
//     f32 values[prod(dims)]    IEEE-754 little-endian
//
// Serialization is deterministic: identical contents give identical bytes.

#include "docbin/tensor.hpp"

#include "json.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace docbin {

inline constexpr char kCheckpointMagic[8] = {'D', 'O', 'C', 'B', 'I', 'N', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TensorFile {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<NamedTensor> tensors;

    std::optional<Tensor> find(const std::string& name) const;
    void add(std::string name, const Tensor& t);
};

std::string serialize_tensor_file(const TensorFile& file);
TensorFile parse_tensor_file(const std::string& bytes);

void write_tensor_file(const std::string& path, const TensorFile& file);
TensorFile read_tensor_file(const std::string& path);

}  // namespace docbin
