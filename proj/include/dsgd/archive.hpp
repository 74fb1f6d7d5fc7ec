#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsgd/tensor.hpp"

namespace dsgd {

/// Named float32 arrays plus free-form JSON metadata. On disk: the 8-byte
/// magic "DSGDARC1", a little-endian u64 header length, a JSON header
/// {"meta", "tensors": [{"name", "shape", "offset"}]}, then raw float32 data.
struct Archive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path, const Archive& archive);
/// Throws Error on a missing file, wrong magic or truncated payload.
Archive read_archive(const std::filesystem::path& path);

}  // namespace dsgd
