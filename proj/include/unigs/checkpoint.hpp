#pragma once

#include <map>
#include <string>
#include <vector>

#include "unigs/tensor.hpp"

namespace unigs {

inline constexpr const char* kCkptMagic = "unigs-ckpt-v1";

// Single-file format: magic line, little-endian u64 manifest length, JSON
// manifest (tensor names, shapes, free-form meta), then fp32
// little-endian payloads in manifest order. Values are quantized to fp32
// at save time regardless of the live numeric mode.
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::string& meta_json = "{}");

struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::string meta_json;

  const Tensor& at(const std::string& name) const;
  std::vector<std::pair<std::string, Tensor>> items() const;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace unigs
