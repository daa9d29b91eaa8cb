#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "axir/tensor.hpp"

namespace axir {

/// Named-tensor archive.
///
/// On-disk layout (all integers little-endian):
///
///   "AXIR"            4 bytes magic
///   version           u32, currently 1
///   header_length     u64, byte length of the JSON header that follows
///   header            UTF-8 JSON: name -> {dtype:"f32", shape:[...],
///                     byte_offset, byte_length}
///   payload           raw little-endian f32 data
///
/// Offsets are relative to the payload start and are multiples of 64. The
/// writer pads the header with spaces so the payload itself also starts on
/// a 64-byte file boundary; readers must not rely on that.
class WeightContainer {
 public:
  static constexpr char kMagic[4] = {'A', 'X', 'I', 'R'};
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::size_t kAlignment = 64;

  void insert(const std::string& name, Tensor tensor);
  bool contains(const std::string& name) const { return tensors_.contains(name); }

  /// Throws MissingTensorError when absent.
  const Tensor& get(const std::string& name) const;

  const std::map<std::string, Tensor>& tensors() const { return tensors_; }
  std::vector<std::string> names() const;

  std::vector<char> serialize() const;
  static WeightContainer deserialize(const std::vector<char>& bytes);

  void save(const std::filesystem::path& path) const;
  static WeightContainer load(const std::filesystem::path& path);

 private:
  std::map<std::string, Tensor> tensors_;
};

}  // namespace axir
