#include "axir/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "axir/error.hpp"

namespace axir {

static_assert(std::endian::native == std::endian::little,
              "AXIR payloads are little-endian; big-endian hosts need byte swapping");

namespace {

std::size_t align_up(std::size_t n, std::size_t a) { return (n + a - 1) / a * a; }

template <typename T>
void put(std::vector<char>& out, T value) {
  const auto* p = reinterpret_cast<const char*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(const std::vector<char>& in, std::size_t offset) {
  T value;
  std::memcpy(&value, in.data() + offset, sizeof(T));
  return value;
}

}  // namespace

void WeightContainer::insert(const std::string& name, Tensor tensor) {
  tensors_.insert_or_assign(name, std::move(tensor));
}

const Tensor& WeightContainer::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw MissingTensorError(name);
  return it->second;
}

std::vector<std::string> WeightContainer::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& [name, _] : tensors_) out.push_back(name);
  return out;
}

std::vector<char> WeightContainer::serialize() const {
  nlohmann::json header = nlohmann::json::object();
  std::size_t offset = 0;
  for (const auto& [name, t] : tensors_) {
    const std::size_t length = t.size() * sizeof(float);
    header[name] = {{"dtype", "f32"},
                    {"shape", t.shape()},
                    {"byte_offset", offset},
                    {"byte_length", length}};
    offset = align_up(offset + length, kAlignment);
  }
  std::string text = header.dump();
  constexpr std::size_t kPrefix = 4 + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  text.resize(align_up(kPrefix + text.size(), kAlignment) - kPrefix, ' ');

  std::vector<char> out;
  out.reserve(kPrefix + text.size() + offset);
  out.insert(out.end(), kMagic, kMagic + 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  const std::size_t payload_start = out.size();
  for (const auto& [name, t] : tensors_) {
    const std::size_t at = payload_start + header[name]["byte_offset"].get<std::size_t>();
    out.resize(at, '\0');
    const auto* p = reinterpret_cast<const char*>(t.data().data());
    out.insert(out.end(), p, p + t.size() * sizeof(float));
  }
  out.resize(payload_start + offset, '\0');
  return out;
}

WeightContainer WeightContainer::deserialize(const std::vector<char>& bytes) {
  constexpr std::size_t kPrefix = 4 + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < kPrefix || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("bad magic: not an AXIR container");
  }
  const auto version = take<std::uint32_t>(bytes, 4);
  if (version != kVersion) {
    throw FormatError("unsupported AXIR version " + std::to_string(version));
  }
  const auto header_length = take<std::uint64_t>(bytes, 8);
  if (header_length > bytes.size() - kPrefix) {
    throw FormatError("AXIR header length " + std::to_string(header_length) +
                      " exceeds file size");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kPrefix,
                                   bytes.begin() + kPrefix + header_length);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("AXIR header is not valid JSON: ") + e.what());
  }
  if (!header.is_object()) throw FormatError("AXIR header must be a JSON object");

  const std::size_t payload_start = kPrefix + header_length;
  const std::size_t payload_size = bytes.size() - payload_start;
  WeightContainer out;
  for (const auto& [name, entry] : header.items()) {
    try {
      if (entry.at("dtype").get<std::string>() != "f32") {
        throw FormatError("tensor " + name + ": unsupported dtype " +
                          entry.at("dtype").dump());
      }
      Shape shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("byte_offset").get<std::size_t>();
      const auto length = entry.at("byte_length").get<std::size_t>();
      std::size_t count = 1;
      for (auto d : shape) count *= d;
      if (length != count * sizeof(float)) {
        throw FormatError("tensor " + name + ": byte_length " + std::to_string(length) +
                          " does not match shape " + shape_str(shape));
      }
      if (offset % kAlignment != 0) {
        throw FormatError("tensor " + name + ": byte_offset " + std::to_string(offset) +
                          " is not 64-byte aligned");
      }
      if (offset > payload_size || length > payload_size - offset) {
        throw FormatError("tensor " + name + ": payload out of bounds");
      }
      std::vector<float> data(count);
      std::memcpy(data.data(), bytes.data() + payload_start + offset, length);
      out.insert(name, Tensor(std::move(shape), std::move(data)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("tensor " + name + ": malformed header entry: " + e.what());
    }
  }
  return out;
}

void WeightContainer::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

WeightContainer WeightContainer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open weights: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace axir
