#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "echoview/model.hpp"

namespace echoview {

// CRC-32 (IEEE), reflected, as used by zip/png.
inline uint32_t crc32(const uint8_t* data, size_t n, uint32_t crc = 0) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc = ~crc;
  for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return ~crc;
}

inline uint32_t crc32_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), Errc::io_missing, "cannot open " + path.string());
  uint32_t crc = 0;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), std::streamsize(buf.size()));
    crc = crc32(reinterpret_cast<const uint8_t*>(buf.data()), size_t(in.gcount()), crc);
  }
  return crc;
}

namespace detail {

constexpr char kWeightMagic[4] = {'E', 'C', 'H', 'V'};
constexpr uint8_t kWeightVersion = 1;

template <typename Out>
void put_u64le(Out& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(char((v >> (8 * i)) & 0xff));
}

template <typename Out>
void put_u32le(Out& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(char((v >> (8 * i)) & 0xff));
}

}  // namespace detail

// Layout: "ECHV" | version u8 | fingerprint u64le | float32le blobs in layer
// order | crc32 of the payload, u32le.
inline void save_weights(const ModelGraph& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(bool(out), Errc::io_error, "cannot write " + path.string());
  out.write(detail::kWeightMagic, 4);
  out.put(char(detail::kWeightVersion));
  detail::put_u64le(out, model.fingerprint());

  uint32_t crc = 0;
  for (const auto& ref : model.state()) {
    const auto& t = *ref.tensor;
    static_assert(sizeof(float) == 4);
    const auto* bytes = reinterpret_cast<const uint8_t*>(t.data());
    size_t n = size_t(t.size()) * 4;
    out.write(reinterpret_cast<const char*>(bytes), std::streamsize(n));
    crc = crc32(bytes, n, crc);
  }
  detail::put_u32le(out, crc);
  require(bool(out), Errc::io_error, "short write to " + path.string());
}

inline ModelGraph load_weights(const std::filesystem::path& path, int num_classes) {
  require(std::filesystem::exists(path), Errc::io_missing, "no such file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  require(bool(in), Errc::io_missing, "cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());

  require(bytes.size() >= 4 + 1 + 8 + 4, Errc::bad_format,
          "weight file too short: " + path.string());
  require(std::memcmp(bytes.data(), detail::kWeightMagic, 4) == 0, Errc::bad_format,
          "bad magic, not an ECHV weight file: " + path.string());
  require(bytes[4] == detail::kWeightVersion, Errc::bad_format,
          "unsupported weight format version " + std::to_string(int(bytes[4])));
  uint64_t fp = 0;
  for (int i = 0; i < 8; ++i) fp |= uint64_t(bytes[size_t(5 + i)]) << (8 * i);

  ModelGraph model = ModelGraph::build(num_classes, 0);
  require(fp == model.fingerprint(), Errc::fingerprint_mismatch,
          "weight file fingerprint does not match the " + std::to_string(num_classes) +
              "-class architecture");

  int64_t payload = 0;
  auto state = model.state();
  for (const auto& ref : state) payload += ref.tensor->size() * 4;
  require(int64_t(bytes.size()) == 13 + payload + 4, Errc::bad_format,
          "weight file truncated or padded: expected " + std::to_string(13 + payload + 4) +
              " bytes, got " + std::to_string(bytes.size()));

  const uint8_t* p = bytes.data() + 13;
  uint32_t crc = crc32(p, size_t(payload));
  uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= uint32_t(bytes[size_t(13 + payload + i)]) << (8 * i);
  require(crc == stored, Errc::checksum_mismatch, "weight payload checksum mismatch");

  for (const auto& ref : state) {
    std::memcpy(ref.tensor->data(), p, size_t(ref.tensor->size()) * 4);
    p += ref.tensor->size() * 4;
  }
  return model;
}

}  // namespace echoview
