#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowdet/common.hpp"

namespace flowdet::io {

inline constexpr char kCheckpointMagic[4] = {'F', 'D', 'C', 'P'};
inline constexpr int kCheckpointVersion = 1;

// Single-file container: 4-byte magic, u32 LE header length, JSON header,
// then little-endian f64 payload in header-declared order.

inline void write_checkpoint(const std::filesystem::path& path, nlohmann::json header,
                             const std::vector<double>& payload) {
  header["version"] = kCheckpointVersion;
  const std::string htext = header.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(cat("cannot write ", path.string()));
  f.write(kCheckpointMagic, 4);
  const std::uint32_t len = static_cast<std::uint32_t>(htext.size());
  unsigned char lenb[4] = {static_cast<unsigned char>(len & 0xff),
                           static_cast<unsigned char>((len >> 8) & 0xff),
                           static_cast<unsigned char>((len >> 16) & 0xff),
                           static_cast<unsigned char>((len >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(lenb), 4);
  f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  if constexpr (std::endian::native == std::endian::little) {
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(double)));
  } else {
    for (double d : payload) {
      auto u = std::bit_cast<std::uint64_t>(d);
      unsigned char b[8];
      for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
      f.write(reinterpret_cast<const char*>(b), 8);
    }
  }
  if (!f) throw IoError(cat("failed writing ", path.string()));
}

struct Checkpoint {
  nlohmann::json header;
  std::vector<double> payload;
};

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(cat("cannot read ", path.string()));
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw ParseError(cat(path.string(), " is not a checkpoint file"));
  }
  unsigned char lenb[4];
  f.read(reinterpret_cast<char*>(lenb), 4);
  if (!f) throw ParseError(cat("truncated checkpoint header in ", path.string()));
  const std::uint32_t len = static_cast<std::uint32_t>(lenb[0]) |
                            (static_cast<std::uint32_t>(lenb[1]) << 8) |
                            (static_cast<std::uint32_t>(lenb[2]) << 16) |
                            (static_cast<std::uint32_t>(lenb[3]) << 24);
  std::string htext(len, '\0');
  f.read(htext.data(), len);
  if (!f) throw ParseError(cat("truncated checkpoint header in ", path.string()));
  Checkpoint ck;
  ck.header = nlohmann::json::parse(htext, nullptr, false);
  if (ck.header.is_discarded()) throw ParseError(cat("bad checkpoint header in ", path.string()));
  if (ck.header.value("version", -1) != kCheckpointVersion) {
    throw ParseError(cat("unsupported checkpoint version in ", path.string()));
  }
  std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (raw.size() % sizeof(double) != 0) {
    throw ParseError(cat("checkpoint payload truncated in ", path.string()));
  }
  ck.payload.resize(raw.size() / sizeof(double));
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(ck.payload.data(), raw.data(), raw.size());
  } else {
    for (std::size_t i = 0; i < ck.payload.size(); ++i) {
      std::uint64_t u = 0;
      for (int b = 7; b >= 0; --b) {
        u = (u << 8) | static_cast<unsigned char>(raw[i * 8 + static_cast<std::size_t>(b)]);
      }
      ck.payload[i] = std::bit_cast<double>(u);
    }
  }
  return ck;
}

}  // namespace flowdet::io
