#pragma once

// Little-endian binary container helpers shared by the on-disk formats
// (EDK1 datasets, EDF1 feature files, EDC1 checkpoints). Every format is the
// same envelope: 4-byte magic, u32 header length, UTF-8 JSON header, raw
// float32 payload.

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "edk/common.hpp"

namespace edk::io {

inline void write_u32le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32le(std::istream& in, const std::string& what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError(what + " header truncated");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

// Magic + length-prefixed JSON header. `magic` must be exactly 4 chars.
inline void write_envelope(std::ostream& out, const char* magic, const nlohmann::json& header) {
  out.write(magic, 4);
  const std::string hjson = header.dump();
  write_u32le(out, std::uint32_t(hjson.size()));
  out.write(hjson.data(), std::streamsize(hjson.size()));
}

inline nlohmann::json read_envelope(std::istream& in, const char* magic, const std::string& what) {
  char got[4];
  in.read(got, 4);
  if (!in || std::memcmp(got, magic, 4) != 0)
    throw DataError("malformed " + what + " (bad magic)");
  const std::uint32_t hlen = read_u32le(in, what);
  std::string hjson(hlen, '\0');
  in.read(hjson.data(), std::streamsize(hlen));
  if (!in) throw DataError(what + " header truncated");
  try {
    return nlohmann::json::parse(hjson);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed " + what + " header JSON: " + std::string(e.what()));
  }
}

// Raw row-major float32 block I/O for Eigen matrices (our Mat<S> aliases are
// row-major, so the bytes land plane-major / frame-major on disk).
inline void write_f32_block(std::ostream& out, const MatF& m) {
  out.write(reinterpret_cast<const char*>(m.data()),
            std::streamsize(sizeof(float) * std::size_t(m.size())));
}

inline void read_f32_block(std::istream& in, MatF& m, const std::string& what) {
  in.read(reinterpret_cast<char*>(m.data()),
          std::streamsize(sizeof(float) * std::size_t(m.size())));
  if (!in) throw DataError("truncated payload in " + what);
}

// Rejects trailing bytes after a fully-consumed payload.
inline void expect_eof(std::istream& in, const std::string& what) {
  in.peek();
  if (!in.eof()) throw DataError(what + " payload longer than header declares");
}

}  // namespace edk::io
