#pragma once

// Checkpoint container: 8-byte magic, little-endian u64 header length, a JSON
// header, then every array as contiguous little-endian IEEE-754 float32 in
// column-major order.  The header lists {name, shape, offset} per array, with
// offsets in bytes from the start of the data section.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sketchlattice/error.hpp"

namespace sketchlattice {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

/// A named view on one array of a parameter set.
template <typename S>
struct ArrayRef {
  std::string name;
  Mat<S>* value;
  bool trainable;
};

/// Flattens anything with a `visit(f)` member into a list of named arrays.
template <typename S, typename Params>
std::vector<ArrayRef<S>> collect_arrays(Params& p) {
  std::vector<ArrayRef<S>> out;
  p.visit([&](const std::string& name, Mat<S>& m, bool trainable) {
    out.push_back({name, &m, trainable});
  });
  return out;
}

inline constexpr char kCheckpointMagic[8] = {'S', 'K', 'L', 'T', 'C', 'K', 'P', '1'};

struct CheckpointData {
  nlohmann::json header;
  std::map<std::string, Mat<float>> arrays;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

}  // namespace detail

/// Serializes `arrays` (converted to float32) under `header`; the "arrays"
/// key of the header is filled in here.
template <typename S>
std::string encode_checkpoint(nlohmann::json header,
                              const std::vector<std::pair<std::string, const Mat<S>*>>& arrays) {
  std::string blob;
  nlohmann::json index = nlohmann::json::array();
  for (const auto& [name, m] : arrays) {
    index.push_back({{"name", name}, {"shape", {m->rows(), m->cols()}}, {"offset", blob.size()}});
    for (Eigen::Index i = 0; i < m->size(); ++i)
      detail::put_u32(blob, std::bit_cast<std::uint32_t>(static_cast<float>(m->data()[i])));
  }
  header["arrays"] = index;
  const std::string text = header.dump();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint64_t len = text.size();
  detail::put_u32(out, static_cast<std::uint32_t>(len & 0xffffffffu));
  detail::put_u32(out, static_cast<std::uint32_t>(len >> 32));
  out += text;
  out += blob;
  return out;
}

inline CheckpointData decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    fail(ErrorCode::CheckpointFormat, "not a checkpoint file");
  const std::uint64_t len = detail::get_u32(bytes.data() + 8) |
                            (static_cast<std::uint64_t>(detail::get_u32(bytes.data() + 12)) << 32);
  if (bytes.size() < 16 + len) fail(ErrorCode::CheckpointFormat, "truncated checkpoint header");
  CheckpointData out;
  try {
    out.header = nlohmann::json::parse(bytes.substr(16, len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CheckpointFormat, std::string("bad checkpoint header: ") + e.what());
  }
  const std::size_t base = 16 + len;
  try {
    for (const auto& entry : out.header.at("arrays")) {
      const auto name = entry.at("name").get<std::string>();
      const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
      const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
      const auto offset = entry.at("offset").get<std::size_t>();
      if (rows < 0 || cols < 0) fail(ErrorCode::CheckpointFormat, "array " + name + " has a negative shape");
      const std::size_t count = static_cast<std::size_t>(rows * cols);
      if (offset > bytes.size() || 4 * count > bytes.size() || base + offset + 4 * count > bytes.size())
        fail(ErrorCode::CheckpointFormat, "array " + name + " runs past end of file");
      Mat<float> m(rows, cols);
      for (std::size_t i = 0; i < count; ++i)
        m.data()[i] = std::bit_cast<float>(detail::get_u32(bytes.data() + base + offset + 4 * i));
      out.arrays.emplace(name, std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CheckpointFormat, std::string("bad checkpoint array table: ") + e.what());
  }
  return out;
}

inline void write_file_or_fail(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) fail(ErrorCode::CheckpointWriteFailure, "cannot write " + path);
}

inline std::string read_file_or_fail(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Copies arrays from a checkpoint into a parameter set; every array of the
/// set must be present with a matching shape.
template <typename S, typename Params>
void load_arrays(Params& p, const CheckpointData& ckpt, const std::string& prefix = "") {
  for (auto& ref : collect_arrays<S>(p)) {
    const auto it = ckpt.arrays.find(prefix + ref.name);
    if (it == ckpt.arrays.end())
      fail(ErrorCode::CheckpointFormat, "checkpoint lacks array " + prefix + ref.name);
    if (it->second.rows() != ref.value->rows() || it->second.cols() != ref.value->cols())
      fail(ErrorCode::CheckpointFormat, "shape mismatch for " + prefix + ref.name);
    *ref.value = it->second.template cast<S>();
  }
}

}  // namespace sketchlattice
