// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container:
//   magic "ATSR" | version u32 | config: u64 byte length + UTF-8 text |
//   table: u64 count, per tensor { u32 name_len, name, u32 rank,
//   u32 dims[rank], u32 dtype (0 = f32), u64 byte offset } |
//   u64 data byte length | raw little-endian f32 tensor data.
// Offsets are relative to the start of the data section.
#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "anytsr/core/errors.hpp"
#include "anytsr/core/tensor.hpp"

namespace anytsr {

constexpr uint32_t kCheckpointVersion = 1;
constexpr uint32_t kDtypeF32 = 0;

struct CheckpointData {
  uint32_t version = kCheckpointVersion;
  std::string config_text;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

namespace detail {

template <typename U>
void put(std::vector<uint8_t>& buf, U v) {
  const size_t off = buf.size();
  buf.resize(off + sizeof(U));
  std::memcpy(buf.data() + off, &v, sizeof(U));
}

template <typename U>
U take(const std::vector<uint8_t>& buf, size_t& off) {
  if (off + sizeof(U) > buf.size()) throw CheckpointError("truncated checkpoint");
  U v;
  std::memcpy(&v, buf.data() + off, sizeof(U));
  off += sizeof(U);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const CheckpointData& ckpt) {
  std::vector<uint8_t> head;
  head.push_back('A');
  head.push_back('T');
  head.push_back('S');
  head.push_back('R');
  detail::put<uint32_t>(head, ckpt.version);
  detail::put<uint64_t>(head, ckpt.config_text.size());
  for (char ch : ckpt.config_text) head.push_back(static_cast<uint8_t>(ch));

  std::vector<uint8_t> data;
  detail::put<uint64_t>(head, ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    detail::put<uint32_t>(head, static_cast<uint32_t>(name.size()));
    for (char ch : name) head.push_back(static_cast<uint8_t>(ch));
    detail::put<uint32_t>(head, static_cast<uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i)
      detail::put<uint32_t>(head, static_cast<uint32_t>(t.dim(i)));
    detail::put<uint32_t>(head, kDtypeF32);
    detail::put<uint64_t>(head, data.size());
    const size_t off = data.size();
    data.resize(off + static_cast<size_t>(t.numel()) * 4);
    std::memcpy(data.data() + off, t.data(), static_cast<size_t>(t.numel()) * 4);
  }
  detail::put<uint64_t>(head, data.size());

  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw CheckpointError("cannot write checkpoint: " + path);
  const bool ok = std::fwrite(head.data(), 1, head.size(), f) == head.size() &&
                  (data.empty() || std::fwrite(data.data(), 1, data.size(), f) == data.size());
  std::fclose(f);
  if (!ok) throw CheckpointError("short write on checkpoint: " + path);
}

inline CheckpointData load_checkpoint(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw CheckpointError("cannot open checkpoint: " + path);
  std::fseek(f, 0, SEEK_END);
  const long size = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<uint8_t> buf(static_cast<size_t>(size));
  const bool ok = std::fread(buf.data(), 1, buf.size(), f) == buf.size();
  std::fclose(f);
  if (!ok) throw CheckpointError("short read on checkpoint: " + path);

  size_t off = 0;
  if (buf.size() < 4 || buf[0] != 'A' || buf[1] != 'T' || buf[2] != 'S' || buf[3] != 'R')
    throw CheckpointError("bad checkpoint magic (expected ATSR): " + path);
  off = 4;
  CheckpointData ckpt;
  ckpt.version = detail::take<uint32_t>(buf, off);
  if (ckpt.version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " +
                          std::to_string(ckpt.version) + ": " + path);
  const uint64_t cfg_len = detail::take<uint64_t>(buf, off);
  if (off + cfg_len > buf.size()) throw CheckpointError("truncated checkpoint config");
  ckpt.config_text.assign(reinterpret_cast<const char*>(buf.data() + off),
                          static_cast<size_t>(cfg_len));
  off += cfg_len;

  const uint64_t count = detail::take<uint64_t>(buf, off);
  struct Entry {
    std::string name;
    std::vector<int64_t> shape;
    uint64_t offset;
  };
  std::vector<Entry> entries;
  for (uint64_t i = 0; i < count; ++i) {
    Entry e;
    const uint32_t nlen = detail::take<uint32_t>(buf, off);
    if (off + nlen > buf.size()) throw CheckpointError("truncated tensor name");
    e.name.assign(reinterpret_cast<const char*>(buf.data() + off), nlen);
    off += nlen;
    const uint32_t rank = detail::take<uint32_t>(buf, off);
    if (rank > 8) throw CheckpointError("implausible tensor rank in checkpoint");
    for (uint32_t r = 0; r < rank; ++r)
      e.shape.push_back(detail::take<uint32_t>(buf, off));
    const uint32_t dtype = detail::take<uint32_t>(buf, off);
    if (dtype != kDtypeF32)
      throw CheckpointError("unsupported dtype code " + std::to_string(dtype));
    e.offset = detail::take<uint64_t>(buf, off);
    entries.push_back(std::move(e));
  }
  const uint64_t data_len = detail::take<uint64_t>(buf, off);
  if (off + data_len > buf.size()) throw CheckpointError("truncated checkpoint data");
  for (auto& e : entries) {
    Tensor<float> t(e.shape);
    if (e.offset + static_cast<uint64_t>(t.numel()) * 4 > data_len)
      throw CheckpointError("tensor data out of range: " + e.name);
    std::memcpy(t.data(), buf.data() + off + e.offset,
                static_cast<size_t>(t.numel()) * 4);
    ckpt.tensors.emplace_back(e.name, std::move(t));
  }
  return ckpt;
}

}  // namespace anytsr
