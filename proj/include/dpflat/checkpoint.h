// Copyright 2026 The dpflat Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DPFLAT_CHECKPOINT_H_
#define DPFLAT_CHECKPOINT_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dpflat/errors.h"
#include "dpflat/objective.h"
#include "dpflat/tensor.h"

namespace dpflat {

// Binary container, all integers and floats little-endian:
//
//   magic    8 bytes  "DPFLATCK"
//   version  u32      kCheckpointVersion
//   seed     u64      root seed
//   digest   u64      config digest
//   epoch    u64      completed epochs
//   step     u64      completed optimizer steps
//   n_mask   u32, then n_mask bytes (0/1): active mask
//   n_rec    u32, then n_rec records of
//              name_len u32, name bytes, rank u32, rank x u64 dims,
//              prod(dims) x f64 (IEEE-754 bit pattern)
struct Checkpoint {
  static constexpr char kMagic[8] = {'D', 'P', 'F', 'L', 'A', 'T', 'C', 'K'};
  static constexpr std::uint32_t kVersion = 1;

  struct Record {
    std::string name;
    Tensor tensor;
  };

  std::uint64_t root_seed = 0;
  std::uint64_t config_digest = 0;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  std::vector<bool> active_mask;
  std::vector<Record> records;

  void Put(std::string name, Tensor t) {
    records.push_back({std::move(name), std::move(t)});
  }

  const Tensor* Find(const std::string& name) const {
    for (const Record& r : records) {
      if (r.name == name) return &r.tensor;
    }
    return nullptr;
  }

  const Tensor& Get(const std::string& name) const {
    const Tensor* t = Find(name);
    if (t == nullptr) throw FormatError("checkpoint has no record '" + name + "'");
    return *t;
  }

  // Stores a layered tensor list as "<prefix>.<index>" records; empty slots
  // are stored with shape {0}.
  void PutLayers(const std::string& prefix, const std::vector<Tensor>& layers) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Put(prefix + "." + std::to_string(l), layers[l]);
    }
  }

  bool HasLayers(const std::string& prefix) const {
    return Find(prefix + ".0") != nullptr;
  }

  std::vector<Tensor> GetLayers(const std::string& prefix, std::size_t n) const {
    std::vector<Tensor> out;
    for (std::size_t l = 0; l < n; ++l) out.push_back(Get(prefix + "." + std::to_string(l)));
    return out;
  }

  PrefixParamSet Params(const std::string& prefix) const {
    PrefixParamSet w;
    w.layers = GetLayers(prefix, active_mask.size());
    w.active = active_mask;
    return w;
  }
};

namespace internal {

inline void PutU32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void PutU64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t GetU(std::istream& is, int bytes) {
  unsigned char b[8] = {};
  if (!is.read(reinterpret_cast<char*>(b), bytes)) {
    throw FormatError("checkpoint truncated");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace internal

inline void WriteCheckpoint(const Checkpoint& ck, std::ostream& os) {
  using internal::PutU32;
  using internal::PutU64;
  os.write(Checkpoint::kMagic, sizeof(Checkpoint::kMagic));
  PutU32(os, Checkpoint::kVersion);
  PutU64(os, ck.root_seed);
  PutU64(os, ck.config_digest);
  PutU64(os, ck.epoch);
  PutU64(os, ck.step);
  PutU32(os, static_cast<std::uint32_t>(ck.active_mask.size()));
  for (bool a : ck.active_mask) os.put(a ? 1 : 0);
  PutU32(os, static_cast<std::uint32_t>(ck.records.size()));
  for (const auto& r : ck.records) {
    PutU32(os, static_cast<std::uint32_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    const auto& shape = r.tensor.shape();
    PutU32(os, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) PutU64(os, d);
    for (double v : r.tensor.values()) PutU64(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw FormatError("checkpoint write failed");
}

inline Checkpoint ReadCheckpoint(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, Checkpoint::kMagic, 8) != 0) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  const auto version = internal::GetU(is, 4);
  if (version != Checkpoint::kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.root_seed = internal::GetU(is, 8);
  ck.config_digest = internal::GetU(is, 8);
  ck.epoch = internal::GetU(is, 8);
  ck.step = internal::GetU(is, 8);
  const auto n_mask = internal::GetU(is, 4);
  for (std::uint64_t i = 0; i < n_mask; ++i) {
    const int c = is.get();
    if (c != 0 && c != 1) throw FormatError("checkpoint: bad mask byte");
    ck.active_mask.push_back(c == 1);
  }
  const auto n_rec = internal::GetU(is, 4);
  for (std::uint64_t r = 0; r < n_rec; ++r) {
    const auto name_len = internal::GetU(is, 4);
    if (name_len > 4096) throw FormatError("checkpoint: record name too long");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(name_len))) {
      throw FormatError("checkpoint truncated");
    }
    const auto rank = internal::GetU(is, 4);
    if (rank > 8) throw FormatError("checkpoint: rank too large");
    std::vector<std::size_t> shape;
    for (std::uint64_t d = 0; d < rank; ++d) shape.push_back(internal::GetU(is, 8));
    const std::size_t count = Tensor::Count(shape);
    if (count > (std::size_t{1} << 28)) throw FormatError("checkpoint: tensor too large");
    std::vector<double> data(count);
    for (double& v : data) v = std::bit_cast<double>(internal::GetU(is, 8));
    ck.Put(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return ck;
}

inline void SaveCheckpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  WriteCheckpoint(ck, os);
}

inline Checkpoint LoadCheckpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path);
  return ReadCheckpoint(is);
}

}  // namespace dpflat

#endif  // DPFLAT_CHECKPOINT_H_
