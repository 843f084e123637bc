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

#ifndef DPFLAT_DATASET_H_
#define DPFLAT_DATASET_H_

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "dpflat/errors.h"
#include "dpflat/rng.h"
#include "dpflat/tensor.h"

namespace dpflat {

// Gaussian-cluster sequence classification. Every class c has a mean token
// vector mu_c; each token of a class-c sample is mu_c plus isotropic noise.
struct SyntheticSpec {
  std::size_t class_count = 2;
  std::size_t members = 512;
  std::size_t non_members = 512;
  std::size_t feature_dim = 16;
  std::size_t seq_len = 8;
  double separation = 0.35;  // stddev of the class-mean entries
  double noise_scale = 1.0;  // stddev of per-token noise
  std::uint64_t seed = 1;

  void Validate() const {
    if (class_count < 2 || members == 0 || non_members == 0 ||
        feature_dim == 0 || seq_len == 0) {
      throw ConfigError("synthetic dataset sizes must be positive");
    }
    if (separation <= 0.0 || noise_scale < 0.0) {
      throw ConfigError("synthetic dataset scales out of range");
    }
  }
};

struct Record {
  Tensor features;  // {seq_len, feature_dim}
  int label = 0;
};

enum class Split { kMember, kNonMember };

struct SyntheticDataset {
  std::size_t seq_len = 0;
  std::size_t feature_dim = 0;
  std::size_t class_count = 0;
  std::vector<Record> members;
  std::vector<Record> non_members;

  friend bool operator==(const SyntheticDataset& a, const SyntheticDataset& b) {
    auto same = [](const std::vector<Record>& x, const std::vector<Record>& y) {
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i].label != y[i].label || !(x[i].features == y[i].features)) {
          return false;
        }
      }
      return true;
    };
    return a.seq_len == b.seq_len && a.feature_dim == b.feature_dim &&
           a.class_count == b.class_count && same(a.members, b.members) &&
           same(a.non_members, b.non_members);
  }
};

namespace internal {

inline std::vector<Record> DrawSplit(const SyntheticSpec& spec,
                                     const std::vector<Tensor>& means,
                                     std::size_t count, std::string_view tag) {
  std::vector<Record> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Record r;
    // Round-robin labels keep classes exactly balanced.
    r.label = static_cast<int>(i % spec.class_count);
    RngStream stream(spec.seed, {tag, 0, i});
    r.features = Tensor({spec.seq_len, spec.feature_dim});
    const Tensor& mu = means[static_cast<std::size_t>(r.label)];
    for (std::size_t t = 0; t < spec.seq_len; ++t) {
      for (std::size_t f = 0; f < spec.feature_dim; ++f) {
        r.features.at(t, f) = mu[f] + spec.noise_scale * stream.Gaussian();
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace internal

inline SyntheticDataset MakeSyntheticDataset(const SyntheticSpec& spec) {
  spec.Validate();
  std::vector<Tensor> means;
  for (std::size_t c = 0; c < spec.class_count; ++c) {
    Tensor mu = DrawGaussian(spec.seed, {"data-means", 0, c}, {spec.feature_dim});
    mu *= spec.separation;
    means.push_back(std::move(mu));
  }
  SyntheticDataset ds;
  ds.seq_len = spec.seq_len;
  ds.feature_dim = spec.feature_dim;
  ds.class_count = spec.class_count;
  ds.members = internal::DrawSplit(spec, means, spec.members, "data-member");
  ds.non_members =
      internal::DrawSplit(spec, means, spec.non_members, "data-nonmember");
  return ds;
}

// Text format: one header row, then one sample per line:
//   split,label,f_0,...,f_{seq_len*feature_dim-1}
// where split is "member" or "non_member" and features are row-major.
inline void WriteDataset(const SyntheticDataset& ds, std::ostream& os) {
  os << "split,label,features(seq_len=" << ds.seq_len
     << ";feature_dim=" << ds.feature_dim << ";class_count=" << ds.class_count
     << ")\n";
  auto emit = [&os](const char* split, const std::vector<Record>& recs) {
    char buf[32];
    for (const Record& r : recs) {
      os << split << ',' << r.label;
      for (double v : r.features.values()) {
        auto res = std::to_chars(buf, buf + sizeof(buf), v);
        os << ',' << std::string_view(buf, res.ptr);
      }
      os << '\n';
    }
  };
  emit("member", ds.members);
  emit("non_member", ds.non_members);
}

inline SyntheticDataset ReadDataset(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("dataset: missing header");
  static const std::regex kHeader(
      R"(split,label,features\(seq_len=(\d+);feature_dim=(\d+);class_count=(\d+)\))");
  std::smatch m;
  if (!std::regex_match(line, m, kHeader)) {
    throw FormatError("dataset: malformed header");
  }
  SyntheticDataset ds;
  ds.seq_len = std::stoul(m[1]);
  ds.feature_dim = std::stoul(m[2]);
  ds.class_count = std::stoul(m[3]);
  const std::size_t width = ds.seq_len * ds.feature_dim;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> cols;
    std::string_view rest(line);
    while (true) {
      const auto pos = rest.find(',');
      cols.push_back(rest.substr(0, pos));
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
    if (cols.size() != width + 2) {
      throw FormatError("dataset: wrong column count on line " +
                        std::to_string(lineno));
    }
    Record r;
    auto parse = [&](std::string_view s, auto& out) {
      auto res = std::from_chars(s.data(), s.data() + s.size(), out);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw FormatError("dataset: bad number on line " +
                          std::to_string(lineno));
      }
    };
    parse(cols[1], r.label);
    if (r.label < 0 || static_cast<std::size_t>(r.label) >= ds.class_count) {
      throw DataError("dataset: label out of range on line " +
                      std::to_string(lineno));
    }
    r.features = Tensor({ds.seq_len, ds.feature_dim});
    for (std::size_t k = 0; k < width; ++k) parse(cols[k + 2], r.features[k]);
    if (cols[0] == "member") {
      ds.members.push_back(std::move(r));
    } else if (cols[0] == "non_member") {
      ds.non_members.push_back(std::move(r));
    } else {
      throw FormatError("dataset: unknown split on line " +
                        std::to_string(lineno));
    }
  }
  return ds;
}

inline void SaveDataset(const SyntheticDataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  WriteDataset(ds, os);
}

inline SyntheticDataset LoadDataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  return ReadDataset(is);
}

}  // namespace dpflat

#endif  // DPFLAT_DATASET_H_
