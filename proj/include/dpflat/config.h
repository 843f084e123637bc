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

#ifndef DPFLAT_CONFIG_H_
#define DPFLAT_CONFIG_H_

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dpflat/dataset.h"
#include "dpflat/dp.h"
#include "dpflat/errors.h"
#include "dpflat/flatness.h"
#include "dpflat/model.h"
#include "dpflat/rng.h"
#include "dpflat/zeroth_order.h"

namespace dpflat {

enum class Mode { kWhiteBox, kBlackBox };

// Everything one experiment needs. Dataset and model seeds are derived from
// the root seed so that runs sharing a root seed share data and
// initialization.
struct ExperimentConfig {
  Mode mode = Mode::kWhiteBox;
  std::uint64_t seed = 7;

  // Flattening aspects.
  bool within_layer = true;
  bool cross_layer = true;
  bool cross_model = true;
  double lambda = 0.01;
  double gamma = 0.01;

  // Schedule.
  double lr = 0.0025;
  std::size_t warmup_epochs = 2;   // E
  std::size_t epochs_dp = 20;      // T_dp
  std::size_t epochs_nor = 10;     // T_nor
  std::size_t elimination_rounds = 2;  // R
  std::size_t keep_layers = 1;     // stop eliminating at this many layers
  std::size_t batch_size = 128;

  // Privacy. delta <= 0 means 1 / (2 |members|); sigma < 0 means calibrate.
  double epsilon = 3.0;
  double delta = 0.0;
  double clip_norm = 1.0;
  double sigma = -1.0;

  // Black-box.
  double zo_fd_scale = 1e-3;
  double zo_clip = 1.0;
  double zo_lr = 0.03;

  // Evaluation.
  std::size_t eta_points = kDefaultEtaPoints;
  std::size_t sharpness_subset = 0;  // 0: the full member split
  double mia_fraction = 0.01;

  ModelSpec model;
  SyntheticSpec data;

  double SamplingRate() const {
    return static_cast<double>(batch_size) / static_cast<double>(data.members);
  }

  double Delta() const {
    return delta > 0.0 ? delta : 1.0 / (2.0 * static_cast<double>(data.members));
  }

  std::size_t StepsPerEpoch() const { return dpflat::StepsPerEpoch(SamplingRate()); }

  bool NonPrivate() const { return std::isinf(epsilon); }

  // Model and dataset specs with seeds derived from the root seed and the
  // model dimensions tied to the data.
  ModelSpec ResolvedModel() const {
    ModelSpec m = model;
    m.feature_dim = data.feature_dim;
    m.seq_len = data.seq_len;
    m.class_count = data.class_count;
    m.seed = RngStream::Derive(seed, {"model", 0, 0});
    return m;
  }

  SyntheticSpec ResolvedData() const {
    SyntheticSpec d = data;
    d.seed = RngStream::Derive(seed, {"dataset", 0, 0});
    return d;
  }

  void Validate() const {
    if (warmup_epochs > epochs_dp) {
      throw ConfigError("warm-up epochs E must not exceed T_dp");
    }
    if (mode == Mode::kBlackBox && (within_layer || cross_layer)) {
      throw ConfigError("black-box mode supports only cross-model flattening");
    }
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
    if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
    if (batch_size == 0 || batch_size > data.members) {
      throw ConfigError("batch size must be in [1, members]");
    }
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0 or inf");
    if (!(clip_norm > 0.0)) throw ConfigError("clip norm must be > 0");
    if (eta_points < 2) throw ConfigError("eta_points must be >= 2");
    if (!(mia_fraction > 0.0 && mia_fraction <= 1.0)) {
      throw ConfigError("mia fraction must be in (0,1]");
    }
    data.Validate();
    ResolvedModel().Validate();
  }
};

namespace internal {

inline std::string FormatDouble(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double ParseDouble(const std::string& key, std::string_view s) {
  if (s == "inf" || s == "infinity") return kInfinity;
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("bad number for " + key + ": '" + std::string(s) + "'");
  }
  return v;
}

template <class Int>
Int ParseInt(const std::string& key, std::string_view s) {
  Int v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("bad integer for " + key + ": '" + std::string(s) + "'");
  }
  return v;
}

inline bool ParseBool(const std::string& key, std::string_view s) {
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  throw ConfigError("bad boolean for " + key + ": '" + std::string(s) + "'");
}

inline std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

// One binding per "section.key".
struct Binding {
  std::function<void(ExperimentConfig&, const std::string&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class T>
Binding Bind(T ExperimentConfig::*field) {
  return {[field](ExperimentConfig& c, const std::string& key, std::string_view v) {
            if constexpr (std::is_same_v<T, bool>) {
              c.*field = ParseBool(key, v);
            } else if constexpr (std::is_floating_point_v<T>) {
              c.*field = ParseDouble(key, v);
            } else {
              c.*field = ParseInt<T>(key, v);
            }
          },
          [field](const ExperimentConfig& c) {
            if constexpr (std::is_same_v<T, bool>) {
              return std::string(c.*field ? "true" : "false");
            } else if constexpr (std::is_floating_point_v<T>) {
              return FormatDouble(c.*field);
            } else {
              return std::to_string(c.*field);
            }
          }};
}

template <class S, class T>
Binding BindNested(S ExperimentConfig::*outer, T S::*field) {
  return {[outer, field](ExperimentConfig& c, const std::string& key,
                         std::string_view v) {
            if constexpr (std::is_floating_point_v<T>) {
              (c.*outer).*field = ParseDouble(key, v);
            } else {
              (c.*outer).*field = ParseInt<T>(key, v);
            }
          },
          [outer, field](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return FormatDouble((c.*outer).*field);
            } else {
              return std::to_string((c.*outer).*field);
            }
          }};
}

// Ordered so that serialization groups keys by section.
inline const std::vector<std::pair<std::string, Binding>>& Bindings() {
  using C = ExperimentConfig;
  static const auto* table = new std::vector<std::pair<std::string, Binding>>{
      {"experiment.mode",
       {[](C& c, const std::string& key, std::string_view v) {
          if (v == "white-box") {
            c.mode = Mode::kWhiteBox;
          } else if (v == "black-box") {
            c.mode = Mode::kBlackBox;
          } else {
            throw ConfigError("bad value for " + key + ": '" + std::string(v) + "'");
          }
        },
        [](const C& c) {
          return std::string(c.mode == Mode::kWhiteBox ? "white-box" : "black-box");
        }}},
      {"experiment.seed", Bind(&C::seed)},
      {"flatten.within_layer", Bind(&C::within_layer)},
      {"flatten.cross_layer", Bind(&C::cross_layer)},
      {"flatten.cross_model", Bind(&C::cross_model)},
      {"flatten.lambda", Bind(&C::lambda)},
      {"flatten.gamma", Bind(&C::gamma)},
      {"flatten.elimination_rounds", Bind(&C::elimination_rounds)},
      {"flatten.keep_layers", Bind(&C::keep_layers)},
      {"train.lr", Bind(&C::lr)},
      {"train.warmup_epochs", Bind(&C::warmup_epochs)},
      {"train.epochs_dp", Bind(&C::epochs_dp)},
      {"train.epochs_nor", Bind(&C::epochs_nor)},
      {"train.batch_size", Bind(&C::batch_size)},
      {"privacy.epsilon", Bind(&C::epsilon)},
      {"privacy.delta", Bind(&C::delta)},
      {"privacy.clip_norm", Bind(&C::clip_norm)},
      {"privacy.sigma", Bind(&C::sigma)},
      {"zo.fd_scale", Bind(&C::zo_fd_scale)},
      {"zo.clip", Bind(&C::zo_clip)},
      {"zo.lr", Bind(&C::zo_lr)},
      {"eval.eta_points", Bind(&C::eta_points)},
      {"eval.sharpness_subset", Bind(&C::sharpness_subset)},
      {"eval.mia_fraction", Bind(&C::mia_fraction)},
      {"model.layers", BindNested(&C::model, &ModelSpec::n_layers)},
      {"model.dim", BindNested(&C::model, &ModelSpec::model_dim)},
      {"model.heads", BindNested(&C::model, &ModelSpec::heads)},
      {"model.prefix_len", BindNested(&C::model, &ModelSpec::prefix_len)},
      {"model.prefix_init_scale", BindNested(&C::model, &ModelSpec::prefix_init_scale)},
      {"model.head_scale", BindNested(&C::model, &ModelSpec::head_scale)},
      {"model.prefix_gain", BindNested(&C::model, &ModelSpec::prefix_gain)},
      {"data.classes", BindNested(&C::data, &SyntheticSpec::class_count)},
      {"data.members", BindNested(&C::data, &SyntheticSpec::members)},
      {"data.non_members", BindNested(&C::data, &SyntheticSpec::non_members)},
      {"data.feature_dim", BindNested(&C::data, &SyntheticSpec::feature_dim)},
      {"data.seq_len", BindNested(&C::data, &SyntheticSpec::seq_len)},
      {"data.separation", BindNested(&C::data, &SyntheticSpec::separation)},
      {"data.noise_scale", BindNested(&C::data, &SyntheticSpec::noise_scale)},
  };
  return *table;
}

}  // namespace internal

// Sets one "section.key" to a textual value.
inline void SetConfigValue(ExperimentConfig& c, const std::string& key,
                           std::string_view value) {
  for (const auto& [name, binding] : internal::Bindings()) {
    if (name == key) {
      binding.set(c, key, internal::Trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

// Parses "section.key=value".
inline void ApplyOverride(ExperimentConfig& c, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override must be section.key=value");
  }
  SetConfigValue(c, std::string(internal::Trim(assignment.substr(0, eq))),
                 assignment.substr(eq + 1));
}

// Flat key=value text with [section] headers; '#' starts a comment.
inline ExperimentConfig ParseConfig(std::istream& is,
                                    ExperimentConfig base = ExperimentConfig()) {
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) {
      s = s.substr(0, hash);
    }
    s = internal::Trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') {
        throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
      }
      section = std::string(internal::Trim(s.substr(1, s.size() - 2)));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string_view::npos || section.empty()) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected key = value inside a section");
    }
    SetConfigValue(base,
                   section + "." + std::string(internal::Trim(s.substr(0, eq))),
                   s.substr(eq + 1));
  }
  return base;
}

inline ExperimentConfig LoadConfig(const std::string& path,
                                   ExperimentConfig base = ExperimentConfig()) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  return ParseConfig(is, std::move(base));
}

// Canonical text form; ParseConfig(ConfigToText(c)) reproduces c.
inline std::string ConfigToText(const ExperimentConfig& c) {
  std::ostringstream os;
  std::string section;
  for (const auto& [name, binding] : internal::Bindings()) {
    const auto dot = name.find('.');
    const std::string sec = name.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) os << '\n';
      os << '[' << sec << "]\n";
      section = sec;
    }
    os << name.substr(dot + 1) << " = " << binding.get(c) << '\n';
  }
  return os.str();
}

inline std::uint64_t ConfigDigest(const ExperimentConfig& c) {
  return internal::Fnv1a(ConfigToText(c));
}

}  // namespace dpflat

#endif  // DPFLAT_CONFIG_H_
