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

#ifndef DPFLAT_METRICS_H_
#define DPFLAT_METRICS_H_

#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dpflat/config.h"
#include "dpflat/errors.h"

namespace dpflat {

struct MetricsRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double l_g = 0.0;
  double accuracy = 0.0;
  std::optional<double> sharpness;
  double spent_epsilon = 0.0;  // inf for non-private runs
  double wall_time = 0.0;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

// One JSON object per line. Infinite epsilon is written as the string "inf".
inline std::string MetricsJsonLine(const MetricsRecord& r,
                                   bool include_wall_time = true) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["loss"] = r.loss;
  j["l_g"] = r.l_g;
  j["accuracy"] = r.accuracy;
  j["sharpness"] = r.sharpness ? nlohmann::ordered_json(*r.sharpness)
                               : nlohmann::ordered_json(nullptr);
  if (std::isinf(r.spent_epsilon)) {
    j["spent_epsilon"] = "inf";
  } else {
    j["spent_epsilon"] = r.spent_epsilon;
  }
  if (include_wall_time) j["wall_time"] = r.wall_time;
  return j.dump();
}

// Append-only JSON-lines writer; a default-constructed log discards records.
class MetricsLog {
 public:
  MetricsLog() = default;
  MetricsLog(const std::string& path, bool include_wall_time, bool append)
      : include_wall_time_(include_wall_time) {
    if (path.empty()) return;
    os_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!os_) throw FormatError("cannot open metrics log " + path);
  }

  void Append(const MetricsRecord& r) {
    if (!os_.is_open()) return;
    os_ << MetricsJsonLine(r, include_wall_time_) << '\n';
    os_.flush();
  }

 private:
  bool include_wall_time_ = true;
  std::ofstream os_;
};

inline void WriteMetricsCsv(const std::vector<MetricsRecord>& records,
                            std::ostream& os) {
  os << "epoch,step,loss,l_g,accuracy,sharpness,spent_epsilon\n";
  for (const MetricsRecord& r : records) {
    os << r.epoch << ',' << r.step << ',' << internal::FormatDouble(r.loss) << ','
       << internal::FormatDouble(r.l_g) << ',' << internal::FormatDouble(r.accuracy)
       << ',' << (r.sharpness ? internal::FormatDouble(*r.sharpness) : "")
       << ',' << internal::FormatDouble(r.spent_epsilon) << '\n';
  }
}

}  // namespace dpflat

#endif  // DPFLAT_METRICS_H_
