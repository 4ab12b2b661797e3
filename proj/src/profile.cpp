// Copyright 2026 The LIOS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lios/bench.hpp"

namespace lios::bench {

io::DeviceProfile parse_device_profile(const std::string& json_text, const std::filesystem::path& base_dir) {
  io::DeviceProfile p;
  try {
    const auto j = nlohmann::json::parse(json_text);
    const std::string kind = j.value("latency", std::string("lognormal"));
    if (kind == "constant") {
      p.latency = io::LatencyModel::constant(j.value("constant_us", 100.0));
    } else if (kind == "lognormal") {
      p.latency = io::LatencyModel::lognormal(j.value("mu", p.latency.mu), j.value("sigma", p.latency.sigma));
    } else if (kind == "empirical") {
      std::filesystem::path file = j.at("empirical_file").get<std::string>();
      if (file.is_relative()) file = base_dir / file;
      p.latency = io::LatencyModel::empirical_from_file(file);
    } else {
      throw Error(ErrorCode::kInvalidArgument, "unknown latency model '" + kind + "'");
    }
    p.concurrency_penalty_us = j.value("concurrency_penalty_us", p.concurrency_penalty_us);
    p.seed = j.value("seed", p.seed);
    p.queue_depth = j.value("queue_depth", p.queue_depth);
    p.cache_records = j.value("cache_records", p.cache_records);
    p.block_size = j.value("block_size", p.block_size);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedInput, std::string("device profile: ") + e.what());
  }
  return p;
}

io::DeviceProfile load_device_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMalformedInput, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_device_profile(ss.str(), path.parent_path());
}

}  // namespace lios::bench
