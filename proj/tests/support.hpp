// Copyright 2026 The actree Authors.
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


#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <string>
#include <unistd.h>

#include "actree/action_space.hpp"
#include "actree/backends.hpp"
#include "actree/gateway.hpp"

namespace actree::testing {

inline std::filesystem::path data_dir() { return ACTREE_DATA_DIR; }
inline std::filesystem::path golden_dir() { return ACTREE_GOLDEN_DIR; }

inline const ActionSpace& argument_space() {
  static const ActionSpace s = load_action_space(data_dir() / "action_spaces/argument/manifest.json");
  return s;
}

inline const ActionSpace& novelty_space() {
  static const ActionSpace s =
      load_action_space(data_dir() / "action_spaces/noveltybench/manifest.json");
  return s;
}

inline const ActionSpace& demo_space() {
  static const ActionSpace s = load_action_space(data_dir() / "action_spaces/demo2x2/manifest.json");
  return s;
}

// One dimension "d" with templates t0..t{n-1}, prefixes P0.., no reasoning.
inline ActionSpace line_space(int n, bool allow_finish = false) {
  Dimension d{"d", {}};
  for (int i = 0; i < n; ++i) {
    d.templates.push_back({"t" + std::to_string(i), "template " + std::to_string(i),
                           "P" + std::to_string(i), std::nullopt});
  }
  return ActionSpace({d}, allow_finish);
}

// Square a x b space with dimensions "x" and "y".
inline ActionSpace grid_space(int a, int b, bool allow_finish = false) {
  Dimension x{"x", {}}, y{"y", {}};
  for (int i = 0; i < a; ++i) x.templates.push_back({"x" + std::to_string(i), "x", "X" + std::to_string(i), {}});
  for (int i = 0; i < b; ++i) y.templates.push_back({"y" + std::to_string(i), "y", {}, "think " + std::to_string(i)});
  return ActionSpace({x, y}, allow_finish);
}

inline GatewayOptions fast_options(int in_flight = 4) {
  GatewayOptions o;
  o.max_in_flight = in_flight;
  o.max_attempts = 2;
  o.initial_backoff = std::chrono::milliseconds(0);
  return o;
}

inline std::unique_ptr<ModelGateway> mock_gateway(const std::string& chat_fixture = "chat.json",
                                                  const std::string& rerank_fixture = "rerank.json",
                                                  int in_flight = 4) {
  return std::make_unique<ModelGateway>(
      MockChatBackend::from_file(data_dir() / "mock" / chat_fixture),
      MockRerankBackend::from_file(data_dir() / "mock" / rerank_fixture), fast_options(in_flight));
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("actree-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace actree::testing
