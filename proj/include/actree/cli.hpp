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

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "actree/action_space.hpp"
#include "actree/beam_search.hpp"
#include "actree/evaluator.hpp"
#include "actree/gateway.hpp"
#include "actree/generator.hpp"
#include "json.hpp"

namespace actree::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsage = 1,
  kBackendFailure = 2,
  kPartial = 3,
};

// A run configuration document plus the directory its relative paths
// resolve against.
struct RunConfig {
  nlohmann::json doc;
  std::filesystem::path base_dir;
  std::string hash;  // FNV-1a of the canonical dump

  static RunConfig load(const std::filesystem::path& path);
  static RunConfig from_json(nlohmann::json doc, std::filesystem::path base_dir);

  std::filesystem::path resolve(const std::string& relative) const;
  const nlohmann::json& section(const std::string& key) const;  // {} when absent
};

// Everything a tree run needs, built from a RunConfig.
struct Pipeline {
  std::unique_ptr<ActionSpace> space;
  std::unique_ptr<ModelGateway> gateway;
  SearchConfig search;
  TaskSignature task;
  std::unique_ptr<Generator> generator;
  std::unique_ptr<Controller> controller;
  std::unique_ptr<Evaluator> prm;
  std::unique_ptr<Evaluator> orm;

  SearchModules modules() const;
};

std::shared_ptr<ChatBackend> make_chat_backend(const RunConfig& config);
std::shared_ptr<RerankBackend> make_rerank_backend(const RunConfig& config);
std::unique_ptr<ModelGateway> make_gateway(const RunConfig& config);
std::unique_ptr<Evaluator> make_evaluator(EvaluatorKind kind, const nlohmann::json& section,
                                          const RunConfig& config, const ModelGateway& gateway);
// search_override is merged over the "search" section before parsing.
Pipeline build_pipeline(const RunConfig& config,
                        const nlohmann::json& search_override = nlohmann::json::object());

// Entry point behind the actree binary. Never throws; returns an ExitCode.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace actree::cli
