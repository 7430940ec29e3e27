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
#include <functional>
#include <map>
#include <mutex>
#include <regex>
#include <string>
#include <vector>

#include "actree/gateway.hpp"
#include "json.hpp"

namespace actree {

// ---------------------------------------------------------------------------
// OpenAI-compatible HTTP backends
// ---------------------------------------------------------------------------

enum class PrefillMode {
  // Trailing assistant message plus continue_final_message (vLLM, SGLang).
  kContinueFinalMessage,
  // /v1/completions with a ChatML-rendered prompt ending in the prefill.
  kRawCompletion,
};

struct HttpChatConfig {
  std::string base_url;  // e.g. http://localhost:8000
  std::string model;
  std::string api_key;   // resolved from the environment by the caller
  PrefillMode prefill_mode = PrefillMode::kContinueFinalMessage;
  int timeout_seconds = 300;
};

class OpenAIChatBackend final : public ChatBackend {
 public:
  explicit OpenAIChatBackend(HttpChatConfig config);
  Completion complete(const ChatRequest& request) override;
  std::string identifier() const override;

  // Request body for the configured prefill mode; exposed for tests.
  nlohmann::json request_body(const ChatRequest& request) const;
  // Maps a response body onto a Completion (throws GenerationFailure on
  // refusals and empty choices).
  static Completion parse_response(const nlohmann::json& body,
                                   PrefillMode mode);

 private:
  HttpChatConfig config_;
};

struct HttpRerankConfig {
  std::string base_url;
  std::string model;
  std::string api_key;
  std::string path = "/v1/rerank";
  int timeout_seconds = 120;
};

// Cohere/Jina-style rerank endpoint: {model, query, documents} ->
// {results: [{index, relevance_score}]}.
class HttpRerankBackend final : public RerankBackend {
 public:
  explicit HttpRerankBackend(HttpRerankConfig config);
  std::vector<double> rerank(const RerankRequest& request) override;
  std::string identifier() const override;

  static std::vector<double> parse_response(const nlohmann::json& body,
                                            std::size_t document_count);

 private:
  HttpRerankConfig config_;
};

// ChatML rendering of messages + prefill for raw completion endpoints.
std::string render_chatml(const ChatRequest& request);

// ---------------------------------------------------------------------------
// Deterministic mock backends
// ---------------------------------------------------------------------------

// Scripted chat backend. Rules are tried in order against a scope of the
// rendered request; the first match decides the reply. Fixture format:
//
//   {"rules": [{"when": "<regex>", "scope": "all|tail|system|user|prefill",
//               "action": "reply|echo_claims|prefer_longer|fail",
//               "reply": "text with {hash} / {seed} / {pick:a|b|c}",
//               "failure": "refusal|transport",
//               "stop_reason": "stop_sequence_hit|length|end_of_message"}],
//    "fallback": {"reply": "..."},
//    "exact": {"<request hash>": "reply"}}
//
// `tail` is the prefill text after its last "<step>" (or the last user
// message when there is no prefill). Replies are a pure function of the
// request and its seed.
class MockChatBackend final : public ChatBackend {
 public:
  explicit MockChatBackend(const nlohmann::json& fixture,
                           std::string name = "mock-chat");
  static std::shared_ptr<MockChatBackend> from_file(
      const std::filesystem::path& path);

  Completion complete(const ChatRequest& request) override;
  std::string identifier() const override;

  // Stable key for exact-match replay entries.
  static std::string request_key(const ChatRequest& request);

 private:
  struct Rule {
    std::regex when;
    std::string pattern;
    std::string scope;
    std::string action;
    std::string reply;
    std::string failure;
    std::optional<StopReason> stop_reason;
  };

  std::vector<Rule> rules_;
  std::optional<Rule> fallback_;
  std::map<std::string, std::string> exact_;
  std::string name_;
  std::uint64_t fixture_hash_;
};

// Scripted reranker. Fixture: {"mode": "rules|hash|length", "rules":
// [{"when": "<regex>", "target": "document|query", "score": x}],
// "fallback": x}. Rules are checked first; unmatched documents get the mode
// score (hash: deterministic pseudo-random in [-5,5); length: character
// count; rules: the fallback value).
class MockRerankBackend final : public RerankBackend {
 public:
  explicit MockRerankBackend(const nlohmann::json& fixture,
                             std::string name = "mock-rerank");
  static std::shared_ptr<MockRerankBackend> from_file(
      const std::filesystem::path& path);

  std::vector<double> rerank(const RerankRequest& request) override;
  std::string identifier() const override;

 private:
  struct Rule {
    std::regex when;
    bool on_query = false;
    double score = 0.0;
  };
  std::string mode_;
  std::vector<Rule> rules_;
  double fallback_ = 0.0;
  std::string name_;
  std::uint64_t fixture_hash_;
};

// In-process backends wrapping callables; used by tests and embedders.
class FunctionChatBackend final : public ChatBackend {
 public:
  using Fn = std::function<Completion(const ChatRequest&)>;
  explicit FunctionChatBackend(Fn fn, std::string name = "function-chat")
      : fn_(std::move(fn)), name_(std::move(name)) {}
  Completion complete(const ChatRequest& request) override { return fn_(request); }
  std::string identifier() const override { return name_; }

 private:
  Fn fn_;
  std::string name_;
};

class FunctionRerankBackend final : public RerankBackend {
 public:
  using Fn = std::function<std::vector<double>(const RerankRequest&)>;
  explicit FunctionRerankBackend(Fn fn, std::string name = "function-rerank")
      : fn_(std::move(fn)), name_(std::move(name)) {}
  std::vector<double> rerank(const RerankRequest& request) override {
    return fn_(request);
  }
  std::string identifier() const override { return name_; }

 private:
  Fn fn_;
  std::string name_;
};

// Wraps a live backend and records every reply as an exact-match entry so a
// run can be replayed offline through MockChatBackend.
class RecordingChatBackend final : public ChatBackend {
 public:
  RecordingChatBackend(std::shared_ptr<ChatBackend> inner,
                       std::filesystem::path fixture_path);
  ~RecordingChatBackend() override;
  Completion complete(const ChatRequest& request) override;
  std::string identifier() const override;
  void flush();

 private:
  std::shared_ptr<ChatBackend> inner_;
  std::filesystem::path path_;
  std::mutex mu_;
  std::map<std::string, std::string> recorded_;
};

}  // namespace actree
