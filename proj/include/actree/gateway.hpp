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
#include <chrono>
#include <cstdint>
#include <exception>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "actree/common.hpp"

namespace actree {

struct ChatMessage {
  std::string role;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  // Assistant text the model must continue. Logically the final assistant
  // message; the returned continuation never repeats it.
  std::optional<std::string> prefill;
  std::vector<std::string> stop_sequences;
  double temperature = 0.7;
  int max_tokens = 512;
  std::optional<std::int64_t> seed;
};

enum class StopReason { kStopSequence, kLength, kEndOfMessage };

std::string to_string(StopReason reason);
StopReason stop_reason_from_string(const std::string& name);

struct Completion {
  std::string text;
  StopReason stop_reason = StopReason::kEndOfMessage;
};

struct RerankRequest {
  std::string query;
  std::vector<std::string> documents;
};

// Connection-level failure; retried by the gateway.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts = 1)
      : Error(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

// Refusal, empty output, or a rejected request. A branch-level failure.
class GenerationFailure : public Error {
 public:
  using Error::Error;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual Completion complete(const ChatRequest& request) = 0;
  virtual std::string identifier() const = 0;
};

class RerankBackend {
 public:
  virtual ~RerankBackend() = default;
  // One finite score per document, order-aligned; higher = more relevant.
  virtual std::vector<double> rerank(const RerankRequest& request) = 0;
  virtual std::string identifier() const = 0;
};

struct GatewayOptions {
  int max_in_flight = 8;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
};

// Per-request result of a batch. Exactly one of value / error is set.
template <typename T>
struct Outcome {
  std::optional<T> value;
  std::string error;
  bool transport = false;  // error was a TransportError

  bool ok() const { return value.has_value(); }
};

// Uniform access to the chat and rerank backends. Shareable across threads;
// max_in_flight bounds the number of concurrently outstanding requests of a
// batch.
class ModelGateway {
 public:
  ModelGateway(std::shared_ptr<ChatBackend> chat,
               std::shared_ptr<RerankBackend> reranker,
               GatewayOptions options = {});

  bool has_chat() const { return chat_ != nullptr; }
  bool has_reranker() const { return reranker_ != nullptr; }
  const GatewayOptions& options() const { return options_; }
  std::string chat_identifier() const;
  std::string reranker_identifier() const;

  // Retries transport errors with exponential backoff. The returned text is
  // cut at the first stop sequence and never begins with the prefill.
  // Throws GenerationFailure on refusal or empty output.
  Completion complete(const ChatRequest& request) const;
  std::vector<double> rerank(const RerankRequest& request) const;

  // Order-preserving; per-request failures are reported individually.
  std::vector<Outcome<Completion>> batch(
      const std::vector<ChatRequest>& requests) const;
  std::vector<Outcome<std::vector<double>>> batch_rerank(
      const std::vector<RerankRequest>& requests) const;

  // Runs fn(i) for i in [0, n) with at most max_in_flight concurrent calls.
  // fn must not throw; wrap failures in the result it writes.
  template <typename Fn>
  void parallel_for(std::size_t n, Fn&& fn) const;

 private:
  template <typename T, typename Call>
  T with_retries(Call&& call, const char* what) const;

  std::shared_ptr<ChatBackend> chat_;
  std::shared_ptr<RerankBackend> reranker_;
  GatewayOptions options_;
};

// Applies the stop-sequence contract to raw backend output: strips an echoed
// prefill and truncates at the earliest stop sequence.
Completion enforce_stop_contract(const ChatRequest& request,
                                 Completion completion);

// Flat text rendering of a request (system, user, prefill) used for mock rule
// matching and reply hashing.
std::string render_prompt(const ChatRequest& request);

template <typename Fn>
void ModelGateway::parallel_for(std::size_t n, Fn&& fn) const {
  std::size_t workers = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::max(1, options_.max_in_flight)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace actree
