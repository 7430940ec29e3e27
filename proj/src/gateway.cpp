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

#include "actree/gateway.hpp"

#include <cmath>
#include <sstream>

namespace actree {

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::kStopSequence:
      return "stop_sequence_hit";
    case StopReason::kLength:
      return "length";
    case StopReason::kEndOfMessage:
      return "end_of_message";
  }
  return "end_of_message";
}

StopReason stop_reason_from_string(const std::string& name) {
  if (name == "stop_sequence_hit") return StopReason::kStopSequence;
  if (name == "length") return StopReason::kLength;
  if (name == "end_of_message") return StopReason::kEndOfMessage;
  throw ParseError("unknown stop reason '" + name + "'");
}

ModelGateway::ModelGateway(std::shared_ptr<ChatBackend> chat,
                           std::shared_ptr<RerankBackend> reranker,
                           GatewayOptions options)
    : chat_(std::move(chat)),
      reranker_(std::move(reranker)),
      options_(options) {
  if (options_.max_attempts < 1) options_.max_attempts = 1;
}

std::string ModelGateway::chat_identifier() const {
  return chat_ ? chat_->identifier() : "none";
}

std::string ModelGateway::reranker_identifier() const {
  return reranker_ ? reranker_->identifier() : "none";
}

template <typename T, typename Call>
T ModelGateway::with_retries(Call&& call, const char* what) const {
  auto backoff = options_.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return call();
    } catch (const TransportError& e) {
      if (attempt >= options_.max_attempts) {
        throw TransportError(std::string(what) + " failed after " +
                                 std::to_string(attempt) +
                                 " attempts: " + e.what(),
                             attempt);
      }
      log_warning(std::string(what) + " transport error (attempt " +
                  std::to_string(attempt) + "): " + e.what());
      if (backoff.count() > 0) std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
}

Completion enforce_stop_contract(const ChatRequest& request,
                                 Completion completion) {
  std::string& text = completion.text;
  if (request.prefill && !request.prefill->empty() &&
      starts_with(text, *request.prefill)) {
    text.erase(0, request.prefill->size());
  }
  std::size_t cut = std::string::npos;
  for (const std::string& stop : request.stop_sequences) {
    if (stop.empty()) continue;
    std::size_t pos = text.find(stop);
    if (pos < cut) cut = pos;
  }
  if (cut != std::string::npos) {
    text.erase(cut);
    completion.stop_reason = StopReason::kStopSequence;
  }
  return completion;
}

Completion ModelGateway::complete(const ChatRequest& request) const {
  if (!chat_) throw UsageError("no chat backend configured");
  if (request.messages.empty()) {
    throw UsageError("chat request needs at least one message");
  }
  Completion c = with_retries<Completion>(
      [&] { return chat_->complete(request); }, "chat completion");
  c = enforce_stop_contract(request, std::move(c));
  if (trim(c.text).empty()) {
    throw GenerationFailure("backend returned an empty continuation");
  }
  return c;
}

std::vector<double> ModelGateway::rerank(const RerankRequest& request) const {
  if (!reranker_) throw UsageError("no reranker backend configured");
  if (request.documents.empty()) {
    throw UsageError("rerank request needs at least one document");
  }
  std::vector<double> scores = with_retries<std::vector<double>>(
      [&] { return reranker_->rerank(request); }, "rerank");
  if (scores.size() != request.documents.size()) {
    throw GenerationFailure("reranker returned " + std::to_string(scores.size()) +
                            " scores for " +
                            std::to_string(request.documents.size()) +
                            " documents");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw GenerationFailure("reranker returned a non-finite score");
  }
  return scores;
}

namespace {

template <typename T, typename Fn>
Outcome<T> capture(Fn&& fn) {
  Outcome<T> out;
  try {
    out.value = fn();
  } catch (const TransportError& e) {
    out.error = e.what();
    out.transport = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace

std::vector<Outcome<Completion>> ModelGateway::batch(
    const std::vector<ChatRequest>& requests) const {
  std::vector<Outcome<Completion>> results(requests.size());
  parallel_for(requests.size(), [&](std::size_t i) {
    results[i] = capture<Completion>([&] { return complete(requests[i]); });
  });
  return results;
}

std::vector<Outcome<std::vector<double>>> ModelGateway::batch_rerank(
    const std::vector<RerankRequest>& requests) const {
  std::vector<Outcome<std::vector<double>>> results(requests.size());
  parallel_for(requests.size(), [&](std::size_t i) {
    results[i] =
        capture<std::vector<double>>([&] { return rerank(requests[i]); });
  });
  return results;
}

std::string render_prompt(const ChatRequest& request) {
  std::ostringstream os;
  for (const ChatMessage& m : request.messages) {
    os << '[' << m.role << "]\n" << m.content << '\n';
  }
  if (request.prefill) os << "[assistant]\n" << *request.prefill;
  return os.str();
}

}  // namespace actree
