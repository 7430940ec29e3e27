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

#include "httplib.h"

#include <sstream>

#include "actree/backends.hpp"

namespace actree {

using nlohmann::json;

namespace {

json post_json(const std::string& base_url, const std::string& path,
               const std::string& api_key, int timeout_seconds,
               const json& body) {
  httplib::Client client(base_url);
  client.set_connection_timeout(timeout_seconds, 0);
  client.set_read_timeout(timeout_seconds, 0);
  client.set_write_timeout(timeout_seconds, 0);
  httplib::Headers headers;
  if (!api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + api_key);
  }
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    throw TransportError("POST " + base_url + path + ": " +
                         httplib::to_string(res.error()));
  }
  // Rate limits and server faults are transient; other 4xx are rejections of
  // this particular request (e.g. context length exceeded).
  if (res->status == 429 || res->status >= 500) {
    throw TransportError("POST " + base_url + path + ": HTTP " +
                         std::to_string(res->status));
  }
  if (res->status >= 400) {
    throw GenerationFailure("POST " + base_url + path + ": HTTP " +
                            std::to_string(res->status) + ": " +
                            res->body.substr(0, 300));
  }
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw GenerationFailure(std::string("unparseable response body: ") + e.what());
  }
}

}  // namespace

std::string render_chatml(const ChatRequest& request) {
  std::ostringstream os;
  for (const ChatMessage& m : request.messages) {
    os << "<|im_start|>" << m.role << '\n' << m.content << "<|im_end|>\n";
  }
  os << "<|im_start|>assistant\n" << request.prefill.value_or("");
  return os.str();
}

OpenAIChatBackend::OpenAIChatBackend(HttpChatConfig config)
    : config_(std::move(config)) {
  if (config_.base_url.empty()) throw UsageError("chat backend needs a URL");
}

std::string OpenAIChatBackend::identifier() const {
  return "openai:" + config_.base_url + "#" + config_.model;
}

json OpenAIChatBackend::request_body(const ChatRequest& request) const {
  json body = {{"model", config_.model},
               {"temperature", request.temperature},
               {"max_tokens", request.max_tokens}};
  if (!request.stop_sequences.empty()) body["stop"] = request.stop_sequences;
  if (request.seed) body["seed"] = *request.seed;
  if (config_.prefill_mode == PrefillMode::kRawCompletion) {
    body["prompt"] = render_chatml(request);
    return body;
  }
  json messages = json::array();
  for (const ChatMessage& m : request.messages) {
    messages.push_back({{"role", m.role}, {"content", m.content}});
  }
  if (request.prefill) {
    messages.push_back({{"role", "assistant"}, {"content", *request.prefill}});
    body["continue_final_message"] = true;
    body["add_generation_prompt"] = false;
  }
  body["messages"] = std::move(messages);
  return body;
}

Completion OpenAIChatBackend::parse_response(const json& body,
                                             PrefillMode mode) {
  if (!body.contains("choices") || body["choices"].empty()) {
    throw GenerationFailure("response has no choices");
  }
  const json& choice = body["choices"][0];
  Completion c;
  if (mode == PrefillMode::kRawCompletion) {
    c.text = choice.value("text", "");
  } else {
    const json& msg = choice.at("message");
    if (msg.contains("refusal") && !msg["refusal"].is_null()) {
      throw GenerationFailure("model refused: " +
                              msg["refusal"].get<std::string>());
    }
    if (msg.contains("content") && msg["content"].is_string()) {
      c.text = msg["content"].get<std::string>();
    }
  }
  std::string finish =
      choice.contains("finish_reason") && choice["finish_reason"].is_string()
          ? choice["finish_reason"].get<std::string>()
          : "";
  if (finish == "length") {
    c.stop_reason = StopReason::kLength;
  } else if (choice.contains("stop_reason") && choice["stop_reason"].is_string()) {
    // vLLM reports the matched stop string here; null means EOS.
    c.stop_reason = StopReason::kStopSequence;
  } else {
    c.stop_reason = StopReason::kEndOfMessage;
  }
  return c;
}

Completion OpenAIChatBackend::complete(const ChatRequest& request) {
  const bool raw = config_.prefill_mode == PrefillMode::kRawCompletion;
  json response = post_json(config_.base_url,
                            raw ? "/v1/completions" : "/v1/chat/completions",
                            config_.api_key, config_.timeout_seconds,
                            request_body(request));
  return parse_response(response, config_.prefill_mode);
}

HttpRerankBackend::HttpRerankBackend(HttpRerankConfig config)
    : config_(std::move(config)) {
  if (config_.base_url.empty()) throw UsageError("rerank backend needs a URL");
}

std::string HttpRerankBackend::identifier() const {
  return "rerank:" + config_.base_url + "#" + config_.model;
}

std::vector<double> HttpRerankBackend::parse_response(const json& body,
                                                      std::size_t document_count) {
  if (!body.contains("results")) throw GenerationFailure("rerank response lacks results");
  std::vector<double> scores(document_count, 0.0);
  std::vector<bool> seen(document_count, false);
  for (const json& r : body["results"]) {
    std::size_t index = r.at("index").get<std::size_t>();
    if (index >= document_count) throw GenerationFailure("rerank index out of range");
    double score = r.contains("relevance_score") ? r["relevance_score"].get<double>()
                                                 : r.at("score").get<double>();
    scores[index] = score;
    seen[index] = true;
  }
  for (bool s : seen) {
    if (!s) throw GenerationFailure("rerank response is missing documents");
  }
  return scores;
}

std::vector<double> HttpRerankBackend::rerank(const RerankRequest& request) {
  json body = {{"model", config_.model},
               {"query", request.query},
               {"documents", request.documents},
               {"top_n", request.documents.size()}};
  json response = post_json(config_.base_url, config_.path, config_.api_key,
                            config_.timeout_seconds, body);
  return parse_response(response, request.documents.size());
}

}  // namespace actree
