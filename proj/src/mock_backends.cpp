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

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "actree/backends.hpp"

namespace actree {

using nlohmann::json;

namespace {

json read_fixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open mock fixture " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::regex compile(const std::string& pattern) {
  try {
    return std::regex(pattern, std::regex::ECMAScript);
  } catch (const std::regex_error& e) {
    throw ParseError("bad mock rule pattern '" + pattern + "': " + e.what());
  }
}

std::string last_user_message(const ChatRequest& request) {
  for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
    if (it->role == "user") return it->content;
  }
  return {};
}

std::string system_message(const ChatRequest& request) {
  for (const ChatMessage& m : request.messages) {
    if (m.role == "system") return m.content;
  }
  return {};
}

std::string scope_text(const ChatRequest& request, const std::string& scope) {
  if (scope == "all") return render_prompt(request);
  if (scope == "system") return system_message(request);
  if (scope == "user") return last_user_message(request);
  if (scope == "prefill") return request.prefill.value_or("");
  // tail
  if (request.prefill) {
    std::size_t pos = request.prefill->rfind("<step>");
    return pos == std::string::npos ? *request.prefill
                                    : request.prefill->substr(pos);
  }
  return last_user_message(request);
}

// Claims are the non-internal-reasoning sections of closed steps.
std::string echo_claims(const std::string& prefill) {
  static const std::regex kStep(R"(<step>\n([\s\S]*?)\n</step>)");
  std::vector<std::string> claims;
  for (auto it = std::sregex_iterator(prefill.begin(), prefill.end(), kStep);
       it != std::sregex_iterator(); ++it) {
    std::string body = (*it)[1].str();
    // The last "## field\n" header that is not internal_reasoning starts the
    // claim.
    std::size_t pos = std::string::npos;
    std::size_t search = 0;
    while (true) {
      std::size_t h = body.find("## ", search);
      if (h == std::string::npos) break;
      if (h == 0 || body[h - 1] == '\n') {
        if (body.compare(h, 21, "## internal_reasoning") != 0) pos = h;
      }
      search = h + 3;
    }
    if (pos == std::string::npos) continue;
    std::size_t nl = body.find('\n', pos);
    if (nl == std::string::npos) continue;
    claims.push_back(trim(body.substr(nl + 1)));
  }
  std::string out;
  for (const std::string& c : claims) {
    if (!out.empty()) out.push_back(' ');
    out += c;
  }
  return out;
}

std::string extract_tag(const std::string& text, const std::string& tag) {
  std::string open = "<" + tag + ">";
  std::string close = "</" + tag + ">";
  std::size_t b = text.find(open);
  if (b == std::string::npos) return {};
  b += open.size();
  std::size_t e = text.find(close, b);
  if (e == std::string::npos) return {};
  return trim(text.substr(b, e - b));
}

std::string expand_reply(const std::string& reply, std::uint64_t hash,
                         std::int64_t seed) {
  std::string out;
  std::size_t i = 0;
  std::uint64_t pick_counter = 0;
  while (i < reply.size()) {
    if (reply[i] != '{') {
      out.push_back(reply[i++]);
      continue;
    }
    std::size_t close = reply.find('}', i);
    if (close == std::string::npos) {
      out.append(reply, i, std::string::npos);
      break;
    }
    std::string token = reply.substr(i + 1, close - i - 1);
    if (token == "hash") {
      out += hex64(hash).substr(0, 8);
    } else if (token == "seed") {
      out += std::to_string(seed);
    } else if (starts_with(token, "pick:")) {
      std::vector<std::string> options;
      std::stringstream ss(token.substr(5));
      std::string opt;
      while (std::getline(ss, opt, '|')) options.push_back(opt);
      if (!options.empty()) {
        std::uint64_t h = mix_seed(hash, pick_counter++);
        out += options[h % options.size()];
      }
    } else {
      out.append(reply, i, close - i + 1);
    }
    i = close + 1;
  }
  return out;
}

Completion limit_tokens(std::string text, int max_tokens,
                        StopReason default_reason) {
  Completion c{std::move(text), default_reason};
  if (max_tokens <= 0) return c;
  int words = 0;
  bool in_word = false;
  for (std::size_t i = 0; i < c.text.size(); ++i) {
    bool space = std::isspace(static_cast<unsigned char>(c.text[i]));
    if (!space && !in_word) {
      if (++words > max_tokens) {
        c.text = rtrim(c.text.substr(0, i));
        c.stop_reason = StopReason::kLength;
        return c;
      }
    }
    in_word = !space;
  }
  return c;
}

}  // namespace

MockChatBackend::MockChatBackend(const json& fixture, std::string name)
    : name_(std::move(name)), fixture_hash_(fnv1a64(fixture.dump())) {
  auto parse_rule = [](const json& r, bool is_fallback) {
    Rule rule;
    rule.pattern = is_fallback ? "" : r.at("when").get<std::string>();
    if (!is_fallback) rule.when = compile(rule.pattern);
    rule.scope = r.value("scope", "all");
    rule.action = r.value("action", "reply");
    rule.reply = r.value("reply", "");
    rule.failure = r.value("failure", "refusal");
    if (r.contains("stop_reason")) {
      rule.stop_reason = stop_reason_from_string(r["stop_reason"].get<std::string>());
    }
    static const std::vector<std::string> kScopes = {"all", "tail", "system",
                                                     "user", "prefill"};
    static const std::vector<std::string> kActions = {
        "reply", "echo_claims", "prefer_longer", "fail"};
    if (std::find(kScopes.begin(), kScopes.end(), rule.scope) == kScopes.end()) {
      throw ParseError("mock rule has unknown scope '" + rule.scope + "'");
    }
    if (std::find(kActions.begin(), kActions.end(), rule.action) ==
        kActions.end()) {
      throw ParseError("mock rule has unknown action '" + rule.action + "'");
    }
    return rule;
  };
  try {
    for (const json& r : fixture.value("rules", json::array())) {
      rules_.push_back(parse_rule(r, false));
    }
    if (fixture.contains("fallback")) {
      const json& f = fixture["fallback"];
      fallback_ = parse_rule(f.is_string() ? json{{"reply", f}} : f, true);
    }
    const json exact = fixture.value("exact", json::object());
    for (const auto& [k, v] : exact.items()) {
      exact_[k] = v.get<std::string>();
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed mock chat fixture: ") + e.what());
  }
}

std::shared_ptr<MockChatBackend> MockChatBackend::from_file(
    const std::filesystem::path& path) {
  return std::make_shared<MockChatBackend>(read_fixture(path),
                                           "mock:" + path.filename().string());
}

std::string MockChatBackend::identifier() const {
  return name_ + "#" + hex64(fixture_hash_).substr(0, 8);
}

std::string MockChatBackend::request_key(const ChatRequest& request) {
  std::uint64_t h = fnv1a64(render_prompt(request));
  for (const std::string& s : request.stop_sequences) h = fnv1a64(s, h);
  return hex64(mix_seed(h, static_cast<std::uint64_t>(request.seed.value_or(0))));
}

Completion MockChatBackend::complete(const ChatRequest& request) {
  const std::string key = request_key(request);
  const std::uint64_t hash = std::stoull(key, nullptr, 16);
  const StopReason natural = request.stop_sequences.empty()
                                 ? StopReason::kEndOfMessage
                                 : StopReason::kStopSequence;
  if (auto it = exact_.find(key); it != exact_.end()) {
    return Completion{it->second, natural};
  }
  const Rule* chosen = nullptr;
  for (const Rule& rule : rules_) {
    if (std::regex_search(scope_text(request, rule.scope), rule.when)) {
      chosen = &rule;
      break;
    }
  }
  if (!chosen && fallback_) chosen = &*fallback_;
  if (!chosen) throw GenerationFailure("no mock rule matched the request");

  const Rule& rule = *chosen;
  std::string text;
  if (rule.action == "fail") {
    if (rule.failure == "transport") {
      throw TransportError("scripted transport failure");
    }
    throw GenerationFailure("scripted refusal");
  } else if (rule.action == "echo_claims") {
    text = echo_claims(request.prefill.value_or(""));
  } else if (rule.action == "prefer_longer") {
    std::string user = last_user_message(request);
    std::string a = extract_tag(user, "option_a");
    std::string b = extract_tag(user, "option_b");
    text = a.size() >= b.size() ? "A" : "B";
  } else {
    text = expand_reply(rule.reply, hash, request.seed.value_or(0));
  }
  Completion c =
      limit_tokens(std::move(text), request.max_tokens,
                   rule.stop_reason.value_or(natural));
  return c;
}

MockRerankBackend::MockRerankBackend(const json& fixture, std::string name)
    : name_(std::move(name)), fixture_hash_(fnv1a64(fixture.dump())) {
  try {
    mode_ = fixture.value("mode", "rules");
    if (mode_ != "rules" && mode_ != "hash" && mode_ != "length") {
      throw ParseError("unknown mock rerank mode '" + mode_ + "'");
    }
    fallback_ = fixture.value("fallback", 0.0);
    for (const json& r : fixture.value("rules", json::array())) {
      Rule rule;
      rule.when = compile(r.at("when").get<std::string>());
      rule.on_query = r.value("target", "document") == "query";
      rule.score = r.at("score").get<double>();
      rules_.push_back(std::move(rule));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed mock rerank fixture: ") + e.what());
  }
}

std::shared_ptr<MockRerankBackend> MockRerankBackend::from_file(
    const std::filesystem::path& path) {
  return std::make_shared<MockRerankBackend>(read_fixture(path),
                                             "mock:" + path.filename().string());
}

std::string MockRerankBackend::identifier() const {
  return name_ + "#" + hex64(fixture_hash_).substr(0, 8);
}

std::vector<double> MockRerankBackend::rerank(const RerankRequest& request) {
  std::vector<double> scores;
  scores.reserve(request.documents.size());
  for (const std::string& doc : request.documents) {
    std::optional<double> score;
    for (const Rule& rule : rules_) {
      const std::string& target = rule.on_query ? request.query : doc;
      if (std::regex_search(target, rule.when)) {
        score = rule.score;
        break;
      }
    }
    if (!score) {
      if (mode_ == "hash") {
        std::uint64_t h = fnv1a64(doc, fnv1a64(request.query + "\x1f"));
        score = static_cast<double>(h % 10000) / 1000.0 - 5.0;
      } else if (mode_ == "length") {
        score = static_cast<double>(doc.size());
      } else {
        score = fallback_;
      }
    }
    scores.push_back(*score);
  }
  return scores;
}

RecordingChatBackend::RecordingChatBackend(std::shared_ptr<ChatBackend> inner,
                                           std::filesystem::path fixture_path)
    : inner_(std::move(inner)), path_(std::move(fixture_path)) {}

RecordingChatBackend::~RecordingChatBackend() {
  try {
    flush();
  } catch (const std::exception& e) {
    log_error(std::string("failed to write recorded fixture: ") + e.what());
  }
}

std::string RecordingChatBackend::identifier() const {
  return "recording(" + inner_->identifier() + ")";
}

Completion RecordingChatBackend::complete(const ChatRequest& request) {
  Completion c = inner_->complete(request);
  std::lock_guard<std::mutex> lock(mu_);
  recorded_[MockChatBackend::request_key(request)] = c.text;
  return c;
}

void RecordingChatBackend::flush() {
  std::lock_guard<std::mutex> lock(mu_);
  if (recorded_.empty()) return;
  json fixture = {{"rules", json::array()}, {"exact", recorded_}};
  std::ofstream out(path_, std::ios::trunc);
  if (!out) throw Error("cannot write " + path_.string());
  out << fixture.dump(2) << '\n';
}

}  // namespace actree
