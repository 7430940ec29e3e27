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

#include "actree/action_space.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace actree {

using nlohmann::json;

namespace {

std::optional<std::string> optional_text(const json& record, const char* key,
                                         const std::string& where) {
  auto it = record.find(key);
  if (it == record.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw ParseError(where + ": field '" + key + "' must be a string or null");
  }
  std::string value = it->get<std::string>();
  if (trim(value).empty()) return std::nullopt;
  return value;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// Internal reasoning fragments are joined as sentences; a fragment lacking
// terminal punctuation gets a period.
std::string as_sentence(const std::string& text) {
  std::string s = trim(text);
  if (s.empty()) return s;
  char last = s.back();
  if (last != '.' && last != '!' && last != '?') s.push_back('.');
  return s;
}

}  // namespace

ActionSpace::ActionSpace(std::vector<Dimension> dimensions, bool allow_finish)
    : dimensions_(std::move(dimensions)), allow_finish_(allow_finish) {
  if (dimensions_.empty()) {
    throw ValidationError("action space needs at least one dimension");
  }
  tpl_index_.resize(dimensions_.size());
  for (std::size_t d = 0; d < dimensions_.size(); ++d) {
    const Dimension& dim = dimensions_[d];
    if (dim.name.empty()) throw ValidationError("dimension with empty name");
    if (!dim_index_.emplace(dim.name, d).second) {
      throw ValidationError("duplicate dimension '" + dim.name + "'");
    }
    if (dim.templates.empty()) {
      throw ValidationError("dimension '" + dim.name + "' has no templates");
    }
    for (std::size_t t = 0; t < dim.templates.size(); ++t) {
      const ActionTemplate& tpl = dim.templates[t];
      if (tpl.name.empty()) {
        throw ValidationError("dimension '" + dim.name +
                              "' has a template with an empty name");
      }
      if (!tpl.prefix && !tpl.internal_reasoning) {
        throw ValidationError("template '" + dim.name + "." + tpl.name +
                              "' has neither prefix nor internal_reasoning");
      }
      if (!tpl_index_[d].emplace(tpl.name, t).second) {
        throw ValidationError("duplicate template name '" + tpl.name +
                              "' in dimension '" + dim.name + "'");
      }
    }
    if (choice_count_ > std::numeric_limits<std::uint64_t>::max() /
                            dim.templates.size()) {
      throw ValidationError("action space too large");
    }
    choice_count_ *= dim.templates.size();
  }
}

std::size_t ActionSpace::dimension_index(const std::string& dimension) const {
  auto it = dim_index_.find(dimension);
  if (it == dim_index_.end()) {
    throw ValidationError("unknown dimension '" + dimension + "'");
  }
  return it->second;
}

std::size_t ActionSpace::template_index(std::size_t dimension,
                                        const std::string& name) const {
  auto it = tpl_index_.at(dimension).find(name);
  if (it == tpl_index_[dimension].end()) {
    throw ValidationError("unknown action '" + name + "' in dimension '" +
                          dimensions_[dimension].name + "'");
  }
  return it->second;
}

const ActionTemplate& ActionSpace::find(const std::string& dimension,
                                        const std::string& name) const {
  std::size_t d = dimension_index(dimension);
  return dimensions_[d].templates[template_index(d, name)];
}

std::uint64_t ActionSpace::index_of(const ActionChoice& choice) const {
  if (choice.is_finish) throw ValidationError("FINISH has no flat index");
  if (choice.per_dimension.size() != dimensions_.size()) {
    throw ValidationError("choice must name one template per dimension: " +
                          describe(choice));
  }
  std::uint64_t index = 0;
  for (std::size_t d = 0; d < dimensions_.size(); ++d) {
    auto it = choice.per_dimension.find(dimensions_[d].name);
    if (it == choice.per_dimension.end()) {
      throw ValidationError("choice is missing dimension '" +
                            dimensions_[d].name + "'");
    }
    index = index * dimensions_[d].templates.size() +
            template_index(d, it->second);
  }
  return index;
}

std::vector<std::size_t> ActionSpace::digits_of(std::uint64_t index) const {
  if (index >= choice_count_) throw ValidationError("choice index out of range");
  std::vector<std::size_t> digits(dimensions_.size());
  for (std::size_t d = dimensions_.size(); d-- > 0;) {
    std::size_t radix = dimensions_[d].templates.size();
    digits[d] = static_cast<std::size_t>(index % radix);
    index /= radix;
  }
  return digits;
}

ActionChoice ActionSpace::choice_at(std::uint64_t index) const {
  std::vector<std::size_t> digits = digits_of(index);
  ActionChoice choice;
  for (std::size_t d = 0; d < dimensions_.size(); ++d) {
    choice.per_dimension.emplace(dimensions_[d].name,
                                 dimensions_[d].templates[digits[d]].name);
  }
  return choice;
}

bool ActionSpace::is_valid(const ActionChoice& choice) const {
  if (choice.is_finish) return choice.per_dimension.empty();
  if (choice.per_dimension.size() != dimensions_.size()) return false;
  for (const auto& [dim, name] : choice.per_dimension) {
    auto d = dim_index_.find(dim);
    if (d == dim_index_.end()) return false;
    if (!tpl_index_[d->second].count(name)) return false;
  }
  return true;
}

Dimension parse_dimension(const std::string& name, const json& doc) {
  if (!doc.is_array()) {
    throw ParseError("dimension '" + name + "': document must be a JSON array");
  }
  Dimension dim{name, {}};
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& record = doc[i];
    std::string where = "dimension '" + name + "' entry " + std::to_string(i);
    if (!record.is_object()) throw ParseError(where + ": not an object");
    auto n = record.find("name");
    if (n == record.end() || !n->is_string() || n->get<std::string>().empty()) {
      throw ParseError(where + ": missing 'name'");
    }
    where += " ('" + n->get<std::string>() + "')";
    auto def = record.find("definition");
    if (def == record.end() || !def->is_string()) {
      throw ParseError(where + ": missing 'definition'");
    }
    ActionTemplate tpl;
    tpl.name = n->get<std::string>();
    tpl.definition = def->get<std::string>();
    tpl.prefix = optional_text(record, "prefix", where);
    tpl.internal_reasoning = optional_text(record, "internal_reasoning", where);
    dim.templates.push_back(std::move(tpl));
  }
  return dim;
}

ActionSpace load_action_space(const json& manifest,
                              const std::map<std::string, json>& documents) {
  if (!manifest.is_object() || !manifest.contains("dimensions") ||
      !manifest["dimensions"].is_array()) {
    throw ParseError("manifest must contain a 'dimensions' array");
  }
  std::vector<Dimension> dims;
  for (const json& entry : manifest["dimensions"]) {
    if (!entry.contains("name") || !entry["name"].is_string()) {
      throw ParseError("manifest dimension entry without 'name'");
    }
    std::string name = entry["name"].get<std::string>();
    auto doc = documents.find(name);
    if (doc == documents.end()) {
      throw ParseError("no document for dimension '" + name + "'");
    }
    dims.push_back(parse_dimension(name, doc->second));
  }
  bool allow_finish = manifest.value("allow_finish", false);
  return ActionSpace(std::move(dims), allow_finish);
}

ActionSpace load_action_space(const std::filesystem::path& manifest_path) {
  json manifest = read_json_file(manifest_path);
  std::map<std::string, json> documents;
  if (manifest.contains("dimensions") && manifest["dimensions"].is_array()) {
    for (const json& entry : manifest["dimensions"]) {
      if (!entry.contains("name") || !entry.contains("path")) {
        throw ParseError(manifest_path.string() +
                         ": dimension entries need 'name' and 'path'");
      }
      std::filesystem::path doc_path = entry["path"].get<std::string>();
      if (doc_path.is_relative()) {
        doc_path = manifest_path.parent_path() / doc_path;
      }
      documents[entry["name"].get<std::string>()] = read_json_file(doc_path);
    }
  }
  return load_action_space(manifest, documents);
}

json action_space_to_json(const ActionSpace& space) {
  json dims = json::array();
  for (const Dimension& dim : space.dimensions()) {
    json templates = json::array();
    for (const ActionTemplate& t : dim.templates) {
      templates.push_back({
          {"name", t.name},
          {"definition", t.definition},
          {"prefix", t.prefix ? json(*t.prefix) : json(nullptr)},
          {"internal_reasoning",
           t.internal_reasoning ? json(*t.internal_reasoning) : json(nullptr)},
      });
    }
    dims.push_back({{"name", dim.name}, {"templates", templates}});
  }
  return {{"allow_finish", space.allow_finish()}, {"dimensions", dims}};
}

ActionSpace action_space_from_json(const json& doc) {
  if (!doc.contains("dimensions")) {
    throw ParseError("serialized action space lacks 'dimensions'");
  }
  std::vector<Dimension> dims;
  for (const json& d : doc["dimensions"]) {
    dims.push_back(
        parse_dimension(d.at("name").get<std::string>(), d.at("templates")));
  }
  return ActionSpace(std::move(dims), doc.value("allow_finish", false));
}

std::vector<ActionChoice> enumerate_choices(const ActionSpace& space,
                                            bool include_finish) {
  std::vector<ActionChoice> out;
  out.reserve(space.choice_count() + 1);
  for (std::uint64_t i = 0; i < space.choice_count(); ++i) {
    out.push_back(space.choice_at(i));
  }
  if (include_finish && space.allow_finish()) {
    out.push_back(ActionChoice::finish());
  }
  return out;
}

Intervention render_intervention(const ActionChoice& choice,
                                 const ActionSpace& space) {
  if (choice.is_finish) {
    throw UsageError("FINISH has no intervention; the generator handles it");
  }
  if (!space.is_valid(choice)) {
    throw ValidationError("choice not in action space: " + describe(choice));
  }
  Intervention out;
  std::string prefix_owner;
  for (const Dimension& dim : space.dimensions()) {
    const ActionTemplate& tpl =
        space.find(dim.name, choice.per_dimension.at(dim.name));
    if (tpl.prefix) {
      if (!prefix_owner.empty()) {
        throw ValidationError("choice " + describe(choice) +
                              " selects prefixes from both '" + prefix_owner +
                              "' and '" + dim.name + "'");
      }
      prefix_owner = dim.name;
      out.prefix_text = *tpl.prefix;
    }
    if (tpl.internal_reasoning) {
      std::string sentence = as_sentence(*tpl.internal_reasoning);
      if (!out.internal_reasoning_text.empty()) {
        out.internal_reasoning_text.push_back(' ');
      }
      out.internal_reasoning_text += sentence;
    }
  }
  return out;
}

json choice_to_json(const ActionChoice& choice) {
  if (choice.is_finish) return "FINISH";
  json j = json::object();
  for (const auto& [dim, name] : choice.per_dimension) j[dim] = name;
  return j;
}

ActionChoice choice_from_json(const json& j) {
  if (j.is_string() && j.get<std::string>() == "FINISH") {
    return ActionChoice::finish();
  }
  if (!j.is_object()) throw ParseError("action choice must be an object");
  ActionChoice choice;
  for (const auto& [dim, name] : j.items()) {
    if (!name.is_string()) throw ParseError("action name must be a string");
    choice.per_dimension.emplace(dim, name.get<std::string>());
  }
  return choice;
}

std::string describe(const ActionChoice& choice) {
  if (choice.is_finish) return "FINISH";
  std::ostringstream os;
  bool first = true;
  for (const auto& [dim, name] : choice.per_dimension) {
    if (!first) os << ", ";
    os << dim << '=' << name;
    first = false;
  }
  return os.str();
}

}  // namespace actree
