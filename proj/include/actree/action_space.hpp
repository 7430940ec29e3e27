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

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "actree/common.hpp"
#include "json.hpp"

namespace actree {

// A named textual intervention. At least one of prefix / internal_reasoning
// is set; the pair is injected into the generator's assistant prefill.
struct ActionTemplate {
  std::string name;
  std::string definition;
  std::optional<std::string> prefix;
  std::optional<std::string> internal_reasoning;

  bool operator==(const ActionTemplate&) const = default;
};

struct Dimension {
  std::string name;
  std::vector<ActionTemplate> templates;

  bool operator==(const Dimension&) const = default;
};

// One action: a template name per dimension, or the FINISH sentinel.
struct ActionChoice {
  std::map<std::string, std::string> per_dimension;
  bool is_finish = false;

  static ActionChoice finish() { return ActionChoice{{}, true}; }
  bool operator==(const ActionChoice&) const = default;
  bool operator<(const ActionChoice& o) const {
    if (is_finish != o.is_finish) return !is_finish;
    return per_dimension < o.per_dimension;
  }
};

struct Intervention {
  std::string prefix_text;
  std::string internal_reasoning_text;

  bool operator==(const Intervention&) const = default;
};

// Multi-dimensional registry of action templates. Immutable after
// construction; choices are addressable either by ActionChoice or by a flat
// mixed-radix index (dimension 0 most significant), which is what the
// trajectory enumerator streams over.
class ActionSpace {
 public:
  ActionSpace(std::vector<Dimension> dimensions, bool allow_finish);

  const std::vector<Dimension>& dimensions() const { return dimensions_; }
  bool allow_finish() const { return allow_finish_; }
  std::size_t dimension_count() const { return dimensions_.size(); }

  // Product of dimension sizes (FINISH excluded).
  std::uint64_t choice_count() const { return choice_count_; }

  // Index of `dimension` in dimension order; throws ValidationError if absent.
  std::size_t dimension_index(const std::string& dimension) const;
  // Index of a template within its dimension; throws ValidationError.
  std::size_t template_index(std::size_t dimension,
                             const std::string& name) const;
  const ActionTemplate& find(const std::string& dimension,
                             const std::string& name) const;

  // Flat index <-> choice. Throws ValidationError for FINISH or invalid names.
  std::uint64_t index_of(const ActionChoice& choice) const;
  ActionChoice choice_at(std::uint64_t index) const;
  // Per-dimension template indices of a flat index.
  std::vector<std::size_t> digits_of(std::uint64_t index) const;

  // True when the choice names exactly one existing template per dimension.
  bool is_valid(const ActionChoice& choice) const;

  bool operator==(const ActionSpace& o) const {
    return dimensions_ == o.dimensions_ && allow_finish_ == o.allow_finish_;
  }

 private:
  std::vector<Dimension> dimensions_;
  bool allow_finish_;
  std::uint64_t choice_count_ = 1;
  std::map<std::string, std::size_t> dim_index_;
  std::vector<std::map<std::string, std::size_t>> tpl_index_;
};

// Loads a manifest: {"dimensions": [{"name", "path"}], "allow_finish": bool}.
// Dimension document paths resolve relative to the manifest's directory.
ActionSpace load_action_space(const std::filesystem::path& manifest_path);

// Builds a space from in-memory documents: a manifest object plus one
// template array per dimension (keyed by dimension name).
ActionSpace load_action_space(
    const nlohmann::json& manifest,
    const std::map<std::string, nlohmann::json>& documents);

// Parses one dimension document (array of template records).
Dimension parse_dimension(const std::string& name, const nlohmann::json& doc);

// Self-contained serialization: {"allow_finish", "dimensions": [{"name",
// "templates": [...]}]}. Inverse of action_space_from_json.
nlohmann::json action_space_to_json(const ActionSpace& space);
ActionSpace action_space_from_json(const nlohmann::json& doc);

// Deterministic lexicographic enumeration over dimension-order tuples,
// FINISH appended last when requested and allowed.
std::vector<ActionChoice> enumerate_choices(const ActionSpace& space,
                                            bool include_finish);

// Renders the textual intervention for a non-FINISH choice.
Intervention render_intervention(const ActionChoice& choice,
                                 const ActionSpace& space);

nlohmann::json choice_to_json(const ActionChoice& choice);
ActionChoice choice_from_json(const nlohmann::json& j);

// "dim=name, dim=name" or "FINISH"; for logs and diagnostics.
std::string describe(const ActionChoice& choice);

}  // namespace actree
