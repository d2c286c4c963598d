// Copyright 2026 The kwsnas Authors.
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

#include "kwsnas/genotype.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "kwsnas/dataset.hpp"
#include "kwsnas/error.hpp"

namespace kwsnas {

std::string CandidateSpec::label() const {
  if (is_skip()) return "skip";
  return "C" + std::to_string(kernel) + (se ? "SE" : "");
}

CandidateSpec CandidateSpec::from_label(std::string_view label) {
  if (label == "skip") return skip();
  std::string_view rest = label;
  if (rest.empty() || rest.front() != 'C') {
    throw ConfigError("unknown candidate label '" + std::string(label) + "'");
  }
  rest.remove_prefix(1);
  bool se = false;
  if (rest.size() > 2 && rest.substr(rest.size() - 2) == "SE") {
    se = true;
    rest.remove_suffix(2);
  }
  if (rest.size() != 1 || rest[0] < '0' || rest[0] > '9') {
    throw ConfigError("unknown candidate label '" + std::string(label) + "'");
  }
  CandidateSpec spec = tc(rest[0] - '0', se);
  spec.validate();
  return spec;
}

void CandidateSpec::validate() const {
  if (is_skip()) {
    if (kernel != 0 || se) throw ConfigError("skip candidate carries no kernel or SE");
    return;
  }
  if (std::find(std::begin(kAllowedKernels), std::end(kAllowedKernels), kernel) ==
      std::end(kAllowedKernels)) {
    throw ConfigError("kernel " + std::to_string(kernel) + " is not one of {3,5,7,9}");
  }
}

std::vector<CandidateSpec> default_candidate_set() {
  std::vector<CandidateSpec> out;
  for (bool se : {false, true}) {
    for (int k : kAllowedKernels) out.push_back(CandidateSpec::tc(k, se));
  }
  out.push_back(CandidateSpec::skip());
  return out;
}

int scale_channels(int base, double multiplier) {
  return static_cast<int>(std::floor(base * multiplier + 0.5));
}

SearchSpaceConfig SearchSpaceConfig::standard() {
  SearchSpaceConfig c;
  c.num_layers = 9;
  for (int base : {24, 24, 36, 36, 48, 48, 72, 72, 72}) {
    c.channels.push_back(scale_channels(base, 1.5));
  }
  c.strides = {2, 1, 2, 1, 2, 1, 2, 1, 1};
  c.stem_channels = scale_channels(16, 1.5);
  c.candidate_set = default_candidate_set();
  return c;
}

SearchSpaceConfig SearchSpaceConfig::desk_scale() {
  SearchSpaceConfig c = standard();
  c.channels = {8, 8, 12, 12, 16, 16, 24, 24, 24};
  c.stem_channels = 8;
  return c;
}

void SearchSpaceConfig::validate() const {
  if (num_layers < 1) throw ConfigError("space.num_layers must be >= 1");
  if (channels.size() != static_cast<std::size_t>(num_layers)) {
    throw ConfigError("space.channels has " + std::to_string(channels.size()) +
                      " entries, num_layers is " + std::to_string(num_layers));
  }
  if (strides.size() != static_cast<std::size_t>(num_layers)) {
    throw ConfigError("space.strides has " + std::to_string(strides.size()) +
                      " entries, num_layers is " + std::to_string(num_layers));
  }
  for (int c : channels) {
    if (c < 1) throw ConfigError("space.channels entries must be >= 1");
  }
  for (int s : strides) {
    if (s != 1 && s != 2) throw ConfigError("space.strides entries must be 1 or 2");
  }
  if (input_channels < 1 || stem_channels < 1) {
    throw ConfigError("space.input_channels and space.stem_channels must be >= 1");
  }
  if (num_classes < 2) throw ConfigError("space.num_classes must be >= 2");
  if (se_reduction < 1) throw ConfigError("space.se_reduction must be >= 1");
  if (candidate_set.empty()) throw ConfigError("space.candidate_set is empty");
  std::set<std::string> seen;
  for (const auto& c : candidate_set) {
    c.validate();
    if (!seen.insert(c.label()).second) {
      throw ConfigError("space.candidate_set lists " + c.label() + " twice");
    }
  }
  for (int l = 0; l < num_layers; ++l) {
    if (available_candidates(l).empty()) {
      throw ConfigError("layer " + std::to_string(l) +
                        " has no usable candidate (skip cannot change shape)");
    }
  }
}

int SearchSpaceConfig::in_channels(int layer) const {
  return layer == 0 ? stem_channels : channels.at(static_cast<std::size_t>(layer - 1));
}

bool SearchSpaceConfig::skip_allowed(int layer) const {
  return strides.at(static_cast<std::size_t>(layer)) == 1 &&
         in_channels(layer) == channels.at(static_cast<std::size_t>(layer));
}

std::vector<int> SearchSpaceConfig::available_candidates(int layer) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < candidate_set.size(); ++i) {
    if (candidate_set[i].is_skip() && !skip_allowed(layer)) continue;
    out.push_back(static_cast<int>(i));
  }
  return out;
}

std::string SearchSpaceConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(to_json(*this).dump())));
  return buf;
}

Json to_json(const SearchSpaceConfig& c) {
  Json cands = Json::array();
  for (const auto& s : c.candidate_set) cands.push_back(s.label());
  return Json{{"num_layers", c.num_layers},
              {"channels", c.channels},
              {"strides", c.strides},
              {"input_channels", c.input_channels},
              {"stem_channels", c.stem_channels},
              {"num_classes", c.num_classes},
              {"candidate_set", cands},
              {"se_reduction", c.se_reduction}};
}

SearchSpaceConfig space_from_json(const Json& j, const SearchSpaceConfig& base) {
  if (!j.is_object()) throw ConfigError("space must be an object");
  SearchSpaceConfig c = base;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "num_layers") c.num_layers = value.get<int>();
      else if (key == "channels") c.channels = value.get<std::vector<int>>();
      else if (key == "strides") c.strides = value.get<std::vector<int>>();
      else if (key == "input_channels") c.input_channels = value.get<int>();
      else if (key == "stem_channels") c.stem_channels = value.get<int>();
      else if (key == "num_classes") c.num_classes = value.get<int>();
      else if (key == "se_reduction") c.se_reduction = value.get<int>();
      else if (key == "candidate_set") {
        c.candidate_set.clear();
        for (const auto& l : value) c.candidate_set.push_back(CandidateSpec::from_label(l.get<std::string>()));
      } else {
        throw ConfigError("unknown key space." + key);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("space: ") + e.what());
  }
  c.validate();
  return c;
}

void validate_genotype(const Genotype& g, const SearchSpaceConfig& space) {
  if (g.layers.size() != static_cast<std::size_t>(space.num_layers)) {
    throw ConfigError("genotype has " + std::to_string(g.layers.size()) +
                      " layers, search space has " + std::to_string(space.num_layers));
  }
  for (int l = 0; l < space.num_layers; ++l) {
    const auto& entry = g.layers[static_cast<std::size_t>(l)];
    if (entry.empty()) throw ConfigError("genotype layer " + std::to_string(l) + " is empty");
    for (const auto& spec : entry) {
      spec.validate();
      if (spec.is_skip() && !space.skip_allowed(l)) {
        throw ConfigError("genotype layer " + std::to_string(l) +
                          " selects skip where the shape changes");
      }
    }
  }
}

namespace {

Json spec_json(const CandidateSpec& s) {
  if (s.is_skip()) return Json{{"kind", "skip"}};
  return Json{{"kind", "tc"}, {"kernel", s.kernel}, {"se", s.se}};
}

}  // namespace

std::string serialize_genotype(const Genotype& g, const SearchSpaceConfig& space) {
  std::ostringstream os;
  os << "{\n  \"layers\": [\n";
  for (std::size_t l = 0; l < g.layers.size(); ++l) {
    Json row = Json::array();
    for (const auto& s : g.layers[l]) row.push_back(spec_json(s));
    os << "    " << row.dump() << (l + 1 < g.layers.size() ? ",\n" : "\n");
  }
  os << "  ],\n  \"config_hash\": \"" << space.hash() << "\"\n}\n";
  return os.str();
}

GenotypeFile parse_genotype(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("genotype: ") + e.what(), e.byte);
  }
  GenotypeFile out;
  try {
    if (!j.is_object() || !j.contains("layers")) throw ParseError("genotype: missing \"layers\"");
    for (const auto& [key, value] : j.items()) {
      if (key != "layers" && key != "config_hash") {
        throw ParseError("genotype: unknown key \"" + key + "\"");
      }
    }
    for (const auto& row : j.at("layers")) {
      std::vector<CandidateSpec> entry;
      for (const auto& s : row) {
        const auto kind = s.at("kind").get<std::string>();
        if (kind == "skip") {
          entry.push_back(CandidateSpec::skip());
        } else if (kind == "tc") {
          entry.push_back(CandidateSpec::tc(s.at("kernel").get<int>(), s.value("se", false)));
        } else {
          throw ParseError("genotype: unknown kind \"" + kind + "\"");
        }
        entry.back().validate();
      }
      out.genotype.layers.push_back(std::move(entry));
    }
    out.config_hash = j.value("config_hash", "");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("genotype: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(std::string("genotype: ") + e.what());
  }
  return out;
}

std::string genotype_to_string(const Genotype& g) {
  std::string out;
  for (std::size_t l = 0; l < g.layers.size(); ++l) {
    if (l) out += ' ';
    for (std::size_t i = 0; i < g.layers[l].size(); ++i) {
      if (i) out += '+';
      out += g.layers[l][i].label();
    }
  }
  return out;
}

Genotype genotype_from_string(std::string_view text) {
  Genotype g;
  std::istringstream is{std::string(text)};
  std::string layer;
  while (is >> layer) {
    std::vector<CandidateSpec> entry;
    std::size_t start = 0;
    while (start <= layer.size()) {
      const auto plus = layer.find('+', start);
      const auto end = plus == std::string::npos ? layer.size() : plus;
      entry.push_back(CandidateSpec::from_label(std::string_view(layer).substr(start, end - start)));
      if (plus == std::string::npos) break;
      start = plus + 1;
    }
    g.layers.push_back(std::move(entry));
  }
  return g;
}

}  // namespace kwsnas
