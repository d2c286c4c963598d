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

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "kwsnas/blocks.hpp"
#include "kwsnas/genotype.hpp"
#include "kwsnas/supernet.hpp"

namespace kwsnas {

/// On-disk layout:
///   8 bytes   magic "KWSNASCK"
///   8 bytes   little-endian header length H
///   H bytes   JSON header: kind, genotype, space, config_hash, real_bytes,
///             tensors [{name, shape}], and for supernets the search config
///   payload   every tensor's values as raw Real, in header order
struct Checkpoint {
  std::string kind;  // "network" or "supernet"
  Genotype genotype;
  SearchSpaceConfig space;
  std::string config_hash;
  Json search;  // supernet only
  std::vector<NamedTensor> tensors;
};

void save_checkpoint(const std::string& path, const Network& net);
void save_checkpoint(const std::string& path, const Supernet& net);
/// Throws ParseError on a corrupt file and DataError when it cannot be read.
Checkpoint read_checkpoint(const std::string& path);

/// Rebuilds the network and overwrites every parameter and buffer from the
/// file. Throws ConfigError when names or shapes disagree.
std::unique_ptr<Network> load_network(const std::string& path);
std::unique_ptr<Supernet> load_supernet(const std::string& path);

}  // namespace kwsnas
