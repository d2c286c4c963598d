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

#include "kwsnas/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "kwsnas/error.hpp"

namespace kwsnas {

namespace {

constexpr char kMagic[8] = {'K', 'W', 'S', 'N', 'A', 'S', 'C', 'K'};

void write_file(const std::string& path, Json header, const std::vector<NamedTensor>& tensors) {
  Json list = Json::array();
  for (const auto& t : tensors) list.push_back(Json{{"name", t.name}, {"shape", t.tensor.shape()}});
  header["real_bytes"] = sizeof(Real);
  header["tensors"] = list;
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path);
  os.write(kMagic, sizeof(kMagic));
  std::uint64_t len = text.size();
  unsigned char len_bytes[8];
  for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<unsigned char>(len >> (8 * i));
  os.write(reinterpret_cast<const char*>(len_bytes), 8);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : tensors) {
    const auto v = t.tensor.values();
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(Real)));
  }
  if (!os) throw DataError("write failed: " + path);
}

std::vector<NamedTensor> state_of(const Model& m, const std::vector<NamedTensor>& extra = {}) {
  auto out = m.named_parameters();
  for (auto& b : m.named_buffers()) out.push_back(b);
  for (const auto& e : extra) out.push_back(e);
  return out;
}

std::vector<NamedTensor> alpha_tensors(const Supernet& net) {
  std::vector<NamedTensor> out;
  for (std::size_t l = 0; l < net.alpha().num_layers(); ++l) {
    out.push_back({"alpha." + std::to_string(l), net.alpha().row(l)});
  }
  return out;
}

void copy_into(const std::vector<NamedTensor>& dst, const std::vector<NamedTensor>& src) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& t : src) by_name[t.name] = &t.tensor;
  if (by_name.size() != dst.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(by_name.size()) +
                      " tensors, the model expects " + std::to_string(dst.size()));
  }
  for (const auto& t : dst) {
    const auto it = by_name.find(t.name);
    if (it == by_name.end()) throw ConfigError("checkpoint lacks tensor " + t.name);
    if (it->second->shape() != t.tensor.shape()) {
      throw ConfigError("checkpoint tensor " + t.name + " has shape " +
                        shape_to_string(it->second->shape()) + ", expected " +
                        shape_to_string(t.tensor.shape()));
    }
    Tensor(t.tensor).copy_values_from(*it->second);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const Network& net) {
  Json h{{"kind", "network"},
         {"genotype", genotype_to_string(net.genotype())},
         {"space", to_json(net.space())},
         {"config_hash", net.space().hash()}};
  write_file(path, std::move(h), state_of(net));
}

void save_checkpoint(const std::string& path, const Supernet& net) {
  Json h{{"kind", "supernet"},
         {"genotype", ""},
         {"space", to_json(net.space())},
         {"config_hash", net.space().hash()},
         {"search", to_json(net.search_config())}};
  write_file(path, std::move(h), state_of(net, alpha_tensors(net)));
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  const std::vector<char> bytes{std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw ParseError("checkpoint: bad magic", 0);
  }
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= std::uint64_t{static_cast<unsigned char>(bytes[8 + static_cast<std::size_t>(i)])} << (8 * i);
  if (len > bytes.size() - 16) throw ParseError("checkpoint: header runs past end of file", 8);
  Json h;
  try {
    h = Json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what(), 16 + e.byte);
  }
  Checkpoint ck;
  std::size_t pos = 16 + len;
  try {
    if (h.at("real_bytes").get<std::size_t>() != sizeof(Real)) {
      throw ParseError("checkpoint: stored with a different floating-point width");
    }
    ck.kind = h.at("kind").get<std::string>();
    const auto g = h.at("genotype").get<std::string>();
    if (!g.empty()) ck.genotype = genotype_from_string(g);
    ck.space = space_from_json(h.at("space"));
    ck.config_hash = h.at("config_hash").get<std::string>();
    if (h.contains("search")) ck.search = h.at("search");
    for (const auto& t : h.at("tensors")) {
      const Shape shape = t.at("shape").get<Shape>();
      const std::size_t n = shape_numel(shape);
      if (n * sizeof(Real) > bytes.size() - pos) throw ParseError("checkpoint: truncated payload", pos);
      std::vector<Real> v(n);
      std::memcpy(v.data(), bytes.data() + pos, n * sizeof(Real));
      pos += n * sizeof(Real);
      ck.tensors.push_back({t.at("name").get<std::string>(), Tensor::from_values(shape, std::move(v))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what(), 16);
  }
  if (pos != bytes.size()) throw ParseError("checkpoint: trailing bytes", pos);
  if (ck.config_hash != ck.space.hash()) {
    throw ParseError("checkpoint: config hash does not match the stored space");
  }
  return ck;
}

std::unique_ptr<Network> load_network(const std::string& path) {
  const Checkpoint ck = read_checkpoint(path);
  if (ck.kind != "network") throw ConfigError(path + " is a " + ck.kind + " checkpoint, not a network");
  auto net = build_network(ck.genotype, ck.space, 0);
  copy_into(state_of(*net), ck.tensors);
  return net;
}

std::unique_ptr<Supernet> load_supernet(const std::string& path) {
  const Checkpoint ck = read_checkpoint(path);
  if (ck.kind != "supernet") throw ConfigError(path + " is a " + ck.kind + " checkpoint, not a supernet");
  auto net = std::make_unique<Supernet>(ck.space, search_from_json(ck.search));
  copy_into(state_of(*net, alpha_tensors(*net)), ck.tensors);
  return net;
}

}  // namespace kwsnas
