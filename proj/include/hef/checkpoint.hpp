/* Copyright 2026 The hefriendly Authors.
 * This program is Licensed under the Apache License, Version 2.0
 * (the "License"); you may not use this file except in compliance
 * with the License. You may obtain a copy of the License at
 *   http://www.apache.org/licenses/LICENSE-2.0
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. See accompanying LICENSE file.
 */
#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "hef/errors.hpp"
#include "hef/graph.hpp"
#include "hef/text.hpp"

namespace hef {

// Checkpoint format, version 1 (plain text, one record per line):
//
//   hef-checkpoint 1
//   model <L>
//   <L lines of canonical model config, coefficients omitted>
//   tensors <T>
//   <name> <rank> <dim>... <value>...        (values as C99 hex floats)
//   end
//
// Tensors appear in graph order. Unmaterialized weights are omitted. Hex
// floats make save -> load -> save byte-identical.

inline constexpr const char* kCheckpointMagic = "hef-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline std::string serialize_checkpoint(const ModelGraph& g) {
  std::ostringstream os;
  const std::string model = to_model_config(g, false);
  std::size_t lines = 0;
  for (char ch : model) lines += ch == '\n';
  os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  os << "model " << lines << '\n' << model;

  auto& mg = const_cast<ModelGraph&>(g);  // read-only walk over named tensors
  std::vector<std::pair<std::string, Tensor>> extra;
  for (const auto& n : g.nodes())
    if (const auto* c = n.as<Conv2dLayer>(); c && !c->pad_fill.empty())
      extra.emplace_back(n.name + ".pad_fill", Tensor({c->pad_fill.size()}, c->pad_fill));
  std::vector<std::pair<std::string, const Tensor*>> all;
  for (auto& p : mg.state())
    if (p.tensor->materialized()) all.emplace_back(p.name, p.tensor);
  for (auto& [name, t] : extra) all.emplace_back(name, &t);

  os << "tensors " << all.size() << '\n';
  for (const auto& [name, t] : all) {
    os << name << ' ' << t->rank();
    for (auto d : t->shape()) os << ' ' << d;
    for (double v : t->data()) os << ' ' << text::hexfloat(v);
    os << '\n';
  }
  os << "end\n";
  return os.str();
}

inline ModelGraph parse_checkpoint(const std::string& src) {
  std::istringstream is(src);
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != kCheckpointMagic) throw DataError("not a checkpoint (bad magic)");
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  std::string tag;
  std::size_t lines = 0;
  is >> tag >> lines;
  if (tag != "model") throw DataError("checkpoint: expected 'model' section");
  std::string line;
  std::getline(is, line);
  std::string model;
  for (std::size_t i = 0; i < lines; ++i) {
    if (!std::getline(is, line)) throw DataError("checkpoint: truncated model section");
    model += line + '\n';
  }
  ModelGraph g = parse_model_config(model);

  std::map<std::string, Tensor*> by_name;
  for (auto& p : g.state()) by_name[p.name] = p.tensor;
  std::map<std::string, Conv2dLayer*> pad_targets;
  for (auto& n : g.nodes())
    if (auto* c = n.as<Conv2dLayer>()) pad_targets[n.name + ".pad_fill"] = c;

  std::size_t count = 0;
  is >> tag >> count;
  if (tag != "tensors") throw DataError("checkpoint: expected 'tensors' section");
  for (std::size_t i = 0; i < count; ++i) {
    std::string name;
    std::size_t rank = 0;
    if (!(is >> name >> rank)) throw DataError("checkpoint: truncated tensor section");
    Shape shape(rank);
    for (auto& d : shape)
      if (!(is >> d)) throw DataError("checkpoint: bad shape for " + name);
    std::vector<double> data(shape_size(shape));
    for (auto& v : data) {
      std::string tok;
      if (!(is >> tok)) throw DataError("checkpoint: truncated values for " + name);
      char* end = nullptr;
      v = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size()) throw DataError("checkpoint: bad value in " + name);
    }
    if (auto it = by_name.find(name); it != by_name.end()) {
      *it->second = Tensor(std::move(shape), std::move(data));
    } else if (auto pt = pad_targets.find(name); pt != pad_targets.end()) {
      pt->second->pad_fill = std::move(data);
    } else {
      throw DataError("checkpoint: unknown tensor '" + name + "'");
    }
  }
  is >> tag;
  if (tag != "end") throw DataError("checkpoint: missing 'end' marker");
  g.resolve();
  return g;
}

inline void save_checkpoint(const ModelGraph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint", path);
  out << serialize_checkpoint(g);
  if (!out) throw IoError("failed writing checkpoint", path);
}

inline ModelGraph load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint", path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

/// True if the file starts with the checkpoint magic.
inline bool is_checkpoint_file(const std::string& path) {
  std::ifstream in(path);
  std::string magic;
  in >> magic;
  return magic == kCheckpointMagic;
}

}  // namespace hef
