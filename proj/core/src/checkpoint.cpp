// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#include "rstca/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rstca/config.hpp"

namespace rstca {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr const char* kMagic = "rstca-checkpoint 1";

std::string shape_text(const Shape& s) {
  if (s.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out;
}

Shape parse_shape(const std::string& text) {
  Shape s;
  if (text == "-") return s;
  std::istringstream in(text);
  std::string part;
  while (std::getline(in, part, 'x')) s.push_back(std::stoll(part));
  return s;
}

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  const auto params = state.net.parameters();
  KeyValues header;
  write_model_config(state.net.config(), header);
  header.set("iteration", std::to_string(state.iteration));
  header.set("seed", std::to_string(state.seed));
  header.set("adam.t", std::to_string(state.adam.t));
  header.set("adam.beta1", exact(state.adam.config.beta1));
  header.set("adam.beta2", exact(state.adam.config.beta2));
  header.set("adam.eps", exact(state.adam.config.eps));
  header.set("adam.weight_decay", exact(state.adam.config.weight_decay));
  const bool moments = state.adam.m.size() == params.size();

  std::vector<std::pair<std::string, const Tensor*>> manifest;
  for (const auto& [name, t] : params) manifest.emplace_back(name, &t);
  if (moments) {
    for (std::size_t i = 0; i < params.size(); ++i) manifest.emplace_back("adam.m/" + params[i].first, &state.adam.m[i]);
    for (std::size_t i = 0; i < params.size(); ++i) manifest.emplace_back("adam.v/" + params[i].first, &state.adam.v[i]);
  }

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + tmp + "'");
    out << kMagic << '\n' << header.to_text();
    out << "manifest=" << manifest.size() << '\n';
    for (const auto& [name, t] : manifest) out << name << ' ' << shape_text(t->shape()) << '\n';
    out << "data\n";
    for (const auto& [name, t] : manifest) {
      auto d = t->data();
      out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size_bytes()));
    }
    if (!out) throw std::runtime_error("short write to checkpoint '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointFormatError("cannot open checkpoint '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw CheckpointFormatError("'" + path.string() + "' is not a checkpoint");
  }
  std::string header_text;
  std::int64_t count = -1;
  while (std::getline(in, line)) {
    if (line.rfind("manifest=", 0) == 0) {
      count = std::stoll(line.substr(9));
      break;
    }
    header_text += line + '\n';
  }
  if (count < 0) throw CheckpointFormatError("checkpoint '" + path.string() + "' has no manifest");
  const KeyValues header = parse_key_values(header_text);

  Checkpoint ck;
  ck.config = read_model_config(header);
  ck.iteration = header.get_int("iteration", 0);
  ck.seed = static_cast<std::uint64_t>(std::stoull(header.get_string("seed", "0")));
  ck.adam.t = header.get_int("adam.t", 0);
  ck.adam.config.beta1 = header.get_double("adam.beta1", 0.9);
  ck.adam.config.beta2 = header.get_double("adam.beta2", 0.999);
  ck.adam.config.eps = header.get_double("adam.eps", 1e-8);
  ck.adam.config.weight_decay = header.get_double("adam.weight_decay", 0.0);

  NamedTensors entries;
  for (std::int64_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw CheckpointFormatError("truncated manifest in '" + path.string() + "'");
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw CheckpointFormatError("bad manifest line '" + line + "'");
    entries.emplace_back(line.substr(0, sp), Tensor(parse_shape(line.substr(sp + 1))));
  }
  if (!std::getline(in, line) || line != "data") {
    throw CheckpointFormatError("missing data section in '" + path.string() + "'");
  }
  for (auto& [name, t] : entries) {
    auto d = t.mutable_data();
    in.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(d.size_bytes()));
    if (!in) throw CheckpointFormatError("truncated data for '" + name + "' in '" + path.string() + "'");
  }
  for (auto& [name, t] : entries) {
    if (name.rfind("adam.m/", 0) == 0) {
      ck.adam.m.push_back(t);
    } else if (name.rfind("adam.v/", 0) == 0) {
      ck.adam.v.push_back(t);
    } else {
      t.set_requires_grad(true);
      ck.params.emplace_back(name, t);
    }
  }
  return ck;
}

void load_parameters(RstcaNet& net, const NamedTensors& params) {
  const auto target = net.parameters();
  for (std::size_t i = 0; i < target.size(); ++i) {
    const auto& [name, dst] = target[i];
    if (i >= params.size()) throw CheckpointMismatch("checkpoint is missing parameter '" + name + "'");
    const auto& [src_name, src] = params[i];
    if (src_name != name) {
      throw CheckpointMismatch("parameter '" + name + "' expected, checkpoint has '" + src_name + "'");
    }
    if (src.shape() != dst.shape()) {
      throw CheckpointMismatch("parameter '" + name + "' has shape " + to_string(dst.shape()) +
                               ", checkpoint has " + to_string(src.shape()));
    }
  }
  if (params.size() > target.size()) {
    throw CheckpointMismatch("checkpoint has unexpected parameter '" + params[target.size()].first + "'");
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    Tensor dst = target[i].second;
    auto s = params[i].second.data();
    std::copy(s.begin(), s.end(), dst.mutable_data().begin());
  }
}

TrainState load_train_state(const std::filesystem::path& path) {
  Checkpoint ck = read_checkpoint(path);
  TrainState s = TrainState::init(ck.config, ck.seed, ck.adam.config);
  load_parameters(s.net, ck.params);
  if (ck.adam.m.size() == ck.params.size() && ck.adam.v.size() == ck.params.size()) {
    s.adam.m = ck.adam.m;
    s.adam.v = ck.adam.v;
  }
  s.adam.t = ck.adam.t;
  s.iteration = ck.iteration;
  return s;
}

}  // namespace rstca
