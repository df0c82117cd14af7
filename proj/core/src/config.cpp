// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#include "rstca/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace rstca {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

void KeyValues::set(const std::string& key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(key, std::move(value));
}

std::optional<std::string> KeyValues::get(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::int64_t KeyValues::get_int(const std::string& key, std::int64_t fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::int64_t out = 0;
  const auto* end = v->data() + v->size();
  const auto [ptr, ec] = std::from_chars(v->data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("'" + key + "' expects an integer, got '" + *v + "'");
  return out;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double out = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + *v + "'");
  }
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "off") return false;
  throw ConfigError("'" + key + "' expects true/false, got '" + *v + "'");
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

std::string KeyValues::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value, got '" + body + "'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    kv.set(key, trim(std::string_view(body).substr(eq + 1)));
  }
  return kv;
}

KeyValues read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

void write_model_config(const ModelConfig& cfg, KeyValues& out) {
  out.set("channels", std::to_string(cfg.channels));
  out.set("blocks", std::to_string(cfg.blocks));
  out.set("heads", std::to_string(cfg.heads));
  out.set("stls", std::to_string(cfg.stls));
  out.set("window", std::to_string(cfg.window));
  out.set("ca_mode", std::string(to_string(cfg.ca_mode)));
  out.set("short_skip", cfg.short_skip ? "true" : "false");
  out.set("conv_in_block", std::to_string(cfg.conv_in_block));
  out.set("conv_in_dfe", std::to_string(cfg.conv_in_dfe));
  out.set("reduction", std::to_string(cfg.reduction));
  out.set("unshuffle", std::to_string(cfg.unshuffle));
  out.set("mlp_ratio", std::to_string(cfg.mlp_ratio));
}

ModelConfig read_model_config(const KeyValues& kv, ModelConfig base) {
  base.channels = kv.get_int("channels", base.channels);
  base.blocks = kv.get_int("blocks", base.blocks);
  base.heads = kv.get_int("heads", base.heads);
  base.stls = kv.get_int("stls", base.stls);
  base.window = kv.get_int("window", base.window);
  if (auto m = kv.get("ca_mode")) {
    try {
      base.ca_mode = parse_ca_mode(*m);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  base.short_skip = kv.get_bool("short_skip", base.short_skip);
  base.conv_in_block = kv.get_int("conv_in_block", base.conv_in_block);
  base.conv_in_dfe = kv.get_int("conv_in_dfe", base.conv_in_dfe);
  base.reduction = kv.get_int("reduction", base.reduction);
  base.unshuffle = kv.get_int("unshuffle", base.unshuffle);
  base.mlp_ratio = kv.get_int("mlp_ratio", base.mlp_ratio);
  return base;
}

}  // namespace rstca
