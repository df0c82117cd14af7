// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rstca/model.hpp"

namespace rstca {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Ordered key=value pairs. Later assignments of a key replace earlier ones.
class KeyValues {
 public:
  void set(const std::string& key, std::string value);
  std::optional<std::string> get(const std::string& key) const;
  bool contains(const std::string& key) const { return get(key).has_value(); }
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;

  /// "key=value" lines in insertion order.
  std::string to_text() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Parses UTF-8 key=value lines; blank lines and `#` comments are ignored.
/// Throws ConfigError with the line number on malformed input.
KeyValues parse_key_values(const std::string& text);
KeyValues read_config_file(const std::filesystem::path& path);

/// ModelConfig fields as keys channels, blocks, heads, stls, window, ca_mode,
/// short_skip, conv_in_block, conv_in_dfe, reduction, unshuffle, mlp_ratio.
void write_model_config(const ModelConfig& cfg, KeyValues& out);
/// Overrides fields of `base` present in `kv`.
ModelConfig read_model_config(const KeyValues& kv, ModelConfig base = {});

}  // namespace rstca
