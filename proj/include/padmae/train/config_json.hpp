// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>
#include <set>
#include <stdexcept>
#include <string>

#include "padmae/preprocess/crop.hpp"
#include "padmae/preprocess/segment.hpp"
#include "padmae/train/optimizer.hpp"
#include "padmae/train/schedule.hpp"
#include "padmae/vit/config.hpp"

namespace padmae::train {

/// Bad configuration value or unknown key; the message carries the key path.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Strict reader over one JSON object. Keys not consumed by get()/child()
/// are reported by finish() as unknown.
class JsonFields {
 public:
  JsonFields(const nlohmann::json& object, std::string path);

  template <typename T>
  bool get(const char* key, T& out) {
    const nlohmann::json* v = take(key);
    if (!v) return false;
    try {
      out = v->get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("bad value for '" + key_path(key) + "': " + v->dump());
    }
    return true;
  }

  /// Enum-like field parsed through `parse`; parse errors are rethrown with the key path.
  template <typename E, typename Parse>
  bool get_enum(const char* key, E& out, Parse parse) {
    std::string s;
    if (!get(key, s)) return false;
    try {
      out = parse(s);
    } catch (const std::exception& e) {
      throw ConfigError("bad value for '" + key_path(key) + "': " + e.what());
    }
    return true;
  }

  const nlohmann::json* child(const char* key);
  std::string key_path(const std::string& key) const;
  const std::string& path() const { return path_; }
  void finish() const;

 private:
  const nlohmann::json* take(const char* key);

  const nlohmann::json& object_;
  std::string path_;
  std::set<std::string> used_;
};

nlohmann::json to_json(const adapter::AdapterConfig& c);
nlohmann::json to_json(const vit::ViTConfig& c);
nlohmann::json to_json(const OptimizerConfig& c);
nlohmann::json to_json(const ScheduleConfig& c);
nlohmann::json to_json(const preprocess::CropConfig& c);
nlohmann::json to_json(const preprocess::SelectiveSearchParams& c);

/// Overwrite the fields present in `j`; unknown keys raise ConfigError.
void update_from_json(adapter::AdapterConfig& c, const nlohmann::json& j, const std::string& path);
void update_from_json(vit::ViTConfig& c, const nlohmann::json& j, const std::string& path);
void update_from_json(OptimizerConfig& c, const nlohmann::json& j, const std::string& path);
void update_from_json(ScheduleConfig& c, const nlohmann::json& j, const std::string& path);
void update_from_json(preprocess::CropConfig& c, const nlohmann::json& j, const std::string& path);
void update_from_json(preprocess::SelectiveSearchParams& c, const nlohmann::json& j,
                      const std::string& path);

vit::ViTConfig vit_config_from_json(const nlohmann::json& j);

}  // namespace padmae::train
