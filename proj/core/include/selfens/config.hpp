#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "selfens/trainer.hpp"

namespace selfens {

// Run configuration files are flat `key = value` lines grouped under
// `[section]` headers; `#` starts a comment. Every key has a command-line
// flag of the same meaning (see config_keys()).

struct ConfigKey {
  std::string_view section;
  std::string_view name;
  std::string_view flag;  // without the leading "--"
  std::string_view help;

  std::string qualified() const { return std::string(section) + "." + std::string(name); }
};

std::span<const ConfigKey> config_keys();

/// Finds a key by qualified name ("schedule.w_max"), bare name ("w_max") or
/// flag ("w-max"). Throws ConfigError for unknown keys.
const ConfigKey& find_config_key(std::string_view name);

/// Sets one key from its text form. Throws ConfigError naming the key.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& config, std::string_view key);

/// Applies the text of a config file on top of `config` (not validated).
void apply_config_text(RunConfig& config, std::string_view text, std::string_view origin = "config");

using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

/// Defaults, then the file (if any), then the overrides in order; validated.
RunConfig parse_config(const std::optional<std::filesystem::path>& file, const ConfigOverrides& overrides = {});
RunConfig parse_config_text(std::string_view text, const ConfigOverrides& overrides = {});

/// Every key, grouped by section; parse_config_text(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& config);
void save_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace selfens
