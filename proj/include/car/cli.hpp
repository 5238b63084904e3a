#pragma once

// The `car` command line: subcommands record, generate, verify, train,
// eval-policies, render and demo over one flat key=value settings table.
//
// Settings resolve as flags > environment (CAR_<KEY>, dots as underscores)
// > config file > built-in defaults. The config file holds `key = value`
// lines; `#` starts a comment. Unknown keys are usage errors.
//
// Exit codes: 0 success, 2 verification or separation failure, 3 missing or
// unreadable inputs, 64 usage error.

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "car/error.hpp"

namespace car::cli {

enum ExitCode : int { kExitOk = 0, kExitFailed = 2, kExitMissingInput = 3, kExitUsage = 64 };

class UsageError : public Error {
 public:
  using Error::Error;
};

struct SettingInfo {
  std::string_view key;
  std::string_view default_value;
  std::string_view help;
};

std::span<const SettingInfo> setting_table();
const SettingInfo* find_setting(std::string_view key);

// "vlm.model" -> "CAR_VLM_MODEL"
std::string env_var_name(std::string_view key);

// Throws UsageError on a malformed line or an unknown key.
std::map<std::string, std::string> parse_config_text(std::string_view text);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

class Settings {
 public:
  const std::string& get(std::string_view key) const;
  int get_int(std::string_view key) const;
  std::int64_t get_int64(std::string_view key) const;
  std::uint64_t get_u64(std::string_view key) const;
  double get_double(std::string_view key) const;
  // "default", "file", "env" or "flag".
  const std::string& origin(std::string_view key) const;

  void set(const std::string& key, std::string value, std::string origin);
  // Every key as `key = value  # origin`, sorted; reloadable as a config file.
  std::string echo() const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> origins_;
};

// Flags are (key, value) pairs already parsed from the command line.
Settings resolve_settings(const std::optional<std::filesystem::path>& config_file, const EnvLookup& env,
                          const std::vector<std::pair<std::string, std::string>>& flags);

// Full command-line entry; argv[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const EnvLookup& env = process_env());

}  // namespace car::cli
