#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "calabi/flow.hpp"

namespace calabi {

struct RunConfig {
  FlowConfig flow;
  std::optional<double> mu;
  std::optional<double> nu;
  std::string out_dir = "out";
  bool deterministic = true;
};

/// Default run: headline class with geometric checkpoints k = 1..8.
RunConfig default_run_config();

/// `key = value` lines, `#` comments. Unknown keys and bad values throw
/// parameter.
void apply_config_text(RunConfig& c, const std::string& text);
void apply_config_value(RunConfig& c, const std::string& key, const std::string& value);
RunConfig load_config(const std::filesystem::path& path, RunConfig base = default_run_config());

/// Canonical `key=value` lines in a fixed order, doubles with 17 digits.
std::string canonical_config(const RunConfig& c);
std::map<std::string, std::string> config_map(const RunConfig& c);

std::uint64_t fnv1a(const std::string& bytes);
/// 16 hex digits of fnv1a(canonical_config(c)).
std::string config_hash(const RunConfig& c);

/// Shortest round-trip decimal form.
std::string format_number(double x);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace calabi
