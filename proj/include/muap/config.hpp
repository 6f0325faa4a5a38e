#pragma once

#include <map>
#include <string>

#include "muap/attack.hpp"
#include "muap/dataset.hpp"

namespace muap {

// `key = value` lines, '#' comments, dotted section keys. Duplicate keys
// are errors.
using KvConfig = std::map<std::string, std::string>;

KvConfig parse_kv_text(const std::string& text, const std::string& origin = "<string>");
KvConfig parse_kv_file(const std::string& path);

// Consumers reject unknown keys within their namespace.
SyntheticSpec synthetic_spec_from_config(const KvConfig& cfg);
AttackConfig attack_config_from_config(const KvConfig& cfg);

}  // namespace muap
