#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

// Flat key=value text used by config files, checkpoint headers and manifests.
namespace ucds::kv {

using Entries = std::vector<std::pair<std::string, std::string>>;

// Skips blank and '#' lines; throws ConfigError on a line without '=' or a
// repeated key.
Entries parse(const std::string& text);
std::string render(const Entries& entries);

// Typed conversions; failures throw ConfigError carrying `key`.
long long to_int(const std::string& key, const std::string& value);
std::uint64_t to_uint(const std::string& key, const std::string& value);
double to_real(const std::string& key, const std::string& value);
std::vector<int> to_int_list(const std::string& key, const std::string& value);

// Shortest text that parses back to the same double.
std::string format_real(double value);
std::string format_int_list(const std::vector<int>& values);

}  // namespace ucds::kv
