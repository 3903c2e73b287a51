#pragma once

#include <map>
#include <string>
#include <vector>

namespace slotmoco {

// Flat `key = value` text files: one pair per line, '#' starts a comment,
// blank lines ignored. Used for generator configs, run configs, and the
// resolved-config echo.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text);
ConfigMap parse_config_file(const std::string& path);
std::string write_config_text(const ConfigMap& cfg);

std::string trim(const std::string& s);
std::vector<std::string> split_list(const std::string& value, char sep);
std::vector<std::string> split_words(const std::string& value);

}  // namespace slotmoco
