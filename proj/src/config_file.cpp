#include "slotmoco/config_file.hpp"

#include <fstream>
#include <sstream>

#include "slotmoco/common.hpp"

namespace slotmoco {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& value, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(value);
  while (std::getline(ss, item, sep)) {
    std::string t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::vector<std::string> split_words(const std::string& value) {
  std::vector<std::string> out;
  std::istringstream ss(value);
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap cfg;
  std::istringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw DataError("config line " + std::to_string(lineno) + ": expected key = value, got \"" + t + "\"");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw DataError("config line " + std::to_string(lineno) + ": empty key");
    }
    if (cfg.count(key)) {
      throw DataError("config line " + std::to_string(lineno) + ": duplicate key \"" + key + "\"");
    }
    cfg[key] = value;
  }
  return cfg;
}

ConfigMap parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string write_config_text(const ConfigMap& cfg) {
  std::ostringstream out;
  for (const auto& [key, value] : cfg) {
    out << key << " = " << value << "\n";
  }
  return out.str();
}

}  // namespace slotmoco
