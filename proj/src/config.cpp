#include "csab/config.hpp"

#include <fstream>
#include <sstream>

namespace csab {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &pos);
  } catch (...) {
    pos = 0;
  }
  if (pos != v.size())
    throw UsageError("config: key '" + key + "' expects a number, got '" + v +
                     "'");
  return d;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long u = 0;
  try {
    u = std::stoull(v, &pos);
  } catch (...) {
    pos = 0;
  }
  if (pos != v.size())
    throw UsageError("config: key '" + key +
                     "' expects a non-negative integer, got '" + v + "'");
  return u;
}

}  // namespace

std::map<std::string, std::string> parse_config_text(
    const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(lineno) +
                       ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw UsageError("config line " + std::to_string(lineno) +
                       ": empty key or value");
    if (kv.count(key))
      throw UsageError("config line " + std::to_string(lineno) +
                       ": duplicate key '" + key + "'");
    kv[key] = value;
  }
  return kv;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void apply_config(const std::map<std::string, std::string>& kv,
                  TrainConfig& cfg) {
  for (const auto& [key, value] : kv) {
    if (key == "epochs")
      cfg.epochs = static_cast<std::size_t>(to_u64(key, value));
    else if (key == "batch_size")
      cfg.batch_size = static_cast<std::size_t>(to_u64(key, value));
    else if (key == "learning_rate")
      cfg.learning_rate = to_double(key, value);
    else if (key == "momentum")
      cfg.momentum = to_double(key, value);
    else if (key == "seed")
      cfg.seed = to_u64(key, value);
    else if (key == "val_fraction")
      cfg.val_fraction = to_double(key, value);
    else if (key == "rotation_deg")
      cfg.augment.rotation_deg = to_double(key, value);
    else if (key == "width_shift_frac")
      cfg.augment.width_shift_frac = to_double(key, value);
    else if (key == "scale_lo")
      cfg.augment.scale_lo = to_double(key, value);
    else if (key == "scale_hi")
      cfg.augment.scale_hi = to_double(key, value);
    else if (key == "hflip_prob")
      cfg.augment.hflip_prob = to_double(key, value);
    else if (key == "contrast_lo")
      cfg.augment.contrast_lo = to_double(key, value);
    else if (key == "contrast_hi")
      cfg.augment.contrast_hi = to_double(key, value);
    else if (key == "brightness_lo")
      cfg.augment.brightness_lo = to_double(key, value);
    else if (key == "brightness_hi")
      cfg.augment.brightness_hi = to_double(key, value);
    else if (key == "augment_seed")
      cfg.augment.seed = to_u64(key, value);
    else
      throw UsageError("config: unknown key '" + key + "'");
  }
}

}  // namespace csab
