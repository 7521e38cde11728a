#include "feed/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "feed/errors.hpp"

namespace feed {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const std::vector<std::string>& Config::valid_keys() {
  static const std::vector<std::string> keys = {
      // run
      "config", "run_id", "out_dir", "seed", "arch", "epochs", "batch_size", "lr", "lr_schedule",
      "momentum", "weight_decay", "augment", "parallel_teachers", "stacks",
      // data
      "dataset", "train_path", "test_path", "train_labels", "test_labels", "num_classes",
      "samples_per_class", "test_samples_per_class", "image_size", "noise_sigma", "data_seed",
      "normalize", "split",
      // losses
      "method", "teachers", "alpha", "temperature", "beta", "eps", "normalize_scope",
      "kd_ensemble", "ntl_style", "paraphraser_rate", "ft_pretrain_fraction", "paraphraser_lr",
      // evaluation and analysis
      "ckpt", "recon_rate", "recon_epochs", "recon_batch_size", "recon_lr", "recon_momentum",
      "recon_seed", "recon_tap"};
  return keys;
}

void Config::set(const std::string& key, const std::string& value) {
  const auto& keys = valid_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
    std::string all;
    for (const auto& k : keys) all += (all.empty() ? "" : ", ") + k;
    throw ConfigError("unknown key '" + key + "'; valid keys: " + all);
  }
  values_[key] = value;
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    set(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
  }
}

void Config::apply_override(std::string_view arg) {
  if (arg.starts_with("--")) arg.remove_prefix(2);
  const auto eq = arg.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("argument '" + std::string(arg) + "' is not key=value");
  }
  set(std::string(arg.substr(0, eq)), std::string(arg.substr(eq + 1)));
}

std::string Config::str(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

long long Config::integer(const std::string& key, long long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(it->second, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != it->second.size()) {
    throw ConfigError("key '" + key + "' expects an integer, got '" + it->second + "'");
  }
  return v;
}

double Config::real(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(it->second, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != it->second.size()) {
    throw ConfigError("key '" + key + "' expects a number, got '" + it->second + "'");
  }
  return v;
}

bool Config::boolean(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError("key '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<std::string> Config::list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream in(str(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace feed
