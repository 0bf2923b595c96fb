#include "rdt/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <set>

#include "rdt/error.hpp"

namespace rdt {

GenreVocabulary HyperParams::make_vocabulary() const {
  return GenreVocabulary(vocabulary);
}

ModelConfig HyperParams::model_config() const {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.patch.image_side = image_size;
  cfg.patch.patch_side = patch_size;
  cfg.patch.embed_dim = embed_dim;
  cfg.patch.extractor_channels = extractor_channels;
  cfg.encoders = encoders;
  cfg.heads = heads;
  cfg.classes = static_cast<int>(vocabulary.size());
  return cfg;
}

AslConfig HyperParams::asl_config() const {
  AslConfig cfg;
  cfg.gamma_pos = gamma_pos;
  cfg.gamma_neg = gamma_neg;
  cfg.margin = margin;
  return cfg;
}

OptimizerConfig HyperParams::optimizer_config() const {
  OptimizerConfig cfg;
  cfg.lr = lr;
  cfg.beta1 = beta1;
  cfg.beta2 = beta2;
  cfg.eps = eps;
  return cfg;
}

TrainConfig HyperParams::train_config() const {
  TrainConfig cfg;
  cfg.batch_size = batch_size;
  cfg.patience = patience;
  cfg.max_epochs = max_epochs;
  cfg.seed = seed;
  cfg.target_train_loss = target_train_loss;
  cfg.freeze_extractor = freeze_extractor;
  return cfg;
}

SplitRatios HyperParams::split_ratios() const {
  SplitRatios ratios;
  ratios.train = split_train;
  ratios.val = split_val;
  ratios.test = split_test;
  return ratios;
}

RefineConfig HyperParams::refine_config() const {
  RefineConfig cfg;
  cfg.tau = tau;
  cfg.tau_prime = tau_prime;
  return cfg;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t begin = 0;
  std::size_t end = s.size();
  while (begin < end && (s[begin] == ' ' || s[begin] == '\t')) ++begin;
  while (end > begin && (s[end - 1] == ' ' || s[end - 1] == '\t' ||
                         s[end - 1] == '\r'))
    --end;
  return s.substr(begin, end - begin);
}

double parse_double(const std::string& value, const std::string& where) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ParseError(where + ": expected a number, got '" + value + "'");
  }
  if (used != value.size() || !std::isfinite(out))
    throw ParseError(where + ": expected a number, got '" + value + "'");
  return out;
}

int parse_int(const std::string& value, const std::string& where) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(value, &used);
  } catch (const std::exception&) {
    throw ParseError(where + ": expected an integer, got '" + value + "'");
  }
  if (used != value.size())
    throw ParseError(where + ": expected an integer, got '" + value + "'");
  if (out < INT32_MIN || out > INT32_MAX)
    throw ParseError(where + ": integer out of range: '" + value + "'");
  return static_cast<int>(out);
}

std::uint64_t parse_u64(const std::string& value, const std::string& where) {
  if (value.empty())
    throw ParseError(where + ": expected an unsigned integer, got ''");
  for (char c : value)
    if (c < '0' || c > '9')
      throw ParseError(where + ": expected an unsigned integer, got '" +
                       value + "'");
  try {
    return std::stoull(value);
  } catch (const std::exception&) {
    throw ParseError(where + ": unsigned integer out of range: '" + value +
                     "'");
  }
}

bool parse_bool(const std::string& value, const std::string& where) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ParseError(where + ": expected true/false, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::string item;
  for (char c : value) {
    if (c == ',') {
      items.push_back(trim(item));
      item.clear();
    } else {
      item.push_back(c);
    }
  }
  items.push_back(trim(item));
  return items;
}

std::vector<int> parse_int_list(const std::string& value,
                                const std::string& where) {
  std::vector<int> out;
  for (const std::string& item : split_list(value))
    out.push_back(parse_int(item, where));
  return out;
}

std::vector<std::string> parse_name_list(const std::string& value,
                                         const std::string& where) {
  std::vector<std::string> names = split_list(value);
  for (const std::string& n : names)
    if (n.empty())
      throw ParseError(where + ": empty name in list '" + value + "'");
  return names;
}

const std::vector<std::string> kKeys = {
    "model",          "image_size",      "patch_size",
    "embed_dim",      "extractor_channels", "encoders",
    "heads",          "vocabulary",      "gamma_pos",
    "gamma_neg",      "margin",          "lr",
    "beta1",          "beta2",           "eps",
    "batch_size",     "patience",        "max_epochs",
    "target_train_loss", "freeze_extractor", "split_train",
    "split_val",      "split_test",      "tau",
    "tau_prime",      "grid_step",       "grid_metric",
    "seed",
};

}  // namespace

const std::vector<std::string>& hyper_param_keys() { return kKeys; }

void set_hyper_param(HyperParams& p, const std::string& key,
                     const std::string& value, const std::string& where) {
  if (key == "model") {
    try {
      p.kind = model_kind_from_string(value);
    } catch (const std::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
  } else if (key == "image_size") {
    p.image_size = parse_int(value, where);
  } else if (key == "patch_size") {
    p.patch_size = parse_int(value, where);
  } else if (key == "embed_dim") {
    p.embed_dim = parse_int(value, where);
  } else if (key == "extractor_channels") {
    p.extractor_channels = parse_int_list(value, where);
  } else if (key == "encoders") {
    p.encoders = parse_int(value, where);
  } else if (key == "heads") {
    p.heads = parse_int(value, where);
  } else if (key == "vocabulary") {
    p.vocabulary = parse_name_list(value, where);
  } else if (key == "gamma_pos") {
    p.gamma_pos = parse_double(value, where);
  } else if (key == "gamma_neg") {
    p.gamma_neg = parse_double(value, where);
  } else if (key == "margin") {
    p.margin = parse_double(value, where);
  } else if (key == "lr") {
    p.lr = parse_double(value, where);
  } else if (key == "beta1") {
    p.beta1 = parse_double(value, where);
  } else if (key == "beta2") {
    p.beta2 = parse_double(value, where);
  } else if (key == "eps") {
    p.eps = parse_double(value, where);
  } else if (key == "batch_size") {
    p.batch_size = parse_int(value, where);
  } else if (key == "patience") {
    p.patience = parse_int(value, where);
  } else if (key == "max_epochs") {
    p.max_epochs = parse_int(value, where);
  } else if (key == "target_train_loss") {
    p.target_train_loss = parse_double(value, where);
  } else if (key == "freeze_extractor") {
    p.freeze_extractor = parse_bool(value, where);
  } else if (key == "split_train") {
    p.split_train = parse_int(value, where);
  } else if (key == "split_val") {
    p.split_val = parse_int(value, where);
  } else if (key == "split_test") {
    p.split_test = parse_int(value, where);
  } else if (key == "tau") {
    p.tau = parse_double(value, where);
  } else if (key == "tau_prime") {
    p.tau_prime = parse_double(value, where);
  } else if (key == "grid_step") {
    p.grid_step = parse_double(value, where);
  } else if (key == "grid_metric") {
    try {
      p.grid_metric = selection_metric_from_string(value);
    } catch (const std::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
  } else if (key == "seed") {
    p.seed = parse_u64(value, where);
  } else {
    throw ParseError(where + ": unknown key '" + key + "'");
  }
}

void load_hyper_params(std::istream& in, const std::string& origin,
                       HyperParams& params,
                       std::vector<std::string>* warnings) {
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> assigned;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no);
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const std::size_t eq = body.find('=');
    if (eq == std::string::npos)
      throw ParseError(where + ": expected key=value, got '" + body + "'");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw ParseError(where + ": empty key");
    if (!assigned.insert(key).second && warnings)
      warnings->push_back(where + ": duplicate key '" + key +
                          "', last occurrence wins");
    set_hyper_param(params, key, value, where);
  }
}

void load_hyper_params_file(const std::string& path, HyperParams& params,
                            std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  load_hyper_params(in, path, params, warnings);
}

void apply_overrides(HyperParams& params,
                     const std::vector<std::string>& overrides) {
  for (const std::string& item : overrides) {
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos)
      throw ParseError("override '" + item + "': expected key=value");
    const std::string key = trim(item.substr(0, eq));
    const std::string value = trim(item.substr(eq + 1));
    if (key.empty()) throw ParseError("override '" + item + "': empty key");
    set_hyper_param(params, key, value, "override " + key);
  }
}

}  // namespace rdt
