#include "muchgcn/runconfig.hpp"

#include <fstream>
#include <stdexcept>

namespace muchgcn {

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw std::invalid_argument(msg); }

std::string join_key(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

/// True when `value` may be assigned over `slot` without changing its kind.
/// A bare number is accepted for an array slot (broadcast to one element).
bool assignable(const nlohmann::json& slot, const nlohmann::json& value) {
  if (slot.is_number_float() && value.is_number()) return true;
  if (slot.is_number_integer() && value.is_number_integer()) return true;
  if (slot.is_array() && (value.is_array() || value.is_number())) return true;
  return slot.type() == value.type();
}

nlohmann::json coerce(const nlohmann::json& slot, nlohmann::json value) {
  if (slot.is_array() && value.is_number()) return nlohmann::json::array({std::move(value)});
  return value;
}

std::vector<double> number_list(const nlohmann::json& v, const std::string& key) {
  std::vector<double> out;
  if (v.is_number()) {
    out.push_back(v.get<double>());
    return out;
  }
  if (!v.is_array()) config_error(key + " must be a number or an array of numbers");
  for (const auto& e : v) {
    if (!e.is_number()) config_error(key + " must contain only numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

}  // namespace

nlohmann::json default_config_json() {
  return nlohmann::json{
      {"dataset",
       {{"source", "synthetic"},
        {"path", ""},
        {"name", ""},
        {"features", "bio"},
        {"family", "cycles_vs_chords"},
        {"graphs", 200},
        {"seed", 1}}},
      {"model",
       {{"variant", "muchgcn_mh"},
        {"layers", 2},
        {"steps", 3},
        {"hidden", 64},
        {"assign_ratio", nlohmann::json::array({0.25})},
        {"channel_expansion", nlohmann::json::array({4})}}},
      {"train",
       {{"lr", 1e-3},
        {"epochs", 30},
        {"batch_size", 20},
        {"entropy_weight", 0.1},
        {"folds", 10},
        {"seed", 0},
        {"clip_norm", 2.0},
        {"parallel_folds", 1}}},
      {"output", {{"metrics", ""}, {"summary", ""}, {"checkpoint", ""}}}};
}

void merge_config(nlohmann::json& doc, const nlohmann::json& patch, const std::string& prefix) {
  if (!patch.is_object())
    config_error("configuration section '" + (prefix.empty() ? "<root>" : prefix) +
                 "' must be a JSON object");
  for (const auto& [key, value] : patch.items()) {
    std::string full = join_key(prefix, key);
    auto it = doc.find(key);
    if (it == doc.end()) config_error("unknown configuration key '" + full + "'");
    if (it->is_object()) {
      merge_config(*it, value, full);
      continue;
    }
    if (!assignable(*it, value))
      config_error("configuration key '" + full + "' expects " + std::string(it->type_name()) +
                   ", got " + std::string(value.type_name()));
    *it = coerce(*it, value);
  }
}

void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& assignments) {
  for (const std::string& a : assignments) {
    size_t eq = a.find('=');
    if (eq == std::string::npos || eq == 0)
      config_error("override '" + a + "' is not of the form key.path=value");
    std::string key = a.substr(0, eq), raw = a.substr(eq + 1);

    nlohmann::json* slot = &doc;
    std::string walked;
    for (size_t begin = 0; begin <= key.size();) {
      size_t dot = key.find('.', begin);
      std::string part = key.substr(begin, dot == std::string::npos ? dot : dot - begin);
      walked = join_key(walked, part);
      if (!slot->is_object() || !slot->contains(part))
        config_error("unknown configuration key '" + walked + "'");
      slot = &(*slot)[part];
      if (dot == std::string::npos) break;
      begin = dot + 1;
    }
    if (slot->is_object()) config_error("override '" + key + "' names a section, not a value");

    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;  // not JSON: treat as a string
    if (!assignable(*slot, value))
      config_error("override '" + key + "' expects " + std::string(slot->type_name()) + ", got " +
                   std::string(value.type_name()));
    *slot = coerce(*slot, std::move(value));
  }
}

RunConfig run_config_from_json(const nlohmann::json& doc) {
  RunConfig rc;
  rc.effective = doc;

  const auto& ds = doc.at("dataset");
  rc.dataset.source = ds.at("source").get<std::string>();
  rc.dataset.path = ds.at("path").get<std::string>();
  rc.dataset.name = ds.at("name").get<std::string>();
  rc.dataset.features = ds.at("features").get<std::string>();
  rc.dataset.family = ds.at("family").get<std::string>();
  rc.dataset.graphs = ds.at("graphs").get<int>();
  rc.dataset.seed = ds.at("seed").get<std::uint64_t>();
  if (rc.dataset.source != "synthetic" && rc.dataset.source != "tu")
    config_error("dataset.source must be 'synthetic' or 'tu'");
  if (rc.dataset.features != "bio" && rc.dataset.features != "social")
    config_error("dataset.features must be 'bio' or 'social'");
  if (rc.dataset.source == "tu" && rc.dataset.path.empty())
    config_error("dataset.source 'tu' requires dataset.path");
  if (rc.dataset.source == "synthetic" && rc.dataset.graphs < 2)
    config_error("dataset.graphs must be at least 2");

  const auto& m = doc.at("model");
  rc.model.variant = variant_from_string(m.at("variant").get<std::string>());
  rc.model.layers = m.at("layers").get<int>();
  rc.model.steps = m.at("steps").get<int>();
  rc.model.hidden = m.at("hidden").get<int>();
  rc.model.assign_ratio = number_list(m.at("assign_ratio"), "model.assign_ratio");
  std::vector<int> expansion;
  for (double v : number_list(m.at("channel_expansion"), "model.channel_expansion")) {
    if (v != static_cast<int>(v)) config_error("model.channel_expansion must hold integers");
    expansion.push_back(static_cast<int>(v));
  }
  rc.model.channel_expansion = std::move(expansion);

  const auto& tr = doc.at("train");
  rc.train.lr = tr.at("lr").get<double>();
  rc.train.epochs = tr.at("epochs").get<int>();
  rc.train.batch_size = tr.at("batch_size").get<int>();
  rc.train.entropy_weight = tr.at("entropy_weight").get<double>();
  rc.train.folds = tr.at("folds").get<int>();
  rc.train.seed = tr.at("seed").get<std::uint64_t>();
  rc.train.clip_norm = tr.at("clip_norm").get<double>();
  rc.train.parallel_folds = tr.at("parallel_folds").get<int>();
  if (rc.train.epochs < 1) config_error("train.epochs must be at least 1");
  if (rc.train.batch_size < 1) config_error("train.batch_size must be at least 1");
  if (rc.train.lr <= 0) config_error("train.lr must be positive");

  const auto& out = doc.at("output");
  rc.output.metrics = out.at("metrics").get<std::string>();
  rc.output.summary = out.at("summary").get<std::string>();
  rc.output.checkpoint = out.at("checkpoint").get<std::string>();
  rc.train.metrics_path = rc.output.metrics;
  return rc;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json doc = default_config_json();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) config_error("cannot open config file '" + path + "'");
    nlohmann::json file = nlohmann::json::parse(in, nullptr, false);
    if (file.is_discarded()) config_error("config file '" + path + "' is not valid JSON");
    merge_config(doc, file);
  }
  apply_overrides(doc, overrides);
  return run_config_from_json(doc);
}

Dataset load_dataset(const DatasetSpec& spec) {
  if (spec.source == "synthetic")
    return generate_synthetic(synthetic_family_from_string(spec.family), spec.graphs, spec.seed);
  FeatureMode mode = spec.features == "social" ? FeatureMode::kSocial : FeatureMode::kBio;
  return parse_tu_dataset(spec.path, spec.name, mode);
}

}  // namespace muchgcn
