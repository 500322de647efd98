#include "cli/config.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "core/errors.hpp"

namespace chromo::cli {

namespace {

using json = nlohmann::json;

int as_int(const json& v, const std::string& key) {
    if (!v.is_number_integer()) throw ConfigError("config: '" + key + "' must be an integer");
    return v.get<int>();
}

uint64_t as_u64(const json& v, const std::string& key) {
    if (v.is_number_unsigned()) return v.get<uint64_t>();
    if (v.is_number_integer() && v.get<int64_t>() >= 0)
        return static_cast<uint64_t>(v.get<int64_t>());
    throw ConfigError("config: '" + key + "' must be a non-negative integer");
}

float as_float(const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError("config: '" + key + "' must be a number");
    return v.get<float>();
}

double as_double(const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError("config: '" + key + "' must be a number");
    return v.get<double>();
}

bool as_bool(const json& v, const std::string& key) {
    if (!v.is_boolean()) throw ConfigError("config: '" + key + "' must be true or false");
    return v.get<bool>();
}

std::vector<int> as_int_list(const json& v, const std::string& key) {
    if (!v.is_array()) throw ConfigError("config: '" + key + "' must be a list of integers");
    std::vector<int> out;
    for (const auto& e : v) out.push_back(as_int(e, key));
    return out;
}

using Setter = std::function<void(RunConfig&, const json&, const std::string&)>;

const std::map<std::string, Setter>& setter_table() {
    static const std::map<std::string, Setter> table = {
        {"data.n_pairs", [](RunConfig& c, const json& v, const std::string& k) { c.data.n_pairs = as_int(v, k); }},
        {"data.num_types", [](RunConfig& c, const json& v, const std::string& k) { c.data.num_types = as_int(v, k); }},
        {"data.seed", [](RunConfig& c, const json& v, const std::string& k) { c.data.seed = as_u64(v, k); }},
        {"data.max_offset", [](RunConfig& c, const json& v, const std::string& k) { c.data.max_offset = as_float(v, k); }},
        {"data.stations", [](RunConfig& c, const json& v, const std::string& k) { c.data.stations = as_int(v, k); }},
        {"data.spline_order", [](RunConfig& c, const json& v, const std::string& k) { c.data.spline_order = as_int(v, k); }},
        {"data.blur_sigma", [](RunConfig& c, const json& v, const std::string& k) { c.data.blur_sigma = as_float(v, k); }},
        {"model.image_size", [](RunConfig& c, const json& v, const std::string& k) { c.train.image_size = as_int(v, k); }},
        {"model.regions", [](RunConfig& c, const json& v, const std::string& k) { c.train.regions = as_int(v, k); }},
        {"model.blocks", [](RunConfig& c, const json& v, const std::string& k) { c.train.blocks = as_int(v, k); }},
        {"model.patch", [](RunConfig& c, const json& v, const std::string& k) { c.train.patch = as_int(v, k); }},
        {"model.dim", [](RunConfig& c, const json& v, const std::string& k) { c.train.dim = as_int(v, k); }},
        {"model.basic_patch", [](RunConfig& c, const json& v, const std::string& k) { c.train.basic_patch = as_bool(v, k); }},
        {"train.epochs", [](RunConfig& c, const json& v, const std::string& k) { c.train.epochs = as_int(v, k); }},
        {"train.batch_size", [](RunConfig& c, const json& v, const std::string& k) { c.train.batch_size = as_int(v, k); }},
        {"train.lr_gen", [](RunConfig& c, const json& v, const std::string& k) { c.train.lr_gen = as_float(v, k); }},
        {"train.lr_disc", [](RunConfig& c, const json& v, const std::string& k) { c.train.lr_disc = as_float(v, k); }},
        {"train.milestones", [](RunConfig& c, const json& v, const std::string& k) { c.train.milestones = as_int_list(v, k); }},
        {"train.lr_decay_gamma", [](RunConfig& c, const json& v, const std::string& k) { c.train.lr_decay_gamma = as_float(v, k); }},
        {"train.seed", [](RunConfig& c, const json& v, const std::string& k) { c.train.seed = as_u64(v, k); }},
        {"train.w_adversarial", [](RunConfig& c, const json& v, const std::string& k) { c.train.w_adversarial = as_float(v, k); }},
        {"train.w_perceptual", [](RunConfig& c, const json& v, const std::string& k) { c.train.w_perceptual = as_float(v, k); }},
        {"train.w_equivariance", [](RunConfig& c, const json& v, const std::string& k) { c.train.w_equivariance = as_float(v, k); }},
        {"train.val_fold", [](RunConfig& c, const json& v, const std::string& k) { c.train.val_fold = as_int(v, k); }},
        {"eval.k_folds", [](RunConfig& c, const json& v, const std::string& k) { c.eval.k_folds = as_int(v, k); }},
        {"eval.max_epochs", [](RunConfig& c, const json& v, const std::string& k) { c.eval.max_epochs = as_int(v, k); }},
        {"eval.lr", [](RunConfig& c, const json& v, const std::string& k) { c.eval.lr = as_double(v, k); }},
        {"eval.plateau_factor", [](RunConfig& c, const json& v, const std::string& k) { c.eval.plateau_factor = as_double(v, k); }},
        {"eval.plateau_patience", [](RunConfig& c, const json& v, const std::string& k) { c.eval.plateau_patience = as_int(v, k); }},
        {"eval.early_stop_patience", [](RunConfig& c, const json& v, const std::string& k) { c.eval.early_stop_patience = as_int(v, k); }},
        {"eval.input_size", [](RunConfig& c, const json& v, const std::string& k) { c.eval.input_size = as_int(v, k); }},
        {"eval.seed", [](RunConfig& c, const json& v, const std::string& k) { c.eval.seed = as_u64(v, k); }},
        {"match.tau", [](RunConfig& c, const json& v, const std::string& k) { c.match.tau = as_float(v, k); }},
        {"match.window", [](RunConfig& c, const json& v, const std::string& k) { c.match.window = as_int(v, k); }},
    };
    return table;
}

void apply_document(RunConfig& cfg, const json& doc) {
    if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
    const auto& table = setter_table();
    for (const auto& [section, body] : doc.items()) {
        if (!body.is_object())
            throw ConfigError("config: section '" + section + "' must be an object");
        for (const auto& [name, value] : body.items()) {
            const std::string key = section + "." + name;
            const auto it = table.find(key);
            if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
            it->second(cfg, value, key);
        }
    }
}

json parse_override_value(const std::string& key, const std::string& text) {
    json v = json::parse(text, nullptr, false);
    if (!v.is_discarded()) return v;
    // bare comma list, the flag-friendly spelling of an int array
    v = json::parse("[" + text + "]", nullptr, false);
    if (!v.is_discarded()) return v;
    throw ConfigError("config: cannot parse value '" + text + "' for '" + key + "'");
}

void apply_overrides(RunConfig& cfg, const Overrides& overrides) {
    const auto& table = setter_table();
    for (const auto& [key, text] : overrides) {
        const auto it = table.find(key);
        if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
        it->second(cfg, parse_override_value(key, text), key);
    }
}

}  // namespace

void RunConfig::validate() const {
    if (data.n_pairs < 1) throw ConfigError("config: 'data.n_pairs' must be at least 1");
    if (data.num_types < 1) throw ConfigError("config: 'data.num_types' must be at least 1");
    if (data.max_offset < 0.f) throw ConfigError("config: 'data.max_offset' must be non-negative");
    if (data.stations < 2) throw ConfigError("config: 'data.stations' must be at least 2");
    if (data.spline_order != 1 && data.spline_order != 3)
        throw ConfigError("config: 'data.spline_order' must be 1 or 3");
    if (data.blur_sigma < 0.f) throw ConfigError("config: 'data.blur_sigma' must be non-negative");
    train.validate();
    if (eval.k_folds < 2) throw ConfigError("config: 'eval.k_folds' must be at least 2");
    if (eval.max_epochs < 1) throw ConfigError("config: 'eval.max_epochs' must be at least 1");
    if (!(eval.lr > 0)) throw ConfigError("config: 'eval.lr' must be positive");
    if (!(eval.plateau_factor > 0) || eval.plateau_factor > 1)
        throw ConfigError("config: 'eval.plateau_factor' must lie in (0, 1]");
    if (eval.plateau_patience < 1)
        throw ConfigError("config: 'eval.plateau_patience' must be at least 1");
    if (eval.early_stop_patience < 1)
        throw ConfigError("config: 'eval.early_stop_patience' must be at least 1");
    if (eval.input_size < 16 || eval.input_size % 16 != 0)
        throw ConfigError("config: 'eval.input_size' must be a positive multiple of 16");
    if (!(match.tau > 0.f) || match.tau >= 1.f)
        throw ConfigError("config: 'match.tau' must lie in (0, 1)");
    if (match.window < 1) throw ConfigError("config: 'match.window' must be at least 1");
}

std::string RunConfig::to_json() const {
    json j;
    j["data"]["n_pairs"] = data.n_pairs;
    j["data"]["num_types"] = data.num_types;
    j["data"]["seed"] = data.seed;
    j["data"]["max_offset"] = data.max_offset;
    j["data"]["stations"] = data.stations;
    j["data"]["spline_order"] = data.spline_order;
    j["data"]["blur_sigma"] = data.blur_sigma;
    j["model"]["image_size"] = train.image_size;
    j["model"]["regions"] = train.regions;
    j["model"]["blocks"] = train.blocks;
    j["model"]["patch"] = train.patch;
    j["model"]["dim"] = train.dim;
    j["model"]["basic_patch"] = train.basic_patch;
    j["train"]["epochs"] = train.epochs;
    j["train"]["batch_size"] = train.batch_size;
    j["train"]["lr_gen"] = train.lr_gen;
    j["train"]["lr_disc"] = train.lr_disc;
    j["train"]["milestones"] = train.milestones;
    j["train"]["lr_decay_gamma"] = train.lr_decay_gamma;
    j["train"]["seed"] = train.seed;
    j["train"]["w_adversarial"] = train.w_adversarial;
    j["train"]["w_perceptual"] = train.w_perceptual;
    j["train"]["w_equivariance"] = train.w_equivariance;
    j["train"]["val_fold"] = train.val_fold;
    j["eval"]["k_folds"] = eval.k_folds;
    j["eval"]["max_epochs"] = eval.max_epochs;
    j["eval"]["lr"] = eval.lr;
    j["eval"]["plateau_factor"] = eval.plateau_factor;
    j["eval"]["plateau_patience"] = eval.plateau_patience;
    j["eval"]["early_stop_patience"] = eval.early_stop_patience;
    j["eval"]["input_size"] = eval.input_size;
    j["eval"]["seed"] = eval.seed;
    j["match"]["tau"] = match.tau;
    j["match"]["window"] = match.window;
    return j.dump(2) + "\n";
}

RunConfig parse_config_text(const std::string& json_text, const Overrides& overrides) {
    RunConfig cfg;
    if (!json_text.empty()) {
        json doc = json::parse(json_text, nullptr, false);
        if (doc.is_discarded()) throw ConfigError("config: malformed JSON");
        apply_document(cfg, doc);
    }
    apply_overrides(cfg, overrides);
    cfg.validate();
    return cfg;
}

RunConfig parse_config(const std::string& config_path, const Overrides& overrides) {
    std::string text;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw ConfigError("config: cannot read " + config_path);
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
        if (text.empty()) text = "{}";  // empty file means all defaults
    }
    return parse_config_text(text, overrides);
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        for (const auto& [k, fn] : setter_table()) {
            (void)fn;
            out.push_back(k);
        }
        return out;
    }();
    return keys;
}

}  // namespace chromo::cli
