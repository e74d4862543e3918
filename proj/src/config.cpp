// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "tiedaug/errors.hpp"
#include "tiedaug/harness.hpp"

namespace tiedaug {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty()) throw ConfigError("expected a number, got '" + v + "'");
    return out;
}

std::uint64_t to_u64(const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
        throw ConfigError("expected a non-negative integer, got '" + v + "'");
    return out;
}

std::size_t to_size(const std::string& v) { return static_cast<std::size_t>(to_u64(v)); }

bool to_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("expected a boolean, got '" + v + "'");
}

template <class T, class F>
std::vector<T> to_list(const std::string& v, F convert) {
    std::vector<T> out;
    if (trim(v).empty()) return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(convert(trim(item)));
    return out;
}

Activation parse_activation(const std::string& v) {
    if (v == "relu") return Activation::relu;
    if (v == "tanh") return Activation::tanh;
    if (v == "identity" || v == "linear") return Activation::identity;
    throw ConfigError("unknown activation '" + v + "'");
}

ModelKind parse_model_kind(const std::string& v) {
    if (v == "mlp") return ModelKind::mlp;
    if (v == "small_conv") return ModelKind::small_conv;
    throw ConfigError("unknown model kind '" + v + "'");
}

// Parse-time state: a few keys only make sense together (image extents, enabled flags).
struct Draft {
    ExperimentConfig cfg;
    std::size_t channels = 1, height = 1, width = 8;
    std::optional<std::size_t> dim;
    bool sam_enabled = false, mixup_enabled = false, fixmatch_enabled = false;
    SamConfig sam;
    MixupSettings mixup;
    FixMatchSettings fixmatch;
    std::map<std::string, std::map<std::string, std::string>> augment;  // section -> field -> raw value
};

using Setter = std::function<void(Draft&, const std::string&)>;

// Augment sections are collected raw and resolved after parsing: the spec starts
// from the chosen kind's defaults, then the remaining keys apply in any order.
void add_augment_keys(std::vector<std::pair<std::string, Setter>>& keys, const std::string& prefix) {
    for (const char* field : {"kind", "pad", "flip_prob", "sigma", "layers", "magnitude", "prob"}) {
        keys.emplace_back(prefix + "." + field, [prefix, field = std::string(field)](Draft& d, const std::string& v) {
            // Convert once here so malformed values are reported with their line.
            if (field == "kind") parse_augment_kind(v);
            else if (field == "pad" || field == "layers") to_size(v);
            else to_double(v);
            d.augment[prefix][field] = v;
        });
    }
}

AugmentSpec defaults_for(AugmentKind kind) {
    switch (kind) {
        case AugmentKind::crop_flip:
            return AugmentSpec::crop_flip();
        case AugmentKind::gaussian_noise:
            return AugmentSpec::gaussian_noise(0.1);
        case AugmentKind::randaugment:
            return AugmentSpec::randaugment(2, 10.0);
        case AugmentKind::identity:
        case AugmentKind::mixup:
            break;
    }
    AugmentSpec spec;
    spec.kind = kind;
    return spec;
}

void resolve_augment(const std::map<std::string, std::string>& raw, AugmentSpec& spec) {
    if (const auto it = raw.find("kind"); it != raw.end()) spec = defaults_for(parse_augment_kind(it->second));
    for (const auto& [field, v] : raw) {
        if (field == "pad") spec.pad = to_size(v);
        else if (field == "flip_prob") spec.flip_prob = to_double(v);
        else if (field == "sigma") spec.sigma = to_double(v);
        else if (field == "layers") spec.layers = to_size(v);
        else if (field == "magnitude") spec.magnitude = to_double(v);
        else if (field == "prob") spec.prob = to_double(v);
    }
}

const std::vector<std::pair<std::string, Setter>>& key_table() {
    static const std::vector<std::pair<std::string, Setter>> table = [] {
        std::vector<std::pair<std::string, Setter>> k;
        using S = const std::string&;
        // dataset
        k.emplace_back("dataset.kind", [](Draft& d, S v) { d.cfg.dataset.kind = parse_dataset_kind(v); });
        k.emplace_back("dataset.size", [](Draft& d, S v) { d.cfg.dataset.size = to_size(v); });
        k.emplace_back("dataset.classes", [](Draft& d, S v) { d.cfg.dataset.classes = to_size(v); });
        k.emplace_back("dataset.channels", [](Draft& d, S v) { d.channels = to_size(v); });
        k.emplace_back("dataset.height", [](Draft& d, S v) { d.height = to_size(v); });
        k.emplace_back("dataset.width", [](Draft& d, S v) { d.width = to_size(v); });
        k.emplace_back("dataset.dim", [](Draft& d, S v) { d.dim = to_size(v); });
        k.emplace_back("dataset.noise", [](Draft& d, S v) { d.cfg.dataset.noise = to_double(v); });
        k.emplace_back("dataset.seed", [](Draft& d, S v) { d.cfg.dataset.seed = to_u64(v); });
        k.emplace_back("dataset.labels_per_class", [](Draft& d, S v) { d.cfg.dataset.labels_per_class = to_size(v); });
        k.emplace_back("dataset.path", [](Draft& d, S v) { d.cfg.dataset.path = v; });
        k.emplace_back("dataset.test_path", [](Draft& d, S v) { d.cfg.dataset.test_path = v; });
        // model
        k.emplace_back("model.kind", [](Draft& d, S v) { d.cfg.model.kind = parse_model_kind(v); });
        k.emplace_back("model.hidden", [](Draft& d, S v) { d.cfg.model.hidden = to_list<std::size_t>(v, to_size); });
        k.emplace_back("model.conv_channels",
                       [](Draft& d, S v) { d.cfg.model.conv_channels = to_list<std::size_t>(v, to_size); });
        k.emplace_back("model.kernel", [](Draft& d, S v) { d.cfg.model.kernel = to_size(v); });
        k.emplace_back("model.activation", [](Draft& d, S v) { d.cfg.model.activation = parse_activation(v); });
        k.emplace_back("model.feature_dim", [](Draft& d, S v) { d.cfg.model.feature_dim = to_size(v); });
        k.emplace_back("model.seed", [](Draft& d, S v) { d.cfg.model_seed = to_u64(v); });
        // augmentation
        add_augment_keys(k, "augment1");
        add_augment_keys(k, "augment2");
        k.emplace_back("augment.crop_mode", [](Draft& d, S v) {
            if (v == "shared") d.cfg.crop_mode = CropMode::shared;
            else if (v == "independent") d.cfg.crop_mode = CropMode::independent;
            else throw ConfigError("unknown crop mode '" + v + "'");
        });
        // tied loss
        k.emplace_back("tied.weight", [](Draft& d, S v) { d.cfg.tied.tied_weight = to_double(v); });
        k.emplace_back("tied.similarity",
                       [](Draft& d, S v) { d.cfg.tied.similarity.kind = parse_similarity_kind(v); });
        k.emplace_back("tied.epsilon", [](Draft& d, S v) { d.cfg.tied.similarity.epsilon = to_double(v); });
        k.emplace_back("tied.branches", [](Draft& d, S v) {
            if (v == "both") d.cfg.tied.branches = SupervisedBranches::both;
            else if (v == "first_only") d.cfg.tied.branches = SupervisedBranches::first_only;
            else throw ConfigError("unknown branches mode '" + v + "'");
        });
        // optimizer
        k.emplace_back("optim.lr", [](Draft& d, S v) { d.cfg.optimizer.learning_rate = to_double(v); });
        k.emplace_back("optim.momentum", [](Draft& d, S v) { d.cfg.optimizer.momentum = to_double(v); });
        k.emplace_back("optim.nesterov", [](Draft& d, S v) { d.cfg.optimizer.nesterov = to_bool(v); });
        k.emplace_back("optim.weight_decay", [](Draft& d, S v) { d.cfg.optimizer.weight_decay = to_double(v); });
        k.emplace_back("optim.schedule", [](Draft& d, S v) { d.cfg.optimizer.schedule = parse_schedule_kind(v); });
        k.emplace_back("optim.milestones",
                       [](Draft& d, S v) { d.cfg.optimizer.milestones = to_list<std::size_t>(v, to_size); });
        k.emplace_back("optim.factor", [](Draft& d, S v) { d.cfg.optimizer.factor = to_double(v); });
        // SAM
        k.emplace_back("sam.enabled", [](Draft& d, S v) { d.sam_enabled = to_bool(v); });
        k.emplace_back("sam.rho", [](Draft& d, S v) { d.sam.rho = to_double(v); });
        k.emplace_back("sam.first_step", [](Draft& d, S v) {
            if (v == "standard") d.sam.first_step = TiedFirstStep::standard;
            else if (v == "negated") d.sam.first_step = TiedFirstStep::negated;
            else throw ConfigError("unknown sam.first_step '" + v + "'");
        });
        // FixMatch
        k.emplace_back("fixmatch.enabled", [](Draft& d, S v) { d.fixmatch_enabled = to_bool(v); });
        k.emplace_back("fixmatch.threshold", [](Draft& d, S v) { d.fixmatch.config.threshold = to_double(v); });
        k.emplace_back("fixmatch.lambda_u", [](Draft& d, S v) { d.fixmatch.config.unlabeled_weight = to_double(v); });
        k.emplace_back("fixmatch.ratio", [](Draft& d, S v) { d.fixmatch.config.ratio = to_size(v); });
        k.emplace_back("fixmatch.weight", [](Draft& d, S v) { d.fixmatch.config.tied_weight = to_double(v); });
        k.emplace_back("fixmatch.label_file", [](Draft& d, S v) { d.fixmatch.label_file = v; });
        add_augment_keys(k, "weak");
        add_augment_keys(k, "strong");
        // mixup
        k.emplace_back("mixup.enabled", [](Draft& d, S v) { d.mixup_enabled = to_bool(v); });
        k.emplace_back("mixup.alpha", [](Draft& d, S v) { d.mixup.alpha = to_double(v); });
        k.emplace_back("mixup.weight", [](Draft& d, S v) { d.mixup.tied_weight = to_double(v); });
        // training
        k.emplace_back("train.epochs", [](Draft& d, S v) { d.cfg.epochs = to_size(v); });
        k.emplace_back("train.batch_size", [](Draft& d, S v) { d.cfg.batch_size = to_size(v); });
        k.emplace_back("train.seeds", [](Draft& d, S v) { d.cfg.seeds = to_list<std::uint64_t>(v, to_u64); });
        k.emplace_back("train.forward_mode", [](Draft& d, S v) {
            if (v == "separate") d.cfg.forward_mode = ForwardMode::separate;
            else if (v == "concatenated") d.cfg.forward_mode = ForwardMode::concatenated;
            else throw ConfigError("unknown forward mode '" + v + "'");
        });
        k.emplace_back("train.log_wall_time", [](Draft& d, S v) { d.cfg.log_wall_time = to_bool(v); });
        k.emplace_back("train.threads", [](Draft& d, S v) { d.cfg.threads = to_size(v); });
        // Taylor check
        k.emplace_back("taylor.sigmas", [](Draft& d, S v) { d.cfg.taylor.sigmas = to_list<double>(v, to_double); });
        k.emplace_back("taylor.samples", [](Draft& d, S v) { d.cfg.taylor.samples = to_size(v); });
        k.emplace_back("taylor.probes", [](Draft& d, S v) { d.cfg.taylor.probe_points = to_size(v); });
        k.emplace_back("taylor.seed", [](Draft& d, S v) { d.cfg.taylor.seed = to_u64(v); });
        return k;
    }();
    return table;
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        for (const auto& [name, _] : key_table()) out.push_back(name);
        return out;
    }();
    return keys;
}

ExperimentConfig parse_config(const std::string& text) {
    static const std::map<std::string, const Setter*> lookup = [] {
        std::map<std::string, const Setter*> m;
        for (const auto& [name, setter] : key_table()) m.emplace(name, &setter);
        return m;
    }();

    Draft d;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::map<std::string, std::size_t> seen;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'section.key = value'");
        const std::string key = trim(std::string_view(body).substr(0, eq));
        const std::string value = trim(std::string_view(body).substr(eq + 1));
        const auto it = lookup.find(key);
        if (it == lookup.end())
            throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        if (const auto prev = seen.find(key); prev != seen.end())
            throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key +
                              "' (first set on line " + std::to_string(prev->second) + ")");
        seen.emplace(key, line_no);
        try {
            (*it->second)(d, value);
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(line_no) + " (" + key + "): " + e.what());
        }
    }

    resolve_augment(d.augment["augment1"], d.cfg.augment1);
    resolve_augment(d.augment["augment2"], d.cfg.augment2);
    resolve_augment(d.augment["weak"], d.fixmatch.config.weak);
    resolve_augment(d.augment["strong"], d.fixmatch.config.strong);
    ExperimentConfig cfg = std::move(d.cfg);
    cfg.dataset.image = d.dim ? Shape{1, 1, *d.dim} : Shape{d.channels, d.height, d.width};
    cfg.model.input = cfg.dataset.image;
    cfg.model.classes = cfg.dataset.classes;
    if (d.sam_enabled) cfg.sam = d.sam;
    if (d.mixup_enabled) cfg.mixup = d.mixup;
    if (d.fixmatch_enabled) cfg.fixmatch = d.fixmatch;
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

TrainingMode ExperimentConfig::mode() const {
    if (mixup) return TrainingMode::mixup;
    if (fixmatch) return TrainingMode::fixmatch;
    return TrainingMode::tied;
}

void ExperimentConfig::validate() const {
    if (mixup && fixmatch) throw ConfigError("config: mixup and fixmatch are mutually exclusive training modes");
    if (epochs < 1) throw ConfigError("config: train.epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("config: train.batch_size must be >= 1");
    if (seeds.empty()) throw ConfigError("config: train.seeds must list at least one seed");
    if (threads < 1) throw ConfigError("config: train.threads must be >= 1");
    dataset.validate();
    model.validate();
    if (model.input != dataset.image || model.classes != dataset.classes)
        throw ConfigError("config: model input/classes must match the dataset");
    optimizer.validate();
    if (sam) sam->validate();
    if (!(tied.similarity.epsilon > 0.0)) throw ConfigError("config: tied.epsilon must be > 0");
    switch (mode()) {
        case TrainingMode::tied:
            augment1.validate(dataset.image);
            augment2.validate(dataset.image);
            if (augment1.kind == AugmentKind::mixup || augment2.kind == AugmentKind::mixup)
                throw ConfigError("config: use mixup.enabled for mixup training, not an augment kind");
            if (crop_mode == CropMode::shared &&
                (augment1.pad != augment2.pad || augment1.flip_prob != augment2.flip_prob))
                throw ConfigError("config: shared crop mode needs identical pad and flip_prob on both views");
            break;
        case TrainingMode::mixup:
            if (!(mixup->alpha > 0.0)) throw ConfigError("config: mixup.alpha must be > 0");
            augment1.validate(dataset.image);
            if (augment1.kind == AugmentKind::mixup)
                throw ConfigError("config: augment1 must be label-preserving in mixup mode");
            break;
        case TrainingMode::fixmatch:
            fixmatch->config.validate();
            fixmatch->config.weak.validate(dataset.image);
            fixmatch->config.strong.validate(dataset.image);
            if (fixmatch->label_file.empty() && !dataset.labels_per_class)
                throw ConfigError("config: fixmatch needs dataset.labels_per_class or fixmatch.label_file");
            break;
    }
    for (double s : taylor.sigmas)
        if (!(s > 0.0)) throw ConfigError("config: taylor.sigmas must be positive");
}

}  // namespace tiedaug
