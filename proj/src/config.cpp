#include "ropegraph/config.hpp"

#include <charconv>
#include <set>

#include "ropegraph/errors.hpp"
#include "ropegraph/serialization.hpp"

namespace ropegraph {

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) throw ConfigError(key + ": cannot parse '" + text + "'");
    return value;
}

bool as_flag(const std::string& key, const std::string& text) {
    if (text == "1" || text == "true") return true;
    if (text == "0" || text == "false") return false;
    throw ConfigError(key + ": expected 0/1 or true/false, got '" + text + "'");
}

}  // namespace

TrainConfig default_run_config() {
    TrainConfig c;
    c.learning_rate = 1e-3;
    c.momentum = 0.9;
    c.batch_size = 8;
    c.steps = 4000;
    c.validate_every = 250;
    c.augment = true;
    c.keep_best = true;
    c.cosine_decay = true;
    return c;
}

ModelHyper default_run_hyper() {
    ModelHyper h;
    h.fcn_layers = 5;
    h.dilation_growth = 2;
    h.crop = 4;
    h.feature_channels = 16;
    return h;
}

TrainSettings parse_train_settings(const std::string& text) {
    static const std::set<std::string> allowed = {
        "learning_rate", "momentum",   "batch_size",  "steps",        "seed",
        "validate_every", "target_loss", "clip_norm",  "validation_limit", "init_seed",
        "topology",      "keypoints",  "crop",        "feature_channels", "fcn_hidden",
        "fcn_layers",    "dilation_growth", "gcn_hidden", "gcn_out",     "mask_sigma",   "mask_truncate",
        "augment",       "keep_best",  "cosine_decay"};
    TrainSettings s;
    for (const auto& [key, value] : parse_key_values(text, allowed)) {
        auto as_int = [&] { return parse_number<int>(key, value); };
        auto as_double = [&] { return parse_number<double>(key, value); };
        if (key == "learning_rate") s.train.learning_rate = as_double();
        else if (key == "momentum") s.train.momentum = as_double();
        else if (key == "batch_size") s.train.batch_size = as_int();
        else if (key == "steps") s.train.steps = as_int();
        else if (key == "seed") s.train.seed = parse_number<std::uint64_t>(key, value);
        else if (key == "validate_every") s.train.validate_every = as_int();
        else if (key == "target_loss") s.train.target_loss = as_double();
        else if (key == "clip_norm") s.train.clip_norm = as_double();
        else if (key == "validation_limit") s.train.validation_limit = as_int();
        else if (key == "augment") s.train.augment = as_flag(key, value);
        else if (key == "keep_best") s.train.keep_best = as_flag(key, value);
        else if (key == "cosine_decay") s.train.cosine_decay = as_flag(key, value);
        else if (key == "init_seed") s.init_seed = parse_number<std::uint64_t>(key, value);
        else if (key == "topology") s.topology = value == "all" ? std::nullopt : std::optional(topology_from_string(value));
        else if (key == "keypoints") s.hyper.keypoints = as_int();
        else if (key == "crop") s.hyper.crop = as_int();
        else if (key == "feature_channels") s.hyper.feature_channels = as_int();
        else if (key == "fcn_hidden") s.hyper.fcn_hidden = as_int();
        else if (key == "fcn_layers") s.hyper.fcn_layers = as_int();
        else if (key == "dilation_growth") s.hyper.dilation_growth = as_int();
        else if (key == "gcn_hidden") s.hyper.gcn_hidden = as_int();
        else if (key == "gcn_out") s.hyper.gcn_out = as_int();
        else if (key == "mask_sigma") s.hyper.mask_sigma = as_double();
        else if (key == "mask_truncate") s.hyper.mask_truncate = as_double();
    }
    validate(s.train);
    validate(s.hyper);
    return s;
}

TrainSettings load_train_settings(const std::string& path) { return parse_train_settings(read_file(path)); }

}  // namespace ropegraph
