#include "cvae/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "cvae/random.hpp"

#ifndef CVAE_DEFAULT_MNIST_DIR
#define CVAE_DEFAULT_MNIST_DIR "data/mnist"
#endif

namespace cvae::config {

namespace {

// Thrown by value parsers; the caller attaches line and field.
struct BadValue {
    std::string message;
};

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::uint64_t to_uint(std::string_view s) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size())
        throw BadValue{"expected a non-negative integer, got '" + std::string(s) + "'"};
    return v;
}

std::size_t to_size(std::string_view s) { return static_cast<std::size_t>(to_uint(s)); }

std::size_t to_positive(std::string_view s) {
    const std::size_t v = to_size(s);
    if (v == 0) throw BadValue{"expected a positive integer, got '" + std::string(s) + "'"};
    return v;
}

double to_double(std::string_view s) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
        throw BadValue{"expected a number, got '" + std::string(s) + "'"};
    return v;
}

std::vector<std::string_view> to_list(std::string_view s) {
    std::vector<std::string_view> out;
    if (trim(s).empty()) return out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = s.find(',', start);
        const auto item = trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (item.empty()) throw BadValue{"empty list item in '" + std::string(s) + "'"};
        out.push_back(item);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

template <class T, class F>
std::vector<T> map_list(std::string_view s, F f) {
    std::vector<T> out;
    for (auto item : to_list(s)) out.push_back(f(item));
    return out;
}

// Domain parsers throw ContractError; turn those into BadValue too.
template <class F>
auto wrap(F f, std::string_view s) {
    try {
        return f(s);
    } catch (const ContractError& e) {
        throw BadValue{e.what()};
    }
}

using Setter = std::function<void(ExperimentConfig&, std::string_view)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
    static const std::vector<std::pair<std::string, Setter>> table = {
        {"name", [](auto& c, auto v) {
             if (v.empty() || v.find('/') != std::string_view::npos)
                 throw BadValue{"name must be non-empty and contain no '/'"};
             c.name = v;
         }},
        {"output_dir", [](auto& c, auto v) { c.output_dir = v; }},
        {"seed", [](auto& c, auto v) { c.seed = to_uint(v); }},

        {"dataset.kind", [](auto& c, auto v) {
             if (v == "toy") c.dataset.kind = DatasetKind::Toy;
             else if (v == "four-gaussians") c.dataset.kind = DatasetKind::FourGaussians;
             else if (v == "mnist") c.dataset.kind = DatasetKind::Mnist;
             else throw BadValue{"expected toy, four-gaussians or mnist, got '" + std::string(v) + "'"};
         }},
        {"dataset.sigma", [](auto& c, auto v) {
             c.dataset.toy.sigma = to_double(v);
             if (!(c.dataset.toy.sigma > 0)) throw BadValue{"sigma must be positive"};
         }},
        {"dataset.samples_per_interval", [](auto& c, auto v) { c.dataset.toy.samples_per_interval = to_positive(v); }},
        {"dataset.points", [](auto& c, auto v) { c.dataset.points = to_positive(v); }},
        {"dataset.mnist_dir", [](auto& c, auto v) { c.dataset.mnist_dir = v; }},
        {"dataset.train_count", [](auto& c, auto v) { c.dataset.train_count = to_positive(v); }},
        {"dataset.test_count", [](auto& c, auto v) { c.dataset.test_count = to_positive(v); }},
        {"dataset.threshold", [](auto& c, auto v) {
             c.dataset.threshold = to_double(v);
             if (!(c.dataset.threshold > 0 && c.dataset.threshold < 1)) throw BadValue{"threshold must lie in (0, 1)"};
         }},
        {"dataset.binarize", [](auto& c, auto v) {
             if (v == "fixed") c.dataset.binarize = data::BinarizeMode::Fixed;
             else if (v == "stochastic") c.dataset.binarize = data::BinarizeMode::Stochastic;
             else throw BadValue{"expected fixed or stochastic, got '" + std::string(v) + "'"};
         }},

        {"model.latent_dim", [](auto& c, auto v) { c.model.latent_dim = to_positive(v); }},
        {"model.prior", [](auto& c, auto v) { c.model.prior = wrap(prior_kind_from_string, v); }},
        {"model.k", [](auto& c, auto v) { c.model.k = to_positive(v); }},
        {"model.hidden", [](auto& c, auto v) { c.model.hidden = map_list<std::size_t>(v, to_positive); }},
        {"model.activation", [](auto& c, auto v) { c.model.activation = wrap(nn::activation_from_string, v); }},
        {"model.likelihood", [](auto& c, auto v) {
             if (v != "auto") wrap(likelihood_from_string, v);
             c.model.likelihood = v;
         }},
        {"model.decoder", [](auto& c, auto v) { c.model.decoder = wrap(decoder_conditioning_from_string, v); }},
        {"model.kl", [](auto& c, auto v) { c.model.kl = wrap(kl_estimator_from_string, v); }},
        {"model.decoder_log_var_init", [](auto& c, auto v) { c.model.decoder_log_var_init = to_double(v); }},

        {"train.epochs", [](auto& c, auto v) { c.train.epochs = to_size(v); }},
        {"train.batch_size", [](auto& c, auto v) { c.train.batch_size = to_positive(v); }},
        {"train.lr", [](auto& c, auto v) { c.train.adam.lr = to_double(v); }},
        {"train.beta1", [](auto& c, auto v) { c.train.adam.beta1 = to_double(v); }},
        {"train.beta2", [](auto& c, auto v) { c.train.adam.beta2 = to_double(v); }},
        {"train.eps", [](auto& c, auto v) { c.train.adam.eps = to_double(v); }},
        {"train.samples", [](auto& c, auto v) { c.train.samples = to_positive(v); }},
        {"train.history_samples", [](auto& c, auto v) { c.train.history_samples = to_positive(v); }},

        {"eval.samples", [](auto& c, auto v) { c.eval.samples = to_positive(v); }},
        {"eval.metrics", [](auto& c, auto v) {
             static const std::vector<std::string_view> known = {"elbo", "nn-profile", "gap-mass", "mf-grid",
                                                                 "variety"};
             c.eval.metrics.clear();
             for (auto m : to_list(v)) {
                 if (std::find(known.begin(), known.end(), m) == known.end())
                     throw BadValue{"unknown metric '" + std::string(m) +
                                    "' (elbo, nn-profile, gap-mass, mf-grid, variety)"};
                 c.eval.metrics.emplace_back(m);
             }
         }},
        {"eval.split", [](auto& c, auto v) {
             if (v != "train" && v != "test") throw BadValue{"expected train or test, got '" + std::string(v) + "'"};
             c.eval.split = v;
         }},
        {"eval.radii", [](auto& c, auto v) { c.eval.radii = map_list<double>(v, to_double); }},
        {"eval.profile_conditions", [](auto& c, auto v) { c.eval.profile_conditions = to_positive(v); }},
        {"eval.threshold", [](auto& c, auto v) {
             c.eval.threshold = to_double(v);
             if (!(c.eval.threshold > 0 && c.eval.threshold < 1)) throw BadValue{"threshold must lie in (0, 1)"};
         }},
        {"eval.variety_samples", [](auto& c, auto v) { c.eval.variety_samples = to_positive(v); }},
        {"eval.variety_conditions", [](auto& c, auto v) { c.eval.variety_conditions = to_positive(v); }},
        {"eval.classifier_epochs", [](auto& c, auto v) { c.eval.classifier_epochs = to_positive(v); }},
        {"eval.classifier_hidden", [](auto& c, auto v) {
             c.eval.classifier_hidden = map_list<std::size_t>(v, to_positive);
         }},
        {"eval.gap_conditions", [](auto& c, auto v) { c.eval.gap_conditions = map_list<double>(v, to_double); }},
        {"eval.gap_samples", [](auto& c, auto v) { c.eval.gap_samples = to_positive(v); }},
        {"eval.mf_low", [](auto& c, auto v) { c.eval.mf_low = to_double(v); }},
        {"eval.mf_high", [](auto& c, auto v) { c.eval.mf_high = to_double(v); }},
        {"eval.mf_steps", [](auto& c, auto v) { c.eval.mf_steps = to_positive(v); }},
        {"eval.generate_samples", [](auto& c, auto v) { c.eval.generate_samples = to_positive(v); }},
        {"eval.generate_conditions", [](auto& c, auto v) { c.eval.generate_conditions = to_positive(v); }},
    };
    return table;
}

const Setter* find_setter(std::string_view key) {
    for (const auto& [name, setter] : setters())
        if (name == key) return &setter;
    return nullptr;
}

void assign(ExperimentConfig& cfg, const std::string& source, std::size_t line, const std::string& key,
            std::string_view value) {
    const Setter* setter = find_setter(key);
    if (!setter) throw ConfigError(source, line, key, "unknown key");
    try {
        (*setter)(cfg, value);
    } catch (const BadValue& e) {
        throw ConfigError(source, line, key, e.message);
    }
}

}  // namespace

ConfigError::ConfigError(const std::string& source, std::size_t line, const std::string& field,
                         const std::string& message)
    : ContractError(source + (line ? ":" + std::to_string(line) : std::string()) +
                    (field.empty() ? "" : ": field '" + field + "'") + ": " + message),
      line_(line),
      field_(field) {}

std::string_view to_string(DatasetKind k) {
    switch (k) {
        case DatasetKind::Toy: return "toy";
        case DatasetKind::FourGaussians: return "four-gaussians";
        case DatasetKind::Mnist: return "mnist";
    }
    return "?";
}

std::uint64_t ExperimentConfig::data_seed() const { return mix_seed(seed, 0); }
std::uint64_t ExperimentConfig::init_seed() const { return mix_seed(seed, 1); }
std::uint64_t ExperimentConfig::train_seed() const { return mix_seed(seed, 2); }
std::uint64_t ExperimentConfig::eval_seed() const { return mix_seed(seed, 3); }

std::filesystem::path ExperimentConfig::experiment_dir() const {
    const char* root = std::getenv("CVAE_OUTPUT_ROOT");
    const std::filesystem::path base = root && *root ? std::filesystem::path(root) : std::filesystem::path(output_dir);
    return base / name;
}

std::filesystem::path ExperimentConfig::mnist_path() const {
    if (!dataset.mnist_dir.empty()) return dataset.mnist_dir;
    const char* env = std::getenv("CVAE_MNIST_DIR");
    if (env && *env) return env;
    return CVAE_DEFAULT_MNIST_DIR;
}

ModelConfig ExperimentConfig::model_config(std::size_t condition_dim, std::size_t target_dim) const {
    ModelConfig m;
    m.condition_dim = condition_dim;
    m.target_dim = target_dim;
    m.latent_dim = model.latent_dim;
    m.prior = model.prior;
    m.k = model.k;
    m.hidden = model.hidden;
    m.activation = model.activation;
    if (model.likelihood == "auto")
        m.likelihood = dataset.kind == DatasetKind::Mnist ? Likelihood::Bernoulli : Likelihood::Gaussian;
    else
        m.likelihood = likelihood_from_string(model.likelihood);
    m.decoder = model.decoder;
    m.kl = model.kl;
    m.decoder_log_var_init = model.decoder_log_var_init;
    m.validate();
    return m;
}

ExperimentConfig parse(std::string_view text, const std::string& source) {
    ExperimentConfig cfg;
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t end = std::min(text.find('\n', pos), text.size());
        const std::string_view line = trim(text.substr(pos, end - pos));
        ++line_no;
        pos = end + 1;
        if (line.empty() || line.front() == '#' || line.front() == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(source, line_no, "", "unterminated section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (section != "dataset" && section != "model" && section != "train" && section != "eval")
                throw ConfigError(source, line_no, section,
                                  "unknown section (expected dataset, model, train or eval)");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(source, line_no, "", "expected 'key = value'");
        const std::string key(trim(line.substr(0, eq)));
        if (key.empty()) throw ConfigError(source, line_no, "", "missing key before '='");
        assign(cfg, source, line_no, section.empty() ? key : section + "." + key, trim(line.substr(eq + 1)));
    }
    return cfg;
}

ExperimentConfig load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path.string(), 0, "", "cannot open config file");
    std::ostringstream text;
    text << in.rdbuf();
    return parse(text.str(), path.string());
}

void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ConfigError("--set", 0, "", "expected section.key=value");
    assign(cfg, "--set", 0, std::string(trim(assignment.substr(0, eq))), trim(assignment.substr(eq + 1)));
}

std::vector<std::string> known_keys() {
    std::vector<std::string> out;
    for (const auto& [name, setter] : setters()) out.push_back(name);
    return out;
}

}  // namespace cvae::config
