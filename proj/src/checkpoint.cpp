#include "cvae/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "cvae/csv.hpp"

namespace cvae {

namespace {

std::filesystem::path with_suffix(std::filesystem::path stem, const char* suffix) {
    stem += suffix;
    return stem;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoul(item));
    return out;
}

}  // namespace

void write_model_metadata(std::ostream& out, const ModelConfig& cfg) {
    out << "format = cvae-model 1\n"
        << "condition_dim = " << cfg.condition_dim << '\n'
        << "target_dim = " << cfg.target_dim << '\n'
        << "latent_dim = " << cfg.latent_dim << '\n'
        << "prior = " << to_string(cfg.prior) << '\n'
        << "k = " << cfg.k << '\n'
        << "hidden = " << join_sizes(cfg.hidden) << '\n'
        << "activation = " << nn::to_string(cfg.activation) << '\n'
        << "likelihood = " << to_string(cfg.likelihood) << '\n'
        << "decoder = " << to_string(cfg.decoder) << '\n'
        << "kl = " << to_string(cfg.kl) << '\n'
        << "decoder_log_var_init = " << csv::format_number(cfg.decoder_log_var_init) << '\n';
}

ModelConfig read_model_metadata(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("model metadata: expected 'key = value'", offset);
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t\r") + 1);
            return s;
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
        offset += line.size() + 1;
    }
    auto get = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw FormatError("model metadata: missing key '" + key + "'", offset);
        return it->second;
    };
    if (get("format") != "cvae-model 1") throw FormatError("model metadata: unsupported format", 0);
    ModelConfig cfg;
    try {
        cfg.condition_dim = std::stoul(get("condition_dim"));
        cfg.target_dim = std::stoul(get("target_dim"));
        cfg.latent_dim = std::stoul(get("latent_dim"));
        cfg.prior = prior_kind_from_string(get("prior"));
        cfg.k = std::stoul(get("k"));
        cfg.hidden = parse_sizes(get("hidden"));
        cfg.activation = nn::activation_from_string(get("activation"));
        cfg.likelihood = likelihood_from_string(get("likelihood"));
        cfg.decoder = decoder_conditioning_from_string(get("decoder"));
        cfg.kl = kl_estimator_from_string(get("kl"));
        cfg.decoder_log_var_init = std::stod(get("decoder_log_var_init"));
    } catch (const std::logic_error& e) {
        throw FormatError(std::string("model metadata: ") + e.what(), 0);
    }
    return cfg;
}

void save_checkpoint(const std::filesystem::path& stem, const ClvmModel& model) {
    save_parameters(with_suffix(stem, ".params"), model.params);
    std::ofstream meta(with_suffix(stem, ".meta"));
    if (!meta) throw ContractError("cannot write " + with_suffix(stem, ".meta").string());
    write_model_metadata(meta, model.config);
}

ClvmModel load_checkpoint(const std::filesystem::path& stem) {
    std::ifstream meta(with_suffix(stem, ".meta"));
    if (!meta) throw ContractError("cannot open " + with_suffix(stem, ".meta").string());
    ClvmModel model = ClvmModel::skeleton(read_model_metadata(meta));
    model.params = load_parameters(with_suffix(stem, ".params"));
    const ClvmModel reference = ClvmModel::create(model.config, 0);
    if (!reference.params.same_layout(model.params))
        throw FormatError("checkpoint: parameter layout does not match the model metadata", 0);
    return model;
}

}  // namespace cvae
