#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "emocvae/model.hpp"

namespace emocvae {

constexpr const char* kCheckpointMagic = "emocvae-ckpt-v1";

// Self-describing container: version header, key=value metadata, inline
// vocabulary, then named raw little-endian double arrays.
inline void save_params(std::ostream& os, const ParamStore& params) {
    os << "params " << params.size() << '\n';
    for (const auto& [name, t] : params.items()) {
        os << name << ' ' << t->val.rows << ' ' << t->val.cols << '\n';
        os.write(reinterpret_cast<const char*>(t->val.a.data()),
                 std::streamsize(t->val.a.size() * sizeof(double)));
        os << '\n';
    }
}

inline void load_params(std::istream& is, ParamStore& params) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("params ", 0) != 0)
        throw std::runtime_error("checkpoint: missing params section");
    size_t count = std::stoul(line.substr(7));
    if (count != params.size())
        throw std::runtime_error("checkpoint: parameter count mismatch");
    for (size_t i = 0; i < count; ++i) {
        if (!std::getline(is, line)) throw std::runtime_error("checkpoint: truncated params");
        std::istringstream hs(line);
        std::string name;
        int rows = 0, cols = 0;
        hs >> name >> rows >> cols;
        Tensor t = params.get(name);
        if (t->val.rows != rows || t->val.cols != cols)
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
        is.read(reinterpret_cast<char*>(t->val.a.data()),
                std::streamsize(t->val.a.size() * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint: truncated array for " + name);
        char nl = 0;
        is.get(nl);
        if (nl != '\n') throw std::runtime_error("checkpoint: bad array terminator for " + name);
    }
}

inline void write_meta(std::ostream& os, const std::map<std::string, std::string>& meta) {
    os << "meta " << meta.size() << '\n';
    for (const auto& [k, v] : meta) os << k << '=' << v << '\n';
}

inline std::map<std::string, std::string> read_meta(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("meta ", 0) != 0)
        throw std::runtime_error("checkpoint: missing meta section");
    size_t count = std::stoul(line.substr(5));
    std::map<std::string, std::string> meta;
    for (size_t i = 0; i < count; ++i) {
        if (!std::getline(is, line)) throw std::runtime_error("checkpoint: truncated meta");
        auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("checkpoint: bad meta line");
        meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return meta;
}

inline void write_vocab_section(std::ostream& os, const Vocabulary& vocab) {
    os << "vocab " << vocab.size() << '\n';
    os << vocab.serialize();
}

inline Vocabulary read_vocab_section(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("vocab ", 0) != 0)
        throw std::runtime_error("checkpoint: missing vocab section");
    int count = std::stoi(line.substr(6));
    std::string text;
    for (int i = 0; i < count; ++i) {
        if (!std::getline(is, line)) throw std::runtime_error("checkpoint: truncated vocab");
        text += line;
        text += '\n';
    }
    return Vocabulary::deserialize(text);
}

inline void save_model_checkpoint(const std::string& path, const EmoCvaeModel& model, long step,
                                  uint64_t seed) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
    const ModelConfig& c = model.config();
    os << kCheckpointMagic << '\n';
    std::map<std::string, std::string> meta;
    meta["kind"] = "generator";
    meta["variant"] = variant_name(c.variant);
    meta["layers"] = std::to_string(c.tf.layers);
    meta["heads"] = std::to_string(c.tf.heads);
    meta["hidden_dim"] = std::to_string(c.tf.hidden_dim);
    meta["ffn_dim"] = std::to_string(c.tf.ffn_dim);
    meta["max_positions"] = std::to_string(c.tf.max_positions);
    meta["tie_lm_head"] = c.tf.tie_lm_head ? "1" : "0";
    meta["latent_dim"] = std::to_string(c.latent_dim);
    meta["share_enc_dec"] = c.share_enc_dec ? "1" : "0";
    meta["step"] = std::to_string(step);
    meta["seed"] = std::to_string(seed);
    write_meta(os, meta);
    write_vocab_section(os, model.vocab());
    save_params(os, model.params());
}

inline EmoCvaeModel load_model_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
    std::string magic;
    if (!std::getline(is, magic) || magic != kCheckpointMagic)
        throw std::runtime_error("not an emocvae-ckpt-v1 file: " + path);
    auto meta = read_meta(is);
    if (meta["kind"] != "generator")
        throw std::runtime_error("checkpoint kind mismatch (expected generator): " + path);
    Vocabulary vocab = read_vocab_section(is);
    ModelConfig cfg;
    cfg.variant = variant_from_name(meta.at("variant"));
    cfg.tf.layers = std::stoi(meta.at("layers"));
    cfg.tf.heads = std::stoi(meta.at("heads"));
    cfg.tf.hidden_dim = std::stoi(meta.at("hidden_dim"));
    cfg.tf.ffn_dim = std::stoi(meta.at("ffn_dim"));
    cfg.tf.max_positions = std::stoi(meta.at("max_positions"));
    cfg.tf.tie_lm_head = meta.at("tie_lm_head") == "1";
    cfg.latent_dim = std::stoi(meta.at("latent_dim"));
    cfg.share_enc_dec = meta.at("share_enc_dec") == "1";
    cfg.init_scale = 0.0;  // values are overwritten below
    EmoCvaeModel model(cfg, std::move(vocab), 0);
    load_params(is, model.params());
    return model;
}

}  // namespace emocvae
