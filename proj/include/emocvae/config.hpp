#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "emocvae/rng.hpp"

namespace emocvae {

// Flat key=value configuration; '#' starts a comment. Serialization is
// sorted, so parse(serialize(parse(text))) == parse(text).
class Config {
  public:
    Config() = default;

    static Config parse_string(const std::string& text) {
        Config c;
        std::istringstream is(text);
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            auto trim = [](std::string s) {
                size_t a = s.find_first_not_of(" \t\r");
                if (a == std::string::npos) return std::string();
                size_t b = s.find_last_not_of(" \t\r");
                return s.substr(a, b - a + 1);
            };
            line = trim(line);
            if (line.empty()) continue;
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("config line " + std::to_string(lineno) +
                                         ": expected key=value");
            std::string key = trim(line.substr(0, eq));
            std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
            c.kv_[key] = value;
        }
        return c;
    }

    static Config parse_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("cannot read config file: " + path);
        std::ostringstream ss;
        ss << is.rdbuf();
        return parse_string(ss.str());
    }

    std::string serialize() const {
        std::string out;
        for (const auto& [k, v] : kv_) {
            out += k;
            out += '=';
            out += v;
            out += '\n';
        }
        return out;
    }

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }
    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string get(const std::string& key, const std::string& def) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? def : it->second;
    }

    std::string require(const std::string& key) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) throw std::runtime_error("config: missing required key '" + key + "'");
        return it->second;
    }

    long get_long(const std::string& key, long def) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? def : std::stol(it->second);
    }

    int get_int(const std::string& key, int def) const { return int(get_long(key, def)); }

    double get_double(const std::string& key, double def) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? def : std::stod(it->second);
    }

    bool get_bool(const std::string& key, bool def) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return def;
        const std::string& v = it->second;
        if (v == "1" || v == "true" || v == "yes") return true;
        if (v == "0" || v == "false" || v == "no") return false;
        throw std::runtime_error("config: '" + key + "' is not a boolean: " + v);
    }

    uint64_t get_seed(const std::string& key, uint64_t def) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? def : std::stoull(it->second);
    }

    const std::map<std::string, std::string>& entries() const { return kv_; }

    bool operator==(const Config& o) const { return kv_ == o.kv_; }

  private:
    std::map<std::string, std::string> kv_;
};

inline std::string digest_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot digest missing file: " + path);
    Fnv1a f;
    char buf[65536];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        f.update(buf, size_t(is.gcount()));
        if (!is) break;
    }
    return f.hex();
}

// Flat replayable record of a command run: full resolved config plus the
// paths and content digests of every input and output artifact.
class Manifest {
  public:
    Manifest(std::string command, uint64_t seed) {
        kv_["command"] = std::move(command);
        kv_["seed"] = std::to_string(seed);
    }

    void record_config(const Config& cfg) {
        for (const auto& [k, v] : cfg.entries()) kv_["config." + k] = v;
    }

    void record_input(const std::string& name, const std::string& path) {
        kv_["input." + name + ".path"] = path;
        kv_["input." + name + ".digest"] = digest_file(path);
    }

    void record_output(const std::string& name, const std::string& path) {
        kv_["output." + name + ".path"] = path;
        kv_["output." + name + ".digest"] = digest_file(path);
    }

    void record(const std::string& key, const std::string& value) { kv_[key] = value; }

    void write(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw std::runtime_error("cannot write manifest: " + path);
        for (const auto& [k, v] : kv_) os << k << '=' << v << '\n';
    }

    const std::map<std::string, std::string>& entries() const { return kv_; }

  private:
    std::map<std::string, std::string> kv_;
};

}  // namespace emocvae
