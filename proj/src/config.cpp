#include "macft/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "macft/common.hpp"

namespace macft {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    std::int64_t out = 0;
    try {
        out = std::stoll(v, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error(strcat_msg("config: bad integer for ", key, ": '", v, "'"));
    }
    check(pos == v.size(), strcat_msg("config: bad integer for ", key, ": '", v, "'"));
    return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    std::uint64_t out = 0;
    try {
        out = std::stoull(v, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error(strcat_msg("config: bad unsigned for ", key, ": '", v, "'"));
    }
    check(pos == v.size(), strcat_msg("config: bad unsigned for ", key, ": '", v, "'"));
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error(strcat_msg("config: bad number for ", key, ": '", v, "'"));
    }
    check(pos == v.size(), strcat_msg("config: bad number for ", key, ": '", v, "'"));
    return out;
}

struct Entry {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<Entry>& schema() {
    static const std::vector<Entry> entries = [] {
        std::vector<Entry> e;
        auto add_int = [&e](const char* key, std::function<int&(RunConfig&)> ref) {
            e.push_back({key,
                         [ref](const RunConfig& c) {
                             return std::to_string(ref(const_cast<RunConfig&>(c)));
                         },
                         [key, ref](RunConfig& c, const std::string& v) {
                             ref(c) = static_cast<int>(parse_int(key, v));
                         }});
        };
        auto add_dbl = [&e](const char* key, std::function<double&(RunConfig&)> ref) {
            e.push_back({key,
                         [ref](const RunConfig& c) {
                             return fmt_double(ref(const_cast<RunConfig&>(c)));
                         },
                         [key, ref](RunConfig& c, const std::string& v) {
                             ref(c) = parse_double(key, v);
                         }});
        };
        auto add_str = [&e](const char* key, std::function<std::string&(RunConfig&)> ref) {
            e.push_back({key,
                         [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); },
                         [ref](RunConfig& c, const std::string& v) { ref(c) = v; }});
        };

        add_str("run.variant", [](RunConfig& c) -> std::string& { return c.variant; });
        e.push_back({"run.seed",
                     [](const RunConfig& c) { return std::to_string(c.seed); },
                     [](RunConfig& c, const std::string& v) {
                         c.seed = parse_uint("run.seed", v);
                     }});
        add_str("run.train_data", [](RunConfig& c) -> std::string& { return c.train_data; });
        add_str("run.eval_data", [](RunConfig& c) -> std::string& { return c.eval_data; });

        add_int("model.search_size", [](RunConfig& c) -> int& { return c.model.search_size; });
        add_int("model.template_size",
                [](RunConfig& c) -> int& { return c.model.template_size; });
        add_int("model.patch", [](RunConfig& c) -> int& { return c.model.patch; });
        add_int("model.dim", [](RunConfig& c) -> int& { return c.model.dim; });
        add_int("model.depth", [](RunConfig& c) -> int& { return c.model.depth; });
        add_int("model.heads", [](RunConfig& c) -> int& { return c.model.heads; });
        add_int("model.ffn_mult", [](RunConfig& c) -> int& { return c.model.ffn_mult; });
        add_int("model.freeze_count", [](RunConfig& c) -> int& { return c.model.freeze_count; });
        add_int("model.fusion_k", [](RunConfig& c) -> int& { return c.model.fusion_k; });

        add_dbl("sample.template_factor",
                [](RunConfig& c) -> double& { return c.sample.template_factor; });
        add_dbl("sample.search_factor",
                [](RunConfig& c) -> double& { return c.sample.search_factor; });
        add_dbl("sample.center_jitter",
                [](RunConfig& c) -> double& { return c.sample.center_jitter; });
        add_dbl("sample.scale_jitter_lo",
                [](RunConfig& c) -> double& { return c.sample.scale_jitter_lo; });
        add_dbl("sample.scale_jitter_hi",
                [](RunConfig& c) -> double& { return c.sample.scale_jitter_hi; });
        add_dbl("sample.min_crop_side",
                [](RunConfig& c) -> double& { return c.sample.min_crop_side; });

        add_int("train.epochs", [](RunConfig& c) -> int& { return c.train.epochs; });
        add_int("train.samples_per_epoch",
                [](RunConfig& c) -> int& { return c.train.samples_per_epoch; });
        add_int("train.batch", [](RunConfig& c) -> int& { return c.train.batch; });
        add_dbl("train.lr_backbone",
                [](RunConfig& c) -> double& { return c.train.lr_backbone; });
        add_dbl("train.lr_rest", [](RunConfig& c) -> double& { return c.train.lr_rest; });

        add_dbl("loss.giou", [](RunConfig& c) -> double& { return c.loss.giou; });
        add_dbl("loss.l1", [](RunConfig& c) -> double& { return c.loss.l1; });
        add_dbl("loss.kl", [](RunConfig& c) -> double& { return c.loss.kl; });
        return e;
    }();
    return entries;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value,
             const std::string& where) {
    for (const Entry& e : schema()) {
        if (e.key == key) {
            e.set(cfg, value);
            return;
        }
    }
    throw std::runtime_error(strcat_msg("config: unknown key '", key, "' (", where, ")"));
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        check(eq != std::string::npos,
              strcat_msg("config: line ", lineno, " is not key=value: '", line, "'"));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        check(!key.empty(), strcat_msg("config: empty key on line ", lineno));
        set_key(cfg, key, value, strcat_msg("line ", lineno));
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), strcat_msg("cannot open config: ", path));
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

void apply_override(RunConfig& cfg, const std::string& keyval) {
    const std::size_t eq = keyval.find('=');
    check(eq != std::string::npos,
          strcat_msg("--set expects key=value, got '", keyval, "'"));
    set_key(cfg, trim(keyval.substr(0, eq)), trim(keyval.substr(eq + 1)), "--set");
}

std::string emit_config(const RunConfig& cfg) {
    std::string out;
    for (const Entry& e : schema()) {
        out += e.key;
        out += '=';
        out += e.get(cfg);
        out += '\n';
    }
    return out;
}

void finalize_config(RunConfig& cfg) {
    parse_variant(cfg.variant);  // validates the name
    cfg.sample.search_size = cfg.model.search_size;
    cfg.sample.template_size = cfg.model.template_size;
    cfg.model.validate();
    check(cfg.train.epochs > 0 && cfg.train.samples_per_epoch > 0 && cfg.train.batch > 0,
          "config: train schedule fields must be positive");
    check(cfg.sample.scale_jitter_lo > 0 &&
              cfg.sample.scale_jitter_hi >= cfg.sample.scale_jitter_lo,
          "config: scale jitter range is invalid");
    check(cfg.loss.giou >= 0 && cfg.loss.l1 >= 0 && cfg.loss.kl >= 0,
          "config: loss weights must be non-negative");
}

}  // namespace macft
