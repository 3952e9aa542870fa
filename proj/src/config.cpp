#include "bird/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "bird/error.hpp"

namespace bird {

namespace {

std::string fmt(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.17g", v);
    return b;
}

}  // namespace

void validate(const RunConfig& cfg) {
    if (cfg.n_train < 3)
        throw ConfigError("n_train must be >= 3 (local fusion needs two neighbors), got " +
                          std::to_string(cfg.n_train));
    if (cfg.n_infer < 1) throw ConfigError("n_infer must be >= 1");
    if (cfg.steps < 0 || cfg.epochs < 1) throw ConfigError("step/epoch budget must be positive");
    if (cfg.batch < 1) throw ConfigError("batch must be >= 1");
    if (!(cfg.lr > 0.0)) throw ConfigError("lr must be positive");
    if (cfg.lambda < 0.0 || cfg.eta < 0.0) throw ConfigError("loss weights must be >= 0");
    if (cfg.score_thresh < 0.0 || cfg.score_thresh > 1.0 || cfg.nms_iou <= 0.0 ||
        cfg.nms_iou >= 1.0)
        throw ConfigError("score_thresh must be in [0,1] and nms_iou in (0,1)");
}

void save_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open for writing: " + path);
    out << "n_train=" << cfg.n_train << "\n";
    out << "n_infer=" << cfg.n_infer << "\n";
    out << "size=" << cfg.size << "\n";
    out << "epochs=" << cfg.epochs << "\n";
    out << "steps=" << cfg.steps << "\n";
    out << "batch=" << cfg.batch << "\n";
    out << "lr=" << fmt(cfg.lr) << "\n";
    out << "lambda=" << fmt(cfg.lambda) << "\n";
    out << "eta=" << fmt(cfg.eta) << "\n";
    out << "score_thresh=" << fmt(cfg.score_thresh) << "\n";
    out << "nms_iou=" << fmt(cfg.nms_iou) << "\n";
    out << "enable_bp=" << (cfg.enable_bp ? 1 : 0) << "\n";
    out << "enable_fp=" << (cfg.enable_fp ? 1 : 0) << "\n";
    out << "enable_ltmf=" << (cfg.enable_ltmf ? 1 : 0) << "\n";
    out << "enable_gtmf=" << (cfg.enable_gtmf ? 1 : 0) << "\n";
    out << "enable_stf=" << (cfg.enable_stf ? 1 : 0) << "\n";
    out << "seed=" << cfg.seed << "\n";
    out << "data=" << cfg.data << "\n";
    out << "out=" << cfg.out << "\n";
    out << "ckpt=" << cfg.ckpt << "\n";
    if (!out) throw InputError("write failed: " + path);
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open: " + path);

    RunConfig cfg;
    std::map<std::string, std::function<void(const std::string&, long)>> setters;
    auto int_field = [&path](int& dst) {
        return [&dst, &path](const std::string& v, long ln) {
            try {
                dst = std::stoi(v);
            } catch (const std::exception&) {
                throw parse_error(path, ln, "expected integer, got '" + v + "'");
            }
        };
    };
    auto real_field = [&path](double& dst) {
        return [&dst, &path](const std::string& v, long ln) {
            try {
                dst = std::stod(v);
            } catch (const std::exception&) {
                throw parse_error(path, ln, "expected number, got '" + v + "'");
            }
        };
    };
    auto bool_field = [&path](bool& dst) {
        return [&dst, &path](const std::string& v, long ln) {
            if (v == "0" || v == "false")
                dst = false;
            else if (v == "1" || v == "true")
                dst = true;
            else
                throw parse_error(path, ln, "expected 0/1, got '" + v + "'");
        };
    };
    auto string_field = [](std::string& dst) {
        return [&dst](const std::string& v, long) { dst = v; };
    };

    setters["n_train"] = int_field(cfg.n_train);
    setters["n_infer"] = int_field(cfg.n_infer);
    setters["size"] = int_field(cfg.size);
    setters["epochs"] = int_field(cfg.epochs);
    setters["steps"] = int_field(cfg.steps);
    setters["batch"] = int_field(cfg.batch);
    setters["lr"] = real_field(cfg.lr);
    setters["lambda"] = real_field(cfg.lambda);
    setters["eta"] = real_field(cfg.eta);
    setters["score_thresh"] = real_field(cfg.score_thresh);
    setters["nms_iou"] = real_field(cfg.nms_iou);
    setters["enable_bp"] = bool_field(cfg.enable_bp);
    setters["enable_fp"] = bool_field(cfg.enable_fp);
    setters["enable_ltmf"] = bool_field(cfg.enable_ltmf);
    setters["enable_gtmf"] = bool_field(cfg.enable_gtmf);
    setters["enable_stf"] = bool_field(cfg.enable_stf);
    setters["seed"] = [&cfg, &path](const std::string& v, long ln) {
        try {
            cfg.seed = std::stoull(v);
        } catch (const std::exception&) {
            throw parse_error(path, ln, "expected unsigned integer, got '" + v + "'");
        }
    };
    setters["data"] = string_field(cfg.data);
    setters["out"] = string_field(cfg.out);
    setters["ckpt"] = string_field(cfg.ckpt);

    std::string line;
    long ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        if (line.empty() || line[0] == '#') continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw parse_error(path, ln, "expected key=value");
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        const auto it = setters.find(key);
        if (it == setters.end()) throw parse_error(path, ln, "unknown key '" + key + "'");
        it->second(val, ln);
    }
    return cfg;
}

RunConfig with_env_overrides(RunConfig cfg) {
    if (const char* s = std::getenv("BIRD_SEED")) {
        try {
            cfg.seed = std::stoull(s);
        } catch (const std::exception&) {
            throw ConfigError(std::string("BIRD_SEED is not an unsigned integer: ") + s);
        }
    }
    return cfg;
}

}  // namespace bird
