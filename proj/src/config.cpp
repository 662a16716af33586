#include "config.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace glma {

ScaleProfile ScaleProfile::desk() { return ScaleProfile{}; }

ScaleProfile ScaleProfile::paper() {
    ScaleProfile p;
    p.d_model = 4096;
    p.n_layers = 32;
    p.length = 256;
    p.seq_sd = 77;
    p.d_sd = 2048;
    p.d_pool = 1280;
    p.lat_c = 4;
    p.lat_h = 128;
    p.lat_w = 128;
    p.timesteps = 1000;
    p.vocab = 32000;
    p.img_size = 1024;
    return p;
}

void ScaleProfile::validate() const {
    auto pos = [](int v, const char* name) {
        if (v <= 0) fail(ErrorKind::validation, std::string("profile.") + name + " must be positive");
    };
    pos(d_model, "d_model");
    pos(n_layers, "n_layers");
    pos(length, "length");
    pos(seq_sd, "seq_sd");
    pos(d_sd, "d_sd");
    pos(d_pool, "d_pool");
    pos(lat_c, "lat_c");
    pos(lat_h, "lat_h");
    pos(lat_w, "lat_w");
    pos(timesteps, "timesteps");
    pos(vocab, "vocab");
    pos(img_size, "img_size");
    if (vocab < 256)
        fail(ErrorKind::validation, "profile.vocab must be at least 256 (byte tokenizer)");
}

const char* ddpm_mode_name(DdpmMode m) { return m == DdpmMode::verbatim ? "verbatim" : "eps_pred"; }
const char* align_mode_name(AlignMode m) { return m == AlignMode::squared ? "squared" : "literal"; }

DdpmMode parse_ddpm_mode(const std::string& s) {
    if (s == "verbatim") return DdpmMode::verbatim;
    if (s == "eps_pred") return DdpmMode::eps_pred;
    fail(ErrorKind::validation, "ddpm_mode must be 'verbatim' or 'eps_pred', got '" + s + "'");
}

AlignMode parse_align_mode(const std::string& s) {
    if (s == "squared") return AlignMode::squared;
    if (s == "literal") return AlignMode::literal;
    fail(ErrorKind::validation, "align_mode must be 'squared' or 'literal', got '" + s + "'");
}

void RunConfig::validate() const {
    profile.validate();
    if (!(lr > 0.0)) fail(ErrorKind::validation, "lr must be positive");
    if (batch_size < 1) fail(ErrorKind::validation, "batch_size must be at least 1");
    if (epochs < 1) fail(ErrorKind::validation, "epochs must be at least 1");
    if (!(phi0 >= 0.0)) fail(ErrorKind::validation, "phi0 must be non-negative");
    if (!(phi_decay > 0.0 && phi_decay <= 1.0))
        fail(ErrorKind::validation, "phi_decay must lie in (0, 1]");
    if (train_layer > profile.n_layers)
        fail(ErrorKind::validation, "train_layer exceeds hidden stack depth");
    if (adapter_layers < 1) fail(ErrorKind::validation, "adapter_layers must be at least 1");
    if (adapter_dq < 1) fail(ErrorKind::validation, "adapter_dq must be at least 1");
    if (adapter_ffn_mult < 1) fail(ErrorKind::validation, "adapter_ffn_mult must be at least 1");
    if (!(beta_start > 0.0 && beta_start < 1.0))
        fail(ErrorKind::validation, "beta_start must lie in (0, 1)");
    if (!(beta_end > beta_start && beta_end < 1.0))
        fail(ErrorKind::validation, "beta_end must lie in (beta_start, 1)");
    if (sample_steps < 0 || sample_steps > profile.timesteps)
        fail(ErrorKind::validation, "sample_steps must lie in [0, timesteps]");
    if (max_new < 0) fail(ErrorKind::validation, "max_new must be non-negative");
    if (story_max_new < 0) fail(ErrorKind::validation, "story_max_new must be non-negative");
    for (double e : {eps_text_to_image, eps_edit_default, eps_edit_layout,
                     eps_edit_color_texture, eps_storytelling}) {
        if (!(e >= 0.0 && e <= 1.0))
            fail(ErrorKind::validation, "epsilon defaults must lie in [0, 1]");
    }
}

void apply_preset(RunConfig& cfg, const std::string& name) {
    if (name == "desk") {
        RunConfig fresh;
        fresh.seed = cfg.seed;
        cfg = fresh;
        return;
    }
    if (name == "paper-recipe") {
        cfg.lr = 1e-4;
        cfg.batch_size = 8;
        cfg.epochs = 4;
        cfg.phi0 = 1.0;
        cfg.phi_decay = 0.1;
        return;
    }
    fail(ErrorKind::validation, "unknown preset '" + name + "'");
}

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

[[noreturn]] void line_fail(const std::string& origin, int line, const std::string& msg) {
    fail(ErrorKind::parse, origin + ":" + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& v, const std::string& key,
                    const std::string& origin, int line) {
    try {
        size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        line_fail(origin, line, "value for '" + key + "' is not a number: '" + v + "'");
    }
}

int64_t parse_int(const std::string& v, const std::string& key,
                  const std::string& origin, int line) {
    try {
        size_t used = 0;
        long long i = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        line_fail(origin, line, "value for '" + key + "' is not an integer: '" + v + "'");
    }
}

} // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = raw;
        if (auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            line_fail(origin, lineno, "expected 'key = value', got '" + trim(raw) + "'");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty()) line_fail(origin, lineno, "empty key");
        if (val.empty()) line_fail(origin, lineno, "empty value for '" + key + "'");

        auto dbl = [&] { return parse_double(val, key, origin, lineno); };
        auto integer = [&] { return parse_int(val, key, origin, lineno); };

        try {
            if (key == "preset") apply_preset(cfg, val);
            else if (key == "profile") {
                if (val == "desk") cfg.profile = ScaleProfile::desk();
                else if (val == "paper") cfg.profile = ScaleProfile::paper();
                else line_fail(origin, lineno, "profile must be 'desk' or 'paper'");
            }
            else if (key == "seed") cfg.seed = static_cast<uint64_t>(integer());
            else if (key == "lr") cfg.lr = dbl();
            else if (key == "batch_size") cfg.batch_size = static_cast<int>(integer());
            else if (key == "epochs") cfg.epochs = static_cast<int>(integer());
            else if (key == "phi0") cfg.phi0 = dbl();
            else if (key == "phi_decay") cfg.phi_decay = dbl();
            else if (key == "ddpm_mode") cfg.ddpm_mode = parse_ddpm_mode(val);
            else if (key == "align_mode") cfg.align_mode = parse_align_mode(val);
            else if (key == "train_layer") cfg.train_layer = static_cast<int>(integer());
            else if (key == "adapter_layers") cfg.adapter_layers = static_cast<int>(integer());
            else if (key == "adapter_dq") cfg.adapter_dq = static_cast<int>(integer());
            else if (key == "adapter_ffn_mult") cfg.adapter_ffn_mult = static_cast<int>(integer());
            else if (key == "beta_start") cfg.beta_start = dbl();
            else if (key == "beta_end") cfg.beta_end = dbl();
            else if (key == "sample_steps") cfg.sample_steps = static_cast<int>(integer());
            else if (key == "max_new") cfg.max_new = static_cast<int>(integer());
            else if (key == "story_max_new") cfg.story_max_new = static_cast<int>(integer());
            else if (key == "epsilon.text_to_image") cfg.eps_text_to_image = dbl();
            else if (key == "epsilon.edit_default") cfg.eps_edit_default = dbl();
            else if (key == "epsilon.edit_layout") cfg.eps_edit_layout = dbl();
            else if (key == "epsilon.edit_color_texture") cfg.eps_edit_color_texture = dbl();
            else if (key == "epsilon.storytelling") cfg.eps_storytelling = dbl();
            else if (key == "profile.d_model") cfg.profile.d_model = static_cast<int>(integer());
            else if (key == "profile.n_layers") cfg.profile.n_layers = static_cast<int>(integer());
            else if (key == "profile.length") cfg.profile.length = static_cast<int>(integer());
            else if (key == "profile.seq_sd") cfg.profile.seq_sd = static_cast<int>(integer());
            else if (key == "profile.d_sd") cfg.profile.d_sd = static_cast<int>(integer());
            else if (key == "profile.d_pool") cfg.profile.d_pool = static_cast<int>(integer());
            else if (key == "profile.lat_c") cfg.profile.lat_c = static_cast<int>(integer());
            else if (key == "profile.lat_h") cfg.profile.lat_h = static_cast<int>(integer());
            else if (key == "profile.lat_w") cfg.profile.lat_w = static_cast<int>(integer());
            else if (key == "profile.timesteps") cfg.profile.timesteps = static_cast<int>(integer());
            else if (key == "profile.vocab") cfg.profile.vocab = static_cast<int>(integer());
            else if (key == "profile.img_size") cfg.profile.img_size = static_cast<int>(integer());
            else line_fail(origin, lineno, "unknown key '" + key + "'");
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::parse) throw;
            line_fail(origin, lineno, e.what());
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    if (path.empty()) {
        RunConfig cfg;
        cfg.validate();
        return cfg;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

std::string canonical_config_string(const RunConfig& cfg) {
    char buf[64];
    std::ostringstream out;
    auto num = [&](const char* key, double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << key << "=" << buf << "\n";
    };
    const ScaleProfile& p = cfg.profile;
    out << "d_model=" << p.d_model << "\n"
        << "n_layers=" << p.n_layers << "\n"
        << "length=" << p.length << "\n"
        << "seq_sd=" << p.seq_sd << "\n"
        << "d_sd=" << p.d_sd << "\n"
        << "d_pool=" << p.d_pool << "\n"
        << "lat_c=" << p.lat_c << "\n"
        << "lat_h=" << p.lat_h << "\n"
        << "lat_w=" << p.lat_w << "\n"
        << "timesteps=" << p.timesteps << "\n"
        << "vocab=" << p.vocab << "\n"
        << "img_size=" << p.img_size << "\n";
    out << "seed=" << cfg.seed << "\n";
    num("lr", cfg.lr);
    out << "batch_size=" << cfg.batch_size << "\n"
        << "epochs=" << cfg.epochs << "\n";
    num("phi0", cfg.phi0);
    num("phi_decay", cfg.phi_decay);
    out << "ddpm_mode=" << ddpm_mode_name(cfg.ddpm_mode) << "\n"
        << "align_mode=" << align_mode_name(cfg.align_mode) << "\n"
        << "train_layer=" << cfg.train_layer << "\n"
        << "adapter_layers=" << cfg.adapter_layers << "\n"
        << "adapter_dq=" << cfg.adapter_dq << "\n"
        << "adapter_ffn_mult=" << cfg.adapter_ffn_mult << "\n";
    num("beta_start", cfg.beta_start);
    num("beta_end", cfg.beta_end);
    out << "sample_steps=" << cfg.sample_steps << "\n"
        << "max_new=" << cfg.max_new << "\n"
        << "story_max_new=" << cfg.story_max_new << "\n";
    num("epsilon.text_to_image", cfg.eps_text_to_image);
    num("epsilon.edit_default", cfg.eps_edit_default);
    num("epsilon.edit_layout", cfg.eps_edit_layout);
    num("epsilon.edit_color_texture", cfg.eps_edit_color_texture);
    num("epsilon.storytelling", cfg.eps_storytelling);
    return out.str();
}

uint64_t config_hash(const RunConfig& cfg) {
    return fnv1a64(canonical_config_string(cfg));
}

} // namespace glma
