#include "lumidiff/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

#include "lumidiff/error.hpp"
#include "lumidiff/rng.hpp"

namespace lumidiff {

// ---- TOML subset -----------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool bare_key(const std::string& k) {
    if (k.empty()) return false;
    for (unsigned char ch : k)
        if (!(std::isalnum(ch) || ch == '_' || ch == '-')) return false;
    return true;
}

// Strips a trailing comment that is not inside a string.
std::string strip_comment(const std::string& line) {
    char quote = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quote) {
            if (quote == '"' && ch == '\\') {
                ++i;
                continue;
            }
            if (ch == quote) quote = 0;
        } else if (ch == '"' || ch == '\'') {
            quote = ch;
        } else if (ch == '#') {
            return line.substr(0, i);
        }
    }
    return line;
}

std::string parse_basic_string(const std::string& body) {
    std::string out;
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (body[i] != '\\') {
            out += body[i];
            continue;
        }
        if (++i >= body.size()) throw ConfigError("dangling escape in string");
        switch (body[i]) {
            case '"': out += '"'; break;
            case '\\': out += '\\'; break;
            case 'n': out += '\n'; break;
            case 't': out += '\t'; break;
            case 'r': out += '\r'; break;
            default: throw ConfigError(std::string("unsupported escape \\") + body[i]);
        }
    }
    return out;
}

std::optional<TomlValue> parse_number(std::string t) {
    std::string clean;
    for (char ch : t)
        if (ch != '_') clean += ch;
    t = clean;
    if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
    if (t == "-inf") return -std::numeric_limits<double>::infinity();
    if (t == "nan" || t == "+nan" || t == "-nan") return std::numeric_limits<double>::quiet_NaN();
    if (t.empty()) return std::nullopt;
    const bool is_float = t.find_first_of(".eE") != std::string::npos;
    const char* first = t.data() + (t[0] == '+' ? 1 : 0);
    const char* last = t.data() + t.size();
    if (is_float) {
        double v = 0.0;
        auto [p, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || p != last) return std::nullopt;
        return v;
    }
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || p != last) return std::nullopt;
    return v;
}

TomlValue parse_value(const std::string& raw) {
    const std::string t = trim(raw);
    if (t.empty()) throw ConfigError("missing value");
    if (t.front() == '"') {
        if (t.size() < 2 || t.back() != '"') throw ConfigError("unterminated string " + t);
        return parse_basic_string(t.substr(1, t.size() - 2));
    }
    if (t.front() == '\'') {
        if (t.size() < 2 || t.back() != '\'') throw ConfigError("unterminated string " + t);
        return t.substr(1, t.size() - 2);
    }
    if (t == "true") return true;
    if (t == "false") return false;
    if (t.front() == '[' || t.front() == '{') throw ConfigError("arrays and inline tables are not supported");
    if (auto n = parse_number(t)) return *n;
    throw ConfigError("cannot parse value '" + t + "'");
}

}  // namespace

TomlDocument parse_toml(const std::string& text, const std::string& source) {
    TomlDocument doc;
    std::istringstream is(text);
    std::string line, table;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string where = source + ":" + std::to_string(lineno) + ": ";
        try {
            const std::string l = trim(strip_comment(line));
            if (l.empty()) continue;
            if (l.front() == '[') {
                if (l.back() != ']' || l.size() < 3 || l[1] == '[') throw ConfigError("malformed table header");
                table = trim(l.substr(1, l.size() - 2));
                if (!bare_key(table)) throw ConfigError("invalid table name '" + table + "'");
                continue;
            }
            const auto eq = l.find('=');
            if (eq == std::string::npos) throw ConfigError("expected key = value");
            const std::string key = trim(l.substr(0, eq));
            if (!bare_key(key)) throw ConfigError("invalid key '" + key + "'");
            const std::string full = table.empty() ? key : table + "." + key;
            if (doc.count(full)) throw ConfigError("duplicate key '" + full + "'");
            doc.emplace(full, parse_value(l.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    return doc;
}

TomlValue parse_toml_scalar(const std::string& text) {
    const std::string t = trim(text);
    if (!t.empty() && (t.front() == '"' || t.front() == '\'')) return parse_value(t);
    if (t == "true") return true;
    if (t == "false") return false;
    if (auto n = parse_number(t)) return *n;
    return t;
}

// ---- schema -------------------------------------------------------------

namespace {

std::string type_name(const TomlValue& v) {
    switch (v.index()) {
        case 0: return "boolean";
        case 1: return "integer";
        case 2: return "float";
        default: return "string";
    }
}

double as_double(const std::string& key, const TomlValue& v) {
    if (auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
    if (auto* d = std::get_if<double>(&v)) return *d;
    throw ConfigError(key + ": expected a number, got " + type_name(v));
}

std::int64_t as_int64(const std::string& key, const TomlValue& v) {
    if (auto* i = std::get_if<std::int64_t>(&v)) return *i;
    throw ConfigError(key + ": expected an integer, got " + type_name(v));
}

int as_int(const std::string& key, const TomlValue& v) {
    const auto i = as_int64(key, v);
    if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max())
        throw ConfigError(key + ": integer out of range");
    return static_cast<int>(i);
}

std::uint64_t as_seed(const std::string& key, const TomlValue& v) {
    const auto i = as_int64(key, v);
    if (i < 0) throw ConfigError(key + ": must be >= 0");
    return static_cast<std::uint64_t>(i);
}

bool as_bool(const std::string& key, const TomlValue& v) {
    if (auto* b = std::get_if<bool>(&v)) return *b;
    throw ConfigError(key + ": expected a boolean, got " + type_name(v));
}

std::string as_string(const std::string& key, const TomlValue& v) {
    if (auto* s = std::get_if<std::string>(&v)) return *s;
    throw ConfigError(key + ": expected a string, got " + type_name(v));
}

using Setter = std::function<void(RunConfig&, const std::string&, const TomlValue&)>;

template <class F>
Setter num(F field) {
    return [field](RunConfig& c, const std::string& k, const TomlValue& v) { c.*field = as_double(k, v); };
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"seed", [](RunConfig& c, const std::string& k, const TomlValue& v) { c.seed = as_seed(k, v); }},
        {"train.iterations", [](RunConfig& c, const std::string& k, const TomlValue& v) { c.iterations = as_int(k, v); }},
        {"train.learning_rate", num(&RunConfig::learning_rate)},
        {"train.beta1", num(&RunConfig::beta1)},
        {"train.beta2", num(&RunConfig::beta2)},
        {"train.adam_eps", num(&RunConfig::adam_eps)},
        {"train.grad_clip", num(&RunConfig::grad_clip)},
        {"train.rec_sample_steps",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.rec_sample_steps = as_int(k, v); }},
        {"train.checkpoint_every",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.checkpoint_every = as_int(k, v); }},
        {"train.update_mode",
         [](RunConfig& c, const std::string& k, const TomlValue& v) {
             const auto s = as_string(k, v);
             if (s == "joint") c.update_mode = UpdateMode::joint;
             else if (s == "alternating") c.update_mode = UpdateMode::alternating;
             else throw ConfigError(k + ": expected \"joint\" or \"alternating\"");
         }},
        {"dataset.root", [](RunConfig& c, const std::string& k, const TomlValue& v) { c.dataset.root = as_string(k, v); }},
        {"dataset.glob", [](RunConfig& c, const std::string& k, const TomlValue& v) { c.dataset.glob = as_string(k, v); }},
        {"dataset.patch_size",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.dataset.patch_size = as_int(k, v); }},
        {"dataset.batch_size",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.dataset.batch_size = as_int(k, v); }},
        {"dataset.shuffle_seed",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.dataset.shuffle_seed = as_seed(k, v); }},
        {"schedule.timesteps",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.schedule.timesteps = as_int(k, v); }},
        {"schedule.beta_start",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.schedule.beta_start = as_double(k, v); }},
        {"schedule.beta_end",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.schedule.beta_end = as_double(k, v); }},
        {"schedule.sample_steps",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.schedule.sample_steps = as_int(k, v); }},
        {"model.illum_width", [](RunConfig& c, const std::string& k, const TomlValue& v) { c.illum.hidden = as_int(k, v); }},
        {"model.illum_layers", [](RunConfig& c, const std::string& k, const TomlValue& v) { c.illum.layers = as_int(k, v); }},
        {"model.epsilon_div",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.illum.epsilon_div = as_double(k, v); }},
        {"model.illum_output_bias",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.illum.output_bias = as_double(k, v); }},
        {"model.unet_width", [](RunConfig& c, const std::string& k, const TomlValue& v) { c.unet_width = as_int(k, v); }},
        {"model.unet_levels", [](RunConfig& c, const std::string& k, const TomlValue& v) { c.unet_levels = as_int(k, v); }},
        {"loss.omega", [](RunConfig& c, const std::string& k, const TomlValue& v) { c.loss.omega = as_double(k, v); }},
        {"loss.varpi", [](RunConfig& c, const std::string& k, const TomlValue& v) { c.loss.varpi = as_double(k, v); }},
        {"loss.vartheta1", [](RunConfig& c, const std::string& k, const TomlValue& v) { c.loss.vartheta1 = as_double(k, v); }},
        {"loss.vartheta2", [](RunConfig& c, const std::string& k, const TomlValue& v) { c.loss.vartheta2 = as_double(k, v); }},
        {"loss.gamma_sigma",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.loss.gamma_sigma = as_double(k, v); }},
        {"loss.ssim_window", [](RunConfig& c, const std::string& k, const TomlValue& v) { c.loss.ssim_window = as_int(k, v); }},
        {"loss.ssim_k1", [](RunConfig& c, const std::string& k, const TomlValue& v) { c.loss.ssim_k1 = as_double(k, v); }},
        {"loss.ssim_k2", [](RunConfig& c, const std::string& k, const TomlValue& v) { c.loss.ssim_k2 = as_double(k, v); }},
        {"loss.spa_region", [](RunConfig& c, const std::string& k, const TomlValue& v) { c.loss.spa_region = as_int(k, v); }},
        {"guidance.backend",
         [](RunConfig& c, const std::string& k, const TomlValue& v) {
             const auto s = as_string(k, v);
             if (s == "stub") c.guidance.backend = guidance::BackendKind::stub;
             else if (s == "pretrained") c.guidance.backend = guidance::BackendKind::pretrained;
             else throw ConfigError(k + ": expected \"stub\" or \"pretrained\"");
         }},
        {"guidance.stub_seed",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.guidance.stub_seed = as_seed(k, v); }},
        {"guidance.weights",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.guidance.weights = as_string(k, v); }},
        {"guidance.positive",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.guidance.prompts.positive = as_string(k, v); }},
        {"guidance.negative",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.guidance.prompts.negative = as_string(k, v); }},
        {"guidance.upsilon",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.guidance.upsilon = as_double(k, v); }},
        {"guidance.prob_prompt",
         [](RunConfig& c, const std::string& k, const TomlValue& v) {
             const auto s = as_string(k, v);
             if (s == "negative") c.guidance.prob_prompt = guidance::ProbPrompt::negative;
             else if (s == "positive") c.guidance.prob_prompt = guidance::ProbPrompt::positive;
             else throw ConfigError(k + ": expected \"negative\" or \"positive\"");
         }},
        {"ablation.no_illumnet",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.ablation.no_illumnet = as_bool(k, v); }},
        {"ablation.no_arm", [](RunConfig& c, const std::string& k, const TomlValue& v) { c.ablation.no_arm = as_bool(k, v); }},
        {"ablation.no_semantic",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.ablation.no_semantic = as_bool(k, v); }},
        {"paths.output_dir",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.paths.output_dir = as_string(k, v); }},
        {"paths.checkpoint",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.paths.checkpoint = as_string(k, v); }},
        {"paths.niqe_model",
         [](RunConfig& c, const std::string& k, const TomlValue& v) { c.paths.niqe_model = as_string(k, v); }},
    };
    return table;
}

std::string fmt_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    // shortest form that parses back to the same double
    char buf[64];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    std::string s = buf;
    if (s.find_first_of(".eE") == std::string::npos) s += ".0";
    return s;
}

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char ch : s) {
        switch (ch) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default: out += ch;
        }
    }
    return out + "\"";
}

const char* b(bool v) { return v ? "true" : "false"; }

std::string render(const RunConfig& c, bool include_paths) {
    std::ostringstream os;
    os << "seed = " << c.seed << "\n\n";
    os << "[train]\n"
       << "iterations = " << c.iterations << "\n"
       << "learning_rate = " << fmt_double(c.learning_rate) << "\n"
       << "beta1 = " << fmt_double(c.beta1) << "\n"
       << "beta2 = " << fmt_double(c.beta2) << "\n"
       << "adam_eps = " << fmt_double(c.adam_eps) << "\n"
       << "grad_clip = " << fmt_double(c.grad_clip) << "\n"
       << "rec_sample_steps = " << c.rec_sample_steps << "\n"
       << "checkpoint_every = " << c.checkpoint_every << "\n"
       << "update_mode = " << quote(c.update_mode == UpdateMode::joint ? "joint" : "alternating") << "\n\n";
    os << "[dataset]\n";
    if (include_paths) os << "root = " << quote(c.dataset.root.string()) << "\n";
    os << "glob = " << quote(c.dataset.glob) << "\n"
       << "patch_size = " << c.dataset.patch_size << "\n"
       << "batch_size = " << c.dataset.batch_size << "\n"
       << "shuffle_seed = " << c.dataset.shuffle_seed << "\n\n";
    os << "[schedule]\n"
       << "timesteps = " << c.schedule.timesteps << "\n"
       << "beta_start = " << fmt_double(c.schedule.beta_start) << "\n"
       << "beta_end = " << fmt_double(c.schedule.beta_end) << "\n"
       << "sample_steps = " << c.schedule.sample_steps << "\n\n";
    os << "[model]\n"
       << "illum_width = " << c.illum.hidden << "\n"
       << "illum_layers = " << c.illum.layers << "\n"
       << "epsilon_div = " << fmt_double(c.illum.epsilon_div) << "\n"
       << "illum_output_bias = " << fmt_double(c.illum.output_bias) << "\n"
       << "unet_width = " << c.unet_width << "\n"
       << "unet_levels = " << c.unet_levels << "\n\n";
    os << "[loss]\n"
       << "omega = " << fmt_double(c.loss.omega) << "\n"
       << "varpi = " << fmt_double(c.loss.varpi) << "\n"
       << "vartheta1 = " << fmt_double(c.loss.vartheta1) << "\n"
       << "vartheta2 = " << fmt_double(c.loss.vartheta2) << "\n"
       << "gamma_sigma = " << fmt_double(c.loss.gamma_sigma) << "\n"
       << "ssim_window = " << c.loss.ssim_window << "\n"
       << "ssim_k1 = " << fmt_double(c.loss.ssim_k1) << "\n"
       << "ssim_k2 = " << fmt_double(c.loss.ssim_k2) << "\n"
       << "spa_region = " << c.loss.spa_region << "\n\n";
    os << "[guidance]\n"
       << "backend = " << quote(c.guidance.backend == guidance::BackendKind::stub ? "stub" : "pretrained") << "\n"
       << "stub_seed = " << c.guidance.stub_seed << "\n";
    if (include_paths) os << "weights = " << quote(c.guidance.weights.string()) << "\n";
    os << "positive = " << quote(c.guidance.prompts.positive) << "\n"
       << "negative = " << quote(c.guidance.prompts.negative) << "\n"
       << "upsilon = " << fmt_double(c.guidance.upsilon) << "\n"
       << "prob_prompt = " << quote(c.guidance.prob_prompt == guidance::ProbPrompt::negative ? "negative" : "positive")
       << "\n\n";
    os << "[ablation]\n"
       << "no_illumnet = " << b(c.ablation.no_illumnet) << "\n"
       << "no_arm = " << b(c.ablation.no_arm) << "\n"
       << "no_semantic = " << b(c.ablation.no_semantic) << "\n";
    if (include_paths) {
        os << "\n[paths]\n"
           << "output_dir = " << quote(c.paths.output_dir.string()) << "\n"
           << "checkpoint = " << quote(c.paths.checkpoint.string()) << "\n"
           << "niqe_model = " << quote(c.paths.niqe_model.string()) << "\n";
    }
    return os.str();
}

}  // namespace

void apply_setting(RunConfig& cfg, const std::string& key, const TomlValue& value) {
    const auto& table = setters();
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown configuration key '" + key + "'");
    it->second(cfg, key, value);
}

RunConfig config_from_toml(const std::string& text, const std::string& source) {
    RunConfig cfg;
    for (const auto& [key, value] : parse_toml(text, source)) apply_setting(cfg, key, value);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file '" + path.string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return config_from_toml(ss.str(), path.string());
}

std::string resolve_key(const std::string& key) {
    const auto& table = setters();
    if (table.count(key) || key.find('.') != std::string::npos) return key;
    std::string found;
    for (const auto& [full, _] : table) {
        const auto dot = full.rfind('.');
        if (dot != std::string::npos && full.compare(dot + 1, std::string::npos, key) == 0) {
            if (!found.empty()) throw ConfigError("ambiguous key '" + key + "' (" + found + ", " + full + ")");
            found = full;
        }
    }
    return found.empty() ? key : found;
}

void apply_overrides(RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& overrides) {
    for (const auto& [short_key, text] : overrides) {
        const std::string key = resolve_key(short_key);
        // string-typed keys take the raw text so that paths like "1e3" stay strings
        static const std::set<std::string> string_keys = {
            "train.update_mode", "dataset.root",     "dataset.glob",       "guidance.backend",
            "guidance.weights",  "guidance.positive", "guidance.negative", "guidance.prob_prompt",
            "paths.output_dir",  "paths.checkpoint",  "paths.niqe_model"};
        if (string_keys.count(key)) {
            const TomlValue v = parse_toml_scalar(text);
            apply_setting(cfg, key, std::holds_alternative<std::string>(v) ? v : TomlValue{text});
        } else {
            apply_setting(cfg, key, parse_toml_scalar(text));
        }
    }
}

void RunConfig::validate(bool need_dataset) const {
    auto fail = [](const std::string& key, const std::string& msg) { throw ConfigError(key + ": " + msg); };
    if (iterations < 1) fail("train.iterations", "must be >= 1");
    if (!(learning_rate > 0.0)) fail("train.learning_rate", "must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("train.beta1", "must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("train.beta2", "must lie in [0, 1)");
    if (!(adam_eps > 0.0)) fail("train.adam_eps", "must be > 0");
    if (!(grad_clip >= 0.0)) fail("train.grad_clip", "must be >= 0 (0 disables clipping)");
    if (checkpoint_every < 0) fail("train.checkpoint_every", "must be >= 0");
    if (dataset.patch_size < 2 || dataset.patch_size % 2 != 0) fail("dataset.patch_size", "must be even and >= 2");
    if (dataset.batch_size < 1) fail("dataset.batch_size", "must be >= 1");
    if (need_dataset) {
        if (dataset.root.empty()) fail("dataset.root", "is required");
        if (!std::filesystem::is_directory(dataset.root))
            fail("dataset.root", "directory '" + dataset.root.string() + "' does not exist");
    }
    try {
        (void)diffusion::make_schedule(schedule.timesteps, schedule.beta_start, schedule.beta_end);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("schedule: ") + e.what());
    }
    if (schedule.sample_steps < 1 || schedule.sample_steps > schedule.timesteps)
        fail("schedule.sample_steps", "must lie in [1, schedule.timesteps]");
    if (rec_sample_steps < 1 || rec_sample_steps > schedule.timesteps)
        fail("train.rec_sample_steps", "must lie in [1, schedule.timesteps]");
    if (illum.layers < 2) fail("model.illum_layers", "must be >= 2");
    if (illum.hidden < 1) fail("model.illum_width", "must be >= 1");
    if (!(illum.epsilon_div > 0.0)) fail("model.epsilon_div", "must be > 0");
    if (!std::isfinite(illum.output_bias)) fail("model.illum_output_bias", "must be finite");
    const std::size_t illum_params = static_cast<std::size_t>(illum.hidden) * 27 + illum.hidden +
                                     static_cast<std::size_t>(illum.layers - 2) * (illum.hidden * illum.hidden * 9 + illum.hidden) +
                                     static_cast<std::size_t>(illum.hidden) * 27 + 3;
    if (illum_params >= illumnet::kMaxParameters)
        fail("model.illum_width", "network would have " + std::to_string(illum_params) + " parameters; limit is " +
                                      std::to_string(illumnet::kMaxParameters));
    if (unet_width < 2 || unet_width % 2 != 0) fail("model.unet_width", "must be even and >= 2");
    if (unet_levels < 1 || unet_levels > 6) fail("model.unet_levels", "must lie in [1, 6]");
    if ((dataset.patch_size / 2) % (1 << (unet_levels - 1)) != 0)
        fail("dataset.patch_size", "half of it must be divisible by 2^(model.unet_levels - 1)");
    try {
        loss.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(e.what()));
    }
    if (dataset.patch_size % loss.spa_region != 0) fail("loss.spa_region", "must divide dataset.patch_size");
    if (dataset.patch_size < loss.ssim_window + 2) fail("loss.ssim_window", "exceeds dataset.patch_size");
    try {
        guidance.prompts.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(e.what()));
    }
    if (!(guidance.upsilon >= 0.0 && guidance.upsilon <= 1.0)) fail("guidance.upsilon", "must lie in [0, 1]");
    if (guidance.backend == guidance::BackendKind::pretrained && guidance.weights.empty())
        fail("guidance.weights", "is required for the pretrained backend (or set guidance.backend = \"stub\")");
}

std::string RunConfig::to_toml() const { return render(*this, true); }

std::string RunConfig::trajectory_toml() const {
    RunConfig c = *this;
    c.iterations = RunConfig{}.iterations;
    c.checkpoint_every = RunConfig{}.checkpoint_every;
    return render(c, false);
}

std::uint64_t RunConfig::hash() const { return fnv1a(trajectory_toml()); }

std::string RunConfig::hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
}

std::filesystem::path RunConfig::checkpoint_path() const {
    return paths.checkpoint.empty() ? paths.output_dir / "checkpoint.bin" : paths.checkpoint;
}

void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto path = dir / "resolved_config.toml";
    std::ofstream os(path);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os << cfg.to_toml();
}

}  // namespace lumidiff
