#include "hbsynth/run_config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace hbsynth {
namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
    fail("bad config value for " + key + ": " + value);
}

double to_double(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const double d = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || *end != '\0' || !std::isfinite(d)) bad_value(key, value);
    return d;
}

long to_long(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const long v = std::strtol(value.c_str(), &end, 10);
    if (end == value.c_str() || *end != '\0') bad_value(key, value);
    return v;
}

int to_int(const std::string& key, const std::string& value) {
    return static_cast<int>(to_long(key, value));
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
    if (end == value.c_str() || *end != '\0' || value.find('-') != std::string::npos)
        bad_value(key, value);
    return static_cast<std::uint64_t>(v);
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    bad_value(key, value);
}

std::vector<std::string> split_commas(const std::string& value) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(value);
    while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
    return out;
}

// Shortest of %.12g / %.17g that parses back exactly, so the echoed
// config reproduces the run bit-for-bit without drowning in digits.
std::string fmt_double(double d) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", d);
    double rt = 0.0;
    std::sscanf(buf, "%lf", &rt);
    if (rt == d) return buf;
    std::snprintf(buf, sizeof(buf), "%.17g", d);
    return buf;
}

std::string fmt_long(long v) { return std::to_string(v); }
std::string fmt_u64(std::uint64_t v) { return std::to_string(v); }
std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct KeyDef {
    const char* name;  // "section.key"
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

const std::vector<KeyDef>& key_table() {
    static const std::vector<KeyDef> table = {
        {"data.records",
         [](RunConfig& c, const std::string& v) { c.data.records = v; },
         [](const RunConfig& c) { return c.data.records; }},
        {"data.channel",
         [](RunConfig& c, const std::string& v) { c.data.channel = v; },
         [](const RunConfig& c) { return c.data.channel; }},
        {"data.split",
         [](RunConfig& c, const std::string& v) { c.data.split = to_double("data.split", v); },
         [](const RunConfig& c) { return fmt_double(c.data.split); }},
        {"data.seed",
         [](RunConfig& c, const std::string& v) { c.data.seed = to_u64("data.seed", v); },
         [](const RunConfig& c) { return fmt_u64(c.data.seed); }},
        {"data.pre_ms",
         [](RunConfig& c, const std::string& v) { c.data.pre_ms = to_double("data.pre_ms", v); },
         [](const RunConfig& c) { return fmt_double(c.data.pre_ms); }},
        {"data.post_ms",
         [](RunConfig& c, const std::string& v) { c.data.post_ms = to_double("data.post_ms", v); },
         [](const RunConfig& c) { return fmt_double(c.data.post_ms); }},

        {"spectral.n_fft",
         [](RunConfig& c, const std::string& v) { c.spectral.n_fft = to_int("spectral.n_fft", v); },
         [](const RunConfig& c) { return fmt_long(c.spectral.n_fft); }},
        {"spectral.hop",
         [](RunConfig& c, const std::string& v) { c.spectral.hop = to_int("spectral.hop", v); },
         [](const RunConfig& c) { return fmt_long(c.spectral.hop); }},
        {"spectral.window",
         [](RunConfig& c, const std::string& v) { c.spectral.window = v; },
         [](const RunConfig& c) { return c.spectral.window; }},
        {"spectral.pad_mode",
         [](RunConfig& c, const std::string& v) { c.spectral.pad_mode = v; },
         [](const RunConfig& c) { return c.spectral.pad_mode; }},

        {"schedule.steps",
         [](RunConfig& c, const std::string& v) { c.schedule.steps = to_int("schedule.steps", v); },
         [](const RunConfig& c) { return fmt_long(c.schedule.steps); }},
        {"schedule.beta_min",
         [](RunConfig& c, const std::string& v) {
             c.schedule.beta_min = to_double("schedule.beta_min", v);
         },
         [](const RunConfig& c) { return fmt_double(c.schedule.beta_min); }},
        {"schedule.beta_max",
         [](RunConfig& c, const std::string& v) {
             c.schedule.beta_max = to_double("schedule.beta_max", v);
         },
         [](const RunConfig& c) { return fmt_double(c.schedule.beta_max); }},
        {"schedule.spacing",
         [](RunConfig& c, const std::string& v) {
             try {
                 c.schedule.spacing = spacing_from_name(v);
             } catch (const Error&) {
                 bad_value("schedule.spacing", v);
             }
         },
         [](const RunConfig& c) { return std::string(spacing_name(c.schedule.spacing)); }},
        {"schedule.variance",
         [](RunConfig& c, const std::string& v) {
             try {
                 c.schedule.variance = variance_from_name(v);
             } catch (const Error&) {
                 bad_value("schedule.variance", v);
             }
         },
         [](const RunConfig& c) { return std::string(variance_name(c.schedule.variance)); }},

        {"model.base_channels",
         [](RunConfig& c, const std::string& v) {
             c.model.base_channels = to_int("model.base_channels", v);
         },
         [](const RunConfig& c) { return fmt_long(c.model.base_channels); }},
        {"model.channel_mult",
         [](RunConfig& c, const std::string& v) {
             std::vector<int> mult;
             for (const std::string& part : split_commas(v))
                 mult.push_back(to_int("model.channel_mult", part));
             if (mult.empty()) bad_value("model.channel_mult", v);
             c.model.channel_mult = std::move(mult);
         },
         [](const RunConfig& c) {
             std::string out;
             for (std::size_t i = 0; i < c.model.channel_mult.size(); ++i) {
                 if (i) out += ",";
                 out += fmt_long(c.model.channel_mult[i]);
             }
             return out;
         }},
        {"model.subblocks_per_block",
         [](RunConfig& c, const std::string& v) {
             c.model.subblocks_per_block = to_int("model.subblocks_per_block", v);
         },
         [](const RunConfig& c) { return fmt_long(c.model.subblocks_per_block); }},
        {"model.convs_per_subblock",
         [](RunConfig& c, const std::string& v) {
             c.model.convs_per_subblock = to_int("model.convs_per_subblock", v);
         },
         [](const RunConfig& c) { return fmt_long(c.model.convs_per_subblock); }},
        {"model.d_emb",
         [](RunConfig& c, const std::string& v) { c.model.d_emb = to_int("model.d_emb", v); },
         [](const RunConfig& c) { return fmt_long(c.model.d_emb); }},
        {"model.embed_planes",
         [](RunConfig& c, const std::string& v) {
             c.model.embed_planes = to_int("model.embed_planes", v);
         },
         [](const RunConfig& c) { return fmt_long(c.model.embed_planes); }},
        {"model.channel_norm",
         [](RunConfig& c, const std::string& v) {
             c.model.channel_norm = to_bool("model.channel_norm", v);
         },
         [](const RunConfig& c) { return fmt_bool(c.model.channel_norm); }},

        {"train.learning_rate",
         [](RunConfig& c, const std::string& v) {
             c.train.learning_rate = to_double("train.learning_rate", v);
         },
         [](const RunConfig& c) { return fmt_double(c.train.learning_rate); }},
        {"train.batch_size",
         [](RunConfig& c, const std::string& v) {
             c.train.batch_size = to_int("train.batch_size", v);
         },
         [](const RunConfig& c) { return fmt_long(c.train.batch_size); }},
        {"train.epochs",
         [](RunConfig& c, const std::string& v) { c.train.epochs = to_int("train.epochs", v); },
         [](const RunConfig& c) { return fmt_long(c.train.epochs); }},
        {"train.task_weights",
         [](RunConfig& c, const std::string& v) {
             const std::vector<std::string> parts = split_commas(v);
             if (parts.size() != 3) bad_value("train.task_weights", v);
             for (int i = 0; i < 3; ++i)
                 c.train.task_weights[static_cast<std::size_t>(i)] =
                     to_double("train.task_weights", parts[static_cast<std::size_t>(i)]);
         },
         [](const RunConfig& c) {
             return fmt_double(c.train.task_weights[0]) + "," +
                    fmt_double(c.train.task_weights[1]) + "," +
                    fmt_double(c.train.task_weights[2]);
         }},
        {"train.aux_weight",
         [](RunConfig& c, const std::string& v) {
             c.train.aux_weight = to_double("train.aux_weight", v);
         },
         [](const RunConfig& c) { return fmt_double(c.train.aux_weight); }},
        {"train.seed",
         [](RunConfig& c, const std::string& v) { c.train.seed = to_u64("train.seed", v); },
         [](const RunConfig& c) { return fmt_u64(c.train.seed); }},
        {"train.checkpoint_every",
         [](RunConfig& c, const std::string& v) {
             c.train.checkpoint_every = to_int("train.checkpoint_every", v);
         },
         [](const RunConfig& c) { return fmt_long(c.train.checkpoint_every); }},
        {"train.gap_min",
         [](RunConfig& c, const std::string& v) { c.train.gap_min = to_double("train.gap_min", v); },
         [](const RunConfig& c) { return fmt_double(c.train.gap_min); }},
        {"train.gap_max",
         [](RunConfig& c, const std::string& v) { c.train.gap_max = to_double("train.gap_max", v); },
         [](const RunConfig& c) { return fmt_double(c.train.gap_max); }},
        {"train.log_timing",
         [](RunConfig& c, const std::string& v) {
             c.train.log_timing = to_bool("train.log_timing", v);
         },
         [](const RunConfig& c) { return fmt_bool(c.train.log_timing); }},

        {"eval.pairing",
         [](RunConfig& c, const std::string& v) {
             if (v == "nearest-real")
                 c.eval.pairing = Pairing::NearestReal;
             else if (v == "ground-truth")
                 c.eval.pairing = Pairing::GroundTruth;
             else
                 bad_value("eval.pairing", v);
         },
         [](const RunConfig& c) { return std::string(pairing_name(c.eval.pairing)); }},
        {"eval.extractor",
         [](RunConfig& c, const std::string& v) {
             if (v != "stats") bad_value("eval.extractor", v);
             c.eval.extractor = v;
         },
         [](const RunConfig& c) { return c.eval.extractor; }},

        {"synth-data.toy",
         [](RunConfig& c, const std::string& v) { c.synth.toy = to_bool("synth-data.toy", v); },
         [](const RunConfig& c) { return fmt_bool(c.synth.toy); }},
        {"synth-data.per_class",
         [](RunConfig& c, const std::string& v) {
             c.synth.per_class = to_int("synth-data.per_class", v);
         },
         [](const RunConfig& c) { return fmt_long(c.synth.per_class); }},
        {"synth-data.beats_per_record",
         [](RunConfig& c, const std::string& v) {
             c.synth.beats_per_record = to_int("synth-data.beats_per_record", v);
         },
         [](const RunConfig& c) { return fmt_long(c.synth.beats_per_record); }},
        {"synth-data.seed",
         [](RunConfig& c, const std::string& v) { c.synth.seed = to_u64("synth-data.seed", v); },
         [](const RunConfig& c) { return fmt_u64(c.synth.seed); }},
        {"synth-data.length",
         [](RunConfig& c, const std::string& v) { c.synth.length = to_int("synth-data.length", v); },
         [](const RunConfig& c) { return fmt_long(c.synth.length); }},
    };
    return table;
}

const KeyDef* find_key(const std::string& name) {
    for (const KeyDef& k : key_table())
        if (name == k.name) return &k;
    return nullptr;
}

void set_key(RunConfig& cfg, const std::string& name, const std::string& value) {
    const KeyDef* def = find_key(name);
    require(def != nullptr, "unknown config key " + name);
    def->set(cfg, value);
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line, section;
    long line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            require(t.back() == ']' && t.size() > 2,
                    "config parse error at line " + std::to_string(line_no));
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const std::size_t eq = t.find('=');
        require(eq != std::string::npos && eq > 0,
                "config parse error at line " + std::to_string(line_no));
        require(!section.empty(), "config parse error at line " + std::to_string(line_no));
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        set_key(cfg, section + "." + key, value);
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    require(eq != std::string::npos && eq > 0, "bad override (want section.key=value): " + assignment);
    const std::string name = trim(assignment.substr(0, eq));
    require(name.find('.') != std::string::npos,
            "bad override (want section.key=value): " + assignment);
    set_key(cfg, name, trim(assignment.substr(eq + 1)));
}

std::string format_run_config(const RunConfig& cfg) {
    std::string out;
    std::string section;
    for (const KeyDef& k : key_table()) {
        const std::string name = k.name;
        const std::size_t dot = name.find('.');
        const std::string sec = name.substr(0, dot);
        if (sec != section) {
            if (!out.empty()) out += "\n";
            out += "[" + sec + "]\n";
            section = sec;
        }
        out += name.substr(dot + 1) + " = " + k.get(cfg) + "\n";
    }
    return out;
}

std::uint64_t config_hash(const RunConfig& cfg) {
    const std::string text = format_run_config(cfg);
    std::uint64_t h = 1469598103934665603ULL;
    for (const char c : text) {
        h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
        h *= 1099511628211ULL;
    }
    return h;
}

void validate_config(const RunConfig& cfg) {
    require(cfg.data.split > 0.0 && cfg.data.split < 1.0, "bad config value for data.split: " +
                                                              fmt_double(cfg.data.split));
    require(cfg.data.pre_ms > 0.0 && cfg.data.post_ms > 0.0, "bad run config");
    validate_config(cfg.spectral);
    validate_config(cfg.model);
    validate_config(train_config_of(cfg));
    make_schedule(cfg.schedule.steps, cfg.schedule.beta_min, cfg.schedule.beta_max,
                  cfg.schedule.spacing, cfg.schedule.variance);
    require(cfg.synth.per_class >= 1 && cfg.synth.beats_per_record >= 1 && cfg.synth.length >= 32,
            "bad run config");
}

TrainConfig train_config_of(const RunConfig& cfg) {
    TrainConfig tc;
    tc.learning_rate = cfg.train.learning_rate;
    tc.batch_size = cfg.train.batch_size;
    tc.epochs = cfg.train.epochs;
    tc.task_weights = cfg.train.task_weights;
    tc.aux_weight = cfg.train.aux_weight;
    tc.steps = cfg.schedule.steps;
    tc.beta_min = cfg.schedule.beta_min;
    tc.beta_max = cfg.schedule.beta_max;
    tc.spacing = cfg.schedule.spacing;
    tc.variance = cfg.schedule.variance;
    tc.seed = cfg.train.seed;
    tc.checkpoint_every = cfg.train.checkpoint_every;
    tc.gap = GapRange{cfg.train.gap_min, cfg.train.gap_max};
    tc.log_timing = cfg.train.log_timing;
    return tc;
}

}  // namespace hbsynth
