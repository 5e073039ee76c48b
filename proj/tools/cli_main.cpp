#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hbsynth/augment.hpp"
#include "hbsynth/checkpoint.hpp"
#include "hbsynth/engine.hpp"
#include "hbsynth/ingest.hpp"
#include "hbsynth/metrics.hpp"
#include "hbsynth/plots.hpp"
#include "hbsynth/run_config.hpp"

namespace fs = std::filesystem;
using namespace hbsynth;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& c) {
    cmd->add_option("--config", c.config_path, "run config file (defaults used when absent)");
    cmd->add_option("--set", c.overrides, "override one key, e.g. --set train.seed=4")
        ->take_all();
    cmd->add_option("--out", c.out_dir, "run directory (default: <run root>/<timestamp>-<hash>)");
}

RunConfig effective_config(const CommonArgs& c) {
    RunConfig cfg;
    if (!c.config_path.empty()) cfg = load_run_config(c.config_path);
    for (const std::string& ov : c.overrides) apply_override(cfg, ov);
    return cfg;
}

/// Creates the run directory and echoes the effective config into it.
std::string open_run_dir(const RunConfig& cfg, const CommonArgs& c) {
    std::string dir = c.out_dir;
    if (dir.empty()) {
        const char* root = std::getenv("HBSYNTH_RUN_ROOT");
        const std::time_t now = std::time(nullptr);
        std::tm tm_utc{};
        gmtime_r(&now, &tm_utc);
        char stamp[32];
        std::strftime(stamp, sizeof(stamp), "%Y%m%dT%H%M%SZ", &tm_utc);
        char hash[24];
        std::snprintf(hash, sizeof(hash), "%08llx",
                      static_cast<unsigned long long>(config_hash(cfg) & 0xFFFFFFFFULL));
        dir = std::string(root ? root : "runs") + "/" + stamp + "-" + hash;
    }
    fs::create_directories(dir);
    const std::string echo_path = dir + "/config.ini";
    std::ofstream echo(echo_path);
    require(echo.good(), "cannot open " + echo_path);
    echo << format_run_config(cfg);
    require(echo.good(), "write failed: " + echo_path);
    return dir;
}

/// Artifact verification: exit code 0 is only earned when the outputs
/// exist and parse back.
void verify_beats_file(const std::string& path) { read_beats_csv(path); }

void verify_text_file(const std::string& path, const std::string& expected_head) {
    std::ifstream in(path);
    require(in.good(), "cannot open " + path);
    std::string head(expected_head.size(), '\0');
    in.read(head.data(), static_cast<std::streamsize>(head.size()));
    require(in.good() && head == expected_head, "artifact check failed: " + path);
}

void verify_config_echo(const RunConfig& cfg, const std::string& dir) {
    const RunConfig back = load_run_config(dir + "/config.ini");
    require(config_hash(back) == config_hash(cfg), "artifact check failed: " + dir + "/config.ini");
}

std::uint64_t parse_seed(const std::string& s) {
    return std::strtoull(s.c_str(), nullptr, 10);
}

BeatClass class_from_flag(const std::string& s) {
    require(s.size() == 1, "unknown class: " + s);
    return beat_class_from_char(s[0]);
}

// ---- ingest ----

BeatDataset ingest_records_dir(const RunConfig& cfg, long* dropped, long* unknown) {
    const fs::path dir(cfg.data.records);
    require(!cfg.data.records.empty(), "missing records directory");
    require(fs::is_directory(dir), "missing records directory: " + cfg.data.records);

    std::vector<fs::path> headers;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".hea") headers.push_back(entry.path());
    std::sort(headers.begin(), headers.end());
    require(!headers.empty(), "no records in " + cfg.data.records);

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        require(in.good(), "cannot open " + p.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };

    BeatDataset all;
    all.split_tag = "all";
    for (const fs::path& hea : headers) {
        const RecordHeader header = parse_wfdb_header(slurp(hea));
        int channel = -1;
        for (std::size_t i = 0; i < header.signals.size(); ++i)
            if (header.signals[i].name == cfg.data.channel) channel = static_cast<int>(i);
        require(channel >= 0,
                "channel not found: " + cfg.data.channel + " in " + hea.string());
        const SignalSpec& sig = header.signals[static_cast<std::size_t>(channel)];
        require(sig.format == 212, "unsupported signal format in " + hea.string());

        const std::string payload = slurp(fs::path(hea).replace_extension(".dat"));
        const std::vector<std::uint8_t> bytes(payload.begin(), payload.end());
        const auto channels = decode_format212(bytes, header.n_signals);
        const std::vector<double> physical = adc_to_physical(
            channels[static_cast<std::size_t>(channel)], sig.adc_gain, sig.baseline);
        const NormalizedRecord norm = normalize_record(physical);

        const std::string ann_text = slurp(fs::path(hea).replace_extension(".ann"));
        const std::vector<Annotation> anns = parse_annotations(ann_text);

        SegmentResult seg = segment_beats(norm.samples, anns, header.sampling_rate,
                                          cfg.data.pre_ms, cfg.data.post_ms, header.record_id);
        *dropped += seg.dropped;
        *unknown += seg.unknown_symbols;
        for (Heartbeat& b : seg.beats) all.beats.push_back(std::move(b));
        all.provenance[header.record_id] = hea.string();
    }
    return all;
}

int cmd_ingest(const CommonArgs& common) {
    const RunConfig cfg = effective_config(common);
    validate_config(cfg);
    const std::string dir = open_run_dir(cfg, common);

    long dropped = 0, unknown = 0;
    BeatDataset all = cfg.synth.toy
                          ? make_toy_dataset(cfg.synth.per_class, cfg.synth.beats_per_record,
                                             cfg.synth.seed, cfg.synth.length)
                          : ingest_records_dir(cfg, &dropped, &unknown);

    auto [train, test] = split_dataset(all, cfg.data.split, cfg.data.seed);
    write_beats_csv(train, dir + "/train.csv");
    write_beats_csv(test, dir + "/test.csv");

    nlohmann::json manifest;
    auto record_ids = [](const BeatDataset& ds) {
        std::vector<std::string> ids;
        for (const auto& [id, src] : ds.provenance) ids.push_back(id);
        return ids;
    };
    manifest["train_records"] = record_ids(train);
    manifest["test_records"] = record_ids(test);
    manifest["train_beats"] = train.beats.size();
    manifest["test_beats"] = test.beats.size();
    manifest["dropped"] = dropped;
    manifest["unknown_symbols"] = unknown;
    manifest["source"] = cfg.synth.toy ? "synthetic" : cfg.data.records;
    {
        std::ofstream out(dir + "/manifest");
        require(out.good(), "cannot open " + dir + "/manifest");
        out << manifest.dump(2) << "\n";
        require(out.good(), "write failed: " + dir + "/manifest");
    }

    verify_beats_file(dir + "/train.csv");
    verify_beats_file(dir + "/test.csv");
    verify_text_file(dir + "/manifest", "{");
    verify_config_echo(cfg, dir);
    std::cout << dir << "\n";
    return 0;
}

// ---- train ----

int cmd_train(const CommonArgs& common, const std::string& data_path) {
    const RunConfig cfg = effective_config(common);
    validate_config(cfg);
    require(!data_path.empty(), "missing --data");
    const std::string dir = open_run_dir(cfg, common);

    const BeatDataset data = read_beats_csv(data_path);
    Engine engine(cfg.model, cfg.spectral,
                  make_schedule(cfg.schedule.steps, cfg.schedule.beta_min, cfg.schedule.beta_max,
                                cfg.schedule.spacing, cfg.schedule.variance));
    TrainConfig tc = train_config_of(cfg);
    tc.checkpoint_dir = dir;
    auto [params, log] = engine.train(data, tc);
    (void)params;
    write_train_log_csv(log, dir + "/train_log.csv");

    load_checkpoint(dir + "/ckpt_final.ckpt");
    verify_text_file(dir + "/train_log.csv", "step,");
    verify_config_echo(cfg, dir);
    std::cout << dir << "\n";
    return 0;
}

// ---- synthesis commands ----

struct SynthDeps {
    Checkpoint ckpt;
    RunConfig cfg;
    std::string dir;
};

SynthDeps open_synth(const CommonArgs& common, const std::string& ckpt_path) {
    require(!ckpt_path.empty(), "missing --checkpoint");
    SynthDeps d;
    d.ckpt = load_checkpoint(ckpt_path);
    d.cfg = effective_config(common);
    d.dir = open_run_dir(d.cfg, common);
    return d;
}

void finish_synth(const SynthDeps& d, const BeatDataset& out, const std::string& csv_name,
                  const std::vector<Heartbeat>& band_source) {
    const std::string csv = d.dir + "/" + csv_name;
    write_beats_csv(out, csv);
    std::vector<std::string> plots;
    if (!band_source.empty())
        plots = write_class_plots(d.dir + "/plot_", band_source, out.beats);
    verify_beats_file(csv);
    for (const std::string& p : plots) verify_text_file(p, "<svg");
    verify_config_echo(d.cfg, d.dir);
    std::cout << d.dir << "\n";
}

int cmd_generate(const CommonArgs& common, const std::string& ckpt_path,
                 std::vector<std::string> class_flags, long count, const std::string& seed_flag,
                 const std::string& real_path) {
    SynthDeps d = open_synth(common, ckpt_path);
    require(count >= 1, "bad --count");
    const Engine engine = Engine::from_checkpoint(d.ckpt);
    const std::uint64_t seed = parse_seed(seed_flag);

    if (class_flags.empty()) class_flags = {"N", "V", "F"};
    BeatDataset out;
    out.split_tag = "synthetic";
    for (const std::string& cf : class_flags) {
        const BeatClass c = class_from_flag(cf);
        const int ci = static_cast<int>(c);
        for (long k = 0; k < count; ++k) {
            Heartbeat b = engine.generate(c, d.ckpt.params,
                                          substream_seed(seed, static_cast<std::uint64_t>(ci),
                                                         static_cast<std::uint64_t>(k)),
                                          d.cfg.synth.length);
            b.record_id = std::string("gen") + beat_class_char(c);
            b.beat_index = static_cast<int>(k);
            out.beats.push_back(std::move(b));
        }
        out.provenance[std::string("gen") + beat_class_char(c)] = "generated";
    }

    std::vector<Heartbeat> band;
    if (!real_path.empty()) band = read_beats_csv(real_path).beats;
    finish_synth(d, out, "generated.csv", band);
    return 0;
}

std::pair<int, int> parse_gap(const std::string& s) {
    const std::size_t colon = s.find(':');
    require(colon != std::string::npos && colon > 0 && colon + 1 < s.size(),
            "bad --gap (want start:end): " + s);
    char* end = nullptr;
    const long a = std::strtol(s.c_str(), &end, 10);
    require(end == s.c_str() + colon, "bad --gap (want start:end): " + s);
    const long b = std::strtol(s.c_str() + colon + 1, &end, 10);
    require(*end == '\0', "bad --gap (want start:end): " + s);
    require(a >= 0 && b >= a, "bad --gap (want start:end): " + s);
    return {static_cast<int>(a), static_cast<int>(b)};
}

int cmd_impute(const CommonArgs& common, const std::string& ckpt_path,
               const std::string& input_path, const std::string& gap_flag,
               const std::string& seed_flag) {
    SynthDeps d = open_synth(common, ckpt_path);
    require(!input_path.empty(), "missing --input");
    require(!gap_flag.empty(), "missing --gap");
    const BeatDataset input = read_beats_csv(input_path);
    require(!input.beats.empty(), "empty set");
    const auto [gap_a, gap_b] = parse_gap(gap_flag);
    const Engine engine = Engine::from_checkpoint(d.ckpt);
    const std::uint64_t seed = parse_seed(seed_flag);

    BeatDataset out;
    out.split_tag = "imputed";
    out.provenance = input.provenance;
    for (std::size_t i = 0; i < input.beats.size(); ++i) {
        const Heartbeat& src = input.beats[i];
        require(gap_b < src.length(), "gap outside beat: " + gap_flag);
        const Mask mask = build_mask(TaskKind::Imputation, src.length(),
                                     std::make_pair(gap_a, gap_b));
        Heartbeat b = engine.impute(src, mask, src.label, d.ckpt.params,
                                    substream_seed(seed, i, 0));
        b.record_id = src.record_id;
        b.beat_index = src.beat_index;
        out.beats.push_back(std::move(b));
    }
    finish_synth(d, out, "imputed.csv", input.beats);
    return 0;
}

int cmd_forecast(const CommonArgs& common, const std::string& ckpt_path,
                 const std::string& input_path, const std::string& seed_flag) {
    SynthDeps d = open_synth(common, ckpt_path);
    require(!input_path.empty(), "missing --input");
    const BeatDataset input = read_beats_csv(input_path);
    require(!input.beats.empty(), "empty set");
    const Engine engine = Engine::from_checkpoint(d.ckpt);
    const std::uint64_t seed = parse_seed(seed_flag);

    BeatDataset out;
    out.split_tag = "forecast";
    out.provenance = input.provenance;
    for (std::size_t i = 0; i < input.beats.size(); ++i) {
        const Heartbeat& prev = input.beats[i];
        Heartbeat b = engine.forecast(prev, prev.label, d.ckpt.params, substream_seed(seed, i, 0));
        b.record_id = prev.record_id;
        b.beat_index = prev.beat_index + 1;
        out.beats.push_back(std::move(b));
    }
    finish_synth(d, out, "forecast.csv", input.beats);
    return 0;
}

// ---- evaluate / augment-eval ----

int cmd_evaluate(const CommonArgs& common, const std::string& real_path,
                 const std::string& synth_path) {
    const RunConfig cfg = effective_config(common);
    require(!real_path.empty(), "missing --real");
    require(!synth_path.empty(), "missing --synth");
    const std::string dir = open_run_dir(cfg, common);

    const BeatDataset real = read_beats_csv(real_path);
    const BeatDataset synth = read_beats_csv(synth_path);
    const MetricsReport report = evaluate_sets(real, synth, cfg.eval.pairing);
    write_report_csv(report, dir + "/report.csv");
    {
        std::ofstream out(dir + "/report.txt");
        require(out.good(), "cannot open " + dir + "/report.txt");
        out << format_report(report);
        require(out.good(), "write failed: " + dir + "/report.txt");
    }

    verify_text_file(dir + "/report.csv", "class,");
    verify_text_file(dir + "/report.txt", "class");
    verify_config_echo(cfg, dir);
    std::cout << dir << "\n";
    return 0;
}

int cmd_augment_eval(const CommonArgs& common, const std::string& ckpt_path,
                     const std::string& train_path, const std::string& test_path, long n_synth) {
    const RunConfig cfg = effective_config(common);
    require(!ckpt_path.empty(), "missing --checkpoint");
    require(!train_path.empty(), "missing --train");
    require(!test_path.empty(), "missing --test");
    const std::string dir = open_run_dir(cfg, common);

    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const Engine engine = Engine::from_checkpoint(ckpt);
    const BeatDataset train = read_beats_csv(train_path);
    const BeatDataset test = read_beats_csv(test_path);

    ClassifierConfig clf_cfg;
    clf_cfg.seed = cfg.train.seed;
    const AugmentResult result = run_settings(train, test, engine, ckpt.params, n_synth, clf_cfg);
    write_settings_csv(result, dir + "/settings.csv");
    {
        std::ofstream out(dir + "/settings.txt");
        require(out.good(), "cannot open " + dir + "/settings.txt");
        out << format_settings(result);
        require(out.good(), "write failed: " + dir + "/settings.txt");
    }

    verify_text_file(dir + "/settings.csv", "setting,");
    verify_config_echo(cfg, dir);
    std::cout << dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"conditional diffusion toolkit for heartbeat synthesis"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string data_path, ckpt_path, input_path, real_path, synth_path, test_path;
    std::string gap_flag, seed_flag = "0";
    std::vector<std::string> class_flags;
    long count = 10, n_synth = -1;

    CLI::App* ingest = app.add_subcommand("ingest", "records or toy corpus -> beats CSV + split");
    add_common(ingest, common);
    ingest->add_option_function<std::string>(
        "--records", [&](const std::string& v) { common.overrides.push_back("data.records=" + v); },
        "WFDB record directory (.hea/.dat/.ann)");
    ingest->add_option_function<std::string>(
        "--split", [&](const std::string& v) { common.overrides.push_back("data.split=" + v); },
        "train fraction of records");
    ingest->add_option_function<std::string>(
        "--seed", [&](const std::string& v) { common.overrides.push_back("data.seed=" + v); },
        "split shuffle seed");
    ingest->add_option_function<std::string>(
        "--channel", [&](const std::string& v) { common.overrides.push_back("data.channel=" + v); },
        "signal name to extract");
    ingest->add_flag_callback(
        "--toy", [&] { common.overrides.push_back("synth-data.toy=true"); },
        "use the parametric synthetic generator");
    ingest->add_option_function<std::string>(
        "--per-class",
        [&](const std::string& v) { common.overrides.push_back("synth-data.per_class=" + v); },
        "synthetic beats per class");

    CLI::App* train = app.add_subcommand("train", "beats CSV -> checkpoint + training log");
    add_common(train, common);
    train->add_option("--data", data_path, "training beats CSV")->required();

    CLI::App* generate = app.add_subcommand("generate", "checkpoint -> class-conditional beats");
    add_common(generate, common);
    generate->add_option("--checkpoint", ckpt_path, "trained model file")->required();
    generate->add_option("--class", class_flags, "class code N/V/F (repeatable; default all)");
    generate->add_option("--count", count, "beats per class");
    generate->add_option("--seed", seed_flag, "sampling seed");
    generate->add_option("--real", real_path, "real beats CSV for the plot band");

    CLI::App* impute = app.add_subcommand("impute", "fill one gap in every input beat");
    add_common(impute, common);
    impute->add_option("--checkpoint", ckpt_path, "trained model file")->required();
    impute->add_option("--input", input_path, "beats CSV to impute")->required();
    impute->add_option("--gap", gap_flag, "gap sample range start:end (inclusive)")->required();
    impute->add_option("--seed", seed_flag, "sampling seed");

    CLI::App* forecast = app.add_subcommand("forecast", "predict the next beat for each input");
    add_common(forecast, common);
    forecast->add_option("--checkpoint", ckpt_path, "trained model file")->required();
    forecast->add_option("--input", input_path, "previous-beat CSV")->required();
    forecast->add_option("--seed", seed_flag, "sampling seed");

    CLI::App* evaluate = app.add_subcommand("evaluate", "six-metric report: synthetic vs real");
    add_common(evaluate, common);
    evaluate->add_option("--real", real_path, "real beats CSV")->required();
    evaluate->add_option("--synth", synth_path, "synthetic beats CSV")->required();

    CLI::App* augment = app.add_subcommand(
        "augment-eval", "classifier F1 with and without synthetic augmentation");
    add_common(augment, common);
    augment->add_option("--checkpoint", ckpt_path, "trained model file")->required();
    augment->add_option("--train", data_path, "real training beats CSV")->required();
    augment->add_option("--test", test_path, "real test beats CSV")->required();
    augment->add_option("--n-synth", n_synth,
                        "synthetic beats per class (-1 = balance to majority)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest->parsed()) return cmd_ingest(common);
        if (train->parsed()) return cmd_train(common, data_path);
        if (generate->parsed())
            return cmd_generate(common, ckpt_path, class_flags, count, seed_flag, real_path);
        if (impute->parsed()) return cmd_impute(common, ckpt_path, input_path, gap_flag, seed_flag);
        if (forecast->parsed()) return cmd_forecast(common, ckpt_path, input_path, seed_flag);
        if (evaluate->parsed()) return cmd_evaluate(common, real_path, synth_path);
        if (augment->parsed())
            return cmd_augment_eval(common, ckpt_path, data_path, test_path, n_synth);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
