#include "hbsynth/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace hbsynth {
namespace {

constexpr char kMagic[8] = {'H', 'B', 'S', 'C', 'K', 'P', 'T', '\n'};
constexpr int kFormatVersion = 1;

using nlohmann::json;

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    require(in.good(), "bad checkpoint");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["seed"] = ckpt.seed;

    json model;
    model["base_channels"] = ckpt.config.base_channels;
    model["channel_mult"] = ckpt.config.channel_mult;
    model["subblocks_per_block"] = ckpt.config.subblocks_per_block;
    model["convs_per_subblock"] = ckpt.config.convs_per_subblock;
    model["d_emb"] = ckpt.config.d_emb;
    model["embed_planes"] = ckpt.config.embed_planes;
    model["channel_norm"] = ckpt.config.channel_norm;
    manifest["model"] = model;

    json spectral;
    spectral["n_fft"] = ckpt.spectral.n_fft;
    spectral["hop"] = ckpt.spectral.hop;
    spectral["window"] = ckpt.spectral.window;
    spectral["pad_mode"] = ckpt.spectral.pad_mode;
    manifest["spectral"] = spectral;

    json schedule;
    schedule["steps"] = ckpt.schedule.T;
    require(ckpt.schedule.T >= 1 && !ckpt.schedule.betas.empty(), "bad checkpoint");
    schedule["beta_min"] = ckpt.schedule.betas.front();
    schedule["beta_max"] = ckpt.schedule.betas.back();
    schedule["spacing"] = spacing_name(ckpt.schedule.spacing);
    schedule["variance"] = variance_name(ckpt.schedule.variance);
    manifest["schedule"] = schedule;

    json classes = json::array(), tasks = json::array();
    for (BeatClass c : kAllClasses) classes.push_back(std::string(1, beat_class_char(c)));
    for (TaskKind t : kAllTasks) tasks.push_back(task_name(t));
    manifest["classes"] = classes;
    manifest["tasks"] = tasks;

    json params = json::array();
    for (const ParamTensor& t : ckpt.params.tensors)
        params.push_back({{"name", t.name}, {"shape", t.shape}});
    manifest["params"] = params;
    manifest["extra"] = ckpt.extra;

    const std::string text = manifest.dump();
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot open " + path);
    out.write(kMagic, sizeof(kMagic));
    put_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const ParamTensor& t : ckpt.params.tensors) {
        // Raw little-endian float64; matches the in-memory layout on the
        // supported hosts (documented in docs/checkpoint_format.md).
        out.write(reinterpret_cast<const char*>(t.v.data()),
                  static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    }
    require(out.good(), "write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    require(in.good() && std::memcmp(magic, kMagic, 8) == 0, "bad checkpoint");
    const std::uint64_t len = get_u64(in);
    require(len > 0 && len < (1ULL << 30), "bad checkpoint");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    require(in.good(), "bad checkpoint");

    json manifest;
    try {
        manifest = json::parse(text);
    } catch (const std::exception&) {
        fail("bad checkpoint");
    }

    Checkpoint ckpt;
    try {
        require(manifest.at("format_version").get<int>() == kFormatVersion,
                "unsupported checkpoint version");
        ckpt.seed = manifest.at("seed").get<std::uint64_t>();

        const json& model = manifest.at("model");
        ckpt.config.base_channels = model.at("base_channels").get<int>();
        ckpt.config.channel_mult = model.at("channel_mult").get<std::vector<int>>();
        ckpt.config.subblocks_per_block = model.at("subblocks_per_block").get<int>();
        ckpt.config.convs_per_subblock = model.at("convs_per_subblock").get<int>();
        ckpt.config.d_emb = model.at("d_emb").get<int>();
        ckpt.config.embed_planes = model.at("embed_planes").get<int>();
        ckpt.config.channel_norm = model.at("channel_norm").get<bool>();

        const json& spectral = manifest.at("spectral");
        ckpt.spectral.n_fft = spectral.at("n_fft").get<int>();
        ckpt.spectral.hop = spectral.at("hop").get<int>();
        ckpt.spectral.window = spectral.at("window").get<std::string>();
        ckpt.spectral.pad_mode = spectral.at("pad_mode").get<std::string>();

        const json& schedule = manifest.at("schedule");
        ckpt.schedule = make_schedule(schedule.at("steps").get<int>(),
                                      schedule.at("beta_min").get<double>(),
                                      schedule.at("beta_max").get<double>(),
                                      spacing_from_name(schedule.at("spacing").get<std::string>()),
                                      variance_from_name(schedule.at("variance").get<std::string>()));

        if (manifest.contains("extra"))
            ckpt.extra = manifest.at("extra").get<std::map<std::string, std::string>>();

        for (const json& p : manifest.at("params")) {
            ParamTensor t;
            t.name = p.at("name").get<std::string>();
            t.shape = p.at("shape").get<std::vector<int>>();
            std::size_t n = 1;
            for (int d : t.shape) {
                require(d > 0, "bad checkpoint");
                n *= static_cast<std::size_t>(d);
            }
            t.v.resize(n);
            ckpt.params.tensors.push_back(std::move(t));
        }
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        fail("bad checkpoint");
    }

    for (ParamTensor& t : ckpt.params.tensors) {
        in.read(reinterpret_cast<char*>(t.v.data()),
                static_cast<std::streamsize>(t.v.size() * sizeof(double)));
        require(in.good(), "bad checkpoint");
    }
    in.peek();
    require(in.eof(), "bad checkpoint");

    // The stored layout must be exactly what the stored config dictates.
    const Denoiser den(ckpt.config, ckpt.spectral);
    require(den.init_params(0).same_layout(ckpt.params), "bad checkpoint");
    return ckpt;
}

}  // namespace hbsynth
