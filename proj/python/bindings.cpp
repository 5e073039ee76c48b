#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include "hbsynth/augment.hpp"
#include "hbsynth/checkpoint.hpp"
#include "hbsynth/engine.hpp"
#include "hbsynth/ingest.hpp"
#include "hbsynth/metrics.hpp"
#include "hbsynth/run_config.hpp"

namespace py = pybind11;
using namespace hbsynth;

namespace {

py::array_t<double> grid_to_array(const Tensor3& t) {
    py::array_t<double> out({t.c, t.h, t.w});
    std::copy(t.v.begin(), t.v.end(), out.mutable_data());
    return out;
}

Tensor3 array_to_grid(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 3) throw Error("expected a 3-d array");
    Tensor3 t(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
              static_cast<int>(a.shape(2)));
    std::copy(a.data(), a.data() + t.size(), t.v.begin());
    return t;
}

SpectralConfig spectral_config(int n_fft, int hop, const std::string& window,
                               const std::string& pad_mode) {
    SpectralConfig cfg;
    cfg.n_fft = n_fft;
    cfg.hop = hop;
    cfg.window = window;
    cfg.pad_mode = pad_mode;
    return cfg;
}

py::dict beat_to_dict(const Heartbeat& b) {
    py::dict d;
    d["samples"] = b.samples;
    d["label"] = std::string(1, beat_class_char(b.label));
    d["record_id"] = b.record_id;
    d["beat_index"] = b.beat_index;
    return d;
}

}  // namespace

PYBIND11_MODULE(_hbsynth, m) {
    m.doc() = "diffusion-based heartbeat synthesis core";

    py::register_exception<Error>(m, "HbsynthError");

    m.def(
        "stft",
        [](const std::vector<double>& x, int n_fft, int hop, const std::string& window,
           const std::string& pad_mode) {
            return grid_to_array(stft(x, spectral_config(n_fft, hop, window, pad_mode)).grid);
        },
        py::arg("x"), py::arg("n_fft") = 64, py::arg("hop") = 4, py::arg("window") = "hann",
        py::arg("pad_mode") = "reflect",
        "Complex STFT as a (2, bins, frames) array of real/imag planes.");

    m.def(
        "istft",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& grid, int length,
           int n_fft, int hop, const std::string& window, const std::string& pad_mode) {
            Spectrogram s;
            s.config = spectral_config(n_fft, hop, window, pad_mode);
            s.source_length = length;
            s.grid = array_to_grid(grid);
            return istft(s);
        },
        py::arg("grid"), py::arg("length"), py::arg("n_fft") = 64, py::arg("hop") = 4,
        py::arg("window") = "hann", py::arg("pad_mode") = "reflect",
        "Exact inverse of stft for grids of the matching shape.");

    m.def("rmse", &rmse, py::arg("a"), py::arg("b"));
    m.def("mae", &mae, py::arg("a"), py::arg("b"));
    m.def("dtw", &dtw, py::arg("a"), py::arg("b"));
    m.def("emd", &emd_1d, py::arg("xs"), py::arg("ys"),
          "Mean per-time-index 1-d Wasserstein distance between beat sets.");
    m.def(
        "mmd",
        [](const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y) {
            return mmd(x, y);
        },
        py::arg("x"), py::arg("y"), "Biased squared MMD with the median-heuristic bandwidth.");
    m.def("fid", &fid, py::arg("x"), py::arg("y"),
          "Frechet distance between Gaussian fits of two feature sets.");
    m.def("statistical_features", &statistical_features, py::arg("x"));

    m.def(
        "toy_dataset",
        [](int per_class, int beats_per_record, std::uint64_t seed, int length) {
            const BeatDataset ds = make_toy_dataset(per_class, beats_per_record, seed, length);
            py::list out;
            for (const Heartbeat& b : ds.beats) out.append(beat_to_dict(b));
            return out;
        },
        py::arg("per_class") = 20, py::arg("beats_per_record") = 10, py::arg("seed") = 7,
        py::arg("length") = kDefaultBeatLength,
        "Parametric three-class beat corpus as a list of dicts.");

    m.def(
        "write_beats_csv",
        [](const std::string& path, const std::vector<std::vector<double>>& beats,
           const std::vector<std::string>& labels) {
            if (beats.size() != labels.size()) throw Error("length mismatch");
            BeatDataset ds;
            for (std::size_t i = 0; i < beats.size(); ++i) {
                Heartbeat b;
                b.samples = beats[i];
                if (labels[i].size() != 1) throw Error("unknown class");
                b.label = beat_class_from_char(labels[i][0]);
                b.record_id = "py";
                b.beat_index = static_cast<int>(i);
                ds.beats.push_back(std::move(b));
            }
            write_beats_csv(ds, path);
        },
        py::arg("path"), py::arg("beats"), py::arg("labels"));

    m.def(
        "read_beats_csv",
        [](const std::string& path) {
            const BeatDataset ds = read_beats_csv(path);
            py::list out;
            for (const Heartbeat& b : ds.beats) out.append(beat_to_dict(b));
            return out;
        },
        py::arg("path"));

    m.def(
        "train",
        [](const std::string& data_csv, const std::string& out_checkpoint,
           const std::string& config_text) {
            RunConfig cfg = parse_run_config(config_text);
            validate_config(cfg);
            const BeatDataset data = read_beats_csv(data_csv);
            Engine engine(cfg.model, cfg.spectral,
                          make_schedule(cfg.schedule.steps, cfg.schedule.beta_min,
                                        cfg.schedule.beta_max, cfg.schedule.spacing,
                                        cfg.schedule.variance));
            const TrainConfig tc = train_config_of(cfg);
            auto [params, log] = engine.train(data, tc);

            Checkpoint ckpt;
            ckpt.config = cfg.model;
            ckpt.spectral = cfg.spectral;
            ckpt.schedule = engine.schedule();
            ckpt.seed = tc.seed;
            ckpt.params = std::move(params);
            save_checkpoint(out_checkpoint, ckpt);

            py::list rows;
            for (const TrainLogRow& r : log.rows) {
                py::dict d;
                d["step"] = r.step;
                d["task"] = task_name(r.task);
                d["loss_diff"] = r.loss_diff;
                d["loss_mse"] = r.loss_mse;
                d["loss_total"] = r.loss_total;
                rows.append(d);
            }
            return rows;
        },
        py::arg("data_csv"), py::arg("out_checkpoint"), py::arg("config_text") = "",
        "Trains from a beats CSV, writes a checkpoint, returns the loss log.");

    m.def(
        "generate",
        [](const std::string& checkpoint, const std::string& label, int count,
           std::uint64_t seed, int length) {
            const Checkpoint ckpt = load_checkpoint(checkpoint);
            const Engine engine = Engine::from_checkpoint(ckpt);
            if (label.size() != 1) throw Error("unknown class");
            const BeatClass c = beat_class_from_char(label[0]);
            py::list out;
            for (int k = 0; k < count; ++k) {
                const Heartbeat b =
                    engine.generate(c, ckpt.params,
                                    substream_seed(seed, static_cast<std::uint64_t>(c),
                                                   static_cast<std::uint64_t>(k)),
                                    length);
                out.append(beat_to_dict(b));
            }
            return out;
        },
        py::arg("checkpoint"), py::arg("label"), py::arg("count") = 1, py::arg("seed") = 0,
        py::arg("length") = kDefaultBeatLength,
        "Class-conditional sampling from a trained checkpoint.");

    m.def(
        "evaluate",
        [](const std::string& real_csv, const std::string& synth_csv, const std::string& pairing) {
            const BeatDataset real = read_beats_csv(real_csv);
            const BeatDataset synth = read_beats_csv(synth_csv);
            Pairing p;
            if (pairing == "nearest-real")
                p = Pairing::NearestReal;
            else if (pairing == "ground-truth")
                p = Pairing::GroundTruth;
            else
                throw Error("unknown pairing: " + pairing);
            const MetricsReport rep = evaluate_sets(real, synth, p);
            py::dict out;
            auto pack = [](const ClassMetrics& cm) {
                py::dict d;
                d["rmse"] = cm.rmse;
                d["mae"] = cm.mae;
                d["dtw"] = cm.dtw;
                d["fid"] = cm.fid;
                d["emd"] = cm.emd;
                d["mmd"] = cm.mmd;
                d["n_real"] = cm.n_real;
                d["n_synth"] = cm.n_synth;
                return d;
            };
            for (const auto& [code, cm] : rep.per_class) out[py::str(std::string(1, code))] = pack(cm);
            out["overall"] = pack(rep.overall);
            return out;
        },
        py::arg("real_csv"), py::arg("synth_csv"), py::arg("pairing") = "nearest-real",
        "Six-metric comparison of a synthetic set against a real set.");

    m.attr("DEFAULT_BEAT_LENGTH") = kDefaultBeatLength;
}
