#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hbsynth/denoiser.hpp"
#include "hbsynth/engine.hpp"
#include "hbsynth/ingest.hpp"

namespace hbsynth {

/// Small 1-D convolutional beat classifier: 3 conv stages (each conv +
/// ReLU + 2x ceil-mode max-pooling), global average pooling, one hidden
/// linear layer (the feature layer exposed to the metrics suite), and a
/// linear class head.
struct ClassifierConfig {
    std::vector<int> channels = {8, 16, 32};
    std::vector<int> kernels = {7, 5, 3};
    int hidden_dim = 64;
    double learning_rate = 3e-3;
    int epochs = 30;
    int batch_size = 16;
    std::uint64_t seed = 0;
};

void validate_config(const ClassifierConfig& cfg);  // "bad classifier config"

struct Classifier {
    ClassifierConfig config;
    DenoiserParams params;      // named tensors, same container as the denoiser
    int input_length = 0;
    std::vector<char> classes;  // class codes in output order
};

/// Deterministic given cfg.seed. Throws "no training data" on an empty
/// set and "degenerate training set" when fewer than 2 classes appear.
Classifier train_classifier(const BeatDataset& train, const ClassifierConfig& cfg);

/// Penultimate-layer activations (hidden_dim values).
std::vector<double> classifier_features(const Classifier& clf, const std::vector<double>& x);

/// Index into clf.classes of the argmax logit.
int classify(const Classifier& clf, const std::vector<double>& x);

struct ClassificationReport {
    double accuracy = 0.0;
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    std::vector<std::vector<long>> confusion;  // [true class][predicted class]
    std::vector<char> classes;
    std::string setting_tag;
    std::uint64_t seed = 0;
};

/// Confusion-matrix metrics with macro averaging; per-class 0/0 rates
/// count as 0. Throws "class mismatch" if the test set contains a class
/// the classifier was not trained on.
ClassificationReport evaluate_classifier(const Classifier& clf, const BeatDataset& test);

struct AugmentResult {
    ClassificationReport baseline;   // setting tag "real-only"
    ClassificationReport augmented;  // setting tag "real+synthetic"
    std::vector<long> added_per_class;  // synthetic beats added, by class order N,V,F
};

/// Trains the classifier twice under one config/seed: on the real
/// training set alone, and on the real set plus diffusion-generated
/// beats. n_synth_per_class = -1 tops every class up to the majority
/// count (the imbalance-driven default); n >= 0 adds exactly n per class.
AugmentResult run_settings(const BeatDataset& real_train, const BeatDataset& real_test,
                           const Engine& engine, const DenoiserParams& diffusion_params,
                           long n_synth_per_class, const ClassifierConfig& cfg);

/// CSV rows keyed by setting tag, plus a text rendering with the
/// confusion matrices.
void write_settings_csv(const AugmentResult& r, const std::string& path);
std::string format_settings(const AugmentResult& r);

/// Single-file persistence (same container style as model checkpoints).
void save_classifier(const std::string& path, const Classifier& clf);
Classifier load_classifier(const std::string& path);  // "bad classifier file"

}  // namespace hbsynth
