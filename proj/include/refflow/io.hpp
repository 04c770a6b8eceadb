#pragma once

// Config / manifest / checkpoint plumbing. Configs are JSON and round-trip
// losslessly; the run hash is FNV-1a over the canonical serialization
// (nlohmann orders object keys, so whitespace and key order never matter).

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "refflow/datagen.hpp"
#include "refflow/dataset.hpp"
#include "refflow/guidance.hpp"
#include "refflow/models/mlp.hpp"
#include "refflow/models/spg.hpp"
#include "refflow/sampler.hpp"
#include "refflow/version.hpp"

namespace refflow {

using nlohmann::json;

// --- enum spellings ---------------------------------------------------------

inline std::string to_string(GuidanceKind k) {
    switch (k) {
        case GuidanceKind::Constant: return "constant";
        case GuidanceKind::QuadraticDecay: return "quadratic-decay";
        case GuidanceKind::Bell: return "bell";
    }
    return "constant";
}

inline GuidanceKind guidance_kind_from_string(const std::string& s) {
    if (s == "constant") return GuidanceKind::Constant;
    if (s == "quadratic-decay") return GuidanceKind::QuadraticDecay;
    if (s == "bell") return GuidanceKind::Bell;
    throw std::invalid_argument("unknown guidance kind: " + s);
}

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "momentum"; }

inline OptimizerKind optimizer_kind_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::Sgd;
    if (s == "momentum") return OptimizerKind::Momentum;
    throw std::invalid_argument("unknown optimizer kind: " + s);
}

// --- config blocks ----------------------------------------------------------

struct DatasetSpec {
    std::string path;                     // CSV file; generator is used when empty
    std::string generator = "two-moons";  // two-moons | gaussians | mnist-binary
    std::size_t n = 500;
    double noise = 0.1;
    std::uint64_t seed = 1;
    std::vector<Vec> centers = {{-2.0, 0.0}, {2.0, 0.0}};  // gaussians
    double sigma = 0.5;
    std::string mnist_images, mnist_labels;  // mnist-binary
    std::vector<int> digits = {0, 1};
    std::size_t max_per_class = 500;

    DataSet load() const {
        if (!path.empty()) return read_dataset_csv(path);
        if (generator == "two-moons") return two_moons(n, noise, seed);
        if (generator == "gaussians") return gaussian_blobs(centers, sigma, n, seed);
        if (generator == "mnist-binary") return read_mnist_idx(mnist_images, mnist_labels, digits, max_per_class);
        throw std::invalid_argument("DatasetSpec: unknown generator '" + generator + "'");
    }
};

// soft / hard conditioning of the base dataset, with the labeled reference
// points drawn from the dataset itself (labels are never shown to the flow)
struct ConditionSpec {
    std::string mode = "none";  // none | hard | soft | soft-composition
    int target_class = 1;
    std::size_t m = 5;          // labeled reference count (soft modes)
    std::uint64_t ref_seed = 0;
    double bandwidth = 0.0;     // 0 = median pairwise distance heuristic
    double fraction = 0.5;      // soft-composition: target-class share
};

struct SamplerSpec {
    SamplerConfig config;
    std::size_t n_samples = 500;
};

struct TrainSpec {
    std::string kind = "fm";  // fm | spg
    TrainConfig config;
    std::vector<std::size_t> hidden = {64, 64};
    std::size_t d_k = 8;
    double w_ref = kRefinerPenaltyWeight;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    std::string schedule = "linear";
    std::optional<GuidanceSpec> guidance;
    std::optional<DatasetSpec> reference;
    ConditionSpec condition;
    SamplerSpec sampler;
    std::optional<TrainSpec> train;
    std::string model_path;  // checkpoint used as the base mean provider
    std::string output_dir = "out";
};

// --- json round trips -------------------------------------------------------

inline void to_json(json& j, const DatasetSpec& s) {
    j = json{{"path", s.path},           {"generator", s.generator}, {"n", s.n},
             {"noise", s.noise},         {"seed", s.seed},           {"centers", s.centers},
             {"sigma", s.sigma},         {"mnist_images", s.mnist_images},
             {"mnist_labels", s.mnist_labels}, {"digits", s.digits}, {"max_per_class", s.max_per_class}};
}

inline void from_json(const json& j, DatasetSpec& s) {
    s = DatasetSpec{};
    if (j.contains("path")) j.at("path").get_to(s.path);
    if (j.contains("generator")) j.at("generator").get_to(s.generator);
    if (j.contains("n")) j.at("n").get_to(s.n);
    if (j.contains("noise")) j.at("noise").get_to(s.noise);
    if (j.contains("seed")) j.at("seed").get_to(s.seed);
    if (j.contains("centers")) j.at("centers").get_to(s.centers);
    if (j.contains("sigma")) j.at("sigma").get_to(s.sigma);
    if (j.contains("mnist_images")) j.at("mnist_images").get_to(s.mnist_images);
    if (j.contains("mnist_labels")) j.at("mnist_labels").get_to(s.mnist_labels);
    if (j.contains("digits")) j.at("digits").get_to(s.digits);
    if (j.contains("max_per_class")) j.at("max_per_class").get_to(s.max_per_class);
}

inline void to_json(json& j, const GuidanceSpec& s) {
    j = json{{"kind", to_string(s.kind)}, {"beta0", s.gamma0}, {"cutoff", s.cutoff}, {"temperature", s.temperature}};
}

inline void from_json(const json& j, GuidanceSpec& s) {
    s = GuidanceSpec{};
    if (j.contains("kind")) s.kind = guidance_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("beta0")) j.at("beta0").get_to(s.gamma0);
    if (j.contains("cutoff")) j.at("cutoff").get_to(s.cutoff);
    if (j.contains("temperature")) j.at("temperature").get_to(s.temperature);
    s.validate();
}

inline void to_json(json& j, const ConditionSpec& s) {
    j = json{{"mode", s.mode},         {"target_class", s.target_class}, {"m", s.m},
             {"ref_seed", s.ref_seed}, {"bandwidth", s.bandwidth},       {"fraction", s.fraction}};
}

inline void from_json(const json& j, ConditionSpec& s) {
    s = ConditionSpec{};
    if (j.contains("mode")) j.at("mode").get_to(s.mode);
    if (j.contains("target_class")) j.at("target_class").get_to(s.target_class);
    if (j.contains("m")) j.at("m").get_to(s.m);
    if (j.contains("ref_seed")) j.at("ref_seed").get_to(s.ref_seed);
    if (j.contains("bandwidth")) j.at("bandwidth").get_to(s.bandwidth);
    if (j.contains("fraction")) j.at("fraction").get_to(s.fraction);
}

inline void to_json(json& j, const SamplerSpec& s) {
    j = json{{"nfe", s.config.nfe},
             {"eps", s.config.eps},
             {"seed", s.config.seed},
             {"record_trajectory", s.config.record_trajectory},
             {"n", s.n_samples}};
}

inline void from_json(const json& j, SamplerSpec& s) {
    s = SamplerSpec{};
    if (j.contains("nfe")) j.at("nfe").get_to(s.config.nfe);
    if (j.contains("eps")) j.at("eps").get_to(s.config.eps);
    if (j.contains("seed")) j.at("seed").get_to(s.config.seed);
    if (j.contains("record_trajectory")) j.at("record_trajectory").get_to(s.config.record_trajectory);
    if (j.contains("n")) j.at("n").get_to(s.n_samples);
    s.config.validate();
}

inline void to_json(json& j, const TrainSpec& s) {
    j = json{{"kind", s.kind},
             {"steps", s.config.steps},
             {"batch_size", s.config.batch_size},
             {"learning_rate", s.config.learning_rate},
             {"optimizer", to_string(s.config.optimizer)},
             {"seed", s.config.seed},
             {"eps_train", s.config.eps_train},
             {"reference_size", s.config.reference_size},
             {"mask_prob", s.config.mask_prob},
             {"clip_norm", s.config.clip_norm},
             {"hidden", s.hidden},
             {"d_k", s.d_k},
             {"w_ref", s.w_ref}};
}

inline void from_json(const json& j, TrainSpec& s) {
    s = TrainSpec{};
    if (j.contains("kind")) j.at("kind").get_to(s.kind);
    if (j.contains("steps")) j.at("steps").get_to(s.config.steps);
    if (j.contains("batch_size")) j.at("batch_size").get_to(s.config.batch_size);
    if (j.contains("learning_rate")) j.at("learning_rate").get_to(s.config.learning_rate);
    if (j.contains("optimizer")) s.config.optimizer = optimizer_kind_from_string(j.at("optimizer").get<std::string>());
    if (j.contains("seed")) j.at("seed").get_to(s.config.seed);
    if (j.contains("eps_train")) j.at("eps_train").get_to(s.config.eps_train);
    if (j.contains("reference_size")) j.at("reference_size").get_to(s.config.reference_size);
    if (j.contains("mask_prob")) j.at("mask_prob").get_to(s.config.mask_prob);
    if (j.contains("clip_norm")) j.at("clip_norm").get_to(s.config.clip_norm);
    if (j.contains("hidden")) j.at("hidden").get_to(s.hidden);
    if (j.contains("d_k")) j.at("d_k").get_to(s.d_k);
    if (j.contains("w_ref")) j.at("w_ref").get_to(s.w_ref);
    s.config.validate();
}

inline void to_json(json& j, const ExperimentConfig& c) {
    j = json{{"dataset", c.dataset},   {"schedule", c.schedule},   {"condition", c.condition},
             {"sampler", c.sampler},   {"model_path", c.model_path}, {"output_dir", c.output_dir}};
    if (c.guidance) j["guidance"] = *c.guidance;
    if (c.reference) j["reference"] = *c.reference;
    if (c.train) j["train"] = *c.train;
}

inline void from_json(const json& j, ExperimentConfig& c) {
    c = ExperimentConfig{};
    if (j.contains("dataset")) j.at("dataset").get_to(c.dataset);
    if (j.contains("schedule")) j.at("schedule").get_to(c.schedule);
    if (j.contains("condition")) j.at("condition").get_to(c.condition);
    if (j.contains("sampler")) j.at("sampler").get_to(c.sampler);
    if (j.contains("model_path")) j.at("model_path").get_to(c.model_path);
    if (j.contains("output_dir")) j.at("output_dir").get_to(c.output_dir);
    if (j.contains("guidance")) c.guidance = j.at("guidance").get<GuidanceSpec>();
    if (j.contains("reference")) c.reference = j.at("reference").get<DatasetSpec>();
    if (j.contains("train")) c.train = j.at("train").get<TrainSpec>();
    if (c.schedule != "linear") throw std::invalid_argument("ExperimentConfig: schedule must be 'linear'");
}

// --- canonical hash ---------------------------------------------------------

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string config_hash(const json& config) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(config.dump())));
    return buf;
}

inline std::string config_hash(const ExperimentConfig& config) { return config_hash(json(config)); }

// --- run manifest -----------------------------------------------------------

struct RunManifest {
    std::string config_hash;
    std::string version = kVersion;
    double duration_seconds = 0.0;
    std::vector<std::string> outputs;
    bool incomplete = false;
};

inline void to_json(json& j, const RunManifest& m) {
    j = json{{"config_hash", m.config_hash},
             {"version", m.version},
             {"duration_seconds", m.duration_seconds},
             {"outputs", m.outputs},
             {"incomplete", m.incomplete}};
}

inline void from_json(const json& j, RunManifest& m) {
    j.at("config_hash").get_to(m.config_hash);
    j.at("version").get_to(m.version);
    j.at("duration_seconds").get_to(m.duration_seconds);
    j.at("outputs").get_to(m.outputs);
    j.at("incomplete").get_to(m.incomplete);
}

inline void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_json_file: cannot open " + path);
    out << j.dump(2) << "\n";
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_json_file: cannot open " + path);
    json j;
    in >> j;
    return j;
}

// --- checkpoints ------------------------------------------------------------
//
// Versioned JSON with explicit shape headers. refflow-mlp-v1 stores the
// velocity net; refflow-spg-v1 stores the five SPG blocks.

inline json layer_to_json(const DenseLayer& l) {
    return json{{"rows", l.rows}, {"cols", l.cols}, {"w", l.w}, {"b", l.b}};
}

inline DenseLayer layer_from_json(const json& j) {
    DenseLayer l;
    j.at("rows").get_to(l.rows);
    j.at("cols").get_to(l.cols);
    j.at("w").get_to(l.w);
    j.at("b").get_to(l.b);
    if (l.w.size() != l.rows * l.cols || l.b.size() != l.rows)
        throw std::runtime_error("checkpoint: layer shape header does not match payload");
    return l;
}

inline json net_to_json(const Mlp& net) {
    json layers = json::array();
    for (const auto& l : net.layers) layers.push_back(layer_to_json(l));
    return json{{"layers", layers}, {"out_act", net.out_act == OutputAct::Sigmoid ? "sigmoid" : "identity"}};
}

inline Mlp net_from_json(const json& j) {
    Mlp net;
    for (const auto& lj : j.at("layers")) net.layers.push_back(layer_from_json(lj));
    net.out_act = j.at("out_act").get<std::string>() == "sigmoid" ? OutputAct::Sigmoid : OutputAct::Identity;
    if (net.layers.empty()) throw std::runtime_error("checkpoint: net has no layers");
    return net;
}

inline void save_mlp_checkpoint(const MlpParams& params, const std::string& path) {
    write_json_file(json{{"format", "refflow-mlp-v1"}, {"d", params.d}, {"net", net_to_json(params.net)}}, path);
}

inline MlpParams load_mlp_checkpoint(const std::string& path) {
    const json j = read_json_file(path);
    if (j.value("format", "") != "refflow-mlp-v1") throw std::runtime_error("not a refflow-mlp-v1 checkpoint: " + path);
    MlpParams p;
    j.at("d").get_to(p.d);
    p.net = net_from_json(j.at("net"));
    if (p.net.in_dim() != p.d + kTimeFeatures || p.net.out_dim() != p.d)
        throw std::runtime_error("checkpoint: net shape inconsistent with d");
    return p;
}

inline void save_spg_checkpoint(const SpgParams& params, const std::string& path) {
    write_json_file(json{{"format", "refflow-spg-v1"},
                         {"d", params.d},
                         {"d_k", params.d_k},
                         {"q_map", layer_to_json(params.q_map)},
                         {"k_map", layer_to_json(params.k_map)},
                         {"gate_g", net_to_json(params.gate_g)},
                         {"gate_a", net_to_json(params.gate_a)},
                         {"refiner", net_to_json(params.refiner)}},
                    path);
}

inline SpgParams load_spg_checkpoint(const std::string& path) {
    const json j = read_json_file(path);
    if (j.value("format", "") != "refflow-spg-v1") throw std::runtime_error("not a refflow-spg-v1 checkpoint: " + path);
    SpgParams p;
    j.at("d").get_to(p.d);
    j.at("d_k").get_to(p.d_k);
    p.q_map = layer_from_json(j.at("q_map"));
    p.k_map = layer_from_json(j.at("k_map"));
    p.gate_g = net_from_json(j.at("gate_g"));
    p.gate_a = net_from_json(j.at("gate_a"));
    p.refiner = net_from_json(j.at("refiner"));
    if (p.q_map.rows != p.d_k || p.q_map.cols != p.d || p.k_map.rows != p.d_k || p.k_map.cols != p.d)
        throw std::runtime_error("checkpoint: attention map shapes inconsistent with d/d_k");
    return p;
}

}  // namespace refflow
