#pragma once

// Experiment runners behind the CLI subcommands. Every run resolves its
// output directory, writes CSV tables and SVG plots, and finishes with a
// RunManifest. Runs are single-process and fully determined by the config.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "refflow/io.hpp"
#include "refflow/metrics.hpp"
#include "refflow/posterior.hpp"
#include "refflow/svg.hpp"

namespace refflow {

// --- generic CSV table ------------------------------------------------------

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

inline void write_csv(const CsvTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path);
    for (std::size_t c = 0; c < table.columns.size(); ++c) out << (c ? "," : "") << table.columns[c];
    out << "\n";
    for (const auto& row : table.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_double(row[c]);
        out << "\n";
    }
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_csv: cannot open " + path);
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_csv: empty file " + path);
    std::istringstream hs(line);
    std::string tok;
    while (std::getline(hs, tok, ',')) table.columns.push_back(tok);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream rs(line);
        std::vector<double> row;
        while (std::getline(rs, tok, ',')) row.push_back(std::stod(tok));
        if (row.size() != table.columns.size()) throw std::runtime_error("read_csv: ragged row in " + path);
        table.rows.push_back(std::move(row));
    }
    return table;
}

// --- run bookkeeping --------------------------------------------------------

inline std::filesystem::path resolve_output_dir(const std::string& output_dir) {
    std::filesystem::path p(output_dir);
    if (p.is_relative()) {
        if (const char* root = std::getenv("REFFLOW_OUT_ROOT")) p = std::filesystem::path(root) / p;
    }
    std::filesystem::create_directories(p);
    return p;
}

class RunRecorder {
  public:
    RunRecorder(const ExperimentConfig& config, const std::string& subdir = "")
        : dir_(resolve_output_dir(subdir.empty() ? config.output_dir
                                                 : (std::filesystem::path(config.output_dir) / subdir).string())),
          start_(std::chrono::steady_clock::now()) {
        manifest_.config_hash = config_hash(config);
    }

    const std::filesystem::path& dir() const { return dir_; }

    std::string path(const std::string& name) {
        manifest_.outputs.push_back(name);
        return (dir_ / name).string();
    }

    // The manifest is written exactly once; a run that died midway leaves a
    // partial manifest flagged incomplete.
    void finish(bool incomplete = false) {
        manifest_.incomplete = incomplete;
        manifest_.duration_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        write_json_file(json(manifest_), (dir_ / "manifest.json").string());
    }

  private:
    std::filesystem::path dir_;
    std::chrono::steady_clock::time_point start_;
    RunManifest manifest_;
};

// --- dataset conditioning ---------------------------------------------------

// Stratified draw of m labeled reference points; used by the soft modes.
// For soft-composition the per-class counts follow the requested fraction.
inline DataSet draw_labeled_refs(const DataSet& data, std::size_t m, std::uint64_t seed,
                                 double target_fraction = -1.0, int target_class = 1) {
    if (!data.has_labels()) throw std::invalid_argument("draw_labeled_refs: dataset has no labels");
    if (m < 2) throw std::invalid_argument("draw_labeled_refs: need at least 2 labeled references");
    const std::vector<int> ids = distinct_labels(data);
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < data.size(); ++i) by_class[data.label(i)].push_back(i);

    // per-class quota: stratified (even) or composition-driven
    std::map<int, std::size_t> quota;
    if (target_fraction >= 0.0) {
        if (ids.size() != 2) throw std::invalid_argument("draw_labeled_refs: composition draw needs 2 classes");
        const std::size_t k = static_cast<std::size_t>(std::llround(target_fraction * static_cast<double>(m)));
        for (int c : ids) quota[c] = (c == target_class) ? k : m - k;
    } else {
        std::size_t left = m;
        for (std::size_t c = 0; c < ids.size(); ++c) {
            const std::size_t q = left / (ids.size() - c);
            quota[ids[c]] = q;
            left -= q;
        }
    }

    Rng rng(mix_seed(seed ^ 0x5e17u));
    std::vector<Vec> pts;
    std::vector<int> labels;
    for (int c : ids) {
        auto& pool = by_class[c];
        std::size_t want = quota[c];
        if (want > pool.size()) throw std::invalid_argument("draw_labeled_refs: class too small for quota");
        // partial Fisher-Yates
        for (std::size_t i = 0; i < want; ++i) {
            const std::size_t j = i + rng.index(pool.size() - i);
            std::swap(pool[i], pool[j]);
            pts.push_back(data.point(pool[i]));
            labels.push_back(c);
        }
    }
    return DataSet(std::move(pts), std::move(labels));
}

// Apply the configured inference-time condition to the base dataset.
inline DataSet apply_condition(const DataSet& data, const ConditionSpec& cond) {
    if (cond.mode == "none") return data;
    if (cond.mode == "hard") return hard_filter(data, cond.target_class);
    if (cond.mode == "soft") {
        const DataSet refs = draw_labeled_refs(data, cond.m, cond.ref_seed);
        const double bw = cond.bandwidth > 0.0 ? cond.bandwidth : median_pairwise_distance(refs);
        return soft_reweight(data, refs, cond.target_class, bw);
    }
    if (cond.mode == "soft-composition") {
        const DataSet refs = draw_labeled_refs(data, cond.m, cond.ref_seed, cond.fraction, cond.target_class);
        const double bw = cond.bandwidth > 0.0 ? cond.bandwidth : median_pairwise_distance(refs);
        const std::vector<int> ids = distinct_labels(refs);
        std::map<int, double> comp;
        for (int c : ids) comp[c] = (c == cond.target_class) ? cond.fraction : 1.0 - cond.fraction;
        return soft_composition_reweight(data, refs, comp, bw);
    }
    throw std::invalid_argument("apply_condition: unknown mode '" + cond.mode + "'");
}

// --- velocity field assembly --------------------------------------------------

using VelocityFn = std::function<Vec(const Vec&, double)>;

struct LoadedModel {
    std::optional<MlpParams> mlp;
    std::optional<SpgParams> spg;
};

inline LoadedModel load_model(const std::string& path) {
    LoadedModel m;
    const json j = read_json_file(path);
    const std::string format = j.value("format", "");
    if (format == "refflow-mlp-v1") m.mlp = load_mlp_checkpoint(path);
    else if (format == "refflow-spg-v1") m.spg = load_spg_checkpoint(path);
    else throw std::runtime_error("load_model: unknown checkpoint format in " + path);
    return m;
}

// Assemble the sampling field: base mean provider (empirical posterior or a
// checkpoint), optionally wrapped in reference-mean guidance. All pieces are
// captured by value so the field owns its state.
inline VelocityFn build_field(const ExperimentConfig& cfg, const DataSet& base_data,
                              const std::optional<DataSet>& reference, const AffineSchedule& sched) {
    const double temp = cfg.guidance ? cfg.guidance->temperature : 1.0;

    if (!cfg.model_path.empty()) {
        const LoadedModel model = load_model(cfg.model_path);
        if (model.spg) {
            if (!reference) throw std::invalid_argument("build_field: an SPG model needs a reference set");
            const SpgParams params = *model.spg;
            const DataSet refs = *reference;
            if (cfg.guidance) {
                const GuidanceSpec spec = *cfg.guidance;
                return [params, refs, spec, sched](const Vec& x, double t) {
                    SpgMean base{&params, &refs};
                    return rmg_velocity(x, t, base, refs, spec, sched);
                };
            }
            return [params, refs, sched](const Vec& x, double t) {
                return velocity_from_mean(x, spg_forward(params, x, t, refs.points()), t, sched);
            };
        }
        const MlpParams params = *model.mlp;
        if (cfg.guidance && reference) {
            const GuidanceSpec spec = *cfg.guidance;
            const DataSet refs = *reference;
            return [params, refs, spec, sched](const Vec& x, double t) {
                MlpMean base{&params, sched};
                return rmg_velocity(x, t, base, refs, spec, sched);
            };
        }
        return [params, sched](const Vec& x, double t) { return mlp_forward(params, x, t); };
    }

    if (cfg.guidance && reference) {
        const GuidanceSpec spec = *cfg.guidance;
        const DataSet refs = *reference;
        return [base_data, refs, spec, sched](const Vec& x, double t) {
            EmpiricalMean base{&base_data, sched, spec.temperature};
            return rmg_velocity(x, t, base, refs, spec, sched);
        };
    }
    return [base_data, sched, temp](const Vec& x, double t) {
        return empirical_velocity(x, t, base_data, sched, temp);
    };
}

// --- runners ----------------------------------------------------------------

inline std::string run_gen_data(const DatasetSpec& spec, const std::string& out_path) {
    const DataSet data = spec.load();
    write_dataset_csv(data, out_path);
    return out_path;
}

inline CsvTable samples_to_table(const std::vector<Vec>& points) {
    CsvTable t;
    for (std::size_t j = 0; j < points.front().size(); ++j) t.columns.push_back("x" + std::to_string(j));
    for (const auto& p : points) t.rows.push_back(p);
    return t;
}

inline CsvTable trajectories_to_table(const std::vector<Trajectory>& trajs) {
    CsvTable t;
    t.columns = {"traj", "t"};
    const std::size_t d = trajs.front().states.front().size();
    for (std::size_t j = 0; j < d; ++j) t.columns.push_back("x" + std::to_string(j));
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        for (std::size_t k = 0; k < trajs[i].times.size(); ++k) {
            std::vector<double> row{static_cast<double>(i), trajs[i].times[k]};
            row.insert(row.end(), trajs[i].states[k].begin(), trajs[i].states[k].end());
            t.rows.push_back(std::move(row));
        }
    }
    return t;
}

struct SampleRunResult {
    std::vector<Vec> endpoints;
    std::vector<std::string> files;
};

inline SampleRunResult run_sample(const ExperimentConfig& cfg) {
    RunRecorder rec(cfg);
    try {
        const auto sched = AffineSchedule::linear();
        const DataSet data = apply_condition(cfg.dataset.load(), cfg.condition);
        std::optional<DataSet> reference;
        if (cfg.reference) reference = cfg.reference->load();
        const VelocityFn field = build_field(cfg, data, reference, sched);

        const auto sources = sample_source(cfg.sampler.config.seed, cfg.sampler.n_samples, data.dim());
        SampleRunResult res;
        std::vector<Trajectory> trajs;
        for (const auto& x0 : sources) {
            Trajectory traj = euler_sample(field, x0, cfg.sampler.config);
            res.endpoints.push_back(traj.endpoint());
            if (cfg.sampler.config.record_trajectory) trajs.push_back(std::move(traj));
        }
        write_csv(samples_to_table(res.endpoints), rec.path("samples.csv"));
        if (!trajs.empty()) {
            write_csv(trajectories_to_table(trajs), rec.path("trajectories.csv"));
            if (data.dim() == 2) write_text_file(svg_trajectories(trajs), rec.path("trajectories.svg"));
        }
        res.files.push_back((rec.dir() / "samples.csv").string());
        rec.finish();
        return res;
    } catch (...) {
        rec.finish(/*incomplete=*/true);
        throw;
    }
}

struct FlowfieldSpec {
    double t = 0.5;
    std::vector<double> bounds = {-2.0, 3.0, -1.5, 2.0};  // x_lo, x_hi, y_lo, y_hi
    std::size_t resolution = 25;
};

inline CsvTable grid_to_table(const FlowGrid& grid) {
    CsvTable t;
    const std::size_t d = grid.points.front().size();
    for (std::size_t j = 0; j < d; ++j) t.columns.push_back("x" + std::to_string(j));
    for (std::size_t j = 0; j < d; ++j) t.columns.push_back("u" + std::to_string(j));
    for (std::size_t i = 0; i < grid.points.size(); ++i) {
        std::vector<double> row = grid.points[i];
        row.insert(row.end(), grid.velocities[i].begin(), grid.velocities[i].end());
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline std::vector<std::string> run_flowfield(const ExperimentConfig& cfg, const FlowfieldSpec& ff) {
    RunRecorder rec(cfg);
    try {
        const auto sched = AffineSchedule::linear();
        const DataSet data = apply_condition(cfg.dataset.load(), cfg.condition);
        if (data.dim() != 2) throw std::invalid_argument("run_flowfield: needs 2-D data");
        std::optional<DataSet> reference;
        if (cfg.reference) reference = cfg.reference->load();
        const VelocityFn field = build_field(cfg, data, reference, sched);

        const FlowGrid grid = flow_field_grid(field, {{ff.bounds[0], ff.bounds[1]}, {ff.bounds[2], ff.bounds[3]}},
                                              {ff.resolution, ff.resolution}, ff.t);
        write_csv(grid_to_table(grid), rec.path("flowfield.csv"));
        write_text_file(svg_flow_field(grid), rec.path("flowfield.svg"));
        std::vector<std::string> files{(rec.dir() / "flowfield.csv").string(), (rec.dir() / "flowfield.svg").string()};
        rec.finish();
        return files;
    } catch (...) {
        rec.finish(true);
        throw;
    }
}

struct SweepSpec {
    std::optional<DatasetSpec> bank_a;  // defaults to the target class of the base dataset
    std::optional<DatasetSpec> bank_b;
    std::vector<double> fractions = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::size_t m = 0;  // 0 = min bank size
    int target_class = 1;
};

inline CompositionCurve run_composition_sweep(const ExperimentConfig& cfg, const SweepSpec& sweep,
                                              std::vector<std::string>* files_out = nullptr) {
    RunRecorder rec(cfg);
    try {
        const auto sched = AffineSchedule::linear();
        const DataSet data = apply_condition(cfg.dataset.load(), cfg.condition);
        if (!cfg.guidance) throw std::invalid_argument("run_composition_sweep: needs a guidance block");
        const DataSet bank_a = sweep.bank_a ? sweep.bank_a->load() : hard_filter(data, sweep.target_class);
        const DataSet bank_b = sweep.bank_b ? sweep.bank_b->load() : [&] {
            for (int c : distinct_labels(data))
                if (c != sweep.target_class) return hard_filter(data, c);
            throw std::invalid_argument("run_composition_sweep: no non-target class in dataset");
        }();
        const LabeledPrototypes protos = LabeledPrototypes::from_dataset(data);

        EmpiricalMean base{&data, sched, cfg.guidance->temperature};
        const CompositionCurve curve =
            composition_sweep(base, bank_a, bank_b, sweep.fractions, *cfg.guidance, cfg.sampler.config, protos,
                              sweep.target_class, cfg.sampler.n_samples, sched, sweep.m);

        CsvTable t;
        t.columns = {"fraction", "generated_fraction", "n"};
        std::vector<double> xs, ys;
        for (const auto& row : curve.rows) {
            t.rows.push_back({row.reference_composition, row.generated_fraction, static_cast<double>(row.sample_count)});
            xs.push_back(row.reference_composition);
            ys.push_back(row.generated_fraction);
        }
        write_csv(t, rec.path("composition.csv"));
        write_text_file(svg_curve(xs, ys, "reference fraction", "generated fraction"), rec.path("composition.svg"));
        if (files_out) {
            files_out->push_back((rec.dir() / "composition.csv").string());
            files_out->push_back((rec.dir() / "composition.svg").string());
        }
        rec.finish();
        return curve;
    } catch (...) {
        rec.finish(true);
        throw;
    }
}

struct AblationSpec {
    std::vector<std::string> kinds = {"constant", "quadratic-decay", "bell"};
    std::vector<double> beta0s = {0.25, 0.5, 1.0, 2.0};
    std::vector<std::size_t> sizes = {1, 2, 4, 8, 16, 32, 64, 128};
    std::size_t replicates = 5;
    std::vector<int> nfes = {10, 20, 30, 50, 100, 200};
};

// Schedule-form / strength sweep: reference-steered sampling per (kind,
// beta0); records steering fraction, diversity and the largest gamma_t c_t
// seen along the trajectories.
inline CsvTable run_schedule_ablation(const ExperimentConfig& cfg, const AblationSpec& ab, int target_class = 1) {
    RunRecorder rec(cfg);
    try {
        const auto sched = AffineSchedule::linear();
        const DataSet data = apply_condition(cfg.dataset.load(), cfg.condition);
        const DataSet refs = cfg.reference ? cfg.reference->load() : hard_filter(data, target_class);
        const LabeledPrototypes protos = LabeledPrototypes::from_dataset(data);

        CsvTable t;  // numeric view: schedule as its index in ab.kinds
        t.columns = {"schedule_index", "beta0", "target_fraction", "diversity", "max_gamma_c"};
        std::ofstream csv(rec.path("schedule_ablation.csv"), std::ios::binary);
        csv << "schedule,beta0,target_fraction,diversity,max_gamma_c\n";
        for (std::size_t ki = 0; ki < ab.kinds.size(); ++ki) {
            for (double b0 : ab.beta0s) {
                GuidanceSpec spec = cfg.guidance.value_or(GuidanceSpec{});
                spec.kind = guidance_kind_from_string(ab.kinds[ki]);
                spec.gamma0 = b0;
                EmpiricalMean base{&data, sched, spec.temperature};
                double max_gc = 0.0;
                auto field = [&](const Vec& x, double tt) {
                    max_gc = std::max(max_gc, schedule_value(spec, tt) * coefficients(sched, tt).c);
                    return rmg_velocity(x, tt, base, refs, spec, sched);
                };
                const auto sources = sample_source(cfg.sampler.config.seed, cfg.sampler.n_samples, data.dim());
                const auto ends = euler_endpoints(field, sources, cfg.sampler.config);
                const double frac = fraction_of_class(classify(ends, protos), target_class);
                const double div = pairwise_diversity(ends);
                t.rows.push_back({static_cast<double>(ki), b0, frac, div, max_gc});
                csv << ab.kinds[ki] << ',' << format_double(b0) << ',' << format_double(frac) << ','
                    << format_double(div) << ',' << format_double(max_gc) << "\n";
            }
        }
        csv.close();
        rec.finish();
        return t;
    } catch (...) {
        rec.finish(true);
        throw;
    }
}

// Diversity as a function of the reference-set size M, replicated over seeds.
inline CsvTable run_size_ablation(const ExperimentConfig& cfg, const AblationSpec& ab) {
    RunRecorder rec(cfg);
    try {
        const auto sched = AffineSchedule::linear();
        const DataSet data = apply_condition(cfg.dataset.load(), cfg.condition);
        const DataSet bank = cfg.reference ? cfg.reference->load() : data.without_weights();
        if (!cfg.guidance) throw std::invalid_argument("run_size_ablation: needs a guidance block");
        const GuidanceSpec spec = *cfg.guidance;
        EmpiricalMean base{&data, sched, spec.temperature};

        CsvTable t;
        t.columns = {"m", "replicate", "diversity"};
        std::vector<double> mean_div(ab.sizes.size(), 0.0);
        for (std::size_t si = 0; si < ab.sizes.size(); ++si) {
            const std::size_t m = ab.sizes[si];
            if (m > bank.size()) throw std::invalid_argument("run_size_ablation: bank smaller than M");
            for (std::size_t repl = 0; repl < ab.replicates; ++repl) {
                // random subset of the bank per replicate
                Rng rng(mix_seed(cfg.sampler.config.seed ^ (si * 1000 + repl + 1)));
                std::vector<std::size_t> pool(bank.size());
                for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
                std::vector<Vec> sub;
                for (std::size_t i = 0; i < m; ++i) {
                    const std::size_t j = i + rng.index(pool.size() - i);
                    std::swap(pool[i], pool[j]);
                    sub.push_back(bank.point(pool[i]));
                }
                const DataSet refs(sub);
                auto field = [&](const Vec& x, double tt) { return rmg_velocity(x, tt, base, refs, spec, sched); };
                SamplerConfig scfg = cfg.sampler.config;
                scfg.seed = mix_seed(cfg.sampler.config.seed ^ (0xd1 + repl));
                const auto sources = sample_source(scfg.seed, cfg.sampler.n_samples, data.dim());
                const auto ends = euler_endpoints(field, sources, scfg);
                const double div = pairwise_diversity(ends);
                t.rows.push_back({static_cast<double>(m), static_cast<double>(repl), div});
                mean_div[si] += div / static_cast<double>(ab.replicates);
            }
        }
        write_csv(t, rec.path("size_ablation.csv"));
        std::vector<double> log_m;
        for (std::size_t m : ab.sizes) log_m.push_back(std::log2(static_cast<double>(m)));
        write_text_file(svg_curve(log_m, mean_div, "log2 M", "diversity"), rec.path("size_ablation.svg"));
        rec.finish();
        return t;
    } catch (...) {
        rec.finish(true);
        throw;
    }
}

// NFE sweep with fixed seeds: per-budget endpoint files plus a runtime
// summary column.
inline CsvTable run_nfe_ablation(const ExperimentConfig& cfg, const AblationSpec& ab) {
    RunRecorder rec(cfg);
    try {
        const auto sched = AffineSchedule::linear();
        const DataSet data = apply_condition(cfg.dataset.load(), cfg.condition);
        std::optional<DataSet> reference;
        if (cfg.reference) reference = cfg.reference->load();
        const VelocityFn field = build_field(cfg, data, reference, sched);
        const auto sources = sample_source(cfg.sampler.config.seed, cfg.sampler.n_samples, data.dim());

        CsvTable t;
        t.columns = {"nfe", "seconds"};
        for (int nfe : ab.nfes) {
            SamplerConfig scfg = cfg.sampler.config;
            scfg.nfe = nfe;
            const auto t0 = std::chrono::steady_clock::now();
            const auto ends = euler_endpoints(field, sources, scfg);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            char name[48];
            std::snprintf(name, sizeof(name), "endpoints_nfe%03d.csv", nfe);
            write_csv(samples_to_table(ends), rec.path(name));
            t.rows.push_back({static_cast<double>(nfe), secs});
        }
        write_csv(t, rec.path("nfe_runtime.csv"));
        rec.finish();
        return t;
    } catch (...) {
        rec.finish(true);
        throw;
    }
}

inline std::string run_train(const ExperimentConfig& cfg) {
    RunRecorder rec(cfg);
    try {
        if (!cfg.train) throw std::invalid_argument("run_train: config has no train block");
        const auto sched = AffineSchedule::linear();
        const DataSet data = apply_condition(cfg.dataset.load(), cfg.condition);
        const TrainSpec& spec = *cfg.train;
        std::string ckpt;
        CsvTable losses;
        if (spec.kind == "fm") {
            const FmTrainResult res = fm_train(data, spec.config, sched, spec.hidden);
            ckpt = rec.path("mlp_checkpoint.json");
            save_mlp_checkpoint(res.params, ckpt);
            losses.columns = {"step", "loss"};
            for (std::size_t i = 0; i < res.loss_history.size(); ++i)
                losses.rows.push_back({static_cast<double>(i), res.loss_history[i]});
        } else if (spec.kind == "spg") {
            const SpgTrainResult res = spg_train(data, spec.config, sched, spec.d_k, spec.w_ref);
            ckpt = rec.path("spg_checkpoint.json");
            save_spg_checkpoint(res.params, ckpt);
            losses.columns = {"step", "loss_mu", "loss_ref"};
            for (std::size_t i = 0; i < res.mu_history.size(); ++i)
                losses.rows.push_back({static_cast<double>(i), res.mu_history[i], res.ref_history[i]});
        } else {
            throw std::invalid_argument("run_train: unknown kind '" + spec.kind + "'");
        }
        write_csv(losses, rec.path("losses.csv"));
        rec.finish();
        return ckpt;
    } catch (...) {
        rec.finish(true);
        throw;
    }
}

}  // namespace refflow
