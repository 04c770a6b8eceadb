// refflow command-line interface: dataset generation, reproducible sampling
// and flow-field runs, ablation sweeps, model training, oracle verification
// and SVG plotting. Configs are JSON; every flag mirrors a config field and
// overrides it. Exit codes: 0 success, 1 validation error, 2 runtime error,
// 3 verification failure.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "refflow/experiments.hpp"
#include "refflow/io.hpp"
#include "refflow/svg.hpp"
#include "refflow/verify.hpp"
#include "refflow/version.hpp"

using namespace refflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitVerification = 3;

struct CliOverrides {
    std::string config_path;

    std::optional<std::string> output_dir;
    std::optional<std::string> data_path;
    std::optional<std::string> generator;
    std::optional<std::size_t> data_n;
    std::optional<double> noise;
    std::optional<std::uint64_t> data_seed;

    std::optional<std::string> ref_path;
    std::optional<std::string> model_path;

    std::optional<std::string> guidance_kind;
    std::optional<double> beta0;
    std::optional<double> cutoff;
    std::optional<double> temperature;
    bool temp_sqrt_d = false;

    std::optional<std::string> condition_mode;
    std::optional<int> target_class;
    std::optional<std::size_t> cond_m;
    std::optional<std::uint64_t> cond_seed;
    std::optional<double> bandwidth;
    std::optional<double> cond_fraction;

    std::optional<int> nfe;
    std::optional<double> eps;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> n_samples;
    bool record_trajectory = false;
};

void add_common_flags(CLI::App* cmd, CliOverrides& ov) {
    cmd->add_option("--config", ov.config_path, "JSON config file");
    cmd->add_option("--output-dir", ov.output_dir, "output directory (joined with $REFFLOW_OUT_ROOT when relative)");
    cmd->add_option("--data", ov.data_path, "dataset CSV path (overrides the generator)");
    cmd->add_option("--generator", ov.generator, "dataset generator: two-moons | gaussians | mnist-binary");
    cmd->add_option("--data-n", ov.data_n, "generated dataset size");
    cmd->add_option("--noise", ov.noise, "two-moons noise sigma");
    cmd->add_option("--data-seed", ov.data_seed, "dataset generator seed");
    cmd->add_option("--ref", ov.ref_path, "reference bank CSV path");
    cmd->add_option("--model", ov.model_path, "model checkpoint used as the base mean provider");
    cmd->add_option("--guidance-kind", ov.guidance_kind, "constant | quadratic-decay | bell");
    cmd->add_option("--beta0", ov.beta0, "guidance strength");
    cmd->add_option("--cutoff", ov.cutoff, "late-time guidance cutoff");
    cmd->add_option("--temperature", ov.temperature, "reference softmax temperature");
    cmd->add_flag("--temp-sqrt-d", ov.temp_sqrt_d, "use temperature sqrt(d) of the dataset dimension");
    cmd->add_option("--condition-mode", ov.condition_mode, "none | hard | soft | soft-composition");
    cmd->add_option("--target-class", ov.target_class, "conditioning target class");
    cmd->add_option("--cond-m", ov.cond_m, "labeled reference count for soft conditioning");
    cmd->add_option("--cond-seed", ov.cond_seed, "labeled reference draw seed");
    cmd->add_option("--bandwidth", ov.bandwidth, "soft-classifier kernel bandwidth (0 = median heuristic)");
    cmd->add_option("--cond-fraction", ov.cond_fraction, "target-class share for soft-composition");
    cmd->add_option("--nfe", ov.nfe, "Euler steps");
    cmd->add_option("--eps", ov.eps, "terminal cutoff");
    cmd->add_option("--seed", ov.seed, "sampler seed");
    cmd->add_option("--n", ov.n_samples, "number of samples");
    cmd->add_flag("--record-trajectory", ov.record_trajectory, "record and emit full trajectories");
}

ExperimentConfig resolve_config(const CliOverrides& ov) {
    ExperimentConfig cfg;
    if (!ov.config_path.empty()) cfg = read_json_file(ov.config_path).get<ExperimentConfig>();

    if (ov.output_dir) cfg.output_dir = *ov.output_dir;
    if (ov.data_path) cfg.dataset.path = *ov.data_path;
    if (ov.generator) cfg.dataset.generator = *ov.generator;
    if (ov.data_n) cfg.dataset.n = *ov.data_n;
    if (ov.noise) cfg.dataset.noise = *ov.noise;
    if (ov.data_seed) cfg.dataset.seed = *ov.data_seed;
    if (ov.ref_path) {
        DatasetSpec ref;
        ref.path = *ov.ref_path;
        cfg.reference = ref;
    }
    if (ov.model_path) cfg.model_path = *ov.model_path;

    if (ov.guidance_kind || ov.beta0 || ov.cutoff || ov.temperature || ov.temp_sqrt_d) {
        GuidanceSpec g = cfg.guidance.value_or(GuidanceSpec{});
        if (ov.guidance_kind) g.kind = guidance_kind_from_string(*ov.guidance_kind);
        if (ov.beta0) g.gamma0 = *ov.beta0;
        if (ov.cutoff) g.cutoff = *ov.cutoff;
        if (ov.temperature) g.temperature = *ov.temperature;
        g.validate();
        cfg.guidance = g;
    }
    if (ov.condition_mode) cfg.condition.mode = *ov.condition_mode;
    if (ov.target_class) cfg.condition.target_class = *ov.target_class;
    if (ov.cond_m) cfg.condition.m = *ov.cond_m;
    if (ov.cond_seed) cfg.condition.ref_seed = *ov.cond_seed;
    if (ov.bandwidth) cfg.condition.bandwidth = *ov.bandwidth;
    if (ov.cond_fraction) cfg.condition.fraction = *ov.cond_fraction;
    if (ov.nfe) cfg.sampler.config.nfe = *ov.nfe;
    if (ov.eps) cfg.sampler.config.eps = *ov.eps;
    if (ov.seed) cfg.sampler.config.seed = *ov.seed;
    if (ov.n_samples) cfg.sampler.n_samples = *ov.n_samples;
    if (ov.record_trajectory) cfg.sampler.config.record_trajectory = true;

    if (ov.temp_sqrt_d) {
        GuidanceSpec g = cfg.guidance.value_or(GuidanceSpec{});
        g.temperature = sqrt_d_temperature(cfg.dataset.load().dim());
        cfg.guidance = g;
    }
    cfg.sampler.config.validate();
    if (cfg.guidance) cfg.guidance->validate();
    return cfg;
}

std::vector<double> parse_list(const std::string& csv) {
    std::vector<double> out;
    std::istringstream iss(csv);
    std::string tok;
    while (std::getline(iss, tok, ',')) out.push_back(std::stod(tok));
    return out;
}

int run_verify(const std::string& filter) {
    const auto results = run_verification_checks();
    std::size_t failed = 0, ran = 0;
    for (const auto& r : results) {
        if (!filter.empty() && r.name.find(filter) == std::string::npos) continue;
        ++ran;
        failed += r.passed ? 0 : 1;
        std::printf("[%s] %-34s measured %.3e  threshold %.3e%s%s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                    r.measured, r.threshold, r.note.empty() ? "" : "  ", r.note.c_str());
    }
    std::printf("%zu/%zu oracle checks passed\n", ran - failed, ran);
    return failed == 0 ? kExitOk : kExitVerification;
}

int run_plot(const std::string& kind, const std::string& input, const std::string& output) {
    if (kind == "flowfield") {
        const CsvTable t = read_csv(input);
        if (t.columns.size() != 4 || t.columns[0] != "x0" || t.columns[2] != "u0")
            throw std::invalid_argument("plot flowfield: expected columns x0,x1,u0,u1 in " + input);
        FlowGrid grid;
        for (const auto& row : t.rows) {
            grid.points.push_back({row[0], row[1]});
            grid.velocities.push_back({row[2], row[3]});
        }
        // recover the per-axis resolution from the first repeated x0
        std::size_t nx = 0;
        for (const auto& row : t.rows) {
            if (nx > 0 && row[0] == t.rows[0][0]) break;
            ++nx;
        }
        grid.resolution = {nx, t.rows.size() / std::max<std::size_t>(nx, 1)};
        write_text_file(svg_flow_field(grid), output);
    } else if (kind == "trajectories") {
        const CsvTable t = read_csv(input);
        if (t.columns.size() < 4 || t.columns[0] != "traj")
            throw std::invalid_argument("plot trajectories: expected columns traj,t,x0,x1 in " + input);
        std::vector<Trajectory> trajs;
        for (const auto& row : t.rows) {
            const std::size_t id = static_cast<std::size_t>(row[0]);
            if (id >= trajs.size()) trajs.resize(id + 1);
            trajs[id].times.push_back(row[1]);
            trajs[id].states.push_back({row[2], row[3]});
        }
        write_text_file(svg_trajectories(trajs), output);
    } else if (kind == "curve") {
        const CsvTable t = read_csv(input);
        if (t.columns.size() < 2) throw std::invalid_argument("plot curve: need at least two columns in " + input);
        std::vector<double> xs, ys;
        for (const auto& row : t.rows) {
            xs.push_back(row[0]);
            ys.push_back(row[1]);
        }
        write_text_file(svg_curve(xs, ys, t.columns[0], t.columns[1]), output);
    } else if (kind == "imagegrid") {
        const CsvTable t = read_csv(input);
        const std::size_t d = t.columns.size();
        const std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(d))));
        if (side * side != d) throw std::invalid_argument("plot imagegrid: row length must be a perfect square");
        std::vector<Vec> images(t.rows.begin(), t.rows.end());
        write_text_file(svg_image_grid(images, side, side), output);
    } else {
        throw std::invalid_argument("plot: unknown kind '" + kind + "'");
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"non-parametric flow matching with reference-mean guidance"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate or ingest a dataset and write it as CSV");
    std::string gen_kind = "two-moons", gen_out = "data.csv", gen_centers, gen_images, gen_labels, gen_digits = "0,1";
    std::size_t gen_n = 500, gen_max_per_class = 500;
    double gen_noise = 0.1, gen_sigma = 0.5;
    std::uint64_t gen_seed = 1;
    gen->add_option("--kind", gen_kind, "two-moons | gaussians | mnist-binary");
    gen->add_option("--out", gen_out, "output CSV path");
    gen->add_option("--n", gen_n, "number of points");
    gen->add_option("--noise", gen_noise, "two-moons noise sigma");
    gen->add_option("--sigma", gen_sigma, "gaussians cluster sigma");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--centers", gen_centers, "gaussians centers, e.g. \"-2,0;2,0\"");
    gen->add_option("--images", gen_images, "MNIST IDX image file");
    gen->add_option("--labels", gen_labels, "MNIST IDX label file");
    gen->add_option("--digits", gen_digits, "digits to keep, e.g. 0,1");
    gen->add_option("--max-per-class", gen_max_per_class, "cap per digit class");

    CliOverrides ov_sample, ov_flow, ov_sweep, ov_sched, ov_size, ov_nfe, ov_train_fm, ov_train_spg;

    auto* sample = app.add_subcommand("sample", "integrate samples from noise and write endpoint CSV");
    add_common_flags(sample, ov_sample);

    auto* flow = app.add_subcommand("flowfield", "evaluate the velocity field on a grid; CSV + SVG");
    add_common_flags(flow, ov_flow);
    double flow_t = 0.5;
    std::string flow_bounds = "-2,3,-1.5,2";
    std::size_t flow_res = 25;
    flow->add_option("--t", flow_t, "evaluation time");
    flow->add_option("--bounds", flow_bounds, "x_lo,x_hi,y_lo,y_hi");
    flow->add_option("--resolution", flow_res, "grid points per axis");

    auto* sweep = app.add_subcommand("composition-sweep", "reference-composition sweep; curve CSV + SVG");
    add_common_flags(sweep, ov_sweep);
    std::string sweep_fracs = "0,0.25,0.5,0.75,1";
    std::string sweep_bank_a, sweep_bank_b;
    std::size_t sweep_m = 0;
    int sweep_target = 1;
    sweep->add_option("--fractions", sweep_fracs, "bank-A fractions");
    sweep->add_option("--bank-a", sweep_bank_a, "bank A CSV (default: target class of the dataset)");
    sweep->add_option("--bank-b", sweep_bank_b, "bank B CSV (default: the other class)");
    sweep->add_option("--m", sweep_m, "reference set size (0 = min bank size)");
    sweep->add_option("--sweep-target-class", sweep_target, "class measured as the target fraction");

    auto* sched_ab = app.add_subcommand("schedule-ablation", "guidance schedule form/strength sweep");
    add_common_flags(sched_ab, ov_sched);
    std::string sched_kinds = "constant,quadratic-decay,bell", sched_beta0s = "0.25,0.5,1,2";
    int sched_target = 1;
    sched_ab->add_option("--kinds", sched_kinds, "schedule kinds to sweep");
    sched_ab->add_option("--beta0s", sched_beta0s, "strengths to sweep");
    sched_ab->add_option("--sweep-target-class", sched_target, "steering target class");

    auto* size_ab = app.add_subcommand("size-ablation", "diversity vs reference-set size");
    add_common_flags(size_ab, ov_size);
    std::string size_sizes = "1,2,4,8,16,32,64,128";
    std::size_t size_repl = 5;
    size_ab->add_option("--sizes", size_sizes, "reference-set sizes");
    size_ab->add_option("--replicates", size_repl, "random subsets per size");

    auto* nfe_ab = app.add_subcommand("nfe-ablation", "endpoints and runtime vs Euler budget");
    add_common_flags(nfe_ab, ov_nfe);
    std::string nfe_list = "10,20,30,50,100,200";
    nfe_ab->add_option("--nfes", nfe_list, "budgets to sweep");

    auto* train_fm_cmd = app.add_subcommand("train-fm", "train the MLP velocity model; writes a checkpoint");
    add_common_flags(train_fm_cmd, ov_train_fm);
    auto* train_spg_cmd = app.add_subcommand("train-spg", "train the semi-parametric predictor; writes a checkpoint");
    add_common_flags(train_spg_cmd, ov_train_spg);
    std::size_t tr_steps = 0;
    double tr_lr = 0.0;
    std::uint64_t tr_seed = std::uint64_t(-1);
    std::size_t tr_ref_size = 0, tr_dk = 0;
    for (auto* cmd : {train_fm_cmd, train_spg_cmd}) {
        cmd->add_option("--steps", tr_steps, "training steps");
        cmd->add_option("--lr", tr_lr, "learning rate");
        cmd->add_option("--train-seed", tr_seed, "training seed");
        cmd->add_option("--ref-size", tr_ref_size, "SPG reference set size M");
        cmd->add_option("--d-k", tr_dk, "SPG attention dimension");
    }

    auto* verify = app.add_subcommand("verify", "run every derived-oracle check; nonzero exit on failure");
    std::string verify_filter;
    verify->add_option("--filter", verify_filter, "only run checks whose name contains this substring");

    auto* plot = app.add_subcommand("plot", "render a result CSV as a standalone SVG");
    std::string plot_kind, plot_in, plot_out;
    plot->add_option("--kind", plot_kind, "flowfield | trajectories | curve | imagegrid")->required();
    plot->add_option("--in", plot_in, "input CSV")->required();
    plot->add_option("--out", plot_out, "output SVG")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (gen->parsed()) {
            DatasetSpec spec;
            spec.generator = gen_kind;
            spec.n = gen_n;
            spec.noise = gen_noise;
            spec.sigma = gen_sigma;
            spec.seed = gen_seed;
            spec.mnist_images = gen_images;
            spec.mnist_labels = gen_labels;
            spec.max_per_class = gen_max_per_class;
            if (!gen_digits.empty()) {
                spec.digits.clear();
                for (double d : parse_list(gen_digits)) spec.digits.push_back(static_cast<int>(d));
            }
            if (!gen_centers.empty()) {
                spec.centers.clear();
                std::istringstream iss(gen_centers);
                std::string tok;
                while (std::getline(iss, tok, ';')) spec.centers.push_back(parse_list(tok));
            }
            run_gen_data(spec, gen_out);
            std::printf("wrote %s\n", gen_out.c_str());
        } else if (sample->parsed()) {
            const auto res = run_sample(resolve_config(ov_sample));
            std::printf("wrote %s (%zu samples)\n", res.files.front().c_str(), res.endpoints.size());
        } else if (flow->parsed()) {
            FlowfieldSpec ff;
            ff.t = flow_t;
            ff.bounds = parse_list(flow_bounds);
            if (ff.bounds.size() != 4) throw std::invalid_argument("flowfield: --bounds needs 4 numbers");
            ff.resolution = flow_res;
            const auto files = run_flowfield(resolve_config(ov_flow), ff);
            for (const auto& f : files) std::printf("wrote %s\n", f.c_str());
        } else if (sweep->parsed()) {
            SweepSpec ss;
            ss.fractions = parse_list(sweep_fracs);
            ss.m = sweep_m;
            ss.target_class = sweep_target;
            if (!sweep_bank_a.empty()) {
                DatasetSpec b;
                b.path = sweep_bank_a;
                ss.bank_a = b;
            }
            if (!sweep_bank_b.empty()) {
                DatasetSpec b;
                b.path = sweep_bank_b;
                ss.bank_b = b;
            }
            std::vector<std::string> files;
            const auto curve = run_composition_sweep(resolve_config(ov_sweep), ss, &files);
            for (const auto& row : curve.rows)
                std::printf("fraction %.2f -> generated %.4f (n=%zu)\n", row.reference_composition,
                            row.generated_fraction, row.sample_count);
            for (const auto& f : files) std::printf("wrote %s\n", f.c_str());
        } else if (sched_ab->parsed()) {
            AblationSpec ab;
            ab.kinds.clear();
            std::istringstream iss(sched_kinds);
            std::string tok;
            while (std::getline(iss, tok, ',')) ab.kinds.push_back(tok);
            ab.beta0s = parse_list(sched_beta0s);
            run_schedule_ablation(resolve_config(ov_sched), ab, sched_target);
            std::printf("schedule ablation done\n");
        } else if (size_ab->parsed()) {
            AblationSpec ab;
            ab.sizes.clear();
            for (double v : parse_list(size_sizes)) ab.sizes.push_back(static_cast<std::size_t>(v));
            ab.replicates = size_repl;
            run_size_ablation(resolve_config(ov_size), ab);
            std::printf("size ablation done\n");
        } else if (nfe_ab->parsed()) {
            AblationSpec ab;
            ab.nfes.clear();
            for (double v : parse_list(nfe_list)) ab.nfes.push_back(static_cast<int>(v));
            const CsvTable t = run_nfe_ablation(resolve_config(ov_nfe), ab);
            for (const auto& row : t.rows) std::printf("nfe %4.0f: %.4f s\n", row[0], row[1]);
        } else if (train_fm_cmd->parsed() || train_spg_cmd->parsed()) {
            ExperimentConfig cfg = resolve_config(train_fm_cmd->parsed() ? ov_train_fm : ov_train_spg);
            TrainSpec spec = cfg.train.value_or(TrainSpec{});
            spec.kind = train_fm_cmd->parsed() ? "fm" : "spg";
            if (tr_steps) spec.config.steps = tr_steps;
            if (tr_lr > 0.0) spec.config.learning_rate = tr_lr;
            if (tr_seed != std::uint64_t(-1)) spec.config.seed = tr_seed;
            if (tr_ref_size) spec.config.reference_size = tr_ref_size;
            if (tr_dk) spec.d_k = tr_dk;
            cfg.train = spec;
            const std::string ckpt = run_train(cfg);
            std::printf("wrote %s\n", ckpt.c_str());
        } else if (verify->parsed()) {
            return run_verify(verify_filter);
        } else if (plot->parsed()) {
            return run_plot(plot_kind, plot_in, plot_out);
        }
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitValidation;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitOk;
}
