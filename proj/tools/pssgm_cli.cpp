#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pssgm/data.hpp"
#include "pssgm/dynamics.hpp"
#include "pssgm/eval.hpp"
#include "pssgm/learning.hpp"
#include "pssgm/run_config.hpp"
#include "pssgm/schedule.hpp"
#include "pssgm/text_io.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace pssgm {
namespace {

/// Reproducibility record written next to every command's outputs.
struct Manifest {
    std::string command;
    std::vector<std::string> arguments;
    std::uint64_t seed = 1;
    /// Value of the global --seed flag, which takes precedence over seeds.seed.
    std::optional<std::uint64_t> seed_flag;
    ojson streams = ojson::object();
    ojson config = ojson::object();
    std::vector<std::string> outputs;
    std::vector<std::string> notes;

    void resolve_seed(RunConfig& cfg) {
        if (seed_flag) cfg.seed = *seed_flag;
        seed = cfg.seed;
    }

    void stream(const char* name, const NoiseSource& src) {
        streams[name] = {{"seed", src.seed()}, {"stream", hex64(src.stream())}};
    }

    void note(const std::string& text) {
        std::cerr << "note: " << text << "\n";
        notes.push_back(text);
    }

    void write(const fs::path& path) const {
        ojson j;
        j["command"] = command;
        j["arguments"] = arguments;
        j["seed"] = seed;
        j["stream_derivation"] = "NoiseSource(seed).child(tag); tags data=1 train=2 reverse=3 equilibrium=4 "
                                 "relax=5 cd1=6 eval=7";
        j["streams"] = streams;
        j["config"] = config;
        j["outputs"] = outputs;
        j["notes"] = notes;
        write_file(path, j.dump(2) + "\n");
    }
};

fs::path file_manifest_path(const fs::path& out) {
    fs::path p = out;
    p += ".manifest.json";
    return p;
}

void ensure_parent(const fs::path& path) {
    const fs::path parent = path.parent_path();
    if (parent.empty()) return;
    std::error_code ec;
    fs::create_directories(parent, ec);
    if (ec) throw Error(ErrorKind::io, "cannot create directory " + parent.string() + ": " + ec.message());
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::io, "cannot create directory " + dir.string() + ": " + ec.message());
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw Error(ErrorKind::invalid_argument, std::string(what) + ": '" + tok + "' is not an integer");
        }
    }
    if (out.empty()) throw Error(ErrorKind::invalid_argument, std::string(what) + " is empty");
    return out;
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(parse_double(tok));
        } catch (const Error&) {
            throw Error(ErrorKind::invalid_argument, std::string(what) + ": '" + tok + "' is not a number");
        }
    }
    if (out.empty()) throw Error(ErrorKind::invalid_argument, std::string(what) + " is empty");
    return out;
}

RunConfig load_config_or_default(const std::string& path) {
    return path.empty() ? RunConfig{} : load_run_config(path);
}

ojson config_json(const RunConfig& cfg) { return ojson::parse(resolved_config_json(cfg)); }

double resolve_dt(double requested, const Schedule& s) {
    return requested > 0.0 ? requested : default_integrator(s).dt;
}

// ---------------------------------------------------------------------------
// prepare

struct PrepareArgs {
    std::string config;
    std::string images, labels;
    std::string classes = "0,1";
    std::size_t side = 12;
    std::size_t max_images = 0;
    bool no_binarize = false;
    std::string mixture;
    bool default_mixture = false;
    std::size_t m = 1000;
    std::string out;
};

void run_prepare(const PrepareArgs& a, Manifest& man) {
    RunConfig cfg = load_config_or_default(a.config);
    man.resolve_seed(cfg);
    const fs::path out = a.out;
    const bool mnist = !a.images.empty() || !a.labels.empty();
    const bool mixture = !a.mixture.empty() || a.default_mixture;
    if (mnist && mixture) throw Error(ErrorKind::invalid_argument, "choose either MNIST inputs or a mixture");

    Dataset data;
    if (mnist || (!mixture && cfg.mnist)) {
        MnistConfig m = cfg.mnist.value_or(MnistConfig{});
        if (!a.images.empty()) m.images = a.images;
        if (!a.labels.empty()) m.labels = a.labels;
        if (mnist) {
            m.options.classes = parse_int_list(a.classes, "--classes");
            m.options.side = a.side;
            m.options.max_images = a.max_images;
            m.options.binarize = !a.no_binarize;
        }
        if (m.images.empty() || m.labels.empty()) {
            throw Error(ErrorKind::invalid_argument, "MNIST preparation needs both an images and a labels file");
        }
        const IdxFile images = load_idx(m.images, idx_images_magic);
        const IdxFile labels = load_idx(m.labels, idx_labels_magic);
        data = mnist_prepare(images, labels, m.options);
        cfg.mnist = m;
    } else if (mixture || cfg.mixture) {
        const MixtureSpec spec = a.default_mixture ? default_mixture()
                                 : !a.mixture.empty() ? load_mixture_spec(a.mixture)
                                                      : *cfg.mixture;
        if (a.m == 0) throw Error(ErrorKind::invalid_argument, "--m must be >= 1");
        const NoiseSource src = NoiseSource(man.seed).child(StreamTag::data);
        man.stream("data", src);
        std::vector<std::size_t> components;
        data.samples = mixture_sample(spec, a.m, src, &components);
        data.labels.assign(components.begin(), components.end());
        data.source = "mixture";
        data.preprocessing = "m=" + std::to_string(a.m) + " components=" + std::to_string(spec.size());
        cfg.mixture = spec;
    } else {
        throw Error(ErrorKind::invalid_argument, "nothing to prepare: give MNIST files or a mixture");
    }
    man.config = config_json(cfg);

    ensure_parent(out);
    write_dataset(out, data);
    man.outputs = {out.string(), sidecar_path(out).string()};
    man.write(file_manifest_path(out));
    std::cerr << "prepared " << data.samples.rows() << " x " << data.samples.dim() << " dataset -> " << out.string()
              << "\n";
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string data;
    std::string config;
    std::string rule;
    std::optional<double> delta;
    std::optional<std::size_t> n_noise;
    bool antithetic = false;
    std::optional<std::size_t> steps;
    std::string out;
    std::string log;
    bool wall_time = false;
};

void run_train(const TrainArgs& a, Manifest& man) {
    RunConfig cfg = load_config_or_default(a.config);
    if (!a.rule.empty()) cfg.rule = parse_rule(a.rule);
    if (a.delta) cfg.cd1.delta = *a.delta;
    if (a.n_noise) cfg.cd1.n_noise = *a.n_noise;
    if (a.antithetic) cfg.cd1.antithetic = true;
    if (a.steps) cfg.train.steps_per_time = *a.steps;
    man.resolve_seed(cfg);
    cfg.train.validate();
    cfg.cd1.validate();
    man.config = config_json(cfg);

    const Dataset data = read_dataset(a.data);
    const Topology topo = make_topology(cfg.topology, data.samples.dim());
    const NoiseSource src = NoiseSource(man.seed).child(StreamTag::train);
    man.stream("train", src);
    if (cfg.rule == LearningRule::cd1 && cfg.cd1.delta_is_large()) {
        man.note("cd1 delta " + format_double(cfg.cd1.delta) + " is large; the score-matching limit needs delta << 1");
    }

    const fs::path out = a.out;
    const fs::path log_path = a.log.empty() ? fs::path(a.out + ".log.csv") : fs::path(a.log);
    ensure_parent(out);
    ensure_parent(log_path);
    std::ofstream log(log_path, std::ios::binary);
    if (!log) throw Error(ErrorKind::io, "cannot open " + log_path.string() + " for writing");
    log << "# rule=" << to_string(cfg.rule);
    if (cfg.rule == LearningRule::cd1) {
        log << " delta=" << format_double(cfg.cd1.delta) << " n_noise=" << cfg.cd1.n_noise
            << " antithetic=" << (cfg.cd1.antithetic ? "true" : "false");
    }
    log << " seed=" << man.seed << " kbt=" << format_double(cfg.train.kbt) << " n_times=" << cfg.train.n_times
        << " steps_per_time=" << cfg.train.steps_per_time << "\n";
    log << "snapshot,step,loss,grad_norm" << (a.wall_time ? ",wall_time_s" : "") << "\n";

    const std::size_t n_times = cfg.train.n_times;
    const std::size_t steps = cfg.train.steps_per_time;
    auto sink = [&](const TrainLogRow& row) {
        log << row.snapshot << "," << row.step << "," << format_double(row.loss) << ","
            << format_double(row.grad_norm);
        if (a.wall_time) log << "," << format_double(row.wall_seconds);
        log << "\n";
        log.flush();
        if (row.step == steps) {
            std::cerr << "snapshot " << row.snapshot + 1 << "/" << n_times << " loss " << format_double(row.loss)
                      << "\n";
        }
    };

    try {
        const TrainResult result = train_schedule(data.samples, topo, cfg.train, cfg.rule, cfg.cd1, src, sink);
        save_schedule(result.schedule, out);
        std::cerr << "schedule checksum " << hex64(schedule_checksum(result.schedule)) << " -> " << out.string()
                  << "\n";
    } catch (const TrainingError& e) {
        log << "# diverged snapshot=" << e.snapshot() << " step=" << e.step()
            << " last_finite_snapshot=" << (e.snapshot() == 0 ? std::string("none") : std::to_string(e.snapshot() - 1))
            << "\n";
        man.outputs = {log_path.string()};
        man.notes.push_back(e.what());
        man.write(file_manifest_path(out));
        throw;
    }
    man.outputs = {out.string(), log_path.string()};
    man.write(file_manifest_path(out));
}

// ---------------------------------------------------------------------------
// sample

struct SampleArgs {
    std::string schedule;
    std::string config;
    std::size_t chains = 1000;
    double dt = 0.0;
    std::string out;
    bool equilibrium = false;
    double total_time = 0.0;
    double stride_time = 0.0;
    std::string init;
    std::optional<double> relax_time;
    std::optional<std::size_t> workers;
};

void run_sample(const SampleArgs& a, Manifest& man) {
    RunConfig cfg = load_config_or_default(a.config);
    if (a.dt > 0.0) cfg.integrate.dt = a.dt;
    if (!a.init.empty()) {
        if (a.init == "exact") {
            cfg.integrate.init = ReverseInit::exact_gaussian;
        } else if (a.init == "relax") {
            cfg.integrate.init = ReverseInit::relaxation;
        } else {
            throw Error(ErrorKind::invalid_argument, "--init must be 'exact' or 'relax'");
        }
    }
    if (a.relax_time) cfg.integrate.relax_time = *a.relax_time;
    if (a.workers) cfg.integrate.workers = *a.workers;
    if (a.chains == 0) throw Error(ErrorKind::invalid_argument, "--chains must be >= 1");

    const Schedule s = load_schedule(a.schedule);
    IntegratorConfig ic;
    ic.dt = resolve_dt(cfg.integrate.dt, s);
    ic.kbt = s.kbt();
    cfg.integrate.dt = ic.dt;
    cfg.train.kbt = s.kbt();
    cfg.train.tau = s.tau();
    cfg.train.n_times = s.grid().size();
    man.resolve_seed(cfg);
    man.config = config_json(cfg);

    ojson meta;
    meta["mode"] = a.equilibrium ? "equilibrium" : "sgm";
    meta["seed"] = man.seed;
    meta["dt"] = ic.dt;
    meta["tau"] = s.tau();
    meta["kbt"] = s.kbt();
    meta["schedule"] = a.schedule;
    meta["schedule_checksum"] = hex64(schedule_checksum(s));

    SampleMatrix samples;
    const NoiseSource root(man.seed);
    if (a.equilibrium) {
        const double total = a.total_time > 0.0 ? a.total_time : s.tau() * static_cast<double>(a.chains);
        const double stride_time = a.stride_time > 0.0 ? a.stride_time : total / static_cast<double>(a.chains);
        const std::size_t stride = std::max<std::size_t>(1, step_count(stride_time, ic.dt));
        const NoiseSource src = root.child(StreamTag::equilibrium);
        man.stream("equilibrium", src);
        const std::vector<double> x0(s.topology().size(), 0.0);
        samples = equilibrium_sample(s.snapshots().front(), s.topology(), ic, total, src, x0, stride);
        meta["total_time"] = total;
        meta["stride_steps"] = stride;
        meta["stride_time"] = static_cast<double>(stride) * ic.dt;
        meta["x0"] = x0;
        meta["rows"] = samples.rows();
    } else {
        ic.validate_for(s);
        ReverseOptions opts;
        opts.init = cfg.integrate.init;
        opts.relax_time = cfg.integrate.relax_time;
        opts.workers = cfg.integrate.workers;
        const NoiseSource src = root.child(StreamTag::reverse);
        man.stream("reverse", src);
        samples = reverse_sample(s, ic, src, a.chains, opts);
        meta["chains"] = a.chains;
        meta["init"] = opts.init == ReverseInit::exact_gaussian ? "exact" : "relax";
        if (opts.init == ReverseInit::relaxation) meta["relax_time"] = opts.relax_time;
        meta["rows"] = samples.rows();
    }

    const fs::path out = a.out;
    ensure_parent(out);
    write_samples_csv(out, samples);
    write_file(sidecar_path(out), meta.dump(2) + "\n");
    man.outputs = {out.string(), sidecar_path(out).string()};
    man.write(file_manifest_path(out));
    std::cerr << "wrote " << samples.rows() << " samples -> " << out.string() << "\n";
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string samples;
    std::string mixture;
    bool default_mixture = false;
    std::string train_data;
    std::string schedule;
    std::string config;
    std::string sampler = "SGM";
    std::size_t image_rows = 0;
    std::size_t image_cols = 0;
    std::string out;
};

std::optional<GridShape> image_shape(const EvalArgs& a, const std::optional<Schedule>& s, std::size_t dim) {
    if (a.image_rows > 0 || a.image_cols > 0) {
        if (a.image_rows * a.image_cols != dim) {
            throw Error(ErrorKind::dimension_mismatch, "--image-rows x --image-cols differs from the sample dimension");
        }
        return GridShape{a.image_rows, a.image_cols};
    }
    if (s && s->topology().grid_shape()) return s->topology().grid_shape();
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dim))));
    if (dim >= 9 && side * side == dim) return GridShape{side, side};
    return std::nullopt;
}

void run_eval(const EvalArgs& a, Manifest& man) {
    const bool have_mixture = !a.mixture.empty() || a.default_mixture;
    if (!have_mixture && a.train_data.empty()) {
        throw Error(ErrorKind::invalid_argument,
                    "eval needs a reference: --mixture FILE, --default-mixture or --train-data PATH");
    }
    if (have_mixture && !a.train_data.empty()) {
        throw Error(ErrorKind::invalid_argument, "give either a mixture or training data as the reference");
    }
    RunConfig cfg = load_config_or_default(a.config);
    man.resolve_seed(cfg);
    const fs::path dir = a.out;
    ensure_dir(dir);

    const SampleMatrix samples = read_samples_csv(a.samples);
    if (samples.empty()) throw Error(ErrorKind::invalid_argument, a.samples + " holds no samples");
    std::optional<Schedule> schedule;
    if (!a.schedule.empty()) schedule = load_schedule(a.schedule);
    if (schedule && schedule->topology().size() != samples.dim()) {
        throw Error(ErrorKind::dimension_mismatch, "schedule and samples have different dimensions");
    }

    auto emit = [&](const std::string& name, const std::string& contents) {
        write_file(dir / name, contents);
        man.outputs.push_back((dir / name).string());
    };

    std::optional<MixtureSpec> spec;
    if (have_mixture) {
        spec = a.default_mixture ? default_mixture() : load_mixture_spec(a.mixture);
        cfg.mixture = spec;
        if (spec->dim() != samples.dim()) {
            throw Error(ErrorKind::dimension_mismatch, "mixture and samples have different dimensions");
        }
        const ModeReport report = mode_weights(samples, *spec, a.sampler);
        emit("mode_report.csv", mode_report_csv(report));
        for (std::size_t k = 0; k < report.fractions.size(); ++k) {
            std::cerr << a.sampler << " mode " << k << ": " << format_double(report.fractions[k]) << " (target "
                      << format_double(report.target[k]) << ")\n";
        }
    }
    if (samples.dim() <= 2) {
        for (std::size_t axis = 0; axis < samples.dim(); ++axis) {
            const Histogram h = marginal_histogram(samples, axis, cfg.eval.bins, spec ? &*spec : nullptr);
            emit("marginal_x" + std::to_string(axis + 1) + ".csv", histogram_csv(h));
        }
    }

    if (schedule && samples.dim() == 2) {
        const GridRange r{cfg.eval.grid_lo, cfg.eval.grid_hi};
        emit("energy_grid.csv", energy_grid_csv(energy_grid(*schedule, 0.0, r, r, cfg.eval.grid_resolution)));
    } else if (schedule) {
        man.note("energy grid skipped: unsupported dimension N = " + std::to_string(samples.dim()) +
                 " (quadrature only for N = 2)");
    } else if (samples.dim() == 2) {
        man.note("energy grid skipped: no --schedule given");
    } else {
        man.note("energy grid skipped: unsupported dimension N = " + std::to_string(samples.dim()));
    }

    DisplacementMap map;
    if (!a.train_data.empty()) {
        const Dataset train = read_dataset(a.train_data);
        map = train.map;
        if (train.samples.dim() != samples.dim()) {
            throw Error(ErrorKind::dimension_mismatch, "training data and samples have different dimensions");
        }
        const FidelityReport f = fidelity_score(samples, make_fidelity_reference(train));
        ojson j;
        j["score"] = f.score;
        j["mean_min_distance"] = f.mean_min_distance;
        j["class_fractions"] = f.class_fractions;
        j["n_samples"] = f.n_samples;
        emit("fidelity.json", j.dump(2) + "\n");
        std::cerr << "fidelity score " << format_double(f.score) << "\n";
    }
    if (const auto shape = image_shape(a, schedule, samples.dim())) {
        const GrayImage sheet = image_sheet(samples, shape->rows, shape->cols, map);
        emit("samples.pgm", to_pgm(sheet));
    } else if (samples.dim() > 2) {
        man.note("image sheet skipped: sample dimension " + std::to_string(samples.dim()) + " is not an image");
    }

    man.config = config_json(cfg);
    man.write(dir / "manifest.json");
}

// ---------------------------------------------------------------------------
// ablate

struct AblateArgs {
    std::string config;
    std::string data;
    std::string ranges = "6,5,4,3,2,1";
    std::size_t n_samples = 200;
    std::string out;
};

void run_ablate(const AblateArgs& a, Manifest& man) {
    RunConfig cfg = load_config_or_default(a.config);
    man.resolve_seed(cfg);
    const std::vector<double> ranges = parse_double_list(a.ranges, "--ranges");

    Dataset data;
    if (!a.data.empty()) {
        data = read_dataset(a.data);
    } else if (cfg.mnist) {
        data = mnist_prepare(load_idx(cfg.mnist->images, idx_images_magic),
                             load_idx(cfg.mnist->labels, idx_labels_magic), cfg.mnist->options);
    } else {
        throw Error(ErrorKind::invalid_argument, "ablate needs --data or an mnist section in the config");
    }

    AblationConfig ac;
    if (cfg.topology.kind == "grid") {
        ac.rows = cfg.topology.rows;
        ac.cols = cfg.topology.cols;
    } else {
        const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(data.samples.dim()))));
        ac.rows = ac.cols = side;
    }
    ac.metric = cfg.topology.metric;
    ac.train = cfg.train;
    ac.rule = cfg.rule;
    ac.cd1 = cfg.cd1;
    ac.dt = cfg.integrate.dt;
    ac.reverse.init = cfg.integrate.init;
    ac.reverse.relax_time = cfg.integrate.relax_time;
    ac.reverse.workers = cfg.integrate.workers;
    ac.n_samples = a.n_samples;
    ac.seed = man.seed;
    ac.out_dir = fs::path(a.out);
    ensure_dir(*ac.out_dir);
    cfg.topology.kind = "grid";
    cfg.topology.rows = ac.rows;
    cfg.topology.cols = ac.cols;
    man.config = config_json(cfg);
    man.config["ablation"] = {{"ranges", ranges}, {"n_samples", a.n_samples}};
    man.stream("train", NoiseSource(man.seed).child(StreamTag::train));
    man.stream("reverse", NoiseSource(man.seed).child(StreamTag::reverse));

    const std::vector<AblationRow> rows = ablation_run(ac, data, ranges);
    const fs::path dir = a.out;
    write_file(dir / "ablation.csv", ablation_csv(rows));
    man.outputs.push_back((dir / "ablation.csv").string());
    for (const AblationRow& r : rows) {
        const std::string tag = "range_" + format_double(r.range);
        for (const char* ext : {".pgm", ".pssgm", "_samples.csv"}) man.outputs.push_back((dir / (tag + ext)).string());
        std::cerr << "range " << format_double(r.range) << ": edges " << r.edges << ", score "
                  << format_double(r.fidelity.score) << "\n";
    }
    man.write(dir / "manifest.json");
}

int report(const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return exit_code(e.kind());
}

}  // namespace
}  // namespace pssgm

int main(int argc, char** argv) {
    using namespace pssgm;

    CLI::App app{"Oscillator-network score-based generative model: prepare, train, sample, eval, ablate", "pssgm"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "pssgm 1.0");
    std::optional<std::uint64_t> seed;
    app.add_option("--seed", seed, "Root seed; every random stream is derived from it (default: seeds.seed, else 1)");

    PrepareArgs pa;
    CLI::App* prepare = app.add_subcommand("prepare", "Build a dataset file from MNIST IDX files or a Gaussian mixture");
    prepare->add_option("--config", pa.config, "Run config (mnist or mixture section)");
    prepare->add_option("--mnist-images", pa.images, "IDX image file");
    prepare->add_option("--mnist-labels", pa.labels, "IDX label file");
    prepare->add_option("--classes", pa.classes, "Comma-separated digit classes")->capture_default_str();
    prepare->add_option("--side", pa.side, "Downsampled image side")->capture_default_str();
    prepare->add_option("--max-images", pa.max_images, "Keep at most this many images (0 = all)");
    prepare->add_flag("--no-binarize", pa.no_binarize, "Keep gray levels instead of binarizing");
    prepare->add_option("--mixture", pa.mixture, "Mixture JSON (bare mixture or run config)");
    prepare->add_flag("--default-mixture", pa.default_mixture, "Use the built-in two-component mixture");
    prepare->add_option("--m", pa.m, "Number of mixture samples")->capture_default_str();
    prepare->add_option("--out", pa.out, "Dataset file (CSV + .meta.json sidecar)")->required();

    TrainArgs ta;
    CLI::App* train = app.add_subcommand("train", "Learn a driving protocol (schedule) from a dataset");
    train->add_option("--data", ta.data, "Dataset file")->required();
    train->add_option("--config", ta.config, "Run config");
    train->add_option("--rule", ta.rule, "force-matching or cd1 (overrides the config)");
    train->add_option("--delta", ta.delta, "CD1 step delta");
    train->add_option("--n-noise", ta.n_noise, "CD1 noise draws per sample");
    train->add_flag("--antithetic", ta.antithetic, "CD1 antithetic noise pairs");
    train->add_option("--steps", ta.steps, "Optimizer steps per time snapshot");
    train->add_option("--out", ta.out, "Schedule file")->required();
    train->add_option("--log", ta.log, "Training log (default: <out>.log.csv)");
    train->add_flag("--wall-time", ta.wall_time, "Add a wall-clock column to the log (not reproducible)");

    SampleArgs sa;
    CLI::App* sample = app.add_subcommand("sample", "Generate samples with the reverse SDE or equilibrium dynamics");
    sample->add_option("--schedule", sa.schedule, "Schedule file")->required();
    sample->add_option("--config", sa.config, "Run config (integrate section)");
    sample->add_option("--chains", sa.chains, "Number of samples S")->capture_default_str();
    sample->add_option("--dt", sa.dt, "Integration step (default tau/800)");
    sample->add_option("--out", sa.out, "Sample CSV")->required();
    sample->add_flag("--equilibrium", sa.equilibrium, "Sample the static energy at theta(0) by Langevin dynamics");
    sample->add_option("--total-time", sa.total_time, "Equilibrium run length (default tau x chains)");
    sample->add_option("--stride-time", sa.stride_time, "Time between equilibrium samples (default total/chains)");
    sample->add_option("--init", sa.init, "Reverse-chain start: exact or relax");
    sample->add_option("--relax-time", sa.relax_time, "Relaxation time for --init relax");
    sample->add_option("--workers", sa.workers, "Worker threads for the reverse sampler");

    EvalArgs ea;
    CLI::App* eval = app.add_subcommand("eval", "Score samples against a mixture or a training set");
    eval->add_option("--samples", ea.samples, "Sample CSV")->required();
    eval->add_option("--mixture", ea.mixture, "Reference mixture JSON");
    eval->add_flag("--default-mixture", ea.default_mixture, "Use the built-in mixture as reference");
    eval->add_option("--train-data", ea.train_data, "Reference dataset (image fidelity)");
    eval->add_option("--schedule", ea.schedule, "Schedule for the learned energy landscape");
    eval->add_option("--config", ea.config, "Run config (eval section)");
    eval->add_option("--sampler", ea.sampler, "Label for the mode report (SGM or ES)")->capture_default_str();
    eval->add_option("--image-rows", ea.image_rows, "Image height for the sample sheet");
    eval->add_option("--image-cols", ea.image_cols, "Image width for the sample sheet");
    eval->add_option("--out", ea.out, "Output directory")->required();

    AblateArgs aa;
    CLI::App* ablate = app.add_subcommand("ablate", "Coupling-range ablation on grid topologies");
    ablate->add_option("--config", aa.config, "Run config (topology, train, integrate, optional mnist)");
    ablate->add_option("--data", aa.data, "Labelled dataset file");
    ablate->add_option("--ranges", aa.ranges, "Comma-separated coupling ranges")->capture_default_str();
    ablate->add_option("--samples", aa.n_samples, "Generated samples per range")->capture_default_str();
    ablate->add_option("--out", aa.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    Manifest man;
    man.seed_flag = seed;
    man.arguments.assign(argv + 1, argv + argc);
    try {
        if (prepare->parsed()) {
            man.command = "prepare";
            run_prepare(pa, man);
        } else if (train->parsed()) {
            man.command = "train";
            run_train(ta, man);
        } else if (sample->parsed()) {
            man.command = "sample";
            run_sample(sa, man);
        } else if (eval->parsed()) {
            man.command = "eval";
            run_eval(ea, man);
        } else if (ablate->parsed()) {
            man.command = "ablate";
            run_ablate(aa, man);
        }
    } catch (const BlowupError& e) {
        std::cerr << "integration blew up in chain " << e.chain() << " at step " << e.step() << "\n";
        return report(e);
    } catch (const TrainingError& e) {
        std::cerr << "training diverged at snapshot " << e.snapshot() << ", step " << e.step() << "\n";
        return report(e);
    } catch (const Error& e) {
        return report(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
