#include "pssgm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "pssgm/text_io.hpp"

namespace pssgm {

// ---------------------------------------------------------------------------
// Modes

ModeReport mode_weights(const SampleMatrix& samples, const MixtureSpec& spec, std::string sampler) {
    if (spec.size() < 2) throw Error(ErrorKind::invalid_argument, "mode_weights needs >= 2 components");
    if (samples.dim() != spec.dim()) {
        throw Error(ErrorKind::dimension_mismatch, "samples have dim " + std::to_string(samples.dim()) +
                                                       ", mixture has " + std::to_string(spec.dim()));
    }
    const std::size_t K = spec.size();
    ModeReport r;
    r.sampler = std::move(sampler);
    r.counts.assign(K, 0);
    for (std::size_t i = 0; i < samples.rows(); ++i) {
        std::size_t best = 0;
        double best_lp = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) {
            if (spec[k].weight <= 0.0) continue;
            const double lp = spec.component_log_density(k, samples.row(i));
            if (lp > best_lp) {
                best_lp = lp;
                best = k;
            }
        }
        ++r.counts[best];
    }
    const double total = static_cast<double>(samples.rows());
    for (std::size_t k = 0; k < K; ++k) {
        r.fractions.push_back(total > 0 ? static_cast<double>(r.counts[k]) / total : 0.0);
        r.target.push_back(spec[k].weight);
        r.abs_error.push_back(std::abs(r.fractions[k] - r.target[k]));
    }
    return r;
}

std::string mode_report_csv(const ModeReport& report) {
    std::string out = "sampler,mode,count,fraction,target,abs_error\n";
    for (std::size_t k = 0; k < report.fractions.size(); ++k) {
        out += report.sampler + "," + std::to_string(k) + "," + std::to_string(report.counts[k]) + "," +
               format_double(report.fractions[k]) + "," + format_double(report.target[k]) + "," +
               format_double(report.abs_error[k]) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Energy grid

namespace {

double axis_point(GridRange r, std::size_t n, std::size_t i) {
    if (i + 1 == n) return r.hi;
    return r.lo + (r.hi - r.lo) * static_cast<double>(i) / static_cast<double>(n - 1);
}

double trapezoid_weight(std::size_t i, std::size_t n) { return (i == 0 || i + 1 == n) ? 0.5 : 1.0; }

template <class EnergyFn>
EnergyGrid build_grid(EnergyFn&& energy, double kbt, GridRange xr, GridRange yr, std::size_t resolution) {
    if (resolution < 2) throw Error(ErrorKind::invalid_argument, "grid resolution must be >= 2");
    if (!(xr.hi > xr.lo) || !(yr.hi > yr.lo)) throw Error(ErrorKind::invalid_argument, "empty grid range");
    if (!(kbt > 0.0)) throw Error(ErrorKind::invalid_argument, "kbt must be > 0");
    EnergyGrid g;
    g.x_range = xr;
    g.y_range = yr;
    g.nx = g.ny = resolution;
    g.kbt = kbt;
    g.energy.resize(g.nx * g.ny);
    for (std::size_t iy = 0; iy < g.ny; ++iy) {
        for (std::size_t ix = 0; ix < g.nx; ++ix) g.energy[iy * g.nx + ix] = energy(g.x(ix), g.y(iy));
    }
    // Z is accumulated relative to the minimum so small kbt cannot overflow.
    const double e_min = *std::min_element(g.energy.begin(), g.energy.end());
    const double dx = (xr.hi - xr.lo) / static_cast<double>(g.nx - 1);
    const double dy = (yr.hi - yr.lo) / static_cast<double>(g.ny - 1);
    double z_rel = 0.0;
    g.density.resize(g.energy.size());
    for (std::size_t iy = 0; iy < g.ny; ++iy) {
        for (std::size_t ix = 0; ix < g.nx; ++ix) {
            const double b = std::exp(-(g.energy[iy * g.nx + ix] - e_min) / kbt);
            g.density[iy * g.nx + ix] = b;
            z_rel += trapezoid_weight(ix, g.nx) * trapezoid_weight(iy, g.ny) * b * dx * dy;
        }
    }
    for (double& d : g.density) d /= z_rel;
    g.log_z = std::log(z_rel) - e_min / kbt;
    return g;
}

}  // namespace

double EnergyGrid::x(std::size_t ix) const { return axis_point(x_range, nx, ix); }
double EnergyGrid::y(std::size_t iy) const { return axis_point(y_range, ny, iy); }

double EnergyGrid::total_mass() const {
    const double dx = (x_range.hi - x_range.lo) / static_cast<double>(nx - 1);
    const double dy = (y_range.hi - y_range.lo) / static_cast<double>(ny - 1);
    double m = 0.0;
    for (std::size_t iy = 0; iy < ny; ++iy) {
        for (std::size_t ix = 0; ix < nx; ++ix) {
            m += trapezoid_weight(ix, nx) * trapezoid_weight(iy, ny) * density[iy * nx + ix] * dx * dy;
        }
    }
    return m;
}

EnergyGrid energy_grid(const EnergyParams& params, const Topology& topo, double kbt, GridRange xr, GridRange yr,
                       std::size_t resolution) {
    if (topo.size() != 2) {
        throw Error(ErrorKind::unsupported_dimension, "energy grid export needs N = 2, got N = " +
                                                          std::to_string(topo.size()) + "; use a 2-d slice");
    }
    return build_grid(
        [&](double a, double b) {
            const std::array<double, 2> x{a, b};
            return energy_hat(params, topo, x);
        },
        kbt, xr, yr, resolution);
}

EnergyGrid energy_grid(const Schedule& s, double t, GridRange xr, GridRange yr, std::size_t resolution) {
    return energy_grid(s.params_at(t), s.topology(), s.kbt(), xr, yr, resolution);
}

EnergyGrid energy_grid_slice(const EnergyParams& params, const Topology& topo, double kbt,
                             std::array<std::size_t, 2> axes, std::span<const double> base, GridRange xr,
                             GridRange yr, std::size_t resolution) {
    if (base.size() != topo.size()) throw Error(ErrorKind::dimension_mismatch, "slice base point has wrong length");
    if (axes[0] >= topo.size() || axes[1] >= topo.size() || axes[0] == axes[1]) {
        throw Error(ErrorKind::out_of_range, "slice axes must be two distinct oscillator indices");
    }
    StateVector x(base.begin(), base.end());
    return build_grid(
        [&](double a, double b) {
            x[axes[0]] = a;
            x[axes[1]] = b;
            return energy_hat(params, topo, x);
        },
        kbt, xr, yr, resolution);
}

std::string energy_grid_csv(const EnergyGrid& g) {
    std::string out = "# kbt " + format_double(g.kbt) + " log_z " + format_double(g.log_z) + "\nx1,x2,energy,density\n";
    for (std::size_t iy = 0; iy < g.ny; ++iy) {
        for (std::size_t ix = 0; ix < g.nx; ++ix) {
            out += format_double(g.x(ix)) + "," + format_double(g.y(iy)) + "," +
                   format_double(g.energy[iy * g.nx + ix]) + "," + format_double(g.density[iy * g.nx + ix]) + "\n";
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Histograms

Histogram marginal_histogram(const SampleMatrix& samples, std::size_t axis, std::size_t bins,
                             const MixtureSpec* spec) {
    if (samples.rows() == 0) throw Error(ErrorKind::invalid_argument, "histogram of empty sample set");
    if (bins < 10) throw Error(ErrorKind::invalid_argument, "histogram needs bins >= 10");
    if (axis >= samples.dim()) throw Error(ErrorKind::out_of_range, "histogram axis out of range");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < samples.rows(); ++i) {
        lo = std::min(lo, samples(i, axis));
        hi = std::max(hi, samples(i, axis));
    }
    if (spec) {
        const auto a = static_cast<Eigen::Index>(axis);
        for (const auto& c : spec->components()) {
            const double sd = std::sqrt(c.cov(a, a));
            lo = std::min(lo, c.mean[a] - 4.0 * sd);
            hi = std::max(hi, c.mean[a] + 4.0 * sd);
        }
    }
    if (hi <= lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    Histogram h;
    h.lo = lo;
    h.width = (hi - lo) / static_cast<double>(bins);
    h.counts.assign(bins, 0);
    for (std::size_t i = 0; i < samples.rows(); ++i) {
        auto b = static_cast<std::size_t>((samples(i, axis) - lo) / h.width);
        ++h.counts[std::min(b, bins - 1)];
    }
    const double norm = 1.0 / (static_cast<double>(samples.rows()) * h.width);
    for (std::size_t b = 0; b < bins; ++b) {
        h.density.push_back(static_cast<double>(h.counts[b]) * norm);
        if (spec) h.marginal.push_back(mixture_marginal(*spec, axis, h.center(b)));
    }
    return h;
}

std::string histogram_csv(const Histogram& h) {
    std::string out = h.marginal.empty() ? "center,count,density\n" : "center,count,density,marginal\n";
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
        out += format_double(h.center(b)) + "," + std::to_string(h.counts[b]) + "," + format_double(h.density[b]);
        if (!h.marginal.empty()) out += "," + format_double(h.marginal[b]);
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Images

GrayImage image_sheet(const SampleMatrix& samples, std::size_t rows, std::size_t cols, const DisplacementMap& map,
                      std::size_t tiles_per_row) {
    if (samples.rows() == 0) throw Error(ErrorKind::invalid_argument, "image sheet of empty sample set");
    if (samples.dim() != rows * cols) {
        throw Error(ErrorKind::dimension_mismatch, "sample dim " + std::to_string(samples.dim()) + " != " +
                                                       std::to_string(rows) + " x " + std::to_string(cols));
    }
    const std::size_t k = samples.rows();
    const std::size_t per_row =
        tiles_per_row ? tiles_per_row : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(k))));
    const std::size_t tile_rows = (k + per_row - 1) / per_row;
    GrayImage img;
    img.width = per_row * cols + (per_row - 1);
    img.height = tile_rows * rows + (tile_rows - 1);
    img.pixels.assign(img.width * img.height, 128);
    for (std::size_t s = 0; s < k; ++s) {
        const std::size_t oy = (s / per_row) * (rows + 1), ox = (s % per_row) * (cols + 1);
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
                const double p = std::clamp(std::round(map.to_pixel(samples(s, i * cols + j))), 0.0, 255.0);
                img.pixels[(oy + i) * img.width + ox + j] = static_cast<std::uint8_t>(p);
            }
        }
    }
    return img;
}

std::string to_pgm(const GrayImage& image) {
    std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
    return out;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) { write_file(path, to_pgm(image)); }

// ---------------------------------------------------------------------------
// Fidelity

double per_pixel_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s / static_cast<double>(a.size()));
}

FidelityReference make_fidelity_reference(const Dataset& train, double percentile) {
    if (train.samples.rows() < 2) throw Error(ErrorKind::invalid_argument, "fidelity reference needs >= 2 images");
    if (train.labels.size() != train.samples.rows()) {
        throw Error(ErrorKind::invalid_argument, "fidelity reference needs one label per training image");
    }
    FidelityReference ref;
    ref.train = train.samples;
    ref.labels = train.labels;
    ref.classes = train.labels;
    std::sort(ref.classes.begin(), ref.classes.end());
    ref.classes.erase(std::unique(ref.classes.begin(), ref.classes.end()), ref.classes.end());
    const std::size_t N = train.samples.dim();
    ref.centroids = SampleMatrix(ref.classes.size(), N);
    std::vector<std::size_t> counts(ref.classes.size(), 0);
    for (std::size_t i = 0; i < train.samples.rows(); ++i) {
        const auto c = static_cast<std::size_t>(
            std::lower_bound(ref.classes.begin(), ref.classes.end(), train.labels[i]) - ref.classes.begin());
        ++counts[c];
        for (std::size_t j = 0; j < N; ++j) ref.centroids(c, j) += train.samples(i, j);
    }
    for (std::size_t c = 0; c < counts.size(); ++c) {
        for (std::size_t j = 0; j < N; ++j) ref.centroids(c, j) /= static_cast<double>(counts[c]);
    }
    std::vector<double> nn(train.samples.rows(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < train.samples.rows(); ++i) {
        for (std::size_t k = i + 1; k < train.samples.rows(); ++k) {
            const double d = per_pixel_distance(train.samples.row(i), train.samples.row(k));
            nn[i] = std::min(nn[i], d);
            nn[k] = std::min(nn[k], d);
        }
    }
    std::sort(nn.begin(), nn.end());
    const auto q = static_cast<std::size_t>(std::ceil(percentile * static_cast<double>(nn.size()))) - 1;
    ref.threshold = nn[std::min(q, nn.size() - 1)];
    if (train.binarized) ref.binarize_with = train.map;
    return ref;
}

FidelityReport fidelity_score(const SampleMatrix& raw, const FidelityReference& ref) {
    if (raw.rows() == 0) throw Error(ErrorKind::invalid_argument, "fidelity of empty sample set");
    if (raw.dim() != ref.train.dim()) throw Error(ErrorKind::dimension_mismatch, "sample dim differs from training data");
    const SampleMatrix samples =
        ref.binarize_with ? binarize(raw, ref.binarize_with->midpoint(), *ref.binarize_with) : raw;
    FidelityReport r;
    r.n_samples = samples.rows();
    r.class_fractions.assign(ref.classes.size(), 0.0);
    std::size_t accepted = 0;
    double dist_sum = 0.0;
    for (std::size_t s = 0; s < samples.rows(); ++s) {
        const auto x = samples.row(s);
        std::size_t best_c = 0;
        double best_cd = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < ref.classes.size(); ++c) {
            const double d = per_pixel_distance(x, ref.centroids.row(c));
            if (d < best_cd) {
                best_cd = d;
                best_c = c;
            }
        }
        std::size_t nn = 0;
        double nn_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < ref.train.rows(); ++i) {
            const double d = per_pixel_distance(x, ref.train.row(i));
            if (d < nn_d) {
                nn_d = d;
                nn = i;
            }
        }
        r.class_fractions[best_c] += 1.0;
        dist_sum += nn_d;
        if (ref.labels[nn] == ref.classes[best_c] && nn_d <= ref.threshold) ++accepted;
    }
    const double n = static_cast<double>(samples.rows());
    for (double& f : r.class_fractions) f /= n;
    r.score = static_cast<double>(accepted) / n;
    r.mean_min_distance = dist_sum / n;
    return r;
}

// ---------------------------------------------------------------------------
// Ablation

AblationRow evaluate_topology(const AblationConfig& cfg, const Dataset& data, const Topology& topo,
                              const FidelityReference& ref, double range_tag, SampleMatrix* samples_out) {
    const NoiseSource root(cfg.seed);
    TrainResult trained = train_schedule(data.samples, topo, cfg.train, cfg.rule, cfg.cd1, root.child(StreamTag::train));
    IntegratorConfig icfg = default_integrator(trained.schedule);
    if (cfg.dt > 0.0) icfg.dt = cfg.dt;
    SampleMatrix samples = reverse_sample(trained.schedule, icfg, root.child(StreamTag::reverse), cfg.n_samples,
                                         cfg.reverse);
    AblationRow row{range_tag, topo.edge_count(), fidelity_score(samples, ref), schedule_checksum(trained.schedule)};
    if (cfg.out_dir) {
        const std::string tag = "range_" + format_double(range_tag);
        write_pgm(*cfg.out_dir / (tag + ".pgm"), image_sheet(samples, cfg.rows, cfg.cols, data.map));
        save_schedule(trained.schedule, *cfg.out_dir / (tag + ".pssgm"));
        write_samples_csv(*cfg.out_dir / (tag + "_samples.csv"), samples);
    }
    if (samples_out) *samples_out = std::move(samples);
    return row;
}

std::vector<AblationRow> ablation_run(const AblationConfig& cfg, const Dataset& data, std::span<const double> ranges) {
    if (ranges.empty()) throw Error(ErrorKind::invalid_argument, "ablation needs at least one range");
    if (data.samples.dim() != cfg.rows * cfg.cols) {
        throw Error(ErrorKind::dimension_mismatch, "dataset dim does not match the ablation grid");
    }
    const FidelityReference ref = make_fidelity_reference(data);
    std::vector<AblationRow> rows;
    for (double r : ranges) {
        const Topology topo = Topology::grid(cfg.rows, cfg.cols, r, cfg.metric);
        try {
            rows.push_back(evaluate_topology(cfg, data, topo, ref, r));
        } catch (const Error& e) {
            throw Error(e.kind(), "coupling range " + format_double(r) + ": " + e.what());
        }
    }
    return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
    std::string out = "range,edges,score,mean_min_distance,class_fractions,schedule_checksum\n";
    for (const auto& r : rows) {
        std::string fr;
        for (std::size_t i = 0; i < r.fidelity.class_fractions.size(); ++i) {
            if (i) fr += ";";
            fr += format_double(r.fidelity.class_fractions[i]);
        }
        out += format_double(r.range) + "," + std::to_string(r.edges) + "," + format_double(r.fidelity.score) + "," +
               format_double(r.fidelity.mean_min_distance) + "," + fr + "," + hex64(r.schedule_checksum) + "\n";
    }
    return out;
}

}  // namespace pssgm
