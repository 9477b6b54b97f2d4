#include "pssgm/learning.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "pssgm/text_io.hpp"

namespace pssgm {

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

std::string_view to_string(LearningRule r) {
    return r == LearningRule::cd1 ? "cd1" : "force-matching";
}

LearningRule parse_rule(std::string_view name) {
    if (name == "force-matching" || name == "force_matching" || name == "fm") {
        return LearningRule::force_matching;
    }
    if (name == "cd1") return LearningRule::cd1;
    throw Error(ErrorKind::invalid_argument, "unknown learning rule '" + std::string(name) + "'");
}

OptimizerKind parse_optimizer(std::string_view name) {
    if (name == "adam") return OptimizerKind::adam;
    if (name == "sgd") return OptimizerKind::sgd;
    throw Error(ErrorKind::invalid_argument, "unknown optimizer '" + std::string(name) + "'");
}

void CD1Config::validate() const {
    if (!(delta > 0.0) || !std::isfinite(delta)) throw Error(ErrorKind::invalid_argument, "delta must be > 0");
    if (n_noise == 0) throw Error(ErrorKind::invalid_argument, "n_noise must be >= 1");
}

void TrainConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw Error(ErrorKind::invalid_argument, std::string(name) + " must be > 0");
        }
    };
    positive(kbt, "kbt");
    positive(tau, "tau");
    positive(learning_rate, "learning_rate");
    positive(gamma_min, "gamma_min");
    if (!(t_min >= 0.0) || !(t_min < tau)) throw Error(ErrorKind::invalid_argument, "t_min must lie in [0, tau)");
    if (n_times < 2) throw Error(ErrorKind::invalid_argument, "n_times must be >= 2");
    if (batch_size == 0) throw Error(ErrorKind::invalid_argument, "batch_size must be >= 1");
    if (log_every == 0) throw Error(ErrorKind::invalid_argument, "log_every must be >= 1");
    if (optimizer == OptimizerKind::adam) {
        if (!(adam.b1 >= 0.0 && adam.b1 < 1.0) || !(adam.b2 >= 0.0 && adam.b2 < 1.0)) {
            throw Error(ErrorKind::invalid_argument, "adam moments must lie in [0, 1)");
        }
        positive(adam.eps, "adam eps");
    }
}

TimeGrid TrainConfig::time_grid() const {
    return spacing == GridSpacing::uniform ? TimeGrid::uniform(tau, n_times)
                                           : TimeGrid::geometric(tau, n_times, spacing_ratio);
}

// ---------------------------------------------------------------------------
// Score matching

double sm_loss(const EnergyParams& params, const Topology& topo, const SampleMatrix& batch, double kbt) {
    if (batch.rows() == 0) throw Error(ErrorKind::invalid_argument, "sm_loss needs a nonempty batch");
    StateVector g(topo.size());
    double total = 0.0;
    for (std::size_t b = 0; b < batch.rows(); ++b) {
        const auto x = batch.row(b);
        energy_gradient(params, topo, x, g);
        const double g2 = std::inner_product(g.begin(), g.end(), g.begin(), 0.0);
        total += -hessian_trace_hat(params, topo, x) / kbt + 0.5 * g2 / (kbt * kbt);
    }
    return total / static_cast<double>(batch.rows());
}

void force_matching_grad(const EnergyParams& params, const Topology& topo, const SampleMatrix& batch,
                         double kbt, std::span<double> grad, double* loss) {
    if (batch.rows() == 0) throw Error(ErrorKind::invalid_argument, "force matching needs a nonempty batch");
    const std::size_t N = topo.size(), E = topo.edge_count();
    if (grad.size() != param_count(topo)) {
        throw Error(ErrorKind::dimension_mismatch, "gradient buffer does not match parameter count");
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    const double inv_t = 1.0 / kbt;
    const double inv_t2 = inv_t * inv_t;
    const auto edges = topo.edges();
    double* ga = grad.data();
    double* gb = ga + N;
    double* gg = gb + N;
    double* gf = gg + N;
    double* gk = ga + 4 * N;
    double* gl = gk + E;
    double* gc = gl + E;
    double* gh = gc + E;

    StateVector g(N);
    double total = 0.0;
    for (std::size_t b = 0; b < batch.rows(); ++b) {
        const auto x = batch.row(b);
        // grad E_hat is minus the force measured with the network clamped at x.
        energy_gradient(params, topo, x, g);
        if (loss) {
            const double g2 = std::inner_product(g.begin(), g.end(), g.begin(), 0.0);
            total += -hessian_trace_hat(params, topo, x) * inv_t + 0.5 * g2 * inv_t2;
        }
        for (std::size_t n = 0; n < N; ++n) {
            const double v = x[n], v2 = v * v, v4 = v2 * v2, w = g[n] * inv_t2;
            ga[n] += -inv_t + v * w;
            gb[n] += -3.0 * v2 * inv_t + v2 * v * w;
            gg[n] += -5.0 * v4 * inv_t + v4 * v * w;
            gf[n] += w;
        }
        for (std::size_t i = 0; i < E; ++i) {
            const std::size_t n = edges[i].n, m = edges[i].m;
            const double xn = x[n], xm = x[m], d = xn - xm;
            const double wn = g[n] * inv_t2, wm = g[m] * inv_t2;
            const double wd = wn - wm;
            gk[i] += -2.0 * inv_t + d * wd;
            gl[i] += -6.0 * d * d * inv_t + d * d * d * wd;
            gc[i] += -2.0 * xn * inv_t + xm * xm * wn + 2.0 * xn * xm * wm;
            gh[i] += -2.0 * xm * inv_t + 2.0 * xn * xm * wn + xn * xn * wm;
        }
    }
    const double scale = 1.0 / static_cast<double>(batch.rows());
    for (double& v : grad) v *= scale;
    if (loss) *loss = total * scale;
}

GradVector force_matching_grad(const EnergyParams& params, const Topology& topo,
                               const SampleMatrix& batch, double kbt) {
    GradVector grad(param_count(topo));
    force_matching_grad(params, topo, batch, kbt, grad, nullptr);
    return grad;
}

// ---------------------------------------------------------------------------
// One-step contrastive divergence

CD1Estimate cd1_grad(const EnergyParams& params, const Topology& topo, const SampleMatrix& batch,
                     double kbt, const CD1Config& cfg, const NoiseSource& noise) {
    cfg.validate();
    if (batch.rows() == 0) throw Error(ErrorKind::invalid_argument, "cd1 needs a nonempty batch");
    const std::size_t N = topo.size(), P = param_count(topo), R = cfg.n_noise;
    const double step_sd = std::sqrt(2.0 * cfg.delta * kbt);

    std::vector<double> sum(P, 0.0), var_of_mean(P, 0.0);
    std::vector<double> s1(P), s2(P), phi0(P), phi1(P), phi2(P);
    StateVector g(N), xa(N), xb(N), w(N);

    for (std::size_t b = 0; b < batch.rows(); ++b) {
        const auto x = batch.row(b);
        energy_gradient(params, topo, x, g);
        basis_values(topo, x, phi0);
        std::fill(s1.begin(), s1.end(), 0.0);
        std::fill(s2.begin(), s2.end(), 0.0);
        RandomStream rng = noise.child(b).open();
        for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t n = 0; n < N; ++n) {
                w[n] = rng.normal();
                xa[n] = x[n] - g[n] * cfg.delta + step_sd * w[n];
            }
            basis_values(topo, xa, phi1);
            if (cfg.antithetic) {
                for (std::size_t n = 0; n < N; ++n) xb[n] = x[n] - g[n] * cfg.delta - step_sd * w[n];
                basis_values(topo, xb, phi2);
                for (std::size_t i = 0; i < P; ++i) {
                    const double d = 0.5 * (phi1[i] + phi2[i]) - phi0[i];
                    s1[i] += d;
                    s2[i] += d * d;
                }
            } else {
                for (std::size_t i = 0; i < P; ++i) {
                    const double d = phi1[i] - phi0[i];
                    s1[i] += d;
                    s2[i] += d * d;
                }
            }
        }
        const double rr = static_cast<double>(R);
        for (std::size_t i = 0; i < P; ++i) {
            const double mean = s1[i] / rr;
            sum[i] += mean;
            if (R > 1) {
                const double var = std::max(0.0, (s2[i] - rr * mean * mean) / (rr - 1.0));
                var_of_mean[i] += var / rr;
            }
        }
    }

    const double B = static_cast<double>(batch.rows());
    const double conv = -1.0 / (cfg.delta * kbt * kbt);
    CD1Estimate est;
    est.grad.resize(P);
    est.sm_converted.resize(P);
    est.sm_std_error.resize(P);
    for (std::size_t i = 0; i < P; ++i) {
        est.grad[i] = sum[i] / B;
        est.sm_converted[i] = conv * est.grad[i];
        est.sm_std_error[i] = std::abs(conv) * std::sqrt(var_of_mean[i]) / B;
    }
    const auto theta = params.flat();
    est.loss = std::inner_product(theta.begin(), theta.end(), est.grad.begin(), 0.0);
    return est;
}

// ---------------------------------------------------------------------------
// Sequential training

namespace {

class Optimizer {
public:
    Optimizer(const TrainConfig& cfg, std::size_t n) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

    void reset() {
        std::fill(m_.begin(), m_.end(), 0.0);
        std::fill(v_.begin(), v_.end(), 0.0);
        t_ = 0;
    }

    void step(std::span<double> theta, std::span<const double> grad) {
        ++t_;
        const double lr = cfg_.learning_rate;
        if (cfg_.optimizer == OptimizerKind::sgd) {
            for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * grad[i];
            return;
        }
        const auto& a = cfg_.adam;
        const double c1 = 1.0 - std::pow(a.b1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(a.b2, static_cast<double>(t_));
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m_[i] = a.b1 * m_[i] + (1.0 - a.b1) * grad[i];
            v_[i] = a.b2 * v_[i] + (1.0 - a.b2) * grad[i] * grad[i];
            theta[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + a.eps);
        }
    }

private:
    const TrainConfig& cfg_;
    std::vector<double> m_, v_;
    std::size_t t_ = 0;
};

bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

}  // namespace

TrainResult train_schedule(const SampleMatrix& dataset, const Topology& topo, const TrainConfig& cfg,
                           LearningRule rule, const CD1Config& cd1cfg, const NoiseSource& noise,
                           const TrainLogSink& sink) {
    cfg.validate();
    if (rule == LearningRule::cd1) cd1cfg.validate();
    if (dataset.rows() == 0) throw Error(ErrorKind::invalid_argument, "dataset is empty");
    if (dataset.dim() != topo.size()) {
        throw Error(ErrorKind::dimension_mismatch, "dataset dimension " + std::to_string(dataset.dim()) +
                                                       " does not match topology N = " +
                                                       std::to_string(topo.size()));
    }
    const TimeGrid grid = cfg.time_grid();
    const std::size_t N = topo.size(), P = param_count(topo);

    EnergyParams theta = EnergyParams::initial(topo, cfg.init);
    theta.clamp_gamma(cfg.gamma_min);

    std::vector<char> mask(P);
    for (std::size_t i = 0; i < P; ++i) mask[i] = cfg.is_trainable(param_index(topo, i).kind);

    Optimizer opt(cfg, P);
    GradVector grad(P);
    SampleMatrix batch(cfg.batch_size, N);
    std::vector<EnergyParams> snapshots;
    snapshots.reserve(grid.size());
    std::vector<TrainLogRow> log;
    const auto start = std::chrono::steady_clock::now();

    for (std::size_t l = 0; l < grid.size(); ++l) {
        const double t = std::max(grid[l], cfg.t_min);
        const NoiseSource snap_noise = noise.child(l);
        RandomStream rng = snap_noise.open();
        opt.reset();
        for (std::size_t step = 1; step <= cfg.steps_per_time; ++step) {
            for (std::size_t b = 0; b < cfg.batch_size; ++b) {
                const auto row = dataset.row(rng.index(dataset.rows()));
                forward_kernel_sample(row, t, cfg.kbt, rng, batch.row(b));
            }
            double loss = 0.0;
            if (rule == LearningRule::force_matching) {
                force_matching_grad(theta, topo, batch, cfg.kbt, grad, &loss);
            } else {
                CD1Estimate est = cd1_grad(theta, topo, batch, cfg.kbt, cd1cfg,
                                           snap_noise.child(StreamTag::cd1).child(step));
                grad = std::move(est.sm_converted);
                loss = est.loss;
            }
            for (std::size_t i = 0; i < P; ++i) {
                if (!mask[i]) grad[i] = 0.0;
            }
            if (!std::isfinite(loss) || !all_finite(grad)) {
                throw TrainingError(l, step, "non-finite loss or gradient");
            }
            opt.step(theta.flat(), grad);
            theta.clamp_gamma(cfg.gamma_min);
            if (!all_finite(theta.flat())) throw TrainingError(l, step, "parameters became non-finite");

            if (step % cfg.log_every == 0 || step == cfg.steps_per_time) {
                const double gnorm = std::sqrt(std::inner_product(grad.begin(), grad.end(), grad.begin(), 0.0));
                const double wall =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                TrainLogRow row{l, step, loss, gnorm, wall};
                log.push_back(row);
                if (sink) sink(row);
            }
        }
        snapshots.push_back(theta);
    }
    return TrainResult{Schedule(grid, std::move(snapshots), topo, cfg.kbt, cfg.gamma_min), std::move(log)};
}

std::string train_log_header() { return "snapshot,step,loss,grad_norm,wall_time_s"; }

std::string format_log_row(const TrainLogRow& row) {
    return std::to_string(row.snapshot) + "," + std::to_string(row.step) + "," + format_double(row.loss) +
           "," + format_double(row.grad_norm) + "," + format_double(row.wall_seconds);
}

}  // namespace pssgm
