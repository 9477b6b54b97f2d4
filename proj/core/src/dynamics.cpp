#include "pssgm/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "pssgm/text_io.hpp"

namespace pssgm {

namespace {

constexpr std::size_t chain_block = 64;

void check_finite(std::span<const double> x, std::size_t chain, std::size_t step) {
    for (std::size_t n = 0; n < x.size(); ++n) {
        if (!(std::abs(x[n]) <= blowup_bound)) {
            throw BlowupError(chain, step, "x[" + std::to_string(n) + "] = " + format_double(x[n]) +
                                               " left the finite box");
        }
    }
}

// Euler-Maruyama under the inference force with the protocol reversed.
// State rows [first, last) of `states` are integrated for `steps` steps.
void integrate_reverse(const Schedule& s, const IntegratorConfig& cfg, std::size_t steps,
                       std::vector<RandomStream>& rngs, SampleMatrix& states, std::size_t first,
                       std::size_t last) {
    const Topology& topo = s.topology();
    const std::size_t N = topo.size();
    const double noise_scale = std::sqrt(2.0 * cfg.kbt * cfg.dt);
    EnergyParams theta = EnergyParams::zeros(topo);
    StateVector force(N);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = std::min(static_cast<double>(k) * cfg.dt, s.tau());
        s.reverse_params_at(t, theta);
        for (std::size_t c = first; c < last; ++c) {
            auto x = states.row(c);
            RandomStream& rng = rngs[c - first];
            total_inference_force(theta, topo, x, force);
            for (std::size_t n = 0; n < N; ++n) x[n] += force[n] * cfg.dt + noise_scale * rng.normal();
            check_finite(x, c, k + 1);
        }
    }
}

}  // namespace

void IntegratorConfig::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorKind::invalid_argument, "dt must be > 0");
    if (!(kbt > 0.0) || !std::isfinite(kbt)) throw Error(ErrorKind::invalid_argument, "kbt must be > 0");
}

void IntegratorConfig::validate_for(const Schedule& s) const {
    validate();
    const double limit = s.tau() / static_cast<double>(s.grid().size());
    if (dt > limit * (1.0 + 1e-12)) {
        throw Error(ErrorKind::invalid_argument, "dt = " + format_double(dt) +
                                                     " exceeds tau / N_t = " + format_double(limit));
    }
}

IntegratorConfig default_integrator(const Schedule& s) { return {s.tau() / 800.0, s.kbt()}; }

std::size_t step_count(double duration, double dt) {
    const double ratio = duration / dt;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
        throw Error(ErrorKind::invalid_argument, "duration " + format_double(duration) +
                                                     " is not a whole number of steps of dt = " +
                                                     format_double(dt));
    }
    return static_cast<std::size_t>(rounded);
}

void forward_kernel_sample(std::span<const double> x0, double t, double kbt, RandomStream& rng,
                           std::span<double> out) {
    if (!(t >= 0.0)) throw Error(ErrorKind::out_of_range, "forward kernel needs t >= 0");
    if (t == 0.0) {
        std::copy(x0.begin(), x0.end(), out.begin());
        return;
    }
    const double decay = std::exp(-t);
    const double sd = std::sqrt(kbt * -std::expm1(-2.0 * t));
    for (std::size_t n = 0; n < x0.size(); ++n) out[n] = x0[n] * decay + sd * rng.normal();
}

StateVector forward_kernel_sample(std::span<const double> x0, double t, double kbt,
                                  const NoiseSource& noise) {
    StateVector out(x0.size());
    RandomStream rng = noise.open();
    forward_kernel_sample(x0, t, kbt, rng, out);
    return out;
}

SampleMatrix reverse_sample(const Schedule& s, const IntegratorConfig& cfg, const NoiseSource& noise,
                            std::size_t n_chains, const ReverseOptions& options) {
    cfg.validate_for(s);
    if (n_chains == 0) throw Error(ErrorKind::invalid_argument, "n_chains must be >= 1");
    const std::size_t steps = step_count(s.tau(), cfg.dt);
    const std::size_t N = s.topology().size();
    SampleMatrix states(n_chains, N);

    auto run_block = [&](std::size_t first, std::size_t last) {
        std::vector<RandomStream> rngs;
        rngs.reserve(last - first);
        for (std::size_t c = first; c < last; ++c) {
            rngs.emplace_back(noise.child(c));
            auto x = states.row(c);
            if (options.init == ReverseInit::exact_gaussian) {
                const double sd = std::sqrt(cfg.kbt);
                for (double& v : x) v = sd * rngs.back().normal();
            } else {
                // The relaxation draws come from a dedicated child so the
                // reverse-integration noise is the same in both init modes.
                const StateVector x0 =
                    relax_to_equilibrium(s, cfg, options.relax_time, noise.child(c).child(StreamTag::relax));
                std::copy(x0.begin(), x0.end(), x.begin());
            }
        }
        integrate_reverse(s, cfg, steps, rngs, states, first, last);
    };

    const std::size_t n_blocks = (n_chains + chain_block - 1) / chain_block;
    const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, n_blocks);
    if (workers == 1) {
        for (std::size_t b = 0; b < n_blocks; ++b) {
            run_block(b * chain_block, std::min(n_chains, (b + 1) * chain_block));
        }
        return states;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t b = w; b < n_blocks; b += workers) {
                    run_block(b * chain_block, std::min(n_chains, (b + 1) * chain_block));
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return states;
}

SampleMatrix equilibrium_sample(const EnergyParams& params, const Topology& topo,
                                const IntegratorConfig& cfg, double total_time,
                                const NoiseSource& noise, std::span<const double> x0,
                                std::size_t stride) {
    cfg.validate();
    if (!(total_time > 0.0)) throw Error(ErrorKind::invalid_argument, "total_time must be > 0");
    if (x0.size() != topo.size()) throw Error(ErrorKind::dimension_mismatch, "x0 length differs from N");
    const std::size_t steps = step_count(total_time, cfg.dt);
    if (stride == 0) throw Error(ErrorKind::invalid_argument, "stride must be >= 1");
    const std::size_t N = topo.size();
    const double noise_scale = std::sqrt(2.0 * cfg.kbt * cfg.dt);

    RandomStream rng = noise.open();
    StateVector x(x0.begin(), x0.end());
    StateVector grad(N);
    SampleMatrix out(0, N);
    for (std::size_t k = 1; k <= steps; ++k) {
        energy_gradient(params, topo, x, grad);
        for (std::size_t n = 0; n < N; ++n) x[n] += -grad[n] * cfg.dt + noise_scale * rng.normal();
        check_finite(x, 0, k);
        if (k % stride == 0) out.push_back(x);
    }
    return out;
}

StateVector relax_to_equilibrium(const Schedule& s, const IntegratorConfig& cfg, double relax_time,
                                 const NoiseSource& noise) {
    cfg.validate();
    if (!(relax_time > 0.0)) throw Error(ErrorKind::invalid_argument, "relax_time must be > 0");
    const std::size_t steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(relax_time / cfg.dt - 1e-9)));
    const double dt = relax_time / static_cast<double>(steps);
    const double noise_scale = std::sqrt(2.0 * cfg.kbt * dt);
    const EnergyParams& theta = s.snapshots().back();
    const Topology& topo = s.topology();
    const std::size_t N = topo.size();

    RandomStream rng = noise.open();
    StateVector x(N, 0.0), force(N);
    for (std::size_t k = 1; k <= steps; ++k) {
        total_inference_force(theta, topo, x, force);
        for (std::size_t n = 0; n < N; ++n) x[n] += force[n] * dt + noise_scale * rng.normal();
        check_finite(x, 0, k);
    }
    return x;
}

}  // namespace pssgm
