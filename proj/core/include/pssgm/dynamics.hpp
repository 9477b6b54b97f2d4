#pragma once

// Stochastic dynamics of the oscillator network, all integrated with
// Euler-Maruyama:
//   forward noising      dx = -x dt + sqrt(2 kbt) dw       (sampled exactly)
//   reverse generation   dx = (-2 grad E_hat(theta(tau - t)) + x) dt + sqrt(2 kbt) dw
//   equilibrium baseline dx = -grad E_hat(theta) dt + sqrt(2 kbt) dw

#include <cstddef>
#include <span>
#include <vector>

#include "pssgm/rng.hpp"
#include "pssgm/schedule.hpp"

namespace pssgm {

/// States with any |x_n| above this bound abort integration with BlowupError.
inline constexpr double blowup_bound = 1e3;

struct IntegratorConfig {
    double dt = 4.0 / 800.0;
    double kbt = 0.005;

    /// dt > 0, kbt > 0.
    void validate() const;
    /// Additionally dt <= tau / N_t so steps resolve the protocol grid.
    void validate_for(const Schedule& s) const;
};

/// Default step: tau / 800.
IntegratorConfig default_integrator(const Schedule& s);

/// Exact Ornstein-Uhlenbeck transition of the forward process:
/// x_t = x0 e^{-t} + sqrt(kbt (1 - e^{-2t})) * w.
void forward_kernel_sample(std::span<const double> x0, double t, double kbt, RandomStream& rng,
                           std::span<double> out);
StateVector forward_kernel_sample(std::span<const double> x0, double t, double kbt,
                                  const NoiseSource& noise);

enum class ReverseInit {
    exact_gaussian,  ///< x(0) ~ N(0, kbt I)
    relaxation,      ///< relax_to_equilibrium under theta(tau) from x = 0
};

struct ReverseOptions {
    ReverseInit init = ReverseInit::exact_gaussian;
    double relax_time = 10.0;
    /// Threads used for chain blocks; results do not depend on this value.
    std::size_t workers = 1;
};

/// n_chains independent reverse-time trajectories, returning x(tau) per chain.
/// Chain c draws all of its randomness from noise.child(c).
SampleMatrix reverse_sample(const Schedule& s, const IntegratorConfig& cfg, const NoiseSource& noise,
                            std::size_t n_chains, const ReverseOptions& options = {});

/// Long static Langevin run under force_hat(params). Records the state every
/// `stride` steps (stride >= 1).
SampleMatrix equilibrium_sample(const EnergyParams& params, const Topology& topo,
                                const IntegratorConfig& cfg, double total_time,
                                const NoiseSource& noise, std::span<const double> x0,
                                std::size_t stride);

/// Integrate under total_inference_force at fixed theta(tau), starting from 0.
StateVector relax_to_equilibrium(const Schedule& s, const IntegratorConfig& cfg, double relax_time,
                                 const NoiseSource& noise);

/// Number of Euler steps for `duration` at step dt (rounded; rejects
/// durations that are not a whole number of steps within 1e-9 relative).
std::size_t step_count(double duration, double dt);

}  // namespace pssgm
