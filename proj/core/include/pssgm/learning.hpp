#pragma once

// Local learning rules for the driving protocol.
//
// Score matching objective at one time point, with E_hat the network energy:
//   J_SM = E_x[ -Tr H(E_hat)/kbt + |grad E_hat|^2 / (2 kbt^2) ]
// Its theta-gradient needs only the basis polynomials and the measured force
// f_hat = -grad E_hat ("force matching"). The one-step contrastive divergence
// estimator recovers the same gradient from short free evolutions:
//   dJ_SM/dtheta ~= -dJ_CD1/dtheta / (delta kbt^2)   as delta -> 0.

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pssgm/dynamics.hpp"
#include "pssgm/schedule.hpp"

namespace pssgm {

/// dJ/dtheta_i in flat parameter order.
using GradVector = std::vector<double>;

enum class OptimizerKind { sgd, adam };
enum class LearningRule { force_matching, cd1 };

std::string_view to_string(OptimizerKind k);
std::string_view to_string(LearningRule r);
LearningRule parse_rule(std::string_view name);
OptimizerKind parse_optimizer(std::string_view name);

struct AdamConfig {
    double b1 = 0.9;
    double b2 = 0.999;
    double eps = 1e-8;
};

struct CD1Config {
    double delta = 1e-3;
    std::size_t n_noise = 64;
    /// Evaluate each noise draw w together with -w.
    bool antithetic = false;

    void validate() const;
    /// True when delta is large relative to the unit relaxation time (> 1e-2).
    bool delta_is_large() const { return delta > 1e-2; }
};

struct TrainConfig {
    double kbt = 0.005;
    double tau = 4.0;
    std::size_t n_times = 15;
    /// Minibatches for snapshot l are noised to max(t_l, t_min); the schedule
    /// keeps its grid. 0 trains snapshot 0 on the clean data.
    double t_min = 0.0;
    GridSpacing spacing = GridSpacing::uniform;
    double spacing_ratio = 1.0;
    std::size_t batch_size = 256;
    std::size_t steps_per_time = 2000;
    double learning_rate = 3e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    AdamConfig adam;
    double gamma_min = default_gamma_min;
    InitValues init;
    /// Parameter kinds updated by the optimizer; others stay at init.
    std::array<bool, 8> trainable{true, true, true, true, true, true, true, true};
    /// Record a log row every this many steps (and at each snapshot's last step).
    std::size_t log_every = 100;

    void validate() const;
    TimeGrid time_grid() const;
    bool is_trainable(ParamKind k) const { return trainable[static_cast<std::size_t>(k)]; }
};

/// Mean score-matching objective over a batch.
double sm_loss(const EnergyParams& params, const Topology& topo, const SampleMatrix& batch, double kbt);

/// Exact gradient of sm_loss in theta, computed from the force at each sample.
GradVector force_matching_grad(const EnergyParams& params, const Topology& topo,
                               const SampleMatrix& batch, double kbt);

/// Same as force_matching_grad, also returning sm_loss through `loss` when non-null.
void force_matching_grad(const EnergyParams& params, const Topology& topo, const SampleMatrix& batch,
                         double kbt, std::span<double> grad, double* loss);

struct CD1Estimate {
    /// Monte-Carlo estimate of dJ_CD1/dtheta.
    GradVector grad;
    /// -grad / (delta kbt^2): comparable with force_matching_grad.
    GradVector sm_converted;
    /// Standard error of sm_converted, from the spread over noise draws.
    GradVector sm_std_error;
    /// Estimate of J_CD1 = E[-E_hat(x) + E_hat(x')].
    double loss = 0.0;
};

CD1Estimate cd1_grad(const EnergyParams& params, const Topology& topo, const SampleMatrix& batch,
                     double kbt, const CD1Config& cfg, const NoiseSource& noise);

struct TrainLogRow {
    std::size_t snapshot;
    std::size_t step;
    double loss;
    double grad_norm;
    double wall_seconds;
};

struct TrainResult {
    Schedule schedule;
    std::vector<TrainLogRow> log;
};

using TrainLogSink = std::function<void(const TrainLogRow&)>;

/// Sequential training over the time grid, warm-starting each snapshot from
/// the previous one. `dataset` rows are data points x^(m) in R^N.
TrainResult train_schedule(const SampleMatrix& dataset, const Topology& topo, const TrainConfig& cfg,
                           LearningRule rule, const CD1Config& cd1cfg, const NoiseSource& noise,
                           const TrainLogSink& sink = {});

/// Header and row formatting for the training log file.
std::string train_log_header();
std::string format_log_row(const TrainLogRow& row);

}  // namespace pssgm
