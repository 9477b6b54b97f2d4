#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "pssgm/data.hpp"
#include "pssgm/learning.hpp"

using namespace pssgm;
using oracle::rel_err;

namespace {

SampleMatrix to_matrix(const std::vector<std::vector<double>>& rows) {
    SampleMatrix m;
    for (const auto& r : rows) m.push_back(r);
    return m;
}

std::vector<std::vector<double>> random_batch(RandomStream& rng, std::size_t n, std::size_t b, double amp) {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < b; ++i) out.push_back(oracle::random_state(rng, n, amp));
    return out;
}

SampleMatrix gaussian_data(double mu, double sigma, std::size_t m, std::uint64_t seed) {
    RandomStream rng{NoiseSource(seed)};
    SampleMatrix d(m, 1);
    for (std::size_t i = 0; i < m; ++i) d(i, 0) = mu + sigma * rng.normal();
    return d;
}

}  // namespace

TEST_CASE("sm_loss: worked examples") {
    const Topology t1 = Topology::complete(1);
    EnergyParams p = EnergyParams::zeros(t1);
    p.gamma()[0] = default_gamma_min;
    CHECK(sm_loss(p, t1, to_matrix({{0.0}}), 0.005) == 0.0);

    EnergyParams q = EnergyParams::zeros(t1);
    q.alpha()[0] = 0.7;
    const double x = 0.3, kbt = 0.05;
    CHECK(sm_loss(q, t1, to_matrix({{x}}), kbt) ==
          doctest::Approx(-0.7 / kbt + 0.5 * 0.49 * x * x / (kbt * kbt)).epsilon(1e-14));

    CHECK_THROWS_AS(sm_loss(q, t1, SampleMatrix(0, 1), kbt), Error);
}

TEST_CASE("sm_loss: matches a finite-difference implementation") {
    RandomStream rng(NoiseSource(51));
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng.index(6);
        const Topology t = oracle::random_topology(rng, n);
        const EnergyParams p = oracle::random_params(rng, t);
        const auto batch = random_batch(rng, n, 5, 1.2);
        const double kbt = 0.05;
        CHECK(rel_err(sm_loss(p, t, to_matrix(batch), kbt), oracle::numeric_sm_loss(p, t, batch, kbt)) < 1e-5);
    }
}

TEST_CASE("force_matching_grad: worked example for beta") {
    // x = 0.5, measured force f_hat = +0.1 (so grad E_hat = -0.1), kbt = 0.005.
    const Topology t1 = Topology::complete(1);
    EnergyParams p = EnergyParams::zeros(t1);
    p.f_ext()[0] = -0.1;
    const SampleMatrix batch = to_matrix({{0.5}});
    REQUIRE(force_hat(p, t1, batch.row(0))[0] == doctest::Approx(0.1));
    const GradVector g = force_matching_grad(p, t1, batch, 0.005);
    CHECK(g[flat_index(t1, {ParamKind::beta, 0})] == doctest::Approx(-650.0).epsilon(1e-12));

    // Cross-check against a finite difference of sm_loss in beta.
    const double h = 1e-6;
    EnergyParams up = p, down = p;
    up.beta()[0] += h;
    down.beta()[0] -= h;
    const double fd = (sm_loss(up, t1, batch, 0.005) - sm_loss(down, t1, batch, 0.005)) / (2 * h);
    CHECK(rel_err(fd, -650.0) < 1e-6);
}

TEST_CASE("force_matching_grad: f_ext gradient vanishes for E_hat = 0") {
    const Topology t = Topology::complete(2);
    const EnergyParams p = EnergyParams::zeros(t);
    const SampleMatrix batch = to_matrix({{0.3, -0.2}, {-0.3, 0.2}, {0.9, 0.1}, {-0.9, -0.1}});
    const GradVector g = force_matching_grad(p, t, batch, 0.005);
    for (std::size_t n = 0; n < 2; ++n) CHECK(g[flat_index(t, {ParamKind::f_ext, n})] == 0.0);
    CHECK_THROWS_AS(force_matching_grad(p, t, SampleMatrix(0, 2), 0.005), Error);
}

TEST_CASE("force_matching_grad equals the theta-derivative of sm_loss, all kinds") {
    RandomStream rng(NoiseSource(52));
    std::array<int, 8> seen{};
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + rng.index(5);
        const Topology t = oracle::random_topology(rng, n);
        const EnergyParams p = oracle::random_params(rng, t);
        const SampleMatrix batch = to_matrix(random_batch(rng, n, 4, 1.0));
        const double kbt = 0.005;
        double loss = 0.0;
        GradVector g(param_count(t));
        force_matching_grad(p, t, batch, kbt, g, &loss);
        CHECK(rel_err(loss, sm_loss(p, t, batch, kbt)) < 1e-12);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double h = 1e-6 * std::max(1.0, std::abs(p.flat()[i]));
            EnergyParams up = p, down = p;
            up.flat()[i] += h;
            down.flat()[i] -= h;
            const double fd = (sm_loss(up, t, batch, kbt) - sm_loss(down, t, batch, kbt)) / (2.0 * h);
            CHECK(rel_err(g[i], fd) < 1e-5);
            ++seen[static_cast<std::size_t>(param_index(t, i).kind)];
        }
    }
    for (int c : seen) CHECK(c > 0);
}

TEST_CASE("cd1_grad: linear basis under zero energy has zero mean") {
    const Topology t = Topology::complete(2);
    const EnergyParams p = EnergyParams::zeros(t);
    const SampleMatrix batch = to_matrix({{0.2, -0.4}, {0.1, 0.6}});
    CD1Config cfg;
    cfg.n_noise = 4096;
    const CD1Estimate est = cd1_grad(p, t, batch, 0.005, cfg, NoiseSource(53));
    for (std::size_t n = 0; n < 2; ++n) {
        const std::size_t i = flat_index(t, {ParamKind::f_ext, n});
        CHECK(std::abs(est.sm_converted[i]) < 4.0 * est.sm_std_error[i]);
    }
    cfg.antithetic = true;
    const CD1Estimate anti = cd1_grad(p, t, batch, 0.005, cfg, NoiseSource(53));
    for (std::size_t n = 0; n < 2; ++n) CHECK(std::abs(anti.grad[flat_index(t, {ParamKind::f_ext, n})]) < 1e-15);
}

TEST_CASE("cd1_grad: beta component is the mean of (-x^4 + x'^4) / 4") {
    // One oscillator: x' ~ N(m, s^2) with m = x - grad E_hat(x) delta, s^2 = 2 delta kbt,
    // and E[x'^4] = m^4 + 6 m^2 s^2 + 3 s^4.
    const Topology t1 = Topology::complete(1);
    const EnergyParams p = EnergyParams::initial(t1, {});
    const double x = 0.4, kbt = 0.005, delta = 1e-2;
    CD1Config cfg{delta, 200'000, false};
    const CD1Estimate est = cd1_grad(p, t1, to_matrix({{x}}), kbt, cfg, NoiseSource(54));
    const double grad_e = -force_hat(p, t1, std::vector<double>{x})[0];
    const double m = x - grad_e * delta, s2 = 2.0 * delta * kbt;
    const double expected = (m * m * m * m + 6.0 * m * m * s2 + 3.0 * s2 * s2 - x * x * x * x) / 4.0;
    const std::size_t i = flat_index(t1, {ParamKind::beta, 0});
    const double se = est.sm_std_error[i] * delta * kbt * kbt;
    CHECK(std::abs(est.grad[i] - expected) < 4.0 * se);
    CHECK(est.sm_converted[i] == doctest::Approx(-est.grad[i] / (delta * kbt * kbt)).epsilon(1e-14));
}

TEST_CASE("cd1_grad: SM-converted estimate approaches force matching as delta -> 0") {
    const Topology t = Topology::complete(2);
    RandomStream rng(NoiseSource(55));
    const EnergyParams p = oracle::random_params(rng, t, 0.5);
    const SampleMatrix batch = to_matrix({{0.3, -0.5}, {-0.6, 0.1}});
    const double kbt = 0.005;
    const GradVector fm = force_matching_grad(p, t, batch, kbt);

    CD1Config plain{1e-4, 20'000, false};
    const CD1Estimate est = cd1_grad(p, t, batch, kbt, plain, NoiseSource(56));
    for (std::size_t i = 0; i < fm.size(); ++i) CHECK(std::abs(est.sm_converted[i] - fm[i]) < 3.0 * est.sm_std_error[i]);

    // Antithetic pairs keep the converted noise level roughly constant in delta
    // while the bias shrinks linearly. Monotone up to two noise norms.
    std::vector<double> bias, noise;
    for (double delta : {1e-2, 1e-3, 1e-4}) {
        const CD1Estimate e = cd1_grad(p, t, batch, kbt, {delta, 20'000, true}, NoiseSource(57));
        double b = 0.0, v = 0.0;
        for (std::size_t i = 0; i < fm.size(); ++i) {
            b += (e.sm_converted[i] - fm[i]) * (e.sm_converted[i] - fm[i]);
            v += e.sm_std_error[i] * e.sm_std_error[i];
        }
        bias.push_back(std::sqrt(b));
        noise.push_back(std::sqrt(v));
    }
    CHECK(bias[0] > bias[1] + 2.0 * noise[0]);
    CHECK(bias[2] <= bias[1] + 2.0 * noise[2]);
}

TEST_CASE("cd1_grad: independent seeds average to the large-sample estimate") {
    const Topology t = Topology::complete(2);
    RandomStream rng(NoiseSource(58));
    const EnergyParams p = oracle::random_params(rng, t, 0.5);
    const SampleMatrix batch = to_matrix({{0.2, 0.3}});
    const double kbt = 0.05;
    const CD1Config small{1e-3, 256, false};
    const std::size_t reps = 40;
    const std::size_t P = param_count(t);
    std::vector<double> mean(P, 0.0), sq(P, 0.0);
    for (std::size_t r = 0; r < reps; ++r) {
        const CD1Estimate e = cd1_grad(p, t, batch, kbt, small, NoiseSource(59).child(r));
        for (std::size_t i = 0; i < P; ++i) {
            mean[i] += e.grad[i] / reps;
            sq[i] += e.grad[i] * e.grad[i] / reps;
        }
    }
    const CD1Estimate big = cd1_grad(p, t, batch, kbt, {1e-3, 200'000, false}, NoiseSource(60));
    for (std::size_t i = 0; i < P; ++i) {
        const double se_rep = std::sqrt(std::max(0.0, sq[i] - mean[i] * mean[i]) / (reps - 1));
        const double se_big = big.sm_std_error[i] * 1e-3 * kbt * kbt;
        CHECK(std::abs(mean[i] - big.grad[i]) <= 3.0 * std::hypot(se_rep, se_big));
    }
}

TEST_CASE("cd1 config validation") {
    CHECK_THROWS_AS((CD1Config{0.0, 10, false}.validate()), Error);
    CHECK_THROWS_AS((CD1Config{1e-3, 0, false}.validate()), Error);
    CHECK((CD1Config{2e-2, 10, false}.delta_is_large()));
    CHECK_FALSE(CD1Config{}.delta_is_large());
    CHECK(parse_rule("cd1") == LearningRule::cd1);
    CHECK(parse_rule("force-matching") == LearningRule::force_matching);
    CHECK_THROWS_AS(parse_rule("bogus"), Error);
}

TEST_CASE("train_schedule: zero steps gives copies of the initialization") {
    const Topology t = Topology::complete(2);
    TrainConfig cfg;
    cfg.steps_per_time = 0;
    const SampleMatrix data = mixture_sample(default_mixture(), 100, NoiseSource(61));
    const TrainResult r = train_schedule(data, t, cfg, LearningRule::force_matching, {}, NoiseSource(62));
    REQUIRE(r.schedule.snapshots().size() == 15);
    for (const auto& s : r.schedule.snapshots()) CHECK(s == EnergyParams::initial(t, cfg.init));
    CHECK(r.schedule.tau() == 4.0);
    CHECK(r.schedule.kbt() == 0.005);
    CHECK(r.log.empty());
}

TEST_CASE("train_schedule: Gaussian data recovers the closed-form score fit") {
    // Score of N(mu, s^2) is -(x - mu)/s^2; matching -grad E_hat / kbt gives
    // alpha = kbt / s^2 = 0.5 and f_ext = -kbt mu / s^2 = -0.1.
    const SampleMatrix data = gaussian_data(0.2, 0.1, 10'000, 63);
    const Topology t = Topology::complete(1);
    TrainConfig cfg;
    cfg.n_times = 2;
    cfg.init.beta = 0.0;
    cfg.init.gamma = 0.0;
    cfg.trainable.fill(false);
    cfg.trainable[static_cast<std::size_t>(ParamKind::alpha)] = true;
    cfg.trainable[static_cast<std::size_t>(ParamKind::f_ext)] = true;
    const TrainResult r = train_schedule(data, t, cfg, LearningRule::force_matching, {}, NoiseSource(64));
    const EnergyParams& s0 = r.schedule.snapshots()[0];
    CHECK(std::abs(s0.alpha()[0] - 0.5) < 0.05 * 0.5);
    CHECK(std::abs(s0.f_ext()[0] + 0.1) < 0.05 * 0.1);
    CHECK(s0.beta()[0] == 0.0);
    CHECK(s0.gamma()[0] == default_gamma_min);
}

TEST_CASE("train_schedule: t_min noises the first snapshot's minibatches") {
    // At t = 0.5 the noised Gaussian has mean 0.2 e^-0.5 and variance
    // 0.01 e^-1 + kbt (1 - e^-1).
    const SampleMatrix data = gaussian_data(0.2, 0.1, 10'000, 63);
    const Topology t = Topology::complete(1);
    TrainConfig cfg;
    cfg.n_times = 2;
    cfg.t_min = 0.5;
    cfg.init.beta = 0.0;
    cfg.init.gamma = 0.0;
    cfg.trainable.fill(false);
    cfg.trainable[static_cast<std::size_t>(ParamKind::alpha)] = true;
    cfg.trainable[static_cast<std::size_t>(ParamKind::f_ext)] = true;
    const TrainResult r = train_schedule(data, t, cfg, LearningRule::force_matching, {}, NoiseSource(64));
    const double var = 0.01 * std::exp(-1.0) + cfg.kbt * (1.0 - std::exp(-1.0));
    const double alpha = cfg.kbt / var;
    const double f = -alpha * 0.2 * std::exp(-0.5);
    const EnergyParams& s0 = r.schedule.snapshots()[0];
    CHECK(std::abs(s0.alpha()[0] - alpha) < 0.05 * alpha);
    CHECK(std::abs(s0.f_ext()[0] - f) < 0.05 * std::abs(f));
    CHECK(r.schedule.grid()[0] == 0.0);
}

TEST_CASE("train_schedule: gamma projection holds after aggressive steps") {
    // A stiff fixed quadratic makes x grad E_hat large, so the gamma gradient
    // is positive and large steps drive gamma into the clamp.
    const Topology t = Topology::complete(2);
    TrainConfig cfg;
    cfg.n_times = 3;
    cfg.steps_per_time = 50;
    cfg.learning_rate = 0.1;
    cfg.batch_size = 16;
    cfg.init.alpha = 5.0;
    cfg.trainable[static_cast<std::size_t>(ParamKind::alpha)] = false;
    const SampleMatrix data = mixture_sample(default_mixture(), 200, NoiseSource(65));
    const TrainResult r = train_schedule(data, t, cfg, LearningRule::force_matching, {}, NoiseSource(66));
    bool hit = false;
    for (const auto& s : r.schedule.snapshots()) {
        for (double g : s.gamma()) {
            CHECK(g >= cfg.gamma_min);
            hit = hit || g == cfg.gamma_min;
        }
    }
    CHECK(hit);
}

TEST_CASE("train_schedule: deterministic for a fixed seed, both rules") {
    const Topology t = Topology::complete(2);
    TrainConfig cfg;
    cfg.n_times = 3;
    cfg.steps_per_time = 40;
    cfg.batch_size = 32;
    cfg.log_every = 10;
    const SampleMatrix data = mixture_sample(default_mixture(), 500, NoiseSource(67));
    for (LearningRule rule : {LearningRule::force_matching, LearningRule::cd1}) {
        const CD1Config cd{1e-3, 8, false};
        const TrainResult a = train_schedule(data, t, cfg, rule, cd, NoiseSource(68));
        const TrainResult b = train_schedule(data, t, cfg, rule, cd, NoiseSource(68));
        const TrainResult c = train_schedule(data, t, cfg, rule, cd, NoiseSource(69));
        CHECK(a.schedule == b.schedule);
        CHECK_FALSE(a.schedule == c.schedule);
        REQUIRE(a.log.size() == 3 * 4);
        for (std::size_t i = 0; i < a.log.size(); ++i) {
            CHECK(a.log[i].loss == b.log[i].loss);
            CHECK(a.log[i].grad_norm == b.log[i].grad_norm);
        }
        CHECK(a.log.back().snapshot == 2);
        CHECK(a.log.back().step == 40);
    }
}

TEST_CASE("train_schedule: sink receives every log row") {
    const Topology t = Topology::complete(2);
    TrainConfig cfg;
    cfg.n_times = 2;
    cfg.steps_per_time = 25;
    cfg.batch_size = 8;
    cfg.log_every = 10;
    std::vector<TrainLogRow> seen;
    const SampleMatrix data = mixture_sample(default_mixture(), 50, NoiseSource(70));
    const TrainResult r = train_schedule(data, t, cfg, LearningRule::force_matching, {}, NoiseSource(71),
                                         [&](const TrainLogRow& row) { seen.push_back(row); });
    CHECK(seen.size() == r.log.size());
    CHECK(seen.size() == 2 * 3);
    CHECK(train_log_header() == "snapshot,step,loss,grad_norm,wall_time_s");
    CHECK(format_log_row({1, 20, 0.5, 2.0, 0.25}) == "1,20,0.5,2,0.25");
}

// Not reproduced: on this mixture the kbt = 0.005 protocol needs a large
// transient quartic term to hold the two modes apart, so its mean snapshot
// step exceeds the kbt = 0.05 one. Kept strict and marked as an expected
// failure so a change in behaviour is noticed.
TEST_CASE("train_schedule: lower temperature gives smoother parameter evolution" * doctest::should_fail()) {
    const Topology t = Topology::complete(2);
    const SampleMatrix data = mixture_sample(default_mixture(), 5000, NoiseSource(72));
    auto mean_step = [&](double kbt) {
        TrainConfig cfg;
        cfg.kbt = kbt;
        cfg.steps_per_time = 1000;
        const Schedule s = train_schedule(data, t, cfg, LearningRule::force_matching, {}, NoiseSource(73)).schedule;
        double total = 0.0;
        std::size_t count = 0;
        for (std::size_t l = 0; l + 1 < s.snapshots().size(); ++l) {
            for (std::size_t i = 0; i < param_count(t); ++i) {
                total += std::abs(s.snapshots()[l + 1].flat()[i] - s.snapshots()[l].flat()[i]);
                ++count;
            }
        }
        return total / static_cast<double>(count);
    };
    CHECK(mean_step(0.005) < mean_step(0.05));
}

TEST_CASE("train_schedule: errors") {
    const Topology t = Topology::complete(2);
    TrainConfig cfg;
    cfg.steps_per_time = 5;
    cfg.batch_size = 4;
    const SampleMatrix wrong = gaussian_data(0.0, 1.0, 10, 74);
    CHECK_THROWS_AS(train_schedule(wrong, t, cfg, LearningRule::force_matching, {}, NoiseSource(1)), Error);

    SampleMatrix huge(3, 2);
    for (double& v : huge.data()) v = 1e120;
    try {
        train_schedule(huge, t, cfg, LearningRule::force_matching, {}, NoiseSource(1));
        FAIL("expected training divergence");
    } catch (const TrainingError& e) {
        CHECK(e.kind() == ErrorKind::training_divergence);
        CHECK(e.snapshot() == 0);
        CHECK(e.step() == 1);
    }

    TrainConfig bad = cfg;
    bad.n_times = 1;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.t_min = -0.1;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad.t_min = cfg.tau;
    CHECK_THROWS_AS(bad.validate(), Error);
}
