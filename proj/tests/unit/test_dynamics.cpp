#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pssgm/dynamics.hpp"

using namespace pssgm;

namespace {

struct Moments {
    double mean = 0.0;
    double var = 0.0;
    std::size_t n = 0;
    double mean_se() const { return std::sqrt(var / static_cast<double>(n)); }
    /// Standard error of the variance estimate for a Gaussian population.
    double var_se() const { return var * std::sqrt(2.0 / static_cast<double>(n - 1)); }
};

Moments column_moments(const SampleMatrix& m, std::size_t col) {
    Moments r;
    r.n = m.rows();
    for (std::size_t i = 0; i < m.rows(); ++i) r.mean += m(i, col);
    r.mean /= static_cast<double>(r.n);
    for (std::size_t i = 0; i < m.rows(); ++i) r.var += (m(i, col) - r.mean) * (m(i, col) - r.mean);
    r.var /= static_cast<double>(r.n - 1);
    return r;
}

double covariance(const SampleMatrix& m, std::size_t a, std::size_t b) {
    const double ma = column_moments(m, a).mean, mb = column_moments(m, b).mean;
    double c = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) c += (m(i, a) - ma) * (m(i, b) - mb);
    return c / static_cast<double>(m.rows() - 1);
}

/// Constant-in-time schedule.
Schedule constant_schedule(const EnergyParams& p, const Topology& topo, double tau, std::size_t n_times,
                           double kbt) {
    return Schedule(TimeGrid::uniform(tau, n_times), std::vector<EnergyParams>(n_times, p), topo, kbt);
}

/// E_hat = sum x^2/2 + (gamma_min/6) sum x^6: its score is that of N(0, kbt I),
/// so the inference force is -x + O(gamma_min x^5).
EnergyParams stationary_gaussian_params(const Topology& topo) {
    EnergyParams p = EnergyParams::zeros(topo);
    for (double& a : p.alpha()) a = 1.0;
    for (double& g : p.gamma()) g = default_gamma_min;
    return p;
}

}  // namespace

TEST_CASE("forward kernel: zero time returns x0 exactly, negative time rejected") {
    const std::vector<double> x0{0.3, -1.2, 7.0};
    CHECK(forward_kernel_sample(x0, 0.0, 0.005, NoiseSource(1)) == x0);
    CHECK_THROWS_AS(forward_kernel_sample(x0, -0.1, 0.005, NoiseSource(1)), Error);
}

TEST_CASE("forward kernel: moments match the OU law within 4 SE at 1e6 draws") {
    RandomStream pick(NoiseSource(31));
    std::vector<std::pair<double, double>> cases{{1.0, 4.0}};
    for (int i = 0; i < 5; ++i) cases.push_back({4.0 * pick.uniform() - 2.0, 0.05 + 3.0 * pick.uniform()});
    const double kbt = 0.005;
    for (auto [x0, t] : cases) {
        RandomStream rng(NoiseSource(32).child(static_cast<std::uint64_t>(t * 1e6)));
        const std::size_t n = 1'000'000;
        SampleMatrix draws(n, 1);
        const std::vector<double> start{x0};
        for (std::size_t i = 0; i < n; ++i) forward_kernel_sample(start, t, kbt, rng, draws.row(i));
        const Moments m = column_moments(draws, 0);
        const double mean = x0 * std::exp(-t);
        const double var = kbt * (1.0 - std::exp(-2.0 * t));
        CHECK(std::abs(m.mean - mean) < 4.0 * m.mean_se());
        CHECK(std::abs(m.var - var) < 4.0 * m.var_se());
    }
    // The worked example: mean e^-4, variance 0.005 (1 - e^-8).
    CHECK(std::exp(-4.0) == doctest::Approx(0.018316).epsilon(1e-5));
    CHECK(0.005 * (1.0 - std::exp(-8.0)) == doctest::Approx(0.0049983).epsilon(1e-5));
}

TEST_CASE("forward kernel: agrees with Euler-Maruyama simulation of the forward SDE") {
    const double kbt = 0.005, t = 1.0, dt = 1e-4, x0 = 0.8;
    const std::size_t paths = 10'000;
    const std::size_t steps = step_count(t, dt);
    SampleMatrix em(paths, 1), exact(paths, 1);
    const std::vector<double> start{x0};
    RandomStream kernel_rng(NoiseSource(33).child(1));
    for (std::size_t p = 0; p < paths; ++p) {
        RandomStream rng(NoiseSource(33).child(2).child(p));
        double x = x0;
        const double scale = std::sqrt(2.0 * kbt * dt);
        for (std::size_t k = 0; k < steps; ++k) x += -x * dt + scale * rng.normal();
        em(p, 0) = x;
        forward_kernel_sample(start, t, kbt, kernel_rng, exact.row(p));
    }
    const Moments a = column_moments(em, 0), b = column_moments(exact, 0);
    CHECK(std::abs(a.mean - b.mean) < 4.0 * std::hypot(a.mean_se(), b.mean_se()));
    CHECK(std::abs(a.var - b.var) < 4.0 * std::hypot(a.var_se(), b.var_se()));
}

TEST_CASE("forward kernel: long time is the stationary N(0, kbt)") {
    const double kbt = 0.005;
    RandomStream rng(NoiseSource(34));
    const std::size_t n = 200'000;
    SampleMatrix draws(n, 1);
    const std::vector<double> start{1.5};
    for (std::size_t i = 0; i < n; ++i) forward_kernel_sample(start, 50.0, kbt, rng, draws.row(i));
    const Moments m = column_moments(draws, 0);
    CHECK(std::abs(m.mean) < 4.0 * m.mean_se());
    CHECK(std::abs(m.var - kbt) < 4.0 * m.var_se());
}

TEST_CASE("integrator config validation") {
    const Topology topo = Topology::complete(1);
    const Schedule s = constant_schedule(stationary_gaussian_params(topo), topo, 4.0, 15, 0.005);
    CHECK(default_integrator(s).dt == 4.0 / 800.0);
    CHECK(default_integrator(s).kbt == 0.005);
    CHECK_NOTHROW((IntegratorConfig{4.0 / 15.0, 0.005}.validate_for(s)));
    CHECK_THROWS_AS((IntegratorConfig{0.3, 0.005}.validate_for(s)), Error);
    CHECK_THROWS_AS((IntegratorConfig{0.0, 0.005}.validate()), Error);
    CHECK_THROWS_AS((IntegratorConfig{0.01, -1.0}.validate()), Error);
    CHECK(step_count(4.0, 0.005) == 800);
    CHECK_THROWS_AS(step_count(4.0, 0.003), Error);
}

TEST_CASE("reverse sampler: stationary-score schedule keeps N(0, kbt I) within 5%") {
    const Topology topo = Topology::complete(2);
    const double kbt = 0.005;
    const Schedule s = constant_schedule(stationary_gaussian_params(topo), topo, 4.0, 15, kbt);
    const SampleMatrix x = reverse_sample(s, default_integrator(s), NoiseSource(35), 100'000);
    REQUIRE(x.rows() == 100'000);
    REQUIRE(x.dim() == 2);
    for (std::size_t a = 0; a < 2; ++a) {
        CHECK(std::abs(column_moments(x, a).var - kbt) < 0.05 * kbt);
        CHECK(std::abs(column_moments(x, a).mean) < 4.0 * column_moments(x, a).mean_se());
    }
    CHECK(std::abs(covariance(x, 0, 1)) < 0.05 * kbt);
}

TEST_CASE("reverse sampler: bitwise determinism, independent of worker count") {
    const Topology topo = Topology::complete(3);
    RandomStream rng(NoiseSource(36));
    std::vector<EnergyParams> snaps;
    for (int k = 0; k < 5; ++k) {
        EnergyParams p = oracle::random_params(rng, topo, 0.3);
        for (double& a : p.alpha()) a = 1.0;
        snaps.push_back(p);
    }
    const Schedule s(TimeGrid::uniform(2.0, 5), snaps, topo, 0.01);
    const IntegratorConfig cfg = default_integrator(s);

    CHECK(reverse_sample(s, cfg, NoiseSource(7), 1) == reverse_sample(s, cfg, NoiseSource(7), 1));
    CHECK(reverse_sample(s, cfg, NoiseSource(7), 1) != reverse_sample(s, cfg, NoiseSource(8), 1));

    const SampleMatrix serial = reverse_sample(s, cfg, NoiseSource(9), 300, {.workers = 1});
    const SampleMatrix threaded = reverse_sample(s, cfg, NoiseSource(9), 300, {.workers = 3});
    CHECK(serial == threaded);

    // Chain c depends only on (seed, c): a shorter run is a prefix.
    const SampleMatrix prefix = reverse_sample(s, cfg, NoiseSource(9), 70);
    for (std::size_t c = 0; c < 70; ++c) {
        CHECK(std::equal(prefix.row(c).begin(), prefix.row(c).end(), serial.row(c).begin()));
    }
}

TEST_CASE("reverse sampler: blowup names chain and step") {
    const Topology topo = Topology::complete(1);
    EnergyParams p = EnergyParams::zeros(topo);
    p.alpha()[0] = 1e5;  // stiff well, unstable at dt = 0.005
    p.gamma()[0] = default_gamma_min;
    const Schedule s = constant_schedule(p, topo, 4.0, 15, 0.005);
    try {
        reverse_sample(s, default_integrator(s), NoiseSource(10), 5);
        FAIL("expected blowup");
    } catch (const BlowupError& e) {
        CHECK(e.kind() == ErrorKind::integration_blowup);
        CHECK(exit_code(e.kind()) == 3);
        CHECK(e.chain() < 5);
        CHECK(e.step() > 0);
        CHECK(e.step() < 800);
    }
}

TEST_CASE("reverse sampler: weak order of Euler-Maruyama is about one") {
    // Inference force -x + 1: the mean relaxes towards 1 and Euler's mean is
    // biased by O(dt).
    const Topology topo = Topology::complete(1);
    EnergyParams p = EnergyParams::zeros(topo);
    p.alpha()[0] = 1.0;
    p.gamma()[0] = default_gamma_min;
    p.f_ext()[0] = -0.5;
    const Schedule s = constant_schedule(p, topo, 1.0, 2, 0.005);
    std::vector<double> means;
    for (double dt : {0.2, 0.1, 0.05}) {
        const SampleMatrix x = reverse_sample(s, {dt, 0.005}, NoiseSource(37), 100'000);
        means.push_back(column_moments(x, 0).mean);
    }
    const double order = std::log2((means[0] - means[1]) / (means[1] - means[2]));
    CHECK(order >= 0.8);
    CHECK(order <= 1.5);
}

TEST_CASE("equilibrium sampler: quadratic well reproduces the Boltzmann variance") {
    const Topology topo = Topology::complete(2);
    EnergyParams p = EnergyParams::zeros(topo);
    p.alpha()[0] = 1.0;
    p.alpha()[1] = 2.0;
    for (double& g : p.gamma()) g = default_gamma_min;
    const double kbt = 0.005;
    const IntegratorConfig cfg{0.005, kbt};
    const std::vector<double> x0{0.0, 0.0};
    const SampleMatrix traj = equilibrium_sample(p, topo, cfg, 20'000.0, NoiseSource(38), x0, 200);
    CHECK(traj.rows() == 20'000);
    CHECK(std::abs(column_moments(traj, 0).var - kbt) < 0.05 * kbt);
    CHECK(std::abs(column_moments(traj, 1).var - kbt / 2.0) < 0.05 * kbt / 2.0);
    CHECK(std::abs(covariance(traj, 0, 1)) < 0.05 * kbt);
}

TEST_CASE("equilibrium sampler: double well does not cross the barrier at low temperature") {
    const Topology topo = Topology::complete(1);
    const EnergyParams p = EnergyParams::initial(topo, {});
    const IntegratorConfig cfg{0.005, 0.005};
    const std::vector<double> x0{-0.786151377757423};
    const SampleMatrix traj = equilibrium_sample(p, topo, cfg, 400.0, NoiseSource(39), x0, 800);
    CHECK(traj.rows() == 100);
    for (std::size_t i = 0; i < traj.rows(); ++i) CHECK(traj(i, 0) < 0.0);
}

TEST_CASE("equilibrium sampler: argument validation and stride") {
    const Topology topo = Topology::complete(1);
    const EnergyParams p = EnergyParams::initial(topo, {});
    const IntegratorConfig cfg{0.01, 0.005};
    const std::vector<double> x0{0.5};
    CHECK(equilibrium_sample(p, topo, cfg, 1.0, NoiseSource(1), x0, 10).rows() == 10);
    CHECK(equilibrium_sample(p, topo, cfg, 1.0, NoiseSource(1), x0, 1).rows() == 100);
    CHECK(equilibrium_sample(p, topo, cfg, 1.0, NoiseSource(1), x0, 3) ==
          equilibrium_sample(p, topo, cfg, 1.0, NoiseSource(1), x0, 3));
    CHECK_THROWS_AS(equilibrium_sample(p, topo, cfg, 1.0, NoiseSource(1), x0, 0), Error);
    CHECK_THROWS_AS(equilibrium_sample(p, topo, cfg, -1.0, NoiseSource(1), x0, 1), Error);
    const std::vector<double> wrong{0.1, 0.2};
    CHECK_THROWS_AS(equilibrium_sample(p, topo, cfg, 1.0, NoiseSource(1), wrong, 1), Error);
}

TEST_CASE("relaxation init: long relaxation reaches N(0, kbt I), short stays near 0") {
    const Topology topo = Topology::complete(2);
    const double kbt = 0.005;
    const Schedule s = constant_schedule(stationary_gaussian_params(topo), topo, 4.0, 15, kbt);
    const IntegratorConfig cfg = default_integrator(s);
    const std::size_t repeats = 20'000;
    SampleMatrix x(repeats, 2);
    for (std::size_t r = 0; r < repeats; ++r) {
        const StateVector v = relax_to_equilibrium(s, cfg, 10.0, NoiseSource(40).child(r));
        std::copy(v.begin(), v.end(), x.row(r).begin());
    }
    for (std::size_t a = 0; a < 2; ++a) CHECK(std::abs(column_moments(x, a).var - kbt) < 0.05 * kbt);
    CHECK(std::abs(covariance(x, 0, 1)) < 0.05 * kbt);

    const StateVector tiny = relax_to_equilibrium(s, cfg, 1e-10, NoiseSource(41));
    for (double v : tiny) CHECK(std::abs(v) < 1e-5);

    CHECK(relax_to_equilibrium(s, cfg, 10.0, NoiseSource(42)) == relax_to_equilibrium(s, cfg, 10.0, NoiseSource(42)));
    CHECK_THROWS_AS(relax_to_equilibrium(s, cfg, 0.0, NoiseSource(42)), Error);
}

TEST_CASE("reverse sampler: relaxation init matches the exact init in law") {
    const Topology topo = Topology::complete(1);
    const double kbt = 0.005;
    const Schedule s = constant_schedule(stationary_gaussian_params(topo), topo, 4.0, 15, kbt);
    ReverseOptions opts;
    opts.init = ReverseInit::relaxation;
    opts.relax_time = 5.0;
    const SampleMatrix x = reverse_sample(s, default_integrator(s), NoiseSource(43), 5000, opts);
    const Moments m = column_moments(x, 0);
    CHECK(std::abs(m.var - kbt) < 4.0 * m.var_se());
}
