#pragma once

// Oscillator network: topology, the parameter vector theta, and exact
// evaluation of the network energy E_hat and its derivatives.
//
// E_hat(x) = sum_n [ a_n x_n^2/2 + b_n x_n^4/4 + g_n x_n^6/6 + f_n x_n ]
//          + sum_(n,m) [ k (x_n-x_m)^2/2 + l (x_n-x_m)^4/4 + c x_n x_m^2 + h x_n^2 x_m ]
//
// Every parameter enters linearly, so E_hat = sum_i theta_i * phi_i(x) with
// fixed basis polynomials phi_i (see basis_eval).

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pssgm/samples.hpp"

namespace pssgm {

inline constexpr double default_gamma_min = 1e-3;

enum class DistanceMetric { euclidean, chebyshev, manhattan };

std::string_view to_string(DistanceMetric metric);
DistanceMetric parse_metric(std::string_view name);

struct Edge {
    std::size_t n;
    std::size_t m;

    friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct GridShape {
    std::size_t rows;
    std::size_t cols;

    friend bool operator==(const GridShape&, const GridShape&) = default;
};

/// Oscillator count plus the coupled pairs. Edges are always stored sorted
/// lexicographically by (n, m) with n < m; the flat parameter layout and the
/// schedule file both depend on that order.
class Topology {
public:
    /// Every pair coupled.
    static Topology complete(std::size_t n);

    /// Explicit edge list. Pairs are normalized to n < m and sorted; self loops,
    /// out-of-range indices and duplicates are rejected.
    static Topology from_edges(std::size_t n, std::vector<Edge> edges);

    /// rows x cols grid, row-major site numbering. Sites i, j are coupled iff
    /// their grid distance under `metric` is <= range.
    static Topology grid(std::size_t rows, std::size_t cols, double range,
                         DistanceMetric metric = DistanceMetric::euclidean);

    std::size_t size() const noexcept { return n_; }
    std::size_t edge_count() const noexcept { return edges_.size(); }
    std::span<const Edge> edges() const noexcept { return edges_; }
    const std::optional<GridShape>& grid_shape() const noexcept { return grid_; }
    const std::optional<double>& coupling_range() const noexcept { return range_; }
    DistanceMetric metric() const noexcept { return metric_; }

    /// Canonical text form: N, grid, range/metric and the edge list.
    std::string canonical() const;
    /// FNV-1a 64 over canonical().
    std::uint64_t hash() const;

    friend bool operator==(const Topology&, const Topology&) = default;

private:
    std::size_t n_ = 0;
    std::vector<Edge> edges_;
    std::optional<GridShape> grid_;
    std::optional<double> range_;
    DistanceMetric metric_ = DistanceMetric::euclidean;
};

double grid_distance(GridShape shape, std::size_t i, std::size_t j, DistanceMetric metric);

enum class ParamKind : std::uint8_t { alpha, beta, gamma, f_ext, kappa, lambda, chi, chi_hat };

inline constexpr std::array<ParamKind, 8> all_param_kinds{
    ParamKind::alpha, ParamKind::beta,   ParamKind::gamma, ParamKind::f_ext,
    ParamKind::kappa, ParamKind::lambda, ParamKind::chi,   ParamKind::chi_hat};

std::string_view to_string(ParamKind kind);
ParamKind parse_param_kind(std::string_view name);
constexpr bool is_node_kind(ParamKind k) { return static_cast<int>(k) < 4; }

/// One entry theta_i: a kind plus a node index (node kinds) or edge index.
struct ParamIndex {
    ParamKind kind;
    std::size_t site;

    friend bool operator==(const ParamIndex&, const ParamIndex&) = default;
};

/// Flat layout: [alpha | beta | gamma | f_ext] each of length N, then
/// [kappa | lambda | chi | chi_hat] each of length |edges|.
std::size_t param_count(const Topology& topo);
std::size_t flat_index(const Topology& topo, ParamIndex idx);
ParamIndex param_index(const Topology& topo, std::size_t flat);

struct InitValues {
    double alpha = -1.0;
    double beta = 1.0;
    double gamma = 1.0;
    double f_ext = 0.0;
    double kappa = 0.0;
    double lambda = 0.0;
    double chi = 0.0;
    double chi_hat = 0.0;
};

/// One snapshot of every theta_i, stored contiguously in flat order.
class EnergyParams {
public:
    EnergyParams() = default;
    EnergyParams(std::size_t n_nodes, std::size_t n_edges);

    static EnergyParams zeros(const Topology& topo) { return {topo.size(), topo.edge_count()}; }
    static EnergyParams initial(const Topology& topo, const InitValues& init);

    std::size_t node_count() const noexcept { return n_nodes_; }
    std::size_t edge_count() const noexcept { return n_edges_; }
    std::size_t size() const noexcept { return values_.size(); }

    std::span<double> kind(ParamKind k);
    std::span<const double> kind(ParamKind k) const;

    std::span<double> alpha() { return kind(ParamKind::alpha); }
    std::span<double> beta() { return kind(ParamKind::beta); }
    std::span<double> gamma() { return kind(ParamKind::gamma); }
    std::span<double> f_ext() { return kind(ParamKind::f_ext); }
    std::span<double> kappa() { return kind(ParamKind::kappa); }
    std::span<double> lambda() { return kind(ParamKind::lambda); }
    std::span<double> chi() { return kind(ParamKind::chi); }
    std::span<double> chi_hat() { return kind(ParamKind::chi_hat); }
    std::span<const double> alpha() const { return kind(ParamKind::alpha); }
    std::span<const double> beta() const { return kind(ParamKind::beta); }
    std::span<const double> gamma() const { return kind(ParamKind::gamma); }
    std::span<const double> f_ext() const { return kind(ParamKind::f_ext); }
    std::span<const double> kappa() const { return kind(ParamKind::kappa); }
    std::span<const double> lambda() const { return kind(ParamKind::lambda); }
    std::span<const double> chi() const { return kind(ParamKind::chi); }
    std::span<const double> chi_hat() const { return kind(ParamKind::chi_hat); }

    std::span<double> flat() noexcept { return values_; }
    std::span<const double> flat() const noexcept { return values_; }

    double& operator[](ParamIndex idx);
    double operator[](ParamIndex idx) const;

    /// Throws unless sizes match topo, every entry is finite and gamma >= gamma_min.
    void validate(const Topology& topo, double gamma_min = default_gamma_min) const;
    /// gamma_n <- max(gamma_n, gamma_min).
    void clamp_gamma(double gamma_min);

    friend bool operator==(const EnergyParams&, const EnergyParams&) = default;

private:
    std::size_t n_nodes_ = 0;
    std::size_t n_edges_ = 0;
    std::vector<double> values_;
};

double energy_hat(const EnergyParams& params, const Topology& topo, std::span<const double> x);

/// grad_x E_hat written into `grad` (length N).
void energy_gradient(const EnergyParams& params, const Topology& topo, std::span<const double> x,
                     std::span<double> grad);

/// -grad_x E_hat, analytic.
StateVector force_hat(const EnergyParams& params, const Topology& topo, std::span<const double> x);

/// Tr of the Hessian of E_hat in x.
double hessian_trace_hat(const EnergyParams& params, const Topology& topo,
                         std::span<const double> x);

/// Force applied during inference: -grad E = -2 grad E_hat + x.
StateVector total_inference_force(const EnergyParams& params, const Topology& topo,
                                  std::span<const double> x);

/// Allocation-free variant of total_inference_force.
void total_inference_force(const EnergyParams& params, const Topology& topo,
                           std::span<const double> x, std::span<double> out);

struct BasisTerm {
    double value;
    StateVector grad;
    double hess_trace;
};

/// phi_i(x) = dE_hat/dtheta_i, its x-gradient and the trace of its x-Hessian.
BasisTerm basis_eval(ParamIndex idx, const Topology& topo, std::span<const double> x);

/// phi_i(x) for every flat index i at once.
void basis_values(const Topology& topo, std::span<const double> x, std::span<double> out);

}  // namespace pssgm
