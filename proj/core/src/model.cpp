#include "pssgm/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "pssgm/text_io.hpp"

namespace pssgm {

namespace {

void check_dims(const EnergyParams& params, const Topology& topo, std::span<const double> x) {
    if (params.node_count() != topo.size()) {
        throw Error(ErrorKind::dimension_mismatch,
                    "params.node_count = " + std::to_string(params.node_count()) +
                        " but topology has " + std::to_string(topo.size()) + " oscillators");
    }
    if (params.edge_count() != topo.edge_count()) {
        throw Error(ErrorKind::dimension_mismatch,
                    "params.edge_count = " + std::to_string(params.edge_count()) +
                        " but topology has " + std::to_string(topo.edge_count()) + " edges");
    }
    if (x.size() != topo.size()) {
        throw Error(ErrorKind::dimension_mismatch, "x has length " + std::to_string(x.size()) +
                                                       ", expected " + std::to_string(topo.size()));
    }
}

}  // namespace

std::string_view to_string(DistanceMetric metric) {
    switch (metric) {
        case DistanceMetric::euclidean: return "euclidean";
        case DistanceMetric::chebyshev: return "chebyshev";
        case DistanceMetric::manhattan: return "manhattan";
    }
    return "euclidean";
}

DistanceMetric parse_metric(std::string_view name) {
    if (name == "euclidean") return DistanceMetric::euclidean;
    if (name == "chebyshev") return DistanceMetric::chebyshev;
    if (name == "manhattan") return DistanceMetric::manhattan;
    throw Error(ErrorKind::invalid_argument, "unknown distance metric '" + std::string(name) + "'");
}

std::string_view to_string(ParamKind kind) {
    switch (kind) {
        case ParamKind::alpha: return "alpha";
        case ParamKind::beta: return "beta";
        case ParamKind::gamma: return "gamma";
        case ParamKind::f_ext: return "f_ext";
        case ParamKind::kappa: return "kappa";
        case ParamKind::lambda: return "lambda";
        case ParamKind::chi: return "chi";
        case ParamKind::chi_hat: return "chi_hat";
    }
    return "alpha";
}

ParamKind parse_param_kind(std::string_view name) {
    for (ParamKind k : all_param_kinds) {
        if (to_string(k) == name) return k;
    }
    throw Error(ErrorKind::invalid_argument, "unknown parameter kind '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Topology

Topology Topology::complete(std::size_t n) {
    if (n == 0) throw Error(ErrorKind::invalid_argument, "topology needs at least one oscillator");
    Topology t;
    t.n_ = n;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) t.edges_.push_back({i, j});
    }
    return t;
}

Topology Topology::from_edges(std::size_t n, std::vector<Edge> edges) {
    if (n == 0) throw Error(ErrorKind::invalid_argument, "topology needs at least one oscillator");
    for (Edge& e : edges) {
        if (e.n == e.m) {
            throw Error(ErrorKind::invalid_argument, "self loop at site " + std::to_string(e.n));
        }
        if (e.n > e.m) std::swap(e.n, e.m);
        if (e.m >= n) {
            throw Error(ErrorKind::out_of_range, "edge (" + std::to_string(e.n) + ", " +
                                                     std::to_string(e.m) + ") outside N = " +
                                                     std::to_string(n));
        }
    }
    std::sort(edges.begin(), edges.end());
    if (std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
        throw Error(ErrorKind::invalid_argument, "duplicate edge in edge list");
    }
    Topology t;
    t.n_ = n;
    t.edges_ = std::move(edges);
    return t;
}

double grid_distance(GridShape shape, std::size_t i, std::size_t j, DistanceMetric metric) {
    const double dr = std::abs(static_cast<double>(i / shape.cols) - static_cast<double>(j / shape.cols));
    const double dc = std::abs(static_cast<double>(i % shape.cols) - static_cast<double>(j % shape.cols));
    switch (metric) {
        case DistanceMetric::euclidean: return std::sqrt(dr * dr + dc * dc);
        case DistanceMetric::chebyshev: return std::max(dr, dc);
        case DistanceMetric::manhattan: return dr + dc;
    }
    return 0.0;
}

Topology Topology::grid(std::size_t rows, std::size_t cols, double range, DistanceMetric metric) {
    if (rows == 0 || cols == 0) throw Error(ErrorKind::invalid_argument, "grid needs rows, cols >= 1");
    if (!(range >= 0.0) || !std::isfinite(range)) {
        throw Error(ErrorKind::invalid_argument, "coupling range must be finite and >= 0");
    }
    Topology t;
    t.n_ = rows * cols;
    t.grid_ = GridShape{rows, cols};
    t.range_ = range;
    t.metric_ = metric;
    // Small slack so that e.g. range 5 includes the (3, 4) offset exactly.
    const double limit = range + 1e-9;
    for (std::size_t i = 0; i < t.n_; ++i) {
        for (std::size_t j = i + 1; j < t.n_; ++j) {
            if (grid_distance(*t.grid_, i, j, metric) <= limit) t.edges_.push_back({i, j});
        }
    }
    return t;
}

std::string Topology::canonical() const {
    std::ostringstream os;
    os << "n_oscillators " << n_ << '\n';
    if (grid_) {
        os << "grid " << grid_->rows << ' ' << grid_->cols << '\n';
    } else {
        os << "grid none\n";
    }
    if (range_) {
        os << "coupling_range " << format_double(*range_) << ' ' << to_string(metric_) << '\n';
    } else {
        os << "coupling_range none\n";
    }
    os << "edges " << edges_.size() << '\n';
    for (const Edge& e : edges_) os << e.n << ' ' << e.m << '\n';
    return os.str();
}

std::uint64_t Topology::hash() const { return fnv1a64(canonical()); }

// ---------------------------------------------------------------------------
// Parameter layout

std::size_t param_count(const Topology& topo) { return 4 * topo.size() + 4 * topo.edge_count(); }

std::size_t flat_index(const Topology& topo, ParamIndex idx) {
    const auto k = static_cast<std::size_t>(idx.kind);
    if (is_node_kind(idx.kind)) {
        if (idx.site >= topo.size()) {
            throw Error(ErrorKind::out_of_range, std::string(to_string(idx.kind)) + " index " +
                                                     std::to_string(idx.site) + " >= N = " +
                                                     std::to_string(topo.size()));
        }
        return k * topo.size() + idx.site;
    }
    if (idx.site >= topo.edge_count()) {
        throw Error(ErrorKind::out_of_range, std::string(to_string(idx.kind)) + " index " +
                                                 std::to_string(idx.site) + " >= |edges| = " +
                                                 std::to_string(topo.edge_count()));
    }
    return 4 * topo.size() + (k - 4) * topo.edge_count() + idx.site;
}

ParamIndex param_index(const Topology& topo, std::size_t flat) {
    const std::size_t n = topo.size();
    const std::size_t e = topo.edge_count();
    if (flat < 4 * n) return {static_cast<ParamKind>(flat / n), flat % n};
    flat -= 4 * n;
    if (flat >= 4 * e) throw Error(ErrorKind::out_of_range, "flat parameter index out of range");
    return {static_cast<ParamKind>(4 + flat / e), flat % e};
}

EnergyParams::EnergyParams(std::size_t n_nodes, std::size_t n_edges)
    : n_nodes_(n_nodes), n_edges_(n_edges), values_(4 * n_nodes + 4 * n_edges, 0.0) {}

EnergyParams EnergyParams::initial(const Topology& topo, const InitValues& init) {
    EnergyParams p = zeros(topo);
    const std::array<double, 8> v{init.alpha, init.beta,   init.gamma, init.f_ext,
                                  init.kappa, init.lambda, init.chi,   init.chi_hat};
    for (ParamKind k : all_param_kinds) {
        auto s = p.kind(k);
        std::fill(s.begin(), s.end(), v[static_cast<std::size_t>(k)]);
    }
    return p;
}

std::span<double> EnergyParams::kind(ParamKind k) {
    const auto i = static_cast<std::size_t>(k);
    if (is_node_kind(k)) return std::span<double>(values_).subspan(i * n_nodes_, n_nodes_);
    return std::span<double>(values_).subspan(4 * n_nodes_ + (i - 4) * n_edges_, n_edges_);
}

std::span<const double> EnergyParams::kind(ParamKind k) const {
    const auto i = static_cast<std::size_t>(k);
    if (is_node_kind(k)) return std::span<const double>(values_).subspan(i * n_nodes_, n_nodes_);
    return std::span<const double>(values_).subspan(4 * n_nodes_ + (i - 4) * n_edges_, n_edges_);
}

double& EnergyParams::operator[](ParamIndex idx) {
    auto s = kind(idx.kind);
    if (idx.site >= s.size()) throw Error(ErrorKind::out_of_range, "parameter site out of range");
    return s[idx.site];
}

double EnergyParams::operator[](ParamIndex idx) const {
    auto s = kind(idx.kind);
    if (idx.site >= s.size()) throw Error(ErrorKind::out_of_range, "parameter site out of range");
    return s[idx.site];
}

void EnergyParams::validate(const Topology& topo, double gamma_min) const {
    if (n_nodes_ != topo.size() || n_edges_ != topo.edge_count()) {
        throw Error(ErrorKind::dimension_mismatch, "parameter block does not match topology");
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            const ParamIndex idx = param_index(topo, i);
            throw Error(ErrorKind::invalid_argument, std::string(to_string(idx.kind)) + "[" +
                                                         std::to_string(idx.site) + "] is not finite");
        }
    }
    const auto g = gamma();
    for (std::size_t n = 0; n < g.size(); ++n) {
        if (g[n] < gamma_min) {
            throw Error(ErrorKind::invalid_argument, "gamma[" + std::to_string(n) + "] = " +
                                                         format_double(g[n]) + " < gamma_min");
        }
    }
}

void EnergyParams::clamp_gamma(double gamma_min) {
    for (double& g : gamma()) g = std::max(g, gamma_min);
}

// ---------------------------------------------------------------------------
// Energy and derivatives

double energy_hat(const EnergyParams& params, const Topology& topo, std::span<const double> x) {
    check_dims(params, topo, x);
    const auto a = params.alpha(), b = params.beta(), g = params.gamma(), f = params.f_ext();
    double e = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double x2 = x[n] * x[n];
        e += x2 * (a[n] / 2.0 + x2 * (b[n] / 4.0 + x2 * g[n] / 6.0)) + f[n] * x[n];
    }
    const auto k = params.kappa(), l = params.lambda(), c = params.chi(), h = params.chi_hat();
    const auto edges = topo.edges();
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const double xn = x[edges[i].n], xm = x[edges[i].m];
        const double d2 = (xn - xm) * (xn - xm);
        e += d2 * (k[i] / 2.0 + l[i] * d2 / 4.0) + c[i] * xn * xm * xm + h[i] * xn * xn * xm;
    }
    return e;
}

void energy_gradient(const EnergyParams& params, const Topology& topo, std::span<const double> x,
                     std::span<double> grad) {
    check_dims(params, topo, x);
    const auto a = params.alpha(), b = params.beta(), g = params.gamma(), f = params.f_ext();
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double xn = x[n], x2 = xn * xn;
        grad[n] = xn * (a[n] + x2 * (b[n] + x2 * g[n])) + f[n];
    }
    const auto k = params.kappa(), l = params.lambda(), c = params.chi(), h = params.chi_hat();
    const auto edges = topo.edges();
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const std::size_t n = edges[i].n, m = edges[i].m;
        const double xn = x[n], xm = x[m];
        const double d = xn - xm;
        const double sym = d * (k[i] + l[i] * d * d);
        grad[n] += sym + c[i] * xm * xm + 2.0 * h[i] * xn * xm;
        grad[m] += -sym + 2.0 * c[i] * xn * xm + h[i] * xn * xn;
    }
}

StateVector force_hat(const EnergyParams& params, const Topology& topo, std::span<const double> x) {
    StateVector out(x.size());
    energy_gradient(params, topo, x, out);
    for (double& v : out) v = -v;
    return out;
}

double hessian_trace_hat(const EnergyParams& params, const Topology& topo,
                         std::span<const double> x) {
    check_dims(params, topo, x);
    const auto a = params.alpha(), b = params.beta(), g = params.gamma();
    double tr = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double x2 = x[n] * x[n];
        tr += a[n] + x2 * (3.0 * b[n] + 5.0 * g[n] * x2);
    }
    const auto k = params.kappa(), l = params.lambda(), c = params.chi(), h = params.chi_hat();
    const auto edges = topo.edges();
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const double xn = x[edges[i].n], xm = x[edges[i].m];
        const double d = xn - xm;
        tr += 2.0 * k[i] + 6.0 * l[i] * d * d + 2.0 * c[i] * xn + 2.0 * h[i] * xm;
    }
    return tr;
}

void total_inference_force(const EnergyParams& params, const Topology& topo,
                           std::span<const double> x, std::span<double> out) {
    energy_gradient(params, topo, x, out);
    for (std::size_t n = 0; n < x.size(); ++n) out[n] = x[n] - 2.0 * out[n];
}

StateVector total_inference_force(const EnergyParams& params, const Topology& topo,
                                  std::span<const double> x) {
    StateVector out(x.size());
    total_inference_force(params, topo, x, out);
    return out;
}

BasisTerm basis_eval(ParamIndex idx, const Topology& topo, std::span<const double> x) {
    if (x.size() != topo.size()) {
        throw Error(ErrorKind::dimension_mismatch, "x has length " + std::to_string(x.size()) +
                                                       ", expected " + std::to_string(topo.size()));
    }
    flat_index(topo, idx);  // range check
    BasisTerm t{0.0, StateVector(x.size(), 0.0), 0.0};
    if (is_node_kind(idx.kind)) {
        const std::size_t n = idx.site;
        const double v = x[n], v2 = v * v;
        switch (idx.kind) {
            case ParamKind::alpha:
                t = {v2 / 2.0, std::move(t.grad), 1.0};
                t.grad[n] = v;
                break;
            case ParamKind::beta:
                t = {v2 * v2 / 4.0, std::move(t.grad), 3.0 * v2};
                t.grad[n] = v2 * v;
                break;
            case ParamKind::gamma:
                t = {v2 * v2 * v2 / 6.0, std::move(t.grad), 5.0 * v2 * v2};
                t.grad[n] = v2 * v2 * v;
                break;
            default:  // f_ext
                t = {v, std::move(t.grad), 0.0};
                t.grad[n] = 1.0;
                break;
        }
        return t;
    }
    const Edge e = topo.edges()[idx.site];
    const double xn = x[e.n], xm = x[e.m], d = xn - xm;
    switch (idx.kind) {
        case ParamKind::kappa:
            t.value = d * d / 2.0;
            t.grad[e.n] = d;
            t.grad[e.m] = -d;
            t.hess_trace = 2.0;
            break;
        case ParamKind::lambda:
            t.value = d * d * d * d / 4.0;
            t.grad[e.n] = d * d * d;
            t.grad[e.m] = -d * d * d;
            t.hess_trace = 6.0 * d * d;
            break;
        case ParamKind::chi:
            t.value = xn * xm * xm;
            t.grad[e.n] = xm * xm;
            t.grad[e.m] = 2.0 * xn * xm;
            t.hess_trace = 2.0 * xn;
            break;
        default:  // chi_hat
            t.value = xn * xn * xm;
            t.grad[e.n] = 2.0 * xn * xm;
            t.grad[e.m] = xn * xn;
            t.hess_trace = 2.0 * xm;
            break;
    }
    return t;
}

void basis_values(const Topology& topo, std::span<const double> x, std::span<double> out) {
    const std::size_t N = topo.size(), E = topo.edge_count();
    if (x.size() != N || out.size() != param_count(topo)) {
        throw Error(ErrorKind::dimension_mismatch, "basis_values buffer sizes do not match topology");
    }
    for (std::size_t n = 0; n < N; ++n) {
        const double v = x[n], v2 = v * v;
        out[n] = v2 / 2.0;
        out[N + n] = v2 * v2 / 4.0;
        out[2 * N + n] = v2 * v2 * v2 / 6.0;
        out[3 * N + n] = v;
    }
    const auto edges = topo.edges();
    double* base = out.data() + 4 * N;
    for (std::size_t i = 0; i < E; ++i) {
        const double xn = x[edges[i].n], xm = x[edges[i].m], d2 = (xn - xm) * (xn - xm);
        base[i] = d2 / 2.0;
        base[E + i] = d2 * d2 / 4.0;
        base[2 * E + i] = xn * xm * xm;
        base[3 * E + i] = xn * xn * xm;
    }
}

}  // namespace pssgm
