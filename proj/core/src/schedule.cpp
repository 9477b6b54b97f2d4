#include "pssgm/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pssgm/text_io.hpp"

namespace pssgm {

// ---------------------------------------------------------------------------
// TimeGrid

TimeGrid TimeGrid::uniform(double tau, std::size_t n_points) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw Error(ErrorKind::invalid_argument, "tau must be > 0");
    if (n_points < 2) throw Error(ErrorKind::invalid_argument, "time grid needs n_points >= 2");
    std::vector<double> t(n_points);
    for (std::size_t k = 0; k < n_points; ++k) {
        t[k] = tau * static_cast<double>(k) / static_cast<double>(n_points - 1);
    }
    t.back() = tau;
    return from_times(std::move(t));
}

TimeGrid TimeGrid::geometric(double tau, std::size_t n_points, double ratio) {
    if (!(ratio > 0.0) || ratio == 1.0) return uniform(tau, n_points);
    if (!(tau > 0.0)) throw Error(ErrorKind::invalid_argument, "tau must be > 0");
    if (n_points < 2) throw Error(ErrorKind::invalid_argument, "time grid needs n_points >= 2");
    std::vector<double> t(n_points);
    const double denom = std::pow(ratio, static_cast<double>(n_points - 1)) - 1.0;
    for (std::size_t k = 0; k < n_points; ++k) {
        t[k] = tau * (std::pow(ratio, static_cast<double>(k)) - 1.0) / denom;
    }
    t.front() = 0.0;
    t.back() = tau;
    return from_times(std::move(t));
}

TimeGrid TimeGrid::from_times(std::vector<double> times) {
    if (times.size() < 2) throw Error(ErrorKind::invalid_argument, "time grid needs n_points >= 2");
    if (times.front() != 0.0) throw Error(ErrorKind::invalid_argument, "time grid must start at 0");
    for (std::size_t k = 1; k < times.size(); ++k) {
        if (!(times[k] > times[k - 1]) || !std::isfinite(times[k])) {
            throw Error(ErrorKind::invalid_argument, "time grid must be strictly increasing");
        }
    }
    TimeGrid g;
    g.times_ = std::move(times);
    return g;
}

// ---------------------------------------------------------------------------
// Schedule

Schedule::Schedule(TimeGrid grid, std::vector<EnergyParams> snapshots, Topology topo, double kbt,
                   double gamma_min)
    : grid_(std::move(grid)),
      snapshots_(std::move(snapshots)),
      topo_(std::move(topo)),
      kbt_(kbt),
      gamma_min_(gamma_min) {
    if (snapshots_.size() != grid_.size()) {
        throw Error(ErrorKind::dimension_mismatch,
                    "schedule has " + std::to_string(snapshots_.size()) + " snapshots for " +
                        std::to_string(grid_.size()) + " time points");
    }
    if (!(kbt_ > 0.0)) throw Error(ErrorKind::invalid_argument, "kbt must be > 0");
    if (!(gamma_min_ > 0.0)) throw Error(ErrorKind::invalid_argument, "gamma_min must be > 0");
    for (const auto& p : snapshots_) p.validate(topo_, gamma_min_);
}

void Schedule::params_at(double t, EnergyParams& out) const {
    const auto& times = grid_.times();
    if (!(t >= 0.0 && t <= times.back())) {
        throw Error(ErrorKind::out_of_range, "t = " + format_double(t) + " outside [0, " +
                                                 format_double(times.back()) + "]");
    }
    auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t hi = std::min<std::size_t>(it - times.begin(), times.size() - 1);
    const std::size_t lo = hi - 1;
    if (t == times[hi]) {
        out = snapshots_[hi];
        return;
    }
    if (t == times[lo]) {
        out = snapshots_[lo];
        return;
    }
    const double w = (t - times[lo]) / (times[hi] - times[lo]);
    const auto a = snapshots_[lo].flat();
    const auto b = snapshots_[hi].flat();
    if (out.size() != a.size()) out = EnergyParams::zeros(topo_);
    auto o = out.flat();
    for (std::size_t i = 0; i < a.size(); ++i) o[i] = (1.0 - w) * a[i] + w * b[i];
}

EnergyParams Schedule::params_at(double t) const {
    EnergyParams out = EnergyParams::zeros(topo_);
    params_at(t, out);
    return out;
}

EnergyParams Schedule::reverse_params_at(double t) const {
    if (!(t >= 0.0 && t <= tau())) {
        throw Error(ErrorKind::out_of_range, "t = " + format_double(t) + " outside [0, tau]");
    }
    return params_at(tau() - t);
}

void Schedule::reverse_params_at(double t, EnergyParams& out) const {
    if (!(t >= 0.0 && t <= tau())) {
        throw Error(ErrorKind::out_of_range, "t = " + format_double(t) + " outside [0, tau]");
    }
    params_at(tau() - t, out);
}

// ---------------------------------------------------------------------------
// File format
//
//   pssgm-schedule
//   format_version 1
//   interpolation linear
//   n_oscillators N
//   grid ROWS COLS | grid none
//   coupling_range R METRIC | coupling_range none
//   edges E
//   n m                      (E lines, lexicographic)
//   tau T
//   n_times NT
//   kbt K
//   gamma_min G
//   times t_0 ... t_{NT-1}
//   snapshot k               (NT blocks, each followed by 8 kind lines)
//   alpha v_0 ... v_{N-1}
//   ...
//   chi_hat v_0 ... v_{E-1}
//   checksum fnv1a64 HEX     (over every byte before this line)

namespace {

constexpr std::string_view magic_line = "pssgm-schedule";

std::string body_of(const Schedule& s) {
    std::ostringstream os;
    os << magic_line << '\n';
    os << "format_version " << schedule_format_version << '\n';
    os << "interpolation linear\n";
    os << s.topology().canonical();
    os << "tau " << format_double(s.tau()) << '\n';
    os << "n_times " << s.grid().size() << '\n';
    os << "kbt " << format_double(s.kbt()) << '\n';
    os << "gamma_min " << format_double(s.gamma_min()) << '\n';
    os << "times";
    for (double t : s.grid().times()) os << ' ' << format_double(t);
    os << '\n';
    for (std::size_t k = 0; k < s.snapshots().size(); ++k) {
        os << "snapshot " << k << '\n';
        for (ParamKind kind : all_param_kinds) {
            os << to_string(kind);
            for (double v : s.snapshots()[k].kind(kind)) os << ' ' << format_double(v);
            os << '\n';
        }
    }
    return os.str();
}

class LineReader {
public:
    explicit LineReader(std::string_view text) : text_(text) {}

    bool done() const { return pos_ >= text_.size(); }

    std::vector<std::string_view> tokens() {
        if (done()) throw Error(ErrorKind::schema_violation, "unexpected end of schedule file");
        auto end = text_.find('\n', pos_);
        if (end == std::string_view::npos) end = text_.size();
        std::string_view line = text_.substr(pos_, end - pos_);
        pos_ = end + 1;
        ++line_no_;
        std::vector<std::string_view> out;
        std::size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && line[i] == ' ') ++i;
            std::size_t j = i;
            while (j < line.size() && line[j] != ' ') ++j;
            if (j > i) out.push_back(line.substr(i, j - i));
            i = j;
        }
        return out;
    }

    std::vector<std::string_view> expect(std::string_view key, std::size_t n_values) {
        auto t = tokens();
        if (t.empty() || t[0] != key) {
            throw Error(ErrorKind::schema_violation,
                        "line " + std::to_string(line_no_) + ": expected '" + std::string(key) + "'");
        }
        if (n_values != npos && t.size() != n_values + 1) {
            throw Error(ErrorKind::schema_violation,
                        "line " + std::to_string(line_no_) + ": '" + std::string(key) + "' expects " +
                            std::to_string(n_values) + " values, got " + std::to_string(t.size() - 1));
        }
        return t;
    }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_no_ = 0;
};

}  // namespace

std::string serialize_schedule(const Schedule& s) {
    std::string body = body_of(s);
    body += "checksum fnv1a64 " + hex64(fnv1a64(body)) + "\n";
    return body;
}

std::uint64_t schedule_checksum(const Schedule& s) { return fnv1a64(body_of(s)); }

Schedule parse_schedule(std::string_view text) {
    {
        LineReader head(text);
        if (head.done() || head.tokens() != std::vector<std::string_view>{magic_line}) {
            throw Error(ErrorKind::schema_violation, "not a schedule file (missing header line)");
        }
        auto v = head.tokens();
        if (v.size() != 2 || v[0] != "format_version") {
            throw Error(ErrorKind::schema_violation, "missing format_version");
        }
        if (v[1] != std::to_string(schedule_format_version)) {
            throw Error(ErrorKind::version_mismatch, "schedule format_version " + std::string(v[1]) +
                                                         ", this build reads " +
                                                         std::to_string(schedule_format_version));
        }
    }

    // Integrity before content: a truncated file never yields a schedule.
    std::string_view trimmed = text;
    if (!trimmed.empty() && trimmed.back() == '\n') trimmed.remove_suffix(1);
    const auto last_nl = trimmed.rfind('\n');
    if (last_nl == std::string_view::npos) {
        throw Error(ErrorKind::checksum_mismatch, "schedule file has no checksum line");
    }
    const std::string_view last = trimmed.substr(last_nl + 1);
    constexpr std::string_view prefix = "checksum fnv1a64 ";
    if (last.substr(0, prefix.size()) != prefix) {
        throw Error(ErrorKind::checksum_mismatch, "schedule file has no checksum line (truncated?)");
    }
    const std::string_view body = text.substr(0, last_nl + 1);
    if (last.substr(prefix.size()) != hex64(fnv1a64(body))) {
        throw Error(ErrorKind::checksum_mismatch, "schedule checksum does not match contents");
    }

    LineReader in(body);
    in.tokens();
    in.tokens();
    if (in.expect("interpolation", 1)[1] != "linear") {
        throw Error(ErrorKind::schema_violation, "unsupported interpolation");
    }
    const std::size_t n = parse_size(in.expect("n_oscillators", 1)[1]);
    std::optional<GridShape> grid;
    {
        auto t = in.expect("grid", LineReader::npos);
        if (t.size() == 3) {
            grid = GridShape{parse_size(t[1]), parse_size(t[2])};
        } else if (!(t.size() == 2 && t[1] == "none")) {
            throw Error(ErrorKind::schema_violation, "malformed grid line");
        }
    }
    std::optional<double> range;
    DistanceMetric metric = DistanceMetric::euclidean;
    {
        auto t = in.expect("coupling_range", LineReader::npos);
        if (t.size() == 3) {
            range = parse_double(t[1]);
            metric = parse_metric(t[2]);
        } else if (!(t.size() == 2 && t[1] == "none")) {
            throw Error(ErrorKind::schema_violation, "malformed coupling_range line");
        }
    }
    const std::size_t n_edges = parse_size(in.expect("edges", 1)[1]);
    std::vector<Edge> edges;
    edges.reserve(n_edges);
    for (std::size_t i = 0; i < n_edges; ++i) {
        auto t = in.tokens();
        if (t.size() != 2) throw Error(ErrorKind::schema_violation, "malformed edge line");
        edges.push_back({parse_size(t[0]), parse_size(t[1])});
    }

    Topology topo;
    if (grid && range) {
        if (grid->rows * grid->cols != n) {
            throw Error(ErrorKind::schema_violation, "grid shape does not match n_oscillators");
        }
        topo = Topology::grid(grid->rows, grid->cols, *range, metric);
        if (!std::equal(edges.begin(), edges.end(), topo.edges().begin(), topo.edges().end())) {
            throw Error(ErrorKind::schema_violation, "edge list disagrees with grid coupling range");
        }
    } else if (grid || range) {
        throw Error(ErrorKind::schema_violation, "grid and coupling_range must be set together");
    } else {
        topo = Topology::from_edges(n, edges);
        if (!std::equal(edges.begin(), edges.end(), topo.edges().begin(), topo.edges().end())) {
            throw Error(ErrorKind::schema_violation, "edge list not in lexicographic order");
        }
    }

    const double tau = parse_double(in.expect("tau", 1)[1]);
    const std::size_t n_times = parse_size(in.expect("n_times", 1)[1]);
    const double kbt = parse_double(in.expect("kbt", 1)[1]);
    const double gamma_min = parse_double(in.expect("gamma_min", 1)[1]);
    std::vector<double> times;
    const auto time_tokens = in.expect("times", n_times);
    for (std::size_t k = 1; k < time_tokens.size(); ++k) times.push_back(parse_double(time_tokens[k]));
    TimeGrid tg = TimeGrid::from_times(std::move(times));
    if (tg.tau() != tau) throw Error(ErrorKind::schema_violation, "tau disagrees with last time point");

    std::vector<EnergyParams> snaps;
    snaps.reserve(n_times);
    for (std::size_t k = 0; k < n_times; ++k) {
        if (parse_size(in.expect("snapshot", 1)[1]) != k) {
            throw Error(ErrorKind::schema_violation, "snapshot blocks out of order");
        }
        EnergyParams p = EnergyParams::zeros(topo);
        for (ParamKind kind : all_param_kinds) {
            auto dst = p.kind(kind);
            auto t = in.expect(to_string(kind), dst.size());
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = parse_double(t[i + 1]);
        }
        snaps.push_back(std::move(p));
    }
    if (!in.done()) throw Error(ErrorKind::schema_violation, "unexpected content after snapshots");

    try {
        return Schedule(std::move(tg), std::move(snaps), std::move(topo), kbt, gamma_min);
    } catch (const Error& e) {
        throw Error(ErrorKind::schema_violation, std::string("invalid schedule contents: ") + e.what());
    }
}

void save_schedule(const Schedule& s, const std::filesystem::path& path) {
    write_file(path, serialize_schedule(s));
}

Schedule load_schedule(const std::filesystem::path& path) { return parse_schedule(read_file(path)); }

}  // namespace pssgm
