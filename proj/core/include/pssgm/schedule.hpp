#pragma once

// Time-discretized driving protocol theta(t_0..t_{Nt-1}) with componentwise
// linear interpolation between knots.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pssgm/model.hpp"

namespace pssgm {

enum class GridSpacing { uniform, geometric };

class TimeGrid {
public:
    /// t_k = tau * k / (n - 1).
    static TimeGrid uniform(double tau, std::size_t n_points);
    /// Steps grow by `ratio` each knot: t_k = tau * (ratio^k - 1) / (ratio^(n-1) - 1).
    static TimeGrid geometric(double tau, std::size_t n_points, double ratio);
    /// Validates strict monotonicity, times[0] == 0 and n >= 2.
    static TimeGrid from_times(std::vector<double> times);

    double tau() const noexcept { return times_.back(); }
    std::size_t size() const noexcept { return times_.size(); }
    const std::vector<double>& times() const noexcept { return times_; }
    double operator[](std::size_t k) const { return times_[k]; }

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

private:
    std::vector<double> times_;
};

class Schedule {
public:
    Schedule(TimeGrid grid, std::vector<EnergyParams> snapshots, Topology topo, double kbt,
             double gamma_min = default_gamma_min);

    const TimeGrid& grid() const noexcept { return grid_; }
    const std::vector<EnergyParams>& snapshots() const noexcept { return snapshots_; }
    const Topology& topology() const noexcept { return topo_; }
    double kbt() const noexcept { return kbt_; }
    double gamma_min() const noexcept { return gamma_min_; }
    double tau() const noexcept { return grid_.tau(); }

    /// Linear interpolation; exactly snapshots[k] at t == times[k].
    EnergyParams params_at(double t) const;
    /// Allocation-free variant; `out` must already be sized for the topology.
    void params_at(double t, EnergyParams& out) const;

    /// params_at(tau - t): the protocol played backwards at inference.
    EnergyParams reverse_params_at(double t) const;
    void reverse_params_at(double t, EnergyParams& out) const;

    friend bool operator==(const Schedule&, const Schedule&) = default;

private:
    TimeGrid grid_;
    std::vector<EnergyParams> snapshots_;
    Topology topo_;
    double kbt_;
    double gamma_min_;
};

inline constexpr int schedule_format_version = 1;

/// Canonical text form, including the trailing checksum line.
std::string serialize_schedule(const Schedule& s);
Schedule parse_schedule(std::string_view text);

void save_schedule(const Schedule& s, const std::filesystem::path& path);
Schedule load_schedule(const std::filesystem::path& path);

/// Checksum stored in the file's last line (FNV-1a 64 of everything before it).
std::uint64_t schedule_checksum(const Schedule& s);

}  // namespace pssgm
