#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pssgm/data.hpp"
#include "pssgm/dynamics.hpp"
#include "pssgm/learning.hpp"

namespace pssgm {

// ---------------------------------------------------------------------------
// Mode recovery

struct ModeReport {
    std::string sampler;  ///< "SGM" or "ES"
    std::vector<double> fractions;
    std::vector<double> target;
    std::vector<double> abs_error;
    std::vector<std::size_t> counts;
};

/// Assigns each sample to the component with the largest posterior weight.
ModeReport mode_weights(const SampleMatrix& samples, const MixtureSpec& spec, std::string sampler = "SGM");

std::string mode_report_csv(const ModeReport& report);

// ---------------------------------------------------------------------------
// Learned energy landscape

struct GridRange {
    double lo;
    double hi;
};

struct EnergyGrid {
    GridRange x_range, y_range;
    std::size_t nx = 0, ny = 0;
    /// Row-major over (iy, ix).
    std::vector<double> energy;
    std::vector<double> density;
    double kbt = 0.0;
    /// log Z with Z the trapezoidal integral of exp(-E_hat / kbt).
    double log_z = 0.0;

    double x(std::size_t ix) const;
    double y(std::size_t iy) const;
    /// Trapezoid-weighted sum of density (1 up to rounding).
    double total_mass() const;
};

/// Boltzmann view of E_hat(theta) on a 2-oscillator network.
EnergyGrid energy_grid(const EnergyParams& params, const Topology& topo, double kbt, GridRange xr, GridRange yr,
                       std::size_t resolution);
/// Same at schedule time t (theta(0) is the end state of generation).
EnergyGrid energy_grid(const Schedule& s, double t, GridRange xr, GridRange yr, std::size_t resolution);
/// Slice for N > 2: coordinates (axis_x, axis_y) vary, the rest stay at `base`.
EnergyGrid energy_grid_slice(const EnergyParams& params, const Topology& topo, double kbt,
                             std::array<std::size_t, 2> axes, std::span<const double> base, GridRange xr,
                             GridRange yr, std::size_t resolution);

std::string energy_grid_csv(const EnergyGrid& grid);

// ---------------------------------------------------------------------------
// Marginals

struct Histogram {
    double lo = 0.0;
    double width = 0.0;
    std::vector<std::size_t> counts;
    std::vector<double> density;
    /// Exact mixture marginal at bin centers (empty without a spec).
    std::vector<double> marginal;

    double center(std::size_t i) const { return lo + (static_cast<double>(i) + 0.5) * width; }
};

/// Density-normalized histogram of one coordinate. The range covers every
/// sample (and +-4 sd of each component when a spec is given).
Histogram marginal_histogram(const SampleMatrix& samples, std::size_t axis, std::size_t bins,
                             const MixtureSpec* spec = nullptr);

std::string histogram_csv(const Histogram& h);

// ---------------------------------------------------------------------------
// Images

struct GrayImage {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> pixels;
};

/// Tiles samples (rows x cols each) on a near-square sheet with 1-pixel
/// separators, mapping displacements back to gray levels through `map`.
GrayImage image_sheet(const SampleMatrix& samples, std::size_t rows, std::size_t cols,
                      const DisplacementMap& map, std::size_t tiles_per_row = 0);

/// Binary portable graymap (P5).
std::string to_pgm(const GrayImage& image);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

// ---------------------------------------------------------------------------
// MNIST fidelity score

struct FidelityReference {
    SampleMatrix train;
    std::vector<int> labels;
    std::vector<int> classes;
    SampleMatrix centroids;
    /// 95th percentile of per-pixel nearest-neighbour distances inside `train`.
    double threshold = 0.0;
    /// Samples are binarized at this midpoint before scoring when set.
    std::optional<DisplacementMap> binarize_with;
};

FidelityReference make_fidelity_reference(const Dataset& train, double percentile = 0.95);

struct FidelityReport {
    /// Fraction of samples whose nearest centroid agrees with the class of their
    /// nearest training image and whose per-pixel distance is within threshold.
    double score = 0.0;
    double mean_min_distance = 0.0;
    std::vector<double> class_fractions;
    std::size_t n_samples = 0;
};

FidelityReport fidelity_score(const SampleMatrix& samples, const FidelityReference& ref);

/// RMS distance between two equally sized vectors.
double per_pixel_distance(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Coupling-range ablation

struct AblationConfig {
    std::size_t rows = 12;
    std::size_t cols = 12;
    DistanceMetric metric = DistanceMetric::euclidean;
    TrainConfig train;
    LearningRule rule = LearningRule::force_matching;
    CD1Config cd1;
    /// 0 selects tau / 800.
    double dt = 0.0;
    ReverseOptions reverse;
    std::size_t n_samples = 200;
    std::uint64_t seed = 1;
    /// When set, image sheets and schedules are written here per range.
    std::optional<std::filesystem::path> out_dir;
};

struct AblationRow {
    double range;
    std::size_t edges;
    FidelityReport fidelity;
    std::uint64_t schedule_checksum;
};

/// Train, sample and score one topology with the ablation's seeds.
AblationRow evaluate_topology(const AblationConfig& cfg, const Dataset& data, const Topology& topo,
                              const FidelityReference& ref, double range_tag, SampleMatrix* samples = nullptr);

std::vector<AblationRow> ablation_run(const AblationConfig& cfg, const Dataset& data,
                                      std::span<const double> ranges);

std::string ablation_csv(std::span<const AblationRow> rows);

}  // namespace pssgm
