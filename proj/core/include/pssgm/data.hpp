#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pssgm/rng.hpp"
#include "pssgm/samples.hpp"

namespace pssgm {

// ---------------------------------------------------------------------------
// Gaussian mixtures

struct MixtureComponent {
    double weight;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// Finite Gaussian mixture. Construction validates weights (nonnegative, sum 1
/// within 1e-12) and that every covariance is symmetric positive definite.
class MixtureSpec {
public:
    explicit MixtureSpec(std::vector<MixtureComponent> components);

    std::size_t size() const noexcept { return components_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    const MixtureComponent& operator[](std::size_t i) const { return components_[i]; }
    const std::vector<MixtureComponent>& components() const noexcept { return components_; }

    /// Lower Cholesky factor of component i's covariance.
    const Eigen::MatrixXd& cholesky(std::size_t i) const { return chol_[i]; }

    /// Log of w_i N(x | mu_i, Sigma_i).
    double component_log_density(std::size_t i, std::span<const double> x) const;

private:
    std::size_t dim_ = 0;
    std::vector<MixtureComponent> components_;
    std::vector<Eigen::MatrixXd> chol_;
    std::vector<double> log_norm_;
};

/// Two-mode 2D target: w = (0.65, 0.35), mu_1 = (-0.55, -0.20),
/// mu_2 = (0.55, 0.30), Sigma = 0.012 I.
MixtureSpec default_mixture();

/// m draws: component by categorical(w), then mu + L z.
SampleMatrix mixture_sample(const MixtureSpec& spec, std::size_t m, const NoiseSource& noise);
/// Same, also reporting the component each draw came from.
SampleMatrix mixture_sample(const MixtureSpec& spec, std::size_t m, const NoiseSource& noise,
                            std::vector<std::size_t>* components);

double mixture_density(const MixtureSpec& spec, std::span<const double> x);
/// Density of the mixture's marginal along one coordinate axis.
double mixture_marginal(const MixtureSpec& spec, std::size_t axis, double x);

// ---------------------------------------------------------------------------
// IDX container (MNIST)

inline constexpr std::uint32_t idx_images_magic = 0x00000803;
inline constexpr std::uint32_t idx_labels_magic = 0x00000801;

struct IdxFile {
    std::uint32_t magic = 0;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> payload;

    std::size_t count() const { return dims.empty() ? 0 : dims[0]; }
    friend bool operator==(const IdxFile&, const IdxFile&) = default;
};

/// Parses unsigned-byte IDX data. `expected_magic` 0 accepts either images or labels.
IdxFile parse_idx(std::span<const std::uint8_t> bytes, std::uint32_t expected_magic = 0,
                  const std::string& name = "<memory>");
IdxFile load_idx(const std::filesystem::path& path, std::uint32_t expected_magic = 0);
std::vector<std::uint8_t> serialize_idx(const IdxFile& idx);

// ---------------------------------------------------------------------------
// MNIST preprocessing

/// Affine pixel <-> displacement map: x = lo + (hi - lo) * pixel / 255.
/// The default amplitude is the minimum location of -x^2/2 + x^4/4 + x^6/6.
struct DisplacementMap {
    double lo = -0.786151377757423;
    double hi = 0.786151377757423;

    double to_displacement(double pixel) const { return lo + (hi - lo) * pixel / 255.0; }
    double to_pixel(double x) const { return (x - lo) / (hi - lo) * 255.0; }
    double midpoint() const { return 0.5 * (lo + hi); }
};

struct Dataset {
    SampleMatrix samples;
    /// Class label per row; empty when the source has no labels.
    std::vector<int> labels;
    std::string source;
    /// Preprocessing record, e.g. "crop=24 pool=2 lo=... hi=...".
    std::string preprocessing;
    DisplacementMap map;
    bool binarized = false;
};

struct MnistOptions {
    std::vector<int> classes{0, 1};
    std::size_t side = 12;
    DisplacementMap map;
    bool binarize = true;
    /// 0 = keep every matching image.
    std::size_t max_images = 0;
};

/// Filters by label, center-crops to pool*side (pool = floor(rows / side)),
/// average-pools pool x pool blocks and maps pixels to displacements.
/// Rows are flattened row-major to match Topology::grid numbering.
Dataset mnist_prepare(const IdxFile& images, const IdxFile& labels, const MnistOptions& options);

/// Area-average a rows x cols byte image to side x side (row-major output in [0, 255]).
std::vector<double> downsample_image(std::span<const std::uint8_t> image, std::size_t rows,
                                     std::size_t cols, std::size_t side);

/// Entries >= threshold go to map.hi, others to map.lo.
SampleMatrix binarize(const SampleMatrix& samples, double threshold, const DisplacementMap& map);

/// Dataset file (CSV samples) plus JSON sidecar with labels and preprocessing.
void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace pssgm
