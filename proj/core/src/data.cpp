#include "pssgm/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "pssgm/text_io.hpp"

namespace pssgm {

// ---------------------------------------------------------------------------
// Mixtures

MixtureSpec::MixtureSpec(std::vector<MixtureComponent> components) : components_(std::move(components)) {
    if (components_.empty()) throw Error(ErrorKind::invalid_argument, "mixture needs >= 1 component");
    dim_ = static_cast<std::size_t>(components_[0].mean.size());
    if (dim_ == 0) throw Error(ErrorKind::invalid_argument, "mixture dimension must be >= 1");
    double wsum = 0.0;
    for (std::size_t i = 0; i < components_.size(); ++i) {
        const auto& c = components_[i];
        if (!(c.weight >= 0.0)) throw Error(ErrorKind::invalid_argument, "mixture weights must be >= 0");
        wsum += c.weight;
        if (static_cast<std::size_t>(c.mean.size()) != dim_ || static_cast<std::size_t>(c.cov.rows()) != dim_ ||
            static_cast<std::size_t>(c.cov.cols()) != dim_) {
            throw Error(ErrorKind::dimension_mismatch, "component " + std::to_string(i) + " has inconsistent dimensions");
        }
        if (!c.cov.isApprox(c.cov.transpose(), 1e-12)) {
            throw Error(ErrorKind::decomposition, "covariance " + std::to_string(i) + " is not symmetric");
        }
        Eigen::LLT<Eigen::MatrixXd> llt(c.cov);
        if (llt.info() != Eigen::Success) {
            throw Error(ErrorKind::decomposition, "covariance " + std::to_string(i) + " is not positive definite");
        }
        Eigen::MatrixXd L = llt.matrixL();
        double logdet = 0.0;
        for (Eigen::Index k = 0; k < L.rows(); ++k) logdet += 2.0 * std::log(L(k, k));
        log_norm_.push_back(-0.5 * (static_cast<double>(dim_) * std::log(2.0 * std::numbers::pi) + logdet));
        chol_.push_back(std::move(L));
    }
    if (std::abs(wsum - 1.0) > 1e-12) {
        throw Error(ErrorKind::invalid_argument, "mixture weights sum to " + format_double(wsum) + ", not 1");
    }
}

double MixtureSpec::component_log_density(std::size_t i, std::span<const double> x) const {
    if (x.size() != dim_) throw Error(ErrorKind::dimension_mismatch, "point dimension differs from mixture");
    const auto& c = components_[i];
    Eigen::VectorXd diff = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(dim_)) - c.mean;
    Eigen::VectorXd z = chol_[i].triangularView<Eigen::Lower>().solve(diff);
    return std::log(c.weight) + log_norm_[i] - 0.5 * z.squaredNorm();
}

MixtureSpec default_mixture() {
    const Eigen::MatrixXd cov = 0.012 * Eigen::MatrixXd::Identity(2, 2);
    return MixtureSpec({
        {0.65, Eigen::Vector2d(-0.55, -0.20), cov},
        {0.35, Eigen::Vector2d(0.55, 0.30), cov},
    });
}

SampleMatrix mixture_sample(const MixtureSpec& spec, std::size_t m, const NoiseSource& noise,
                            std::vector<std::size_t>* components) {
    if (m == 0) throw Error(ErrorKind::invalid_argument, "mixture_sample needs m >= 1");
    std::vector<double> w;
    for (const auto& c : spec.components()) w.push_back(c.weight);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    RandomStream rng = noise.open();
    const std::size_t d = spec.dim();
    SampleMatrix out(m, d);
    Eigen::VectorXd z(static_cast<Eigen::Index>(d));
    if (components) components->assign(m, 0);
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t k = pick(rng.engine());
        for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.normal();
        const Eigen::VectorXd x = spec[k].mean + spec.cholesky(k) * z;
        for (std::size_t j = 0; j < d; ++j) out(i, j) = x[static_cast<Eigen::Index>(j)];
        if (components) (*components)[i] = k;
    }
    return out;
}

SampleMatrix mixture_sample(const MixtureSpec& spec, std::size_t m, const NoiseSource& noise) {
    return mixture_sample(spec, m, noise, nullptr);
}

double mixture_density(const MixtureSpec& spec, std::span<const double> x) {
    double p = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        if (spec[i].weight > 0.0) p += std::exp(spec.component_log_density(i, x));
    }
    return p;
}

double mixture_marginal(const MixtureSpec& spec, std::size_t axis, double x) {
    if (axis >= spec.dim()) throw Error(ErrorKind::out_of_range, "marginal axis out of range");
    const auto a = static_cast<Eigen::Index>(axis);
    double p = 0.0;
    for (const auto& c : spec.components()) {
        const double var = c.cov(a, a);
        const double z = x - c.mean[a];
        p += c.weight * std::exp(-0.5 * z * z / var) / std::sqrt(2.0 * std::numbers::pi * var);
    }
    return p;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t off) {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
           (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

constexpr std::uint64_t idx_max_payload = std::uint64_t{1} << 36;

}  // namespace

IdxFile parse_idx(std::span<const std::uint8_t> bytes, std::uint32_t expected_magic, const std::string& name) {
    if (bytes.size() < 4) throw Error(ErrorKind::truncated, name + ": file shorter than the IDX magic");
    IdxFile idx;
    idx.magic = read_be32(bytes, 0);
    const bool known = idx.magic == idx_images_magic || idx.magic == idx_labels_magic;
    if (!known || (expected_magic != 0 && idx.magic != expected_magic)) {
        throw Error(ErrorKind::bad_magic, name + ": magic 0x" + hex64(idx.magic).substr(8) +
                                              (expected_magic ? ", expected 0x" + hex64(expected_magic).substr(8)
                                                              : std::string(", not an unsigned-byte IDX file")));
    }
    const std::size_t ndims = idx.magic & 0xffu;
    const std::size_t header = 4 + 4 * ndims;
    if (bytes.size() < header) {
        throw Error(ErrorKind::truncated, name + ": header needs " + std::to_string(header) + " bytes, have " +
                                              std::to_string(bytes.size()));
    }
    std::uint64_t total = 1;
    for (std::size_t i = 0; i < ndims; ++i) {
        const std::uint32_t d = read_be32(bytes, 4 + 4 * i);
        idx.dims.push_back(d);
        if (d != 0 && total > idx_max_payload / d) {
            throw Error(ErrorKind::dim_overflow, name + ": dimension product exceeds " +
                                                    std::to_string(idx_max_payload) + " bytes");
        }
        total *= d;
    }
    const std::uint64_t have = bytes.size() - header;
    if (have < total) {
        throw Error(ErrorKind::truncated, name + ": payload has " + std::to_string(have) + " bytes, dims need " +
                                              std::to_string(total));
    }
    if (have > total) {
        throw Error(ErrorKind::trailing_bytes, name + ": " + std::to_string(have - total) +
                                                   " bytes after the declared payload");
    }
    idx.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
    return idx;
}

IdxFile load_idx(const std::filesystem::path& path, std::uint32_t expected_magic) {
    const std::string raw = read_file(path);
    return parse_idx({reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()}, expected_magic,
                     path.string());
}

std::vector<std::uint8_t> serialize_idx(const IdxFile& idx) {
    std::vector<std::uint8_t> out;
    out.reserve(4 + 4 * idx.dims.size() + idx.payload.size());
    write_be32(out, idx.magic);
    for (auto d : idx.dims) write_be32(out, d);
    out.insert(out.end(), idx.payload.begin(), idx.payload.end());
    return out;
}

// ---------------------------------------------------------------------------
// MNIST

std::vector<double> downsample_image(std::span<const std::uint8_t> image, std::size_t rows,
                                     std::size_t cols, std::size_t side) {
    if (side == 0 || side > rows || side > cols) {
        throw Error(ErrorKind::invalid_argument, "side must be in [1, min(rows, cols)]");
    }
    const std::size_t pool = std::min(rows, cols) / side;
    const std::size_t crop = pool * side;
    const std::size_t r0 = (rows - crop) / 2, c0 = (cols - crop) / 2;
    std::vector<double> out(side * side, 0.0);
    const double inv = 1.0 / static_cast<double>(pool * pool);
    for (std::size_t i = 0; i < side; ++i) {
        for (std::size_t j = 0; j < side; ++j) {
            double s = 0.0;
            for (std::size_t a = 0; a < pool; ++a) {
                for (std::size_t b = 0; b < pool; ++b) {
                    s += image[(r0 + i * pool + a) * cols + (c0 + j * pool + b)];
                }
            }
            out[i * side + j] = s * inv;
        }
    }
    return out;
}

Dataset mnist_prepare(const IdxFile& images, const IdxFile& labels, const MnistOptions& options) {
    if (images.magic != idx_images_magic || images.dims.size() != 3) {
        throw Error(ErrorKind::bad_magic, "images file is not a 3-d IDX image file");
    }
    if (labels.magic != idx_labels_magic || labels.dims.size() != 1) {
        throw Error(ErrorKind::bad_magic, "labels file is not a 1-d IDX label file");
    }
    if (images.dims[0] != labels.dims[0]) {
        throw Error(ErrorKind::count_mismatch, std::to_string(images.dims[0]) + " images but " +
                                                   std::to_string(labels.dims[0]) + " labels");
    }
    if (!(options.map.hi > options.map.lo)) {
        throw Error(ErrorKind::invalid_argument, "displacement map needs hi > lo");
    }
    const std::size_t rows = images.dims[1], cols = images.dims[2];
    const std::size_t pixels = rows * cols;
    const std::size_t pool = std::min(rows, cols) / std::max<std::size_t>(options.side, 1);

    Dataset ds;
    ds.map = options.map;
    ds.binarized = options.binarize;
    ds.source = "mnist";
    ds.preprocessing = "crop=" + std::to_string(pool * options.side) + " pool=" + std::to_string(pool) +
                       " side=" + std::to_string(options.side) + " lo=" + format_double(options.map.lo) +
                       " hi=" + format_double(options.map.hi) + (options.binarize ? " binarized" : "");
    ds.samples = SampleMatrix(0, options.side * options.side);
    for (std::size_t i = 0; i < images.dims[0]; ++i) {
        const int label = labels.payload[i];
        if (std::find(options.classes.begin(), options.classes.end(), label) == options.classes.end()) continue;
        auto img = std::span<const std::uint8_t>(images.payload).subspan(i * pixels, pixels);
        std::vector<double> px = downsample_image(img, rows, cols, options.side);
        for (double& v : px) v = options.map.to_displacement(v);
        ds.samples.push_back(px);
        ds.labels.push_back(label);
        if (options.max_images && ds.labels.size() >= options.max_images) break;
    }
    if (options.binarize) ds.samples = binarize(ds.samples, options.map.midpoint(), options.map);
    return ds;
}

SampleMatrix binarize(const SampleMatrix& samples, double threshold, const DisplacementMap& map) {
    SampleMatrix out = samples;
    for (double& v : out.data()) v = v >= threshold ? map.hi : map.lo;
    return out;
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
    write_samples_csv(path, data.samples);
    nlohmann::ordered_json meta;
    meta["source"] = data.source;
    meta["preprocessing"] = data.preprocessing;
    meta["rows"] = data.samples.rows();
    meta["dim"] = data.samples.dim();
    meta["x_lo"] = data.map.lo;
    meta["x_hi"] = data.map.hi;
    meta["binarized"] = data.binarized;
    meta["labels"] = data.labels;
    write_file(sidecar_path(path), meta.dump(2) + "\n");
}

Dataset read_dataset(const std::filesystem::path& path) {
    Dataset ds;
    ds.samples = read_samples_csv(path);
    const auto side = sidecar_path(path);
    if (std::filesystem::exists(side)) {
        try {
            const auto meta = nlohmann::json::parse(read_file(side));
            ds.source = meta.value("source", "");
            ds.preprocessing = meta.value("preprocessing", "");
            ds.map.lo = meta.value("x_lo", ds.map.lo);
            ds.map.hi = meta.value("x_hi", ds.map.hi);
            ds.binarized = meta.value("binarized", false);
            ds.labels = meta.value("labels", std::vector<int>{});
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::schema_violation, side.string() + ": " + e.what());
        }
        if (!ds.labels.empty() && ds.labels.size() != ds.samples.rows()) {
            throw Error(ErrorKind::count_mismatch, "dataset sidecar label count differs from rows");
        }
    }
    return ds;
}

}  // namespace pssgm
