#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "pssgm/data.hpp"
#include "pssgm/text_io.hpp"
#include "temp_dir.hpp"

using namespace pssgm;

namespace {

MixtureSpec two_mode(double w1, double var = 0.012) {
    return MixtureSpec({{w1, Eigen::Vector2d(-0.55, -0.2), var * Eigen::Matrix2d::Identity()},
                        {1.0 - w1, Eigen::Vector2d(0.55, 0.3), var * Eigen::Matrix2d::Identity()}});
}

IdxFile image_file(std::uint32_t count, std::uint32_t rows, std::uint32_t cols, std::uint8_t fill = 0) {
    IdxFile f;
    f.magic = idx_images_magic;
    f.dims = {count, rows, cols};
    f.payload.assign(std::size_t{count} * rows * cols, fill);
    return f;
}

IdxFile label_file(std::vector<std::uint8_t> labels) {
    IdxFile f;
    f.magic = idx_labels_magic;
    f.dims = {static_cast<std::uint32_t>(labels.size())};
    f.payload = std::move(labels);
    return f;
}

ErrorKind idx_error(const std::vector<std::uint8_t>& bytes, std::uint32_t magic = 0) {
    try {
        parse_idx(bytes, magic);
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("parse unexpectedly succeeded");
    return ErrorKind::invalid_argument;
}

}  // namespace

TEST_CASE("mixture spec validation") {
    CHECK_NOTHROW(default_mixture());
    CHECK(default_mixture().size() == 2);
    CHECK(default_mixture()[0].weight == 0.65);
    CHECK_THROWS_AS(two_mode(1.2), Error);
    Eigen::Matrix2d bad;
    bad << 1.0, 2.0, 2.0, 1.0;
    try {
        MixtureSpec({{1.0, Eigen::Vector2d::Zero(), bad}});
        FAIL("expected decomposition error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::decomposition);
    }
    CHECK_THROWS_AS(MixtureSpec({{0.5, Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()},
                                 {0.5 + 1e-9, Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()}}),
                    Error);
}

TEST_CASE("mixture_sample: single component moments within 4 SE") {
    const double s2 = 0.04;
    const MixtureSpec spec({{1.0, Eigen::Vector2d(0.3, -0.7), s2 * Eigen::Matrix2d::Identity()}});
    const std::size_t m = 100'000;
    const SampleMatrix x = mixture_sample(spec, m, NoiseSource(81));
    REQUIRE(x.rows() == m);
    for (std::size_t a = 0; a < 2; ++a) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < m; ++i) mean += x(i, a);
        mean /= m;
        for (std::size_t i = 0; i < m; ++i) var += (x(i, a) - mean) * (x(i, a) - mean);
        var /= (m - 1);
        CHECK(std::abs(mean - spec[0].mean[a]) < 4.0 * std::sqrt(s2 / m));
        CHECK(std::abs(var - s2) < 4.0 * s2 * std::sqrt(2.0 / (m - 1)));
    }
    double cov = 0.0;
    for (std::size_t i = 0; i < m; ++i) cov += (x(i, 0) - 0.3) * (x(i, 1) + 0.7);
    CHECK(std::abs(cov / m) < 4.0 * s2 / std::sqrt(double(m)));
}

TEST_CASE("mixture_sample: degenerate and well-separated weights") {
    std::vector<std::size_t> comp;
    mixture_sample(two_mode(1.0), 5000, NoiseSource(82), &comp);
    for (auto c : comp) CHECK(c == 0);

    const MixtureSpec spec = two_mode(0.65);
    const SampleMatrix x = mixture_sample(spec, 100'000, NoiseSource(83));
    std::size_t first = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double d0 = std::hypot(x(i, 0) + 0.55, x(i, 1) + 0.2);
        const double d1 = std::hypot(x(i, 0) - 0.55, x(i, 1) - 0.3);
        first += d0 < d1;
    }
    CHECK(std::abs(double(first) / x.rows() - 0.65) < 0.01);
    CHECK(mixture_sample(spec, 10, NoiseSource(84)) == mixture_sample(spec, 10, NoiseSource(84)));
    CHECK_THROWS_AS(mixture_sample(spec, 0, NoiseSource(84)), Error);
}

TEST_CASE("mixture density and marginals") {
    const MixtureSpec unit({{1.0, Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()}});
    const std::vector<double> origin{0.0, 0.0};
    CHECK(mixture_density(unit, origin) == doctest::Approx(1.0 / (2.0 * std::numbers::pi)).epsilon(1e-14));

    const MixtureSpec sym({{0.5, Eigen::Vector2d(-1.0, 0.0), 0.2 * Eigen::Matrix2d::Identity()},
                           {0.5, Eigen::Vector2d(1.0, 0.0), 0.2 * Eigen::Matrix2d::Identity()}});
    const double gauss = std::exp(-0.5 / 0.2) / std::sqrt(2.0 * std::numbers::pi * 0.2);
    CHECK(mixture_marginal(sym, 0, 0.0) == doctest::Approx(gauss).epsilon(1e-14));
    CHECK_THROWS_AS(mixture_marginal(sym, 2, 0.0), Error);

    // Mass within +-3 sigma of a single component is 0.9973^2.
    const double s = 0.3;
    const MixtureSpec one({{1.0, Eigen::Vector2d(0.1, 0.2), s * s * Eigen::Matrix2d::Identity()}});
    const std::size_t n = 600;
    const double h = 6.0 * s / n;
    double mass = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
        for (std::size_t j = 0; j <= n; ++j) {
            const std::vector<double> p{0.1 - 3 * s + i * h, 0.2 - 3 * s + j * h};
            const double w = (i == 0 || i == n ? 0.5 : 1.0) * (j == 0 || j == n ? 0.5 : 1.0);
            mass += w * mixture_density(one, p);
        }
    }
    mass *= h * h;
    const double p3 = std::erf(3.0 / std::sqrt(2.0));
    CHECK(mass == doctest::Approx(p3 * p3).epsilon(1e-5));
}

TEST_CASE("mixture density integrates to one") {
    const MixtureSpec spec = default_mixture();
    // Each component is integrated on its own +-8 sigma box; the remaining
    // mass outside those boxes is below 1e-14.
    double total = 0.0;
    for (std::size_t c = 0; c < spec.size(); ++c) {
        const double sd = std::sqrt(spec[c].cov(0, 0));
        const std::size_t n = 400;
        const double h = 16.0 * sd / n;
        double mass = 0.0;
        for (std::size_t i = 0; i <= n; ++i) {
            for (std::size_t j = 0; j <= n; ++j) {
                const std::vector<double> p{spec[c].mean[0] - 8 * sd + i * h, spec[c].mean[1] - 8 * sd + j * h};
                const double w = (i == 0 || i == n ? 0.5 : 1.0) * (j == 0 || j == n ? 0.5 : 1.0);
                mass += w * std::exp(spec.component_log_density(c, p));
            }
        }
        total += mass * h * h;
    }
    CHECK(std::abs(total - 1.0) < 1e-4);

    double marginal = 0.0;
    const double h = 1e-3;
    for (int i = -3000; i <= 3000; ++i) marginal += mixture_marginal(spec, 1, i * h) * h;
    CHECK(std::abs(marginal - 1.0) < 1e-4);
}

TEST_CASE("idx: header arithmetic and structured errors") {
    auto bytes = serialize_idx(image_file(10, 28, 28));
    CHECK(bytes.size() == 16 + 7840);
    const IdxFile ok = parse_idx(bytes);
    CHECK(ok.count() == 10);
    CHECK(ok.payload.size() == 7840);

    auto short_payload = bytes;
    short_payload.pop_back();
    CHECK(idx_error(short_payload) == ErrorKind::truncated);

    auto trailing = bytes;
    trailing.push_back(0);
    CHECK(idx_error(trailing) == ErrorKind::trailing_bytes);

    auto magic = bytes;
    magic[2] = 0x0D;  // 0x0D = float data, not unsigned byte
    CHECK(idx_error(magic) == ErrorKind::bad_magic);
    CHECK(idx_error(bytes, idx_labels_magic) == ErrorKind::bad_magic);

    std::vector<std::uint8_t> header_only(bytes.begin(), bytes.begin() + 10);
    CHECK(idx_error(header_only) == ErrorKind::truncated);
    CHECK(idx_error({0x00, 0x00}) == ErrorKind::truncated);

    auto huge = bytes;
    for (int i = 4; i < 16; ++i) huge[i] = 0xFF;
    CHECK(idx_error(huge) == ErrorKind::dim_overflow);

    const auto labels = serialize_idx(label_file({0, 1, 7}));
    CHECK(parse_idx(labels, idx_labels_magic).payload == std::vector<std::uint8_t>{0, 1, 7});
}

TEST_CASE("idx: bit-exact round trip") {
    IdxFile f = image_file(3, 5, 4);
    for (std::size_t i = 0; i < f.payload.size(); ++i) f.payload[i] = static_cast<std::uint8_t>(i * 37);
    const auto bytes = serialize_idx(f);
    const IdxFile back = parse_idx(bytes);
    CHECK(back == f);
    CHECK(serialize_idx(back) == bytes);
}

TEST_CASE("idx: fuzzed corruptions never crash and raise structured errors") {
    const auto good = serialize_idx(image_file(4, 28, 28, 17));
    RandomStream rng(NoiseSource(85));
    for (int trial = 0; trial < 500; ++trial) {
        auto b = good;
        switch (trial % 4) {
            case 0: b.resize(rng.index(b.size())); break;
            case 1: b[rng.index(4)] ^= static_cast<std::uint8_t>(1 + rng.index(255)); break;
            case 2: b[4 + rng.index(12)] = static_cast<std::uint8_t>(rng.index(256)); break;
            default:
                for (int k = 0; k < 4; ++k) b[rng.index(16)] = static_cast<std::uint8_t>(rng.index(256));
        }
        try {
            const IdxFile f = parse_idx(b);
            // Only a corruption that happens to describe a consistent file may parse.
            CHECK(serialize_idx(f) == b);
        } catch (const Error& e) {
            const ErrorKind k = e.kind();
            CHECK((k == ErrorKind::bad_magic || k == ErrorKind::truncated || k == ErrorKind::dim_overflow ||
                   k == ErrorKind::trailing_bytes));
        }
    }
}

TEST_CASE("load_idx: missing file is an I/O error naming the path") {
    try {
        load_idx("/nonexistent/images.idx");
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::io);
        CHECK(std::string(e.what()).find("/nonexistent/images.idx") != std::string::npos);
    }
}

TEST_CASE("downsample: crop and pool geometry") {
    std::vector<std::uint8_t> img(28 * 28, 0);
    // Mark the top-left pixel of the 24x24 center crop.
    img[2 * 28 + 2] = 200;
    const auto out12 = downsample_image(img, 28, 28, 12);
    REQUIRE(out12.size() == 144);
    CHECK(out12[0] == 50.0);
    for (std::size_t i = 1; i < 144; ++i) CHECK(out12[i] == 0.0);
    // The outer 2-pixel border is cropped away.
    img.assign(28 * 28, 0);
    img[0] = 255;
    for (double v : downsample_image(img, 28, 28, 12)) CHECK(v == 0.0);
    CHECK(downsample_image(img, 28, 28, 6).size() == 36);
    CHECK_THROWS_AS(downsample_image(img, 28, 28, 0), Error);
    CHECK_THROWS_AS(downsample_image(img, 28, 28, 29), Error);
}

TEST_CASE("downsample: area averaging preserves mean brightness") {
    RandomStream rng(NoiseSource(86));
    for (std::size_t side : {14u, 7u, 4u, 12u, 6u}) {
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<std::uint8_t> img(28 * 28);
            for (auto& v : img) v = static_cast<std::uint8_t>(rng.index(256));
            const auto out = downsample_image(img, 28, 28, side);
            const std::size_t pool = 28 / side, crop = pool * side, off = (28 - crop) / 2;
            double in_mean = 0.0;
            for (std::size_t r = off; r < off + crop; ++r) {
                for (std::size_t c = off; c < off + crop; ++c) in_mean += img[r * 28 + c];
            }
            in_mean /= double(crop * crop);
            double out_mean = 0.0;
            for (double v : out) out_mean += v;
            out_mean /= double(out.size());
            CHECK(std::abs(out_mean - in_mean) < 1.0 / 255.0);
        }
    }
}

TEST_CASE("mnist_prepare: mapping, filtering and layout") {
    IdxFile images = image_file(4, 28, 28, 0);
    std::fill(images.payload.begin() + 784, images.payload.begin() + 2 * 784, 255);
    const IdxFile labels = label_file({0, 1, 7, 0});
    MnistOptions opt;
    opt.binarize = false;
    const Dataset d = mnist_prepare(images, labels, opt);
    REQUIRE(d.samples.rows() == 3);
    CHECK(d.samples.dim() == 144);
    CHECK(d.labels == std::vector<int>{0, 1, 0});
    for (double v : d.samples.row(0)) CHECK(v == opt.map.lo);
    for (double v : d.samples.row(1)) CHECK(v == opt.map.hi);
    CHECK(d.map.hi == doctest::Approx(0.786).epsilon(1e-3));
    CHECK_FALSE(d.binarized);
    CHECK(d.preprocessing.find("crop=24 pool=2") != std::string::npos);

    opt.max_images = 2;
    CHECK(mnist_prepare(images, labels, opt).samples.rows() == 2);

    try {
        mnist_prepare(images, label_file({0, 1, 7}), opt);
        FAIL("expected count mismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::count_mismatch);
    }
    CHECK_THROWS_AS(mnist_prepare(labels, labels, opt), Error);
}

TEST_CASE("mnist_prepare: real data files") {
    const std::string dir = PSSGM_DATA_DIR "/mnist/";
    const IdxFile images = load_idx(dir + "images-idx3-ubyte", idx_images_magic);
    const IdxFile labels = load_idx(dir + "labels-idx1-ubyte", idx_labels_magic);
    std::size_t zeros_ones = 0;
    for (auto l : labels.payload) zeros_ones += (l == 0 || l == 1);
    const Dataset d = mnist_prepare(images, labels, {});
    CHECK(d.samples.rows() == zeros_ones);
    CHECK(d.samples.rows() >= 2000);
    CHECK(d.samples.dim() == 144);
    CHECK(d.binarized);
    std::set<double> values(d.samples.data().begin(), d.samples.data().end());
    CHECK(values == std::set<double>{d.map.lo, d.map.hi});
}

TEST_CASE("binarize: tie rule, idempotence, codomain") {
    const DisplacementMap map;
    SampleMatrix s(1, 3);
    s(0, 0) = 0.0;
    s(0, 1) = -1e-12;
    s(0, 2) = 0.3;
    const SampleMatrix b = binarize(s, 0.0, map);
    CHECK(b(0, 0) == map.hi);
    CHECK(b(0, 1) == map.lo);
    CHECK(b(0, 2) == map.hi);
    CHECK(binarize(b, 0.0, map) == b);

    RandomStream rng(NoiseSource(87));
    SampleMatrix r(100, 10);
    for (double& v : r.data()) v = 2.0 * rng.uniform() - 1.0;
    const SampleMatrix rb = binarize(r, 0.0, map);
    CHECK(std::set<double>(rb.data().begin(), rb.data().end()).size() == 2);
}

TEST_CASE("displacement map round trip") {
    const DisplacementMap map;
    for (int p = 0; p <= 255; ++p) CHECK(std::abs(map.to_pixel(map.to_displacement(p)) - p) < 1e-9);
    CHECK(map.to_displacement(0) == map.lo);
    CHECK(map.to_displacement(255) == map.hi);
    // The default amplitude is the minimum of -x^2/2 + x^4/4 + x^6/6.
    const double x = map.hi;
    CHECK(std::abs(-x + x * x * x + x * x * x * x * x) < 1e-14);
}

TEST_CASE("dataset file round trip with sidecar") {
    testing::TempDir dir;
    Dataset d;
    d.samples = mixture_sample(default_mixture(), 50, NoiseSource(88));
    d.labels.assign(50, 1);
    d.source = "mixture";
    d.preprocessing = "none";
    write_dataset(dir / "d.csv", d);
    const Dataset back = read_dataset(dir / "d.csv");
    CHECK(back.samples == d.samples);
    CHECK(back.labels == d.labels);
    CHECK(back.source == "mixture");
    CHECK(read_file(dir / "d.csv").rfind("x0,x1\n", 0) == 0);

    write_file(dir / "plain.csv", "x0\n0.5\n-0.25\n");
    const Dataset plain = read_dataset(dir / "plain.csv");
    CHECK(plain.samples.rows() == 2);
    CHECK(plain.labels.empty());
}
