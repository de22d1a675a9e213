#include "otmatch/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace otmatch::data {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Dataset gen_two_moons(std::size_t n, double noise, std::uint64_t seed) {
    if (n % 2 != 0) throw std::invalid_argument("gen_two_moons: n must be even");
    if (noise < 0.0) throw std::invalid_argument("gen_two_moons: negative noise");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(0.0, kPi);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Dataset ds;
    ds.num_classes = 2;
    ds.dim = 2;
    ds.examples.reserve(n);
    for (std::size_t i = 0; i < n / 2; ++i) {
        const double t = angle(rng);
        Example e;
        e.x = {std::cos(t) + noise * gauss(rng), std::sin(t) + noise * gauss(rng)};
        e.label = 0;
        ds.examples.push_back(std::move(e));
    }
    for (std::size_t i = 0; i < n / 2; ++i) {
        const double t = angle(rng);
        Example e;
        e.x = {1.0 - std::cos(t) + noise * gauss(rng),
               0.5 - std::sin(t) + noise * gauss(rng)};
        e.label = 1;
        ds.examples.push_back(std::move(e));
    }
    return ds;
}

Dataset gen_gaussian_mixture(std::size_t n, std::size_t num_classes, double sigma,
                             std::uint64_t seed) {
    if (num_classes < 2) throw std::invalid_argument("gen_gaussian_mixture: K must be >= 2");
    if (n % num_classes != 0)
        throw std::invalid_argument("gen_gaussian_mixture: n must divide evenly by K");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, sigma);
    Dataset ds;
    ds.num_classes = num_classes;
    ds.dim = 2;
    const std::size_t per_class = n / num_classes;
    for (std::size_t k = 0; k < num_classes; ++k) {
        const double a = 2.0 * kPi * static_cast<double>(k) / static_cast<double>(num_classes);
        for (std::size_t i = 0; i < per_class; ++i) {
            Example e;
            e.x = {std::cos(a) + gauss(rng), std::sin(a) + gauss(rng)};
            e.label = static_cast<int>(k);
            ds.examples.push_back(std::move(e));
        }
    }
    return ds;
}

namespace {

std::uint32_t read_be32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IdxFormatError("idx: truncated header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

Dataset read_idx(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IdxFormatError("idx: cannot open " + path);
    const std::uint32_t magic = read_be32(in);
    if ((magic >> 16) != 0 || ((magic >> 8) & 0xff) != 0x08)
        throw IdxFormatError("idx: bad magic number (expected ubyte type)");
    const std::size_t ndims = magic & 0xff;
    if (ndims < 1 || ndims > 3) throw IdxFormatError("idx: unsupported rank");
    std::vector<std::size_t> dims(ndims);
    for (std::size_t d = 0; d < ndims; ++d) dims[d] = read_be32(in);

    const std::size_t count = dims[0];
    std::size_t item = 1;
    for (std::size_t d = 1; d < ndims; ++d) item *= dims[d];

    std::vector<unsigned char> payload(count * item);
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (static_cast<std::size_t>(in.gcount()) != payload.size())
        throw IdxFormatError("idx: truncated payload");

    Dataset ds;
    ds.dim = item;
    if (ndims == 3) {
        ds.image_rows = dims[1];
        ds.image_cols = dims[2];
    }
    ds.examples.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        ds.examples[i].x.resize(item);
        for (std::size_t j = 0; j < item; ++j)
            ds.examples[i].x[j] = static_cast<double>(payload[i * item + j]) / 255.0;
    }
    return ds;
}

void write_idx(const std::string& path, const Dataset& ds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IdxFormatError("idx: cannot open " + path + " for writing");
    const bool img = ds.is_image();
    write_be32(out, 0x00000800u | (img ? 3u : 2u));
    write_be32(out, static_cast<std::uint32_t>(ds.examples.size()));
    if (img) {
        write_be32(out, static_cast<std::uint32_t>(ds.image_rows));
        write_be32(out, static_cast<std::uint32_t>(ds.image_cols));
    } else {
        write_be32(out, static_cast<std::uint32_t>(ds.dim));
    }
    for (const Example& e : ds.examples)
        for (double v : e.x) {
            const double c = std::clamp(v, 0.0, 1.0);
            out.put(static_cast<char>(std::lround(c * 255.0)));
        }
}

namespace {

Vector add_noise(const Vector& x, double sigma, std::mt19937_64& rng) {
    Vector y = x;
    if (sigma > 0.0) {
        std::normal_distribution<double> gauss(0.0, sigma);
        for (double& v : y) v += gauss(rng);
    }
    return y;
}

// flip + shift for images; both views share this base
Vector image_flip_shift(const Vector& x, std::size_t rows, std::size_t cols, int shift_max,
                        std::mt19937_64& rng) {
    std::bernoulli_distribution coin(0.5);
    std::uniform_int_distribution<int> shift(-shift_max, shift_max);
    const bool flip = coin(rng);
    const int dr = shift(rng), dc = shift(rng);
    Vector y(x.size(), 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const long sr = static_cast<long>(r) - dr;
            long sc = static_cast<long>(c) - dc;
            if (flip) sc = static_cast<long>(cols) - 1 - sc;
            if (sr < 0 || sc < 0 || sr >= static_cast<long>(rows) ||
                sc >= static_cast<long>(cols))
                continue;
            y[r * cols + c] = x[static_cast<std::size_t>(sr) * cols + static_cast<std::size_t>(sc)];
        }
    return y;
}

}  // namespace

Vector augment_weak(const Vector& x, const Dataset& ds, const AugmentConfig& cfg,
                    std::mt19937_64& rng) {
    if (ds.is_image())
        return image_flip_shift(x, ds.image_rows, ds.image_cols, cfg.shift_max, rng);
    return add_noise(x, cfg.weak_noise, rng);
}

Vector augment_strong(const Vector& x, const Dataset& ds, const AugmentConfig& cfg,
                      std::mt19937_64& rng) {
    if (ds.is_image()) {
        Vector y = image_flip_shift(x, ds.image_rows, ds.image_cols, cfg.shift_max, rng);
        // cutout square
        const std::size_t rows = ds.image_rows, cols = ds.image_cols;
        const std::size_t side =
            static_cast<std::size_t>(std::lround(cfg.cutout_fraction * static_cast<double>(rows)));
        if (side > 0) {
            std::uniform_int_distribution<std::size_t> rpos(0, rows - side),
                cpos(0, cols - side);
            const std::size_t r0 = rpos(rng), c0 = cpos(rng);
            for (std::size_t r = r0; r < r0 + side; ++r)
                for (std::size_t c = c0; c < c0 + side; ++c) y[r * cols + c] = 0.0;
        }
        std::uniform_real_distribution<double> jit(-cfg.brightness_jitter, cfg.brightness_jitter);
        const double b = jit(rng);
        for (double& v : y) v = std::clamp(v + b, 0.0, 1.0);
        return y;
    }
    Vector y = add_noise(x, cfg.strong_noise_factor * cfg.weak_noise, rng);
    std::bernoulli_distribution drop(cfg.strong_mask_fraction);
    for (double& v : y)
        if (drop(rng)) v = 0.0;
    return y;
}

MixedBatch sample_batch(const Dataset& ds, const std::vector<std::size_t>& labeled_idx,
                        const std::vector<std::size_t>& unlabeled_idx, std::size_t batch,
                        std::size_t mu, const AugmentConfig& cfg, std::mt19937_64& rng) {
    const std::size_t k = ds.num_classes;
    if (k == 0 || batch % k != 0)
        throw SamplingError("sample_batch: batch size must divide evenly by K");
    const std::size_t per_class = batch / k;

    std::vector<std::vector<std::size_t>> by_class(k);
    for (std::size_t idx : labeled_idx) {
        const int y = ds.examples[idx].label;
        if (y < 0) throw SamplingError("sample_batch: unlabeled example in labeled pool");
        by_class[static_cast<std::size_t>(y)].push_back(idx);
    }

    MixedBatch out;
    for (std::size_t c = 0; c < k; ++c) {
        auto& pool = by_class[c];
        if (pool.size() < per_class)
            throw SamplingError("sample_batch: class " + std::to_string(c) +
                                " has fewer than B/K labeled examples");
        // partial Fisher-Yates: first per_class entries are a uniform draw
        for (std::size_t i = 0; i < per_class; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng)]);
            const Example& e = ds.examples[pool[i]];
            out.labeled_weak.push_back(augment_weak(e.x, ds, cfg, rng));
            out.labels.push_back(static_cast<std::size_t>(e.label));
        }
    }

    const std::size_t want = mu * batch;
    if (unlabeled_idx.size() < want)
        throw SamplingError("sample_batch: not enough unlabeled examples");
    std::vector<std::size_t> pool = unlabeled_idx;
    for (std::size_t i = 0; i < want; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
        const Example& e = ds.examples[pool[i]];
        UnlabeledPair pair;
        pair.weak = augment_weak(e.x, ds, cfg, rng);
        pair.strong = augment_strong(e.x, ds, cfg, rng);
        out.unlabeled.push_back(std::move(pair));
    }
    return out;
}

void write_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_dataset_csv: cannot open " + path);
    for (std::size_t j = 0; j < ds.dim; ++j) out << "x" << j << ",";
    out << "y\n";
    char buf[64];
    for (const Example& e : ds.examples) {
        for (double v : e.x) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << buf << ",";
        }
        out << e.label << "\n";
    }
}

}  // namespace otmatch::data
