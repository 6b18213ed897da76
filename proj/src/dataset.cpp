#include "eenas/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "eenas/errors.hpp"

namespace eenas {

Tensor Dataset::batch_tensor(std::span<const int> idx) const {
    const std::size_t elems = image_elems();
    Tensor t = Tensor::zeros({static_cast<int>(idx.size()), channels, height, width});
    double* out = t.data().data();
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto img = image(idx[k]);
        std::copy(img.begin(), img.end(), out + k * elems);
    }
    return t;
}

std::vector<int> Dataset::batch_labels(std::span<const int> idx) const {
    std::vector<int> out(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) out[k] = labels[static_cast<std::size_t>(idx[k])];
    return out;
}

void Dataset::validate() const {
    if (size() == 0) throw ContractError("dataset: empty (N must be > 0)");
    if (images.size() != static_cast<std::size_t>(size()) * image_elems())
        throw ContractError("dataset: image buffer size mismatch");
    for (int l : labels)
        if (l < 0 || l >= classes)
            throw ContractError("dataset: label " + std::to_string(l) + " outside [0," +
                                std::to_string(classes) + ")");
}

namespace {

inline double quantize8(double v) {
    return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

}  // namespace

Dataset generate_synthetic(std::uint64_t seed, int n_per_class, int classes, int size,
                           double noise) {
    if (n_per_class < 1) throw ContractError("generate_synthetic: n_per_class must be >= 1");
    Dataset ds;
    ds.channels = 3;
    ds.height = ds.width = size;
    ds.classes = classes;
    ds.provenance = "synthetic";
    const int n = n_per_class * classes;
    ds.images.resize(static_cast<std::size_t>(n) * ds.image_elems());
    ds.labels.resize(static_cast<std::size_t>(n));

    // Base pattern per (class, channel, pixel); samples differ only by noise.
    std::vector<double> base(static_cast<std::size_t>(classes) * ds.image_elems());
    for (int j = 0; j < classes; ++j) {
        const double alpha = M_PI * j / classes;
        const double freq = 1.0 + (j % 5);
        const double beta = alpha + M_PI / 2.0;
        const double phase = 2.0 * M_PI * j / classes;
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const double xf = (x + 0.5) / size;
                    const double yf = (y + 0.5) / size;
                    const double grad =
                        (xf * std::cos(alpha) + yf * std::sin(alpha) + 1.0) / 3.0;
                    const double tex = std::sin(2.0 * M_PI * freq *
                                                    (xf * std::cos(beta) + yf * std::sin(beta)) +
                                                phase + c * M_PI / 3.0);
                    const double v = 0.55 * grad + 0.45 * (0.5 + 0.5 * tex);
                    base[(static_cast<std::size_t>(j) * 3 + c) * size * size + y * size + x] = v;
                }
    }

    Rng rng(mix_seed(seed, 0x5f3759df));
    std::size_t out = 0;
    for (int j = 0; j < classes; ++j)
        for (int s = 0; s < n_per_class; ++s) {
            const std::size_t img_idx = out / ds.image_elems();
            ds.labels[img_idx] = j;
            const double* b = base.data() + static_cast<std::size_t>(j) * ds.image_elems();
            for (std::size_t k = 0; k < ds.image_elems(); ++k)
                ds.images[out++] = quantize8(b[k] + noise * rng.normal());
        }
    return ds;
}

Dataset load_binary(const std::string& path, int channels, int height, int width, int classes) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("dataset: cannot open: " + path);
    std::vector<unsigned char> buf{std::istreambuf_iterator<char>(f),
                                   std::istreambuf_iterator<char>()};

    const std::size_t rec = 1 + static_cast<std::size_t>(channels) * height * width;
    if (buf.size() % rec != 0)
        throw ParseError("dataset: file length " + std::to_string(buf.size()) +
                         " is not a multiple of the record size " + std::to_string(rec) +
                         "; trailing bytes start at offset " +
                         std::to_string(buf.size() - buf.size() % rec));

    Dataset ds;
    ds.channels = channels;
    ds.height = height;
    ds.width = width;
    ds.classes = classes;
    ds.provenance = path;
    const std::size_t n = buf.size() / rec;
    ds.labels.resize(n);
    ds.images.resize(n * (rec - 1));
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t off = i * rec;
        const int label = buf[off];
        if (label >= classes)
            throw ParseError("dataset: label " + std::to_string(label) + " >= " +
                             std::to_string(classes) + " at byte offset " + std::to_string(off));
        ds.labels[i] = label;
        for (std::size_t k = 0; k < rec - 1; ++k)
            ds.images[i * (rec - 1) + k] = buf[off + 1 + k] / 255.0;
    }
    ds.validate();
    return ds;
}

Dataset load_cifar10_binary(const std::string& path) { return load_binary(path, 3, 32, 32, 10); }

void save_binary(const Dataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ParseError("dataset: cannot open for writing: " + path);
    std::vector<unsigned char> rec(1 + ds.image_elems());
    for (int i = 0; i < ds.size(); ++i) {
        rec[0] = static_cast<unsigned char>(ds.labels[static_cast<std::size_t>(i)]);
        const auto img = ds.image(i);
        for (std::size_t k = 0; k < img.size(); ++k)
            rec[1 + k] = static_cast<unsigned char>(std::lround(img[k] * 255.0));
        f.write(reinterpret_cast<const char*>(rec.data()),
                static_cast<std::streamsize>(rec.size()));
    }
    if (!f) throw ParseError("dataset: write failed: " + path);
}

namespace {

Dataset subset(const Dataset& ds, const std::vector<int>& idx, const std::string& tag) {
    Dataset out;
    out.channels = ds.channels;
    out.height = ds.height;
    out.width = ds.width;
    out.classes = ds.classes;
    out.provenance = ds.provenance + "/" + tag;
    out.labels.reserve(idx.size());
    out.images.reserve(idx.size() * ds.image_elems());
    for (int i : idx) {
        out.labels.push_back(ds.labels[static_cast<std::size_t>(i)]);
        const auto img = ds.image(i);
        out.images.insert(out.images.end(), img.begin(), img.end());
    }
    return out;
}

std::vector<std::vector<int>> by_class(const Dataset& ds) {
    std::vector<std::vector<int>> cls(static_cast<std::size_t>(ds.classes));
    for (int i = 0; i < ds.size(); ++i)
        cls[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
    return cls;
}

}  // namespace

SplitResult split_dataset(const Dataset& ds, double train_fraction, std::uint64_t seed) {
    ds.validate();
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
        throw ContractError("split_dataset: train fraction " + std::to_string(train_fraction) +
                            " must leave both splits non-empty");
    Rng rng(mix_seed(seed, 0x60d5));
    std::vector<int> train_idx, val_idx;
    auto cls = by_class(ds);
    for (auto& members : cls) {
        rng.shuffle(members);
        const int n_train = static_cast<int>(std::round(train_fraction * members.size()));
        if (n_train < 1 || n_train >= static_cast<int>(members.size()))
            throw ContractError("split_dataset: a class would lose presence in one split");
        for (std::size_t k = 0; k < members.size(); ++k)
            (static_cast<int>(k) < n_train ? train_idx : val_idx).push_back(members[k]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    return {subset(ds, train_idx, "train"), subset(ds, val_idx, "val")};
}

Dataset draw_support(const Dataset& ds, int per_class, std::uint64_t seed) {
    ds.validate();
    Rng rng(mix_seed(seed, 0x5099));
    std::vector<int> idx;
    auto cls = by_class(ds);
    for (int j = 0; j < ds.classes; ++j) {
        auto& members = cls[static_cast<std::size_t>(j)];
        if (static_cast<int>(members.size()) < per_class)
            throw ContractError("draw_support: class " + std::to_string(j) + " has only " +
                                std::to_string(members.size()) + " samples, need " +
                                std::to_string(per_class));
        rng.shuffle(members);
        idx.insert(idx.end(), members.begin(), members.begin() + per_class);
    }
    std::sort(idx.begin(), idx.end());
    return subset(ds, idx, "support");
}

std::vector<std::vector<int>> epoch_batches(int n, int batch, std::uint64_t seed, int epoch) {
    if (n <= 0 || batch <= 0) throw ContractError("epoch_batches: n and batch must be positive");
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    Rng rng(mix_seed(seed, 0xba7c000 + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(perm);
    std::vector<std::vector<int>> out;
    for (int start = 0; start < n; start += batch) {
        const int end = std::min(n, start + batch);
        out.emplace_back(perm.begin() + start, perm.begin() + end);
    }
    return out;
}

DataPipeline split_and_batch(const Dataset& ds, double train_fraction, int support_per_class,
                             std::uint64_t seed) {
    SplitResult split = split_dataset(ds, train_fraction, seed);
    Dataset support = draw_support(split.train, support_per_class, seed);
    return {std::move(split.train), std::move(split.val), std::move(support)};
}

}  // namespace eenas
