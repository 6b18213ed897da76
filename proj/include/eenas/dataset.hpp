#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eenas/rng.hpp"
#include "eenas/tensor.hpp"

namespace eenas {

/// Images are stored as [N,C,H,W] doubles in [0,1], quantized to 8-bit
/// levels so export to the binary record format round-trips exactly.
struct Dataset {
    int channels = 3;
    int height = 0;
    int width = 0;
    int classes = 0;
    std::vector<double> images;  // N*C*H*W
    std::vector<int> labels;
    std::string provenance;

    int size() const { return static_cast<int>(labels.size()); }
    std::size_t image_elems() const {
        return static_cast<std::size_t>(channels) * height * width;
    }
    std::span<const double> image(int i) const {
        return {images.data() + static_cast<std::size_t>(i) * image_elems(), image_elems()};
    }

    Tensor batch_tensor(std::span<const int> idx) const;
    std::vector<int> batch_labels(std::span<const int> idx) const;

    void validate() const;  // labels in range, N > 0, sizes consistent
};

/// Ten procedural classes: oriented gradient plus a class-specific frequency
/// texture, with seeded Gaussian noise. The base pattern depends only on the
/// class, so zero noise yields one pattern per class.
Dataset generate_synthetic(std::uint64_t seed, int n_per_class, int classes = 10, int size = 16,
                           double noise = 0.18);

/// Binary record stream: 1 label byte + channels*height*width pixel bytes
/// (channel-planar, row-major). CIFAR-10 files are the 3x32x32 case.
Dataset load_binary(const std::string& path, int channels, int height, int width, int classes);
Dataset load_cifar10_binary(const std::string& path);
void save_binary(const Dataset& ds, const std::string& path);

struct SplitResult {
    Dataset train;
    Dataset val;
};

/// Stratified split; both splits must retain every class.
SplitResult split_dataset(const Dataset& ds, double train_fraction, std::uint64_t seed);

/// Class-balanced subset of `ds` with exactly per_class samples per class.
Dataset draw_support(const Dataset& ds, int per_class, std::uint64_t seed);

/// Seed-deterministic permutation batches for one epoch.
std::vector<std::vector<int>> epoch_batches(int n, int batch, std::uint64_t seed, int epoch);

struct DataPipeline {
    Dataset train;
    Dataset val;
    Dataset support;
};

/// Split + support extraction in one step. train_fraction must leave a
/// non-empty validation split.
DataPipeline split_and_batch(const Dataset& ds, double train_fraction, int support_per_class,
                             std::uint64_t seed);

}  // namespace eenas
