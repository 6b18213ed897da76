#pragma once

#include <string>

#include "eenas/search.hpp"
#include "eenas/trainer.hpp"

#include "json.hpp"

namespace eenas {

struct DatasetConfig {
    std::string kind = "synthetic";  // synthetic | cifar10
    std::string path;                // cifar10 binary file
    int classes = 10;
    int size = 16;
    int n_per_class = 200;
    double noise = 0.18;
};

/// Full run configuration. Every key is validated against the published
/// schema before any work starts; unknown keys are errors.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "runs/out";
    DatasetConfig dataset;
    TrainConfig train;
    SearchConfig search;

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::string& path);
    nlohmann::json to_json() const;

    /// FNV-1a of the canonical JSON dump, hex; stored in the run manifest.
    std::string config_hash() const;
};

Dataset load_dataset(const DatasetConfig& cfg, std::uint64_t seed);

inline constexpr const char* kCodeVersion = "0.1.0";

}  // namespace eenas
