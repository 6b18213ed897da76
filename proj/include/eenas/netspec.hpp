#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eenas/genome.hpp"

#include "json.hpp"

namespace eenas {

enum class LayerKind { Conv, Relu, MaxPool, Flatten, Dense, Sigmoid };

std::string layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& s);

/// One backbone or head layer with resolved shapes.
/// Dense layers use in_ch/out_ch as feature counts (spatial extents 1).
struct LayerSpec {
    LayerKind kind = LayerKind::Conv;
    int in_ch = 0, out_ch = 0;
    int in_h = 0, in_w = 0;
    int out_h = 0, out_w = 0;
    int kernel = 0, stride = 1, pad = 0;
    int window = 0;  // maxpool

    bool operator==(const LayerSpec&) const = default;
};

struct BackboneSpec {
    int input_ch = 3;
    int input_size = 16;
    int classes = 10;
    std::vector<LayerSpec> stem;
    std::vector<std::vector<LayerSpec>> blocks;  // block = conv + relu
    std::vector<LayerSpec> final_head;           // flatten + dense -> classes

    int num_blocks() const { return static_cast<int>(blocks.size()); }
};

/// One early exit: a head grafted onto the output of backbone block
/// `attach_block` (1-based). `shared` feeds both branches.
struct ExitSpec {
    int attach_block = 0;
    std::vector<LayerSpec> shared;      // [maxpool] + conv + relu; may collapse to [maxpool]
    std::vector<LayerSpec> classifier;  // flatten + dense -> classes
    std::vector<LayerSpec> confidence;  // flatten + dense -> 1 + sigmoid

    bool operator==(const ExitSpec&) const = default;
};

/// Complete early-exit network: backbone plus placed exits and the per-exit
/// cost vector gamma (raw MAC units). Immutable after construction.
struct EennSpec {
    Genome genome;  // provenance; meaningful when built by decode_genome
    BackboneSpec backbone;
    std::vector<ExitSpec> exits;  // ascending attach order; final exit excluded
    std::vector<double> gamma;    // length num_exits() once exits are placed

    int num_exits() const { return static_cast<int>(exits.size()) + 1; }

    nlohmann::json to_json() const;
    static EennSpec from_json(const nlohmann::json& j);
};

/// MACs of a layer sequence: conv K*K*Cin*Cout*Hout*Wout, dense nin*nout,
/// everything else free. Throws ContractError on unresolved shapes.
std::int64_t mac_count(std::span<const LayerSpec> layers);
std::int64_t mac_count(const BackboneSpec& b);  // stem + blocks + final head

inline double to_millions(double macs) { return macs / 1e6; }

}  // namespace eenas
