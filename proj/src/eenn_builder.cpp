#include "eenas/eenn_builder.hpp"

#include <algorithm>

#include "eenas/errors.hpp"

namespace eenas {

namespace {

LayerSpec conv_layer(int in_ch, int out_ch, int k, int stride, int in_h, int in_w) {
    LayerSpec l;
    l.kind = LayerKind::Conv;
    l.in_ch = in_ch;
    l.out_ch = out_ch;
    l.kernel = k;
    l.stride = stride;
    l.pad = k / 2;  // same padding at stride 1, halving at stride 2
    l.in_h = in_h;
    l.in_w = in_w;
    l.out_h = (in_h + 2 * l.pad - k) / stride + 1;
    l.out_w = (in_w + 2 * l.pad - k) / stride + 1;
    return l;
}

LayerSpec passthrough(LayerKind kind, int ch, int h, int w) {
    LayerSpec l;
    l.kind = kind;
    l.in_ch = l.out_ch = ch;
    l.in_h = l.out_h = h;
    l.in_w = l.out_w = w;
    return l;
}

LayerSpec pool_layer(int ch, int h, int w, int window) {
    LayerSpec l;
    l.kind = LayerKind::MaxPool;
    l.in_ch = l.out_ch = ch;
    l.window = window;
    l.stride = window;
    l.in_h = h;
    l.in_w = w;
    l.out_h = (h - window) / window + 1;
    l.out_w = (w - window) / window + 1;
    return l;
}

LayerSpec flatten_layer(int ch, int h, int w) {
    LayerSpec l;
    l.kind = LayerKind::Flatten;
    l.in_ch = ch;
    l.in_h = h;
    l.in_w = w;
    l.out_ch = ch * h * w;
    l.out_h = l.out_w = 1;
    return l;
}

LayerSpec dense_layer(int in_features, int out_features) {
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.in_ch = in_features;
    l.out_ch = out_features;
    l.in_h = l.in_w = l.out_h = l.out_w = 1;
    return l;
}

// Shape of the feature map after backbone block `idx` (1-based; 0 = stem).
struct FeatShape {
    int ch, h, w;
};

FeatShape shape_after_block(const BackboneSpec& b, int idx) {
    const LayerSpec& last =
        idx == 0 ? b.stem.back() : b.blocks[static_cast<std::size_t>(idx) - 1].back();
    return {last.out_ch, last.out_h, last.out_w};
}

std::int64_t prefix_macs(const BackboneSpec& b, int upto_block) {
    std::int64_t total = mac_count(std::span<const LayerSpec>(b.stem));
    for (int i = 0; i < upto_block; ++i)
        total += mac_count(std::span<const LayerSpec>(b.blocks[static_cast<std::size_t>(i)]));
    return total;
}

std::int64_t head_macs(const ExitSpec& e) {
    return mac_count(std::span<const LayerSpec>(e.shared)) +
           mac_count(std::span<const LayerSpec>(e.classifier)) +
           mac_count(std::span<const LayerSpec>(e.confidence));
}

// Rebuild an exit head with an optional leading pool window and optionally
// no shared conv. window == 0 means no pooling.
ExitSpec build_eec_variant(int attach_block, FeatShape f, int classes, int window,
                           bool drop_conv) {
    ExitSpec e;
    e.attach_block = attach_block;
    int ch = f.ch, h = f.h, w = f.w;
    if (window > 1) {
        const LayerSpec p = pool_layer(ch, h, w, window);
        e.shared.push_back(p);
        h = p.out_h;
        w = p.out_w;
    }
    if (!drop_conv) {
        const LayerSpec c = conv_layer(ch, 16, 3, 1, h, w);
        e.shared.push_back(c);
        e.shared.push_back(passthrough(LayerKind::Relu, c.out_ch, c.out_h, c.out_w));
        ch = c.out_ch;
        h = c.out_h;
        w = c.out_w;
    }
    e.classifier.push_back(flatten_layer(ch, h, w));
    e.classifier.push_back(dense_layer(ch * h * w, classes));
    e.confidence.push_back(flatten_layer(ch, h, w));
    e.confidence.push_back(dense_layer(ch * h * w, 1));
    e.confidence.push_back(passthrough(LayerKind::Sigmoid, 1, 1, 1));
    return e;
}

}  // namespace

EennSpec decode_genome(const Genome& g, int classes, int input_size, int input_ch) {
    g.validate();
    EennSpec spec;
    spec.genome = g;
    BackboneSpec& b = spec.backbone;
    b.input_ch = input_ch;
    b.input_size = input_size;
    b.classes = classes;

    const LayerSpec stem = conv_layer(input_ch, 16, 3, 1, input_size, input_size);
    b.stem.push_back(stem);
    b.stem.push_back(passthrough(LayerKind::Relu, stem.out_ch, stem.out_h, stem.out_w));

    int ch = stem.out_ch, h = stem.out_h, w = stem.out_w;
    for (const StageGene& s : g.stages) {
        for (int d = 0; d < s.depth; ++d) {
            const int stride = d == 0 ? 2 : 1;
            const LayerSpec c = conv_layer(ch, s.width, s.kernel, stride, h, w);
            std::vector<LayerSpec> blk{c, passthrough(LayerKind::Relu, c.out_ch, c.out_h, c.out_w)};
            b.blocks.push_back(std::move(blk));
            ch = c.out_ch;
            h = c.out_h;
            w = c.out_w;
        }
    }

    b.final_head.push_back(flatten_layer(ch, h, w));
    b.final_head.push_back(dense_layer(ch * h * w, classes));
    return spec;
}

ExitSpec build_eec(int attach_block, int feat_ch, int feat_h, int feat_w, int classes) {
    return build_eec_variant(attach_block, {feat_ch, feat_h, feat_w}, classes, 0, false);
}

std::vector<double> gamma_vector(const EennSpec& spec) {
    std::vector<double> gamma;
    gamma.reserve(spec.exits.size() + 1);
    for (const ExitSpec& e : spec.exits)
        gamma.push_back(static_cast<double>(prefix_macs(spec.backbone, e.attach_block) +
                                            head_macs(e)));
    gamma.push_back(static_cast<double>(
        prefix_macs(spec.backbone, spec.backbone.num_blocks()) +
        mac_count(std::span<const LayerSpec>(spec.backbone.final_head))));
    return gamma;
}

EennSpec place_exits(const EennSpec& backbone_only, const std::vector<int>& theta,
                     int max_exits) {
    if (static_cast<int>(theta.size()) != max_exits - 1)
        throw ContractError("place_exits: theta length " + std::to_string(theta.size()) +
                            ", expected " + std::to_string(max_exits - 1));
    const int L = backbone_only.backbone.num_blocks();
    if (L < max_exits - 1)
        throw ContractError("place_exits: backbone has " + std::to_string(L) +
                            " blocks, need at least " + std::to_string(max_exits - 1));

    EennSpec spec = backbone_only;
    spec.exits.clear();
    spec.genome.theta = theta;

    // Equidistant attach points; duplicates shift one block later, capped so
    // that every early exit sits strictly before the final block.
    int last = 0;
    std::vector<int> attach;
    for (int j = 1; j < max_exits; ++j) {
        if (!theta[static_cast<std::size_t>(j) - 1]) continue;
        int a = std::max(1, j * L / max_exits);
        if (a <= last) a = last + 1;
        a = std::min(a, L - 1);
        attach.push_back(a);
        last = a;
    }

    const int classes = spec.backbone.classes;
    for (int a : attach) {
        const FeatShape f = shape_after_block(spec.backbone, a);
        spec.exits.push_back(build_eec_variant(a, f, classes, 0, false));
    }

    spec.gamma = gamma_vector(spec);

    // Algorithm: from the second-last exit down, restore gamma_i <= gamma_{i+1}
    // with the minimal pooling window; drop the conv if pooling cannot.
    for (int i = static_cast<int>(spec.exits.size()) - 1; i >= 0; --i) {
        const std::size_t ui = static_cast<std::size_t>(i);
        if (spec.gamma[ui] <= spec.gamma[ui + 1]) continue;
        const FeatShape f = shape_after_block(spec.backbone, spec.exits[ui].attach_block);
        const double prefix = static_cast<double>(prefix_macs(spec.backbone, spec.exits[ui].attach_block));
        const int extent = std::min(f.h, f.w);
        bool fixed = false;
        for (int w = 2; w <= extent && !fixed; ++w) {
            ExitSpec cand = build_eec_variant(spec.exits[ui].attach_block, f, classes, w, false);
            if (prefix + static_cast<double>(head_macs(cand)) <= spec.gamma[ui + 1]) {
                spec.exits[ui] = std::move(cand);
                fixed = true;
            }
        }
        for (int w = 1; w <= extent && !fixed; ++w) {
            ExitSpec cand = build_eec_variant(spec.exits[ui].attach_block, f, classes, w, true);
            if (prefix + static_cast<double>(head_macs(cand)) <= spec.gamma[ui + 1]) {
                spec.exits[ui] = std::move(cand);
                fixed = true;
            }
        }
        if (!fixed)
            throw ContractError("place_exits: cannot satisfy cost ordering at exit " +
                                std::to_string(i + 1));
        spec.gamma = gamma_vector(spec);
    }

    for (std::size_t i = 0; i + 1 < spec.gamma.size(); ++i)
        if (spec.gamma[i] > spec.gamma[i + 1])
            throw ContractError("place_exits: gamma ordering postcondition failed");
    return spec;
}

}  // namespace eenas
