#include "eenas/netspec.hpp"

#include "eenas/errors.hpp"

namespace eenas {

std::string layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Dense: return "dense";
        case LayerKind::Sigmoid: return "sigmoid";
    }
    return "?";
}

LayerKind layer_kind_from_name(const std::string& s) {
    if (s == "conv") return LayerKind::Conv;
    if (s == "relu") return LayerKind::Relu;
    if (s == "maxpool") return LayerKind::MaxPool;
    if (s == "flatten") return LayerKind::Flatten;
    if (s == "dense") return LayerKind::Dense;
    if (s == "sigmoid") return LayerKind::Sigmoid;
    throw ParseError("unknown layer kind: " + s);
}

std::int64_t mac_count(std::span<const LayerSpec> layers) {
    std::int64_t total = 0;
    for (const LayerSpec& l : layers) {
        switch (l.kind) {
            case LayerKind::Conv: {
                if (l.in_ch <= 0 || l.out_ch <= 0 || l.out_h <= 0 || l.out_w <= 0 || l.kernel <= 0)
                    throw ContractError("mac_count: unresolved conv shape");
                total += static_cast<std::int64_t>(l.kernel) * l.kernel * l.in_ch * l.out_ch *
                         l.out_h * l.out_w;
                break;
            }
            case LayerKind::Dense: {
                if (l.in_ch <= 0 || l.out_ch <= 0)
                    throw ContractError("mac_count: unresolved dense shape");
                total += static_cast<std::int64_t>(l.in_ch) * l.out_ch;
                break;
            }
            default:
                break;  // relu/sigmoid/pool/flatten cost 0 MACs
        }
    }
    return total;
}

std::int64_t mac_count(const BackboneSpec& b) {
    std::int64_t total = mac_count(std::span<const LayerSpec>(b.stem));
    for (const auto& blk : b.blocks) total += mac_count(std::span<const LayerSpec>(blk));
    total += mac_count(std::span<const LayerSpec>(b.final_head));
    return total;
}

namespace {

nlohmann::json layer_to_json(const LayerSpec& l) {
    return {
        {"kind", layer_kind_name(l.kind)}, {"in_ch", l.in_ch},   {"out_ch", l.out_ch},
        {"in_h", l.in_h},                  {"in_w", l.in_w},     {"out_h", l.out_h},
        {"out_w", l.out_w},                {"kernel", l.kernel}, {"stride", l.stride},
        {"pad", l.pad},                    {"window", l.window},
    };
}

LayerSpec layer_from_json(const nlohmann::json& j) {
    LayerSpec l;
    l.kind = layer_kind_from_name(j.at("kind").get<std::string>());
    l.in_ch = j.at("in_ch");
    l.out_ch = j.at("out_ch");
    l.in_h = j.at("in_h");
    l.in_w = j.at("in_w");
    l.out_h = j.at("out_h");
    l.out_w = j.at("out_w");
    l.kernel = j.at("kernel");
    l.stride = j.at("stride");
    l.pad = j.at("pad");
    l.window = j.at("window");
    return l;
}

nlohmann::json layers_to_json(const std::vector<LayerSpec>& ls) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& l : ls) a.push_back(layer_to_json(l));
    return a;
}

std::vector<LayerSpec> layers_from_json(const nlohmann::json& a) {
    std::vector<LayerSpec> ls;
    for (const auto& j : a) ls.push_back(layer_from_json(j));
    return ls;
}

}  // namespace

nlohmann::json EennSpec::to_json() const {
    nlohmann::json stages = nlohmann::json::array();
    for (const StageGene& s : genome.stages)
        stages.push_back({{"depth", s.depth}, {"kernel", s.kernel}, {"width", s.width}});

    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& blk : backbone.blocks) blocks.push_back(layers_to_json(blk));

    nlohmann::json exits_j = nlohmann::json::array();
    for (const ExitSpec& e : exits)
        exits_j.push_back({{"attach_block", e.attach_block},
                           {"shared", layers_to_json(e.shared)},
                           {"classifier", layers_to_json(e.classifier)},
                           {"confidence", layers_to_json(e.confidence)}});

    return {{"genome", {{"stages", stages}, {"theta", genome.theta}}},
            {"backbone",
             {{"input_ch", backbone.input_ch},
              {"input_size", backbone.input_size},
              {"classes", backbone.classes},
              {"stem", layers_to_json(backbone.stem)},
              {"blocks", blocks},
              {"final_head", layers_to_json(backbone.final_head)}}},
            {"exits", exits_j},
            {"gamma", gamma}};
}

EennSpec EennSpec::from_json(const nlohmann::json& j) {
    EennSpec s;
    const auto& jg = j.at("genome");
    const auto& stages = jg.at("stages");
    if (stages.size() != kNumStages)
        throw ParseError("spec json: expected " + std::to_string(kNumStages) + " stages");
    for (std::size_t i = 0; i < kNumStages; ++i) {
        s.genome.stages[i].depth = stages[i].at("depth");
        s.genome.stages[i].kernel = stages[i].at("kernel");
        s.genome.stages[i].width = stages[i].at("width");
    }
    s.genome.theta = jg.at("theta").get<std::vector<int>>();

    const auto& jb = j.at("backbone");
    s.backbone.input_ch = jb.at("input_ch");
    s.backbone.input_size = jb.at("input_size");
    s.backbone.classes = jb.at("classes");
    s.backbone.stem = layers_from_json(jb.at("stem"));
    for (const auto& blk : jb.at("blocks")) s.backbone.blocks.push_back(layers_from_json(blk));
    s.backbone.final_head = layers_from_json(jb.at("final_head"));

    for (const auto& je : j.at("exits")) {
        ExitSpec e;
        e.attach_block = je.at("attach_block");
        e.shared = layers_from_json(je.at("shared"));
        e.classifier = layers_from_json(je.at("classifier"));
        e.confidence = layers_from_json(je.at("confidence"));
        s.exits.push_back(std::move(e));
    }
    s.gamma = j.at("gamma").get<std::vector<double>>();
    return s;
}

}  // namespace eenas
