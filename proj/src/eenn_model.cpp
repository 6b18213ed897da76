#include "eenas/eenn_model.hpp"

#include <cmath>

#include "eenas/errors.hpp"

namespace eenas {

namespace {

Tensor init_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
    const double bound = std::sqrt(6.0 / std::max(1, fan_in));
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

EennModel::EennModel(EennSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    Rng rng(seed);
    register_layer_params("stem", spec_.backbone.stem, true, rng);
    for (int b = 0; b < spec_.backbone.num_blocks(); ++b)
        register_layer_params("block" + std::to_string(b + 1),
                              spec_.backbone.blocks[static_cast<std::size_t>(b)], true, rng);
    register_layer_params("final", spec_.backbone.final_head, true, rng);
    for (std::size_t e = 0; e < spec_.exits.size(); ++e) {
        const std::string prefix = "exit" + std::to_string(e + 1);
        register_layer_params(prefix + ".shared", spec_.exits[e].shared, false, rng);
        register_layer_params(prefix + ".cls", spec_.exits[e].classifier, false, rng);
        register_layer_params(prefix + ".conf", spec_.exits[e].confidence, false, rng);
    }
}

void EennModel::register_layer_params(const std::string& group,
                                      const std::vector<LayerSpec>& layers, bool backbone,
                                      Rng& rng) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        const std::string base = group + "." + std::to_string(i);
        if (l.kind == LayerKind::Conv) {
            const int fan_in = l.in_ch * l.kernel * l.kernel;
            Tensor w = init_uniform({l.out_ch, l.in_ch, l.kernel, l.kernel}, fan_in, rng);
            Tensor b = Tensor::zeros({l.out_ch}, /*requires_grad=*/true);
            params_.push_back({base + ".w", w, backbone});
            params_.push_back({base + ".b", b, backbone});
            by_name_[base + ".w"] = w;
            by_name_[base + ".b"] = b;
        } else if (l.kind == LayerKind::Dense) {
            Tensor w = init_uniform({l.in_ch, l.out_ch}, l.in_ch, rng);
            Tensor b = Tensor::zeros({l.out_ch}, /*requires_grad=*/true);
            params_.push_back({base + ".w", w, backbone});
            params_.push_back({base + ".b", b, backbone});
            by_name_[base + ".w"] = w;
            by_name_[base + ".b"] = b;
        }
    }
}

Tensor EennModel::run_layers(Tape& tape, Tensor x, const std::vector<LayerSpec>& layers,
                             const std::string& group) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        const std::string base = group + "." + std::to_string(i);
        switch (l.kind) {
            case LayerKind::Conv:
                x = ops::conv2d(tape, x, by_name_.at(base + ".w"), by_name_.at(base + ".b"),
                                l.stride, l.pad);
                break;
            case LayerKind::Dense:
                x = ops::dense(tape, x, by_name_.at(base + ".w"), by_name_.at(base + ".b"));
                break;
            case LayerKind::Relu:
                x = ops::relu(tape, x);
                break;
            case LayerKind::Sigmoid:
                x = ops::sigmoid(tape, x);
                break;
            case LayerKind::MaxPool:
                x = ops::maxpool2d(tape, x, l.window, l.stride);
                break;
            case LayerKind::Flatten:
                x = ops::flatten(tape, x);
                break;
        }
    }
    return x;
}

EennModel::Outputs EennModel::forward(Tape& tape, const Tensor& batch) const {
    if (batch.rank() != 4 || batch.dim(1) != spec_.backbone.input_ch ||
        batch.dim(2) != spec_.backbone.input_size || batch.dim(3) != spec_.backbone.input_size)
        throw ShapeError("forward: batch " + batch.shape_str() + " does not match stem input [N," +
                         std::to_string(spec_.backbone.input_ch) + "," +
                         std::to_string(spec_.backbone.input_size) + "," +
                         std::to_string(spec_.backbone.input_size) + "]");

    Outputs out;
    const int N = batch.dim(0);
    Tensor x = run_layers(tape, batch, spec_.backbone.stem, "stem");
    std::size_t next_exit = 0;
    for (int b = 0; b < spec_.backbone.num_blocks(); ++b) {
        x = run_layers(tape, x, spec_.backbone.blocks[static_cast<std::size_t>(b)],
                       "block" + std::to_string(b + 1));
        while (next_exit < spec_.exits.size() &&
               spec_.exits[next_exit].attach_block == b + 1) {
            const std::string prefix = "exit" + std::to_string(next_exit + 1);
            Tensor feat = run_layers(tape, x, spec_.exits[next_exit].shared, prefix + ".shared");
            out.logits.push_back(
                run_layers(tape, feat, spec_.exits[next_exit].classifier, prefix + ".cls"));
            out.confidences.push_back(
                run_layers(tape, feat, spec_.exits[next_exit].confidence, prefix + ".conf"));
            ++next_exit;
        }
    }
    out.logits.push_back(run_layers(tape, x, spec_.backbone.final_head, "final"));
    out.confidences.push_back(Tensor::full({N, 1}, 1.0));  // c_B = 1 by definition
    return out;
}

std::vector<Tensor> EennModel::parameters(bool backbone_and_final_only) const {
    std::vector<Tensor> out;
    for (const ParamEntry& p : params_)
        if (!backbone_and_final_only || p.backbone) out.push_back(p.tensor);
    return out;
}

NamedParams EennModel::named_parameters() const {
    NamedParams out;
    for (const ParamEntry& p : params_) out.emplace_back(p.name, p.tensor);
    return out;
}

void EennModel::save(const std::string& path) const { save_checkpoint(path, named_parameters()); }

void EennModel::load(const std::string& path) {
    const NamedParams loaded = load_checkpoint(path);
    if (loaded.size() != params_.size())
        throw ParseError("checkpoint has " + std::to_string(loaded.size()) +
                         " parameters, model expects " + std::to_string(params_.size()));
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        const auto& [name, tensor] = loaded[i];
        if (name != params_[i].name)
            throw ParseError("checkpoint parameter '" + name + "' at index " + std::to_string(i) +
                             ", expected '" + params_[i].name + "'");
        if (tensor.shape() != params_[i].tensor.shape())
            throw ParseError("checkpoint parameter '" + name + "' shape " + tensor.shape_str() +
                             ", expected " + params_[i].tensor.shape_str());
        params_[i].tensor.data() = tensor.data();
    }
}

std::vector<std::vector<double>> EennModel::snapshot_weights() const {
    std::vector<std::vector<double>> snap;
    snap.reserve(params_.size());
    for (const ParamEntry& p : params_) snap.push_back(p.tensor.data());
    return snap;
}

void EennModel::restore_weights(const std::vector<std::vector<double>>& snap) {
    if (snap.size() != params_.size())
        throw ContractError("weight snapshot size mismatch");
    for (std::size_t i = 0; i < snap.size(); ++i) params_[i].tensor.data() = snap[i];
}

std::vector<Tensor> cumulative_confidences(Tape& tape, const std::vector<Tensor>& conf) {
    if (conf.empty()) throw ContractError("cumulative_confidences: no exits");
    std::vector<Tensor> cr;
    cr.reserve(conf.size());
    Tensor remaining;  // prod_{k<i} (1 - c_k); starts at 1
    for (std::size_t i = 0; i < conf.size(); ++i) {
        if (i == 0) {
            cr.push_back(conf[0]);
            Tensor neg = ops::mul(tape, conf[0], Tensor::scalar(-1.0));
            remaining = ops::add(tape, neg, Tensor::scalar(1.0));
        } else {
            cr.push_back(ops::mul(tape, conf[i], remaining));
            if (i + 1 < conf.size()) {
                Tensor neg = ops::mul(tape, conf[i], Tensor::scalar(-1.0));
                Tensor one_minus = ops::add(tape, neg, Tensor::scalar(1.0));
                remaining = ops::mul(tape, one_minus, remaining);
            }
        }
    }
    return cr;
}

std::vector<double> cumulative_confidences(const std::vector<double>& conf) {
    if (conf.empty()) throw ContractError("cumulative_confidences: no exits");
    for (double c : conf)
        if (c < 0.0 || c > 1.0)
            throw ContractError("cumulative_confidences: confidence " + std::to_string(c) +
                                " outside [0,1]");
    std::vector<double> cr(conf.size());
    double remaining = 1.0;
    for (std::size_t i = 0; i < conf.size(); ++i) {
        cr[i] = conf[i] * remaining;
        remaining *= (1.0 - conf[i]);
    }
    return cr;
}

Tensor aggregate_outputs(Tape& tape, const std::vector<Tensor>& logits,
                         const std::vector<Tensor>& cumulative, int k) {
    if (k < 1 || k > static_cast<int>(logits.size()))
        throw ContractError("aggregate_outputs: k = " + std::to_string(k) + " outside [1, B]");
    Tensor acc = ops::mul(tape, logits[0], cumulative[0]);
    for (int i = 1; i < k; ++i) {
        Tensor term = ops::mul(tape, logits[static_cast<std::size_t>(i)],
                               cumulative[static_cast<std::size_t>(i)]);
        acc = ops::add(tape, acc, term);
    }
    return acc;
}

}  // namespace eenas
