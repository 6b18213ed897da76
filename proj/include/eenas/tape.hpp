#pragma once

#include <functional>
#include <string>
#include <vector>

#include "eenas/tensor.hpp"

namespace eenas {

/// Records primitive applications in execution order. Inputs of a node are
/// always created before the node itself, so a single reverse sweep is a
/// valid reverse-topological traversal visiting each node exactly once.
class Tape {
public:
    struct Node {
        const char* op;
        Tensor output;
        std::function<void()> backward;
    };

    void record(const char* op, Tensor output, std::function<void()> backward) {
        if (recording_) nodes_.push_back({op, std::move(output), std::move(backward)});
    }

    bool recording() const { return recording_; }
    void set_recording(bool v) { recording_ = v; }

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }
    const std::vector<Node>& nodes() const { return nodes_; }

    /// Seeds d(loss)/d(loss)=1 and sweeps the recorded nodes in reverse,
    /// accumulating gradients additively across fan-out.
    void backward(const Tensor& loss) {
        if (loss.numel() != 1)
            throw ContractError("backward requires a scalar loss, got shape " + loss.shape_str());
        Tensor l = loss;
        l.grad()[0] += 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            if (it->output.has_grad()) it->backward();
        }
    }

private:
    std::vector<Node> nodes_;
    bool recording_ = true;
};

}  // namespace eenas
