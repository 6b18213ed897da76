#pragma once

#include <optional>
#include <string>
#include <vector>

#include "eenas/tape.hpp"
#include "eenas/tensor.hpp"

namespace eenas::ops {

// Forward follows standard convolution/pooling arithmetic with explicit
// padding; the tape records the application when any input requires grad.

/// x:[N,Ci,H,W], w:[Co,Ci,K,K], b:[Co] or empty tensor (numel 0 via default Tensor)
Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b,
              int stride, int pad);

/// x:[N,F], w:[F,O], b:[O] or empty
Tensor dense(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b);

Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);

/// Non-overlapping by default: stride == window when stride <= 0.
Tensor maxpool2d(Tape& tape, const Tensor& x, int window, int stride = -1);

/// [N, ...] -> [N, prod(rest)]
Tensor flatten(Tape& tape, const Tensor& x);

/// Row-wise on [N,C]; a rank-1 tensor is treated as a single row.
Tensor softmax(Tape& tape, const Tensor& x);

/// Mean over the batch of -log softmax(logits)[label].
Tensor cross_entropy(Tape& tape, const Tensor& logits, const std::vector<int>& labels);

/// Elementwise; b may also be a scalar (broadcast).
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);

/// Elementwise; b may be a scalar, or [N,1] against a [N,C] (row broadcast).
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

/// Mean of squared differences over all elements. No gradient into target.
Tensor mse(Tape& tape, const Tensor& pred, const Tensor& target);

/// Mean binary cross-entropy; probs clamped to [1e-12, 1-1e-12].
/// No gradient into targets.
Tensor bce(Tape& tape, const Tensor& probs, const Tensor& targets);

/// Mean over all elements -> scalar.
Tensor mean(Tape& tape, const Tensor& x);

enum class OpTag {
    Conv2d, Dense, Relu, Sigmoid, Maxpool2d, Flatten,
    Softmax, CrossEntropy, Add, Mul, Mse, Bce, Mean,
};

OpTag op_tag_from_string(const std::string& name);

struct OpAttrs {
    int stride = 1;
    int pad = 0;
    int window = 0;
};

/// Generic entry point over the primitive table. Validates that every input
/// is finite (rejecting otherwise with a numeric-domain error) and dispatches
/// on the tag. cross_entropy takes its labels as a [N] tensor of class ids.
Tensor primitive_forward(Tape& tape, OpTag tag, const std::vector<Tensor>& inputs,
                         const OpAttrs& attrs = {});

}  // namespace eenas::ops
