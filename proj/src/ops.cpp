#include "eenas/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace eenas::ops {

namespace {

// C[M x N] += A[M x K] * B[K x N], row-major. The k-by-4 unroll amortizes
// the C row traffic over four fused multiply-adds per element.
void gemm_acc(const double* A, const double* B, double* C, int M, int K, int N) {
    const int k4 = K & ~3;
    for (int i = 0; i < M; ++i) {
        const double* a = A + static_cast<std::size_t>(i) * K;
        double* c = C + static_cast<std::size_t>(i) * N;
        int k = 0;
        for (; k < k4; k += 4) {
            const double a0 = a[k], a1 = a[k + 1], a2 = a[k + 2], a3 = a[k + 3];
            const double* b0 = B + static_cast<std::size_t>(k) * N;
            const double* b1 = b0 + N;
            const double* b2 = b1 + N;
            const double* b3 = b2 + N;
            for (int j = 0; j < N; ++j)
                c[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
        for (; k < K; ++k) {
            const double av = a[k];
            const double* b = B + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// col: [C*K*K, Ho*Wo]
void im2col(const double* x, int C, int H, int W, int K, int stride, int pad,
            int Ho, int Wo, double* col) {
    std::size_t idx = 0;
    for (int c = 0; c < C; ++c) {
        const double* xc = x + static_cast<std::size_t>(c) * H * W;
        for (int ki = 0; ki < K; ++ki) {
            for (int kj = 0; kj < K; ++kj) {
                for (int oi = 0; oi < Ho; ++oi) {
                    const int ii = oi * stride - pad + ki;
                    if (ii < 0 || ii >= H) {
                        for (int oj = 0; oj < Wo; ++oj) col[idx++] = 0.0;
                        continue;
                    }
                    const double* xr = xc + static_cast<std::size_t>(ii) * W;
                    for (int oj = 0; oj < Wo; ++oj) {
                        const int jj = oj * stride - pad + kj;
                        col[idx++] = (jj >= 0 && jj < W) ? xr[jj] : 0.0;
                    }
                }
            }
        }
    }
}

// colT: [Ho*Wo, C*K*K]
void im2colT(const double* x, int C, int H, int W, int K, int stride, int pad,
             int Ho, int Wo, double* colT) {
    const int ckk = C * K * K;
    for (int c = 0; c < C; ++c) {
        const double* xc = x + static_cast<std::size_t>(c) * H * W;
        for (int ki = 0; ki < K; ++ki) {
            for (int kj = 0; kj < K; ++kj) {
                const int row = (c * K + ki) * K + kj;
                for (int oi = 0; oi < Ho; ++oi) {
                    const int ii = oi * stride - pad + ki;
                    for (int oj = 0; oj < Wo; ++oj) {
                        const int jj = oj * stride - pad + kj;
                        const double v = (ii >= 0 && ii < H && jj >= 0 && jj < W)
                                             ? xc[static_cast<std::size_t>(ii) * W + jj]
                                             : 0.0;
                        colT[static_cast<std::size_t>(oi * Wo + oj) * ckk + row] = v;
                    }
                }
            }
        }
    }
}

// Scatter-add dcol [C*K*K, Ho*Wo] back into dx [C,H,W].
void col2im_acc(const double* dcol, int C, int H, int W, int K, int stride, int pad,
                int Ho, int Wo, double* dx) {
    std::size_t idx = 0;
    for (int c = 0; c < C; ++c) {
        double* xc = dx + static_cast<std::size_t>(c) * H * W;
        for (int ki = 0; ki < K; ++ki) {
            for (int kj = 0; kj < K; ++kj) {
                for (int oi = 0; oi < Ho; ++oi) {
                    const int ii = oi * stride - pad + ki;
                    if (ii < 0 || ii >= H) {
                        idx += static_cast<std::size_t>(Wo);
                        continue;
                    }
                    double* xr = xc + static_cast<std::size_t>(ii) * W;
                    for (int oj = 0; oj < Wo; ++oj, ++idx) {
                        const int jj = oj * stride - pad + kj;
                        if (jj >= 0 && jj < W) xr[jj] += dcol[idx];
                    }
                }
            }
        }
    }
}

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
    for (const Tensor* t : ts)
        if (t->requires_grad()) return true;
    return false;
}

void check_finite(const Tensor& t, const char* op) {
    for (double v : t.data()) {
        if (!std::isfinite(v))
            throw NumericError(std::string(op) + ": non-finite input value");
    }
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b,
              int stride, int pad) {
    if (x.rank() != 4)
        throw ShapeError("conv2d: input must be [N,C,H,W], got " + x.shape_str());
    if (w.rank() != 4)
        throw ShapeError("conv2d: weight must be [Co,Ci,K,K], got " + w.shape_str());
    if (w.dim(2) != w.dim(3))
        throw ShapeError("conv2d: kernel must be square, got " + w.shape_str());
    if (x.dim(1) != w.dim(1))
        throw ShapeError("conv2d: channel mismatch, input " + x.shape_str() + " vs weight " +
                         w.shape_str());
    if (stride < 1 || pad < 0) throw ShapeError("conv2d: invalid stride/pad");
    const bool has_bias = b.numel() > 0 && b.rank() > 0 && !(b.rank() == 1 && b.dim(0) == 0);
    if (has_bias && !(b.rank() == 1 && b.dim(0) == w.dim(0)))
        throw ShapeError("conv2d: bias must be [Co], got " + b.shape_str());

    const int N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Co = w.dim(0), K = w.dim(2);
    const int Ho = (H + 2 * pad - K) / stride + 1;
    const int Wo = (W + 2 * pad - K) / stride + 1;
    if (H + 2 * pad < K || W + 2 * pad < K)
        throw ShapeError("conv2d: kernel " + std::to_string(K) + " exceeds padded input " +
                         x.shape_str());

    Tensor y = Tensor::zeros({N, Co, Ho, Wo});
    const int ckk = Ci * K * K;
    const int hw = Ho * Wo;
    std::vector<double> col(static_cast<std::size_t>(ckk) * hw);
    const double* xd = x.data().data();
    const double* wd = w.data().data();
    double* yd = y.data().data();
    for (int n = 0; n < N; ++n) {
        im2col(xd + static_cast<std::size_t>(n) * Ci * H * W, Ci, H, W, K, stride, pad, Ho, Wo,
               col.data());
        gemm_acc(wd, col.data(), yd + static_cast<std::size_t>(n) * Co * hw, Co, ckk, hw);
    }
    if (has_bias) {
        const double* bd = b.data().data();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < Co; ++c) {
                double* row = yd + (static_cast<std::size_t>(n) * Co + c) * hw;
                for (int k = 0; k < hw; ++k) row[k] += bd[c];
            }
    }

    if (tape.recording() && any_requires_grad({&x, &w, &b})) {
        y.set_requires_grad(true);
        Tensor xc = x, wc = w, bc = b, yc = y;
        tape.record("conv2d", y, [xc, wc, bc, yc, stride, pad, N, Ci, H, W, Co, K, Ho, Wo,
                                  has_bias]() mutable {
            const auto& gy = yc.grad_view();
            const int ckk = Ci * K * K;
            const int hw = Ho * Wo;
            const double* wd = wc.data().data();
            if (wc.requires_grad() || bc.requires_grad()) {
                std::vector<double> colT(static_cast<std::size_t>(hw) * ckk);
                double* gw = wc.requires_grad() ? wc.grad().data() : nullptr;
                double* gb = (has_bias && bc.requires_grad()) ? bc.grad().data() : nullptr;
                for (int n = 0; n < N; ++n) {
                    const double* gyn = gy.data() + static_cast<std::size_t>(n) * Co * hw;
                    if (gw) {
                        im2colT(xc.data().data() + static_cast<std::size_t>(n) * Ci * H * W, Ci,
                                H, W, K, stride, pad, Ho, Wo, colT.data());
                        gemm_acc(gyn, colT.data(), gw, Co, hw, ckk);
                    }
                    if (gb) {
                        for (int c = 0; c < Co; ++c) {
                            const double* row = gyn + static_cast<std::size_t>(c) * hw;
                            double s = 0.0;
                            for (int k = 0; k < hw; ++k) s += row[k];
                            gb[c] += s;
                        }
                    }
                }
            }
            if (xc.requires_grad()) {
                // dcol = w^T * gy, then scatter back through the patches.
                std::vector<double> wT(static_cast<std::size_t>(ckk) * Co);
                for (int i = 0; i < Co; ++i)
                    for (int j = 0; j < ckk; ++j)
                        wT[static_cast<std::size_t>(j) * Co + i] =
                            wd[static_cast<std::size_t>(i) * ckk + j];
                std::vector<double> dcol(static_cast<std::size_t>(ckk) * hw);
                double* gx = xc.grad().data();
                for (int n = 0; n < N; ++n) {
                    const double* gyn = gy.data() + static_cast<std::size_t>(n) * Co * hw;
                    std::fill(dcol.begin(), dcol.end(), 0.0);
                    gemm_acc(wT.data(), gyn, dcol.data(), ckk, Co, hw);
                    col2im_acc(dcol.data(), Ci, H, W, K, stride, pad, Ho, Wo,
                               gx + static_cast<std::size_t>(n) * Ci * H * W);
                }
            }
        });
    }
    return y;
}

Tensor dense(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 2) throw ShapeError("dense: input must be [N,F], got " + x.shape_str());
    if (w.rank() != 2) throw ShapeError("dense: weight must be [F,O], got " + w.shape_str());
    if (x.dim(1) != w.dim(0))
        throw ShapeError("dense: feature mismatch, input " + x.shape_str() + " vs weight " +
                         w.shape_str());
    const bool has_bias = b.numel() > 0;
    if (has_bias && !(b.rank() == 1 && b.dim(0) == w.dim(1)))
        throw ShapeError("dense: bias must be [O], got " + b.shape_str());

    const int N = x.dim(0), F = x.dim(1), O = w.dim(1);
    Tensor y = Tensor::zeros({N, O});
    gemm_acc(x.data().data(), w.data().data(), y.data().data(), N, F, O);
    if (has_bias) {
        double* yd = y.data().data();
        const double* bd = b.data().data();
        for (int n = 0; n < N; ++n)
            for (int o = 0; o < O; ++o) yd[static_cast<std::size_t>(n) * O + o] += bd[o];
    }

    if (tape.recording() && any_requires_grad({&x, &w, &b})) {
        y.set_requires_grad(true);
        Tensor xc = x, wc = w, bc = b, yc = y;
        tape.record("dense", y, [xc, wc, bc, yc, N, F, O, has_bias]() mutable {
            const auto& gy = yc.grad_view();
            if (xc.requires_grad()) {
                // gx += gy * w^T
                std::vector<double> wT(static_cast<std::size_t>(O) * F);
                const double* wd = wc.data().data();
                for (int f = 0; f < F; ++f)
                    for (int o = 0; o < O; ++o)
                        wT[static_cast<std::size_t>(o) * F + f] =
                            wd[static_cast<std::size_t>(f) * O + o];
                gemm_acc(gy.data(), wT.data(), xc.grad().data(), N, O, F);
            }
            if (wc.requires_grad()) {
                // gw[f,o] += sum_n x[n,f] * gy[n,o]
                double* gw = wc.grad().data();
                const double* xd = xc.data().data();
                for (int n = 0; n < N; ++n) {
                    const double* xr = xd + static_cast<std::size_t>(n) * F;
                    const double* gr = gy.data() + static_cast<std::size_t>(n) * O;
                    for (int f = 0; f < F; ++f) {
                        const double xv = xr[f];
                        double* gwr = gw + static_cast<std::size_t>(f) * O;
                        for (int o = 0; o < O; ++o) gwr[o] += xv * gr[o];
                    }
                }
            }
            if (has_bias && bc.requires_grad()) {
                double* gb = bc.grad().data();
                for (int n = 0; n < N; ++n) {
                    const double* gr = gy.data() + static_cast<std::size_t>(n) * O;
                    for (int o = 0; o < O; ++o) gb[o] += gr[o];
                }
            }
        });
    }
    return y;
}

Tensor relu(Tape& tape, const Tensor& x) {
    Tensor y = Tensor::zeros(x.shape());
    const auto& xd = x.data();
    auto& yd = y.data();
    for (std::size_t i = 0; i < xd.size(); ++i) yd[i] = xd[i] > 0.0 ? xd[i] : 0.0;
    if (tape.recording() && x.requires_grad()) {
        y.set_requires_grad(true);
        Tensor xc = x, yc = y;
        tape.record("relu", y, [xc, yc]() mutable {
            const auto& gy = yc.grad_view();
            const auto& xd = xc.data();
            auto& gx = xc.grad();
            for (std::size_t i = 0; i < xd.size(); ++i)
                if (xd[i] > 0.0) gx[i] += gy[i];
        });
    }
    return y;
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
    Tensor y = Tensor::zeros(x.shape());
    const auto& xd = x.data();
    auto& yd = y.data();
    for (std::size_t i = 0; i < xd.size(); ++i) yd[i] = 1.0 / (1.0 + std::exp(-xd[i]));
    if (tape.recording() && x.requires_grad()) {
        y.set_requires_grad(true);
        Tensor xc = x, yc = y;
        tape.record("sigmoid", y, [xc, yc]() mutable {
            const auto& gy = yc.grad_view();
            const auto& yd = yc.data();
            auto& gx = xc.grad();
            for (std::size_t i = 0; i < yd.size(); ++i) gx[i] += gy[i] * yd[i] * (1.0 - yd[i]);
        });
    }
    return y;
}

Tensor maxpool2d(Tape& tape, const Tensor& x, int window, int stride) {
    if (x.rank() != 4)
        throw ShapeError("maxpool2d: input must be [N,C,H,W], got " + x.shape_str());
    if (window < 1) throw ShapeError("maxpool2d: window must be >= 1");
    if (stride <= 0) stride = window;
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (window > H || window > W)
        throw ShapeError("maxpool2d: window " + std::to_string(window) + " exceeds input " +
                         x.shape_str());
    const int Ho = (H - window) / stride + 1;
    const int Wo = (W - window) / stride + 1;

    Tensor y = Tensor::zeros({N, C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<int>>(y.numel());
    const double* xd = x.data().data();
    double* yd = y.data().data();
    std::size_t oi_flat = 0;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double* plane = xd + (static_cast<std::size_t>(n) * C + c) * H * W;
            for (int oi = 0; oi < Ho; ++oi)
                for (int oj = 0; oj < Wo; ++oj, ++oi_flat) {
                    int best = (oi * stride) * W + oj * stride;
                    double bv = plane[best];
                    for (int ki = 0; ki < window; ++ki)
                        for (int kj = 0; kj < window; ++kj) {
                            const int idx = (oi * stride + ki) * W + (oj * stride + kj);
                            if (plane[idx] > bv) {
                                bv = plane[idx];
                                best = idx;
                            }
                        }
                    yd[oi_flat] = bv;
                    (*argmax)[oi_flat] = best;
                }
        }

    if (tape.recording() && x.requires_grad()) {
        y.set_requires_grad(true);
        Tensor xc = x, yc = y;
        tape.record("maxpool2d", y, [xc, yc, argmax, N, C, H, W, Ho, Wo]() mutable {
            const auto& gy = yc.grad_view();
            auto& gx = xc.grad();
            std::size_t oi_flat = 0;
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    const std::size_t base = (static_cast<std::size_t>(n) * C + c) * H * W;
                    const std::size_t cnt = static_cast<std::size_t>(Ho) * Wo;
                    for (std::size_t k = 0; k < cnt; ++k, ++oi_flat)
                        gx[base + (*argmax)[oi_flat]] += gy[oi_flat];
                }
        });
    }
    return y;
}

Tensor flatten(Tape& tape, const Tensor& x) {
    if (x.rank() < 2) throw ShapeError("flatten: input rank must be >= 2, got " + x.shape_str());
    const int N = x.dim(0);
    const int F = static_cast<int>(x.numel()) / N;
    Tensor y = Tensor::from_data({N, F}, x.data());
    if (tape.recording() && x.requires_grad()) {
        y.set_requires_grad(true);
        Tensor xc = x, yc = y;
        tape.record("flatten", y, [xc, yc]() mutable {
            const auto& gy = yc.grad_view();
            auto& gx = xc.grad();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
        });
    }
    return y;
}

namespace {

void softmax_rows(const double* x, double* y, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const double* xr = x + static_cast<std::size_t>(r) * cols;
        double* yr = y + static_cast<std::size_t>(r) * cols;
        double mx = xr[0];
        for (int c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
        double s = 0.0;
        for (int c = 0; c < cols; ++c) {
            yr[c] = std::exp(xr[c] - mx);
            s += yr[c];
        }
        for (int c = 0; c < cols; ++c) yr[c] /= s;
    }
}

}  // namespace

Tensor softmax(Tape& tape, const Tensor& x) {
    if (x.rank() != 1 && x.rank() != 2)
        throw ShapeError("softmax: input must be [C] or [N,C], got " + x.shape_str());
    const int rows = x.rank() == 2 ? x.dim(0) : 1;
    const int cols = x.rank() == 2 ? x.dim(1) : x.dim(0);
    Tensor y = Tensor::zeros(x.shape());
    softmax_rows(x.data().data(), y.data().data(), rows, cols);
    if (tape.recording() && x.requires_grad()) {
        y.set_requires_grad(true);
        Tensor xc = x, yc = y;
        tape.record("softmax", y, [xc, yc, rows, cols]() mutable {
            const auto& gy = yc.grad_view();
            const auto& yd = yc.data();
            auto& gx = xc.grad();
            for (int r = 0; r < rows; ++r) {
                const std::size_t off = static_cast<std::size_t>(r) * cols;
                double dot = 0.0;
                for (int c = 0; c < cols; ++c) dot += gy[off + c] * yd[off + c];
                for (int c = 0; c < cols; ++c)
                    gx[off + c] += yd[off + c] * (gy[off + c] - dot);
            }
        });
    }
    return y;
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2)
        throw ShapeError("cross_entropy: logits must be [N,C], got " + logits.shape_str());
    const int N = logits.dim(0), C = logits.dim(1);
    if (static_cast<int>(labels.size()) != N)
        throw ShapeError("cross_entropy: got " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(N));
    for (int l : labels)
        if (l < 0 || l >= C)
            throw ShapeError("cross_entropy: label " + std::to_string(l) + " outside [0," +
                             std::to_string(C) + ")");

    auto probs = std::make_shared<std::vector<double>>(logits.numel());
    softmax_rows(logits.data().data(), probs->data(), N, C);
    double loss = 0.0;
    for (int n = 0; n < N; ++n) {
        const double p = (*probs)[static_cast<std::size_t>(n) * C + labels[n]];
        loss -= std::log(std::max(p, 1e-300));
    }
    Tensor y = Tensor::scalar(loss / N);

    if (tape.recording() && logits.requires_grad()) {
        y.set_requires_grad(true);
        Tensor lc = logits, yc = y;
        auto lab = std::make_shared<std::vector<int>>(labels);
        tape.record("cross_entropy", y, [lc, yc, probs, lab, N, C]() mutable {
            const double g = yc.grad_view()[0] / N;
            auto& gx = lc.grad();
            for (int n = 0; n < N; ++n) {
                const std::size_t off = static_cast<std::size_t>(n) * C;
                for (int c = 0; c < C; ++c) {
                    const double onehot = (c == (*lab)[n]) ? 1.0 : 0.0;
                    gx[off + c] += g * ((*probs)[off + c] - onehot);
                }
            }
        });
    }
    return y;
}

namespace {

enum class Broadcast { None, Scalar, Row };

Broadcast broadcast_mode(const Tensor& a, const Tensor& b, const char* op, bool allow_row) {
    if (a.shape() == b.shape()) return Broadcast::None;
    if (b.numel() == 1) return Broadcast::Scalar;
    if (allow_row && a.rank() == 2 && b.rank() == 2 && b.dim(1) == 1 && a.dim(0) == b.dim(0))
        return Broadcast::Row;
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                     b.shape_str());
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    const Broadcast mode = broadcast_mode(a, b, "add", false);
    Tensor y = Tensor::zeros(a.shape());
    const auto& ad = a.data();
    const auto& bd = b.data();
    auto& yd = y.data();
    if (mode == Broadcast::None)
        for (std::size_t i = 0; i < ad.size(); ++i) yd[i] = ad[i] + bd[i];
    else
        for (std::size_t i = 0; i < ad.size(); ++i) yd[i] = ad[i] + bd[0];

    if (tape.recording() && any_requires_grad({&a, &b})) {
        y.set_requires_grad(true);
        Tensor ac = a, bc = b, yc = y;
        tape.record("add", y, [ac, bc, yc, mode]() mutable {
            const auto& gy = yc.grad_view();
            if (ac.requires_grad()) {
                auto& ga = ac.grad();
                for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
            }
            if (bc.requires_grad()) {
                auto& gb = bc.grad();
                if (mode == Broadcast::None)
                    for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
                else
                    for (double g : gy) gb[0] += g;
            }
        });
    }
    return y;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    const Broadcast mode = broadcast_mode(a, b, "mul", true);
    Tensor y = Tensor::zeros(a.shape());
    const auto& ad = a.data();
    const auto& bd = b.data();
    auto& yd = y.data();
    const int cols = (mode == Broadcast::Row) ? a.dim(1) : 1;
    switch (mode) {
        case Broadcast::None:
            for (std::size_t i = 0; i < ad.size(); ++i) yd[i] = ad[i] * bd[i];
            break;
        case Broadcast::Scalar:
            for (std::size_t i = 0; i < ad.size(); ++i) yd[i] = ad[i] * bd[0];
            break;
        case Broadcast::Row:
            for (std::size_t i = 0; i < ad.size(); ++i) yd[i] = ad[i] * bd[i / cols];
            break;
    }

    if (tape.recording() && any_requires_grad({&a, &b})) {
        y.set_requires_grad(true);
        Tensor ac = a, bc = b, yc = y;
        tape.record("mul", y, [ac, bc, yc, mode, cols]() mutable {
            const auto& gy = yc.grad_view();
            const auto& ad = ac.data();
            const auto& bd = bc.data();
            if (ac.requires_grad()) {
                auto& ga = ac.grad();
                switch (mode) {
                    case Broadcast::None:
                        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bd[i];
                        break;
                    case Broadcast::Scalar:
                        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bd[0];
                        break;
                    case Broadcast::Row:
                        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bd[i / cols];
                        break;
                }
            }
            if (bc.requires_grad()) {
                auto& gb = bc.grad();
                switch (mode) {
                    case Broadcast::None:
                        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * ad[i];
                        break;
                    case Broadcast::Scalar:
                        for (std::size_t i = 0; i < gy.size(); ++i) gb[0] += gy[i] * ad[i];
                        break;
                    case Broadcast::Row:
                        for (std::size_t i = 0; i < gy.size(); ++i) gb[i / cols] += gy[i] * ad[i];
                        break;
                }
            }
        });
    }
    return y;
}

Tensor mse(Tape& tape, const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape())
        throw ShapeError("mse: shape mismatch " + pred.shape_str() + " vs " + target.shape_str());
    const auto& pd = pred.data();
    const auto& td = target.data();
    double s = 0.0;
    for (std::size_t i = 0; i < pd.size(); ++i) {
        const double d = pd[i] - td[i];
        s += d * d;
    }
    const double inv_n = 1.0 / static_cast<double>(pd.size());
    Tensor y = Tensor::scalar(s * inv_n);
    if (tape.recording() && any_requires_grad({&pred, &target})) {
        y.set_requires_grad(true);
        Tensor pc = pred, tc = target, yc = y;
        tape.record("mse", y, [pc, tc, yc, inv_n]() mutable {
            const double g = yc.grad_view()[0];
            const auto& pd = pc.data();
            const auto& td = tc.data();
            if (pc.requires_grad()) {
                auto& gp = pc.grad();
                for (std::size_t i = 0; i < pd.size(); ++i)
                    gp[i] += g * 2.0 * (pd[i] - td[i]) * inv_n;
            }
            if (tc.requires_grad()) {
                auto& gt = tc.grad();
                for (std::size_t i = 0; i < pd.size(); ++i)
                    gt[i] -= g * 2.0 * (pd[i] - td[i]) * inv_n;
            }
        });
    }
    return y;
}

Tensor bce(Tape& tape, const Tensor& probs, const Tensor& targets) {
    if (probs.shape() != targets.shape())
        throw ShapeError("bce: shape mismatch " + probs.shape_str() + " vs " +
                         targets.shape_str());
    constexpr double kEps = 1e-12;
    const auto& pd = probs.data();
    const auto& td = targets.data();
    double s = 0.0;
    for (std::size_t i = 0; i < pd.size(); ++i) {
        const double p = std::clamp(pd[i], kEps, 1.0 - kEps);
        s -= td[i] * std::log(p) + (1.0 - td[i]) * std::log(1.0 - p);
    }
    const double inv_n = 1.0 / static_cast<double>(pd.size());
    Tensor y = Tensor::scalar(s * inv_n);
    if (tape.recording() && probs.requires_grad()) {
        y.set_requires_grad(true);
        Tensor pc = probs, tc = targets, yc = y;
        tape.record("bce", y, [pc, tc, yc, inv_n]() mutable {
            constexpr double kEps = 1e-12;
            const double g = yc.grad_view()[0];
            const auto& pd = pc.data();
            const auto& td = tc.data();
            auto& gp = pc.grad();
            for (std::size_t i = 0; i < pd.size(); ++i) {
                const double p = std::clamp(pd[i], kEps, 1.0 - kEps);
                gp[i] += g * inv_n * (p - td[i]) / (p * (1.0 - p));
            }
        });
    }
    return y;
}

Tensor mean(Tape& tape, const Tensor& x) {
    const double inv_n = 1.0 / static_cast<double>(x.numel());
    double s = 0.0;
    for (double v : x.data()) s += v;
    Tensor y = Tensor::scalar(s * inv_n);
    if (tape.recording() && x.requires_grad()) {
        y.set_requires_grad(true);
        Tensor xc = x, yc = y;
        tape.record("mean", y, [xc, yc, inv_n]() mutable {
            const double g = yc.grad_view()[0] * inv_n;
            auto& gx = xc.grad();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
        });
    }
    return y;
}

OpTag op_tag_from_string(const std::string& name) {
    if (name == "conv2d") return OpTag::Conv2d;
    if (name == "dense") return OpTag::Dense;
    if (name == "relu") return OpTag::Relu;
    if (name == "sigmoid") return OpTag::Sigmoid;
    if (name == "maxpool2d") return OpTag::Maxpool2d;
    if (name == "flatten") return OpTag::Flatten;
    if (name == "softmax") return OpTag::Softmax;
    if (name == "cross_entropy") return OpTag::CrossEntropy;
    if (name == "add") return OpTag::Add;
    if (name == "mul") return OpTag::Mul;
    if (name == "mse") return OpTag::Mse;
    if (name == "bce") return OpTag::Bce;
    if (name == "mean") return OpTag::Mean;
    throw ContractError("unknown op tag: " + name);
}

Tensor primitive_forward(Tape& tape, OpTag tag, const std::vector<Tensor>& inputs,
                         const OpAttrs& attrs) {
    auto need = [&](std::size_t lo, std::size_t hi, const char* op) {
        if (inputs.size() < lo || inputs.size() > hi)
            throw ContractError(std::string(op) + ": wrong input count " +
                                std::to_string(inputs.size()));
    };
    for (const Tensor& t : inputs) check_finite(t, "primitive_forward");

    switch (tag) {
        case OpTag::Conv2d:
            need(2, 3, "conv2d");
            return conv2d(tape, inputs[0], inputs[1], inputs.size() > 2 ? inputs[2] : Tensor(),
                          attrs.stride, attrs.pad);
        case OpTag::Dense:
            need(2, 3, "dense");
            return dense(tape, inputs[0], inputs[1], inputs.size() > 2 ? inputs[2] : Tensor());
        case OpTag::Relu:
            need(1, 1, "relu");
            return relu(tape, inputs[0]);
        case OpTag::Sigmoid:
            need(1, 1, "sigmoid");
            return sigmoid(tape, inputs[0]);
        case OpTag::Maxpool2d:
            need(1, 1, "maxpool2d");
            return maxpool2d(tape, inputs[0], attrs.window, attrs.stride);
        case OpTag::Flatten:
            need(1, 1, "flatten");
            return flatten(tape, inputs[0]);
        case OpTag::Softmax:
            need(1, 1, "softmax");
            return softmax(tape, inputs[0]);
        case OpTag::CrossEntropy: {
            need(2, 2, "cross_entropy");
            std::vector<int> labels(inputs[1].numel());
            for (std::size_t i = 0; i < labels.size(); ++i) {
                const double v = inputs[1].data()[i];
                labels[i] = static_cast<int>(v);
                if (static_cast<double>(labels[i]) != v)
                    throw ShapeError("cross_entropy: non-integral label " + std::to_string(v));
            }
            return cross_entropy(tape, inputs[0], labels);
        }
        case OpTag::Add:
            need(2, 2, "add");
            return add(tape, inputs[0], inputs[1]);
        case OpTag::Mul:
            need(2, 2, "mul");
            return mul(tape, inputs[0], inputs[1]);
        case OpTag::Mse:
            need(2, 2, "mse");
            return mse(tape, inputs[0], inputs[1]);
        case OpTag::Bce:
            need(2, 2, "bce");
            return bce(tape, inputs[0], inputs[1]);
        case OpTag::Mean:
            need(1, 1, "mean");
            return mean(tape, inputs[0]);
    }
    throw ContractError("unhandled op tag");
}

}  // namespace eenas::ops
