#pragma once
#include <Eigen/Core>
#include <functional>
#include <memory>
#include <vector>

#include "lfseg/core/error.hpp"
#include "lfseg/core/rng.hpp"
#include "lfseg/core/tensor.hpp"

namespace lfseg {

/// Argmax over channels; ties resolve to the lowest class id.
template <typename T>
Grid<std::uint8_t> argmax_channels(const Tensor<T>& t) {
    Grid<std::uint8_t> out(t.height(), t.width());
    const std::size_t plane = t.plane_size();
    for (std::size_t i = 0; i < plane; ++i) {
        int best = 0;
        T best_v = t.data()[i];
        for (int c = 1; c < t.channels(); ++c) {
            T v = t.plane(c)[i];
            if (v > best_v) {
                best_v = v;
                best = c;
            }
        }
        out.data()[i] = static_cast<std::uint8_t>(best);
    }
    return out;
}

namespace netops {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

/// Patch matrix for a same-padded square convolution: column (ic*k*k + ky*k +
/// kx) is channel ic shifted by the (dilated) kernel offset, zero outside the
/// canvas. Row index is the flattened output position y*W + x, so the product
/// cols * weights is the convolution.
template <typename T>
void im2col(const Tensor<T>& x, int kernel, int dilation, Matrix<T>& cols) {
    const int h = x.height(), w = x.width(), ic = x.channels();
    const int pad = dilation * (kernel - 1) / 2;
    const std::size_t hw = x.plane_size();
    cols.resize(static_cast<Eigen::Index>(hw), static_cast<Eigen::Index>(ic) * kernel * kernel);
    for (int c = 0; c < ic; ++c) {
        const T* src = x.plane(c);
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                T* col = cols.data() + (static_cast<std::size_t>(c) * kernel * kernel + ky * kernel + kx) * hw;
                const int dy = ky * dilation - pad;
                const int dx = kx * dilation - pad;
                const int x_lo = std::max(0, -dx), x_hi = std::min(w, w - dx);
                std::fill(col, col + hw, T(0));
                if (x_lo >= x_hi) continue;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    const T* row = src + static_cast<std::size_t>(sy) * w + dx;
                    std::copy(row + x_lo, row + x_hi, col + static_cast<std::size_t>(y) * w + x_lo);
                }
            }
        }
    }
}

/// Transpose of im2col: scatter-add patch-matrix gradients back onto the
/// input planes.
template <typename T>
void col2im_add(const Matrix<T>& cols, int kernel, int dilation, Tensor<T>& dx) {
    const int h = dx.height(), w = dx.width(), ic = dx.channels();
    const int pad = dilation * (kernel - 1) / 2;
    const std::size_t hw = dx.plane_size();
    for (int c = 0; c < ic; ++c) {
        T* dst = dx.plane(c);
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                const T* col = cols.data() + (static_cast<std::size_t>(c) * kernel * kernel + ky * kernel + kx) * hw;
                const int dy = ky * dilation - pad;
                const int dxo = kx * dilation - pad;
                const int x_lo = std::max(0, -dxo), x_hi = std::min(w, w - dxo);
                if (x_lo >= x_hi) continue;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    T* row = dst + static_cast<std::size_t>(sy) * w + dxo;
                    const T* src = col + static_cast<std::size_t>(y) * w;
                    for (int xx = x_lo; xx < x_hi; ++xx) row[xx] += src[xx];
                }
            }
        }
    }
}

} // namespace netops

/// Reverse-mode tape over Tensor<T> feature maps. Every op appends its
/// backward closure; backward() replays them in reverse. Gradients are
/// allocated lazily, so subgraphs that do not reach the seed node cost
/// nothing.
template <typename T>
class Graph {
public:
    using NodeId = int;
    using Matrix = netops::Matrix<T>;

    NodeId input(Tensor<T> value) {
        nodes_.push_back(Node{std::move(value), {}});
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    NodeId parameter(const Tensor<T>& value) { return input(value); }

    const Tensor<T>& value(NodeId id) const { return nodes_[id].value; }
    bool has_grad(NodeId id) const { return !nodes_[id].grad.empty(); }
    const Tensor<T>& grad(NodeId id) const { return nodes_[id].grad; }

    // -- convolutions --------------------------------------------------------

    /// Same-padded square convolution. Weights: Tensor(1, OC, IC*k*k) whose
    /// buffer is the column-major (IC*k*k) x OC matrix; bias: Tensor(1,1,OC).
    NodeId conv2d(NodeId x, NodeId w, NodeId b, int kernel, int dilation = 1) {
        const Tensor<T>& xv = nodes_[x].value;
        const Tensor<T>& wv = nodes_[w].value;
        const int ic = xv.channels(), oc = wv.height();
        const int k2 = kernel * kernel;
        if (wv.width() != ic * k2) throw ShapeError("conv2d: weight shape mismatch");
        if (nodes_[b].value.width() != oc) throw ShapeError("conv2d: bias shape mismatch");
        Tensor<T> out(oc, xv.height(), xv.width());
        const auto wmap = weight_map(w, ic * k2, oc);
        const auto bias = bias_map(b, oc);
        if (kernel == 1) {
            out.mat().noalias() = xv.mat() * wmap;
        } else {
            Matrix cols;
            netops::im2col(xv, kernel, dilation, cols);
            out.mat().noalias() = cols * wmap;
        }
        out.mat().rowwise() += bias.transpose();
        NodeId y = input(std::move(out));
        tape_.push_back([this, x, w, b, y, kernel, dilation, ic, oc, k2] {
            if (!has_grad(y)) return;
            const auto dy = nodes_[y].grad.mat();
            const auto wmap = weight_map(w, ic * k2, oc);
            ensure_grad(x);
            ensure_grad(w);
            ensure_grad(b);
            auto dw = weight_grad_map(w, ic * k2, oc);
            bias_grad_map(b, oc) += dy.colwise().sum().transpose();
            if (kernel == 1) {
                dw.noalias() += nodes_[x].value.mat().transpose() * dy;
                nodes_[x].grad.mat().noalias() += dy * wmap.transpose();
            } else {
                Matrix cols;
                netops::im2col(nodes_[x].value, kernel, dilation, cols);
                dw.noalias() += cols.transpose() * dy;
                Matrix dcols = dy * wmap.transpose();
                netops::col2im_add(dcols, kernel, dilation, nodes_[x].grad);
            }
        });
        return y;
    }

    /// 2x2 stride-2 transposed convolution (doubles H and W). Weights:
    /// Tensor(1, 4, IC*OC): four column-major IC x OC blocks, one per output
    /// sub-position (dy*2+dx); bias: Tensor(1,1,OC).
    NodeId upconv2(NodeId x, NodeId w, NodeId b, int out_channels) {
        const Tensor<T>& xv = nodes_[x].value;
        const int ic = xv.channels(), oc = out_channels;
        if (nodes_[w].value.height() != 4 || nodes_[w].value.width() != ic * oc)
            throw ShapeError("upconv2: weight shape mismatch");
        const int h = xv.height(), wdt = xv.width();
        Tensor<T> out(oc, 2 * h, 2 * wdt);
        const auto bias = bias_map(b, oc);
        Matrix tmp;
        for (int off = 0; off < 4; ++off) {
            const int dy = off / 2, dx = off % 2;
            Eigen::Map<const Matrix> blk(nodes_[w].value.data() + static_cast<std::size_t>(off) * ic * oc, ic, oc);
            tmp.noalias() = xv.mat() * blk;
            for (int c = 0; c < oc; ++c) {
                T* dst = out.plane(c);
                const T* src = tmp.data() + static_cast<std::size_t>(c) * h * wdt;
                for (int y = 0; y < h; ++y) {
                    T* row = dst + (static_cast<std::size_t>(2 * y + dy)) * 2 * wdt + dx;
                    const T* s = src + static_cast<std::size_t>(y) * wdt;
                    for (int xx = 0; xx < wdt; ++xx) row[2 * xx] = s[xx];
                }
            }
        }
        out.mat().rowwise() += bias.transpose();
        NodeId yid = input(std::move(out));
        tape_.push_back([this, x, w, b, yid, ic, oc, h, wdt] {
            if (!has_grad(yid)) return;
            ensure_grad(x);
            ensure_grad(w);
            ensure_grad(b);
            const Tensor<T>& dyt = nodes_[yid].grad;
            bias_grad_map(b, oc) += dyt.mat().colwise().sum().transpose();
            Matrix dtmp(static_cast<Eigen::Index>(h) * wdt, oc);
            for (int off = 0; off < 4; ++off) {
                const int dy = off / 2, dx = off % 2;
                for (int c = 0; c < oc; ++c) {
                    const T* src = dyt.plane(c);
                    T* dst = dtmp.data() + static_cast<std::size_t>(c) * h * wdt;
                    for (int y = 0; y < h; ++y) {
                        const T* row = src + (static_cast<std::size_t>(2 * y + dy)) * 2 * wdt + dx;
                        T* d = dst + static_cast<std::size_t>(y) * wdt;
                        for (int xx = 0; xx < wdt; ++xx) d[xx] = row[2 * xx];
                    }
                }
                Eigen::Map<const Matrix> blk(nodes_[w].value.data() + static_cast<std::size_t>(off) * ic * oc, ic, oc);
                Eigen::Map<Matrix> dblk(nodes_[w].grad.data() + static_cast<std::size_t>(off) * ic * oc, ic, oc);
                dblk.noalias() += nodes_[x].value.mat().transpose() * dtmp;
                nodes_[x].grad.mat().noalias() += dtmp * blk.transpose();
            }
        });
        return yid;
    }

    // -- pooling / pointwise --------------------------------------------------

    NodeId maxpool2(NodeId x) {
        const Tensor<T>& xv = nodes_[x].value;
        const int h = xv.height(), w = xv.width(), c = xv.channels();
        if (h % 2 != 0 || w % 2 != 0) throw ShapeError("maxpool2: odd input dims");
        Tensor<T> out(c, h / 2, w / 2);
        auto arg = std::make_shared<std::vector<std::int32_t>>(out.size());
        std::size_t o = 0;
        for (int ch = 0; ch < c; ++ch) {
            const T* src = xv.plane(ch);
            for (int y = 0; y < h; y += 2) {
                for (int xx = 0; xx < w; xx += 2) {
                    int best = y * w + xx;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            int idx = (y + dy) * w + (xx + dx);
                            if (src[idx] > src[best]) best = idx;
                        }
                    out.data()[o] = src[best];
                    (*arg)[o++] = best;
                }
            }
        }
        NodeId yid = input(std::move(out));
        tape_.push_back([this, x, yid, arg, c] {
            if (!has_grad(yid)) return;
            ensure_grad(x);
            const Tensor<T>& dyt = nodes_[yid].grad;
            const std::size_t per_plane = dyt.plane_size();
            for (int ch = 0; ch < c; ++ch) {
                T* dst = nodes_[x].grad.plane(ch);
                const T* dy = dyt.plane(ch);
                const std::int32_t* a = arg->data() + static_cast<std::size_t>(ch) * per_plane;
                for (std::size_t i = 0; i < per_plane; ++i) dst[a[i]] += dy[i];
            }
        });
        return yid;
    }

    NodeId relu(NodeId x) {
        Tensor<T> out = nodes_[x].value;
        for (std::size_t i = 0; i < out.size(); ++i)
            if (out.data()[i] < T(0)) out.data()[i] = T(0);
        NodeId yid = input(std::move(out));
        tape_.push_back([this, x, yid] {
            if (!has_grad(yid)) return;
            ensure_grad(x);
            const Tensor<T>& yv = nodes_[yid].value;
            const Tensor<T>& dy = nodes_[yid].grad;
            Tensor<T>& dx = nodes_[x].grad;
            for (std::size_t i = 0; i < yv.size(); ++i)
                if (yv.data()[i] > T(0)) dx.data()[i] += dy.data()[i];
        });
        return yid;
    }

    NodeId add(NodeId a, NodeId b) {
        nodes_[a].value.require_same_shape(nodes_[b].value, "add");
        Tensor<T> out = nodes_[a].value;
        out.mat() += nodes_[b].value.mat();
        NodeId yid = input(std::move(out));
        tape_.push_back([this, a, b, yid] {
            if (!has_grad(yid)) return;
            ensure_grad(a);
            ensure_grad(b);
            nodes_[a].grad.mat() += nodes_[yid].grad.mat();
            nodes_[b].grad.mat() += nodes_[yid].grad.mat();
        });
        return yid;
    }

    NodeId concat(NodeId a, NodeId b) {
        const Tensor<T>& av = nodes_[a].value;
        const Tensor<T>& bv = nodes_[b].value;
        if (av.height() != bv.height() || av.width() != bv.width())
            throw ShapeError("concat: spatial dims differ");
        Tensor<T> out(av.channels() + bv.channels(), av.height(), av.width());
        std::copy(av.data(), av.data() + av.size(), out.data());
        std::copy(bv.data(), bv.data() + bv.size(), out.data() + av.size());
        NodeId yid = input(std::move(out));
        const int ca = av.channels();
        tape_.push_back([this, a, b, yid, ca] {
            if (!has_grad(yid)) return;
            ensure_grad(a);
            ensure_grad(b);
            const Tensor<T>& dy = nodes_[yid].grad;
            Tensor<T>& da = nodes_[a].grad;
            Tensor<T>& db = nodes_[b].grad;
            for (std::size_t i = 0; i < da.size(); ++i) da.data()[i] += dy.data()[i];
            const T* rest = dy.data() + static_cast<std::size_t>(ca) * dy.plane_size();
            for (std::size_t i = 0; i < db.size(); ++i) db.data()[i] += rest[i];
        });
        return yid;
    }

    NodeId scale(NodeId x, T factor) {
        Tensor<T> out = nodes_[x].value;
        out.mat() *= factor;
        NodeId yid = input(std::move(out));
        tape_.push_back([this, x, yid, factor] {
            if (!has_grad(yid)) return;
            ensure_grad(x);
            nodes_[x].grad.mat() += factor * nodes_[yid].grad.mat();
        });
        return yid;
    }

    /// Inverted dropout: kept units are scaled by 1/(1-rate) so inference
    /// needs no rescaling. Identity when inactive.
    NodeId dropout(NodeId x, double rate, Rng& rng, bool active) {
        if (!active || rate <= 0.0) return x;
        const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
        auto mask = std::make_shared<Tensor<T>>(Tensor<T>::zeros_like(nodes_[x].value));
        Tensor<T> out = nodes_[x].value;
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (rng.uniform() >= rate) {
                mask->data()[i] = keep_scale;
                out.data()[i] *= keep_scale;
            } else {
                out.data()[i] = T(0);
            }
        }
        NodeId yid = input(std::move(out));
        tape_.push_back([this, x, yid, mask] {
            if (!has_grad(yid)) return;
            ensure_grad(x);
            const Tensor<T>& dy = nodes_[yid].grad;
            Tensor<T>& dx = nodes_[x].grad;
            for (std::size_t i = 0; i < dx.size(); ++i) dx.data()[i] += dy.data()[i] * mask->data()[i];
        });
        return yid;
    }

    // -- geometry -------------------------------------------------------------

    /// Reflect-pad bottom/right (101-style, no edge duplication).
    NodeId reflect_pad(NodeId x, int pad_bottom, int pad_right) {
        if (pad_bottom == 0 && pad_right == 0) return x;
        const Tensor<T>& xv = nodes_[x].value;
        const int h = xv.height(), w = xv.width(), c = xv.channels();
        if (pad_bottom > h - 1 || pad_right > w - 1) throw ShapeError("reflect_pad: pad too large");
        const int oh = h + pad_bottom, ow = w + pad_right;
        Tensor<T> out(c, oh, ow);
        auto ry = [&](int y) { return y < h ? y : 2 * h - 2 - y; };
        auto rx = [&](int xx) { return xx < w ? xx : 2 * w - 2 - xx; };
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < oh; ++y)
                for (int xx = 0; xx < ow; ++xx) out.at(ch, y, xx) = xv.at(ch, ry(y), rx(xx));
        NodeId yid = input(std::move(out));
        tape_.push_back([this, x, yid, h, w, oh, ow, c] {
            if (!has_grad(yid)) return;
            ensure_grad(x);
            const Tensor<T>& dy = nodes_[yid].grad;
            Tensor<T>& dx = nodes_[x].grad;
            auto ry = [&](int y) { return y < h ? y : 2 * h - 2 - y; };
            auto rx = [&](int xx) { return xx < w ? xx : 2 * w - 2 - xx; };
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < oh; ++y)
                    for (int xx = 0; xx < ow; ++xx) dx.at(ch, ry(y), rx(xx)) += dy.at(ch, y, xx);
        });
        return yid;
    }

    /// Top-left crop back to (height, width).
    NodeId crop(NodeId x, int height, int width) {
        const Tensor<T>& xv = nodes_[x].value;
        if (height == xv.height() && width == xv.width()) return x;
        if (height > xv.height() || width > xv.width()) throw ShapeError("crop: target larger than input");
        const int c = xv.channels();
        Tensor<T> out(c, height, width);
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < height; ++y) {
                const T* src = xv.plane(ch) + static_cast<std::size_t>(y) * xv.width();
                std::copy(src, src + width, out.plane(ch) + static_cast<std::size_t>(y) * width);
            }
        NodeId yid = input(std::move(out));
        tape_.push_back([this, x, yid, height, width, c] {
            if (!has_grad(yid)) return;
            ensure_grad(x);
            const Tensor<T>& dy = nodes_[yid].grad;
            Tensor<T>& dx = nodes_[x].grad;
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < height; ++y) {
                    const T* src = dy.plane(ch) + static_cast<std::size_t>(y) * width;
                    T* dst = dx.plane(ch) + static_cast<std::size_t>(y) * dx.width();
                    for (int xx = 0; xx < width; ++xx) dst[xx] += src[xx];
                }
        });
        return yid;
    }

    /// Per-pixel softmax across channels (max-shifted for stability).
    NodeId softmax_channels(NodeId x) {
        const Tensor<T>& xv = nodes_[x].value;
        const int c = xv.channels();
        const std::size_t plane = xv.plane_size();
        Tensor<T> out = Tensor<T>::zeros_like(xv);
        for (std::size_t i = 0; i < plane; ++i) {
            T mx = xv.data()[i];
            for (int ch = 1; ch < c; ++ch) mx = std::max(mx, xv.plane(ch)[i]);
            T sum = T(0);
            for (int ch = 0; ch < c; ++ch) {
                T e = std::exp(xv.plane(ch)[i] - mx);
                out.plane(ch)[i] = e;
                sum += e;
            }
            const T inv = T(1) / sum;
            for (int ch = 0; ch < c; ++ch) out.plane(ch)[i] *= inv;
        }
        NodeId yid = input(std::move(out));
        tape_.push_back([this, x, yid, c, plane] {
            if (!has_grad(yid)) return;
            ensure_grad(x);
            const Tensor<T>& p = nodes_[yid].value;
            const Tensor<T>& dp = nodes_[yid].grad;
            Tensor<T>& dx = nodes_[x].grad;
            for (std::size_t i = 0; i < plane; ++i) {
                T dot = T(0);
                for (int ch = 0; ch < c; ++ch) dot += dp.plane(ch)[i] * p.plane(ch)[i];
                for (int ch = 0; ch < c; ++ch)
                    dx.plane(ch)[i] += p.plane(ch)[i] * (dp.plane(ch)[i] - dot);
            }
        });
        return yid;
    }

    // -- backward -------------------------------------------------------------

    void backward(NodeId from, const Tensor<T>& seed_grad) {
        nodes_[from].value.require_same_shape(seed_grad, "backward seed");
        ensure_grad(from);
        nodes_[from].grad.mat() += seed_grad.mat();
        for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
    }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
    };

    void ensure_grad(NodeId id) {
        if (nodes_[id].grad.empty()) nodes_[id].grad = Tensor<T>::zeros_like(nodes_[id].value);
    }

    Eigen::Map<const Matrix> weight_map(NodeId w, int rows, int cols) const {
        return Eigen::Map<const Matrix>(nodes_[w].value.data(), rows, cols);
    }
    Eigen::Map<Matrix> weight_grad_map(NodeId w, int rows, int cols) {
        return Eigen::Map<Matrix>(nodes_[w].grad.data(), rows, cols);
    }
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias_map(NodeId b, int n) const {
        return Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(nodes_[b].value.data(), n);
    }
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> bias_grad_map(NodeId b, int n) {
        return Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(nodes_[b].grad.data(), n);
    }

    std::vector<Node> nodes_;
    std::vector<std::function<void()>> tape_;
};

} // namespace lfseg
