#pragma once

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "aftrack/tensor.hpp"

namespace aftrack::nn {

/// Trainable tensor with accumulated gradient. Owned by a Model; tapes bind
/// to it by pointer, so both Siamese branches literally share one store.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool backbone = false; // subject to the frozen-backbone training phase

    Parameter(std::string n, Tensor t, bool is_backbone = false)
        : name(std::move(n)), value(std::move(t)), grad(value.shape), backbone(is_backbone) {}

    void zero_grad() { grad.zero(); }
};

namespace detail {
using MatRM = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatCM = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
template <typename M> using Map = Eigen::Map<M>;
template <typename M> using CMap = Eigen::Map<const M>;
} // namespace detail

/// Reverse-mode tape. Build the forward graph through the op methods, then
/// call backward(loss) once; gradients of bound Parameters accumulate into
/// Parameter::grad. Construct with with_grad=false for inference (no grad
/// buffers, backward() forbidden).
class Tape {
public:
    struct Node {
        Tensor val;
        Tensor grad;
        bool needs_grad = false;
        Parameter* bound = nullptr;
        std::function<void(Node&)> back; // empty for leaves
    };
    using Var = Node*;

    explicit Tape(bool with_grad = true) : with_grad_(with_grad) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const { return with_grad_; }

    Var constant(Tensor t) {
        Node& n = make();
        n.val = std::move(t);
        n.needs_grad = false;
        return &n;
    }

    Var param(Parameter& p) {
        Node& n = make();
        n.val = p.value; // copy; grads flow back through `bound`
        n.needs_grad = with_grad_;
        n.bound = with_grad_ ? &p : nullptr;
        if (n.needs_grad) n.grad = Tensor(n.val.shape);
        return &n;
    }

    // ---- primitive ops -----------------------------------------------------

    /// 2D convolution, NCHW x [N,C,H,W] * w [O,C,KH,KW] + b [O].
    Var conv2d(Var x, Var w, Var b, int stride, int pad) {
        const auto& xs = x->val.shape;
        const auto& ws = w->val.shape;
        check(xs.size() == 4 && ws.size() == 4, "conv2d: rank-4 tensors required");
        check(xs[1] == ws[1], "conv2d: channel mismatch");
        const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
        const int O = ws[0], KH = ws[2], KW = ws[3];
        const int OH = (H + 2 * pad - KH) / stride + 1;
        const int OW = (W + 2 * pad - KW) / stride + 1;
        check(OH > 0 && OW > 0, "conv2d: kernel larger than padded input");

        Node& out = result({N, O, OH, OW}, {x, w, b});
        const int K = C * KH * KW;
        const std::int64_t P = static_cast<std::int64_t>(OH) * OW;
        const bool is1x1 = KH == 1 && KW == 1 && stride == 1 && pad == 0;

        Tensor colbuf;
        if (!is1x1) colbuf = Tensor({K, static_cast<int>(P)});

        detail::CMap<detail::MatRM> wm(w->val.data(), O, K);
        for (int n = 0; n < N; ++n) {
            const Real* xp = x->val.data() + static_cast<std::int64_t>(n) * C * H * W;
            Real* op = out.val.data() + static_cast<std::int64_t>(n) * O * P;
            detail::Map<detail::MatRM> om(op, O, P);
            if (is1x1) {
                detail::CMap<detail::MatRM> cm(xp, C, P);
                om.noalias() = wm * cm;
            } else {
                im2col(xp, C, H, W, KH, KW, stride, pad, OH, OW, colbuf.data());
                detail::CMap<detail::MatRM> cm(colbuf.data(), K, static_cast<int>(P));
                om.noalias() = wm * cm;
            }
            for (int o = 0; o < O; ++o) om.row(o).array() += b->val.v[o];
        }

        if (out.needs_grad) {
            out.back = [this, x, w, b, N, C, H, W, O, KH, KW, stride, pad, OH, OW,
                        K, P, is1x1](Node& out) {
                Tensor colbuf2;
                if (!is1x1) colbuf2 = Tensor({K, static_cast<int>(P)});
                Tensor dcol({K, static_cast<int>(P)});
                detail::CMap<detail::MatRM> wm(w->val.data(), O, K);
                for (int n = 0; n < N; ++n) {
                    const Real* gp = out.grad.data() + static_cast<std::int64_t>(n) * O * P;
                    detail::CMap<detail::MatRM> gm(gp, O, P);
                    if (w->needs_grad) {
                        const Real* xp = x->val.data() + static_cast<std::int64_t>(n) * C * H * W;
                        detail::Map<detail::MatRM> dwm(w->grad.data(), O, K);
                        if (is1x1) {
                            detail::CMap<detail::MatRM> cm(xp, C, P);
                            dwm.noalias() += gm * cm.transpose();
                        } else {
                            im2col(xp, C, H, W, KH, KW, stride, pad, OH, OW, colbuf2.data());
                            detail::CMap<detail::MatRM> cm(colbuf2.data(), K, static_cast<int>(P));
                            dwm.noalias() += gm * cm.transpose();
                        }
                    }
                    if (b->needs_grad) {
                        // serial sum: keeps the reduction order independent of
                        // buffer alignment, so runs are bit-reproducible
                        for (int o = 0; o < O; ++o) {
                            const Real* gr = gp + static_cast<std::int64_t>(o) * P;
                            Real acc = 0;
                            for (std::int64_t i = 0; i < P; ++i) acc += gr[i];
                            b->grad.v[o] += acc;
                        }
                    }
                    if (x->needs_grad) {
                        Real* dxp = x->grad.data() + static_cast<std::int64_t>(n) * C * H * W;
                        if (is1x1) {
                            detail::Map<detail::MatRM> dxm(dxp, C, P);
                            dxm.noalias() += wm.transpose() * gm;
                        } else {
                            detail::Map<detail::MatRM> dcm(dcol.data(), K, static_cast<int>(P));
                            dcm.noalias() = wm.transpose() * gm;
                            col2im(dcol.data(), C, H, W, KH, KW, stride, pad, OH, OW, dxp);
                        }
                    }
                }
            };
        }
        return &out;
    }

    Var relu(Var x) {
        Node& out = result(x->val.shape, {x});
        for (std::int64_t i = 0; i < x->val.numel(); ++i)
            out.val.v[i] = x->val.v[i] > 0 ? x->val.v[i] : 0;
        if (out.needs_grad) {
            out.back = [x](Node& out) {
                for (std::int64_t i = 0; i < out.val.numel(); ++i)
                    if (x->val.v[i] > 0) x->grad.v[i] += out.grad.v[i];
            };
        }
        return &out;
    }

    Var exp(Var x) {
        Node& out = result(x->val.shape, {x});
        for (std::int64_t i = 0; i < x->val.numel(); ++i) out.val.v[i] = std::exp(x->val.v[i]);
        if (out.needs_grad) {
            out.back = [x](Node& out) {
                for (std::int64_t i = 0; i < out.val.numel(); ++i)
                    x->grad.v[i] += out.grad.v[i] * out.val.v[i];
            };
        }
        return &out;
    }

    Var add(Var a, Var b) {
        check(a->val.same_shape(b->val), "add: shape mismatch");
        Node& out = result(a->val.shape, {a, b});
        for (std::int64_t i = 0; i < a->val.numel(); ++i) out.val.v[i] = a->val.v[i] + b->val.v[i];
        if (out.needs_grad) {
            out.back = [a, b](Node& out) {
                if (a->needs_grad)
                    for (std::int64_t i = 0; i < out.val.numel(); ++i) a->grad.v[i] += out.grad.v[i];
                if (b->needs_grad)
                    for (std::int64_t i = 0; i < out.val.numel(); ++i) b->grad.v[i] += out.grad.v[i];
            };
        }
        return &out;
    }

    Var scale(Var x, Real c) {
        Node& out = result(x->val.shape, {x});
        for (std::int64_t i = 0; i < x->val.numel(); ++i) out.val.v[i] = x->val.v[i] * c;
        if (out.needs_grad) {
            out.back = [x, c](Node& out) {
                for (std::int64_t i = 0; i < out.val.numel(); ++i)
                    x->grad.v[i] += out.grad.v[i] * c;
            };
        }
        return &out;
    }

    /// Group normalization with per-channel affine, eps inside the sqrt.
    Var group_norm(Var x, Var gamma, Var beta, int groups, Real eps = 1e-5) {
        const auto& s = x->val.shape;
        check(s.size() == 4, "group_norm: rank-4 input required");
        const int N = s[0], C = s[1], H = s[2], W = s[3];
        check(C % groups == 0, "group_norm: channels not divisible by groups");
        const int cg = C / groups;
        const std::int64_t M = static_cast<std::int64_t>(cg) * H * W;

        Node& out = result(s, {x, gamma, beta});
        Tensor mean({N, groups}), inv_std({N, groups});
        const std::int64_t hw = static_cast<std::int64_t>(H) * W;
        for (int n = 0; n < N; ++n) {
            for (int g = 0; g < groups; ++g) {
                const Real* xp = x->val.data() + (static_cast<std::int64_t>(n) * C + g * cg) * hw;
                Real mu = 0;
                for (std::int64_t i = 0; i < M; ++i) mu += xp[i];
                mu /= static_cast<Real>(M);
                Real var = 0;
                for (std::int64_t i = 0; i < M; ++i) {
                    const Real d = xp[i] - mu;
                    var += d * d;
                }
                var /= static_cast<Real>(M);
                const Real is = 1.0 / std::sqrt(var + eps);
                mean.v[n * groups + g] = mu;
                inv_std.v[n * groups + g] = is;
                Real* op = out.val.data() + (static_cast<std::int64_t>(n) * C + g * cg) * hw;
                for (int c = 0; c < cg; ++c) {
                    const Real ga = gamma->val.v[g * cg + c];
                    const Real be = beta->val.v[g * cg + c];
                    for (std::int64_t i = 0; i < hw; ++i)
                        op[c * hw + i] = ga * (xp[c * hw + i] - mu) * is + be;
                }
            }
        }

        if (out.needs_grad) {
            auto stats = std::make_shared<std::pair<Tensor, Tensor>>(std::move(mean), std::move(inv_std));
            out.back = [x, gamma, beta, N, C, H, W, groups, cg, M, hw, stats](Node& out) {
                const Tensor& mean = stats->first;
                const Tensor& inv_std = stats->second;
                for (int n = 0; n < N; ++n) {
                    for (int g = 0; g < groups; ++g) {
                        const Real mu = mean.v[n * groups + g];
                        const Real is = inv_std.v[n * groups + g];
                        const std::int64_t base = (static_cast<std::int64_t>(n) * C + g * cg) * hw;
                        const Real* xp = x->val.data() + base;
                        const Real* gp = out.grad.data() + base;
                        // accumulate affine grads and the two group-level sums
                        Real sum_dxhat = 0, sum_dxhat_xhat = 0;
                        for (int c = 0; c < cg; ++c) {
                            const Real ga = gamma->val.v[g * cg + c];
                            Real dg = 0, db = 0;
                            for (std::int64_t i = 0; i < hw; ++i) {
                                const Real xhat = (xp[c * hw + i] - mu) * is;
                                const Real dy = gp[c * hw + i];
                                dg += dy * xhat;
                                db += dy;
                                const Real dxhat = dy * ga;
                                sum_dxhat += dxhat;
                                sum_dxhat_xhat += dxhat * xhat;
                            }
                            if (gamma->needs_grad) gamma->grad.v[g * cg + c] += dg;
                            if (beta->needs_grad) beta->grad.v[g * cg + c] += db;
                        }
                        if (!x->needs_grad) continue;
                        Real* dxp = x->grad.data() + base;
                        const Real invM = 1.0 / static_cast<Real>(M);
                        for (int c = 0; c < cg; ++c) {
                            const Real ga = gamma->val.v[g * cg + c];
                            for (std::int64_t i = 0; i < hw; ++i) {
                                const Real xhat = (xp[c * hw + i] - mu) * is;
                                const Real dxhat = gp[c * hw + i] * ga;
                                dxp[c * hw + i] +=
                                    is * (dxhat - invM * sum_dxhat - xhat * invM * sum_dxhat_xhat);
                            }
                        }
                    }
                }
            };
        }
        return &out;
    }

    /// Spatial center crop to k x k.
    Var center_crop(Var x, int k) {
        const auto& s = x->val.shape;
        check(s.size() == 4 && s[2] >= k && s[3] >= k, "center_crop: input smaller than crop");
        const int N = s[0], C = s[1], H = s[2], W = s[3];
        const int oy = (H - k) / 2, ox = (W - k) / 2;
        Node& out = result({N, C, k, k}, {x});
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < k; ++y)
                    for (int xx = 0; xx < k; ++xx)
                        out.val.at(n, c, y, xx) = x->val.at(n, c, y + oy, xx + ox);
        if (out.needs_grad) {
            out.back = [x, N, C, k, oy, ox](Node& out) {
                for (int n = 0; n < N; ++n)
                    for (int c = 0; c < C; ++c)
                        for (int y = 0; y < k; ++y)
                            for (int xx = 0; xx < k; ++xx)
                                x->grad.at(n, c, y + oy, xx + ox) += out.grad.at(n, c, y, xx);
            };
        }
        return &out;
    }

    /// Depthwise (channel-wise) valid cross-correlation of z over x.
    /// z [N,C,ZH,ZW], x [N,C,XH,XW] -> [N,C,XH-ZH+1,XW-ZW+1].
    Var dw_xcorr(Var z, Var x) {
        const auto& zs = z->val.shape;
        const auto& xs = x->val.shape;
        check(zs.size() == 4 && xs.size() == 4, "dw_xcorr: rank-4 tensors required");
        check(zs[0] == xs[0] && zs[1] == xs[1], "dw_xcorr: batch/channel mismatch");
        check(zs[2] <= xs[2] && zs[3] <= xs[3], "dw_xcorr: kernel larger than map");
        const int N = zs[0], C = zs[1], ZH = zs[2], ZW = zs[3], XH = xs[2], XW = xs[3];
        const int OH = XH - ZH + 1, OW = XW - ZW + 1;
        Node& out = result({N, C, OH, OW}, {z, x});
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                const Real* zp = &z->val.at(n, c, 0, 0);
                const Real* xp = &x->val.at(n, c, 0, 0);
                Real* op = &out.val.at(n, c, 0, 0);
                for (int oy = 0; oy < OH; ++oy)
                    for (int ox = 0; ox < OW; ++ox) {
                        Real acc = 0;
                        for (int ky = 0; ky < ZH; ++ky) {
                            const Real* xr = xp + static_cast<std::int64_t>(oy + ky) * XW + ox;
                            const Real* zr = zp + static_cast<std::int64_t>(ky) * ZW;
                            for (int kx = 0; kx < ZW; ++kx) acc += zr[kx] * xr[kx];
                        }
                        op[static_cast<std::int64_t>(oy) * OW + ox] = acc;
                    }
            }
        }
        if (out.needs_grad) {
            out.back = [z, x, N, C, ZH, ZW, XH, XW, OH, OW](Node& out) {
                for (int n = 0; n < N; ++n)
                    for (int c = 0; c < C; ++c) {
                        const Real* gp = &out.grad.at(n, c, 0, 0);
                        const Real* zp = &z->val.at(n, c, 0, 0);
                        const Real* xp = &x->val.at(n, c, 0, 0);
                        for (int oy = 0; oy < OH; ++oy)
                            for (int ox = 0; ox < OW; ++ox) {
                                const Real g = gp[static_cast<std::int64_t>(oy) * OW + ox];
                                if (g == 0) continue;
                                for (int ky = 0; ky < ZH; ++ky)
                                    for (int kx = 0; kx < ZW; ++kx) {
                                        if (z->needs_grad)
                                            z->grad.at(n, c, ky, kx) +=
                                                g * xp[static_cast<std::int64_t>(oy + ky) * XW + ox + kx];
                                        if (x->needs_grad)
                                            x->grad.at(n, c, oy + ky, ox + kx) +=
                                                g * zp[static_cast<std::int64_t>(ky) * ZW + kx];
                                    }
                            }
                    }
            };
        }
        return &out;
    }

    Var concat_channels(Var a, Var b) {
        const auto& as = a->val.shape;
        const auto& bs = b->val.shape;
        check(as.size() == 4 && bs.size() == 4 && as[0] == bs[0] && as[2] == bs[2] && as[3] == bs[3],
              "concat_channels: incompatible shapes");
        const int N = as[0], Ca = as[1], Cb = bs[1], H = as[2], W = as[3];
        const std::int64_t hw = static_cast<std::int64_t>(H) * W;
        Node& out = result({N, Ca + Cb, H, W}, {a, b});
        for (int n = 0; n < N; ++n) {
            std::memcpy(&out.val.at(n, 0, 0, 0), &a->val.at(n, 0, 0, 0), sizeof(Real) * Ca * hw);
            std::memcpy(&out.val.at(n, Ca, 0, 0), &b->val.at(n, 0, 0, 0), sizeof(Real) * Cb * hw);
        }
        if (out.needs_grad) {
            out.back = [a, b, N, Ca, Cb, hw](Node& out) {
                for (int n = 0; n < N; ++n) {
                    if (a->needs_grad) {
                        const Real* g = &out.grad.at(n, 0, 0, 0);
                        Real* d = &a->grad.at(n, 0, 0, 0);
                        for (std::int64_t i = 0; i < Ca * hw; ++i) d[i] += g[i];
                    }
                    if (b->needs_grad) {
                        const Real* g = &out.grad.at(n, Ca, 0, 0);
                        Real* d = &b->grad.at(n, 0, 0, 0);
                        for (std::int64_t i = 0; i < Cb * hw; ++i) d[i] += g[i];
                    }
                }
            };
        }
        return &out;
    }

    /// One region to pool, in feature-map coordinates, attached to batch
    /// sample `n`.
    struct Roi {
        int n = 0;
        Real x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    };

    /// Bilinear RoI pooling: each output bin samples the feature map at its
    /// center. feat [N,C,H,W] -> [R,C,size,size].
    Var roi_align(Var feat, const std::vector<Roi>& rois, int size) {
        const auto& s = feat->val.shape;
        check(s.size() == 4, "roi_align: rank-4 features required");
        const int C = s[1], H = s[2], W = s[3];
        const int R = static_cast<int>(rois.size());
        check(R > 0, "roi_align: no rois");
        for (const auto& r : rois)
            check(r.x1 > r.x0 && r.y1 > r.y0 && r.n >= 0 && r.n < s[0],
                  "roi_align: degenerate roi");

        Node& out = result({R, C, size, size}, {feat});
        auto sample_coords = [&](const Roi& r, int iy, int ix, Real& sx, Real& sy) {
            const Real bw = (r.x1 - r.x0) / size;
            const Real bh = (r.y1 - r.y0) / size;
            sx = r.x0 + (ix + 0.5) * bw;
            sy = r.y0 + (iy + 0.5) * bh;
            sx = std::min<Real>(std::max<Real>(sx, 0), W - 1);
            sy = std::min<Real>(std::max<Real>(sy, 0), H - 1);
        };
        for (int ri = 0; ri < R; ++ri) {
            const Roi& r = rois[ri];
            for (int iy = 0; iy < size; ++iy)
                for (int ix = 0; ix < size; ++ix) {
                    Real sx, sy;
                    sample_coords(r, iy, ix, sx, sy);
                    const int x0i = static_cast<int>(std::floor(sx));
                    const int y0i = static_cast<int>(std::floor(sy));
                    const int x1i = std::min(x0i + 1, W - 1);
                    const int y1i = std::min(y0i + 1, H - 1);
                    const Real fx = sx - x0i, fy = sy - y0i;
                    for (int c = 0; c < C; ++c) {
                        const Real v00 = feat->val.at(r.n, c, y0i, x0i);
                        const Real v01 = feat->val.at(r.n, c, y0i, x1i);
                        const Real v10 = feat->val.at(r.n, c, y1i, x0i);
                        const Real v11 = feat->val.at(r.n, c, y1i, x1i);
                        out.val.at(ri, c, iy, ix) = v00 * (1 - fx) * (1 - fy) + v01 * fx * (1 - fy) +
                                                    v10 * (1 - fx) * fy + v11 * fx * fy;
                    }
                }
        }
        if (out.needs_grad) {
            auto rois_copy = std::make_shared<std::vector<Roi>>(rois);
            out.back = [feat, rois_copy, C, H, W, size](Node& out) {
                for (int ri = 0; ri < static_cast<int>(rois_copy->size()); ++ri) {
                    const Roi& r = (*rois_copy)[ri];
                    const Real bw = (r.x1 - r.x0) / size;
                    const Real bh = (r.y1 - r.y0) / size;
                    for (int iy = 0; iy < size; ++iy)
                        for (int ix = 0; ix < size; ++ix) {
                            Real sx = r.x0 + (ix + 0.5) * bw;
                            Real sy = r.y0 + (iy + 0.5) * bh;
                            sx = std::min<Real>(std::max<Real>(sx, 0), W - 1);
                            sy = std::min<Real>(std::max<Real>(sy, 0), H - 1);
                            const int x0i = static_cast<int>(std::floor(sx));
                            const int y0i = static_cast<int>(std::floor(sy));
                            const int x1i = std::min(x0i + 1, W - 1);
                            const int y1i = std::min(y0i + 1, H - 1);
                            const Real fx = sx - x0i, fy = sy - y0i;
                            for (int c = 0; c < C; ++c) {
                                const Real g = out.grad.at(ri, c, iy, ix);
                                feat->grad.at(r.n, c, y0i, x0i) += g * (1 - fx) * (1 - fy);
                                feat->grad.at(r.n, c, y0i, x1i) += g * fx * (1 - fy);
                                feat->grad.at(r.n, c, y1i, x0i) += g * (1 - fx) * fy;
                                feat->grad.at(r.n, c, y1i, x1i) += g * fx * fy;
                            }
                        }
                }
            };
        }
        return &out;
    }

    /// Convex mix of three equally shaped maps; `w` is a free 3-vector
    /// parameter normalized by softmax at use time.
    Var weighted_sum3(Var x0, Var x1, Var x2, Var w) {
        check(w->val.numel() == 3, "weighted_sum3: weight vector must have 3 entries");
        check(x0->val.same_shape(x1->val) && x1->val.same_shape(x2->val),
              "weighted_sum3: shape mismatch");
        Real mx = std::max(w->val.v[0], std::max(w->val.v[1], w->val.v[2]));
        Real e0 = std::exp(w->val.v[0] - mx), e1 = std::exp(w->val.v[1] - mx),
             e2 = std::exp(w->val.v[2] - mx);
        const Real sum = e0 + e1 + e2;
        const Real s0 = e0 / sum, s1 = e1 / sum, s2 = e2 / sum;

        Node& out = result(x0->val.shape, {x0, x1, x2, w});
        for (std::int64_t i = 0; i < out.val.numel(); ++i)
            out.val.v[i] = s0 * x0->val.v[i] + s1 * x1->val.v[i] + s2 * x2->val.v[i];
        if (out.needs_grad) {
            out.back = [x0, x1, x2, w, s0, s1, s2](Node& out) {
                const Real sw[3] = {s0, s1, s2};
                Var xs[3] = {x0, x1, x2};
                Real dLds[3] = {0, 0, 0};
                for (int k = 0; k < 3; ++k) {
                    for (std::int64_t i = 0; i < out.val.numel(); ++i) {
                        if (xs[k]->needs_grad) xs[k]->grad.v[i] += sw[k] * out.grad.v[i];
                        dLds[k] += out.grad.v[i] * xs[k]->val.v[i];
                    }
                }
                if (w->needs_grad) {
                    const Real dot = s0 * dLds[0] + s1 * dLds[1] + s2 * dLds[2];
                    for (int k = 0; k < 3; ++k) w->grad.v[k] += sw[k] * (dLds[k] - dot);
                }
            };
        }
        return &out;
    }

    /// c0 + sum_i coeff_i * scalar_i.
    Var linear_combination(const std::vector<Var>& xs, const std::vector<Real>& coeffs,
                           Real c0 = 0) {
        check(xs.size() == coeffs.size(), "linear_combination: size mismatch");
        std::vector<Var> parents(xs.begin(), xs.end());
        Node& out = result({1}, parents);
        Real acc = c0;
        for (size_t i = 0; i < xs.size(); ++i) {
            check(xs[i]->val.numel() == 1, "linear_combination: scalar inputs required");
            acc += coeffs[i] * xs[i]->val.v[0];
        }
        out.val.v[0] = acc;
        if (out.needs_grad) {
            auto xs_copy = std::make_shared<std::vector<Var>>(xs);
            auto co_copy = std::make_shared<std::vector<Real>>(coeffs);
            out.back = [xs_copy, co_copy](Node& out) {
                for (size_t i = 0; i < xs_copy->size(); ++i)
                    if ((*xs_copy)[i]->needs_grad)
                        (*xs_copy)[i]->grad.v[0] += out.grad.v[0] * (*co_copy)[i];
            };
        }
        return &out;
    }

    // ---- driver -------------------------------------------------------------

    /// Seed d(loss)/d(loss) = 1 and sweep the tape in reverse creation order.
    /// Gradients of bound parameters are accumulated into Parameter::grad.
    void backward(Var loss) {
        check(with_grad_, "backward: tape built without gradients");
        check(loss->val.numel() == 1, "backward: loss must be scalar");
        loss->grad.v[0] = 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
            if (it->needs_grad && it->back) it->back(*it);
        for (auto& n : nodes_)
            if (n.bound)
                for (std::int64_t i = 0; i < n.grad.numel(); ++i)
                    n.bound->grad.v[i] += n.grad.v[i];
    }

    size_t size() const { return nodes_.size(); }

    // Creates a non-leaf node; public for the loss ops defined alongside.
    Node& result(const std::vector<int>& shape, const std::vector<Var>& parents) {
        Node& n = make();
        n.val = Tensor(shape);
        if (with_grad_) {
            for (Var p : parents)
                if (p->needs_grad) {
                    n.needs_grad = true;
                    break;
                }
        }
        if (n.needs_grad) n.grad = Tensor(shape);
        return n;
    }

private:
    Node& make() {
        nodes_.emplace_back();
        return nodes_.back();
    }

    static void im2col(const Real* x, int C, int H, int W, int KH, int KW, int stride, int pad,
                       int OH, int OW, Real* col) {
        const std::int64_t P = static_cast<std::int64_t>(OH) * OW;
        std::int64_t k = 0;
        for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < KH; ++ky)
                for (int kx = 0; kx < KW; ++kx, ++k) {
                    Real* cr = col + k * P;
                    for (int oy = 0; oy < OH; ++oy) {
                        const int iy = oy * stride + ky - pad;
                        Real* crow = cr + static_cast<std::int64_t>(oy) * OW;
                        if (iy < 0 || iy >= H) {
                            std::fill(crow, crow + OW, 0.0);
                            continue;
                        }
                        const Real* xrow = x + (static_cast<std::int64_t>(c) * H + iy) * W;
                        for (int ox = 0; ox < OW; ++ox) {
                            const int ix = ox * stride + kx - pad;
                            crow[ox] = (ix >= 0 && ix < W) ? xrow[ix] : 0.0;
                        }
                    }
                }
    }

    static void col2im(const Real* col, int C, int H, int W, int KH, int KW, int stride, int pad,
                       int OH, int OW, Real* dx) {
        const std::int64_t P = static_cast<std::int64_t>(OH) * OW;
        std::int64_t k = 0;
        for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < KH; ++ky)
                for (int kx = 0; kx < KW; ++kx, ++k) {
                    const Real* cr = col + k * P;
                    for (int oy = 0; oy < OH; ++oy) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= H) continue;
                        Real* xrow = dx + (static_cast<std::int64_t>(c) * H + iy) * W;
                        const Real* crow = cr + static_cast<std::int64_t>(oy) * OW;
                        for (int ox = 0; ox < OW; ++ox) {
                            const int ix = ox * stride + kx - pad;
                            if (ix >= 0 && ix < W) xrow[ix] += crow[ox];
                        }
                    }
                }
    }

    bool with_grad_;
    std::deque<Node> nodes_;
};

using Var = Tape::Var;

} // namespace aftrack::nn
