#include "mffa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mffa/gemm.hpp"

namespace mffa {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

namespace {

void check_shape(const Shape& s, const char* who) {
    for (int d : s) {
        if (d < 0) throw ValidationError(std::string(who) + ": negative extent in " + shape_str(s));
    }
}

}  // namespace

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    check_shape(shape, "Tensor::zeros");
    Tensor t;
    t.shape_ = shape;
    t.data_ = std::make_shared<std::vector<real>>(static_cast<size_t>(shape_numel(shape)), real(0));
    if (requires_grad) {
        t.grad_ = std::make_shared<std::vector<real>>(t.data_->size(), real(0));
    }
    return t;
}

Tensor Tensor::full(const Shape& shape, real value, bool requires_grad) {
    Tensor t = zeros(shape, requires_grad);
    std::fill(t.data_->begin(), t.data_->end(), value);
    return t;
}

Tensor Tensor::from(const Shape& shape, std::vector<real> values, bool requires_grad) {
    check_shape(shape, "Tensor::from");
    if (static_cast<int64_t>(values.size()) != shape_numel(shape)) {
        throw ValidationError("Tensor::from: " + std::to_string(values.size()) +
                              " values do not fill shape " + shape_str(shape));
    }
    Tensor t;
    t.shape_ = shape;
    t.data_ = std::make_shared<std::vector<real>>(std::move(values));
    if (requires_grad) {
        t.grad_ = std::make_shared<std::vector<real>>(t.data_->size(), real(0));
    }
    return t;
}

void Tensor::zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), real(0));
}

Tensor Tensor::reshaped(const Shape& shape) const {
    if (shape_numel(shape) != size()) {
        throw ValidationError("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(shape));
    }
    Tensor t = *this;
    t.shape_ = shape;
    return t;
}

Tensor Tensor::with_fresh_grad() const {
    Tensor t = *this;
    t.grad_ = std::make_shared<std::vector<real>>(data_->size(), real(0));
    return t;
}

Tensor Tensor::clone_data() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<real>>(*data_);
    return t;
}

real Tensor::item() const {
    if (size() != 1) throw ValidationError("item: tensor " + shape_str(shape_) + " is not scalar");
    return (*data_)[0];
}

// --- tape ---

namespace {
thread_local Tape* g_current_tape = nullptr;
}

Tape::Scope::Scope(Tape& tape) : prev_(g_current_tape) { g_current_tape = &tape; }
Tape::Scope::~Scope() { g_current_tape = prev_; }

Tape* Tape::current() { return g_current_tape; }

void Tape::record(std::function<void()> backward) { records_.push_back(std::move(backward)); }

void Tape::backward(Tensor& loss) {
    if (loss.size() != 1) throw ValidationError("backward: loss must be scalar");
    if (!loss.requires_grad()) {
        throw ValidationError("backward: loss does not depend on any tracked tensor");
    }
    loss.grad()[0] += real(1);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
    records_.clear();
}

namespace {

using Buf = std::shared_ptr<std::vector<real>>;

bool tracking(const Tensor& a) { return Tape::current() && a.requires_grad(); }
bool tracking(const Tensor& a, const Tensor& b) {
    return Tape::current() && (a.requires_grad() || b.requires_grad());
}

Tensor make_out(const Shape& shape, bool track) { return Tensor::zeros(shape, track); }

// Broadcast classification for add/mul: equal shapes, or two rank-3 maps with
// equal spatial extents where one side has a single channel.
enum class EwMode { equal, a_single, b_single };

EwMode classify_elementwise(const Tensor& a, const Tensor& b, const char* who) {
    if (a.shape() == b.shape()) return EwMode::equal;
    if (a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0) && a.dim(1) == b.dim(1)) {
        if (a.dim(2) == 1 && b.dim(2) > 1) return EwMode::a_single;
        if (b.dim(2) == 1 && a.dim(2) > 1) return EwMode::b_single;
    }
    throw ValidationError(std::string(who) + ": shapes " + shape_str(a.shape()) + " and " +
                          shape_str(b.shape()) + " are not broadcastable");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    EwMode mode = classify_elementwise(a, b, "add");
    const Tensor& wide = (mode == EwMode::a_single) ? b : a;
    const Tensor& narrow = (mode == EwMode::a_single) ? a : b;
    bool track = tracking(a, b);
    Tensor out = make_out(wide.shape(), track);

    int64_t n = wide.size();
    if (mode == EwMode::equal) {
        const real* pa = a.data();
        const real* pb = b.data();
        real* po = out.data();
        for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    } else {
        int c = wide.dim(2);
        const real* pw = wide.data();
        const real* pn = narrow.data();
        real* po = out.data();
        int64_t pixels = n / c;
        for (int64_t p = 0; p < pixels; ++p) {
            real nv = pn[p];
            for (int j = 0; j < c; ++j) po[p * c + j] = pw[p * c + j] + nv;
        }
    }

    if (track) {
        Buf ga = a.grad_handle(), gb = b.grad_handle(), go = out.grad_handle();
        int c = (mode == EwMode::equal) ? 1 : wide.dim(2);
        bool a_is_narrow = (mode == EwMode::a_single);
        Tape::current()->record([ga, gb, go, n, c, mode, a_is_narrow]() {
            const real* dgo = go->data();
            auto accumulate = [&](const Buf& g, bool is_narrow) {
                if (!g) return;
                real* dg = g->data();
                if (mode == EwMode::equal || !is_narrow) {
                    for (int64_t i = 0; i < n; ++i) dg[i] += dgo[i];
                } else {
                    int64_t pixels = n / c;
                    for (int64_t p = 0; p < pixels; ++p) {
                        real s = 0;
                        for (int j = 0; j < c; ++j) s += dgo[p * c + j];
                        dg[p] += s;
                    }
                }
            };
            accumulate(ga, a_is_narrow);
            accumulate(gb, mode != EwMode::equal && !a_is_narrow);
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    EwMode mode = classify_elementwise(a, b, "mul");
    const Tensor& wide = (mode == EwMode::a_single) ? b : a;
    bool track = tracking(a, b);
    Tensor out = make_out(wide.shape(), track);

    int64_t n = wide.size();
    int c = (mode == EwMode::equal) ? 1 : wide.dim(2);
    {
        const real* pa = a.data();
        const real* pb = b.data();
        real* po = out.data();
        if (mode == EwMode::equal) {
            for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
        } else {
            const real* pw = wide.data();
            const real* pn = (mode == EwMode::a_single) ? pa : pb;
            int64_t pixels = n / c;
            for (int64_t p = 0; p < pixels; ++p) {
                real nv = pn[p];
                for (int j = 0; j < c; ++j) po[p * c + j] = pw[p * c + j] * nv;
            }
        }
    }

    if (track) {
        Buf ga = a.grad_handle(), gb = b.grad_handle(), go = out.grad_handle();
        Buf da = a.data_handle(), db = b.data_handle();
        bool a_is_narrow = (mode == EwMode::a_single);
        Tape::current()->record([ga, gb, go, da, db, n, c, mode, a_is_narrow]() {
            const real* dgo = go->data();
            auto accumulate = [&](const Buf& g, const Buf& other, bool self_narrow, bool other_narrow) {
                if (!g) return;
                real* dg = g->data();
                const real* po = other->data();
                if (mode == EwMode::equal) {
                    for (int64_t i = 0; i < n; ++i) dg[i] += dgo[i] * po[i];
                    return;
                }
                int64_t pixels = n / c;
                if (self_narrow) {
                    // d(narrow)[p] = sum_c dgo[p,c] * wide[p,c]
                    for (int64_t p = 0; p < pixels; ++p) {
                        real s = 0;
                        for (int j = 0; j < c; ++j) s += dgo[p * c + j] * po[p * c + j];
                        dg[p] += s;
                    }
                } else {
                    // d(wide)[p,c] = dgo[p,c] * narrow[p]
                    (void)other_narrow;
                    for (int64_t p = 0; p < pixels; ++p) {
                        real nv = po[p];
                        for (int j = 0; j < c; ++j) dg[p * c + j] += dgo[p * c + j] * nv;
                    }
                }
            };
            accumulate(ga, db, a_is_narrow, !a_is_narrow);
            accumulate(gb, da, mode != EwMode::equal && !a_is_narrow, a_is_narrow);
        });
    }
    return out;
}

Tensor relu(const Tensor& x) {
    bool track = tracking(x);
    Tensor out = make_out(x.shape(), track);
    int64_t n = x.size();
    const real* px = x.data();
    real* po = out.data();
    for (int64_t i = 0; i < n; ++i) po[i] = px[i] > 0 ? px[i] : real(0);
    if (track) {
        Buf gx = x.grad_handle(), go = out.grad_handle(), dx = x.data_handle();
        Tape::current()->record([gx, go, dx, n]() {
            const real* dgo = go->data();
            const real* pdx = dx->data();
            real* dg = gx->data();
            for (int64_t i = 0; i < n; ++i)
                if (pdx[i] > 0) dg[i] += dgo[i];
        });
    }
    return out;
}

Tensor sigmoid(const Tensor& x) {
    bool track = tracking(x);
    Tensor out = make_out(x.shape(), track);
    int64_t n = x.size();
    const real* px = x.data();
    real* po = out.data();
    for (int64_t i = 0; i < n; ++i) po[i] = real(1) / (real(1) + std::exp(-px[i]));
    if (track) {
        Buf gx = x.grad_handle(), go = out.grad_handle(), dy = out.data_handle();
        Tape::current()->record([gx, go, dy, n]() {
            const real* dgo = go->data();
            const real* y = dy->data();
            real* dg = gx->data();
            for (int64_t i = 0; i < n; ++i) dg[i] += dgo[i] * y[i] * (real(1) - y[i]);
        });
    }
    return out;
}

Tensor log_clamped(const Tensor& x, real floor) {
    if (floor <= 0) throw ValidationError("log_clamped: floor must be positive");
    bool track = tracking(x);
    Tensor out = make_out(x.shape(), track);
    int64_t n = x.size();
    const real* px = x.data();
    real* po = out.data();
    for (int64_t i = 0; i < n; ++i) po[i] = std::log(px[i] > floor ? px[i] : floor);
    if (track) {
        Buf gx = x.grad_handle(), go = out.grad_handle(), dx = x.data_handle();
        Tape::current()->record([gx, go, dx, n, floor]() {
            const real* dgo = go->data();
            const real* px = dx->data();
            real* dg = gx->data();
            for (int64_t i = 0; i < n; ++i)
                if (px[i] > floor) dg[i] += dgo[i] / px[i];
        });
    }
    return out;
}

Tensor scale(const Tensor& x, real factor) {
    bool track = tracking(x);
    Tensor out = make_out(x.shape(), track);
    int64_t n = x.size();
    const real* px = x.data();
    real* po = out.data();
    for (int64_t i = 0; i < n; ++i) po[i] = px[i] * factor;
    if (track) {
        Buf gx = x.grad_handle(), go = out.grad_handle();
        Tape::current()->record([gx, go, n, factor]() {
            const real* dgo = go->data();
            real* dg = gx->data();
            for (int64_t i = 0; i < n; ++i) dg[i] += dgo[i] * factor;
        });
    }
    return out;
}

Tensor sum(const Tensor& x) {
    bool track = tracking(x);
    Tensor out = make_out({1}, track);
    int64_t n = x.size();
    const real* px = x.data();
    real s = 0;
    for (int64_t i = 0; i < n; ++i) s += px[i];
    out.data()[0] = s;
    if (track) {
        Buf gx = x.grad_handle(), go = out.grad_handle();
        Tape::current()->record([gx, go, n]() {
            real g = (*go)[0];
            real* dg = gx->data();
            for (int64_t i = 0; i < n; ++i) dg[i] += g;
        });
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ValidationError("matmul: expected rank-2 operands, got " + shape_str(a.shape()) +
                              " and " + shape_str(b.shape()));
    }
    if (a.dim(1) != b.dim(0)) {
        throw ValidationError("matmul: inner extents differ on axis 1 vs axis 0: " +
                              shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    bool track = tracking(a, b);
    Tensor out = make_out({m, n}, track);
    gemm_nn(a.data(), b.data(), out.data(), m, k, n);
    if (track) {
        Buf ga = a.grad_handle(), gb = b.grad_handle(), go = out.grad_handle();
        Buf da = a.data_handle(), db = b.data_handle();
        Tape::current()->record([ga, gb, go, da, db, m, k, n]() {
            const real* dgo = go->data();
            if (ga) gemm_nt(dgo, db->data(), ga->data(), m, n, k);
            if (gb) gemm_tn(da->data(), dgo, gb->data(), k, m, n);
        });
    }
    return out;
}

Tensor transpose2d(const Tensor& x) {
    if (x.rank() != 2) throw ValidationError("transpose2d: expected rank-2, got " + shape_str(x.shape()));
    int m = x.dim(0), n = x.dim(1);
    bool track = tracking(x);
    Tensor out = make_out({n, m}, track);
    const real* px = x.data();
    real* po = out.data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) po[static_cast<size_t>(j) * m + i] = px[static_cast<size_t>(i) * n + j];
    if (track) {
        Buf gx = x.grad_handle(), go = out.grad_handle();
        Tape::current()->record([gx, go, m, n]() {
            const real* dgo = go->data();
            real* dg = gx->data();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    dg[static_cast<size_t>(i) * n + j] += dgo[static_cast<size_t>(j) * m + i];
        });
    }
    return out;
}

void conv2d_output_extents(int h, int w, int kh, int kw, int stride, Padding padding,
                           int* out_h, int* out_w, int* pad_top, int* pad_left) {
    if (padding == Padding::same) {
        *out_h = (h + stride - 1) / stride;
        *out_w = (w + stride - 1) / stride;
        int ph = std::max((*out_h - 1) * stride + kh - h, 0);
        int pw = std::max((*out_w - 1) * stride + kw - w, 0);
        *pad_top = ph / 2;
        *pad_left = pw / 2;
    } else {
        if (h < kh || w < kw) {
            throw ValidationError("conv2d: valid padding needs input >= kernel, got input " +
                                  std::to_string(h) + "x" + std::to_string(w) + " kernel " +
                                  std::to_string(kh) + "x" + std::to_string(kw));
        }
        *out_h = (h - kh) / stride + 1;
        *out_w = (w - kw) / stride + 1;
        *pad_top = 0;
        *pad_left = 0;
    }
}

namespace {

// Gathers the kh*kw*ci patch behind each output pixel; zero outside the input.
void im2col(const real* x, int h, int w, int ci, int kh, int kw, int stride, int pad_top,
            int pad_left, int oh, int ow, real* col) {
    int patch = kh * kw * ci;
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            real* row = col + (static_cast<size_t>(oy) * ow + ox) * patch;
            for (int ky = 0; ky < kh; ++ky) {
                int iy = oy * stride - pad_top + ky;
                for (int kx = 0; kx < kw; ++kx) {
                    int ix = ox * stride - pad_left + kx;
                    real* dst = row + (static_cast<size_t>(ky) * kw + kx) * ci;
                    if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
                        std::fill(dst, dst + ci, real(0));
                    } else {
                        const real* src = x + (static_cast<size_t>(iy) * w + ix) * ci;
                        std::copy(src, src + ci, dst);
                    }
                }
            }
        }
    }
}

void col2im(const real* col, int h, int w, int ci, int kh, int kw, int stride, int pad_top,
            int pad_left, int oh, int ow, real* dx) {
    int patch = kh * kw * ci;
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const real* row = col + (static_cast<size_t>(oy) * ow + ox) * patch;
            for (int ky = 0; ky < kh; ++ky) {
                int iy = oy * stride - pad_top + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    int ix = ox * stride - pad_left + kx;
                    if (ix < 0 || ix >= w) continue;
                    const real* src = row + (static_cast<size_t>(ky) * kw + kx) * ci;
                    real* dst = dx + (static_cast<size_t>(iy) * w + ix) * ci;
                    for (int c = 0; c < ci; ++c) dst[c] += src[c];
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, Padding padding) {
    if (input.rank() != 3) {
        throw ValidationError("conv2d: input must be HxWxC, got " + shape_str(input.shape()));
    }
    if (kernel.rank() != 4) {
        throw ValidationError("conv2d: kernel must be khxkwxCinxCout, got " + shape_str(kernel.shape()));
    }
    int h = input.dim(0), w = input.dim(1), ci = input.dim(2);
    int kh = kernel.dim(0), kw = kernel.dim(1);
    if (kh % 2 == 0 || kw % 2 == 0) {
        throw ValidationError("conv2d: kernel extents must be odd, got " + shape_str(kernel.shape()));
    }
    if (kernel.dim(2) != ci) {
        throw ValidationError("conv2d: input channels on axis 2 (" + std::to_string(ci) +
                              ") do not match kernel axis 2 (" + std::to_string(kernel.dim(2)) + ")");
    }
    if (stride < 1) throw ValidationError("conv2d: stride must be positive");
    int co = kernel.dim(3);

    int oh, ow, pt, pl;
    conv2d_output_extents(h, w, kh, kw, stride, padding, &oh, &ow, &pt, &pl);

    bool track = tracking(input, kernel);
    Tensor out = make_out({oh, ow, co}, track);
    bool pointwise = (kh == 1 && kw == 1 && stride == 1);
    int rows = oh * ow;
    int patch = kh * kw * ci;

    if (pointwise) {
        gemm_nn(input.data(), kernel.data(), out.data(), rows, ci, co);
    } else {
        std::vector<real> col(static_cast<size_t>(rows) * patch);
        im2col(input.data(), h, w, ci, kh, kw, stride, pt, pl, oh, ow, col.data());
        gemm_nn(col.data(), kernel.data(), out.data(), rows, patch, co);
    }

    if (track) {
        Buf gx = input.grad_handle(), gk = kernel.grad_handle(), go = out.grad_handle();
        Buf dx = input.data_handle(), dk = kernel.data_handle();
        Tape::current()->record([gx, gk, go, dx, dk, h, w, ci, kh, kw, co, stride, pt, pl, oh, ow,
                                 rows, patch, pointwise]() {
            const real* dgo = go->data();
            if (pointwise) {
                if (gx) gemm_nt(dgo, dk->data(), gx->data(), rows, co, ci);
                if (gk) gemm_tn(dx->data(), dgo, gk->data(), ci, rows, co);
                return;
            }
            // The patch matrix is recomputed here rather than kept alive on
            // the tape; im2col is cheap next to the matmuls.
            std::vector<real> col(static_cast<size_t>(rows) * patch);
            im2col(dx->data(), h, w, ci, kh, kw, stride, pt, pl, oh, ow, col.data());
            if (gk) gemm_tn(col.data(), dgo, gk->data(), patch, rows, co);
            if (gx) {
                std::vector<real> dcol(static_cast<size_t>(rows) * patch, real(0));
                gemm_nt(dgo, dk->data(), dcol.data(), rows, co, patch);
                col2im(dcol.data(), h, w, ci, kh, kw, stride, pt, pl, oh, ow, gx->data());
            }
        });
    }
    return out;
}

Tensor bias_add(const Tensor& x, const Tensor& bias) {
    if (bias.rank() != 1) throw ValidationError("bias_add: bias must be rank-1");
    int c = bias.dim(0);
    if (x.rank() < 1 || x.dim(x.rank() - 1) != c) {
        throw ValidationError("bias_add: last axis of " + shape_str(x.shape()) +
                              " does not match bias " + shape_str(bias.shape()));
    }
    bool track = tracking(x, bias);
    Tensor out = make_out(x.shape(), track);
    int64_t n = x.size();
    int64_t rows = n / c;
    const real* px = x.data();
    const real* pb = bias.data();
    real* po = out.data();
    for (int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) po[r * c + j] = px[r * c + j] + pb[j];
    if (track) {
        Buf gx = x.grad_handle(), gb = bias.grad_handle(), go = out.grad_handle();
        Tape::current()->record([gx, gb, go, rows, c]() {
            const real* dgo = go->data();
            if (gx) {
                real* dg = gx->data();
                int64_t n = rows * c;
                for (int64_t i = 0; i < n; ++i) dg[i] += dgo[i];
            }
            if (gb) {
                real* dg = gb->data();
                for (int64_t r = 0; r < rows; ++r)
                    for (int j = 0; j < c; ++j) dg[j] += dgo[r * c + j];
            }
        });
    }
    return out;
}

Tensor softmax_channel(const Tensor& x) {
    if (x.rank() != 3) throw ValidationError("softmax_channel: expected HxWxK, got " + shape_str(x.shape()));
    int k = x.dim(2);
    if (k < 2) throw ValidationError("softmax_channel: needs K >= 2 channels");
    bool track = tracking(x);
    Tensor out = make_out(x.shape(), track);
    int64_t pixels = x.size() / k;
    const real* px = x.data();
    real* po = out.data();
    for (int64_t p = 0; p < pixels; ++p) {
        const real* row = px + p * k;
        real* orow = po + p * k;
        real mx = row[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        real s = 0;
        for (int j = 0; j < k; ++j) {
            orow[j] = std::exp(row[j] - mx);
            s += orow[j];
        }
        real inv = real(1) / s;
        for (int j = 0; j < k; ++j) orow[j] *= inv;
    }
    if (track) {
        Buf gx = x.grad_handle(), go = out.grad_handle(), dy = out.data_handle();
        Tape::current()->record([gx, go, dy, pixels, k]() {
            const real* dgo = go->data();
            const real* y = dy->data();
            real* dg = gx->data();
            for (int64_t p = 0; p < pixels; ++p) {
                const real* yr = y + p * k;
                const real* gr = dgo + p * k;
                real dot = 0;
                for (int j = 0; j < k; ++j) dot += gr[j] * yr[j];
                real* out = dg + p * k;
                for (int j = 0; j < k; ++j) out[j] += yr[j] * (gr[j] - dot);
            }
        });
    }
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3) {
        throw ValidationError("concat_channels: expected rank-3 operands");
    }
    if (a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1)) {
        throw ValidationError("concat_channels: spatial extents differ: " + shape_str(a.shape()) +
                              " vs " + shape_str(b.shape()));
    }
    int h = a.dim(0), w = a.dim(1), ca = a.dim(2), cb = b.dim(2);
    bool track = tracking(a, b);
    Tensor out = make_out({h, w, ca + cb}, track);
    int64_t pixels = static_cast<int64_t>(h) * w;
    const real* pa = a.data();
    const real* pb = b.data();
    real* po = out.data();
    int c = ca + cb;
    for (int64_t p = 0; p < pixels; ++p) {
        std::copy(pa + p * ca, pa + (p + 1) * ca, po + p * c);
        std::copy(pb + p * cb, pb + (p + 1) * cb, po + p * c + ca);
    }
    if (track) {
        Buf ga = a.grad_handle(), gb = b.grad_handle(), go = out.grad_handle();
        Tape::current()->record([ga, gb, go, pixels, ca, cb, c]() {
            const real* dgo = go->data();
            if (ga) {
                real* dg = ga->data();
                for (int64_t p = 0; p < pixels; ++p)
                    for (int j = 0; j < ca; ++j) dg[p * ca + j] += dgo[p * c + j];
            }
            if (gb) {
                real* dg = gb->data();
                for (int64_t p = 0; p < pixels; ++p)
                    for (int j = 0; j < cb; ++j) dg[p * cb + j] += dgo[p * c + ca + j];
            }
        });
    }
    return out;
}

namespace {

struct LerpAxis {
    int lo, hi;
    real w_hi;
};

// Half-pixel-center source coordinate for a destination index.
LerpAxis bilinear_axis(int dst, int src_extent, int dst_extent) {
    real pos = (real(dst) + real(0.5)) * real(src_extent) / real(dst_extent) - real(0.5);
    real lo = std::floor(pos);
    LerpAxis a;
    a.w_hi = pos - lo;
    a.lo = std::clamp(static_cast<int>(lo), 0, src_extent - 1);
    a.hi = std::clamp(static_cast<int>(lo) + 1, 0, src_extent - 1);
    return a;
}

}  // namespace

Tensor resample_bilinear(const Tensor& x, int target_h, int target_w) {
    if (x.rank() != 3) throw ValidationError("resample_bilinear: expected HxWxK input");
    if (target_h < 1 || target_w < 1) throw ValidationError("resample_bilinear: target extents must be positive");
    int h = x.dim(0), w = x.dim(1), k = x.dim(2);
    bool track = tracking(x);
    Tensor out = make_out({target_h, target_w, k}, track);
    std::vector<LerpAxis> ys(static_cast<size_t>(target_h)), xs(static_cast<size_t>(target_w));
    for (int i = 0; i < target_h; ++i) ys[static_cast<size_t>(i)] = bilinear_axis(i, h, target_h);
    for (int j = 0; j < target_w; ++j) xs[static_cast<size_t>(j)] = bilinear_axis(j, w, target_w);
    const real* px = x.data();
    real* po = out.data();
    for (int i = 0; i < target_h; ++i) {
        const LerpAxis& ay = ys[static_cast<size_t>(i)];
        for (int j = 0; j < target_w; ++j) {
            const LerpAxis& ax = xs[static_cast<size_t>(j)];
            const real* r00 = px + (static_cast<size_t>(ay.lo) * w + ax.lo) * k;
            const real* r01 = px + (static_cast<size_t>(ay.lo) * w + ax.hi) * k;
            const real* r10 = px + (static_cast<size_t>(ay.hi) * w + ax.lo) * k;
            const real* r11 = px + (static_cast<size_t>(ay.hi) * w + ax.hi) * k;
            real w00 = (1 - ay.w_hi) * (1 - ax.w_hi);
            real w01 = (1 - ay.w_hi) * ax.w_hi;
            real w10 = ay.w_hi * (1 - ax.w_hi);
            real w11 = ay.w_hi * ax.w_hi;
            real* dst = po + (static_cast<size_t>(i) * target_w + j) * k;
            for (int cidx = 0; cidx < k; ++cidx)
                dst[cidx] = w00 * r00[cidx] + w01 * r01[cidx] + w10 * r10[cidx] + w11 * r11[cidx];
        }
    }
    if (track) {
        Buf gx = x.grad_handle(), go = out.grad_handle();
        Tape::current()->record([gx, go, ys, xs, h, w, k, target_h, target_w]() {
            const real* dgo = go->data();
            real* dg = gx->data();
            for (int i = 0; i < target_h; ++i) {
                const LerpAxis& ay = ys[static_cast<size_t>(i)];
                for (int j = 0; j < target_w; ++j) {
                    const LerpAxis& ax = xs[static_cast<size_t>(j)];
                    const real* src = dgo + (static_cast<size_t>(i) * target_w + j) * k;
                    real w00 = (1 - ay.w_hi) * (1 - ax.w_hi);
                    real w01 = (1 - ay.w_hi) * ax.w_hi;
                    real w10 = ay.w_hi * (1 - ax.w_hi);
                    real w11 = ay.w_hi * ax.w_hi;
                    real* d00 = dg + (static_cast<size_t>(ay.lo) * w + ax.lo) * k;
                    real* d01 = dg + (static_cast<size_t>(ay.lo) * w + ax.hi) * k;
                    real* d10 = dg + (static_cast<size_t>(ay.hi) * w + ax.lo) * k;
                    real* d11 = dg + (static_cast<size_t>(ay.hi) * w + ax.hi) * k;
                    for (int cidx = 0; cidx < k; ++cidx) {
                        d00[cidx] += w00 * src[cidx];
                        d01[cidx] += w01 * src[cidx];
                        d10[cidx] += w10 * src[cidx];
                        d11[cidx] += w11 * src[cidx];
                    }
                }
            }
        });
    }
    return out;
}

Tensor resample_nearest(const Tensor& x, int target_h, int target_w) {
    if (x.rank() != 3) throw ValidationError("resample_nearest: expected HxWxK input");
    if (target_h < 1 || target_w < 1) throw ValidationError("resample_nearest: target extents must be positive");
    if (Tape::current() && x.requires_grad()) {
        throw ValidationError("resample_nearest: not differentiable; use resample_bilinear on traced paths");
    }
    int h = x.dim(0), w = x.dim(1), k = x.dim(2);
    Tensor out = Tensor::zeros({target_h, target_w, k});
    const real* px = x.data();
    real* po = out.data();
    for (int i = 0; i < target_h; ++i) {
        int sy = std::clamp(static_cast<int>(std::floor((real(i) + real(0.5)) * h / target_h)), 0, h - 1);
        for (int j = 0; j < target_w; ++j) {
            int sx = std::clamp(static_cast<int>(std::floor((real(j) + real(0.5)) * w / target_w)), 0, w - 1);
            const real* src = px + (static_cast<size_t>(sy) * w + sx) * k;
            real* dst = po + (static_cast<size_t>(i) * target_w + j) * k;
            std::copy(src, src + k, dst);
        }
    }
    return out;
}

void init_uniform_fan_in(Tensor& t, int fan_in, Rng& rng) {
    real bound = std::sqrt(real(6) / real(fan_in));
    real* p = t.data();
    int64_t n = t.size();
    for (int64_t i = 0; i < n; ++i) p[i] = rng.uniform(-bound, bound);
}

}  // namespace mffa
