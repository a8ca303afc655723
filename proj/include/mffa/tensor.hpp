#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mffa/common.hpp"

namespace mffa {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major N-d value. Data and gradient buffers are shared, so copying
// a Tensor is cheap and reshapes are pure metadata. A Tensor owns a gradient
// buffer iff it participates in differentiation.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, real value, bool requires_grad = false);
    static Tensor from(const Shape& shape, std::vector<real> values, bool requires_grad = false);

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t size() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
    bool defined() const { return data_ != nullptr; }

    real* data() { return data_->data(); }
    const real* data() const { return data_->data(); }
    real* grad() { return grad_ ? grad_->data() : nullptr; }
    const real* grad() const { return grad_ ? grad_->data() : nullptr; }

    bool requires_grad() const { return grad_ != nullptr; }
    void zero_grad();

    // Same data, new shape. Gradient buffer is shared too, so the reshape
    // needs no tape record.
    Tensor reshaped(const Shape& shape) const;

    // Same data, fresh zero gradient buffer. Lets worker threads accumulate
    // gradients privately against shared parameter values.
    Tensor with_fresh_grad() const;

    // Deep copy of values only.
    Tensor clone_data() const;

    real item() const;

    std::shared_ptr<std::vector<real>> data_handle() const { return data_; }
    std::shared_ptr<std::vector<real>> grad_handle() const { return grad_; }

private:
    Shape shape_;
    std::shared_ptr<std::vector<real>> data_;
    std::shared_ptr<std::vector<real>> grad_;
};

// Records one backward closure per differentiable op, replayed in strict
// reverse order of creation. A tape is installed per thread via Scope; ops
// executed with no active tape do not record and produce constant outputs.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    class Scope {
    public:
        explicit Scope(Tape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* prev_;
    };

    static Tape* current();

    void record(std::function<void()> backward);
    size_t num_records() const { return records_.size(); }

    // Seeds loss.grad with 1 and replays all records newest-first. Records
    // are consumed.
    void backward(Tensor& loss);

private:
    std::vector<std::function<void()>> records_;
};

enum class Padding { same, valid };

// --- registered differentiable ops ---
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor log_clamped(const Tensor& x, real floor);
Tensor scale(const Tensor& x, real factor);
Tensor sum(const Tensor& x);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& x);
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, Padding padding);
Tensor bias_add(const Tensor& x, const Tensor& bias);
Tensor softmax_channel(const Tensor& x);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor resample_bilinear(const Tensor& x, int target_h, int target_w);
// Non-differentiable; rejects inputs that are being traced.
Tensor resample_nearest(const Tensor& x, int target_h, int target_w);
inline Tensor reshape(const Tensor& x, const Shape& shape) { return x.reshaped(shape); }

// Convolution output extents for the given padding rule.
void conv2d_output_extents(int h, int w, int kh, int kw, int stride, Padding padding,
                           int* out_h, int* out_w, int* pad_top, int* pad_left);

// Fills a tensor with fan-in scaled uniform values in [-sqrt(6/fan_in), +sqrt(6/fan_in)].
void init_uniform_fan_in(Tensor& t, int fan_in, Rng& rng);

}  // namespace mffa
