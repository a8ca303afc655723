#include "mffa/gradcheck.hpp"

#include <cmath>

namespace mffa {

real finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> wrt, real eps) {
    for (const Tensor& t : wrt) {
        if (!t.requires_grad()) {
            throw ValidationError("finite_diff_check: wrt tensor has no gradient buffer");
        }
    }

    // Analytic pass.
    std::vector<std::vector<real>> analytic;
    {
        for (Tensor& t : wrt) t.zero_grad();
        Tape tape;
        Tape::Scope scope(tape);
        Tensor y = f();
        if (y.size() != 1) throw ValidationError("finite_diff_check: f must produce a scalar");
        tape.backward(y);
        for (Tensor& t : wrt) analytic.emplace_back(t.grad(), t.grad() + t.size());
    }

    // Central differences, evaluated with no tape installed.
    real worst = 0;
    for (size_t ti = 0; ti < wrt.size(); ++ti) {
        Tensor& t = wrt[ti];
        real* p = t.data();
        for (int64_t i = 0; i < t.size(); ++i) {
            real orig = p[i];
            p[i] = orig + eps;
            real fp = f().item();
            p[i] = orig - eps;
            real fm = f().item();
            p[i] = orig;
            real fd = (fp - fm) / (2 * eps);
            real a = analytic[ti][static_cast<size_t>(i)];
            real rel = std::abs(a - fd) / std::max(real(1), std::abs(a));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, bool requires_grad = true) {
    Tensor t = Tensor::zeros(shape, requires_grad);
    real* p = t.data();
    for (int64_t i = 0; i < t.size(); ++i) {
        // Keep values away from the ReLU kink so central differences stay valid.
        real v = rng.uniform(-1.0, 1.0);
        if (std::abs(v) < 0.01) v = v < 0 ? v - 0.01 : v + 0.01;
        p[i] = v;
    }
    return t;
}

// Fixed random probe so the scalar stays sensitive to every output
// coordinate; a plain sum would be blind to softmax shifts.
Tensor make_probe(const Shape& shape, Rng& rng) {
    Tensor w = Tensor::zeros(shape);
    real* p = w.data();
    for (int64_t i = 0; i < w.size(); ++i) p[i] = rng.uniform(0.25, 1.75);
    return w;
}

Tensor probe_sum(const Tensor& x, const Tensor& probe) { return sum(mul(x, probe)); }

struct Case {
    std::function<Tensor()> f;
    std::vector<Tensor> wrt;
};

using CaseBuilder = std::function<Case(Rng&, int variant, bool full)>;

struct OpCheck {
    std::string name;
    CaseBuilder build;
};

std::vector<OpCheck> op_registry() {
    std::vector<OpCheck> ops;

    ops.push_back({"add", [](Rng& rng, int v, bool) {
        Tensor a, b;
        if (v == 0) { a = random_tensor({3, 4, 2}, rng); b = random_tensor({3, 4, 2}, rng); }
        else if (v == 1) { a = random_tensor({2, 5, 3}, rng); b = random_tensor({2, 5, 1}, rng); }
        else { a = random_tensor({4, 2, 1}, rng); b = random_tensor({4, 2, 6}, rng); }
        Shape out = (a.dim(2) >= b.dim(2)) ? a.shape() : b.shape();
        Tensor probe = make_probe(out, rng);
        return Case{[=]() { return probe_sum(add(a, b), probe); }, {a, b}};
    }});

    ops.push_back({"mul", [](Rng& rng, int v, bool) {
        Tensor a, b;
        if (v == 0) { a = random_tensor({3, 3, 2}, rng); b = random_tensor({3, 3, 2}, rng); }
        else if (v == 1) { a = random_tensor({2, 4, 3}, rng); b = random_tensor({2, 4, 1}, rng); }
        else { a = random_tensor({5, 2, 1}, rng); b = random_tensor({5, 2, 4}, rng); }
        Shape out = (a.dim(2) >= b.dim(2)) ? a.shape() : b.shape();
        Tensor probe = make_probe(out, rng);
        return Case{[=]() { return probe_sum(mul(a, b), probe); }, {a, b}};
    }});

    ops.push_back({"relu", [](Rng& rng, int v, bool) {
        Tensor x = random_tensor({2 + v, 3, 2}, rng);
        Tensor probe = make_probe(x.shape(), rng);
        return Case{[=]() { return probe_sum(relu(x), probe); }, {x}};
    }});

    ops.push_back({"sigmoid", [](Rng& rng, int v, bool) {
        Tensor x = random_tensor({3, 2 + v, 1}, rng);
        Tensor probe = make_probe(x.shape(), rng);
        return Case{[=]() { return probe_sum(sigmoid(x), probe); }, {x}};
    }});

    ops.push_back({"log_clamped", [](Rng& rng, int v, bool) {
        Tensor x = Tensor::zeros({3, 3, 1 + v}, true);
        for (int64_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(0.05, 2.0);
        Tensor probe = make_probe(x.shape(), rng);
        return Case{[=]() { return probe_sum(log_clamped(x, 1e-12), probe); }, {x}};
    }});

    ops.push_back({"scale", [](Rng& rng, int v, bool) {
        Tensor x = random_tensor({2, 2 + v, 3}, rng);
        real c = rng.uniform(-2.0, 2.0);
        return Case{[=]() { return sum(scale(x, c)); }, {x}};
    }});

    ops.push_back({"sum", [](Rng& rng, int v, bool) {
        Tensor x = random_tensor({1 + v, 4, 2}, rng);
        return Case{[=]() { return sum(x); }, {x}};
    }});

    ops.push_back({"matmul", [](Rng& rng, int v, bool full) {
        int m = 2 + v, k = 3 + v, n = 2 + 2 * v;
        if (full && v == 2) { m = 8; k = 12; n = 9; }
        Tensor a = random_tensor({m, k}, rng);
        Tensor b = random_tensor({k, n}, rng);
        Tensor probe = make_probe({m, n, 1}, rng);
        return Case{[=]() { return probe_sum(matmul(a, b).reshaped({m, n, 1}), probe); }, {a, b}};
    }});

    ops.push_back({"transpose2d", [](Rng& rng, int v, bool) {
        Tensor x = random_tensor({2 + v, 4}, rng);
        Tensor probe = make_probe({4, 2 + v, 1}, rng);
        return Case{[=]() { return probe_sum(transpose2d(x).reshaped({4, 2 + v, 1}), probe); }, {x}};
    }});

    ops.push_back({"conv2d", [](Rng& rng, int v, bool full) {
        Tensor x, k;
        int stride = 1;
        Padding pad = Padding::same;
        if (v == 0) { x = random_tensor({5, 5, 2}, rng); k = random_tensor({3, 3, 2, 3}, rng); }
        else if (v == 1) { x = random_tensor({4, 4, 3}, rng); k = random_tensor({1, 1, 3, 2}, rng); }
        else if (full) { x = random_tensor({9, 8, 3}, rng); k = random_tensor({5, 3, 3, 4}, rng); pad = Padding::valid; }
        else { x = random_tensor({6, 5, 2}, rng); k = random_tensor({3, 3, 2, 2}, rng); stride = 2; }
        int oh, ow, pt, pl;
        conv2d_output_extents(x.dim(0), x.dim(1), k.dim(0), k.dim(1), stride, pad, &oh, &ow, &pt, &pl);
        Tensor probe = make_probe({oh, ow, k.dim(3)}, rng);
        return Case{[=]() { return probe_sum(conv2d(x, k, stride, pad), probe); }, {x, k}};
    }});

    ops.push_back({"bias_add", [](Rng& rng, int v, bool) {
        Tensor x = (v == 0) ? random_tensor({6, 3}, rng) : random_tensor({2, 3, 2 + v}, rng);
        Tensor b = random_tensor({x.dim(x.rank() - 1)}, rng);
        Shape s3 = (x.rank() == 3) ? x.shape() : Shape{x.dim(0), x.dim(1), 1};
        Tensor probe = make_probe(s3, rng);
        return Case{[=]() { return probe_sum(bias_add(x, b).reshaped(s3), probe); }, {x, b}};
    }});

    ops.push_back({"softmax_channel", [](Rng& rng, int v, bool) {
        Tensor x = random_tensor({3, 3, 2 + v}, rng);
        Tensor probe = make_probe(x.shape(), rng);
        return Case{[=]() { return probe_sum(softmax_channel(x), probe); }, {x}};
    }});

    ops.push_back({"concat_channels", [](Rng& rng, int v, bool) {
        Tensor a = random_tensor({3, 2, 1 + v}, rng);
        Tensor b = random_tensor({3, 2, 3 - v}, rng);
        Tensor probe = make_probe({3, 2, 4}, rng);
        return Case{[=]() { return probe_sum(concat_channels(a, b), probe); }, {a, b}};
    }});

    ops.push_back({"resample_bilinear", [](Rng& rng, int v, bool) {
        Tensor x = random_tensor({4, 4, 2}, rng);
        int th = (v == 0) ? 8 : (v == 1 ? 3 : 4);
        int tw = (v == 0) ? 8 : (v == 1 ? 5 : 4);
        Tensor probe = make_probe({th, tw, 2}, rng);
        return Case{[=]() { return probe_sum(resample_bilinear(x, th, tw), probe); }, {x}};
    }});

    return ops;
}

}  // namespace

// Defined in model_gradcheck.cpp; checks the full network composite.
GradCheckResult composite_gradcheck(uint64_t seed, bool full, real tolerance, real eps);

std::vector<GradCheckResult> run_gradchecks(uint64_t seed, bool full, real tolerance, real eps) {
    std::vector<GradCheckResult> results;
    for (const OpCheck& op : op_registry()) {
        real worst = 0;
        for (int v = 0; v < 3; ++v) {
            Rng rng(derive_seed(seed, std::hash<std::string>{}(op.name), static_cast<uint64_t>(v)));
            Case c = op.build(rng, v, full);
            worst = std::max(worst, finite_diff_check(c.f, c.wrt, eps));
        }
        results.push_back({op.name, worst, worst < tolerance});
    }
    results.push_back(composite_gradcheck(seed, full, tolerance, eps));
    return results;
}

}  // namespace mffa
