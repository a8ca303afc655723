#include "mffa/mffa_block.hpp"

namespace mffa {

void MFFAConfig::validate() const {
    if (channels < 2 || channels % 2 != 0) {
        throw ValidationError("MFFAConfig: channels must be even and >= 2, got " +
                              std::to_string(channels));
    }
}

namespace {

Tensor conv1x1(const Tensor& x, const ConvParam& p) {
    return bias_add(conv2d(x, p.kernel, 1, Padding::same), p.bias);
}

Tensor conv3x3(const Tensor& x, const ConvParam& p) {
    return bias_add(conv2d(x, p.kernel, 1, Padding::same), p.bias);
}

}  // namespace

Tensor tab_forward(const Tensor& f_i, const MFFAState& state, const TABParams& p) {
    if (f_i.rank() != 3) throw ValidationError("tab_forward: features must be HxWxC");
    int h = f_i.dim(0), w = f_i.dim(1), c = f_i.dim(2);
    if (state.h_prev.rank() != 3 || state.h_prev.dim(2) != c) {
        throw ValidationError("tab_forward: channel mismatch between f_i " + shape_str(f_i.shape()) +
                              " and h_prev " + shape_str(state.h_prev.shape()));
    }
    if (state.h_prev.dim(0) != h || state.h_prev.dim(1) != w) {
        throw ValidationError("tab_forward: spatial mismatch between f_i and h_prev");
    }

    // Previous mask to feature resolution; it is data, not a traced value.
    Tensor mask_small = resample_nearest(mask_to_tensor(state.mask_prev), h, w);

    Tensor prev_inst = mul(state.h_prev, mask_small);
    Tensor cat = concat_channels(prev_inst, f_i);
    Tensor agg = conv1x1(cat, p.agg);
    Tensor gate = sigmoid(conv1x1(cat, p.gate));
    return relu(add(f_i, mul(agg, gate)));
}

std::pair<Tensor, Tensor> sab_forward(const Tensor& f_prime, const SABParams& p,
                                      const MFFAConfig& cfg, SABTrace* trace) {
    cfg.validate();
    if (f_prime.rank() != 3 || f_prime.dim(2) != cfg.channels) {
        throw ValidationError("sab_forward: expected HxWx" + std::to_string(cfg.channels) +
                              " features, got " + shape_str(f_prime.shape()));
    }
    int h = f_prime.dim(0), w = f_prime.dim(1), c = cfg.channels;
    int hw = h * w;

    // Pairwise similarity between spatial positions from two halved projections.
    Tensor fb = relu(conv1x1(f_prime, p.proj_b));
    Tensor fc = relu(conv1x1(f_prime, p.proj_c));
    Tensor attn = matmul(reshape(fb, {hw, c / 2}), transpose2d(reshape(fc, {hw, c / 2})));
    if (cfg.attention_normalization == AttnNorm::row_softmax) {
        attn = reshape(softmax_channel(reshape(attn, {1, hw, hw})), {hw, hw});
    }

    // h' = A f'_a w + b over the (HW) x C view of the features.
    Tensor fa = reshape(f_prime, {hw, c});
    Tensor h_affine = bias_add(matmul(matmul(attn, fa), p.w), p.bias);
    Tensor h_prime = reshape(h_affine, {h, w, c});
    if (trace) {
        trace->attention = attn;
        trace->h_prime = h_prime;
    }

    Tensor coarse = softmax_channel(relu(conv1x1(h_prime, p.coarse)));

    // Residual refinement: concat with the coarse map, two 3x3 convs in series.
    Tensor refined = relu(conv3x3(concat_channels(h_prime, coarse), p.phi1));
    refined = relu(conv3x3(refined, p.phi2));
    return {add(h_prime, refined), coarse};
}

std::pair<Tensor, Tensor> mffa_forward(const Tensor& f_i, const std::optional<MFFAState>& state,
                                       const MFFAParams& p, const MFFAConfig& cfg) {
    if (!state) return sab_forward(f_i, p.sab, cfg);
    return sab_forward(tab_forward(f_i, *state, p.tab), p.sab, cfg);
}

}  // namespace mffa
