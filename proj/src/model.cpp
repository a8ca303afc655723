#include "mffa/model.hpp"

#include <algorithm>
#include <cmath>

namespace mffa {

int EncoderConfig::block_stride(int i) const {
    // Accumulated stride after i stride-2 blocks is 2^i.
    return (1 << i) < output_stride ? 2 : 1;
}

void EncoderConfig::validate() const {
    if (base_channels < 1) throw ValidationError("EncoderConfig: base_channels must be positive");
    if (out_channels < 2) throw ValidationError("EncoderConfig: out_channels must be >= 2");
    if (full_blocks < 1 || trimmed_blocks < 1 || trimmed_blocks >= full_blocks) {
        throw ValidationError("EncoderConfig: trimmed variant must have strictly fewer blocks");
    }
    int os = output_stride;
    if (os < 1 || (os & (os - 1)) != 0) {
        throw ValidationError("EncoderConfig: output_stride must be a power of two");
    }
    if (os > (1 << trimmed_blocks)) {
        throw ValidationError("EncoderConfig: output_stride " + std::to_string(os) +
                              " unreachable within " + std::to_string(trimmed_blocks) +
                              " trimmed blocks");
    }
}

void ModelConfig::validate() const {
    encoder.validate();
    mffa.validate();
    if (mffa.channels != encoder.out_channels) {
        throw ValidationError("ModelConfig: MFFA channels (" + std::to_string(mffa.channels) +
                              ") must equal encoder out_channels (" +
                              std::to_string(encoder.out_channels) + ")");
    }
    if (frame_h < encoder.output_stride || frame_w < encoder.output_stride) {
        throw ValidationError("ModelConfig: frame smaller than output stride");
    }
    if (frame_h % encoder.output_stride != 0 || frame_w % encoder.output_stride != 0) {
        throw ValidationError("ModelConfig: frame extents " + std::to_string(frame_h) + "x" +
                              std::to_string(frame_w) + " not divisible by output_stride " +
                              std::to_string(encoder.output_stride));
    }
}

void ModelConfig::feature_extents(int* h, int* w) const {
    *h = frame_h / encoder.output_stride;
    *w = frame_w / encoder.output_stride;
}

int ParamStore::create(const std::string& name, const Shape& shape) {
    if (index_of(name) >= 0) throw ValidationError("ParamStore: duplicate parameter '" + name + "'");
    entries_.push_back({name, Tensor::zeros(shape, /*requires_grad=*/true)});
    return count() - 1;
}

int ParamStore::index_of(const std::string& name) const {
    for (int i = 0; i < count(); ++i) {
        if (entries_[static_cast<size_t>(i)].name == name) return i;
    }
    return -1;
}

void ParamStore::zero_grads() {
    for (auto& e : entries_) e.value.zero_grad();
}

real ParamStore::grad_norm() const {
    real sq = 0;
    for (const auto& e : entries_) {
        const real* g = e.value.grad();
        for (int64_t i = 0; i < e.value.size(); ++i) sq += g[i] * g[i];
    }
    return std::sqrt(sq);
}

void ParamStore::scale_grads(real s) {
    for (auto& e : entries_) {
        real* g = e.value.grad();
        for (int64_t i = 0; i < e.value.size(); ++i) g[i] *= s;
    }
}

ParamStore ParamStore::grad_view() const {
    ParamStore v;
    v.entries_.reserve(entries_.size());
    for (const auto& e : entries_) v.entries_.push_back({e.name, e.value.with_fresh_grad()});
    return v;
}

ModelParams ModelParams::grad_view() const {
    ModelParams v = *this;
    v.store = store.grad_view();
    return v;
}

TABParams ModelParams::tab() const {
    return {{store.at(tab_agg.k), store.at(tab_agg.b)}, {store.at(tab_gate.k), store.at(tab_gate.b)}};
}

SABParams ModelParams::sab() const {
    SABParams p;
    p.proj_b = {store.at(sab_b.k), store.at(sab_b.b)};
    p.proj_c = {store.at(sab_c.k), store.at(sab_c.b)};
    p.w = store.at(sab_w);
    p.bias = store.at(sab_bias);
    p.coarse = {store.at(sab_coarse.k), store.at(sab_coarse.b)};
    p.phi1 = {store.at(sab_phi1.k), store.at(sab_phi1.b)};
    p.phi2 = {store.at(sab_phi2.k), store.at(sab_phi2.b)};
    return p;
}

MFFAParams ModelParams::mffa_params() const { return {tab(), sab()}; }

namespace {

ModelParams::ConvIdx create_conv(ParamStore& s, const std::string& name, int kh, int kw, int ci,
                                 int co) {
    ModelParams::ConvIdx idx;
    idx.k = s.create(name + ".k", {kh, kw, ci, co});
    idx.b = s.create(name + ".b", {co});
    return idx;
}

void init_conv(ParamStore& s, const ModelParams::ConvIdx& idx, Rng& rng) {
    Tensor& k = s.at(idx.k);
    int fan_in = k.dim(0) * k.dim(1) * k.dim(2);
    init_uniform_fan_in(k, fan_in, rng);
    // biases stay zero
}

}  // namespace

ModelParams init_model_params(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    ModelParams mp;
    mp.cfg = cfg;
    ParamStore& s = mp.store;
    const int c = cfg.encoder.out_channels;

    int ci = 3;
    for (int i = 0; i < cfg.encoder.blocks(); ++i) {
        int co = cfg.encoder.block_out_channels(i);
        mp.enc_blocks.push_back(create_conv(s, "enc.b" + std::to_string(i), 3, 3, ci, co));
        ci = co;
    }
    mp.enc_proj = create_conv(s, "enc.proj", 1, 1, ci, c);

    if (cfg.mode == MFFAMode::full) {
        mp.tab_agg = create_conv(s, "tab.agg", 1, 1, 2 * c, c);
        mp.tab_gate = create_conv(s, "tab.gate", 1, 1, 2 * c, 1);
    }
    if (cfg.mode != MFFAMode::none) {
        mp.sab_b = create_conv(s, "sab.b", 1, 1, c, c / 2);
        mp.sab_c = create_conv(s, "sab.c", 1, 1, c, c / 2);
        mp.sab_w = s.create("sab.w", {c, c});
        mp.sab_bias = s.create("sab.bias", {c});
        mp.sab_coarse = create_conv(s, "sab.coarse", 1, 1, c, 2);
        mp.sab_phi1 = create_conv(s, "sab.phi1", 3, 3, c + 2, c / 2);
        mp.sab_phi2 = create_conv(s, "sab.phi2", 3, 3, c / 2, c);
    }
    mp.dec_conv = create_conv(s, "dec.conv", 3, 3, c, c / 2);
    mp.dec_head = create_conv(s, "dec.head", 1, 1, c / 2, 2);

    Rng rng(derive_seed(seed, 0x6d6f64656cULL));  // one stream, fixed creation order
    for (const auto& blk : mp.enc_blocks) init_conv(s, blk, rng);
    init_conv(s, mp.enc_proj, rng);
    if (cfg.mode == MFFAMode::full) {
        init_conv(s, mp.tab_agg, rng);
        init_conv(s, mp.tab_gate, rng);
    }
    if (cfg.mode != MFFAMode::none) {
        init_conv(s, mp.sab_b, rng);
        init_conv(s, mp.sab_c, rng);
        // Near-identity w keeps early SAB close to a residual pass-through.
        Tensor& w = s.at(mp.sab_w);
        for (int i = 0; i < c; ++i)
            for (int j = 0; j < c; ++j)
                w.data()[static_cast<size_t>(i) * c + j] = (i == j ? 1.0 : 0.0) + rng.normal(0.0, 0.01);
        init_conv(s, mp.sab_coarse, rng);
        init_conv(s, mp.sab_phi1, rng);
        init_conv(s, mp.sab_phi2, rng);
    }
    init_conv(s, mp.dec_conv, rng);
    init_conv(s, mp.dec_head, rng);
    return mp;
}

Tensor encode(const Tensor& frame, const ModelParams& mp) {
    const EncoderConfig& ec = mp.cfg.encoder;
    if (frame.rank() != 3 || frame.dim(2) != 3) {
        throw ValidationError("encode: expected HxWx3 frame, got " + shape_str(frame.shape()));
    }
    if (frame.dim(0) % ec.output_stride != 0 || frame.dim(1) % ec.output_stride != 0) {
        throw ValidationError("encode: frame extents " + shape_str(frame.shape()) +
                              " not divisible by output_stride " + std::to_string(ec.output_stride));
    }
    Tensor x = frame;
    for (size_t i = 0; i < mp.enc_blocks.size(); ++i) {
        const auto& blk = mp.enc_blocks[i];
        x = relu(bias_add(conv2d(x, mp.store.at(blk.k), ec.block_stride(static_cast<int>(i)),
                                 Padding::same),
                          mp.store.at(blk.b)));
    }
    return relu(bias_add(conv2d(x, mp.store.at(mp.enc_proj.k), 1, Padding::same),
                         mp.store.at(mp.enc_proj.b)));
}

Tensor decode(const Tensor& features, const ModelParams& mp) {
    Tensor d = relu(bias_add(conv2d(features, mp.store.at(mp.dec_conv.k), 1, Padding::same),
                             mp.store.at(mp.dec_conv.b)));
    Tensor up = resample_bilinear(d, mp.cfg.frame_h, mp.cfg.frame_w);
    Tensor logits = bias_add(conv2d(up, mp.store.at(mp.dec_head.k), 1, Padding::same),
                             mp.store.at(mp.dec_head.b));
    return softmax_channel(logits);
}

Mask predict_mask(const Tensor& softmax_map) {
    if (softmax_map.rank() != 3 || softmax_map.dim(2) != 2) {
        throw ValidationError("predict_mask: expected HxWx2 softmax map");
    }
    Mask m = Mask::zeros(softmax_map.dim(0), softmax_map.dim(1));
    const real* p = softmax_map.data();
    for (size_t i = 0; i < m.v.size(); ++i) m.v[i] = p[2 * i] > p[2 * i + 1] ? 1 : 0;
    return m;
}

StepOutput model_step(const Tensor& frame, const std::optional<MFFAState>& state,
                      const ModelParams& mp) {
    Tensor f = encode(frame, mp);
    Tensor h;
    switch (mp.cfg.mode) {
        case MFFAMode::none:
            h = f;
            break;
        case MFFAMode::sab_only:
            h = sab_forward(f, mp.sab(), mp.cfg.mffa).first;
            break;
        case MFFAMode::full:
            h = mffa_forward(f, state, mp.mffa_params(), mp.cfg.mffa).first;
            break;
    }
    return {decode(h, mp), h};
}

SequenceOutput run_sequence(const std::vector<Tensor>& frames, Direction direction,
                            const ModelParams& mp) {
    if (frames.empty()) throw ValidationError("run_sequence: empty sequence");
    int n = static_cast<int>(frames.size());
    for (const Tensor& fr : frames) {
        if (fr.rank() != 3 || fr.dim(0) != frames[0].dim(0) || fr.dim(1) != frames[0].dim(1)) {
            throw ValidationError("run_sequence: inconsistent frame extents within sequence");
        }
    }

    SequenceOutput out;
    out.direction = direction;
    out.n = n;
    out.frames.resize(static_cast<size_t>(n));

    std::optional<MFFAState> state;
    for (int step = 0; step < n; ++step) {
        int idx = direction == Direction::forward ? step : n - 1 - step;
        StepOutput so = model_step(frames[static_cast<size_t>(idx)], state, mp);
        // 1-based provenance: forward uses frame i-1, backward frame i+1.
        int j = direction == Direction::forward ? idx : idx + 2;
        out.frames[static_cast<size_t>(idx)] = {idx, j, so.softmax};
        if (mp.cfg.mode == MFFAMode::full) {
            state = MFFAState{so.features, predict_mask(so.softmax)};
        }
    }
    return out;
}

uint64_t count_flops(const EncoderConfig& cfg, int frame_h, int frame_w) {
    cfg.validate();
    uint64_t macs = 0;
    int h = frame_h, w = frame_w, ci = 3;
    for (int i = 0; i < cfg.blocks(); ++i) {
        int stride = cfg.block_stride(i);
        int co = cfg.block_out_channels(i);
        h = (h + stride - 1) / stride;
        w = (w + stride - 1) / stride;
        macs += static_cast<uint64_t>(h) * w * 9 * ci * co;
        ci = co;
    }
    macs += static_cast<uint64_t>(h) * w * ci * cfg.out_channels;  // 1x1 projection
    return macs;
}

FlopBreakdown count_model_flops(const ModelConfig& cfg) {
    cfg.validate();
    FlopBreakdown fb;
    fb.encoder = count_flops(cfg.encoder, cfg.frame_h, cfg.frame_w);

    int fh, fw;
    cfg.feature_extents(&fh, &fw);
    uint64_t hw = static_cast<uint64_t>(fh) * fw;
    uint64_t c = static_cast<uint64_t>(cfg.mffa.channels);
    if (cfg.mode == MFFAMode::full) {
        fb.mffa += hw * 2 * c * c + hw * 2 * c;  // TAB agg + gate 1x1 convs
    }
    if (cfg.mode != MFFAMode::none) {
        fb.mffa += 2 * hw * c * (c / 2);   // projections
        fb.mffa += hw * hw * (c / 2);      // attention matrix
        fb.mffa += hw * hw * c;            // aggregation
        fb.mffa += hw * c * c;             // w
        fb.mffa += hw * c * 2;             // coarse head
        fb.mffa += hw * 9 * (c + 2) * (c / 2) + hw * 9 * (c / 2) * c;  // refinement convs
    }
    fb.decoder = hw * 9 * c * (c / 2) +
                 static_cast<uint64_t>(cfg.frame_h) * cfg.frame_w * (c / 2) * 2;
    return fb;
}

}  // namespace mffa
