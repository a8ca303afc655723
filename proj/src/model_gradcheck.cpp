#include "mffa/gradcheck.hpp"
#include "mffa/losses.hpp"
#include "mffa/model.hpp"

namespace mffa {

// Full encode -> TAB -> SAB -> decode -> cross-entropy scalar, checked
// against central differences for every parameter, the input frame, and the
// carried features.
GradCheckResult composite_gradcheck(uint64_t seed, bool full, real tolerance, real eps) {
    ModelConfig cfg;
    cfg.encoder.variant = EncoderVariant::trimmed;
    cfg.encoder.base_channels = 2;
    cfg.encoder.out_channels = full ? 6 : 4;
    cfg.encoder.output_stride = 4;
    cfg.mffa.channels = cfg.encoder.out_channels;
    cfg.frame_h = full ? 12 : 8;
    cfg.frame_w = full ? 12 : 8;
    cfg.mode = MFFAMode::full;

    ModelParams mp = init_model_params(cfg, derive_seed(seed, 0xc0));
    Rng rng(derive_seed(seed, 0xc1));

    // Jitter every parameter away from the freshly initialized point. Zero
    // biases would leave ReLU pre-activations of dead pixels exactly at the
    // kink, where central differences see a one-sided slope.
    for (int i = 0; i < mp.store.count(); ++i) {
        Tensor& t = mp.store.at(i);
        for (int64_t j = 0; j < t.size(); ++j) t.data()[j] += rng.uniform(-0.12, 0.12);
    }

    Tensor frame = Tensor::zeros({cfg.frame_h, cfg.frame_w, 3}, true);
    for (int64_t i = 0; i < frame.size(); ++i) frame.data()[i] = rng.uniform(0.05, 0.95);

    int fh, fw;
    cfg.feature_extents(&fh, &fw);
    Tensor h_prev = Tensor::zeros({fh, fw, cfg.mffa.channels}, true);
    for (int64_t i = 0; i < h_prev.size(); ++i) h_prev.data()[i] = rng.uniform(-0.5, 1.0);

    Mask prev_mask = Mask::zeros(cfg.frame_h, cfg.frame_w);
    for (auto& v : prev_mask.v) v = rng.bernoulli(0.3) ? 1 : 0;

    Mask truth = Mask::zeros(cfg.frame_h, cfg.frame_w);
    for (auto& v : truth.v) v = rng.bernoulli(0.25) ? 1 : 0;
    Tensor onehot = mask_to_onehot(truth);

    std::vector<Tensor> wrt{frame, h_prev};
    for (int i = 0; i < mp.store.count(); ++i) wrt.push_back(mp.store.at(i));

    auto f = [&, onehot]() {
        MFFAState state{h_prev, prev_mask};
        StepOutput so = model_step(frame, state, mp);
        return cross_entropy(onehot, so.softmax);
    };

    real err = finite_diff_check(f, wrt, eps);
    return {"composite encode->mffa->decode->ce", err, err < tolerance};
}

}  // namespace mffa
