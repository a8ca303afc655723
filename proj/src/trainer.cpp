#include "mffa/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "mffa/checkpoint.hpp"

namespace mffa {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

void TrainConfig::validate() const {
    if (epochs < 1) throw ValidationError("train config: epochs must be positive");
    if (batch_size < 1) throw ValidationError("train config: batch_size must be positive");
    if (learning_rate <= 0) throw ValidationError("train config: learning_rate must be positive");
    if (decay_factor <= 0 || decay_factor > 1) {
        throw ValidationError("train config: decay_factor must be in (0, 1]");
    }
    if (decay_interval < 1) throw ValidationError("train config: decay_interval must be positive");
    if (decay_start_epoch < 0) throw ValidationError("train config: decay_start_epoch must be >= 0");
    if (sequence_length < 2) throw ValidationError("train config: sequence_length must be >= 2");
    if (sampling_stride < 1) throw ValidationError("train config: sampling_stride must be positive");
    if (eval_stride < 1) throw ValidationError("train config: eval_stride must be positive");
    if (threads < 1) throw ValidationError("train config: threads must be positive");
    if (channels < 2 || channels % 2) throw ValidationError("train config: channels must be even");
    weights.validate();
    synth_ranges.validate();
}

namespace {

template <typename E>
std::string enum_str(E v);

template <>
std::string enum_str(Curriculum v) {
    return v == Curriculum::real_only ? "real_only" : "synthetic_then_real";
}
template <>
std::string enum_str(EncoderVariant v) {
    return v == EncoderVariant::full ? "full" : "trimmed";
}
template <>
std::string enum_str(MFFAMode v) {
    switch (v) {
        case MFFAMode::full: return "full";
        case MFFAMode::sab_only: return "sab_only";
        default: return "none";
    }
}
template <>
std::string enum_str(AttnNorm v) {
    return v == AttnNorm::row_softmax ? "row_softmax" : "raw";
}

Curriculum curriculum_from(const std::string& s) {
    if (s == "real_only") return Curriculum::real_only;
    if (s == "synthetic_then_real") return Curriculum::synthetic_then_real;
    throw ValidationError("train config: unknown curriculum '" + s + "'");
}
EncoderVariant encoder_from(const std::string& s) {
    if (s == "full") return EncoderVariant::full;
    if (s == "trimmed") return EncoderVariant::trimmed;
    throw ValidationError("train config: unknown encoder_variant '" + s + "'");
}
MFFAMode mode_from(const std::string& s) {
    if (s == "full") return MFFAMode::full;
    if (s == "sab_only") return MFFAMode::sab_only;
    if (s == "none") return MFFAMode::none;
    throw ValidationError("train config: unknown mffa_mode '" + s + "'");
}
AttnNorm attn_from(const std::string& s) {
    if (s == "row_softmax") return AttnNorm::row_softmax;
    if (s == "raw") return AttnNorm::raw;
    throw ValidationError("train config: unknown attention_normalization '" + s + "'");
}

}  // namespace

std::string train_config_to_json(const TrainConfig& c) {
    ordered_json j;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["decay_factor"] = c.decay_factor;
    j["decay_interval"] = c.decay_interval;
    j["decay_start_epoch"] = c.decay_start_epoch;
    j["curriculum"] = enum_str(c.curriculum);
    j["sequence_length"] = c.sequence_length;
    j["seed"] = c.seed;
    j["encoder_variant"] = enum_str(c.encoder_variant);
    j["mffa_mode"] = enum_str(c.mffa_mode);
    j["channels"] = c.channels;
    j["base_channels"] = c.base_channels;
    j["output_stride"] = c.output_stride;
    j["attention_normalization"] = enum_str(c.attention_normalization);
    j["loss_weights"] = {c.weights.lambda1, c.weights.lambda2, c.weights.lambda3,
                         c.weights.lambda4, c.weights.lambda5};
    j["clip_norm"] = c.clip_norm;
    j["sampling_stride"] = c.sampling_stride;
    j["holdout_fold"] = c.holdout_fold;
    j["eval_stride"] = c.eval_stride;
    j["early_stop_mdsc"] = c.early_stop_mdsc;
    j["augment"] = c.augment;
    j["translate_range"] = {c.synth_ranges.translate_min, c.synth_ranges.translate_max};
    j["rotate_range"] = {c.synth_ranges.rotate_min, c.synth_ranges.rotate_max};
    j["threads"] = c.threads;
    return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& json_text) {
    ordered_json j;
    try {
        j = ordered_json::parse(json_text);
    } catch (const std::exception& e) {
        throw ValidationError(std::string("train config: malformed JSON: ") + e.what());
    }

    static const std::vector<std::string> known = {
        "epochs", "batch_size", "learning_rate", "decay_factor", "decay_interval",
        "decay_start_epoch", "curriculum", "sequence_length", "seed", "encoder_variant",
        "mffa_mode", "channels", "base_channels", "output_stride", "attention_normalization",
        "loss_weights", "clip_norm", "sampling_stride", "holdout_fold", "eval_stride",
        "early_stop_mdsc", "augment", "translate_range", "rotate_range", "threads"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
            throw ValidationError("train config: unknown field '" + it.key() + "'");
        }
    }

    TrainConfig c;
    try {
        if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
        if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
        if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
        if (j.contains("decay_factor")) c.decay_factor = j["decay_factor"].get<double>();
        if (j.contains("decay_interval")) c.decay_interval = j["decay_interval"].get<int>();
        if (j.contains("decay_start_epoch")) c.decay_start_epoch = j["decay_start_epoch"].get<int>();
        if (j.contains("curriculum")) c.curriculum = curriculum_from(j["curriculum"].get<std::string>());
        if (j.contains("sequence_length")) c.sequence_length = j["sequence_length"].get<int>();
        if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
        if (j.contains("encoder_variant")) c.encoder_variant = encoder_from(j["encoder_variant"].get<std::string>());
        if (j.contains("mffa_mode")) c.mffa_mode = mode_from(j["mffa_mode"].get<std::string>());
        if (j.contains("channels")) c.channels = j["channels"].get<int>();
        if (j.contains("base_channels")) c.base_channels = j["base_channels"].get<int>();
        if (j.contains("output_stride")) c.output_stride = j["output_stride"].get<int>();
        if (j.contains("attention_normalization")) {
            c.attention_normalization = attn_from(j["attention_normalization"].get<std::string>());
        }
        if (j.contains("loss_weights")) {
            auto w = j["loss_weights"].get<std::vector<double>>();
            if (w.size() != 5) throw ValidationError("train config: loss_weights needs 5 entries");
            c.weights.lambda1 = w[0];
            c.weights.lambda2 = w[1];
            c.weights.lambda3 = w[2];
            c.weights.lambda4 = w[3];
            c.weights.lambda5 = w[4];
        }
        if (j.contains("clip_norm")) c.clip_norm = j["clip_norm"].get<double>();
        if (j.contains("sampling_stride")) c.sampling_stride = j["sampling_stride"].get<int>();
        if (j.contains("holdout_fold")) c.holdout_fold = j["holdout_fold"].get<int>();
        if (j.contains("eval_stride")) c.eval_stride = j["eval_stride"].get<int>();
        if (j.contains("early_stop_mdsc")) c.early_stop_mdsc = j["early_stop_mdsc"].get<double>();
        if (j.contains("augment")) c.augment = j["augment"].get<bool>();
        if (j.contains("translate_range")) {
            auto r = j["translate_range"].get<std::vector<double>>();
            if (r.size() != 2) throw ValidationError("train config: translate_range needs 2 entries");
            c.synth_ranges.translate_min = r[0];
            c.synth_ranges.translate_max = r[1];
        }
        if (j.contains("rotate_range")) {
            auto r = j["rotate_range"].get<std::vector<double>>();
            if (r.size() != 2) throw ValidationError("train config: rotate_range needs 2 entries");
            c.synth_ranges.rotate_min = r[0];
            c.synth_ranges.rotate_max = r[1];
        }
        if (j.contains("threads")) c.threads = j["threads"].get<int>();
    } catch (const ordered_json::exception& e) {
        throw ValidationError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(path + ": cannot open config");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return train_config_from_json(text);
}

uint64_t config_hash(const TrainConfig& cfg) {
    std::string s = train_config_to_json(cfg);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

ModelConfig model_config_from(const TrainConfig& cfg, int frame_h, int frame_w) {
    ModelConfig mc;
    mc.encoder.variant = cfg.encoder_variant;
    mc.encoder.base_channels = cfg.base_channels;
    mc.encoder.output_stride = cfg.output_stride;
    mc.encoder.out_channels = cfg.channels;
    mc.mffa.channels = cfg.channels;
    mc.mffa.attention_normalization = cfg.attention_normalization;
    mc.mode = cfg.mffa_mode;
    mc.frame_h = frame_h;
    mc.frame_w = frame_w;
    mc.validate();
    return mc;
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
    if (epoch < 0 || epoch >= cfg.epochs) {
        throw ValidationError("lr_schedule: epoch " + std::to_string(epoch) + " out of range");
    }
    if (epoch < cfg.decay_start_epoch) return cfg.learning_rate;
    int halvings = (epoch - cfg.decay_start_epoch) / cfg.decay_interval + 1;
    return cfg.learning_rate * std::pow(cfg.decay_factor, halvings);
}

AdamState AdamState::for_params(const ParamStore& store) {
    AdamState s;
    for (int i = 0; i < store.count(); ++i) {
        s.m.emplace_back(static_cast<size_t>(store.at(i).size()), real(0));
        s.v.emplace_back(static_cast<size_t>(store.at(i).size()), real(0));
    }
    return s;
}

void adam_step(ParamStore& params, AdamState& state, double lr) {
    if (static_cast<int>(state.m.size()) != params.count()) {
        throw ValidationError("adam_step: optimizer state does not match the parameter set");
    }
    ++state.step;
    double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (int i = 0; i < params.count(); ++i) {
        Tensor& p = params.at(i);
        const real* g = p.grad();
        real* val = p.data();
        real* m = state.m[static_cast<size_t>(i)].data();
        real* v = state.v[static_cast<size_t>(i)].data();
        for (int64_t k = 0; k < p.size(); ++k) {
            if (!std::isfinite(g[k])) {
                throw RuntimeFailure("adam_step: non-finite gradient in parameter '" +
                                     params.name(i) + "'; aborting epoch");
            }
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
            real mhat = m[k] / bc1;
            real vhat = v[k] / bc2;
            val[k] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

int resolve_thread_count(int requested, int batch_elements) {
    int t = std::max(1, requested);
    if (const char* env = std::getenv("MFFA_THREADS")) {
        int cap = std::atoi(env);
        if (cap > 0) t = std::min(t, cap);
    }
    return std::max(1, std::min(t, batch_elements));
}

namespace {

struct TrainItem {
    int video = 0;
    int label_index = 0;                // synthetic: source labeled frame
    std::vector<int> frame_indices;    // real: sequence frames, label on last
    bool synthetic = false;
};

struct ElementResult {
    ParamStore grads;  // gradient view aligned with the main store
    double total = 0, fw = 0, bw = 0, last = 0, first = 0;
    bool ok = false;
};

std::vector<Tensor> to_tensors(const FrameSequence& seq) {
    std::vector<Tensor> out;
    for (const Image& img : seq.frames) out.push_back(image_to_tensor(img));
    return out;
}

ElementResult process_element(const Dataset& ds, const TrainItem& item, const ModelParams& shared,
                              const TrainConfig& cfg, int epoch) {
    ElementResult res;
    ModelParams view = shared.grad_view();
    res.grads = view.store;

    const LoadedVideo& video = ds.videos[static_cast<size_t>(item.video)];
    uint64_t tag = static_cast<uint64_t>(item.video) * 1000000ull +
                   static_cast<uint64_t>(item.synthetic ? item.label_index
                                                        : item.frame_indices.back());

    FrameSequence seq;
    int labeled_pos;  // position of the real labeled frame within the sequence
    if (item.synthetic) {
        Rng synth_rng(derive_seed(cfg.seed, 0x53594eULL, static_cast<uint64_t>(epoch), tag));
        const auto& mask = video.masks[static_cast<size_t>(item.label_index)];
        if (!mask) throw ValidationError("train: labeled frame without mask");
        try {
            seq = synthesize_sequence(video.frames[static_cast<size_t>(item.label_index)], *mask,
                                      cfg.sequence_length, synth_rng, cfg.synth_ranges);
        } catch (const NoInstrumentError&) {
            return res;  // skipped, reported by the caller
        }
        labeled_pos = (cfg.sequence_length + 1) / 2 - 1;
    } else {
        RealSequence rs;
        rs.video = item.video;
        rs.frame_indices = item.frame_indices;
        seq = materialize_sequence(ds, rs);
        labeled_pos = seq.size() - 1;
    }

    if (cfg.augment) {
        Rng aug_rng(derive_seed(cfg.seed, 0x41554dULL, static_cast<uint64_t>(epoch), tag));
        seq = augment_sequence(seq, aug_rng, cfg.augment_config);
    }

    std::vector<Tensor> frames = to_tensors(seq);
    int n = seq.size();

    Tape tape;
    Tape::Scope scope(tape);
    Tensor total;
    if (item.synthetic) {
        std::vector<Tensor> onehots;
        for (int i = 0; i < n; ++i) {
            if (!seq.masks[static_cast<size_t>(i)]) {
                throw ValidationError("train: synthetic sequence frame is unlabeled");
            }
            onehots.push_back(mask_to_onehot(*seq.masks[static_cast<size_t>(i)]));
        }
        SequenceOutput fw_run = run_sequence(frames, Direction::forward, view);
        SequenceOutput bw_run = run_sequence(frames, Direction::backward, view);
        Tensor l_fw = loss_forward_seq(fw_run, onehots);
        Tensor l_bw = loss_backward_seq(bw_run, onehots);
        StepOutput first_step = model_step(frames[static_cast<size_t>(labeled_pos)], std::nullopt, view);
        Tensor l_first = loss_first(FrameOutput{labeled_pos, 0, first_step.softmax},
                                    onehots[static_cast<size_t>(labeled_pos)], n);
        total = total_loss_synthetic(l_fw, l_bw, l_first, cfg.weights);
        res.fw = l_fw.item();
        res.bw = l_bw.item();
        res.first = l_first.item();
    } else {
        const auto& last_mask = seq.masks[static_cast<size_t>(labeled_pos)];
        Tensor onehot_last = mask_to_onehot(*last_mask);
        SequenceOutput fw_run = run_sequence(frames, Direction::forward, view);
        Tensor l_last = loss_last(fw_run, onehot_last);
        StepOutput first_step = model_step(frames[static_cast<size_t>(labeled_pos)], std::nullopt, view);
        Tensor l_first = loss_first(FrameOutput{labeled_pos, 0, first_step.softmax}, onehot_last, n);
        total = total_loss_real(l_last, l_first, cfg.weights);
        res.last = l_last.item();
        res.first = l_first.item();
    }
    res.total = total.item();
    tape.backward(total);
    res.ok = true;
    return res;
}

void shuffle_items(std::vector<TrainItem>& items, Rng& rng) {
    for (size_t i = items.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& ds, const std::string& out_dir) {
    cfg.validate();
    if (ds.videos.empty()) throw ValidationError("train: dataset has no videos");
    fs::create_directories(out_dir);

    int fh = ds.videos[0].frames.at(0).h;
    int fw = ds.videos[0].frames.at(0).w;
    ModelConfig mcfg = model_config_from(cfg, fh, fw);
    ModelParams params = init_model_params(mcfg, derive_seed(cfg.seed, 0x696e6974ULL));
    AdamState opt = AdamState::for_params(params.store);

    // Train/holdout split by fold.
    std::vector<int> train_videos;
    bool any_holdout = false;
    for (size_t i = 0; i < ds.videos.size(); ++i) {
        if (cfg.holdout_fold >= 0 && ds.videos[i].fold == cfg.holdout_fold) {
            any_holdout = true;
            continue;
        }
        train_videos.push_back(static_cast<int>(i));
    }
    if (train_videos.empty()) throw ValidationError("train: no training videos outside the holdout fold");

    // Real sequences and synthetic source frames from the training videos.
    std::vector<TrainItem> real_items, synth_items;
    {
        SequenceReport rep;
        std::vector<RealSequence> seqs =
            extract_real_sequences(ds, cfg.sequence_length, cfg.sampling_stride, &rep);
        for (const RealSequence& rs : seqs) {
            if (std::find(train_videos.begin(), train_videos.end(), rs.video) == train_videos.end())
                continue;
            TrainItem item;
            item.video = rs.video;
            item.frame_indices = rs.frame_indices;
            item.synthetic = false;
            real_items.push_back(std::move(item));
        }
        for (int vi : train_videos) {
            for (int t : ds.videos[static_cast<size_t>(vi)].labeled_indices) {
                TrainItem item;
                item.video = vi;
                item.label_index = t;
                item.synthetic = true;
                synth_items.push_back(std::move(item));
            }
        }
    }
    if (real_items.empty()) {
        throw ValidationError("train: no usable real sequences (labels too close to video starts?)");
    }

    std::ofstream log(fs::path(out_dir) / "loss_log.jsonl");
    if (!log) throw RuntimeFailure(out_dir + ": cannot write loss log");

    TrainResult result;
    char buf[64];
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto epoch_t0 = std::chrono::steady_clock::now();
        double lr = lr_schedule(epoch, cfg);
        bool synthetic_phase = cfg.curriculum == Curriculum::synthetic_then_real &&
                               epoch < cfg.epochs / 2;

        std::vector<TrainItem> items = synthetic_phase ? synth_items : real_items;
        Rng shuffle_rng(derive_seed(cfg.seed, 0x73687566ULL, static_cast<uint64_t>(epoch)));
        shuffle_items(items, shuffle_rng);

        EpochLog elog;
        elog.epoch = epoch;
        elog.lr = lr;
        int processed = 0, skipped = 0;

        for (size_t start = 0; start < items.size(); start += static_cast<size_t>(cfg.batch_size)) {
            size_t end = std::min(items.size(), start + static_cast<size_t>(cfg.batch_size));
            int n_elems = static_cast<int>(end - start);
            std::vector<ElementResult> results(static_cast<size_t>(n_elems));

            int n_threads = resolve_thread_count(cfg.threads, n_elems);
            if (n_threads <= 1) {
                for (int e = 0; e < n_elems; ++e) {
                    results[static_cast<size_t>(e)] =
                        process_element(ds, items[start + static_cast<size_t>(e)], params, cfg, epoch);
                }
            } else {
                std::vector<std::thread> pool;
                std::exception_ptr first_error;
                std::mutex err_mx;
                for (int w = 0; w < n_threads; ++w) {
                    pool.emplace_back([&, w]() {
                        try {
                            for (int e = w; e < n_elems; e += n_threads) {
                                results[static_cast<size_t>(e)] = process_element(
                                    ds, items[start + static_cast<size_t>(e)], params, cfg, epoch);
                            }
                        } catch (...) {
                            std::lock_guard<std::mutex> lock(err_mx);
                            if (!first_error) first_error = std::current_exception();
                        }
                    });
                }
                for (auto& th : pool) th.join();
                if (first_error) std::rethrow_exception(first_error);
            }

            // Deterministic reduction in element order.
            params.store.zero_grads();
            int n_ok = 0;
            for (const ElementResult& r : results) {
                if (r.ok) ++n_ok;
            }
            if (n_ok == 0) {
                skipped += n_elems;
                continue;
            }
            for (const ElementResult& r : results) {
                if (!r.ok) {
                    ++skipped;
                    continue;
                }
                for (int i = 0; i < params.store.count(); ++i) {
                    real* dst = params.store.at(i).grad();
                    const real* src = r.grads.at(i).grad();
                    for (int64_t k = 0; k < params.store.at(i).size(); ++k) dst[k] += src[k];
                }
                elog.loss_total += r.total;
                elog.loss_fw += r.fw;
                elog.loss_bw += r.bw;
                elog.loss_last += r.last;
                elog.loss_first += r.first;
                ++processed;
            }
            params.store.scale_grads(real(1) / real(n_ok));

            if (cfg.clip_norm > 0) {
                real norm = params.store.grad_norm();
                if (norm > cfg.clip_norm) params.store.scale_grads(cfg.clip_norm / norm);
            }
            adam_step(params.store, opt, lr);
        }

        if (processed > 0) {
            elog.loss_total /= processed;
            elog.loss_fw /= processed;
            elog.loss_bw /= processed;
            elog.loss_last /= processed;
            elog.loss_first /= processed;
        }
        if (cfg.holdout_fold >= 0 && any_holdout) {
            ModelSegmenter seg(params);
            EvalOptions opts;
            opts.stride = cfg.eval_stride;
            opts.fold = cfg.holdout_fold;
            EvalReport er = evaluate_dataset(seg, ds, opts);
            elog.holdout_mdsc = er.mdsc;
        }

        elog.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_t0).count();

        ordered_json jl;
        jl["epoch"] = elog.epoch;
        jl["lr"] = elog.lr;
        jl["loss_total"] = elog.loss_total;
        jl["loss_fw"] = elog.loss_fw;
        jl["loss_bw"] = elog.loss_bw;
        jl["loss_last"] = elog.loss_last;
        jl["loss_1st"] = elog.loss_first;
        jl["phase"] = synthetic_phase ? "synthetic" : "real";
        if (skipped > 0) jl["skipped_items"] = skipped;
        if (elog.holdout_mdsc >= 0) jl["holdout_mdsc"] = elog.holdout_mdsc;
        jl["seconds"] = elog.seconds;
        log << jl.dump() << "\n";
        log.flush();

        std::snprintf(buf, sizeof(buf), "ckpt_epoch_%03d.mffa", epoch);
        save_training_checkpoint((fs::path(out_dir) / buf).string(), params, opt, epoch + 1, cfg);

        result.history.push_back(elog);
        result.epochs_run = epoch + 1;
        result.final_holdout_mdsc = elog.holdout_mdsc;

        if (cfg.early_stop_mdsc > 0 && elog.holdout_mdsc >= cfg.early_stop_mdsc) break;
    }

    result.final_checkpoint = (fs::path(out_dir) / "final.mffa").string();
    save_training_checkpoint(result.final_checkpoint, params, opt, result.epochs_run, cfg);
    return result;
}

void save_training_checkpoint(const std::string& path, const ModelParams& params,
                              const AdamState& opt, int epoch, const TrainConfig& cfg) {
    std::vector<NamedTensor> tensors;
    const ParamStore& s = params.store;
    for (int i = 0; i < s.count(); ++i) tensors.push_back({s.name(i), s.at(i).clone_data()});
    for (int i = 0; i < s.count(); ++i) {
        Tensor m = Tensor::from(s.at(i).shape(), opt.m[static_cast<size_t>(i)]);
        tensors.push_back({"opt.m." + s.name(i), m});
    }
    for (int i = 0; i < s.count(); ++i) {
        Tensor v = Tensor::from(s.at(i).shape(), opt.v[static_cast<size_t>(i)]);
        tensors.push_back({"opt.v." + s.name(i), v});
    }
    tensors.push_back({"opt.step", Tensor::from({1}, {real(opt.step)})});
    tensors.push_back({"train.epoch", Tensor::from({1}, {real(epoch)})});
    tensors.push_back(
        {"train.config_hash", Tensor::from({1}, {std::bit_cast<real>(config_hash(cfg))})});
    tensors.push_back({"meta.config_json", string_to_tensor(train_config_to_json(cfg))});
    save_tensors(path, tensors);
}

LoadedCheckpoint load_training_checkpoint(const std::string& path, int frame_h, int frame_w) {
    std::vector<NamedTensor> tensors = load_tensors(path);
    auto find = [&](const std::string& name) -> const NamedTensor* {
        for (const NamedTensor& nt : tensors) {
            if (nt.name == name) return &nt;
        }
        return nullptr;
    };

    const NamedTensor* cfg_json = find("meta.config_json");
    if (!cfg_json) throw ValidationError(path + ": checkpoint lacks meta.config_json");
    LoadedCheckpoint out;
    out.config = train_config_from_json(tensor_to_string(cfg_json->value));

    ModelConfig mcfg = model_config_from(out.config, frame_h, frame_w);
    out.params = init_model_params(mcfg, 0);
    ParamStore& s = out.params.store;
    out.opt = AdamState::for_params(s);

    for (int i = 0; i < s.count(); ++i) {
        const std::string& name = s.name(i);
        const NamedTensor* val = find(name);
        if (!val) throw ValidationError(path + ": checkpoint lacks parameter '" + name + "'");
        if (val->value.shape() != s.at(i).shape()) {
            throw ValidationError(path + ": parameter '" + name + "' has shape " +
                                  shape_str(val->value.shape()) + ", expected " +
                                  shape_str(s.at(i).shape()));
        }
        std::copy(val->value.data(), val->value.data() + val->value.size(), s.at(i).data());

        const NamedTensor* m = find("opt.m." + name);
        const NamedTensor* v = find("opt.v." + name);
        if (m && v) {
            out.opt.m[static_cast<size_t>(i)].assign(m->value.data(), m->value.data() + m->value.size());
            out.opt.v[static_cast<size_t>(i)].assign(v->value.data(), v->value.data() + v->value.size());
        }
    }
    if (const NamedTensor* st = find("opt.step")) out.opt.step = static_cast<int64_t>(st->value.item());
    if (const NamedTensor* ep = find("train.epoch")) out.epoch = static_cast<int>(ep->value.item());
    if (const NamedTensor* h = find("train.config_hash")) {
        out.config_hash = std::bit_cast<uint64_t>(h->value.item());
    }
    return out;
}

}  // namespace mffa
