#pragma once

#include "lfm/metrics.hpp"
#include "lfm/network.hpp"

namespace lfm {

struct TrainConfig {
    double lr0 = 2e-4;
    int halve_every = 15;  // epochs
    int total_epochs = 60;
    int batch = 2;
    bool augment = true;
    uint64_t seed = 1;
    int val_every = 15;        // epochs between validation/checkpoint passes
    std::string log_path;      // optional append-only text log
    std::string checkpoint_path;  // optional checkpoint target
};

inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    return cfg.lr0 * std::pow(0.5, static_cast<double>(epoch / cfg.halve_every));
}

template <typename T>
struct LfPair {
    LightField<T> lr;
    LightField<T> hr;
};

// ---------------------------------------------------------------------------
// finite-difference gradient verification

struct GradCheckReport {
    double max_rel_err = 0;
    std::string worst_param;
    bool finite = true;
    bool pass = false;
    int checked = 0;
};

// Central differences over every learnable scalar. loss_fn must rebuild the
// forward pass from the current parameter values on each call.
template <typename T>
GradCheckReport grad_check(ParamList<T>& params, const std::function<Tensor<T>()>& loss_fn, double eps = 1e-5,
                           double tol = 1e-4) {
    GradCheckReport rep;
    zero_grads(params);
    auto loss = loss_fn();
    backward(loss);

    std::vector<std::vector<T>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) analytic.push_back(p.tensor.grad());

    NoGradGuard ng;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        if (!params[pi].learnable) continue;
        auto& val = params[pi].tensor.data();
        for (size_t i = 0; i < val.size(); ++i) {
            const T saved = val[i];
            val[i] = saved + static_cast<T>(eps);
            const double up = static_cast<double>(loss_fn().item());
            val[i] = saved - static_cast<T>(eps);
            const double dn = static_cast<double>(loss_fn().item());
            val[i] = saved;
            const double numeric = (up - dn) / (2 * eps);
            const double a = static_cast<double>(analytic[pi][i]);
            if (!std::isfinite(numeric) || !std::isfinite(a)) {
                rep.finite = false;
                rep.worst_param = params[pi].name + "[" + std::to_string(i) + "]";
                rep.pass = false;
                return rep;
            }
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
            const double rel = std::abs(a - numeric) / denom;
            ++rep.checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = params[pi].name + "[" + std::to_string(i) + "]";
            }
        }
    }
    rep.pass = rep.finite && rep.max_rel_err < tol;
    return rep;
}

// ---------------------------------------------------------------------------
// desk-scale training loops

// One-sample Adam loop; returns the per-step L1 curve. Throws if the loss
// diverges past 10x its initial value.
template <typename T>
std::vector<double> overfit_single_patch(LfMambaNet<T>& net, const LightField<T>& hr_patch, int steps,
                                         double lr = 1e-3, double stop_below = 0.0) {
    LightField<T> lr_patch = bicubic_resize(hr_patch, 1.0 / net.cfg.scale);
    auto params = net.params();
    Adam<T> opt;
    opt.lr = static_cast<T>(lr);
    std::vector<double> curve;
    curve.reserve(steps);
    for (int s = 0; s < steps; ++s) {
        zero_grads(params);
        auto out = net.forward(lr_patch);
        auto loss = l1_loss(out.data, hr_patch.data);
        const double lv = static_cast<double>(loss.item());
        curve.push_back(lv);
        if (!std::isfinite(lv) || (s > 0 && lv > 10 * curve.front()))
            throw std::runtime_error("overfit_single_patch: diverged at step " + std::to_string(s));
        if (stop_below > 0 && lv < stop_below) break;
        backward(loss);
        opt.step(params);
    }
    return curve;
}

template <typename T>
double validation_psnr(const LfMambaNet<T>& net, const std::vector<LfPair<T>>& val) {
    NoGradGuard ng;
    std::vector<SceneMetrics> scenes;
    for (const auto& pair : val) {
        auto out = net.forward(pair.lr);
        scenes.push_back(scene_metrics(out, pair.hr, /*with_ssim=*/false));
    }
    return aggregate_scenes(scenes).psnr;
}

struct TrainResult {
    std::vector<double> epoch_loss;
    double final_val_psnr = 0;
    int64_t steps = 0;
};

template <typename T>
TrainResult train(LfMambaNet<T>& net, const std::vector<LfPair<T>>& train_set,
                  const std::vector<LfPair<T>>& val_set, const TrainConfig& cfg) {
    if (train_set.empty()) throw std::invalid_argument("train: empty dataset");
    auto params = net.params();
    Adam<T> opt;
    std::mt19937_64 rng(cfg.seed);
    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path, std::ios::app);
        if (!log) throw std::runtime_error("train: cannot open log " + cfg.log_path);
    }

    auto snapshot = [&] {
        std::vector<std::vector<T>> vals;
        vals.reserve(params.size());
        for (auto& p : params) vals.push_back(p.tensor.data());
        return vals;
    };
    auto save_ckpt = [&] {
        if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, params);
    };
    std::vector<std::vector<T>> last_good = snapshot();

    TrainResult res;
    int64_t step = 0;
    double val_psnr = 0;
    for (int epoch = 0; epoch < cfg.total_epochs; ++epoch) {
        opt.lr = static_cast<T>(lr_at_epoch(cfg, epoch));
        std::vector<size_t> order(train_set.size());
        std::iota(order.begin(), order.end(), size_t{0});
        std::shuffle(order.begin(), order.end(), rng);

        double epoch_loss = 0;
        int64_t epoch_batches = 0;
        for (size_t i = 0; i < order.size(); i += cfg.batch) {
            zero_grads(params);
            Tensor<T> batch_loss;
            int in_batch = 0;
            for (size_t j = i; j < std::min(order.size(), i + cfg.batch); ++j) {
                LfPair<T> sample = train_set[order[j]];
                if (cfg.augment) {
                    if (rng() & 1) {
                        sample.lr = augment(sample.lr, Augment::FlipH);
                        sample.hr = augment(sample.hr, Augment::FlipH);
                    }
                    if (rng() & 1) {
                        sample.lr = augment(sample.lr, Augment::FlipV);
                        sample.hr = augment(sample.hr, Augment::FlipV);
                    }
                    if (sample.lr.u() == sample.lr.v()) {
                        const int quarter_turns = static_cast<int>(rng() % 4);
                        for (int r = 0; r < quarter_turns; ++r) {
                            sample.lr = augment(sample.lr, Augment::Rot90);
                            sample.hr = augment(sample.hr, Augment::Rot90);
                        }
                    }
                }
                auto out = net.forward(sample.lr);
                auto loss = l1_loss(out.data, sample.hr.data);
                batch_loss = in_batch == 0 ? loss : add(batch_loss, loss);
                ++in_batch;
            }
            if (in_batch > 1) batch_loss = scale(batch_loss, T(1) / static_cast<T>(in_batch));
            const double lv = static_cast<double>(batch_loss.item());
            if (!std::isfinite(lv)) {
                for (size_t p = 0; p < params.size(); ++p) params[p].tensor.data() = last_good[p];
                save_ckpt();
                throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                                         "; restored last good checkpoint");
            }
            backward(batch_loss);
            opt.step(params);
            epoch_loss += lv;
            ++epoch_batches;
            if (log) log << epoch << " " << step << " " << opt.lr << " " << lv << " " << val_psnr << "\n";
            ++step;
        }
        res.epoch_loss.push_back(epoch_loss / std::max<int64_t>(1, epoch_batches));
        last_good = snapshot();

        const bool do_val = (epoch + 1) % cfg.val_every == 0 || epoch + 1 == cfg.total_epochs;
        if (do_val && !val_set.empty()) {
            val_psnr = validation_psnr(net, val_set);
            if (log) log << epoch << " " << step << " " << opt.lr << " " << res.epoch_loss.back() << " "
                         << val_psnr << "\n";
            save_ckpt();
        }
    }
    if (!cfg.checkpoint_path.empty()) save_ckpt();
    res.final_val_psnr = val_psnr;
    res.steps = step;
    return res;
}

// ---------------------------------------------------------------------------
// synthetic piecewise-constant pattern scenes: sharp stripe/rectangle content
// that bicubic upsampling visibly softens

template <typename T>
LightField<T> make_synthetic_pattern(int u, int v, int size, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> level(0.1, 0.9);
    std::uniform_int_distribution<int> period_pick(0, 1);
    std::uniform_int_distribution<int> orient_pick(0, 1);
    const int periods[2] = {6, 8};
    const int period = periods[period_pick(rng)];
    const bool vertical = orient_pick(rng) == 1;
    std::uniform_int_distribution<int> phase_pick(0, period - 1);
    const int phase = phase_pick(rng);
    double lo = level(rng), hi = level(rng);
    if (lo > hi) std::swap(lo, hi);
    if (hi - lo < 0.3) hi = std::min(1.0, lo + 0.5);

    std::vector<T> plane(static_cast<size_t>(size) * size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const int t = vertical ? x : y;
            plane[static_cast<size_t>(y) * size + x] =
                static_cast<T>(((t + phase) / (period / 2)) % 2 == 0 ? lo : hi);
        }
    // a couple of solid rectangles on top
    std::uniform_int_distribution<int> pos(0, size - 1);
    for (int rect = 0; rect < 2; ++rect) {
        int y0 = pos(rng), x0 = pos(rng);
        int y1 = std::min(size, y0 + 4 + pos(rng) % std::max(1, size / 4));
        int x1 = std::min(size, x0 + 4 + pos(rng) % std::max(1, size / 4));
        const T val = static_cast<T>(level(rng));
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) plane[static_cast<size_t>(y) * size + x] = val;
    }

    LightField<T> lf(u, v, size, size, 1);
    for (int uu = 0; uu < u; ++uu)
        for (int vv = 0; vv < v; ++vv)
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x)
                    lf.at(uu, vv, y, x) = plane[static_cast<size_t>(y) * size + x];
    return lf;
}

template <typename T>
std::vector<LfPair<T>> make_synthetic_dataset(int n, int u, int v, int hr_size, int scale,
                                              std::mt19937_64& rng) {
    std::vector<LfPair<T>> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        LfPair<T> p;
        p.hr = make_synthetic_pattern<T>(u, v, hr_size, rng);
        p.lr = bicubic_resize(p.hr, 1.0 / scale);
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace lfm
