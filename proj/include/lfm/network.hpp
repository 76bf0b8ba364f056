#pragma once

#include <fstream>
#include <optional>

#include "lfm/blocks.hpp"
#include "lfm/checkpoint.hpp"

namespace lfm {

enum class Variant { SR, ASR };
enum class FusionMode { Concat, Sum, None };

struct NetworkConfig {
    int c = 64;            // feature channels
    int u = 5, v = 5;      // angular extents
    int scale = 2;         // spatial upscaling factor (2 or 4)
    int n_rounds_safl = 3;
    int n_rounds_lsfl = 3;
    int n_basic = 2;       // basic SSM blocks per subspace block
    int n_state = 16;
    int expand = 4;        // efficient-S6 expansion; calibrated to the parameter budget
    int ca_reduction = 16;
    Variant variant = Variant::SR;
    FusionMode fusion = FusionMode::Concat;
    bool bicubic_skip = true;
    bool exact_zoh = true;
    bool ssm_skip = true;   // per-channel direct feedthrough inside scans
    int asr_target = 7;     // output angular extent for the ASR head
    int asr_mid = 16;       // ASR head intermediate channels

    void validate() const {
        if (c < 1 || u < 1 || v < 1) throw std::invalid_argument("config: bad extents");
        if (variant == Variant::SR && scale != 2 && scale != 4)
            throw std::invalid_argument("config: scale must be 2 or 4");
        if ((static_cast<int64_t>(expand) * c) % 4 != 0)
            throw std::invalid_argument("config: expand*C must be divisible by 4");
        if (c % ca_reduction != 0) throw std::invalid_argument("config: C must be divisible by ca_reduction");
        if (n_rounds_safl < 0 || n_rounds_lsfl < 0 || n_basic < 1)
            throw std::invalid_argument("config: bad block counts");
        if (variant == Variant::ASR && (u != 2 || v != 2))
            throw std::invalid_argument("config: ASR variant expects 2x2 angular input");
    }
};

inline void write_config(const NetworkConfig& cfg, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("config: cannot write " + path);
    os << "c = " << cfg.c << "\n";
    os << "u = " << cfg.u << "\n";
    os << "v = " << cfg.v << "\n";
    os << "scale = " << cfg.scale << "\n";
    os << "n_rounds_safl = " << cfg.n_rounds_safl << "\n";
    os << "n_rounds_lsfl = " << cfg.n_rounds_lsfl << "\n";
    os << "n_basic = " << cfg.n_basic << "\n";
    os << "n_state = " << cfg.n_state << "\n";
    os << "expand = " << cfg.expand << "\n";
    os << "ca_reduction = " << cfg.ca_reduction << "\n";
    os << "variant = " << (cfg.variant == Variant::SR ? "sr" : "asr") << "\n";
    os << "fusion = "
       << (cfg.fusion == FusionMode::Concat ? "concat" : cfg.fusion == FusionMode::Sum ? "sum" : "none") << "\n";
    os << "bicubic_skip = " << (cfg.bicubic_skip ? 1 : 0) << "\n";
    os << "exact_zoh = " << (cfg.exact_zoh ? 1 : 0) << "\n";
    os << "ssm_skip = " << (cfg.ssm_skip ? 1 : 0) << "\n";
    os << "asr_target = " << cfg.asr_target << "\n";
    os << "asr_mid = " << cfg.asr_mid << "\n";
}

inline NetworkConfig read_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    NetworkConfig cfg;
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty()) continue;
        auto as_int = [&] { return std::stoi(val); };
        if (key == "c") cfg.c = as_int();
        else if (key == "u") cfg.u = as_int();
        else if (key == "v") cfg.v = as_int();
        else if (key == "scale") cfg.scale = as_int();
        else if (key == "n_rounds_safl") cfg.n_rounds_safl = as_int();
        else if (key == "n_rounds_lsfl") cfg.n_rounds_lsfl = as_int();
        else if (key == "n_basic") cfg.n_basic = as_int();
        else if (key == "n_state") cfg.n_state = as_int();
        else if (key == "expand") cfg.expand = as_int();
        else if (key == "ca_reduction") cfg.ca_reduction = as_int();
        else if (key == "variant") cfg.variant = (val == "asr") ? Variant::ASR : Variant::SR;
        else if (key == "fusion")
            cfg.fusion = (val == "sum") ? FusionMode::Sum : (val == "none") ? FusionMode::None : FusionMode::Concat;
        else if (key == "bicubic_skip") cfg.bicubic_skip = as_int() != 0;
        else if (key == "exact_zoh") cfg.exact_zoh = as_int() != 0;
        else if (key == "ssm_skip") cfg.ssm_skip = as_int() != 0;
        else if (key == "asr_target") cfg.asr_target = as_int();
        else if (key == "asr_mid") cfg.asr_mid = as_int();
        else throw std::runtime_error("config: unknown key '" + key + "' in " + path);
    }
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// the full network

template <typename T>
struct LfMambaNet {
    NetworkConfig cfg;

    Conv2d<T> ife1, ife2;
    std::vector<SubspaceBlock<T>> angular, spatial;
    std::vector<SubspaceBlock<T>> epi;  // shared between the EPI-V and EPI-H passes of a round
    Conv2d<T> fuse_conv;
    Conv2d<T> up1, up2, recon_out;
    Conv2d<T> asr_ang, asr_expand, asr_out;

    explicit LfMambaNet(const NetworkConfig& config) : cfg(config) {
        cfg.validate();
        ife1 = Conv2d<T>(3, 1, cfg.c, 1);
        ife2 = Conv2d<T>(3, cfg.c, cfg.c, 1);
        auto make_subspace = [&] {
            return SubspaceBlock<T>(cfg.c, cfg.n_basic, cfg.expand, cfg.n_state, cfg.ca_reduction, cfg.exact_zoh,
                                    cfg.ssm_skip);
        };
        for (int r = 0; r < cfg.n_rounds_safl; ++r) {
            angular.push_back(make_subspace());
            spatial.push_back(make_subspace());
        }
        for (int r = 0; r < cfg.n_rounds_lsfl; ++r) epi.push_back(make_subspace());
        if (cfg.fusion == FusionMode::Concat)
            fuse_conv = Conv2d<T>(1, 3 * cfg.c, cfg.c, 0);
        else if (cfg.fusion == FusionMode::Sum)
            fuse_conv = Conv2d<T>(1, cfg.c, cfg.c, 0);
        if (cfg.variant == Variant::SR) {
            up1 = Conv2d<T>(3, cfg.c, cfg.c * 4, 1);
            if (cfg.scale == 4) up2 = Conv2d<T>(3, cfg.c, cfg.c * 4, 1);
            recon_out = Conv2d<T>(3, cfg.c, 1, 1);
        } else {
            asr_ang = Conv2d<T>(2, cfg.c, cfg.c, 0);
            asr_expand = Conv2d<T>(1, cfg.c, cfg.asr_target * cfg.asr_target * cfg.asr_mid, 0);
            asr_out = Conv2d<T>(3, cfg.asr_mid, 1, 1);
        }
    }

    void init(std::mt19937_64& rng) {
        ife1.init(rng);
        ife2.init(rng);
        for (auto& s : angular) s.init(rng);
        for (auto& s : spatial) s.init(rng);
        for (auto& s : epi) s.init(rng);
        if (fuse_conv.w.defined()) fuse_conv.init(rng);
        if (cfg.variant == Variant::SR) {
            up1.init(rng);
            if (up2.w.defined()) up2.init(rng);
            recon_out.init(rng);
        } else {
            asr_ang.init(rng);
            asr_expand.init(rng);
            asr_out.init(rng);
        }
    }

    // Step 1: shallow feature extraction applied per sub-aperture image.
    Tensor<T> ife(const LightField<T>& lf) const {
        if (lf.c() != 1) throw std::invalid_argument("ife: single-channel (luma) input required");
        auto f = to_sai(lf.data);
        f = ife2.forward(leaky_relu(ife1.forward(f), T(0.2)));
        return from_sai(f, lf.u(), lf.v());
    }

    // Step 2: alternating angular/spatial rounds with a global residual.
    Tensor<T> safl(const Tensor<T>& f_init, ScanStrategy strategy = ScanStrategy::Sequential) const {
        auto f = f_init;
        for (size_t r = 0; r < angular.size(); ++r) {
            f = angular[r].forward(f, SubspaceKind::Angular, strategy);
            f = spatial[r].forward(f, SubspaceKind::Spatial, strategy);
        }
        return add(f, f_init);
    }

    // Step 3: EPI rounds (vertical then horizontal, shared parameters).
    Tensor<T> lsfl(const Tensor<T>& f_sa, ScanStrategy strategy = ScanStrategy::Sequential) const {
        auto f = f_sa;
        for (size_t r = 0; r < epi.size(); ++r) {
            f = epi[r].forward(f, SubspaceKind::EpiV, strategy);
            f = epi[r].forward(f, SubspaceKind::EpiH, strategy);
        }
        return add(f, f_sa);
    }

    // Step 4: multi-level fusion.
    Tensor<T> fuse(const Tensor<T>& f_init, const Tensor<T>& f_sa, const Tensor<T>& f_struct) const {
        if (f_init.shape() != f_sa.shape() || f_init.shape() != f_struct.shape())
            throw std::invalid_argument("fuse: feature shapes differ");
        const int u = f_init.dim(0), v = f_init.dim(1);
        switch (cfg.fusion) {
            case FusionMode::Concat: {
                auto cat = concat_last(std::vector<Tensor<T>>{f_init, f_sa, f_struct});
                return from_sai(fuse_conv.forward(to_sai(cat)), u, v);
            }
            case FusionMode::Sum:
                return from_sai(fuse_conv.forward(to_sai(add(add(f_init, f_sa), f_struct))), u, v);
            case FusionMode::None:
                return f_struct;
        }
        throw std::logic_error("fuse: bad mode");
    }

    // Step 5: pixel-shuffle reconstruction plus the global bicubic skip.
    LightField<T> reconstruct(const Tensor<T>& f_fuse, const LightField<T>& lf_lr) const {
        const int u = f_fuse.dim(0), v = f_fuse.dim(1);
        auto f = to_sai(f_fuse);
        f = pixel_shuffle(up1.forward(f), 2);
        if (cfg.scale == 4) f = pixel_shuffle(up2.forward(f), 2);
        f = recon_out.forward(f);
        auto out = from_sai(f, u, v);
        if (cfg.bicubic_skip) {
            auto skip = bicubic_resize(lf_lr, static_cast<double>(cfg.scale));
            out = add(out, skip.data);  // the skip is parameter-free and carries no gradient
        }
        return LightField<T>(out);
    }

    // ASR head: 2x2 angular aggregation, channel expansion, angular shuffle
    // to the target grid, spatial refinement.
    LightField<T> asr_head(const Tensor<T>& f_fuse) const {
        if (f_fuse.dim(0) != 2 || f_fuse.dim(1) != 2)
            throw std::invalid_argument("asr_head: fused feature must have 2x2 angular extents");
        const int h = f_fuse.dim(2), w = f_fuse.dim(3);
        const int t = cfg.asr_target;
        // angular 2x2 conv without padding on the macro-pixel form
        auto mac = to_macpi(f_fuse);                       // [H*W, 2, 2, C]
        auto agg = asr_ang.forward(mac);                   // [H*W, 1, 1, C]
        auto dense = asr_expand.forward(agg);              // [H*W, 1, 1, t*t*mid]
        auto grid = reshape(dense, {h, w, t, t, cfg.asr_mid});
        auto ang = permute(grid, {2, 3, 0, 1, 4});         // [t, t, H, W, mid]
        auto out = from_sai(asr_out.forward(to_sai(ang)), t, t);
        return LightField<T>(out);
    }

    LightField<T> forward(const LightField<T>& lf_lr, ScanStrategy strategy = ScanStrategy::Sequential) const {
        if (lf_lr.u() != cfg.u || lf_lr.v() != cfg.v)
            throw std::invalid_argument("forward: angular extents " + std::to_string(lf_lr.u()) + "x" +
                                        std::to_string(lf_lr.v()) + " do not match config " +
                                        std::to_string(cfg.u) + "x" + std::to_string(cfg.v));
        auto f_init = ife(lf_lr);
        auto f_sa = safl(f_init, strategy);
        auto f_struct = lsfl(f_sa, strategy);
        auto f_fuse = fuse(f_init, f_sa, f_struct);
        if (cfg.variant == Variant::ASR) return asr_head(f_fuse);
        return reconstruct(f_fuse, lf_lr);
    }

    void collect(ParamList<T>& out) const {
        ife1.collect("ife.conv1", out);
        ife2.collect("ife.conv2", out);
        for (size_t r = 0; r < angular.size(); ++r) {
            angular[r].collect("safl.r" + std::to_string(r) + ".angular", out);
            spatial[r].collect("safl.r" + std::to_string(r) + ".spatial", out);
        }
        for (size_t r = 0; r < epi.size(); ++r) epi[r].collect("lsfl.r" + std::to_string(r) + ".epi", out);
        if (fuse_conv.w.defined()) fuse_conv.collect("fuse", out);
        if (cfg.variant == Variant::SR) {
            up1.collect("recon.up1", out);
            if (up2.w.defined()) up2.collect("recon.up2", out);
            recon_out.collect("recon.out", out);
        } else {
            asr_ang.collect("asr.ang", out);
            asr_expand.collect("asr.expand", out);
            asr_out.collect("asr.out", out);
        }
    }

    ParamList<T> params() const {
        ParamList<T> out;
        collect(out);
        return out;
    }
};

template <typename T>
int64_t count_params(const LfMambaNet<T>& net) {
    return param_count(net.params());
}

// ---------------------------------------------------------------------------
// analytic multiply-accumulate counter
//
// Counts the MACs of convolutions, linear projections and scans; the scan
// recurrence is billed at kScanMacsPerStateElement per (position, channel,
// state) element (state update, readout, discretization). Elementwise
// activations, norms and residuals are excluded. FLOPs are reported as 1 or 2
// per MAC by the callers.

inline constexpr int kScanMacsPerStateElement = 5;

struct FlopBreakdown {
    int64_t macs = 0;
    int64_t scan_macs = 0;
};

inline int64_t conv_macs(int64_t positions, int k, int64_t ci, int64_t co) {
    return positions * k * k * ci * co;
}

inline FlopBreakdown count_macs(const NetworkConfig& cfg, int u, int v, int h, int w) {
    FlopBreakdown fb;
    const int64_t views = static_cast<int64_t>(u) * v;
    const int64_t pos = views * h * w;  // total feature positions, invariant across slice forms
    const int64_t C = cfg.c;
    const int64_t EC = C * cfg.expand;
    const int64_t N = cfg.n_state;
    const int dr = default_dt_rank(static_cast<int>(EC / 4));

    // IFE
    fb.macs += conv_macs(pos, 3, 1, C) + conv_macs(pos, 3, C, C);

    // one efficient-S6 block at any slice form costs the same per position
    auto basic_block = [&]() {
        int64_t m = 0;
        m += pos * C * EC * 2;      // in_scan + in_gate
        m += pos * 9 * EC;          // depthwise 3x3
        m += pos * EC * (2 * N + dr) + pos * dr * (EC / 4) * 4;  // B,C,dt projections at group width
        int64_t scan = pos * EC * N * kScanMacsPerStateElement;
        m += pos * EC * C;          // out_proj
        m += conv_macs(pos, 3, C, C);  // stage-2 conv
        m += 2 * C * (C / cfg.ca_reduction) * views;  // channel attention MLP per pooled vector
        return std::pair<int64_t, int64_t>(m, scan);
    };
    const int64_t applications =
        static_cast<int64_t>(cfg.n_basic) * (2 * cfg.n_rounds_safl + 2 * cfg.n_rounds_lsfl);
    auto [per_block, per_scan] = basic_block();
    fb.macs += applications * per_block;
    fb.scan_macs += applications * per_scan;
    fb.macs += applications * per_scan;

    // fusion
    if (cfg.fusion == FusionMode::Concat) fb.macs += conv_macs(pos, 1, 3 * C, C);
    else if (cfg.fusion == FusionMode::Sum) fb.macs += conv_macs(pos, 1, C, C);

    if (cfg.variant == Variant::SR) {
        fb.macs += conv_macs(pos, 3, C, C * 4);
        if (cfg.scale == 4) fb.macs += conv_macs(pos * 4, 3, C, C * 4);
        const int64_t hr_pos = pos * cfg.scale * cfg.scale;
        fb.macs += conv_macs(hr_pos, 3, C, 1);
    } else {
        const int64_t hw = static_cast<int64_t>(h) * w;
        fb.macs += conv_macs(hw, 2, C, C);
        fb.macs += conv_macs(hw, 1, C, static_cast<int64_t>(cfg.asr_target) * cfg.asr_target * cfg.asr_mid);
        fb.macs += conv_macs(hw * cfg.asr_target * cfg.asr_target, 3, cfg.asr_mid, 1);
    }
    return fb;
}

}  // namespace lfm
