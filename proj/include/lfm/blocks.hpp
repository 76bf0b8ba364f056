#pragma once

#include <array>

#include "lfm/lightfield.hpp"
#include "lfm/ssm.hpp"

namespace lfm {

// ---------------------------------------------------------------------------
// four deterministic 2D -> 1D flattening orders

enum class ScanDir { RowFwd = 0, ColFwd = 1, RowRev = 2, ColRev = 3 };

struct ScanLayout {
    ScanDir dir = ScanDir::RowFwd;
    int h = 0, w = 0;
};

// positions[k] = row-major plane index read at sequence step k
inline std::vector<int> scan_positions(const ScanLayout& layout) {
    const int H = layout.h, W = layout.w, L = H * W;
    std::vector<int> pos(L);
    switch (layout.dir) {
        case ScanDir::RowFwd:
            for (int k = 0; k < L; ++k) pos[k] = k;
            break;
        case ScanDir::ColFwd:
            for (int k = 0; k < L; ++k) pos[k] = (k % H) * W + k / H;
            break;
        case ScanDir::RowRev:
            for (int k = 0; k < L; ++k) pos[k] = L - 1 - k;
            break;
        case ScanDir::ColRev:
            for (int k = 0; k < L; ++k) pos[k] = ((L - 1 - k) % H) * W + (L - 1 - k) / H;
            break;
    }
    return pos;
}

template <typename T>
Tensor<T> flatten_2d(const Tensor<T>& x, const ScanLayout& layout) {
    if (x.rank() != 4) throw std::invalid_argument("flatten_2d: input must be [B,H,W,C]");
    if (x.dim(1) != layout.h || x.dim(2) != layout.w)
        throw std::invalid_argument("flatten_2d: layout extents " + std::to_string(layout.h) + "x" +
                                    std::to_string(layout.w) + " do not match input " + shape_str(x.shape()));
    const int B = x.dim(0), C = x.dim(3), L = layout.h * layout.w;
    auto pos = std::make_shared<std::vector<int>>(scan_positions(layout));
    std::vector<T> v(x.size());
    const T* xp = x.ptr();
    for (int b = 0; b < B; ++b)
        for (int k = 0; k < L; ++k)
            std::copy(xp + (static_cast<int64_t>(b) * L + (*pos)[k]) * C,
                      xp + (static_cast<int64_t>(b) * L + (*pos)[k] + 1) * C,
                      v.data() + (static_cast<int64_t>(b) * L + k) * C);
    auto cx = x;
    return make_result<T>({B, L, C}, std::move(v), {x}, [cx, pos, B, L, C](TensorNode<T>& out) mutable {
        if (!cx.requires_grad()) return;
        auto& g = cx.grad();
        for (int b = 0; b < B; ++b)
            for (int k = 0; k < L; ++k) {
                const T* go = out.grad.data() + (static_cast<int64_t>(b) * L + k) * C;
                T* gi = g.data() + (static_cast<int64_t>(b) * L + (*pos)[k]) * C;
                for (int c = 0; c < C; ++c) gi[c] += go[c];
            }
    });
}

template <typename T>
Tensor<T> unflatten_2d(const Tensor<T>& x, const ScanLayout& layout) {
    if (x.rank() != 3) throw std::invalid_argument("unflatten_2d: input must be [B,L,C]");
    const int B = x.dim(0), C = x.dim(2), L = layout.h * layout.w;
    if (x.dim(1) != L) throw std::invalid_argument("unflatten_2d: sequence length does not match layout");
    auto pos = std::make_shared<std::vector<int>>(scan_positions(layout));
    std::vector<T> v(x.size());
    const T* xp = x.ptr();
    for (int b = 0; b < B; ++b)
        for (int k = 0; k < L; ++k)
            std::copy(xp + (static_cast<int64_t>(b) * L + k) * C,
                      xp + (static_cast<int64_t>(b) * L + k + 1) * C,
                      v.data() + (static_cast<int64_t>(b) * L + (*pos)[k]) * C);
    auto cx = x;
    return make_result<T>({B, layout.h, layout.w, C}, std::move(v), {x},
                          [cx, pos, B, L, C](TensorNode<T>& out) mutable {
                              if (!cx.requires_grad()) return;
                              auto& g = cx.grad();
                              for (int b = 0; b < B; ++b)
                                  for (int k = 0; k < L; ++k) {
                                      const T* go = out.grad.data() + (static_cast<int64_t>(b) * L + (*pos)[k]) * C;
                                      T* gi = g.data() + (static_cast<int64_t>(b) * L + k) * C;
                                      for (int c = 0; c < C; ++c) gi[c] += go[c];
                                  }
                          });
}

inline constexpr std::array<ScanDir, 4> kScanDirs = {ScanDir::RowFwd, ScanDir::ColFwd, ScanDir::RowRev,
                                                     ScanDir::ColRev};

// ---------------------------------------------------------------------------
// SS2D baseline: four full-width copies, one scan direction each, summed

template <typename T>
Tensor<T> ss2d_reference(const Tensor<T>& x, const std::array<SsmParams<T>, 4>& params,
                         ScanStrategy strategy = ScanStrategy::Sequential) {
    const int H = x.dim(1), W = x.dim(2), C = x.dim(3);
    for (const auto& p : params)
        if (p.d_model != C) throw std::invalid_argument("ss2d_reference: scan width must equal C");
    Tensor<T> acc;
    for (int g = 0; g < 4; ++g) {
        ScanLayout layout{kScanDirs[g], H, W};
        auto y = unflatten_2d(params[g].forward(flatten_2d(x, layout), strategy), layout);
        acc = g == 0 ? y : add(acc, y);
    }
    return acc;
}

// Efficient SS2D: channels split into four contiguous groups, group g scanned
// in direction g at width C/4, concatenated back in original order.
template <typename T>
Tensor<T> ess2d(const Tensor<T>& x, const std::array<SsmParams<T>, 4>& group_params,
                ScanStrategy strategy = ScanStrategy::Sequential) {
    const int H = x.dim(1), W = x.dim(2), C = x.dim(3);
    if (C % 4 != 0) throw std::invalid_argument("ess2d: channels must be divisible by 4");
    const int gc = C / 4;
    for (const auto& p : group_params)
        if (p.d_model != gc) throw std::invalid_argument("ess2d: group scan width must equal C/4");
    std::vector<Tensor<T>> outs;
    outs.reserve(4);
    for (int g = 0; g < 4; ++g) {
        ScanLayout layout{kScanDirs[g], H, W};
        auto part = flatten_2d(slice_last(x, g * gc, (g + 1) * gc), layout);
        outs.push_back(unflatten_2d(group_params[g].forward(part, strategy), layout));
    }
    return concat_last(outs);
}

// ---------------------------------------------------------------------------
// efficient S6 block: gated two-stream structure around ESS2D

template <typename T>
struct EfficientS6 {
    int c = 0, expand = 2, n_state = 16;
    Linear<T> in_scan, in_gate, out_proj;
    DepthwiseConv2d<T> dw;
    LayerNorm<T> out_norm;
    std::array<SsmParams<T>, 4> groups;

    EfficientS6() = default;
    EfficientS6(int c_, int expand_, int n_state_, bool exact_zoh = true, bool has_skip = true)
        : c(c_), expand(expand_), n_state(n_state_) {
        const int ec = c_ * expand_;
        if (ec % 4 != 0) throw std::invalid_argument("efficient_s6: expand*C must be divisible by 4");
        in_scan = Linear<T>(c_, ec);
        in_gate = Linear<T>(c_, ec);
        out_proj = Linear<T>(ec, c_);
        dw = DepthwiseConv2d<T>(3, ec, 1);
        out_norm = LayerNorm<T>(ec);
        for (auto& g : groups) {
            g = SsmParams<T>(ec / 4, n_state_, -1, has_skip);
            g.exact_zoh = exact_zoh;
        }
    }

    void init(std::mt19937_64& rng) {
        in_scan.init(rng);
        in_gate.init(rng);
        out_proj.init(rng);
        dw.init(rng);
        for (auto& g : groups) g.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x, ScanStrategy strategy = ScanStrategy::Sequential) const {
        auto stream = silu(dw.forward(in_scan.forward(x)));
        stream = out_norm.forward(ess2d(stream, groups, strategy));
        auto gate = silu(in_gate.forward(x));
        return out_proj.forward(mul(stream, gate));
    }

    void collect(const std::string& prefix, ParamList<T>& out) const {
        in_scan.collect(prefix + ".in_scan", out);
        in_gate.collect(prefix + ".in_gate", out);
        dw.collect(prefix + ".dw", out);
        for (int g = 0; g < 4; ++g) groups[g].collect(prefix + ".scan" + std::to_string(g), out);
        out_norm.collect(prefix + ".out_norm", out);
        out_proj.collect(prefix + ".out_proj", out);
    }
};

// ---------------------------------------------------------------------------
// basic SSM block: two-stage residual structure with learnable skip scales

template <typename T>
struct BasicSsmBlock {
    int c = 0;
    LayerNorm<T> ln1, ln2;
    EfficientS6<T> s6;
    Conv2d<T> conv;
    ChannelAttention<T> ca;
    Tensor<T> s1, s2;

    BasicSsmBlock() = default;
    BasicSsmBlock(int c_, int expand, int n_state, int ca_reduction = 16, bool exact_zoh = true,
                  bool has_skip = true)
        : c(c_),
          ln1(c_),
          ln2(c_),
          s6(c_, expand, n_state, exact_zoh, has_skip),
          conv(3, c_, c_, 1),
          ca(c_, ca_reduction),
          s1(Shape{c_}),
          s2(Shape{c_}) {
        std::fill(s1.data().begin(), s1.data().end(), T(1));
        std::fill(s2.data().begin(), s2.data().end(), T(1));
        s1.set_requires_grad(true);
        s2.set_requires_grad(true);
    }

    void init(std::mt19937_64& rng) {
        s6.init(rng);
        conv.init(rng);
        ca.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x, ScanStrategy strategy = ScanStrategy::Sequential) const {
        auto fbar = add(s6.forward(ln1.forward(x), strategy), channel_scale(x, s1));
        return add(ca.forward(conv.forward(ln2.forward(fbar))), channel_scale(fbar, s2));
    }

    void collect(const std::string& prefix, ParamList<T>& out) const {
        ln1.collect(prefix + ".ln1", out);
        s6.collect(prefix + ".s6", out);
        add_param(out, prefix + ".s1", s1);
        ln2.collect(prefix + ".ln2", out);
        conv.collect(prefix + ".conv", out);
        ca.collect(prefix + ".ca", out);
        add_param(out, prefix + ".s2", s2);
    }
};

// ---------------------------------------------------------------------------
// subspace wrapper: reshape the 4D+C feature to a 2D batch form, run the
// cascaded basic blocks, reshape back

enum class SubspaceKind { Spatial, Angular, EpiH, EpiV };

inline const char* subspace_kind_name(SubspaceKind k) {
    switch (k) {
        case SubspaceKind::Spatial: return "spatial";
        case SubspaceKind::Angular: return "angular";
        case SubspaceKind::EpiH: return "epi_h";
        case SubspaceKind::EpiV: return "epi_v";
    }
    return "?";
}

template <typename T>
struct SubspaceBlock {
    std::vector<BasicSsmBlock<T>> blocks;

    SubspaceBlock() = default;
    SubspaceBlock(int c, int n_basic, int expand, int n_state, int ca_reduction = 16, bool exact_zoh = true,
                  bool has_skip = true) {
        blocks.reserve(n_basic);
        for (int i = 0; i < n_basic; ++i)
            blocks.emplace_back(c, expand, n_state, ca_reduction, exact_zoh, has_skip);
    }

    void init(std::mt19937_64& rng) {
        for (auto& b : blocks) b.init(rng);
    }

    // x: [U,V,H,W,C]
    Tensor<T> forward(const Tensor<T>& x, SubspaceKind kind,
                      ScanStrategy strategy = ScanStrategy::Sequential) const {
        if (x.rank() != 5) throw std::invalid_argument("subspace_block: input must be [U,V,H,W,C]");
        const int u = x.dim(0), v = x.dim(1), h = x.dim(2), w = x.dim(3);
        Tensor<T> t;
        switch (kind) {
            case SubspaceKind::Spatial: t = to_sai(x); break;
            case SubspaceKind::Angular: t = to_macpi(x); break;
            case SubspaceKind::EpiH: t = to_epi_h(x); break;
            case SubspaceKind::EpiV: t = to_epi_v(x); break;
        }
        for (const auto& b : blocks) t = b.forward(t, strategy);
        switch (kind) {
            case SubspaceKind::Spatial: return from_sai(t, u, v);
            case SubspaceKind::Angular: return from_macpi(t, h, w);
            case SubspaceKind::EpiH: return from_epi_h(t, v, w);
            case SubspaceKind::EpiV: return from_epi_v(t, u, h);
        }
        throw std::logic_error("subspace_block: bad kind");
    }

    void collect(const std::string& prefix, ParamList<T>& out) const {
        for (size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + ".b" + std::to_string(i), out);
    }
};

}  // namespace lfm
