// Command-line front end: verification suites, analytic/runtime benchmarks,
// desk-scale training, super-resolution inference, slicing and metrics over
// the light-field container format.

#include <chrono>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "lfm/lf_io.hpp"
#include "lfm/train.hpp"
#include "lfm/verify.hpp"

namespace fs = std::filesystem;
using lfm::LightField;
using lfm::Tensor;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFail = 1;
constexpr int kExitInputError = 2;

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::array<int, 4> parse_extents(const std::string& s) {
    std::array<int, 4> out{};
    std::stringstream ss(s);
    std::string tok;
    int i = 0;
    while (std::getline(ss, tok, ',')) {
        if (i >= 4) throw InputError("expected 4 extents U,V,H,W, got '" + s + "'");
        out[i++] = std::stoi(tok);
    }
    if (i != 4) throw InputError("expected 4 extents U,V,H,W, got '" + s + "'");
    for (int e : out)
        if (e < 1) throw InputError("extents must be positive");
    return out;
}

uint8_t checkpoint_dtype(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw lfm::CheckpointError("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, lfm::kCheckpointMagic, 4) != 0)
        throw lfm::CheckpointError("checkpoint: bad magic in " + path);
    uint8_t version = 0, dtype = 0;
    is.read(reinterpret_cast<char*>(&version), 1);
    is.read(reinterpret_cast<char*>(&dtype), 1);
    if (!is) throw lfm::CheckpointError("checkpoint: truncated header in " + path);
    return dtype;
}

std::string sidecar_config_path(const std::string& model_path) {
    fs::path p(model_path);
    p.replace_extension(".cfg");
    return p.string();
}

// Y channel of a container light field; RGB input is converted first.
template <typename T>
LightField<T> extract_luma(const LightField<T>& lf) {
    if (lf.c() == 1) return lf;
    if (lf.c() != 3) throw InputError("expected 1- or 3-channel light field");
    LightField<T> y(lf.u(), lf.v(), lf.h(), lf.w(), 1);
    auto ycc = lfm::rgb_to_ycbcr(lf.data);
    for (int64_t i = 0; i < y.data.size(); ++i) y.data.data()[i] = ycc.data()[i * 3];
    return y;
}

template <typename T>
int run_sr(const std::string& model_path, const std::string& input_dir, const std::string& out_dir,
           int scale, bool ensemble, const std::string& gt_dir, bool machine) {
    auto cfg = lfm::read_config(sidecar_config_path(model_path));
    if (cfg.variant != lfm::Variant::SR) throw InputError("sr: model config is not an SR model");
    if (scale != 0 && scale != cfg.scale)
        throw InputError("sr: requested scale " + std::to_string(scale) + " but model was built for " +
                         std::to_string(cfg.scale));
    lfm::LfMambaNet<T> net(cfg);
    auto params = net.params();
    lfm::apply_checkpoint(params, lfm::load_checkpoint<T>(model_path));

    auto lf = lfm::read_lf_container<T>(input_dir);
    if (lf.u() != cfg.u || lf.v() != cfg.v)
        throw InputError("sr: input angular extents do not match the model");
    const auto meta = lfm::read_lf_meta(input_dir);

    lfm::NoGradGuard ng;
    auto run_model = [&](const LightField<T>& y) { return net.forward(y); };
    LightField<T> y_lr = extract_luma(lf);
    LightField<T> y_hr = ensemble ? lfm::geometry_ensemble<T>(run_model, y_lr) : run_model(y_lr);

    LightField<T> out_lf;
    if (lf.c() == 3) {
        // luma from the network, chroma by bicubic upscaling
        auto ycc = lfm::rgb_to_ycbcr(lf.data);
        LightField<T> cb(lf.u(), lf.v(), lf.h(), lf.w(), 1), cr(lf.u(), lf.v(), lf.h(), lf.w(), 1);
        for (int64_t i = 0; i < cb.data.size(); ++i) {
            cb.data.data()[i] = ycc.data()[i * 3 + 1];
            cr.data.data()[i] = ycc.data()[i * 3 + 2];
        }
        auto cb_hr = lfm::bicubic_resize(cb, static_cast<double>(cfg.scale));
        auto cr_hr = lfm::bicubic_resize(cr, static_cast<double>(cfg.scale));
        LightField<T> ycc_hr(lf.u(), lf.v(), y_hr.h(), y_hr.w(), 3);
        for (int64_t i = 0; i < y_hr.data.size(); ++i) {
            ycc_hr.data.data()[i * 3] = y_hr.data.data()[i];
            ycc_hr.data.data()[i * 3 + 1] = cb_hr.data.data()[i];
            ycc_hr.data.data()[i * 3 + 2] = cr_hr.data.data()[i];
        }
        out_lf = LightField<T>(lfm::ycbcr_to_rgb(ycc_hr.data));
    } else {
        for (auto& v : y_hr.data.data()) v = std::clamp(v, T(0), T(1));
        out_lf = y_hr;
    }
    lfm::write_lf_container(out_dir, out_lf, meta.bit_depth);

    if (!gt_dir.empty()) {
        auto gt = extract_luma(lfm::read_lf_container<T>(gt_dir));
        if (gt.data.shape() != y_hr.data.shape()) throw InputError("sr: ground truth extents mismatch");
        for (auto& v : y_hr.data.data()) v = std::clamp(v, T(0), T(1));
        auto m = lfm::scene_metrics(y_hr, gt);
        if (machine)
            std::cout << "psnr=" << m.psnr << " ssim=" << m.ssim << " views=" << m.views << "\n";
        else
            std::cout << "Y-PSNR " << m.psnr << " dB, Y-SSIM " << m.ssim << " (" << m.views
                      << " views averaged, then 1 scene)\n";
    }
    std::cout << "wrote " << out_dir << " (" << out_lf.u() << "x" << out_lf.v() << "x" << out_lf.h() << "x"
              << out_lf.w() << ")\n";
    return kExitOk;
}

template <typename T>
int run_asr(const std::string& model_path, const std::string& input_dir, const std::string& out_dir,
            const std::string& gt_dir, bool machine) {
    auto cfg = lfm::read_config(sidecar_config_path(model_path));
    if (cfg.variant != lfm::Variant::ASR) throw InputError("asr: model config is not an ASR model");
    lfm::LfMambaNet<T> net(cfg);
    auto params = net.params();
    lfm::apply_checkpoint(params, lfm::load_checkpoint<T>(model_path));

    auto lf = lfm::read_lf_container<T>(input_dir);
    if (lf.u() != 2 || lf.v() != 2) throw InputError("asr: input must have 2x2 angular extents");
    lfm::NoGradGuard ng;
    LightField<T> y = net.forward(extract_luma(lf));
    for (auto& v : y.data.data()) v = std::clamp(v, T(0), T(1));
    lfm::write_lf_container(out_dir, y, lfm::read_lf_meta(input_dir).bit_depth);
    if (!gt_dir.empty()) {
        auto gt = extract_luma(lfm::read_lf_container<T>(gt_dir));
        if (gt.data.shape() != y.data.shape()) throw InputError("asr: ground truth extents mismatch");
        auto m = lfm::scene_metrics(y, gt);
        if (machine)
            std::cout << "psnr=" << m.psnr << " ssim=" << m.ssim << " views=" << m.views << "\n";
        else
            std::cout << "Y-PSNR " << m.psnr << " dB, Y-SSIM " << m.ssim << "\n";
    }
    std::cout << "wrote " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"light-field SSM super-resolution toolkit"};
    app.require_subcommand(1);

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "run module invariant suites");
    std::string suite = "all";
    uint64_t verify_seed = 7;
    verify_cmd->add_option("--suite", suite, "ssm|geometry|blocks|grads|all")->default_val("all");
    verify_cmd->add_option("--seed", verify_seed, "rng seed");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "parameter/FLOP budget and forward timing");
    std::string bench_config, bench_extents = "5,5,32,32";
    int bench_scale = 0, bench_blocks = 0;
    bool machine = false, no_forward = false;
    bench_cmd->add_option("--config", bench_config, "network config file (default: paper-scale config)");
    bench_cmd->add_option("--input-extents", bench_extents, "U,V,H,W")->default_val("5,5,32,32");
    bench_cmd->add_option("--scale", bench_scale, "override scale (2 or 4)");
    bench_cmd->add_option("--blocks", bench_blocks, "override basic blocks per subspace");
    bench_cmd->add_flag("--machine", machine, "single-line key=value output");
    bench_cmd->add_flag("--no-forward", no_forward, "skip the wall-clock forward pass");

    // train
    auto* train_cmd = app.add_subcommand("train", "desk-scale training");
    std::string train_out, train_data, train_config;
    int synthetic = 0, synthetic_val = 4, train_scale = 2, epochs = -1, batch = -1, val_every = -1;
    uint64_t train_seed = 1;
    double lr0 = -1;
    bool no_augment = false;
    train_cmd->add_option("--out", train_out, "output directory")->required();
    train_cmd->add_option("--data", train_data, "directory of HR light-field containers");
    train_cmd->add_option("--synthetic", synthetic, "train on N synthetic pattern scenes instead of --data");
    train_cmd->add_option("--synthetic-val", synthetic_val, "held-out synthetic scenes");
    train_cmd->add_option("--scale", train_scale, "2 or 4")->default_val(2);
    train_cmd->add_option("--config", train_config, "network config file (default: desk-scale config)");
    train_cmd->add_option("--epochs", epochs, "override epoch count");
    train_cmd->add_option("--batch", batch, "override batch size");
    train_cmd->add_option("--lr", lr0, "override initial learning rate");
    train_cmd->add_option("--val-every", val_every, "validation/checkpoint period in epochs");
    train_cmd->add_option("--seed", train_seed, "rng seed");
    train_cmd->add_flag("--no-augment", no_augment, "disable flip/rotation augmentation");

    // sr
    auto* sr_cmd = app.add_subcommand("sr", "super-resolve a light-field container");
    std::string sr_model, sr_input, sr_out, sr_gt;
    int sr_scale = 0;
    bool sr_ensemble = false, sr_machine = false;
    sr_cmd->add_option("--model", sr_model, "model checkpoint (.ckpt with .cfg sidecar)")->required();
    sr_cmd->add_option("--input", sr_input, "input container directory")->required();
    sr_cmd->add_option("--out", sr_out, "output container directory")->required();
    sr_cmd->add_option("--scale", sr_scale, "expected scale (checked against the model)");
    sr_cmd->add_option("--gt", sr_gt, "ground-truth container for metrics");
    sr_cmd->add_flag("--ensemble", sr_ensemble, "8-fold dihedral self-ensemble");
    sr_cmd->add_flag("--machine", sr_machine, "key=value metric output");

    // asr
    auto* asr_cmd = app.add_subcommand("asr", "angular super-resolution (2x2 -> target grid)");
    std::string asr_model, asr_input, asr_out, asr_gt;
    bool asr_machine = false;
    asr_cmd->add_option("--model", asr_model, "model checkpoint")->required();
    asr_cmd->add_option("--input", asr_input, "input container directory")->required();
    asr_cmd->add_option("--out", asr_out, "output container directory")->required();
    asr_cmd->add_option("--gt", asr_gt, "ground-truth container for metrics");
    asr_cmd->add_flag("--machine", asr_machine, "key=value metric output");

    // slice
    auto* slice_cmd = app.add_subcommand("slice", "emit 2D slice images of a container");
    std::string slice_input, slice_view = "sai", slice_out;
    slice_cmd->add_option("--input", slice_input, "input container directory")->required();
    slice_cmd->add_option("--view", slice_view, "sai|macpi|epih|epiv")->default_val("sai");
    slice_cmd->add_option("--out", slice_out, "output directory")->required();

    // metrics
    auto* metrics_cmd = app.add_subcommand("metrics", "PSNR/SSIM between two containers");
    std::string metrics_a, metrics_b;
    bool metrics_machine = false;
    metrics_cmd->add_option("--a", metrics_a, "container A")->required();
    metrics_cmd->add_option("--b", metrics_b, "container B")->required();
    metrics_cmd->add_flag("--machine", metrics_machine, "key=value output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInputError;
    }

    try {
        if (verify_cmd->parsed()) {
            auto s = lfm::verify::run_suite(suite, verify_seed);
            lfm::verify::print_suite(s, std::cout);
            const bool ok = lfm::verify::all_pass(s);
            std::cout << (ok ? "all checks passed" : "FAILURES present") << " (" << s.size() << " checks)\n";
            return ok ? kExitOk : kExitVerifyFail;
        }

        if (bench_cmd->parsed()) {
            lfm::NetworkConfig cfg;
            if (!bench_config.empty()) cfg = lfm::read_config(bench_config);
            if (bench_scale) cfg.scale = bench_scale;
            if (bench_blocks) cfg.n_basic = bench_blocks;
            cfg.validate();
            const auto ext = parse_extents(bench_extents);
            lfm::LfMambaNet<float> net(cfg);
            std::mt19937_64 rng(1);
            net.init(rng);
            const int64_t params = lfm::count_params(net);
            const auto fb = lfm::count_macs(cfg, ext[0], ext[1], ext[2], ext[3]);
            const int dr = lfm::default_dt_rank(cfg.expand * cfg.c / 4);
            const int64_t grouped = 4 * lfm::SsmParams<float>::scan_param_count(cfg.expand * cfg.c / 4,
                                                                                cfg.n_state, dr);
            const int64_t full = 4 * lfm::SsmParams<float>::scan_param_count(cfg.expand * cfg.c, cfg.n_state, dr);
            const double ratio = static_cast<double>(grouped) / static_cast<double>(full);
            double forward_ms = -1;
            if (!no_forward) {
                if (ext[0] != cfg.u || ext[1] != cfg.v)
                    throw InputError("bench: extents disagree with the config angular size");
                LightField<float> lf(ext[0], ext[1], ext[2], ext[3], 1);
                lfm::fill_uniform(lf.data.data(), 0.0f, 1.0f, rng);
                lfm::NoGradGuard ng;
                const auto t0 = std::chrono::steady_clock::now();
                auto out = net.forward(lf);
                const auto t1 = std::chrono::steady_clock::now();
                forward_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
                (void)out;
            }
            const double gmac = static_cast<double>(fb.macs) / 1e9;
            if (machine) {
                std::cout << "params=" << params << " flops_g_1mac=" << gmac << " flops_g_2mac=" << 2 * gmac
                          << " scan_param_ratio=" << ratio << " forward_ms=" << forward_ms << "\n";
            } else {
                std::cout << "configuration: C=" << cfg.c << " scale=x" << cfg.scale << " blocks=" << cfg.n_basic
                          << " expand=" << cfg.expand << " N=" << cfg.n_state << "\n";
                std::cout << "input extents: " << ext[0] << "x" << ext[1] << "x" << ext[2] << "x" << ext[3]
                          << "\n";
                std::cout << "parameters: " << params << " (" << static_cast<double>(params) / 1e6 << " M)\n";
                std::cout << "analytic compute: " << gmac << " GMAC = " << gmac << " GFLOP (1 FLOP/MAC) = "
                          << 2 * gmac << " GFLOP (2 FLOP/MAC)\n";
                std::cout << "scan share: " << static_cast<double>(fb.scan_macs) / 1e9 << " GMAC\n";
                std::cout << "ESS2D/SS2D scan parameter ratio: " << ratio << "\n";
                if (forward_ms >= 0) std::cout << "forward wall-clock: " << forward_ms << " ms\n";
            }
            return kExitOk;
        }

        if (train_cmd->parsed()) {
            using T = float;  // training default precision
            if (train_data.empty() && synthetic == 0)
                throw InputError("train: provide --data DIR or --synthetic N");
            lfm::NetworkConfig cfg;
            if (!train_config.empty()) {
                cfg = lfm::read_config(train_config);
            } else {
                // desk-scale defaults
                cfg.c = 16;
                cfg.n_rounds_safl = 1;
                cfg.n_rounds_lsfl = 1;
                cfg.n_basic = 1;
                cfg.n_state = 8;
                cfg.expand = 2;
                cfg.ca_reduction = 4;
            }
            cfg.scale = train_scale;
            cfg.validate();

            std::mt19937_64 rng(train_seed);
            std::vector<lfm::LfPair<T>> train_set, val_set;
            if (synthetic > 0) {
                const int hr = cfg.scale * 16;
                train_set = lfm::make_synthetic_dataset<T>(synthetic, cfg.u, cfg.v, hr, cfg.scale, rng);
                val_set = lfm::make_synthetic_dataset<T>(synthetic_val, cfg.u, cfg.v, hr, cfg.scale, rng);
            } else {
                const int patch = cfg.scale == 2 ? 32 : 64;
                for (const auto& entry : fs::directory_iterator(train_data)) {
                    if (!entry.is_directory()) continue;
                    auto hr_full = extract_luma(lfm::read_lf_container<T>(entry.path().string()));
                    if (hr_full.u() != cfg.u || hr_full.v() != cfg.v)
                        throw InputError("train: scene " + entry.path().string() +
                                         " angular extents do not match the config");
                    for (auto& patch_lf : lfm::extract_patches(hr_full, patch, patch)) {
                        lfm::LfPair<T> p;
                        p.hr = patch_lf;
                        p.lr = lfm::bicubic_resize(patch_lf, 1.0 / cfg.scale);
                        train_set.push_back(std::move(p));
                    }
                }
                if (train_set.empty()) throw InputError("train: no usable scenes under " + train_data);
                const size_t n_val = std::max<size_t>(1, train_set.size() / 10);
                val_set.assign(train_set.end() - n_val, train_set.end());
                train_set.resize(train_set.size() - n_val);
            }

            fs::create_directories(train_out);
            lfm::TrainConfig tc;
            tc.seed = train_seed;
            if (epochs > 0) tc.total_epochs = epochs;
            if (batch > 0) tc.batch = batch;
            if (lr0 > 0) tc.lr0 = lr0;
            if (val_every > 0) tc.val_every = val_every;
            tc.augment = !no_augment;
            tc.log_path = (fs::path(train_out) / "train.log").string();
            tc.checkpoint_path = (fs::path(train_out) / "model.ckpt").string();

            lfm::LfMambaNet<T> net(cfg);
            net.init(rng);
            lfm::write_config(cfg, (fs::path(train_out) / "model.cfg").string());
            auto res = lfm::train(net, train_set, val_set, tc);
            std::cout << "trained " << res.steps << " steps over " << tc.total_epochs
                      << " epochs, final val PSNR " << res.final_val_psnr << " dB\n";
            std::cout << "checkpoint: " << tc.checkpoint_path << "\n";
            return kExitOk;
        }

        if (sr_cmd->parsed()) {
            const auto dtype = checkpoint_dtype(sr_model);
            return dtype == 0 ? run_sr<float>(sr_model, sr_input, sr_out, sr_scale, sr_ensemble, sr_gt, sr_machine)
                              : run_sr<double>(sr_model, sr_input, sr_out, sr_scale, sr_ensemble, sr_gt, sr_machine);
        }

        if (asr_cmd->parsed()) {
            const auto dtype = checkpoint_dtype(asr_model);
            return dtype == 0 ? run_asr<float>(asr_model, asr_input, asr_out, asr_gt, asr_machine)
                              : run_asr<double>(asr_model, asr_input, asr_out, asr_gt, asr_machine);
        }

        if (slice_cmd->parsed()) {
            using T = float;
            auto lf = extract_luma(lfm::read_lf_container<T>(slice_input));
            fs::create_directories(slice_out);
            const auto meta = lfm::read_lf_meta(slice_input);
            auto write_image = [&](const std::string& name, const Tensor<T>& img) {
                lfm::write_png((fs::path(slice_out) / name).string(), lfm::tensor_to_image(img, meta.bit_depth));
            };
            int written = 0;
            if (slice_view == "sai") {
                auto s = to_sai(lf.data);
                for (int u = 0; u < lf.u(); ++u)
                    for (int v = 0; v < lf.v(); ++v) {
                        Tensor<T> img({lf.h(), lf.w()},
                                      std::vector<T>(s.ptr() + static_cast<int64_t>(u * lf.v() + v) * lf.h() * lf.w(),
                                                     s.ptr() + static_cast<int64_t>(u * lf.v() + v + 1) * lf.h() * lf.w()));
                        write_image("sai_" + std::to_string(u) + "_" + std::to_string(v) + ".png", img);
                        ++written;
                    }
            } else if (slice_view == "macpi") {
                write_image("macpi.png", lfm::macpi_image(lf));
                ++written;
            } else if (slice_view == "epih") {
                auto s = lfm::to_epi_h(lf.data);
                for (int v = 0; v < lf.v(); ++v)
                    for (int w = 0; w < lf.w(); ++w) {
                        const int64_t off = static_cast<int64_t>(v * lf.w() + w) * lf.u() * lf.h();
                        Tensor<T> img({lf.u(), lf.h()},
                                      std::vector<T>(s.ptr() + off, s.ptr() + off + lf.u() * lf.h()));
                        write_image("epih_" + std::to_string(v) + "_" + std::to_string(w) + ".png", img);
                        ++written;
                    }
            } else if (slice_view == "epiv") {
                auto s = lfm::to_epi_v(lf.data);
                for (int u = 0; u < lf.u(); ++u)
                    for (int h = 0; h < lf.h(); ++h) {
                        const int64_t off = static_cast<int64_t>(u * lf.h() + h) * lf.v() * lf.w();
                        Tensor<T> img({lf.v(), lf.w()},
                                      std::vector<T>(s.ptr() + off, s.ptr() + off + lf.v() * lf.w()));
                        write_image("epiv_" + std::to_string(u) + "_" + std::to_string(h) + ".png", img);
                        ++written;
                    }
            } else {
                throw InputError("slice: unknown view '" + slice_view + "'");
            }
            std::cout << "wrote " << written << " image(s) to " << slice_out << "\n";
            return kExitOk;
        }

        if (metrics_cmd->parsed()) {
            using T = double;
            auto a = extract_luma(lfm::read_lf_container<T>(metrics_a));
            auto b = extract_luma(lfm::read_lf_container<T>(metrics_b));
            if (a.data.shape() != b.data.shape()) throw InputError("metrics: container extents differ");
            auto m = lfm::scene_metrics(a, b);
            auto rep = lfm::aggregate_scenes({m});
            if (metrics_machine)
                std::cout << "psnr=" << rep.psnr << " ssim=" << rep.ssim << " scenes=" << rep.scenes << "\n";
            else
                std::cout << "PSNR " << rep.psnr << " dB, SSIM " << rep.ssim << " (views-then-scenes over "
                          << rep.scenes << " scene)\n";
            return kExitOk;
        }
    } catch (const lfm::LfIoError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const lfm::CheckpointError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInputError;
    }
    return kExitOk;
}
