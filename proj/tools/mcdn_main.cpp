// mcdn: multi-channel residual denoising of 3D MR volumes.
//
// Subcommands cover the full workflow: phantom (synthetic ground truth),
// add-noise (Rician corruption), train (noise-specific or general model),
// denoise, evaluate (PSNR/SSIM), selfcheck (built-in gradient and metric
// oracles). Exit codes: 0 success, 1 internal/check failure, 2 usage error.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mcdn/denoise.hpp"
#include "mcdn/metrics.hpp"
#include "mcdn/network.hpp"
#include "mcdn/nifti.hpp"
#include "mcdn/noise.hpp"
#include "mcdn/optim.hpp"
#include "mcdn/phantom.hpp"
#include "mcdn/rawio.hpp"
#include "mcdn/selfcheck.hpp"

namespace {

mcdn::Volume load_volume(const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".nii")
        return mcdn::read_nifti(path);
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".raw")
        return mcdn::read_raw(path);
    throw mcdn::IoError("unrecognized volume extension (expected .nii or .raw): " + path);
}

void save_volume(const mcdn::Volume& vol, const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".raw")
        mcdn::write_raw(vol, path);
    else
        mcdn::write_nifti(vol, path);
}

std::vector<std::string> list_volume_files(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file())
            continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".nii" || ext == ".raw")
            files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::array<int, 3> parse_dims(const std::string& spec) {
    std::array<int, 3> dims{};
    if (std::sscanf(spec.c_str(), "%d,%d,%d", &dims[0], &dims[1], &dims[2]) != 3)
        throw mcdn::ValueError("--dims expects X,Y,Z (e.g. 96,96,24), got: " + spec);
    return dims;
}

mcdn::Regime parse_regime(const std::string& spec) {
    if (spec == "general")
        return mcdn::Regime::general();
    const std::string prefix = "specific:";
    if (spec.rfind(prefix, 0) == 0) {
        const double level = std::stod(spec.substr(prefix.size()));
        return mcdn::Regime::specific(level);
    }
    throw mcdn::ValueError("--regime expects specific:<percent> or general, got: " + spec);
}

std::string format_psnr(double db) {
    if (std::isinf(db))
        return "inf";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", db);
    return buf;
}

int cmd_phantom(const std::string& out, const std::string& dims_spec, std::uint64_t seed) {
    const std::array<int, 3> dims = parse_dims(dims_spec);
    mcdn::Volume vol =
        mcdn::normalize(mcdn::make_phantom(dims[0], dims[1], dims[2], seed));
    save_volume(vol, out);
    std::printf("wrote phantom %s (%s)\n", out.c_str(), vol.dims_string().c_str());
    return 0;
}

int cmd_add_noise(const std::string& in, const std::string& out, double level,
                  std::uint64_t seed) {
    mcdn::Volume vol = mcdn::normalize(load_volume(in));
    const mcdn::NoiseLevel nl =
        mcdn::NoiseLevel::from_percent(level, static_cast<double>(vol.max_value()));
    mcdn::Volume noisy = mcdn::add_rician(vol, nl, seed);
    save_volume(noisy, out);
    std::printf("added %.3g%% rician noise (sigma %.4f) -> %s\n", level, nl.sigma, out.c_str());
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& regime_spec,
              const std::string& out, const std::string& loss_csv, mcdn::TrainConfig cfg,
              int width, int depth, std::size_t patches, int stride, int patch_size) {
    const std::vector<std::string> files = list_volume_files(data_dir);
    if (files.empty())
        throw mcdn::ValueError("no .nii or .raw volumes found in " + data_dir);
    const mcdn::Regime regime = parse_regime(regime_spec);

    std::vector<std::shared_ptr<const mcdn::Volume>> volumes;
    for (const std::string& f : files) {
        volumes.push_back(
            std::make_shared<const mcdn::Volume>(mcdn::normalize(load_volume(f))));
        std::printf("loaded %s (%s)\n", f.c_str(),
                    volumes.back()->dims_string().c_str());
    }

    mcdn::PatchConfig pc;
    pc.patch = patch_size;
    pc.stride = stride;
    pc.target_count = patches;
    const mcdn::PatchSet data = mcdn::build_training_set(volumes, regime, pc, cfg.seed);
    std::printf("training set: %zu patches of %dx%dx%d\n", data.size(), pc.patch, pc.patch,
                mcdn::kStackSlices);

    mcdn::Model model = mcdn::build_model(mcdn::kStackSlices, width, depth, 1, cfg.seed);
    const auto t0 = std::chrono::steady_clock::now();
    const auto history = mcdn::train(model, data, cfg, [&](const mcdn::EpochStats& e) {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("epoch %3d/%d  lr %.3g  loss %.6g  (%.0fs)\n", e.epoch + 1, cfg.epochs, e.lr,
                    e.mean_loss, secs);
        std::fflush(stdout);
    });

    mcdn::save_model(model, out);
    const std::string csv = loss_csv.empty() ? out + ".loss.csv" : loss_csv;
    mcdn::write_loss_csv(history, csv);
    std::printf("wrote model %s and loss log %s\n", out.c_str(), csv.c_str());
    return 0;
}

int cmd_denoise(const std::string& in, const std::string& model_path, const std::string& out) {
    const mcdn::Model model = mcdn::load_model(model_path);
    const mcdn::Volume noisy = load_volume(in);
    const mcdn::Volume restored = mcdn::denoise_volume(model, noisy);
    save_volume(restored, out);
    std::printf("denoised %s -> %s (%s)\n", in.c_str(), out.c_str(),
                restored.dims_string().c_str());
    return 0;
}

int cmd_evaluate(const std::string& clean_path, const std::vector<std::string>& test_paths,
                 const std::string& csv_path) {
    const mcdn::Volume clean = load_volume(clean_path);
    std::vector<std::pair<std::string, mcdn::MetricReport>> rows;
    for (const std::string& t : test_paths) {
        const mcdn::Volume test = load_volume(t);
        rows.emplace_back(t, mcdn::evaluate_pair(clean, test));
    }

    std::printf("%-40s %12s %12s\n", "volume", "psnr_db", "ssim_global");
    for (const auto& [name, r] : rows)
        std::printf("%-40s %12s %12.6f\n", name.c_str(), format_psnr(r.psnr_db).c_str(),
                    r.ssim_global);

    if (!csv_path.empty()) {
        std::ofstream csv(csv_path);
        if (!csv)
            throw mcdn::IoError("cannot write csv: " + csv_path);
        csv << "name,psnr_db,ssim_global\n";
        for (const auto& [name, r] : rows) {
            char line[256];
            std::snprintf(line, sizeof(line), "%s,%s,%.9g\n", name.c_str(),
                          format_psnr(r.psnr_db).c_str(), r.ssim_global);
            csv << line;
        }
    }
    return 0;
}

int cmd_selfcheck(bool inject_fault) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<mcdn::CheckResult> results = mcdn::run_selfcheck(inject_fault);
    bool all_ok = true;
    for (const mcdn::CheckResult& r : results) {
        std::printf("[%s] %s%s%s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                    r.detail.empty() ? "" : ": ", r.detail.c_str());
        all_ok = all_ok && r.pass;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s (%zu checks, %.1fs)\n", all_ok ? "all checks passed" : "CHECKS FAILED",
                results.size(), secs);
    return all_ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-channel residual CNN denoising for 3D MR volumes"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (default: hardware)");

    auto* phantom = app.add_subcommand("phantom", "generate a synthetic test volume");
    std::string ph_out, ph_dims = "96,96,24";
    std::uint64_t ph_seed = 0;
    phantom->add_option("--out", ph_out, "output volume (.nii or .raw)")->required();
    phantom->add_option("--dims", ph_dims, "volume extents X,Y,Z");
    phantom->add_option("--seed", ph_seed, "geometry seed");

    auto* noise = app.add_subcommand("add-noise", "corrupt a volume with Rician noise");
    std::string an_in, an_out;
    double an_level = 9.0;
    std::uint64_t an_seed = 0;
    noise->add_option("--in", an_in, "input volume")->required();
    noise->add_option("--out", an_out, "output volume")->required();
    noise->add_option("--level", an_level, "noise level in percent (0, 100]")
        ->required()
        ->check(CLI::Range(1e-6, 100.0));
    noise->add_option("--seed", an_seed, "noise seed");

    auto* train = app.add_subcommand("train", "train a denoising model on clean volumes");
    std::string tr_data, tr_regime = "general", tr_out, tr_csv;
    mcdn::TrainConfig tr_cfg;
    int tr_width = 64, tr_depth = 10, tr_stride = 20, tr_patch = 60;
    std::size_t tr_patches = 150000;
    train->add_option("--data", tr_data, "directory of clean volumes")->required();
    train->add_option("--regime", tr_regime, "specific:<percent> or general");
    train->add_option("--out", tr_out, "output model file")->required();
    train->add_option("--epochs", tr_cfg.epochs, "training epochs");
    train->add_option("--batch", tr_cfg.batch_size, "mini-batch size");
    train->add_option("--lr-start", tr_cfg.lr_start, "initial learning rate");
    train->add_option("--lr-end", tr_cfg.lr_end, "final learning rate");
    train->add_option("--width", tr_width, "channels per hidden layer");
    train->add_option("--depth", tr_depth, "total convolution layers");
    train->add_option("--seed", tr_cfg.seed, "training seed");
    train->add_option("--patches", tr_patches, "target patch count");
    train->add_option("--stride", tr_stride, "patch grid stride");
    train->add_option("--patch-size", tr_patch, "square patch edge");
    train->add_option("--loss-csv", tr_csv, "loss log path (default <out>.loss.csv)");

    auto* denoise = app.add_subcommand("denoise", "restore a noisy volume with a trained model");
    std::string dn_in, dn_model, dn_out;
    denoise->add_option("--in", dn_in, "noisy volume")->required();
    denoise->add_option("--model", dn_model, "trained model file")->required();
    denoise->add_option("--out", dn_out, "output volume")->required();

    auto* evaluate = app.add_subcommand("evaluate", "PSNR/SSIM of volumes against a reference");
    std::string ev_clean, ev_csv;
    std::vector<std::string> ev_tests;
    evaluate->add_option("--clean", ev_clean, "noise-free reference volume")->required();
    evaluate->add_option("--test", ev_tests, "volumes to score")->required()->expected(-1);
    evaluate->add_option("--csv", ev_csv, "write results as CSV");

    auto* selfcheck = app.add_subcommand("selfcheck", "run built-in gradient and metric oracles");
    bool sc_fault = false;
    selfcheck->add_flag("--inject-fault", sc_fault, "corrupt one gradient (test hook)")
        ->group(""); // hidden

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (threads > 0)
        mcdn::set_num_threads(threads);

    try {
        if (app.got_subcommand(phantom))
            return cmd_phantom(ph_out, ph_dims, ph_seed);
        if (app.got_subcommand(noise))
            return cmd_add_noise(an_in, an_out, an_level, an_seed);
        if (app.got_subcommand(train))
            return cmd_train(tr_data, tr_regime, tr_out, tr_csv, tr_cfg, tr_width, tr_depth,
                             tr_patches, tr_stride, tr_patch);
        if (app.got_subcommand(denoise))
            return cmd_denoise(dn_in, dn_model, dn_out);
        if (app.got_subcommand(evaluate))
            return cmd_evaluate(ev_clean, ev_tests, ev_csv);
        if (app.got_subcommand(selfcheck))
            return cmd_selfcheck(sc_fault);
    } catch (const mcdn::ShapeError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const mcdn::ValueError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const mcdn::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 1;
    }
    return 0;
}
