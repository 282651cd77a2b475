// mpmri: command-line front end for phantoms, acquisitions, fits, training and evaluation.

#include "mpmri/config.hpp"
#include "mpmri/error.hpp"
#include "mpmri/estimator.hpp"
#include "mpmri/experiment.hpp"
#include "mpmri/metrics.hpp"
#include "mpmri/mpt1.hpp"
#include "mpmri/noise.hpp"
#include "mpmri/phantom.hpp"
#include "mpmri/qspace.hpp"
#include "mpmri/tsvd.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <vector>

namespace fs = std::filesystem;
using namespace mpmri;

namespace {

// Exit statuses.
constexpr int kOk = 0;
constexpr int kInput = 2;
constexpr int kNumerical = 3;

ExperimentConfig config_or_default(std::string const &path)
{
  return path.empty() ? ExperimentConfig{} : load_config(path);
}

std::vector<bool> load_mask(fs::path const &path)
{
  auto const m = load_tensor(path);
  std::vector<bool> mask(m.data().size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = m.data()[i] != 0.0;
  }
  return mask;
}

void save_mask(fs::path const &path, Dims3 d, std::vector<bool> const &mask)
{
  ParamTensor t(d.with_channels(1));
  for (std::size_t i = 0; i < mask.size(); ++i) {
    t.data()[i] = mask[i] ? 1.0 : 0.0;
  }
  save_tensor(path, t);
}

void save_scheme(fs::path const &path, GradientScheme const &s)
{
  std::ostringstream os;
  write_scheme(os, s);
  write_text_atomic(path, os.str());
}

// An acquisition directory: scheme.txt, dwi.mpt, mask.mpt and gt.mpt.
struct Acquisition
{
  GradientScheme scheme;
  ParamTensor dwi;
  std::vector<bool> mask;
  ParamTensor gt;
};

Acquisition load_acquisition(fs::path const &dir)
{
  Acquisition a;
  a.scheme = read_scheme_file((dir / "scheme.txt").string());
  a.dwi = load_tensor(dir / "dwi.mpt");
  a.mask = load_mask(dir / "mask.mpt");
  if (fs::exists(dir / "gt.mpt")) {
    a.gt = load_tensor(dir / "gt.mpt");
  }
  auto const &d = a.dwi.dims();
  if (d.n != a.scheme.size()) {
    throw InputError((dir / "dwi.mpt").string() + ": " + std::to_string(d.n) + " volumes but the scheme has " +
                     std::to_string(a.scheme.size()) + " entries");
  }
  if (a.mask.size() != d.w * d.h * d.s) {
    throw InputError((dir / "mask.mpt").string() + ": size does not match dwi.mpt");
  }
  return a;
}

void save_acquisition(fs::path const &dir, Acquisition const &a)
{
  fs::create_directories(dir);
  auto const &d = a.dwi.dims();
  save_scheme(dir / "scheme.txt", a.scheme);
  save_tensor(dir / "dwi.mpt", a.dwi);
  save_mask(dir / "mask.mpt", {d.w, d.h, d.s}, a.mask);
  if (a.gt.data().size() > 0) {
    save_tensor(dir / "gt.mpt", a.gt);
  }
}

Dataset to_dataset(Acquisition const &a)
{
  if (a.gt.data().empty()) {
    throw InputError("acquisition has no gt.mpt");
  }
  return make_dataset(a.dwi, a.scheme, a.gt, a.mask);
}

int cmd_phantom_gen(ExperimentConfig const &cfg, fs::path const &out)
{
  auto const dense = make_dense_scheme(cfg.dirs_per_shell, cfg.shells, cfg.scheme_seed);
  auto p = gen_phantom(cfg.phantom_dims, cfg.phantom_seed);
  auto const r = render_ground_truth(p, dense);
  p.gt_params = r.gt_params;
  save_phantom(out, p);
  save_scheme(out / "scheme_dense.txt", dense);
  save_tensor(out / "dwi_dense.mpt", r.signals);
  save_mask(out / "mask.mpt", p.dims, p.mask);
  std::cout << "voxels " << p.dims.size() << "\nmask " << p.mask_count() << "\nentries " << dense.size() << "\n";
  return kOk;
}

int cmd_acquire(ExperimentConfig const &cfg, fs::path const &in, fs::path const &out)
{
  auto const dense = read_scheme_file((in / "scheme_dense.txt").string());
  auto const sparse = subsample(dense, cfg.subsample_k, cfg.scheme_seed);
  Acquisition a;
  a.scheme = sparse;
  a.dwi = load_tensor(in / "dwi_dense.mpt").channels(scheme_indices(dense, sparse));
  a.mask = load_mask(in / "mask.mpt");
  a.gt = load_tensor(in / "gt.mpt");
  save_acquisition(out, a);
  auto const acc = acceleration_factor(dense, sparse);
  nlohmann::json meta{{"dense_entries", dense.size()},
                      {"directions", sparse.weighted_count()},
                      {"acceleration", acc},
                      {"subsample_k", cfg.subsample_k},
                      {"seed", cfg.scheme_seed}};
  write_text_atomic(out / "acquisition.json", meta.dump(2) + "\n");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", acc);
  std::cout << "directions " << sparse.weighted_count() << "\nacceleration " << buf << "\n";
  return kOk;
}

int cmd_noise_add(ExperimentConfig const &cfg, fs::path const &in, fs::path const &out)
{
  auto a = load_acquisition(in);
  auto const &d = a.dwi.dims();
  a.dwi = add_noise(a.dwi, a.scheme, a.mask, cfg.noise_level, cfg.noise_seed);
  save_acquisition(out, a);
  if (cfg.noise_level > 0.0) {
    auto const field = make_noise_field({d.w, d.h, d.s}, cfg.noise_level, cfg.noise_seed);
    ParamTensor sigma(Dims4{d.w, d.h, d.s, 1});
    std::copy(field.sigma.begin(), field.sigma.end(), sigma.data().begin());
    save_tensor(out / "sigma.mpt", sigma);
  }
  std::cout << "noise " << format_number(cfg.noise_level) << "\n";
  return kOk;
}

int cmd_fit(bool dki, fs::path const &in, fs::path const &out)
{
  auto const a = load_acquisition(in);
  auto const maps = dki ? fit_dki_maps(a.dwi, a.scheme, a.mask) : fit_noddi_maps(a.dwi, a.scheme, a.mask);
  fs::create_directories(out);
  save_tensor(out / (dki ? "dki.mpt" : "noddi.mpt"), maps);
  return kOk;
}

int cmd_tsvd(fs::path const &in, std::size_t drop, fs::path const &out, fs::path const &recon)
{
  auto const t = load_tensor(in);
  auto const f = tsvd(t);
  auto const s = truncate_spectrum(f.spectrum(), drop);
  write_mpt1(out, Mpt1{{s.k, s.s, s.n}, s.values});
  if (!recon.empty()) {
    save_tensor(recon, reconstruct(truncate_factors(f, drop)));
  }
  return kOk;
}

TrainConfig single_arm(ExperimentConfig const &cfg)
{
  if (cfg.arms.size() != 1 || cfg.groupings.size() != 1 || cfg.drops.size() != 1) {
    throw InputError("train: train.lambda_mode, train.grouping and train.drop must each name one value");
  }
  auto tc = arm_config(cfg.train, cfg.arms[0], cfg.groupings[0], cfg.drops[0], 0);
  tc.seed = cfg.train.seed;
  return tc;
}

int cmd_train(ExperimentConfig const &cfg, std::vector<fs::path> const &train_dirs, fs::path const &val_dir,
              fs::path const &out)
{
  auto const tc = single_arm(cfg);
  std::vector<Dataset> sets;
  for (auto const &dir : train_dirs) {
    sets.push_back(to_dataset(load_acquisition(dir)));
  }
  auto const res = train(std::span<Dataset const>(sets), to_dataset(load_acquisition(val_dir)), tc);
  fs::create_directories(out);
  write_text_atomic(out / "train_log.csv", training_log_csv(res.log));
  if (res.diverged) {
    std::cerr << "mpmri: training diverged at epoch " << res.log.back().epoch << "\n";
    return kNumerical;
  }
  save_checkpoint(out, res.model, tc);
  auto const &last = res.log.back();
  std::cout << "epochs " << last.epoch << "\nL_data_val " << format_number(last.l_data_val) << "\nlambda "
            << format_number(last.lambda) << "\n";
  return kOk;
}

int cmd_eval(ExperimentConfig const &cfg, fs::path const &in, fs::path const &model, fs::path const &pred_path,
             fs::path const &out)
{
  auto const a = load_acquisition(in);
  if (a.gt.data().empty()) {
    throw InputError("eval: " + in.string() + " has no gt.mpt");
  }
  ParamTensor pred;
  if (!model.empty()) {
    pred = predict(load_checkpoint(model), to_dataset(a));
  } else {
    pred = load_tensor(pred_path);
  }
  auto const &pd = pred.dims();
  auto const &gd = a.gt.dims();
  if (pd.w != gd.w || pd.h != gd.h || pd.s != gd.s) {
    throw InputError("eval: prediction and ground truth differ in spatial size");
  }
  // A 4-channel prediction holds the DKI maps, a 3-channel one the NODDI maps.
  std::size_t first = 0;
  if (pd.n == 4) {
    first = 0;
  } else if (pd.n == 3) {
    first = 4;
  } else if (pd.n != kParamCount) {
    throw InputError("eval: prediction must have 3, 4 or 7 channels, got " + std::to_string(pd.n));
  }
  std::vector<std::size_t> gt_ch, pred_ch;
  std::vector<std::string> names;
  for (auto c : eval_channel_indices(cfg)) {
    if (c >= first && c < first + pd.n) {
      gt_ch.push_back(c);
      pred_ch.push_back(c - first);
      names.emplace_back(kParamNames[c]);
    }
  }
  if (names.empty()) {
    throw InputError("eval: no configured channel is present in the prediction");
  }
  auto const report = evaluate_maps(pred.channels(pred_ch), a.gt.channels(gt_ch), a.mask, names);
  fs::create_directories(out);
  if (!model.empty()) {
    save_tensor(out / "pred.mpt", pred);
  }
  write_text_atomic(out / "metrics.json", report_json(report));
  write_text_atomic(out / "metrics.csv", csv_header() + csv_rows(report, model.empty() ? "maps" : "model",
                                                                 std::to_string(a.scheme.weighted_count()), "-"));
  std::cout << "ALL psnr " << format_number(report.all.psnr) << " ssim " << format_number(report.all.ssim)
            << " nrmse " << format_number(report.all.nrmse) << "\n";
  return kOk;
}

int cmd_experiment(ExperimentConfig const &cfg, fs::path const &out, bool quiet)
{
  auto const res = run_experiment(cfg, out, quiet ? nullptr : &std::cerr);
  std::cout << "runs " << res.runs.size() << "\nacceleration " << format_number(res.acceleration) << "\n";
  if (res.diverged) {
    std::cerr << "mpmri: at least one training run diverged (see manifest.json)\n";
    return kNumerical;
  }
  return kOk;
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Multi-parameter diffusion MRI estimation with tensor-decomposition regularization"};
  app.require_subcommand(1);

  std::string config, out, in, model, pred, val_dir, recon;
  std::vector<fs::path> train_dirs;
  std::size_t drop = 0;
  bool quiet = false;

  auto with_config = [&](CLI::App *c) {
    c->add_option("--config", config, "key = value configuration file (defaults when omitted)")->check(CLI::ExistingFile);
    c->add_option("--out", out, "output path")->required();
  };

  auto *phantom = app.add_subcommand("phantom", "phantom tools");
  phantom->require_subcommand(1);
  auto *phantom_gen = phantom->add_subcommand("gen", "generate and render a phantom");
  with_config(phantom_gen);

  auto *acquire = app.add_subcommand("acquire", "subsample a rendered phantom");
  with_config(acquire);
  acquire->add_option("--in", in, "phantom directory")->required()->check(CLI::ExistingDirectory);

  auto *noise = app.add_subcommand("noise", "noise tools");
  noise->require_subcommand(1);
  auto *noise_add = noise->add_subcommand("add", "add Rician noise to an acquisition");
  with_config(noise_add);
  noise_add->add_option("--in", in, "acquisition directory")->required()->check(CLI::ExistingDirectory);

  auto *fit = app.add_subcommand("fit", "classical model fits");
  fit->require_subcommand(1);
  auto *fit_dki = fit->add_subcommand("dki", "voxelwise WLLS kurtosis fit");
  auto *fit_noddi = fit->add_subcommand("noddi", "voxelwise NODDI grid fit");
  for (auto *c : {fit_dki, fit_noddi}) {
    with_config(c);
    c->add_option("--in", in, "acquisition directory")->required()->check(CLI::ExistingDirectory);
  }

  auto *tsvd_cmd = app.add_subcommand("tsvd", "truncated t-SVD spectrum of an MPT1 tensor");
  with_config(tsvd_cmd);
  tsvd_cmd->add_option("--in", in, "order-4 tensor")->required()->check(CLI::ExistingFile);
  tsvd_cmd->add_option("--drop", drop, "number of trailing singular values to discard");
  tsvd_cmd->add_option("--reconstruct", recon, "also write the truncated reconstruction here");

  auto *train_cmd = app.add_subcommand("train", "train the estimator");
  with_config(train_cmd);
  train_cmd->add_option("--train", train_dirs, "training acquisition (repeatable)")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--val", val_dir, "validation acquisition")->required()->check(CLI::ExistingDirectory);

  auto *eval = app.add_subcommand("eval", "score maps against ground truth");
  with_config(eval);
  eval->add_option("--in", in, "acquisition directory with gt.mpt")->required()->check(CLI::ExistingDirectory);
  auto *model_opt = eval->add_option("--model", model, "checkpoint directory")->check(CLI::ExistingDirectory);
  auto *pred_opt = eval->add_option("--pred", pred, "maps in MPT1 (3, 4 or 7 channels)")->check(CLI::ExistingFile);
  model_opt->excludes(pred_opt);
  eval->require_option(1, 0);

  auto *experiment = app.add_subcommand("experiment", "experiment runner");
  experiment->require_subcommand(1);
  auto *experiment_run = experiment->add_subcommand("run", "run the full ablation grid");
  with_config(experiment_run);
  experiment_run->add_flag("--quiet", quiet, "no progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (CLI::CallForHelp const &e) {
    return app.exit(e);
  } catch (CLI::ParseError const &e) {
    app.exit(e);
    return kInput;
  }

  try {
    auto const cfg = config_or_default(config);
    if (*phantom_gen) {
      return cmd_phantom_gen(cfg, out);
    }
    if (*acquire) {
      return cmd_acquire(cfg, in, out);
    }
    if (*noise_add) {
      return cmd_noise_add(cfg, in, out);
    }
    if (*fit_dki || *fit_noddi) {
      return cmd_fit(static_cast<bool>(*fit_dki), in, out);
    }
    if (*tsvd_cmd) {
      return cmd_tsvd(in, drop, out, recon);
    }
    if (*train_cmd) {
      return cmd_train(cfg, train_dirs, val_dir, out);
    }
    if (*eval) {
      if (model.empty() && pred.empty()) {
        throw InputError("eval: give --model or --pred");
      }
      return cmd_eval(cfg, in, model, pred, out);
    }
    if (*experiment_run) {
      return cmd_experiment(cfg, out, quiet);
    }
  } catch (InputError const &e) {
    std::cerr << "mpmri: " << e.what() << "\n";
    return kInput;
  } catch (fs::filesystem_error const &e) {
    std::cerr << "mpmri: " << e.what() << "\n";
    return kInput;
  } catch (NumericalError const &e) {
    std::cerr << "mpmri: numerical failure: " << e.what() << "\n";
    return kNumerical;
  }
  return kInput;
}
