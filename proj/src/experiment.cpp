#include "mpmri/experiment.hpp"

#include "mpmri/dki.hpp"
#include "mpmri/error.hpp"
#include "mpmri/mpt1.hpp"
#include "mpmri/noddi.hpp"
#include "mpmri/noise.hpp"
#include "mpmri/parallel.hpp"
#include "mpmri/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <ostream>
#include <sstream>

namespace mpmri {

namespace {

constexpr char const *kManifestVersion = "1";

std::span<double const> voxel_signals(ParamTensor const &dwi, std::size_t i)
{
  auto const n = dwi.dims().n;
  return std::span<double const>(dwi.data()).subspan(i * n, n);
}

std::string sampling_label(GradientScheme const &s)
{
  return std::to_string(s.weighted_count());
}

} // namespace

std::vector<std::size_t> scheme_indices(GradientScheme const &dense, GradientScheme const &sparse)
{
  std::vector<std::size_t> idx;
  idx.reserve(sparse.size());
  for (std::size_t j = 0; j < sparse.size(); ++j) {
    auto const &e = sparse.entries[j];
    auto const it = std::find_if(dense.entries.begin(), dense.entries.end(),
                                 [&](GradientEntry const &d) { return d.b == e.b && d.dir == e.dir; });
    if (it == dense.entries.end()) {
      throw InputError("scheme entry " + std::to_string(j) + " is not part of the dense scheme");
    }
    idx.push_back(static_cast<std::size_t>(it - dense.entries.begin()));
  }
  return idx;
}

double reference_b0(ParamTensor const &dwi, GradientScheme const &scheme, std::vector<bool> const &mask)
{
  auto const b0 = scheme.b0_indices();
  if (b0.empty()) {
    throw InputError("scheme has no b=0 entry");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) {
      continue;
    }
    auto const sig = voxel_signals(dwi, i);
    for (auto j : b0) {
      sum += sig[j];
    }
    count += b0.size();
  }
  if (count == 0 || !(sum > 0.0)) {
    throw InputError("no positive b=0 signal inside the mask");
  }
  return sum / static_cast<double>(count);
}

ParamTensor add_noise(ParamTensor const &dwi, GradientScheme const &scheme, std::vector<bool> const &mask,
                      double level, std::uint64_t seed)
{
  if (level == 0.0) {
    return dwi;
  }
  auto const &d = dwi.dims();
  auto const field = make_noise_field({d.w, d.h, d.s}, level, seed);
  return add_rician(dwi, field, reference_b0(dwi, scheme, mask), hash_key(seed, 1));
}

ParamTensor fit_dki_maps(ParamTensor const &dwi, GradientScheme const &scheme, std::vector<bool> const &mask)
{
  auto const &d = dwi.dims();
  if (d.n != scheme.size() || mask.size() != d.w * d.h * d.s) {
    throw InputError("fit_dki_maps: signals, scheme and mask disagree in size");
  }
  DkiFitter const fitter(scheme);
  ParamTensor out({d.w, d.h, d.s, 4});
  parallel_for(mask.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      if (!mask[i]) {
        continue;
      }
      // A failed voxel (non-positive trace under noise, non-finite metric)
      // scores as zero rather than aborting the map.
      auto const v = fitter.fit(voxel_signals(dwi, i)).voxel;
      if (!(v.d.trace() > 0.0)) {
        continue;
      }
      auto const m = dki_metrics(v);
      double const vals[4] = {m.kfa, m.mk, m.ak, m.rk};
      for (std::size_t c = 0; c < 4; ++c) {
        out.data()[i * 4 + c] = std::isfinite(vals[c]) ? vals[c] : 0.0;
      }
    }
  });
  return out;
}

ParamTensor fit_noddi_maps(ParamTensor const &dwi, GradientScheme const &scheme, std::vector<bool> const &mask)
{
  auto const &d = dwi.dims();
  if (d.n != scheme.size() || mask.size() != d.w * d.h * d.s) {
    throw InputError("fit_noddi_maps: signals, scheme and mask disagree in size");
  }
  NoddiFitter const fitter(scheme);
  ParamTensor out({d.w, d.h, d.s, 3});
  parallel_for(mask.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      if (!mask[i]) {
        continue;
      }
      auto const m = noddi_metrics(fitter.fit(voxel_signals(dwi, i)));
      out.data()[i * 3 + 0] = m.od;
      out.data()[i * 3 + 1] = m.vic;
      out.data()[i * 3 + 2] = m.viso;
    }
  });
  return out;
}

PhantomSets make_phantom_sets(Dims3 dims, std::uint64_t phantom_seed, std::uint64_t run_seed,
                              GradientScheme const &dense, std::size_t train_count)
{
  if (train_count == 0) {
    throw InputError("make_phantom_sets: need at least one training phantom");
  }
  auto make = [&](std::uint64_t key) {
    PhantomSet set;
    set.phantom = gen_phantom(dims, key);
    set.rendered = render_ground_truth(set.phantom, dense);
    return set;
  };
  PhantomSets sets;
  for (std::size_t j = 0; j < train_count; ++j) {
    sets.train.push_back(make(j == 0 ? hash_key(phantom_seed, run_seed, kTrain)
                                     : hash_key(phantom_seed, run_seed, kTrain, j)));
  }
  sets.val = make(hash_key(phantom_seed, run_seed, kVal));
  sets.test = make(hash_key(phantom_seed, run_seed, kTest));
  return sets;
}

ParamTensor acquire_dwi(PhantomSet const &set, std::vector<std::size_t> const &indices, GradientScheme const &sparse,
                        double noise_level, std::uint64_t noise_seed, std::uint64_t run_seed, Role role,
                        std::size_t index)
{
  auto const dwi = set.rendered.signals.channels(indices);
  auto const key = index == 0 ? hash_key(noise_seed, run_seed, role) : hash_key(noise_seed, run_seed, role, index);
  return add_noise(dwi, sparse, set.phantom.mask, noise_level, key);
}

Datasets acquire_datasets(PhantomSets const &sets, GradientScheme const &dense, GradientScheme const &sparse,
                          double noise_level, std::uint64_t noise_seed, std::uint64_t run_seed)
{
  auto const idx = scheme_indices(dense, sparse);
  auto one = [&](PhantomSet const &set, Role role, std::size_t index) {
    auto const dwi = acquire_dwi(set, idx, sparse, noise_level, noise_seed, run_seed, role, index);
    return make_dataset(dwi, sparse, set.rendered.gt_params, set.phantom.mask);
  };
  Datasets out;
  for (std::size_t j = 0; j < sets.train.size(); ++j) {
    out.train.push_back(one(sets.train[j], kTrain, j));
  }
  out.val = one(sets.val, kVal, 0);
  out.test = one(sets.test, kTest, 0);
  return out;
}

TrainConfig arm_config(TrainConfig base, RegArm arm, GroupingMode grouping, std::size_t drop, std::uint64_t run_seed)
{
  base.grouping = grouping;
  base.drop = drop;
  base.seed = hash_key(base.seed, run_seed);
  switch (arm) {
  case RegArm::None:
    base.lambda_mode = LambdaMode::Fixed;
    base.lambda0 = 0.0;
    break;
  case RegArm::Fixed:
    base.lambda_mode = LambdaMode::Fixed;
    break;
  case RegArm::Nala:
    base.lambda_mode = LambdaMode::Nala;
    break;
  }
  return base;
}

std::string arm_name(RegArm arm, GroupingMode grouping, std::size_t drop)
{
  if (arm == RegArm::None) {
    return "none";
  }
  return std::string(to_string(arm)) + "-" + std::string(to_string(grouping)) + "-d" + std::to_string(drop);
}

ExperimentResult run_experiment(ExperimentConfig const &cfg, std::filesystem::path const &out, std::ostream *progress)
{
  auto note = [&](std::string const &msg) {
    if (progress) {
      *progress << msg << std::endl;
    }
  };

  auto const dense = make_dense_scheme(cfg.dirs_per_shell, cfg.shells, cfg.scheme_seed);
  auto const sparse = subsample(dense, cfg.subsample_k, cfg.scheme_seed);
  auto const idx = scheme_indices(dense, sparse);
  auto const channels = eval_channel_indices(cfg);
  auto const noise = format_number(cfg.noise_level);
  auto const sampling = sampling_label(sparse);

  ExperimentResult result;
  result.acceleration = acceleration_factor(dense, sparse);

  // Arms in a fixed order, "none" only once.
  std::vector<std::tuple<RegArm, GroupingMode, std::size_t>> arms;
  for (auto arm : cfg.arms) {
    if (arm == RegArm::None) {
      if (std::none_of(arms.begin(), arms.end(), [](auto const &a) { return std::get<0>(a) == RegArm::None; })) {
        arms.emplace_back(arm, cfg.groupings.front(), 0);
      }
      continue;
    }
    for (auto g : cfg.groupings) {
      for (auto d : cfg.drops) {
        arms.emplace_back(arm, g, d);
      }
    }
  }

  std::vector<std::string> eval_names = cfg.eval_channels;
  for (auto seed : cfg.seeds) {
    note("seed " + std::to_string(seed) + ": rendering phantoms");
    auto const sets = make_phantom_sets(cfg.phantom_dims, cfg.phantom_seed, seed, dense, cfg.train_phantoms);
    auto const data = acquire_datasets(sets, dense, sparse, cfg.noise_level, cfg.noise_seed, seed);
    auto const &test = sets.test;
    auto const test_dwi = acquire_dwi(test, idx, sparse, cfg.noise_level, cfg.noise_seed, seed, kTest);
    auto const gt = test.rendered.gt_params.channels(channels);

    if (cfg.classical) {
      note("seed " + std::to_string(seed) + ": classical fits");
      ParamTensor maps(test.rendered.gt_params.dims());
      std::vector<std::size_t> have;
      if (sparse.size() >= 22) {
        std::array<std::size_t, 4> const dki_ch{0, 1, 2, 3};
        maps.set_channels(dki_ch, fit_dki_maps(test_dwi, sparse, test.phantom.mask));
        have.insert(have.end(), dki_ch.begin(), dki_ch.end());
      }
      std::array<std::size_t, 3> const noddi_ch{4, 5, 6};
      maps.set_channels(noddi_ch, fit_noddi_maps(test_dwi, sparse, test.phantom.mask));
      have.insert(have.end(), noddi_ch.begin(), noddi_ch.end());

      std::vector<std::size_t> scored;
      std::vector<std::string> names;
      for (std::size_t k = 0; k < channels.size(); ++k) {
        if (std::find(have.begin(), have.end(), channels[k]) != have.end()) {
          scored.push_back(channels[k]);
          names.push_back(eval_names[k]);
        }
      }
      if (!scored.empty()) {
        RunResult run;
        run.run_seed = seed;
        run.method = "classical";
        run.report = evaluate_maps(maps.channels(scored), test.rendered.gt_params.channels(scored),
                                   test.phantom.mask, names);
        result.runs.push_back(std::move(run));
      }
    }

    for (auto const &[arm, grouping, drop] : arms) {
      RunResult run;
      run.run_seed = seed;
      run.method = arm_name(arm, grouping, drop);
      note("seed " + std::to_string(seed) + ": training " + run.method);
      auto const tc = arm_config(cfg.train, arm, grouping, drop, seed);
      auto trained = train(data.train, data.val, tc);
      run.train_config = describe(tc);
      run.log = std::move(trained.log);
      run.diverged = trained.diverged;
      result.diverged = result.diverged || trained.diverged;
      auto const pred = predict(trained.model, data.test);
      run.report = evaluate_maps(pred.channels(channels), gt, test.phantom.mask, eval_names);
      result.runs.push_back(std::move(run));
    }
  }

  if (out.empty()) {
    return result;
  }

  std::filesystem::create_directories(out / "logs");
  {
    std::ostringstream s;
    write_scheme(s, dense);
    write_text_atomic(out / "scheme_dense.txt", s.str());
    s.str("");
    write_scheme(s, sparse);
    write_text_atomic(out / "scheme.txt", s.str());
  }

  std::string csv = "seed," + csv_header();
  std::map<std::string, std::vector<RunResult const *>> by_method;
  std::vector<std::string> order;
  for (auto const &run : result.runs) {
    std::istringstream rows(csv_rows(run.report, run.method, sampling, noise));
    for (std::string line; std::getline(rows, line);) {
      csv += std::to_string(run.run_seed) + "," + line + "\n";
    }
    if (!run.log.empty()) {
      write_text_atomic(out / "logs" / (run.method + "_seed" + std::to_string(run.run_seed) + ".csv"),
                        training_log_csv(run.log));
    }
    if (by_method.find(run.method) == by_method.end()) {
      order.push_back(run.method);
    }
    by_method[run.method].push_back(&run);
  }
  write_text_atomic(out / "metrics.csv", csv);

  // Seed means of the ALL row, with a paired t-test against the lambda = 0 arm.
  nlohmann::json summary = nlohmann::json::array();
  std::string sum_csv = "method,seeds,psnr,ssim,nrmse,p_vs_none\n";
  auto all_psnr = [](std::vector<RunResult const *> const &v) {
    std::vector<double> x;
    for (auto const *r : v) {
      x.push_back(r->report.all.psnr);
    }
    return x;
  };
  for (auto const &m : order) {
    auto const &runs = by_method[m];
    double p = 0.0, s = 0.0, e = 0.0;
    for (auto const *r : runs) {
      p += r->report.all.psnr;
      s += r->report.all.ssim;
      e += r->report.all.nrmse;
    }
    auto const n = static_cast<double>(runs.size());
    std::string pv;
    nlohmann::json row{{"method", m}, {"seeds", runs.size()}, {"psnr", p / n}, {"ssim", s / n}, {"nrmse", e / n}};
    auto const base = by_method.find("none");
    if (m != "none" && base != by_method.end() && base->second.size() == runs.size() && runs.size() >= 2) {
      auto const a = all_psnr(runs);
      auto const b = all_psnr(base->second);
      auto const t = paired_t_test(a, b);
      pv = format_number(t.p);
      row["p_vs_none"] = t.p;
      row["mean_diff_vs_none"] = t.mean_diff;
    }
    sum_csv += m + "," + std::to_string(runs.size()) + "," + format_number(p / n) + "," + format_number(s / n) + "," +
               format_number(e / n) + "," + pv + "\n";
    summary.push_back(row);
  }
  write_text_atomic(out / "summary.csv", sum_csv);

  nlohmann::json manifest;
  manifest["manifest_version"] = kManifestVersion;
  manifest["formats"] = {{"tensor", "MPT1 v1"}, {"scheme", "text gx gy gz b"}, {"metrics", "csv"}};
  for (auto const &[k, v] : config_entries(cfg)) {
    manifest["config"][k] = v;
  }
  manifest["seeds"] = cfg.seeds;
  manifest["scheme"] = {{"dense_entries", dense.size()},
                        {"sparse_entries", sparse.size()},
                        {"acceleration", result.acceleration}};
  nlohmann::json runs = nlohmann::json::array();
  for (auto const &run : result.runs) {
    nlohmann::json r{{"seed", run.run_seed}, {"method", run.method}, {"diverged", run.diverged}};
    if (!run.train_config.empty()) {
      r["train"] = nlohmann::json::parse(run.train_config);
      r["log"] = "logs/" + run.method + "_seed" + std::to_string(run.run_seed) + ".csv";
      r["final_lambda"] = run.log.empty() ? 0.0 : run.log.back().lambda;
    }
    r["metrics"] = nlohmann::json::parse(report_json(run.report));
    runs.push_back(r);
  }
  manifest["runs"] = runs;
  manifest["summary"] = summary;
  manifest["diverged"] = result.diverged;
  write_text_atomic(out / "manifest.json", manifest.dump(2) + "\n");
  return result;
}

} // namespace mpmri
