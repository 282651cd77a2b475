#pragma once

#include "mpmri/config.hpp"
#include "mpmri/estimator.hpp"
#include "mpmri/metrics.hpp"
#include "mpmri/phantom.hpp"
#include "mpmri/qspace.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mpmri {

// Position of every entry of `sparse` inside `dense`; InputError if one is missing.
std::vector<std::size_t> scheme_indices(GradientScheme const &dense, GradientScheme const &sparse);

// Mean b=0 signal over the mask.
double reference_b0(ParamTensor const &dwi, GradientScheme const &scheme, std::vector<bool> const &mask);

/// Rician noise at `level` (fraction of the masked mean b=0 signal) with the
/// spatially varying field of make_noise_field. level = 0 returns dwi.
ParamTensor add_noise(ParamTensor const &dwi, GradientScheme const &scheme, std::vector<bool> const &mask,
                      double level, std::uint64_t seed);

// Classical per-voxel fits; zero outside the mask.
// W x H x S x 4 (KFA, MK, AK, RK). Needs >= 22 entries.
ParamTensor fit_dki_maps(ParamTensor const &dwi, GradientScheme const &scheme, std::vector<bool> const &mask);
// W x H x S x 3 (OD, Vic, Viso).
ParamTensor fit_noddi_maps(ParamTensor const &dwi, GradientScheme const &scheme, std::vector<bool> const &mask);

enum Role : std::size_t
{
  kTrain = 0,
  kVal = 1,
  kTest = 2
};

struct PhantomSet
{
  Phantom phantom;
  RenderedPhantom rendered;
};

// Independent phantoms for one run seed.
struct PhantomSets
{
  std::vector<PhantomSet> train;
  PhantomSet val, test;
};

PhantomSets make_phantom_sets(Dims3 dims, std::uint64_t phantom_seed, std::uint64_t run_seed,
                              GradientScheme const &dense, std::size_t train_count = 1);

// Sparse, optionally noisy signals of one phantom; index tells training
// phantoms apart.
ParamTensor acquire_dwi(PhantomSet const &set, std::vector<std::size_t> const &indices, GradientScheme const &sparse,
                        double noise_level, std::uint64_t noise_seed, std::uint64_t run_seed, Role role,
                        std::size_t index = 0);

struct Datasets
{
  std::vector<Dataset> train;
  Dataset val, test;
};

/// Sparse (and optionally noisy) acquisitions of every phantom, with the
/// dense-scheme ground truth as targets.
Datasets acquire_datasets(PhantomSets const &sets, GradientScheme const &dense, GradientScheme const &sparse,
                          double noise_level, std::uint64_t noise_seed, std::uint64_t run_seed);

// The TrainConfig of one ablation arm.
TrainConfig arm_config(TrainConfig base, RegArm arm, GroupingMode grouping, std::size_t drop, std::uint64_t run_seed);
std::string arm_name(RegArm arm, GroupingMode grouping, std::size_t drop);

struct RunResult
{
  std::uint64_t run_seed = 0;
  std::string method;
  MetricReport report;
  std::vector<EpochLog> log;
  std::string train_config; // describe() of the arm, empty for classical fits
  bool diverged = false;
};

struct ExperimentResult
{
  std::vector<RunResult> runs;
  double acceleration = 0.0;
  bool diverged = false;
};

/// phantom -> acquire -> noise -> classical fits and every training arm ->
/// evaluation on the test phantom, for each seed in cfg.seeds. Writes
/// metrics.csv, summary.csv, logs/, the schemes and manifest.json into out
/// (nothing when out is empty).
ExperimentResult run_experiment(ExperimentConfig const &cfg, std::filesystem::path const &out,
                                std::ostream *progress = nullptr);

} // namespace mpmri
