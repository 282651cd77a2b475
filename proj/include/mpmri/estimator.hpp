#pragma once

#include "mpmri/mlp.hpp"
#include "mpmri/qspace.hpp"
#include "mpmri/tensor.hpp"
#include "mpmri/tsvd.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mpmri {

enum class LambdaMode
{
  Fixed,
  Nala
};

enum class LrSchedule
{
  Constant,
  Cosine // half-cosine from lr to 0 over all training steps
};

enum class HeadMode
{
  Joint,   // one network with all outputs
  Separate // one single-output network per channel
};

LambdaMode parse_lambda_mode(std::string_view s);
std::string_view to_string(LambdaMode m);
LrSchedule parse_lr_schedule(std::string_view s);
std::string_view to_string(LrSchedule s);
HeadMode parse_head_mode(std::string_view s);
std::string_view to_string(HeadMode m);

struct TrainConfig
{
  Dims3 patch{32, 32, 8};
  std::size_t epochs = 20;
  std::size_t batch = 1;           // patches per step
  std::size_t steps_per_epoch = 32;
  std::size_t val_patches = 4;
  double lr = 1e-3;
  LrSchedule lr_schedule = LrSchedule::Constant;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  LambdaMode lambda_mode = LambdaMode::Nala;
  double lambda0 = 0.1;
  double alpha = 5e-4;
  double beta = 0.9;
  GroupingMode grouping = GroupingMode::Merged;
  std::size_t drop = 0;
  std::uint64_t seed = 1;
  HeadMode heads = HeadMode::Joint;
  std::vector<std::size_t> hidden{150, 150, 150};
  // Per-channel divisors; computed from the training targets when empty.
  std::vector<double> channel_scales;
};

// Canonical JSON text of the configuration (sorted keys).
std::string describe(TrainConfig const &cfg);
// FNV-1a of describe(cfg), 16 hex digits.
std::string config_hash(TrainConfig const &cfg);

/// Network inputs and raw targets on a voxel grid. inputs is W x H x S x D
/// (the b>0 entries of the scheme divided by the voxel's mean b=0 signal,
/// clipped to [0, 2]); targets is W x H x S x N.
struct Dataset
{
  ParamTensor inputs;
  ParamTensor targets;
  std::vector<bool> mask;

  Dims3 dims() const { return {inputs.dims().w, inputs.dims().h, inputs.dims().s}; }
};

Dataset make_dataset(ParamTensor const &dwi, GradientScheme const &scheme, ParamTensor const &targets,
                     std::vector<bool> const &mask);

// 99th percentile of each channel over the mask; channels that are not
// positive there fall back to their largest magnitude, then to 1.
std::vector<double> percentile_scales(ParamTensor const &targets, std::vector<bool> const &mask);

/// Training unit: a spatial patch with channel-normalized targets and the
/// reference spectra of those targets for one grouping.
struct Patch
{
  ParamTensor inputs;
  ParamTensor target;
  std::vector<bool> mask;
  std::vector<SingularSpectrum> spectra;
};

Patch extract_patch(Dataset const &data, std::array<std::size_t, 3> origin, Dims3 size,
                    std::vector<double> const &scales, GroupingMode grouping);

/// ||gt - y||^2 / ||gt||^2, restricted to masked voxels when a mask
/// (Dims3 layout) is given. Throws InputError when the reference is zero.
double data_loss(ParamTensor const &y, ParamTensor const &gt, std::vector<bool> const *mask = nullptr);

struct LossParts
{
  double total = 0.0;
  double data = 0.0;
  double tdr = 0.0;
};

// data_loss + lambda * tdr_loss. lambda must be >= 0.
LossParts total_loss(ParamTensor const &y, ParamTensor const &gt, double lambda, GroupingMode grouping,
                     std::size_t drop);

struct Estimator
{
  HeadMode mode = HeadMode::Joint;
  std::vector<Mlp> heads;
  std::vector<double> channel_scales;

  std::size_t inputs() const { return heads.front().inputs(); }
  std::size_t outputs() const;
  bool all_finite() const;
};

Estimator estimator_init(std::size_t inputs, std::size_t outputs, HeadMode mode,
                         std::vector<std::size_t> const &hidden, std::uint64_t seed);

// Normalized outputs for a D x B batch of inputs.
Eigen::MatrixXd estimator_forward(Estimator const &e, Eigen::MatrixXd const &x,
                                  std::vector<MlpTape> *tapes = nullptr);

struct Backprop
{
  LossParts loss;
  std::vector<Mlp> grad; // one per head
  TdrDiagnostics diag;
  bool finite = true;
};

/// Loss over a batch of patches and its gradient with respect to every
/// network parameter. The data term pools the masked voxels of all patches;
/// the TDR term is the mean over patches, evaluated on each patch prediction
/// with background voxels held at zero. lambda = 0 skips the TDR gradient.
Backprop backprop(Estimator const &e, std::span<Patch const> batch, double lambda, GroupingMode grouping,
                  std::size_t drop, bool with_grad = true);

struct EpochLog
{
  std::size_t epoch = 0;
  double l_data_train = 0.0;
  double r_train = 0.0;
  double l_data_val = 0.0;
  double r_val = 0.0;
  double lambda = 0.0;
};

struct TrainResult
{
  Estimator model;
  std::vector<EpochLog> log;
  std::size_t rejected_steps = 0;
  bool diverged = false;
};

/// Adam on the network parameters over random training patches. Row 0 of the
/// log is the untrained network; with LambdaMode::Nala lambda is updated once
/// per epoch from R on a fixed set of validation patches, and each row records
/// the lambda in force after that epoch. Training stops early (diverged) when
/// the training loss exceeds 10x its initial value for three epochs in a row.
TrainResult train(Dataset const &train_set, Dataset const &val_set, TrainConfig const &cfg);
// Patches drawn from several training volumes, each step's volume picked at
// random. Channel scales come from the first volume.
TrainResult train(std::span<Dataset const> train_sets, Dataset const &val_set, TrainConfig const &cfg);

// Denormalized W x H x S x N maps; zero outside the mask.
ParamTensor predict(Estimator const &e, Dataset const &data);

std::string training_log_csv(std::vector<EpochLog> const &log);

// model.json plus one MPT1 tensor per weight matrix and bias vector.
void save_checkpoint(std::filesystem::path const &dir, Estimator const &e, TrainConfig const &cfg);
Estimator load_checkpoint(std::filesystem::path const &dir);

} // namespace mpmri
