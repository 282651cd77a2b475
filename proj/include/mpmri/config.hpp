#pragma once

#include "mpmri/estimator.hpp"
#include "mpmri/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace mpmri {

// Ablation arm: "none" (lambda = 0), "fixed" (lambda0 throughout) or "nala".
enum class RegArm
{
  None,
  Fixed,
  Nala
};

RegArm parse_reg_arm(std::string_view s);
std::string_view to_string(RegArm a);

/// Experiment description. train.lambda_mode, train.grouping and train.drop
/// take comma-separated lists; an experiment runs their product (the "none"
/// arm once per grouping/drop-independent seed).
struct ExperimentConfig
{
  Dims3 phantom_dims{48, 48, 12};
  std::uint64_t phantom_seed = 1;
  std::size_t train_phantoms = 4; // independent training phantoms per run seed

  std::size_t dirs_per_shell = 90;
  std::vector<double> shells{1000.0, 2000.0, 3000.0};
  std::size_t subsample_k = 6;
  std::uint64_t scheme_seed = 7;

  double noise_level = 0.0; // 0 = noise-free
  std::uint64_t noise_seed = 1;

  TrainConfig train;
  std::vector<RegArm> arms{RegArm::None, RegArm::Fixed, RegArm::Nala};
  std::vector<GroupingMode> groupings{GroupingMode::Merged};
  std::vector<std::size_t> drops{0};

  std::vector<std::string> eval_channels{kParamNames.begin(), kParamNames.end()};

  std::vector<std::uint64_t> seeds{1};
  bool classical = true;
};

/// key = value lines; '#' starts a comment. Unknown or repeated keys and
/// malformed values raise InputError as "source:line: message".
ExperimentConfig parse_config(std::istream &is, std::string const &source = "<config>");
ExperimentConfig load_config(std::filesystem::path const &path);

// Every key with its canonical value, in a fixed order.
std::vector<std::pair<std::string, std::string>> config_entries(ExperimentConfig const &cfg);
std::string config_text(ExperimentConfig const &cfg);

// Indices of eval_channels in the kParamNames order.
std::vector<std::size_t> eval_channel_indices(ExperimentConfig const &cfg);

} // namespace mpmri
