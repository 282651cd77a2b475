#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace mpmri {

struct MlpLayer
{
  Eigen::MatrixXd w; // out x in
  Eigen::VectorXd b;
};

/// Fully connected network, rectifier on every layer but the last. Batches
/// are column-major: one column per voxel.
struct Mlp
{
  std::vector<MlpLayer> layers;

  std::size_t inputs() const { return static_cast<std::size_t>(layers.front().w.cols()); }
  std::size_t outputs() const { return static_cast<std::size_t>(layers.back().w.rows()); }
  std::vector<std::size_t> sizes() const;
  std::size_t parameter_count() const;
  bool all_finite() const;
};

// He-normal weights, zero biases. sizes = {in, hidden..., out}.
Mlp mlp_init(std::vector<std::size_t> const &sizes, std::uint64_t seed);
Mlp mlp_zeros_like(Mlp const &p);

// Layer inputs recorded by the forward pass: act[0] = x, act[l] = input of layer l.
struct MlpTape
{
  std::vector<Eigen::MatrixXd> act;
};

Eigen::MatrixXd mlp_forward(Mlp const &p, Eigen::MatrixXd const &x, MlpTape *tape = nullptr);

/// Adds dL/dtheta to `grad` given dL/d(output) for the batch recorded in
/// `tape`. The rectifier's subgradient at 0 is 0.
void mlp_backward(Mlp const &p, MlpTape const &tape, Eigen::MatrixXd const &dy, Mlp &grad);

Eigen::VectorXd flatten(Mlp const &p);
void unflatten(Eigen::VectorXd const &v, Mlp &p);

struct Adam
{
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  Mlp m, v;

  void step(Mlp &p, Mlp const &g);
};

} // namespace mpmri
