#include "mpmri/mlp.hpp"

#include "mpmri/error.hpp"
#include "mpmri/random.hpp"

#include <cmath>

namespace mpmri {

std::vector<std::size_t> Mlp::sizes() const
{
  std::vector<std::size_t> s{inputs()};
  for (auto const &l : layers) {
    s.push_back(static_cast<std::size_t>(l.w.rows()));
  }
  return s;
}

std::size_t Mlp::parameter_count() const
{
  std::size_t n = 0;
  for (auto const &l : layers) {
    n += static_cast<std::size_t>(l.w.size() + l.b.size());
  }
  return n;
}

bool Mlp::all_finite() const
{
  for (auto const &l : layers) {
    if (!l.w.allFinite() || !l.b.allFinite()) {
      return false;
    }
  }
  return true;
}

Mlp mlp_init(std::vector<std::size_t> const &sizes, std::uint64_t seed)
{
  if (sizes.size() < 2) {
    throw InputError("mlp_init: need at least input and output sizes");
  }
  Mlp p;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    if (sizes[l] == 0 || sizes[l + 1] == 0) {
      throw InputError("mlp_init: layer sizes must be positive");
    }
    auto const in = static_cast<Eigen::Index>(sizes[l]);
    auto const out = static_cast<Eigen::Index>(sizes[l + 1]);
    Rng rng(seed, l);
    double const sd = std::sqrt(2.0 / static_cast<double>(in));
    MlpLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (Eigen::Index i = 0; i < out; ++i) {
      for (Eigen::Index j = 0; j < in; ++j) {
        layer.w(i, j) = sd * rng.normal();
      }
    }
    p.layers.push_back(std::move(layer));
  }
  return p;
}

Mlp mlp_zeros_like(Mlp const &p)
{
  Mlp z;
  for (auto const &l : p.layers) {
    z.layers.push_back({Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()), Eigen::VectorXd::Zero(l.b.size())});
  }
  return z;
}

Eigen::MatrixXd mlp_forward(Mlp const &p, Eigen::MatrixXd const &x, MlpTape *tape)
{
  if (static_cast<std::size_t>(x.rows()) != p.inputs()) {
    throw InputError("mlp_forward: expected " + std::to_string(p.inputs()) + " inputs, got " +
                     std::to_string(x.rows()));
  }
  if (tape) {
    tape->act.clear();
    tape->act.push_back(x);
  }
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto const &layer = p.layers[l];
    Eigen::MatrixXd z = layer.w * a;
    z.colwise() += layer.b;
    if (l + 1 < p.layers.size()) {
      z = z.cwiseMax(0.0);
      if (tape) {
        tape->act.push_back(z);
      }
    }
    a = std::move(z);
  }
  return a;
}

void mlp_backward(Mlp const &p, MlpTape const &tape, Eigen::MatrixXd const &dy, Mlp &grad)
{
  Eigen::MatrixXd delta = dy;
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    auto const &in = tape.act[l];
    grad.layers[l].w.noalias() += delta * in.transpose();
    grad.layers[l].b += delta.rowwise().sum();
    if (l == 0) {
      break;
    }
    Eigen::MatrixXd back = p.layers[l].w.transpose() * delta;
    // in = relu(z) of the previous layer; in > 0 exactly where z > 0.
    delta = (in.array() > 0.0).select(back, 0.0);
  }
}

Eigen::VectorXd flatten(Mlp const &p)
{
  Eigen::VectorXd v(static_cast<Eigen::Index>(p.parameter_count()));
  Eigen::Index k = 0;
  for (auto const &l : p.layers) {
    v.segment(k, l.w.size()) = Eigen::Map<Eigen::VectorXd const>(l.w.data(), l.w.size());
    k += l.w.size();
    v.segment(k, l.b.size()) = l.b;
    k += l.b.size();
  }
  return v;
}

void unflatten(Eigen::VectorXd const &v, Mlp &p)
{
  if (static_cast<std::size_t>(v.size()) != p.parameter_count()) {
    throw InputError("unflatten: parameter count mismatch");
  }
  Eigen::Index k = 0;
  for (auto &l : p.layers) {
    Eigen::Map<Eigen::VectorXd>(l.w.data(), l.w.size()) = v.segment(k, l.w.size());
    k += l.w.size();
    l.b = v.segment(k, l.b.size());
    k += l.b.size();
  }
}

void Adam::step(Mlp &p, Mlp const &g)
{
  if (m.layers.empty()) {
    m = mlp_zeros_like(p);
    v = mlp_zeros_like(p);
  }
  ++t;
  double const c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double const c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  auto update = [&](auto &param, auto const &grad, auto &mom, auto &var) {
    mom = beta1 * mom + (1.0 - beta1) * grad;
    var = beta2 * var + (1.0 - beta2) * grad.cwiseProduct(grad);
    param.array() -= lr * (mom.array() / c1) / ((var.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    update(p.layers[l].w, g.layers[l].w, m.layers[l].w, v.layers[l].w);
    update(p.layers[l].b, g.layers[l].b, m.layers[l].b, v.layers[l].b);
  }
}

} // namespace mpmri
