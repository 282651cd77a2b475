#include "mpmri/error.hpp"
#include "mpmri/estimator.hpp"
#include "mpmri/phantom.hpp"

#include "test_util.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>

using namespace mpmri;
using Catch::Approx;

namespace {

std::vector<bool> all_voxels(Dims4 d)
{
  return std::vector<bool>(d.w * d.h * d.s, true);
}

Patch toy_patch(Dims3 size, std::size_t inputs, std::size_t outputs, GroupingMode g, std::uint64_t seed)
{
  Patch p;
  p.inputs = test::random_tensor(size.with_channels(inputs), seed);
  p.target = test::random_tensor(size.with_channels(outputs), seed + 1);
  p.mask.assign(size.size(), true);
  p.spectra = tsvd_spectrum(p.target, g);
  return p;
}

// Relative error of the analytic gradient against central differences of the
// batch loss, over every network parameter.
double fd_error(Estimator e, std::vector<Patch> const &batch, double lambda, GroupingMode g, std::size_t drop)
{
  auto const analytic = backprop(e, batch, lambda, g, drop);
  double num = 0.0, den = 0.0;
  double const h = 1e-6;
  for (std::size_t head = 0; head < e.heads.size(); ++head) {
    Eigen::VectorXd const theta = flatten(e.heads[head]);
    Eigen::VectorXd const ga = flatten(analytic.grad[head]);
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Eigen::VectorXd t = theta;
      t(i) += h;
      unflatten(t, e.heads[head]);
      double const up = backprop(e, batch, lambda, g, drop, false).loss.total;
      t(i) -= 2 * h;
      unflatten(t, e.heads[head]);
      double const dn = backprop(e, batch, lambda, g, drop, false).loss.total;
      unflatten(theta, e.heads[head]);
      double const fd = (up - dn) / (2 * h);
      num += (fd - ga(i)) * (fd - ga(i));
      den += ga(i) * ga(i);
    }
  }
  return std::sqrt(num / den);
}

struct SmallProblem
{
  Dataset train, val;
};

SmallProblem const &small_problem()
{
  static SmallProblem const sp = [] {
    auto const dense = make_dense_scheme(12, {1000.0, 2000.0}, 3);
    auto make = [&](std::uint64_t seed) {
      auto const p = gen_phantom({16, 16, 4}, seed);
      auto const r = render_ground_truth(p, dense);
      return make_dataset(r.signals, dense, r.gt_params, p.mask);
    };
    return SmallProblem{make(1), make(2)};
  }();
  return sp;
}

TrainConfig small_config()
{
  TrainConfig cfg;
  cfg.patch = {8, 8, 4};
  cfg.epochs = 4;
  cfg.steps_per_epoch = 3;
  cfg.val_patches = 2;
  cfg.hidden = {12, 12};
  cfg.seed = 5;
  return cfg;
}

} // namespace

TEST_CASE("data loss")
{
  auto const gt = test::random_tensor({3, 3, 2, 4}, 1);
  ParamTensor const zero(gt.dims());
  CHECK(data_loss(gt, gt) == 0.0);
  CHECK(data_loss(zero, gt) == Approx(1.0).epsilon(1e-15));
  CHECK(data_loss(2.0 * gt, gt) == Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(data_loss(gt, zero), InputError);

  // Masked-out voxels do not count.
  auto mask = all_voxels(gt.dims());
  mask[0] = false;
  auto y = gt;
  for (std::size_t c = 0; c < 4; ++c) {
    y.data()[c] += 100.0;
  }
  CHECK(data_loss(y, gt, &mask) == 0.0);
  CHECK(data_loss(y, gt) > 0.0);
}

TEST_CASE("total loss")
{
  auto const gt = test::random_tensor({4, 3, 2, 7}, 2);
  auto const y = test::random_tensor({4, 3, 2, 7}, 3);
  for (auto g : {GroupingMode::PerParameter, GroupingMode::PerModel, GroupingMode::Merged}) {
    auto const l0 = total_loss(y, gt, 0.0, g, 0);
    CHECK(l0.total == data_loss(y, gt));
    CHECK(total_loss(gt, gt, 0.7, g, 1).total == Approx(0.0).margin(1e-20));
    auto const l = total_loss(y, gt, 0.1, g, 1);
    CHECK(l.total == Approx(data_loss(y, gt) + 0.1 * test::oracle_ratio(y, gt, g, 1)).epsilon(1e-10));
  }
  CHECK_THROWS_AS(total_loss(y, gt, -1.0, GroupingMode::Merged, 0), InputError);
}

TEST_CASE("mlp forward")
{
  auto p = mlp_init({5, 9, 9, 7}, 3);
  for (auto &l : p.layers) {
    l.w.setZero();
    l.b.setZero();
  }
  Eigen::MatrixXd const x = Eigen::MatrixXd::Random(5, 11);
  CHECK(mlp_forward(p, x).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(mlp_forward(p, Eigen::MatrixXd::Zero(4, 1)), InputError);

  // With a zero network the data loss is exactly 1.
  Patch const patch = toy_patch({2, 2, 1}, 5, 7, GroupingMode::Merged, 8);
  Estimator e;
  e.heads = {p};
  e.channel_scales.assign(7, 1.0);
  CHECK(backprop(e, std::span<Patch const>(&patch, 1), 0.0, GroupingMode::Merged, 0, false).loss.data == 1.0);
}

TEST_CASE("single linear layer reproduces a linear target after least squares")
{
  Rng rng(4, 0);
  Eigen::MatrixXd x(6, 40), wt(3, 6);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x.data()[i] = rng.normal();
  }
  for (Eigen::Index i = 0; i < wt.size(); ++i) {
    wt.data()[i] = rng.normal();
  }
  Eigen::Vector3d const bt(0.5, -1.0, 2.0);
  Eigen::MatrixXd const y = (wt * x).colwise() + bt;

  // Closed-form least squares on [x; 1].
  Eigen::MatrixXd design(40, 7);
  design.leftCols(6) = x.transpose();
  design.col(6).setOnes();
  Eigen::MatrixXd const coef = design.colPivHouseholderQr().solve(y.transpose());

  auto p = mlp_init({6, 3}, 1);
  p.layers[0].w = coef.topRows(6).transpose();
  p.layers[0].b = coef.row(6).transpose();
  CHECK((mlp_forward(p, x) - y).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("forward pass is Lipschitz with the product of spectral norms")
{
  auto const p = mlp_init({10, 20, 20, 7}, 9);
  double lip = 1.0;
  for (auto const &l : p.layers) {
    lip *= Eigen::JacobiSVD<Eigen::MatrixXd>(l.w).singularValues()(0);
  }
  Rng rng(10, 0);
  for (int t = 0; t < 200; ++t) {
    Eigen::VectorXd x(10), dx(10);
    for (int i = 0; i < 10; ++i) {
      x(i) = rng.normal();
      dx(i) = 1e-3 * rng.normal();
    }
    double const change = (mlp_forward(p, x + dx) - mlp_forward(p, x)).norm();
    CHECK(change <= lip * dx.norm() * (1 + 1e-12));
  }
}

TEST_CASE("gradients match finite differences")
{
  for (double lambda : {0.0, 0.1}) {
    for (std::size_t drop : {0u, 1u}) {
      for (auto g : {GroupingMode::PerParameter, GroupingMode::Merged}) {
        // 4-voxel patch, 2 -> 2 -> 2 network (12 parameters).
        std::vector<Patch> batch{toy_patch({2, 2, 1}, 2, 2, g, 20 + drop)};
        auto const e = estimator_init(2, 2, HeadMode::Joint, {2}, 31);
        CHECK(fd_error(e, batch, lambda, g, drop) < 1e-4);
      }
      // Two-patch batch, seven outputs, per-model grouping.
      std::vector<Patch> batch{toy_patch({3, 2, 2}, 3, 7, GroupingMode::PerModel, 40),
                               toy_patch({3, 2, 2}, 3, 7, GroupingMode::PerModel, 50)};
      auto const e = estimator_init(3, 7, HeadMode::Joint, {4}, 7);
      CHECK(fd_error(e, batch, lambda, GroupingMode::PerModel, drop) < 1e-4);
      auto const s = estimator_init(3, 7, HeadMode::Separate, {3}, 8);
      CHECK(fd_error(s, batch, lambda, GroupingMode::PerModel, drop) < 1e-4);
    }
  }
}

TEST_CASE("lambda zero gives the data-loss gradient")
{
  std::vector<Patch> batch{toy_patch({2, 2, 2}, 3, 2, GroupingMode::Merged, 60)};
  auto const e = estimator_init(3, 2, HeadMode::Joint, {5}, 2);
  auto const g = backprop(e, batch, 0.0, GroupingMode::Merged, 0);
  // Hand-derived data gradient for the last layer: dL/dW = dy * a^T.
  std::vector<MlpTape> tapes;
  Eigen::MatrixXd x(3, 8), t(2, 8);
  for (std::size_t v = 0; v < 8; ++v) {
    for (std::size_t c = 0; c < 3; ++c) {
      x(c, v) = batch[0].inputs.data()[v * 3 + c];
    }
    for (std::size_t c = 0; c < 2; ++c) {
      t(c, v) = batch[0].target.data()[v * 2 + c];
    }
  }
  Eigen::MatrixXd const y = estimator_forward(e, x, &tapes);
  Eigen::MatrixXd const dy = -2.0 * (t - y) / t.squaredNorm();
  Eigen::MatrixXd const gw = dy * tapes[0].act.back().transpose();
  CHECK((g.grad[0].layers.back().w - gw).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(g.loss.total == g.loss.data);
}

TEST_CASE("perfect prediction has zero gradient")
{
  // Zero weights; output biases equal to a spatially constant target.
  Dims3 const size{3, 3, 2};
  Patch p = toy_patch(size, 2, 2, GroupingMode::Merged, 70);
  for (std::size_t v = 0; v < size.size(); ++v) {
    p.target.data()[v * 2] = 0.4;
    p.target.data()[v * 2 + 1] = 1.3;
  }
  p.spectra = tsvd_spectrum(p.target, GroupingMode::Merged);
  auto e = estimator_init(2, 2, HeadMode::Joint, {3}, 1);
  for (auto &l : e.heads[0].layers) {
    l.w.setZero();
    l.b.setZero();
  }
  e.heads[0].layers.back().b << 0.4, 1.3;
  auto const g = backprop(e, std::span<Patch const>(&p, 1), 0.1, GroupingMode::Merged, 0);
  CHECK(g.loss.total < 1e-28);
  CHECK(flatten(g.grad[0]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("channel-scale equivariance")
{
  auto const &sp = small_problem();
  auto const scales = percentile_scales(sp.train.targets, sp.train.mask);
  Dataset scaled = sp.train;
  auto scales2 = scales;
  std::size_t const c = 1;
  double const k = 37.0;
  scales2[c] *= k;
  for (std::size_t v = 0; v < scaled.mask.size(); ++v) {
    scaled.targets.data()[v * kParamCount + c] *= k;
  }
  auto const e = estimator_init(sp.train.inputs.dims().n, kParamCount, HeadMode::Joint, {6}, 3);
  for (auto g : {GroupingMode::PerParameter, GroupingMode::PerModel, GroupingMode::Merged}) {
    auto const a = extract_patch(sp.train, {4, 4, 0}, {8, 8, 4}, scales, g);
    auto const b = extract_patch(scaled, {4, 4, 0}, {8, 8, 4}, scales2, g);
    auto const la = backprop(e, std::span<Patch const>(&a, 1), 0.1, g, 1, false).loss;
    auto const lb = backprop(e, std::span<Patch const>(&b, 1), 0.1, g, 1, false).loss;
    CHECK(std::abs(la.data - lb.data) <= 1e-12 * la.data);
    CHECK(std::abs(la.tdr - lb.tdr) <= 1e-12 * la.tdr);
  }
}

TEST_CASE("dataset normalization")
{
  GradientScheme s;
  s.entries = {{Eigen::Vector3d::UnitZ(), 0.0}, {Eigen::Vector3d::UnitX(), 1000.0}, {Eigen::Vector3d::UnitY(), 1000.0},
               {Eigen::Vector3d::UnitZ(), 0.0}};
  ParamTensor dwi({1, 1, 1, 4}, std::vector<double>{2.0, 1.0, 7.0, 4.0});
  ParamTensor gt({1, 1, 1, 1}, std::vector<double>{1.0});
  auto const d = make_dataset(dwi, s, gt, {true});
  CHECK(d.inputs.dims().n == 2);
  CHECK(d.inputs.data()[0] == Approx(1.0 / 3.0));
  CHECK(d.inputs.data()[1] == 2.0); // 7/3 clipped
  GradientScheme nob0;
  nob0.entries = {s.entries[1], s.entries[2]};
  CHECK_THROWS_AS(make_dataset(ParamTensor({1, 1, 1, 2}), nob0, gt, {true}), InputError);

  ParamTensor t({1, 1, 200, 2});
  for (std::size_t i = 0; i < 200; ++i) {
    t(0, 0, i, 0) = static_cast<double>(i + 1);
    t(0, 0, i, 1) = -1.0;
  }
  auto const sc = percentile_scales(t, std::vector<bool>(200, true));
  CHECK(sc[0] == 198.0);
  CHECK(sc[1] == 1.0);
}

TEST_CASE("training is deterministic and reduces the validation loss")
{
  auto const &sp = small_problem();
  auto cfg = small_config();
  cfg.epochs = 12;
  auto const a = train(sp.train, sp.val, cfg);
  auto const b = train(sp.train, sp.val, cfg);
  REQUIRE(a.log.size() == 13);
  CHECK(a.log.back().l_data_val == b.log.back().l_data_val);
  CHECK(flatten(a.model.heads[0]) == flatten(b.model.heads[0]));
  CHECK(a.log.back().l_data_val < 0.5 * a.log.front().l_data_val);
  CHECK_FALSE(a.diverged);
  CHECK(a.rejected_steps == 0);

  for (std::size_t i = 1; i < a.log.size(); ++i) {
    CHECK(a.log[i].lambda <= a.log[i - 1].lambda);
  }

  cfg.lambda_mode = LambdaMode::Fixed;
  cfg.lambda0 = 0.0;
  auto const c = train(sp.train, sp.val, cfg);
  for (auto const &row : c.log) {
    CHECK(row.lambda == 0.0);
  }
}

TEST_CASE("training volumes and step-size schedule")
{
  auto const &sp = small_problem();
  auto cfg = small_config();
  auto const one = train(sp.train, sp.val, cfg);

  // A single-volume list is the single-volume call.
  std::vector<Dataset> const single{sp.train};
  auto const listed = train(std::span<Dataset const>(single), sp.val, cfg);
  CHECK(flatten(listed.model.heads[0]) == flatten(one.model.heads[0]));

  std::vector<Dataset> const two{sp.train, sp.val};
  auto const both = train(std::span<Dataset const>(two), sp.val, cfg);
  CHECK(flatten(both.model.heads[0]) != flatten(one.model.heads[0]));
  CHECK(both.model.all_finite());
  CHECK(both.model.channel_scales == one.model.channel_scales);
  CHECK_THROWS_AS(train(std::span<Dataset const>(), sp.val, cfg), InputError);

  // The half-cosine starts at the full step size, so one step matches the
  // constant schedule; later steps are shorter.
  cfg.epochs = 1;
  cfg.steps_per_epoch = 1;
  auto cos_cfg = cfg;
  cos_cfg.lr_schedule = LrSchedule::Cosine;
  CHECK(flatten(train(sp.train, sp.val, cos_cfg).model.heads[0]) ==
        flatten(train(sp.train, sp.val, cfg).model.heads[0]));
  cfg = small_config();
  cos_cfg = cfg;
  cos_cfg.lr_schedule = LrSchedule::Cosine;
  CHECK(flatten(train(sp.train, sp.val, cos_cfg).model.heads[0]) != flatten(one.model.heads[0]));
  CHECK(config_hash(cos_cfg) != config_hash(cfg));

  CHECK(parse_lr_schedule("Cosine") == LrSchedule::Cosine);
  CHECK(to_string(parse_lr_schedule("constant")) == "constant");
  CHECK_THROWS_AS(parse_lr_schedule("step"), InputError);
}

TEST_CASE("separate heads train from configuration alone")
{
  auto const &sp = small_problem();
  auto cfg = small_config();
  cfg.heads = HeadMode::Separate;
  auto const r = train(sp.train, sp.val, cfg);
  CHECK(r.model.heads.size() == kParamCount);
  CHECK(r.model.outputs() == kParamCount);
  CHECK(r.log.back().l_data_val < r.log.front().l_data_val);
}

TEST_CASE("training preconditions")
{
  auto const &sp = small_problem();
  auto cfg = small_config();
  cfg.patch = {32, 8, 4};
  CHECK_THROWS_AS(train(sp.train, sp.val, cfg), InputError);
  cfg = small_config();
  cfg.channel_scales = {1.0, 1.0};
  CHECK_THROWS_AS(train(sp.train, sp.val, cfg), InputError);
}

TEST_CASE("runaway step size is flagged as divergence")
{
  auto const &sp = small_problem();
  auto cfg = small_config();
  cfg.epochs = 8;
  cfg.lr = 50.0;
  auto const r = train(sp.train, sp.val, cfg);
  CHECK(r.diverged);
  CHECK(r.log.size() < 9);
}

TEST_CASE("prediction and checkpoints")
{
  auto const &sp = small_problem();
  auto const cfg = small_config();
  auto const r = train(sp.train, sp.val, cfg);
  auto const pred = predict(r.model, sp.val);
  for (std::size_t v = 0; v < sp.val.mask.size(); ++v) {
    if (!sp.val.mask[v]) {
      for (std::size_t c = 0; c < kParamCount; ++c) {
        CHECK(pred.data()[v * kParamCount + c] == 0.0);
      }
    }
  }
  auto const dir = std::filesystem::temp_directory_path() / "mpmri_test_ckpt";
  std::filesystem::remove_all(dir);
  save_checkpoint(dir, r.model, cfg);
  auto const back = load_checkpoint(dir);
  CHECK(back.channel_scales == r.model.channel_scales);
  CHECK(predict(back, sp.val) == pred);
  std::filesystem::remove(dir / "head0_layer1_w.mpt");
  CHECK_THROWS_AS(load_checkpoint(dir), InputError);
  std::filesystem::remove_all(dir);
  CHECK(config_hash(cfg) == config_hash(small_config()));
  auto other = cfg;
  other.drop = 1;
  CHECK(config_hash(other) != config_hash(cfg));
}
