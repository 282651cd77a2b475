#include "mpmri/estimator.hpp"

#include "mpmri/error.hpp"
#include "mpmri/metrics.hpp"
#include "mpmri/mpt1.hpp"
#include "mpmri/nala.hpp"
#include "mpmri/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace mpmri {

namespace {

constexpr std::uint64_t kTrainStream = 0x747261696eULL; // "train"
constexpr std::uint64_t kValStream = 0x76616cULL;       // "val"
constexpr std::size_t kPredictChunk = 4096;

std::string lower(std::string_view s)
{
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::size_t> masked_voxels(std::vector<bool> const &mask)
{
  std::vector<std::size_t> v;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      v.push_back(i);
    }
  }
  return v;
}

Eigen::MatrixXd gather_inputs(ParamTensor const &inputs, std::span<std::size_t const> vox)
{
  auto const d = inputs.dims().n;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(vox.size()));
  for (std::size_t j = 0; j < vox.size(); ++j) {
    for (std::size_t c = 0; c < d; ++c) {
      x(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) = inputs.data()[vox[j] * d + c];
    }
  }
  return x;
}

// Random patch origin with at least one masked voxel.
Patch random_patch(Dataset const &data, Dims3 size, std::vector<double> const &scales, GroupingMode grouping,
                   std::uint64_t key)
{
  auto const d = data.dims();
  Rng rng(key);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::array<std::size_t, 3> const o{rng.below(d.w - size.w + 1), rng.below(d.h - size.h + 1),
                                       rng.below(d.s - size.s + 1)};
    bool any = false;
    for (std::size_t x = 0; x < size.w && !any; ++x) {
      for (std::size_t y = 0; y < size.h && !any; ++y) {
        for (std::size_t z = 0; z < size.s && !any; ++z) {
          any = data.mask[d.index(o[0] + x, o[1] + y, o[2] + z)];
        }
      }
    }
    if (any) {
      return extract_patch(data, o, size, scales, grouping);
    }
  }
  throw InputError("training: no patch position overlaps the mask");
}

std::uint64_t fnv1a(std::string const &s)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Mpt1 matrix_to_mpt1(Eigen::MatrixXd const &m)
{
  Mpt1 t{{static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, {}};
  t.data.resize(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      t.data[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
    }
  }
  return t;
}

Eigen::MatrixXd mpt1_to_matrix(Mpt1 const &t, std::string const &what)
{
  if (t.dims.size() != 2) {
    throw InputError(what + ": expected a rank-2 tensor");
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = t.data[static_cast<std::size_t>(i * m.cols() + j)];
    }
  }
  return m;
}

} // namespace

LambdaMode parse_lambda_mode(std::string_view s)
{
  auto const v = lower(s);
  if (v == "fixed") {
    return LambdaMode::Fixed;
  }
  if (v == "nala") {
    return LambdaMode::Nala;
  }
  throw InputError("unknown lambda mode '" + std::string(s) + "' (expected fixed or nala)");
}

std::string_view to_string(LambdaMode m)
{
  return m == LambdaMode::Fixed ? "fixed" : "nala";
}

LrSchedule parse_lr_schedule(std::string_view s)
{
  auto const v = lower(s);
  if (v == "constant") {
    return LrSchedule::Constant;
  }
  if (v == "cosine") {
    return LrSchedule::Cosine;
  }
  throw InputError("unknown lr schedule '" + std::string(s) + "' (expected constant or cosine)");
}

std::string_view to_string(LrSchedule s)
{
  return s == LrSchedule::Constant ? "constant" : "cosine";
}

HeadMode parse_head_mode(std::string_view s)
{
  auto const v = lower(s);
  if (v == "joint") {
    return HeadMode::Joint;
  }
  if (v == "separate") {
    return HeadMode::Separate;
  }
  throw InputError("unknown head mode '" + std::string(s) + "' (expected joint or separate)");
}

std::string_view to_string(HeadMode m)
{
  return m == HeadMode::Joint ? "joint" : "separate";
}

std::string describe(TrainConfig const &cfg)
{
  nlohmann::json j;
  j["patch"] = {cfg.patch.w, cfg.patch.h, cfg.patch.s};
  j["epochs"] = cfg.epochs;
  j["batch"] = cfg.batch;
  j["steps_per_epoch"] = cfg.steps_per_epoch;
  j["val_patches"] = cfg.val_patches;
  j["lr"] = cfg.lr;
  j["lr_schedule"] = to_string(cfg.lr_schedule);
  j["adam_beta1"] = cfg.adam_beta1;
  j["adam_beta2"] = cfg.adam_beta2;
  j["lambda_mode"] = to_string(cfg.lambda_mode);
  j["lambda0"] = cfg.lambda0;
  j["alpha"] = cfg.alpha;
  j["beta"] = cfg.beta;
  j["grouping"] = to_string(cfg.grouping);
  j["drop"] = cfg.drop;
  j["seed"] = cfg.seed;
  j["heads"] = to_string(cfg.heads);
  j["hidden"] = cfg.hidden;
  j["channel_scales"] = cfg.channel_scales;
  return j.dump();
}

std::string config_hash(TrainConfig const &cfg)
{
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(describe(cfg))));
  return buf;
}

Dataset make_dataset(ParamTensor const &dwi, GradientScheme const &scheme, ParamTensor const &targets,
                     std::vector<bool> const &mask)
{
  auto const dd = dwi.dims();
  auto const td = targets.dims();
  if (dd.w != td.w || dd.h != td.h || dd.s != td.s || mask.size() != dd.w * dd.h * dd.s) {
    throw InputError("make_dataset: signal, target and mask grids differ");
  }
  if (dd.n != scheme.size()) {
    throw InputError("make_dataset: signal volume has " + std::to_string(dd.n) + " entries, scheme has " +
                     std::to_string(scheme.size()));
  }
  auto const b0 = scheme.b0_indices();
  if (b0.empty()) {
    throw InputError("make_dataset: scheme has no b=0 entry");
  }
  std::vector<std::size_t> weighted;
  for (std::size_t i = 0; i < scheme.size(); ++i) {
    if (scheme.entries[i].b > 0.0) {
      weighted.push_back(i);
    }
  }
  if (weighted.empty()) {
    throw InputError("make_dataset: scheme has no diffusion-weighted entry");
  }
  Dataset out{ParamTensor({dd.w, dd.h, dd.s, weighted.size()}), targets, mask};
  for (std::size_t v = 0; v < mask.size(); ++v) {
    if (!mask[v]) {
      continue;
    }
    double const *sig = &dwi.data()[v * dd.n];
    double s0 = 0.0;
    for (auto i : b0) {
      s0 += sig[i];
    }
    s0 /= static_cast<double>(b0.size());
    for (std::size_t j = 0; j < weighted.size(); ++j) {
      double const x = s0 > 0.0 ? sig[weighted[j]] / s0 : 0.0;
      out.inputs.data()[v * weighted.size() + j] = std::clamp(x, 0.0, 2.0);
    }
  }
  return out;
}

std::vector<double> percentile_scales(ParamTensor const &targets, std::vector<bool> const &mask)
{
  auto const n = targets.dims().n;
  std::vector<double> scales(n, 1.0);
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<double> v;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) {
        v.push_back(targets.data()[i * n + c]);
      }
    }
    if (v.empty()) {
      continue;
    }
    std::sort(v.begin(), v.end());
    auto const rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(v.size()))) - 1;
    double s = v[std::min(rank, v.size() - 1)];
    if (!(s > 0.0)) {
      s = std::max(std::abs(v.front()), std::abs(v.back()));
    }
    scales[c] = s > 0.0 ? s : 1.0;
  }
  return scales;
}

Patch extract_patch(Dataset const &data, std::array<std::size_t, 3> origin, Dims3 size,
                    std::vector<double> const &scales, GroupingMode grouping)
{
  auto const d = data.dims();
  auto const nin = data.inputs.dims().n;
  auto const nout = data.targets.dims().n;
  if (origin[0] + size.w > d.w || origin[1] + size.h > d.h || origin[2] + size.s > d.s) {
    throw InputError("extract_patch: patch exceeds the volume");
  }
  if (scales.size() != nout) {
    throw InputError("extract_patch: channel scale count does not match targets");
  }
  Patch p{ParamTensor(size.with_channels(nin)), ParamTensor(size.with_channels(nout)),
          std::vector<bool>(size.size(), false), {}};
  for (std::size_t x = 0; x < size.w; ++x) {
    for (std::size_t y = 0; y < size.h; ++y) {
      for (std::size_t z = 0; z < size.s; ++z) {
        auto const src = d.index(origin[0] + x, origin[1] + y, origin[2] + z);
        auto const dst = size.index(x, y, z);
        if (!data.mask[src]) {
          continue;
        }
        p.mask[dst] = true;
        for (std::size_t c = 0; c < nin; ++c) {
          p.inputs.data()[dst * nin + c] = data.inputs.data()[src * nin + c];
        }
        for (std::size_t c = 0; c < nout; ++c) {
          p.target.data()[dst * nout + c] = data.targets.data()[src * nout + c] / scales[c];
        }
      }
    }
  }
  p.spectra = tsvd_spectrum(p.target, grouping);
  return p;
}

double data_loss(ParamTensor const &y, ParamTensor const &gt, std::vector<bool> const *mask)
{
  if (!(y.dims() == gt.dims())) {
    throw InputError("data_loss: dims differ: " + to_string(y.dims()) + " vs " + to_string(gt.dims()));
  }
  auto const n = gt.dims().n;
  if (mask && mask->size() * n != gt.size()) {
    throw InputError("data_loss: mask size does not match the grid");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (mask && !(*mask)[i / n]) {
      continue;
    }
    double const e = gt.data()[i] - y.data()[i];
    num += e * e;
    den += gt.data()[i] * gt.data()[i];
  }
  if (!(den > 0.0)) {
    throw InputError("data_loss: reference is identically zero");
  }
  return num / den;
}

LossParts total_loss(ParamTensor const &y, ParamTensor const &gt, double lambda, GroupingMode grouping,
                     std::size_t drop)
{
  if (!(lambda >= 0.0)) {
    throw InputError("total_loss: lambda must be >= 0");
  }
  LossParts l;
  l.data = data_loss(y, gt);
  l.tdr = tdr_loss(y, gt, grouping, drop);
  l.total = l.data + lambda * l.tdr;
  return l;
}

std::size_t Estimator::outputs() const
{
  return mode == HeadMode::Joint ? heads.front().outputs() : heads.size();
}

bool Estimator::all_finite() const
{
  return std::all_of(heads.begin(), heads.end(), [](Mlp const &m) { return m.all_finite(); });
}

Estimator estimator_init(std::size_t inputs, std::size_t outputs, HeadMode mode,
                         std::vector<std::size_t> const &hidden, std::uint64_t seed)
{
  Estimator e;
  e.mode = mode;
  auto sizes = [&](std::size_t out) {
    std::vector<std::size_t> s{inputs};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(out);
    return s;
  };
  if (mode == HeadMode::Joint) {
    e.heads.push_back(mlp_init(sizes(outputs), hash_key(seed, 0)));
  } else {
    for (std::size_t c = 0; c < outputs; ++c) {
      e.heads.push_back(mlp_init(sizes(1), hash_key(seed, c)));
    }
  }
  e.channel_scales.assign(outputs, 1.0);
  return e;
}

Eigen::MatrixXd estimator_forward(Estimator const &e, Eigen::MatrixXd const &x, std::vector<MlpTape> *tapes)
{
  if (tapes) {
    tapes->assign(e.heads.size(), {});
  }
  if (e.mode == HeadMode::Joint) {
    return mlp_forward(e.heads.front(), x, tapes ? &(*tapes)[0] : nullptr);
  }
  Eigen::MatrixXd y(static_cast<Eigen::Index>(e.heads.size()), x.cols());
  for (std::size_t c = 0; c < e.heads.size(); ++c) {
    y.row(static_cast<Eigen::Index>(c)) = mlp_forward(e.heads[c], x, tapes ? &(*tapes)[c] : nullptr);
  }
  return y;
}

Backprop backprop(Estimator const &e, std::span<Patch const> batch, double lambda, GroupingMode grouping,
                  std::size_t drop, bool with_grad)
{
  if (!(lambda >= 0.0)) {
    throw InputError("backprop: lambda must be >= 0");
  }
  if (batch.empty()) {
    throw InputError("backprop: empty batch");
  }
  auto const nout = e.outputs();
  double den = 0.0;
  for (auto const &p : batch) {
    if (p.target.dims().n != nout) {
      throw InputError("backprop: target channel count does not match the network");
    }
    for (std::size_t i = 0; i < p.target.size(); ++i) {
      if (p.mask[i / nout]) {
        den += p.target.data()[i] * p.target.data()[i];
      }
    }
  }
  if (!(den > 0.0)) {
    throw InputError("backprop: batch reference is identically zero");
  }

  Backprop out;
  if (with_grad) {
    for (auto const &h : e.heads) {
      out.grad.push_back(mlp_zeros_like(h));
    }
  }
  double num = 0.0;
  double const inv_batch = 1.0 / static_cast<double>(batch.size());
  for (auto const &p : batch) {
    auto const vox = masked_voxels(p.mask);
    Eigen::MatrixXd const x = gather_inputs(p.inputs, vox);
    std::vector<MlpTape> tapes;
    Eigen::MatrixXd const y = estimator_forward(e, x, with_grad ? &tapes : nullptr);

    ParamTensor full(p.target.dims());
    Eigen::MatrixXd dy(y.rows(), y.cols());
    for (std::size_t j = 0; j < vox.size(); ++j) {
      for (std::size_t c = 0; c < nout; ++c) {
        double const v = y(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j));
        double const r = p.target.data()[vox[j] * nout + c] - v;
        full.data()[vox[j] * nout + c] = v;
        num += r * r;
        dy(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) = -2.0 * r / den;
      }
    }

    bool const tdr_grad = with_grad && lambda > 0.0;
    auto const ev = tdr_evaluate(full, p.spectra, grouping, drop, tdr_grad);
    out.loss.tdr += inv_batch * ev.value;
    out.diag.degenerate_slices += ev.diag.degenerate_slices;
    if (!with_grad) {
      continue;
    }
    if (tdr_grad) {
      for (std::size_t j = 0; j < vox.size(); ++j) {
        for (std::size_t c = 0; c < nout; ++c) {
          dy(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) +=
              lambda * inv_batch * ev.grad.data()[vox[j] * nout + c];
        }
      }
    }
    if (e.mode == HeadMode::Joint) {
      mlp_backward(e.heads[0], tapes[0], dy, out.grad[0]);
    } else {
      for (std::size_t c = 0; c < nout; ++c) {
        mlp_backward(e.heads[c], tapes[c], dy.row(static_cast<Eigen::Index>(c)), out.grad[c]);
      }
    }
  }
  out.loss.data = num / den;
  out.loss.total = out.loss.data + lambda * out.loss.tdr;
  out.finite = std::isfinite(out.loss.total);
  for (auto const &g : out.grad) {
    out.finite = out.finite && g.all_finite();
  }
  return out;
}

TrainResult train(std::span<Dataset const> train_sets, Dataset const &val_set, TrainConfig const &cfg)
{
  if (train_sets.empty()) {
    throw InputError("train: no training volumes");
  }
  auto const &train_set = train_sets.front();
  auto const vd = val_set.dims();
  auto const &ps = cfg.patch;
  for (auto const &t : train_sets) {
    auto const td = t.dims();
    if (ps.w == 0 || ps.h == 0 || ps.s == 0 || ps.w > td.w || ps.h > td.h || ps.s > td.s || ps.w > vd.w ||
        ps.h > vd.h || ps.s > vd.s) {
      throw InputError("train: patch dims must be positive and fit inside every volume");
    }
    if (t.inputs.dims().n != val_set.inputs.dims().n || t.targets.dims().n != val_set.targets.dims().n) {
      throw InputError("train: training and validation sets have different channel counts");
    }
  }
  if (cfg.epochs == 0 || cfg.batch == 0 || cfg.steps_per_epoch == 0 || cfg.val_patches == 0) {
    throw InputError("train: epochs, batch, steps_per_epoch and val_patches must be positive");
  }
  if (!(cfg.lr > 0.0)) {
    throw InputError("train: lr must be > 0");
  }
  auto const nout = train_set.targets.dims().n;
  auto scales = cfg.channel_scales.empty() ? percentile_scales(train_set.targets, train_set.mask) : cfg.channel_scales;
  if (scales.size() != nout || std::any_of(scales.begin(), scales.end(), [](double s) { return !(s > 0.0); })) {
    throw InputError("train: channel scales must be positive, one per target channel");
  }

  TrainResult res;
  res.model = estimator_init(train_set.inputs.dims().n, nout, cfg.heads, cfg.hidden, hash_key(cfg.seed, 1));
  res.model.channel_scales = scales;
  std::vector<Adam> adam(res.model.heads.size());
  for (auto &a : adam) {
    a.lr = cfg.lr;
    a.beta1 = cfg.adam_beta1;
    a.beta2 = cfg.adam_beta2;
  }

  std::vector<Patch> val;
  for (std::size_t i = 0; i < cfg.val_patches; ++i) {
    val.push_back(random_patch(val_set, ps, scales, cfg.grouping, hash_key(cfg.seed, kValStream, i)));
  }
  auto epoch_patches = [&](std::size_t epoch) {
    std::vector<Patch> v;
    for (std::size_t i = 0; i < cfg.steps_per_epoch * cfg.batch; ++i) {
      auto const key = hash_key(cfg.seed, kTrainStream, epoch, i);
      auto const &src = train_sets[train_sets.size() == 1 ? 0 : hash_key(key, 1) % train_sets.size()];
      v.push_back(random_patch(src, ps, scales, cfg.grouping, key));
    }
    return v;
  };

  NalaState nala;
  double lambda = cfg.lambda0;
  if (cfg.lambda_mode == LambdaMode::Nala) {
    nala = nala_init(cfg.lambda0, cfg.alpha, cfg.beta);
  } else if (!(lambda >= 0.0)) {
    throw InputError("train: lambda0 must be >= 0");
  }

  double const total_steps = static_cast<double>(cfg.epochs * cfg.steps_per_epoch);
  auto run_epoch = [&](std::size_t epoch, std::vector<Patch> const &patches, bool update, EpochLog &row) {
    double data = 0.0, r = 0.0;
    for (std::size_t s = 0; s < cfg.steps_per_epoch; ++s) {
      if (update && cfg.lr_schedule == LrSchedule::Cosine) {
        double const t = static_cast<double>((epoch - 1) * cfg.steps_per_epoch + s) / total_steps;
        for (auto &a : adam) {
          a.lr = 0.5 * cfg.lr * (1.0 + std::cos(std::numbers::pi * t));
        }
      }
      std::span<Patch const> const b(patches.data() + s * cfg.batch, cfg.batch);
      auto g = backprop(res.model, b, lambda, cfg.grouping, cfg.drop, update);
      data += g.loss.data;
      r += g.loss.tdr;
      if (!update) {
        continue;
      }
      if (!g.finite) {
        ++res.rejected_steps;
        continue;
      }
      for (std::size_t h = 0; h < res.model.heads.size(); ++h) {
        adam[h].step(res.model.heads[h], g.grad[h]);
      }
    }
    row.l_data_train = data / static_cast<double>(cfg.steps_per_epoch);
    row.r_train = r / static_cast<double>(cfg.steps_per_epoch);
  };
  auto validate = [&](EpochLog &row) {
    auto const g = backprop(res.model, val, 0.0, cfg.grouping, cfg.drop, false);
    row.l_data_val = g.loss.data;
    row.r_val = g.loss.tdr;
  };

  EpochLog row0;
  run_epoch(1, epoch_patches(1), false, row0);
  validate(row0);
  row0.lambda = lambda;
  res.log.push_back(row0);
  double const initial = row0.l_data_train + lambda * row0.r_train;

  std::size_t over = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochLog row;
    row.epoch = epoch;
    double const used = lambda;
    run_epoch(epoch, epoch_patches(epoch), true, row);
    validate(row);
    if (cfg.lambda_mode == LambdaMode::Nala) {
      nala = nala_step(nala, row.r_val);
      lambda = nala.lambda;
    }
    row.lambda = lambda;
    res.log.push_back(row);
    double const loss = row.l_data_train + used * row.r_train;
    over = (!std::isfinite(loss) || loss > 10.0 * initial) ? over + 1 : 0;
    if (over >= 3) {
      res.diverged = true;
      break;
    }
  }
  return res;
}

TrainResult train(Dataset const &train_set, Dataset const &val_set, TrainConfig const &cfg)
{
  return train(std::span<Dataset const>(&train_set, 1), val_set, cfg);
}

ParamTensor predict(Estimator const &e, Dataset const &data)
{
  auto const d = data.dims();
  auto const nout = e.outputs();
  if (data.inputs.dims().n != e.inputs()) {
    throw InputError("predict: dataset has " + std::to_string(data.inputs.dims().n) + " inputs, model expects " +
                     std::to_string(e.inputs()));
  }
  ParamTensor out(d.with_channels(nout));
  auto const vox = masked_voxels(data.mask);
  for (std::size_t start = 0; start < vox.size(); start += kPredictChunk) {
    std::span<std::size_t const> const chunk(vox.data() + start, std::min(kPredictChunk, vox.size() - start));
    Eigen::MatrixXd const y = estimator_forward(e, gather_inputs(data.inputs, chunk));
    for (std::size_t j = 0; j < chunk.size(); ++j) {
      for (std::size_t c = 0; c < nout; ++c) {
        out.data()[chunk[j] * nout + c] = y(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) * e.channel_scales[c];
      }
    }
  }
  return out;
}

std::string training_log_csv(std::vector<EpochLog> const &log)
{
  std::ostringstream os;
  os << "epoch,L_data_train,R_train,L_data_val,R_val,lambda\n";
  for (auto const &r : log) {
    os << r.epoch << ',' << format_number(r.l_data_train) << ',' << format_number(r.r_train) << ','
       << format_number(r.l_data_val) << ',' << format_number(r.r_val) << ',' << format_number(r.lambda) << '\n';
  }
  return os.str();
}

void save_checkpoint(std::filesystem::path const &dir, Estimator const &e, TrainConfig const &cfg)
{
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["format"] = "MPT1";
  j["heads"] = to_string(e.mode);
  j["layer_sizes"] = nlohmann::json::array();
  for (std::size_t h = 0; h < e.heads.size(); ++h) {
    j["layer_sizes"].push_back(e.heads[h].sizes());
    for (std::size_t l = 0; l < e.heads[h].layers.size(); ++l) {
      auto const stem = "head" + std::to_string(h) + "_layer" + std::to_string(l);
      write_mpt1(dir / (stem + "_w.mpt"), matrix_to_mpt1(e.heads[h].layers[l].w));
      write_mpt1(dir / (stem + "_b.mpt"), matrix_to_mpt1(e.heads[h].layers[l].b));
    }
  }
  j["channel_scales"] = e.channel_scales;
  j["config_hash"] = config_hash(cfg);
  j["config"] = nlohmann::json::parse(describe(cfg));
  write_text_atomic(dir / "model.json", j.dump(2) + "\n");
}

Estimator load_checkpoint(std::filesystem::path const &dir)
{
  auto const path = dir / "model.json";
  std::ifstream is(path);
  if (!is) {
    throw InputError(path.string() + ": cannot open");
  }
  Estimator e;
  try {
    auto const j = nlohmann::json::parse(is);
    e.mode = parse_head_mode(j.at("heads").get<std::string>());
    e.channel_scales = j.at("channel_scales").get<std::vector<double>>();
    auto const sizes = j.at("layer_sizes").get<std::vector<std::vector<std::size_t>>>();
    for (std::size_t h = 0; h < sizes.size(); ++h) {
      Mlp m;
      for (std::size_t l = 0; l + 1 < sizes[h].size(); ++l) {
        auto const stem = "head" + std::to_string(h) + "_layer" + std::to_string(l);
        MlpLayer layer{mpt1_to_matrix(read_mpt1(dir / (stem + "_w.mpt")), stem),
                       mpt1_to_matrix(read_mpt1(dir / (stem + "_b.mpt")), stem)};
        if (layer.w.rows() != static_cast<Eigen::Index>(sizes[h][l + 1]) ||
            layer.w.cols() != static_cast<Eigen::Index>(sizes[h][l]) || layer.b.size() != layer.w.rows()) {
          throw InputError(stem + ": shape does not match model.json");
        }
        m.layers.push_back(std::move(layer));
      }
      e.heads.push_back(std::move(m));
    }
  } catch (nlohmann::json::exception const &ex) {
    throw InputError(path.string() + ": " + ex.what());
  }
  if (e.heads.empty() || e.channel_scales.size() != e.outputs()) {
    throw InputError(path.string() + ": inconsistent model description");
  }
  return e;
}

} // namespace mpmri
