#include "mpmri/config.hpp"

#include "mpmri/error.hpp"
#include "mpmri/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace mpmri {

namespace {

std::string trim(std::string_view s)
{
  auto const b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) {
    return {};
  }
  auto const e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string const &v)
{
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(trim(item));
  }
  if (out.empty() || std::any_of(out.begin(), out.end(), [](std::string const &s) { return s.empty(); })) {
    throw InputError("empty list element");
  }
  return out;
}

std::uint64_t to_u64(std::string const &s)
{
  std::uint64_t v = 0;
  auto const [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw InputError("expected a nonnegative integer, got '" + s + "'");
  }
  return v;
}

double to_double(std::string const &s)
{
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (std::exception const &) {
    used = 0;
  }
  if (used != s.size() || s.empty() || !std::isfinite(v)) {
    throw InputError("expected a finite number, got '" + s + "'");
  }
  return v;
}

bool to_bool(std::string const &s)
{
  if (s == "true" || s == "1") {
    return true;
  }
  if (s == "false" || s == "0") {
    return false;
  }
  throw InputError("expected true or false, got '" + s + "'");
}

Dims3 to_dims3(std::string const &s)
{
  auto const v = split_list(s);
  if (v.size() != 3) {
    throw InputError("expected three comma-separated sizes, got '" + s + "'");
  }
  return {to_u64(v[0]), to_u64(v[1]), to_u64(v[2])};
}

template <typename T, typename F>
std::vector<T> list_of(std::string const &s, F &&f)
{
  std::vector<T> out;
  for (auto const &item : split_list(s)) {
    out.push_back(f(item));
  }
  return out;
}

template <typename T, typename F>
std::string join(std::vector<T> const &v, F &&f)
{
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out += (i ? "," : "") + std::string(f(v[i]));
  }
  return out;
}

std::string num(double v)
{
  return format_number(v);
}

using Setter = std::function<void(ExperimentConfig &, std::string const &)>;

std::map<std::string, Setter> const &setters()
{
  static std::map<std::string, Setter> const s{
      {"phantom.dims", [](auto &c, auto const &v) { c.phantom_dims = to_dims3(v); }},
      {"phantom.seed", [](auto &c, auto const &v) { c.phantom_seed = to_u64(v); }},
      {"phantom.train_count", [](auto &c, auto const &v) { c.train_phantoms = to_u64(v); }},
      {"scheme.dirs_per_shell", [](auto &c, auto const &v) { c.dirs_per_shell = to_u64(v); }},
      {"scheme.shells", [](auto &c, auto const &v) { c.shells = list_of<double>(v, to_double); }},
      {"scheme.subsample_k", [](auto &c, auto const &v) { c.subsample_k = to_u64(v); }},
      {"scheme.seed", [](auto &c, auto const &v) { c.scheme_seed = to_u64(v); }},
      {"noise.level", [](auto &c, auto const &v) { c.noise_level = to_double(v); }},
      {"noise.seed", [](auto &c, auto const &v) { c.noise_seed = to_u64(v); }},
      {"train.epochs", [](auto &c, auto const &v) { c.train.epochs = to_u64(v); }},
      {"train.patch", [](auto &c, auto const &v) { c.train.patch = to_dims3(v); }},
      {"train.batch", [](auto &c, auto const &v) { c.train.batch = to_u64(v); }},
      {"train.steps", [](auto &c, auto const &v) { c.train.steps_per_epoch = to_u64(v); }},
      {"train.val_patches", [](auto &c, auto const &v) { c.train.val_patches = to_u64(v); }},
      {"train.lr", [](auto &c, auto const &v) { c.train.lr = to_double(v); }},
      {"train.lr_schedule", [](auto &c, auto const &v) { c.train.lr_schedule = parse_lr_schedule(v); }},
      {"train.lambda0", [](auto &c, auto const &v) { c.train.lambda0 = to_double(v); }},
      {"train.alpha", [](auto &c, auto const &v) { c.train.alpha = to_double(v); }},
      {"train.beta", [](auto &c, auto const &v) { c.train.beta = to_double(v); }},
      {"train.lambda_mode", [](auto &c, auto const &v) { c.arms = list_of<RegArm>(v, parse_reg_arm); }},
      {"train.grouping", [](auto &c, auto const &v) { c.groupings = list_of<GroupingMode>(v, parse_grouping); }},
      {"train.drop", [](auto &c, auto const &v) { c.drops = list_of<std::size_t>(v, to_u64); }},
      {"train.seed", [](auto &c, auto const &v) { c.train.seed = to_u64(v); }},
      {"train.heads", [](auto &c, auto const &v) { c.train.heads = parse_head_mode(v); }},
      {"train.hidden", [](auto &c, auto const &v) { c.train.hidden = list_of<std::size_t>(v, to_u64); }},
      {"eval.channels", [](auto &c, auto const &v) { c.eval_channels = split_list(v); }},
      {"experiment.seeds", [](auto &c, auto const &v) { c.seeds = list_of<std::uint64_t>(v, to_u64); }},
      {"experiment.classical", [](auto &c, auto const &v) { c.classical = to_bool(v); }},
  };
  return s;
}

void validate(ExperimentConfig const &c)
{
  if (c.phantom_dims.w < 16 || c.phantom_dims.h < 16 || c.phantom_dims.s < 4) {
    throw InputError("phantom.dims must be at least 16,16,4");
  }
  if (c.train_phantoms == 0) {
    throw InputError("phantom.train_count must be positive");
  }
  if (c.shells.size() < 2 || std::any_of(c.shells.begin(), c.shells.end(), [](double b) { return !(b > 0.0); })) {
    throw InputError("scheme.shells needs at least two positive b-values");
  }
  if (c.subsample_k == 0 || c.subsample_k > c.dirs_per_shell) {
    throw InputError("scheme.subsample_k must lie in [1, scheme.dirs_per_shell]");
  }
  if (!(c.noise_level >= 0.0 && c.noise_level <= 0.2)) {
    throw InputError("noise.level must lie in [0, 0.2]");
  }
  if (c.train.hidden.empty() || std::count(c.train.hidden.begin(), c.train.hidden.end(), 0u) > 0) {
    throw InputError("train.hidden needs positive layer widths");
  }
  if (!(c.train.lambda0 >= 0.0) || !(c.train.alpha > 0.0) || !(c.train.beta >= 0.0 && c.train.beta < 1.0)) {
    throw InputError("train.lambda0 >= 0, train.alpha > 0 and train.beta in [0, 1) are required");
  }
  if (c.seeds.empty()) {
    throw InputError("experiment.seeds is empty");
  }
  std::set<std::string> seen;
  for (auto const &name : c.eval_channels) {
    if (std::find(kParamNames.begin(), kParamNames.end(), name) == kParamNames.end()) {
      throw InputError("eval.channels: unknown channel '" + name + "'");
    }
    if (!seen.insert(name).second) {
      throw InputError("eval.channels: repeated channel '" + name + "'");
    }
  }
  for (auto d : c.drops) {
    if (d >= std::min(c.train.patch.w, c.train.patch.h)) {
      throw InputError("train.drop must be smaller than min(patch width, patch height)");
    }
  }
}

} // namespace

RegArm parse_reg_arm(std::string_view s)
{
  if (s == "none" || s == "zero") {
    return RegArm::None;
  }
  if (s == "fixed") {
    return RegArm::Fixed;
  }
  if (s == "nala") {
    return RegArm::Nala;
  }
  throw InputError("unknown lambda mode '" + std::string(s) + "' (expected none, fixed or nala)");
}

std::string_view to_string(RegArm a)
{
  switch (a) {
  case RegArm::None:
    return "none";
  case RegArm::Fixed:
    return "fixed";
  default:
    return "nala";
  }
}

ExperimentConfig parse_config(std::istream &is, std::string const &source)
{
  ExperimentConfig c;
  std::set<std::string> given;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto const where = source + ":" + std::to_string(lineno) + ": ";
    auto const hash = line.find('#');
    auto const body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) {
      continue;
    }
    auto const eq = body.find('=');
    if (eq == std::string::npos) {
      throw InputError(where + "expected 'key = value'");
    }
    auto const key = trim(body.substr(0, eq));
    auto const value = trim(body.substr(eq + 1));
    auto const it = setters().find(key);
    if (it == setters().end()) {
      throw InputError(where + "unknown key '" + key + "'");
    }
    if (!given.insert(key).second) {
      throw InputError(where + "repeated key '" + key + "'");
    }
    try {
      it->second(c, value);
    } catch (InputError const &e) {
      throw InputError(where + key + ": " + e.what());
    }
  }
  try {
    validate(c);
  } catch (InputError const &e) {
    throw InputError(source + ": " + e.what());
  }
  return c;
}

ExperimentConfig load_config(std::filesystem::path const &path)
{
  std::ifstream is(path);
  if (!is) {
    throw InputError(path.string() + ": cannot open config");
  }
  return parse_config(is, path.string());
}

std::vector<std::pair<std::string, std::string>> config_entries(ExperimentConfig const &c)
{
  auto dims = [](Dims3 d) { return std::to_string(d.w) + "," + std::to_string(d.h) + "," + std::to_string(d.s); };
  auto u = [](auto v) { return std::to_string(v); };
  auto const &t = c.train;
  return {
      {"phantom.dims", dims(c.phantom_dims)},
      {"phantom.seed", u(c.phantom_seed)},
      {"phantom.train_count", u(c.train_phantoms)},
      {"scheme.dirs_per_shell", u(c.dirs_per_shell)},
      {"scheme.shells", join(c.shells, num)},
      {"scheme.subsample_k", u(c.subsample_k)},
      {"scheme.seed", u(c.scheme_seed)},
      {"noise.level", num(c.noise_level)},
      {"noise.seed", u(c.noise_seed)},
      {"train.epochs", u(t.epochs)},
      {"train.patch", dims(t.patch)},
      {"train.batch", u(t.batch)},
      {"train.steps", u(t.steps_per_epoch)},
      {"train.val_patches", u(t.val_patches)},
      {"train.lr", num(t.lr)},
      {"train.lr_schedule", std::string(to_string(t.lr_schedule))},
      {"train.lambda0", num(t.lambda0)},
      {"train.alpha", num(t.alpha)},
      {"train.beta", num(t.beta)},
      {"train.lambda_mode", join(c.arms, [](RegArm a) { return to_string(a); })},
      {"train.grouping", join(c.groupings, [](GroupingMode g) { return to_string(g); })},
      {"train.drop", join(c.drops, [](std::size_t d) { return std::to_string(d); })},
      {"train.seed", u(t.seed)},
      {"train.heads", std::string(to_string(t.heads))},
      {"train.hidden", join(t.hidden, [](std::size_t d) { return std::to_string(d); })},
      {"eval.channels", join(c.eval_channels, [](std::string const &s) { return s; })},
      {"experiment.seeds", join(c.seeds, [](std::uint64_t s) { return std::to_string(s); })},
      {"experiment.classical", c.classical ? "true" : "false"},
  };
}

std::string config_text(ExperimentConfig const &c)
{
  std::string out;
  for (auto const &[k, v] : config_entries(c)) {
    out += k + " = " + v + "\n";
  }
  return out;
}

std::vector<std::size_t> eval_channel_indices(ExperimentConfig const &cfg)
{
  std::vector<std::size_t> idx;
  for (auto const &name : cfg.eval_channels) {
    auto const it = std::find(kParamNames.begin(), kParamNames.end(), name);
    if (it == kParamNames.end()) {
      throw InputError("eval.channels: unknown channel '" + name + "'");
    }
    idx.push_back(static_cast<std::size_t>(it - kParamNames.begin()));
  }
  return idx;
}

} // namespace mpmri
