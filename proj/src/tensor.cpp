#include "mpmri/tensor.hpp"

#include "mpmri/error.hpp"

#include <cmath>
#include <numeric>

namespace mpmri {

std::string to_string(Dims4 const &d)
{
  return std::to_string(d.w) + "x" + std::to_string(d.h) + "x" + std::to_string(d.s) + "x" + std::to_string(d.n);
}

ParamTensor::ParamTensor(Dims4 d, double fill)
  : dims_{d}
  , data_(d.size(), fill)
{
}

ParamTensor::ParamTensor(Dims4 d, std::vector<double> data)
  : dims_{d}
  , data_{std::move(data)}
{
  if (data_.size() != d.size()) {
    throw InputError("ParamTensor: data length " + std::to_string(data_.size()) + " does not match dims " +
                     to_string(d));
  }
}

double ParamTensor::squared_norm() const
{
  return std::inner_product(data_.begin(), data_.end(), data_.begin(), 0.0);
}

bool ParamTensor::all_finite() const
{
  for (double v : data_) {
    if (!std::isfinite(v)) {
      return false;
    }
  }
  return true;
}

ParamTensor ParamTensor::channels(std::span<std::size_t const> which) const
{
  Dims4 d = dims_;
  d.n = which.size();
  ParamTensor out(d);
  std::size_t const fibers = dims_.w * dims_.h * dims_.s;
  for (std::size_t f = 0; f < fibers; ++f) {
    for (std::size_t c = 0; c < which.size(); ++c) {
      out.data_[f * d.n + c] = data_[f * dims_.n + which[c]];
    }
  }
  return out;
}

void ParamTensor::set_channels(std::span<std::size_t const> which, ParamTensor const &part)
{
  std::size_t const fibers = dims_.w * dims_.h * dims_.s;
  std::size_t const pn = part.dims().n;
  for (std::size_t f = 0; f < fibers; ++f) {
    for (std::size_t c = 0; c < which.size(); ++c) {
      data_[f * dims_.n + which[c]] = part.data_[f * pn + c];
    }
  }
}

ParamTensor &ParamTensor::operator*=(double c)
{
  for (double &v : data_) {
    v *= c;
  }
  return *this;
}

ParamTensor operator*(double c, ParamTensor t)
{
  t *= c;
  return t;
}

ParamTensor operator-(ParamTensor const &a, ParamTensor const &b)
{
  if (!(a.dims() == b.dims())) {
    throw InputError("ParamTensor subtraction: dims differ");
  }
  ParamTensor out(a.dims());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.data()[i] = a.data()[i] - b.data()[i];
  }
  return out;
}

GroupingMode parse_grouping(std::string_view s)
{
  if (s == "per_parameter" || s == "PER_PARAMETER") {
    return GroupingMode::PerParameter;
  }
  if (s == "per_model" || s == "PER_MODEL") {
    return GroupingMode::PerModel;
  }
  if (s == "merged" || s == "MERGED") {
    return GroupingMode::Merged;
  }
  throw InputError("unknown grouping '" + std::string(s) + "' (expected per_parameter, per_model or merged)");
}

std::string_view to_string(GroupingMode g)
{
  switch (g) {
  case GroupingMode::PerParameter: return "per_parameter";
  case GroupingMode::PerModel: return "per_model";
  case GroupingMode::Merged: return "merged";
  }
  return "?";
}

std::vector<std::vector<std::size_t>> channel_groups(GroupingMode g, std::size_t channels)
{
  std::vector<std::vector<std::size_t>> groups;
  switch (g) {
  case GroupingMode::Merged: {
    std::vector<std::size_t> all(channels);
    std::iota(all.begin(), all.end(), 0);
    groups.push_back(std::move(all));
    break;
  }
  case GroupingMode::PerParameter:
    for (std::size_t c = 0; c < channels; ++c) {
      groups.push_back({c});
    }
    break;
  case GroupingMode::PerModel:
    if (channels != kParamCount) {
      throw InputError("per_model grouping needs the 7-channel parameter layout, got " + std::to_string(channels));
    }
    groups.push_back({0, 1, 2, 3});
    groups.push_back({4, 5, 6});
    break;
  }
  return groups;
}

} // namespace mpmri
