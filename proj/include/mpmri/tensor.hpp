#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mpmri {

struct Dims4
{
  std::size_t w = 0, h = 0, s = 0, n = 0;

  std::size_t size() const { return w * h * s * n; }
  bool operator==(Dims4 const &) const = default;
};

std::string to_string(Dims4 const &d);

// Spatial volume extent.
struct Dims3
{
  std::size_t w = 0, h = 0, s = 0;

  std::size_t size() const { return w * h * s; }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const { return (x * h + y) * s + z; }
  Dims4 with_channels(std::size_t n) const { return {w, h, s, n}; }
  bool operator==(Dims3 const &) const = default;
};

/// Real order-4 array W x H x S x N, row-major with the channel index fastest.
/// This is the layout used for parameter maps (S axial slices, N parameters)
/// and for everything serialized to MPT1.
class ParamTensor
{
public:
  ParamTensor() = default;
  explicit ParamTensor(Dims4 d, double fill = 0.0);
  ParamTensor(Dims4 d, std::vector<double> data);

  Dims4 const &dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(std::size_t w, std::size_t h, std::size_t s, std::size_t n) const
  {
    return ((w * dims_.h + h) * dims_.s + s) * dims_.n + n;
  }
  double &operator()(std::size_t w, std::size_t h, std::size_t s, std::size_t n) { return data_[index(w, h, s, n)]; }
  double operator()(std::size_t w, std::size_t h, std::size_t s, std::size_t n) const
  {
    return data_[index(w, h, s, n)];
  }

  std::span<double> data() { return data_; }
  std::span<double const> data() const { return data_; }
  std::vector<double> const &vec() const { return data_; }

  double squared_norm() const;
  bool all_finite() const;

  // Copy of the listed channels, in the given order.
  ParamTensor channels(std::span<std::size_t const> which) const;
  // Write `part` into the listed channels of this tensor.
  void set_channels(std::span<std::size_t const> which, ParamTensor const &part);

  ParamTensor &operator*=(double c);

  bool operator==(ParamTensor const &) const = default;

private:
  Dims4 dims_{};
  std::vector<double> data_;
};

ParamTensor operator*(double c, ParamTensor t);
ParamTensor operator-(ParamTensor const &a, ParamTensor const &b);

enum class GroupingMode
{
  PerParameter,
  PerModel,
  Merged
};

GroupingMode parse_grouping(std::string_view s);
std::string_view to_string(GroupingMode g);

// Channel indices of each group. PerModel needs exactly the 7-channel layout
// {KFA, MK, AK, RK | OD, Vic, Viso}.
std::vector<std::vector<std::size_t>> channel_groups(GroupingMode g, std::size_t channels);

inline constexpr std::size_t kParamCount = 7;
inline constexpr std::array<std::string_view, kParamCount> kParamNames{"KFA", "MK", "AK", "RK", "OD", "Vic", "Viso"};

} // namespace mpmri
