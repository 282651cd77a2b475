#pragma once

#include "mpmri/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mpmri {

/// MPT1 container: "MPT1", u32 ndim, ndim x u64 dims, u32 dtype (0 = f64),
/// then the row-major payload (last index fastest). All little-endian.
struct Mpt1
{
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  std::size_t count() const;
};

void write_mpt1(std::ostream &os, Mpt1 const &t);
// Throws InputError naming `source` on a malformed stream.
Mpt1 read_mpt1(std::istream &is, std::string const &source = "<stream>");

// File versions; writes go to a temporary sibling and are renamed into place.
void write_mpt1(std::filesystem::path const &path, Mpt1 const &t);
Mpt1 read_mpt1(std::filesystem::path const &path);

Mpt1 to_mpt1(ParamTensor const &t);
// Accepts ndim 3 (a single channel is added) or 4.
ParamTensor to_param_tensor(Mpt1 const &m);

void save_tensor(std::filesystem::path const &path, ParamTensor const &t);
ParamTensor load_tensor(std::filesystem::path const &path);

// Write `text` to `path` through a temporary file and rename.
void write_text_atomic(std::filesystem::path const &path, std::string const &text);

} // namespace mpmri
