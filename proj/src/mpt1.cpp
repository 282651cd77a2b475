#include "mpmri/mpt1.hpp"

#include "mpmri/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mpmri {

namespace {

constexpr char kMagic[4] = {'M', 'P', 'T', '1'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 34;

template <typename T>
void put(std::ostream &os, T v)
{
  static_assert(std::endian::native == std::endian::little, "MPT1 I/O assumes a little-endian host");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream &is, std::string const &source, char const *what)
{
  T v{};
  char buf[sizeof(T)];
  if (!is.read(buf, sizeof(T))) {
    throw InputError(source + ": truncated MPT1 " + what);
  }
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

std::filesystem::path temp_sibling(std::filesystem::path const &path)
{
  auto tmp = path;
  tmp += ".tmp";
  return tmp;
}

} // namespace

std::size_t Mpt1::count() const
{
  std::size_t n = 1;
  for (auto d : dims) {
    n *= d;
  }
  return n;
}

void write_mpt1(std::ostream &os, Mpt1 const &t)
{
  if (t.count() != t.data.size()) {
    throw InputError("write_mpt1: payload size does not match dims");
  }
  os.write(kMagic, 4);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) {
    put<std::uint64_t>(os, d);
  }
  put<std::uint32_t>(os, 0);
  os.write(reinterpret_cast<char const *>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

Mpt1 read_mpt1(std::istream &is, std::string const &source)
{
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw InputError(source + ": not an MPT1 file (bad magic)");
  }
  auto const ndim = get<std::uint32_t>(is, source, "header");
  if (ndim == 0 || ndim > 16) {
    throw InputError(source + ": unsupported MPT1 rank " + std::to_string(ndim));
  }
  Mpt1 t;
  std::uint64_t n = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    auto const d = get<std::uint64_t>(is, source, "dims");
    if (d != 0 && n > kMaxElements / d) {
      throw InputError(source + ": MPT1 dims too large");
    }
    n *= d;
    t.dims.push_back(d);
  }
  auto const dtype = get<std::uint32_t>(is, source, "dtype");
  if (dtype != 0) {
    throw InputError(source + ": unsupported MPT1 dtype " + std::to_string(dtype));
  }
  t.data.resize(n);
  auto const bytes = static_cast<std::streamsize>(n * sizeof(double));
  if (!is.read(reinterpret_cast<char *>(t.data.data()), bytes)) {
    throw InputError(source + ": truncated MPT1 payload");
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw InputError(source + ": trailing bytes after MPT1 payload");
  }
  return t;
}

void write_mpt1(std::filesystem::path const &path, Mpt1 const &t)
{
  auto const tmp = temp_sibling(path);
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) {
      throw InputError(path.string() + ": cannot open for writing");
    }
    write_mpt1(os, t);
    if (!os.flush()) {
      throw InputError(path.string() + ": write failed");
    }
  }
  std::filesystem::rename(tmp, path);
}

Mpt1 read_mpt1(std::filesystem::path const &path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw InputError(path.string() + ": cannot open");
  }
  return read_mpt1(is, path.string());
}

Mpt1 to_mpt1(ParamTensor const &t)
{
  auto const &d = t.dims();
  return {{d.w, d.h, d.s, d.n}, t.vec()};
}

ParamTensor to_param_tensor(Mpt1 const &m)
{
  if (m.dims.size() == 3) {
    return ParamTensor({m.dims[0], m.dims[1], m.dims[2], 1}, m.data);
  }
  if (m.dims.size() != 4) {
    throw InputError("expected a rank-3 or rank-4 MPT1 tensor, got rank " + std::to_string(m.dims.size()));
  }
  return ParamTensor({m.dims[0], m.dims[1], m.dims[2], m.dims[3]}, m.data);
}

void save_tensor(std::filesystem::path const &path, ParamTensor const &t)
{
  write_mpt1(path, to_mpt1(t));
}

ParamTensor load_tensor(std::filesystem::path const &path)
{
  return to_param_tensor(read_mpt1(path));
}

void write_text_atomic(std::filesystem::path const &path, std::string const &text)
{
  auto const tmp = temp_sibling(path);
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) {
      throw InputError(path.string() + ": cannot open for writing");
    }
    os << text;
    if (!os.flush()) {
      throw InputError(path.string() + ": write failed");
    }
  }
  std::filesystem::rename(tmp, path);
}

} // namespace mpmri
