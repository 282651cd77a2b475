#pragma once

#include "mpmri/noddi.hpp"
#include "mpmri/qspace.hpp"
#include "mpmri/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mpmri {

enum class Tissue : std::uint8_t
{
  Background = 0,
  WhiteMatter = 1,
  GrayMatter = 2,
  Csf = 3
};

struct Interval
{
  double lo = 0.0, hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct TissueRange
{
  Interval vic, viso, od;
};

TissueRange tissue_range(Tissue t);

struct Phantom
{
  Dims3 dims;
  std::uint64_t seed = 0;
  std::vector<Tissue> labels;    // Dims3::index layout
  std::vector<NoddiVoxel> noddi; // generative fields; default voxel in background
  std::vector<bool> mask;
  // KFA, MK, AK, RK, OD, Vic, Viso. The DKI channels stay zero until
  // render_ground_truth fills them.
  ParamTensor gt_params;

  std::size_t mask_count() const;
};

/// Ellipsoidal brain with tissue classes from thresholded smooth random fields,
/// NODDI parameters from band-limited fields mapped into each class range, and
/// fibre orientations along concentric arcs in the axial plane plus a smooth
/// perturbation. Requires W, H >= 16 and S >= 4.
Phantom gen_phantom(Dims3 dims, std::uint64_t seed);

struct RenderedPhantom
{
  ParamTensor signals;   // W x H x S x scheme.size(); zero outside the mask
  ParamTensor gt_params; // W x H x S x 7
};

/// Noise-free NODDI signals on `dense`; NODDI channels copied from the
/// generative fields, DKI channels from a WLLS fit of the dense signals.
RenderedPhantom render_ground_truth(Phantom const &p, GradientScheme const &dense);

// labels.mpt, noddi.mpt (vic, viso, kappa, mu_x, mu_y, mu_z, s0), gt.mpt and
// phantom.json in `dir`.
void save_phantom(std::filesystem::path const &dir, Phantom const &p);
Phantom load_phantom(std::filesystem::path const &dir);

} // namespace mpmri
