#pragma once

#include <optional>

#include "dipstop/image.hpp"
#include "dipstop/noise.hpp"

namespace dipstop {

enum class TaskKind { kDenoise, kSuperResolve, kInpaint };

// One restoration problem: the observation, its degradation and the
// pseudo-noise that the stopping monitor tracks. The fitting target is
// cached at construction: x0 + pn for denoising and inpainting, x0 + d(pn)
// for super-resolution (pn lives at the full resolution there and is folded
// through the same downsampler the energy applies to the reconstruction).
struct TaskSpec {
  TaskKind kind = TaskKind::kDenoise;
  Image x0;            // observation (low-resolution one for super-resolution)
  int factor = 1;      // super-resolution only: 4 or 8
  std::optional<Mask> mask;  // inpainting only: 1 = known pixel
  PseudoNoise pn;      // defined on the reconstruction grid
  Image target;        // cached fitting target on the observation grid

  // Shape the network must produce.
  int out_channels() const { return pn.values.channels; }
  int out_height() const { return pn.values.height; }
  int out_width() const { return pn.values.width; }
};

TaskSpec make_denoise_task(const Image& x0, const PseudoNoise& pn);
TaskSpec make_sr_task(const Image& x0, int factor, const PseudoNoise& pn);
TaskSpec make_inpaint_task(const Image& x0, const Mask& mask, const PseudoNoise& pn);

// Data-fit energy of a candidate reconstruction (sum of squares, not
// averaged): |x - (x0 + pn)|^2, |d(x) - (x0 + d(pn))|^2 or
// |(x - (x0 + pn)) . m|^2 depending on the task. Zero exactly when the
// residual vanishes (on the known region, for inpainting).
double energy(const Image& x, const TaskSpec& task);

// Gradient of energy() with respect to x, same shape as x.
Image energy_grad(const Image& x, const TaskSpec& task);

// Pseudo-noise component of a reconstruction: the plain inner-product mean
// for denoising and super-resolution, the mask-restricted mean for
// inpainting.
double e_measure(const Image& x, const TaskSpec& task);

// Reference scale for curvature normalization: mean of pn^2 over all
// samples.
double e_ref_of(const PseudoNoise& pn);

}  // namespace dipstop
