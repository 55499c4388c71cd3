#include "dipstop/task.hpp"

#include <string>

#include "dipstop/error.hpp"
#include "dipstop/monitor.hpp"
#include "dipstop/resample.hpp"

namespace dipstop {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw InvalidArgument(std::string(what) + ": shape mismatch (" +
                          std::to_string(a.channels) + "x" + std::to_string(a.height) +
                          "x" + std::to_string(a.width) + " vs " +
                          std::to_string(b.channels) + "x" + std::to_string(b.height) +
                          "x" + std::to_string(b.width) + ")");
  }
}

}  // namespace

TaskSpec make_denoise_task(const Image& x0, const PseudoNoise& pn) {
  require_same_shape(x0, pn.values, "denoise task");
  TaskSpec t;
  t.kind = TaskKind::kDenoise;
  t.x0 = x0;
  t.pn = pn;
  t.target = x0;
  t.target.data += pn.values.data;
  return t;
}

TaskSpec make_sr_task(const Image& x0, int factor, const PseudoNoise& pn) {
  if (factor != 4 && factor != 8) {
    throw InvalidArgument("super-resolution factor must be 4 or 8, got " +
                          std::to_string(factor));
  }
  if (pn.values.channels != x0.channels ||
      pn.values.height != x0.height * factor ||
      pn.values.width != x0.width * factor) {
    throw InvalidArgument("super-resolution task: pseudo-noise must live on the "
                          "high-resolution grid");
  }
  TaskSpec t;
  t.kind = TaskKind::kSuperResolve;
  t.x0 = x0;
  t.factor = factor;
  t.pn = pn;
  t.target = lanczos_downsample(pn.values, factor);
  t.target.data += x0.data;
  return t;
}

TaskSpec make_inpaint_task(const Image& x0, const Mask& mask, const PseudoNoise& pn) {
  require_same_shape(x0, pn.values, "inpaint task");
  if (mask.height != x0.height || mask.width != x0.width) {
    throw InvalidArgument("inpaint task: mask shape mismatch");
  }
  mask.validate();
  TaskSpec t;
  t.kind = TaskKind::kInpaint;
  t.x0 = x0;
  t.mask = mask;
  t.pn = pn;
  t.target = x0;
  t.target.data += pn.values.data;
  return t;
}

double energy(const Image& x, const TaskSpec& task) {
  switch (task.kind) {
    case TaskKind::kDenoise: {
      require_same_shape(x, task.target, "energy");
      return (x.data - task.target.data).square().sum();
    }
    case TaskKind::kSuperResolve: {
      Image down = lanczos_downsample(x, task.factor);
      return (down.data - task.target.data).square().sum();
    }
    case TaskKind::kInpaint: {
      require_same_shape(x, task.target, "energy");
      Image r = x;
      r.data -= task.target.data;
      return apply_mask(r, *task.mask).data.square().sum();
    }
  }
  throw InvalidArgument("energy: unknown task kind");
}

Image energy_grad(const Image& x, const TaskSpec& task) {
  switch (task.kind) {
    case TaskKind::kDenoise: {
      require_same_shape(x, task.target, "energy_grad");
      Image g = x;
      g.data = 2.0 * (x.data - task.target.data);
      return g;
    }
    case TaskKind::kSuperResolve: {
      Image down = lanczos_downsample(x, task.factor);
      down.data = 2.0 * (down.data - task.target.data);
      return lanczos_downsample_adjoint(down, task.factor);
    }
    case TaskKind::kInpaint: {
      require_same_shape(x, task.target, "energy_grad");
      Image g = x;
      g.data = 2.0 * (x.data - task.target.data);
      return apply_mask(g, *task.mask);
    }
  }
  throw InvalidArgument("energy_grad: unknown task kind");
}

double e_measure(const Image& x, const TaskSpec& task) {
  if (task.kind == TaskKind::kInpaint) {
    return compute_e_masked(x, task.pn, *task.mask);
  }
  return compute_e(x, task.pn);
}

double e_ref_of(const PseudoNoise& pn) {
  const auto& v = pn.values.data;
  double acc = 0.0;
  const double* p = v.data();
  const long n = v.size();
  for (long i = 0; i < n; ++i) acc += p[i] * p[i];
  return acc / static_cast<double>(n);
}

}  // namespace dipstop
