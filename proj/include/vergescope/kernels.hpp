#pragma once

// Data-parallel inner loops of the gaze pipeline.
//
// Every kernel has a scalar reference implementation and, on x86-64, an AVX2
// variant. Both variants perform the same IEEE operations in the same order
// (reductions use four interleaved accumulators in both), so their outputs are
// bit-identical; the equivalence tests rely on that.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace vergescope::kernels {

/// Structure-of-arrays view over left/right gaze directions.
struct DirectionBlock {
  std::span<const double> lx, ly, lz;
  std::span<const double> rx, ry, rz;

  std::size_t size() const noexcept { return lx.size(); }
};

struct MaskedMoments {
  std::size_t count = 0;
  double mean = 0.0;
  double sum_sq_dev = 0.0;  // sum of squared deviations from `mean`
};

struct KernelTable {
  std::string_view name;

  /// dot[i] = L.R and cross_norm[i] = |L x R|. With `horizontal` the y
  /// components are treated as zero.
  void (*dot_cross)(const DirectionBlock& in, bool horizontal, std::span<double> dot,
                    std::span<double> cross_norm);

  /// out[i] = (v[i] - v[i-1]) / (t[i] - t[i-1]) for i >= 1; out[0] = NaN.
  void (*forward_difference)(std::span<const double> t, std::span<const double> v,
                             std::span<double> out);

  /// Two-pass mean and squared deviation over elements with mask != 0.
  MaskedMoments (*masked_moments)(std::span<const double> v, std::span<const std::uint8_t> mask);

  /// out[i] = 1 where mask[i] != 0 and |v[i] - center| >= limit, else 0.
  void (*flag_deviation)(std::span<const double> v, std::span<const std::uint8_t> mask,
                         double center, double limit, std::span<std::uint8_t> out);
};

const KernelTable& scalar_kernels() noexcept;

/// The AVX2 table, or nullptr when the build or the CPU lacks AVX2.
const KernelTable* avx2_kernels() noexcept;

/// Chosen once per process: AVX2 when available, unless the environment
/// variable VERGESCOPE_KERNELS=scalar forces the reference path.
const KernelTable& active_kernels() noexcept;

/// Angle in degrees for every element of `in`; NaN inputs give NaN.
void vergence_angles(const KernelTable& k, const DirectionBlock& in, bool horizontal,
                     std::span<double> out_deg);

}  // namespace vergescope::kernels
