#include "vergescope/kernels.hpp"

#include <cmath>
#include <limits>

namespace vergescope::kernels {
namespace {

void dot_cross_scalar(const DirectionBlock& in, bool horizontal, std::span<double> dot,
                      std::span<double> cross_norm) {
  const std::size_t n = in.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double lx = in.lx[i], lz = in.lz[i];
    const double rx = in.rx[i], rz = in.rz[i];
    const double ly = horizontal ? 0.0 : in.ly[i];
    const double ry = horizontal ? 0.0 : in.ry[i];
    dot[i] = lx * rx + ly * ry + lz * rz;
    const double cx = ly * rz - lz * ry;
    const double cy = lz * rx - lx * rz;
    const double cz = lx * ry - ly * rx;
    cross_norm[i] = std::sqrt(cx * cx + cy * cy + cz * cz);
  }
}

void forward_difference_scalar(std::span<const double> t, std::span<const double> v,
                               std::span<double> out) {
  const std::size_t n = v.size();
  if (n == 0) return;
  out[0] = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 1; i < n; ++i) out[i] = (v[i] - v[i - 1]) / (t[i] - t[i - 1]);
}

MaskedMoments masked_moments_scalar(std::span<const double> v, std::span<const std::uint8_t> mask) {
  MaskedMoments m;
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (mask[i]) {
      acc[i % 4] += v[i];
      ++m.count;
    }
  }
  if (m.count == 0) return m;
  m.mean = ((acc[0] + acc[1]) + (acc[2] + acc[3])) / static_cast<double>(m.count);

  double sq[4] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (mask[i]) {
      const double d = v[i] - m.mean;
      sq[i % 4] += d * d;
    }
  }
  m.sum_sq_dev = (sq[0] + sq[1]) + (sq[2] + sq[3]);
  return m;
}

void flag_deviation_scalar(std::span<const double> v, std::span<const std::uint8_t> mask,
                           double center, double limit, std::span<std::uint8_t> out) {
  for (std::size_t i = 0; i < v.size(); ++i)
    out[i] = (mask[i] && std::fabs(v[i] - center) >= limit) ? 1 : 0;
}

}  // namespace

const KernelTable& scalar_kernels() noexcept {
  static const KernelTable table{
      "scalar", dot_cross_scalar, forward_difference_scalar, masked_moments_scalar,
      flag_deviation_scalar,
  };
  return table;
}

}  // namespace vergescope::kernels
