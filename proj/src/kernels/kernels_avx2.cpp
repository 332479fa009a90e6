// Compiled with -mavx2. Nothing in this file may run unless the dispatcher
// has confirmed AVX2 support, so the table below is constant-initialized and
// the only entry point is the raw table accessor.

#include "vergescope/kernels.hpp"

#include <immintrin.h>

#include <cmath>
#include <cstring>
#include <limits>

namespace vergescope::kernels {
namespace {

constexpr std::size_t kLanes = 4;

void dot_cross_avx2(const DirectionBlock& in, bool horizontal, std::span<double> dot,
                    std::span<double> cross_norm) {
  const std::size_t n = in.size();
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d lx = _mm256_loadu_pd(&in.lx[i]);
    const __m256d lz = _mm256_loadu_pd(&in.lz[i]);
    const __m256d rx = _mm256_loadu_pd(&in.rx[i]);
    const __m256d rz = _mm256_loadu_pd(&in.rz[i]);
    const __m256d ly = horizontal ? zero : _mm256_loadu_pd(&in.ly[i]);
    const __m256d ry = horizontal ? zero : _mm256_loadu_pd(&in.ry[i]);

    const __m256d d = _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(lx, rx), _mm256_mul_pd(ly, ry)),
                                    _mm256_mul_pd(lz, rz));
    _mm256_storeu_pd(&dot[i], d);

    const __m256d cx = _mm256_sub_pd(_mm256_mul_pd(ly, rz), _mm256_mul_pd(lz, ry));
    const __m256d cy = _mm256_sub_pd(_mm256_mul_pd(lz, rx), _mm256_mul_pd(lx, rz));
    const __m256d cz = _mm256_sub_pd(_mm256_mul_pd(lx, ry), _mm256_mul_pd(ly, rx));
    const __m256d ss = _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(cx, cx), _mm256_mul_pd(cy, cy)),
                                     _mm256_mul_pd(cz, cz));
    _mm256_storeu_pd(&cross_norm[i], _mm256_sqrt_pd(ss));
  }
  for (; i < n; ++i) {
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

void forward_difference_avx2(std::span<const double> t, std::span<const double> v,
                             std::span<double> out) {
  const std::size_t n = v.size();
  if (n == 0) return;
  out[0] = std::numeric_limits<double>::quiet_NaN();
  std::size_t i = 1;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d dv = _mm256_sub_pd(_mm256_loadu_pd(&v[i]), _mm256_loadu_pd(&v[i - 1]));
    const __m256d dt = _mm256_sub_pd(_mm256_loadu_pd(&t[i]), _mm256_loadu_pd(&t[i - 1]));
    _mm256_storeu_pd(&out[i], _mm256_div_pd(dv, dt));
  }
  for (; i < n; ++i) out[i] = (v[i] - v[i - 1]) / (t[i] - t[i - 1]);
}

inline __m256d expand_mask(const std::uint8_t* m) {
  std::int32_t bytes;
  std::memcpy(&bytes, m, sizeof(bytes));
  const __m256i wide = _mm256_cvtepu8_epi64(_mm_cvtsi32_si128(bytes));
  return _mm256_castsi256_pd(_mm256_cmpgt_epi64(wide, _mm256_setzero_si256()));
}

inline double lane_sum(__m256d acc_v, double* acc) {
  _mm256_storeu_pd(acc, acc_v);
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

MaskedMoments masked_moments_avx2(std::span<const double> v, std::span<const std::uint8_t> mask) {
  MaskedMoments m;
  const std::size_t n = v.size();
  const std::size_t blocked = n - n % kLanes;

  __m256d acc_v = _mm256_setzero_pd();
  for (std::size_t i = 0; i < blocked; i += kLanes)
    acc_v = _mm256_add_pd(acc_v, _mm256_and_pd(_mm256_loadu_pd(&v[i]), expand_mask(&mask[i])));
  alignas(32) double acc[kLanes];
  _mm256_store_pd(acc, acc_v);
  for (std::size_t i = blocked; i < n; ++i)
    if (mask[i]) acc[i % kLanes] += v[i];
  for (std::size_t i = 0; i < n; ++i) m.count += mask[i] ? 1 : 0;
  if (m.count == 0) return m;
  m.mean = ((acc[0] + acc[1]) + (acc[2] + acc[3])) / static_cast<double>(m.count);

  const __m256d mean_v = _mm256_set1_pd(m.mean);
  __m256d sq_v = _mm256_setzero_pd();
  for (std::size_t i = 0; i < blocked; i += kLanes) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(&v[i]), mean_v);
    sq_v = _mm256_add_pd(sq_v, _mm256_and_pd(_mm256_mul_pd(d, d), expand_mask(&mask[i])));
  }
  alignas(32) double sq[kLanes];
  _mm256_store_pd(sq, sq_v);
  for (std::size_t i = blocked; i < n; ++i) {
    if (mask[i]) {
      const double d = v[i] - m.mean;
      sq[i % kLanes] += d * d;
    }
  }
  m.sum_sq_dev = (sq[0] + sq[1]) + (sq[2] + sq[3]);
  return m;
}

void flag_deviation_avx2(std::span<const double> v, std::span<const std::uint8_t> mask,
                         double center, double limit, std::span<std::uint8_t> out) {
  const std::size_t n = v.size();
  const __m256d c = _mm256_set1_pd(center);
  const __m256d lim = _mm256_set1_pd(limit);
  const __m256d sign = _mm256_set1_pd(-0.0);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d dev = _mm256_andnot_pd(sign, _mm256_sub_pd(_mm256_loadu_pd(&v[i]), c));
    const __m256d hit = _mm256_and_pd(_mm256_cmp_pd(dev, lim, _CMP_GE_OQ), expand_mask(&mask[i]));
    const int bits = _mm256_movemask_pd(hit);
    for (std::size_t j = 0; j < kLanes; ++j) out[i + j] = static_cast<std::uint8_t>((bits >> j) & 1);
  }
  for (; i < n; ++i) out[i] = (mask[i] && std::fabs(v[i] - center) >= limit) ? 1 : 0;
}

constinit const KernelTable kAvx2Table{
    "avx2", dot_cross_avx2, forward_difference_avx2, masked_moments_avx2, flag_deviation_avx2,
};

}  // namespace

const KernelTable& avx2_table_unchecked() noexcept { return kAvx2Table; }

}  // namespace vergescope::kernels
