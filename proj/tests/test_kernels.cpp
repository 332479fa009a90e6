#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <vector>

#include "doctest.h"
#include "vergescope/geometry.hpp"
#include "vergescope/kernels.hpp"

using namespace vergescope;
using namespace vergescope::kernels;

namespace {

bool same_bits(double a, double b) {
  if (std::isnan(a) && std::isnan(b)) return true;
  return std::memcmp(&a, &b, sizeof a) == 0;
}

struct Block {
  std::vector<double> lx, ly, lz, rx, ry, rz;
  DirectionBlock view() const { return {lx, ly, lz, rx, ry, rz}; }
};

Block random_block(std::size_t n, std::mt19937_64& rng, double nan_rate) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Block b;
  for (std::size_t i = 0; i < n; ++i) {
    b.lx.push_back(g(rng));
    b.ly.push_back(g(rng));
    b.lz.push_back(g(rng));
    b.rx.push_back(g(rng));
    b.ry.push_back(g(rng));
    b.rz.push_back(g(rng));
    if (u(rng) < nan_rate) b.rz.back() = NAN;
  }
  return b;
}

const std::size_t kLengths[] = {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 64, 100, 1001};

}  // namespace

TEST_CASE("scalar vergence kernel matches the geometry function") {
  std::mt19937_64 rng(1);
  const Block b = random_block(257, rng, 0.0);
  std::vector<double> out(257);
  vergence_angles(scalar_kernels(), b.view(), false, out);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double ref = vergence_angle({b.lx[i], b.ly[i], b.lz[i]}, {b.rx[i], b.ry[i], b.rz[i]});
    CHECK(out[i] == doctest::Approx(ref).epsilon(1e-12));
  }
  vergence_angles(scalar_kernels(), b.view(), true, out);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double ref =
        vergence_angle({b.lx[i], b.ly[i], b.lz[i]}, {b.rx[i], b.ry[i], b.rz[i]}, VergenceMode::Horizontal);
    CHECK(out[i] == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("scalar masked moments match a naive two-pass computation") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(5.0, 2.0);
  std::vector<double> v(333);
  std::vector<std::uint8_t> m(333);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = g(rng);
    m[i] = (i % 3) != 0;
  }
  const auto mm = scalar_kernels().masked_moments(v, m);
  double s = 0;
  std::size_t c = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (m[i]) s += v[i], ++c;
  const double mean = s / c;
  double ss = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (m[i]) ss += (v[i] - mean) * (v[i] - mean);
  CHECK(mm.count == c);
  CHECK(mm.mean == doctest::Approx(mean).epsilon(1e-13));
  CHECK(mm.sum_sq_dev == doctest::Approx(ss).epsilon(1e-12));

  std::vector<std::uint8_t> none(v.size(), 0);
  CHECK(scalar_kernels().masked_moments(v, none).count == 0);
}

TEST_CASE("active kernel table is one of the known variants") {
  const auto& k = active_kernels();
  CHECK((k.name == scalar_kernels().name || (avx2_kernels() && k.name == avx2_kernels()->name)));
}

TEST_CASE("AVX2 kernels are bit-identical to the scalar reference") {
  const KernelTable* simd = avx2_kernels();
  if (!simd) {
    MESSAGE("AVX2 variant unavailable on this build/CPU; equivalence not exercised");
    return;
  }
  const KernelTable& ref = scalar_kernels();
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(3.0, 10.0);

  for (std::size_t n : kLengths) {
    CAPTURE(n);
    for (bool horizontal : {false, true}) {
      const Block b = random_block(n, rng, 0.05);
      std::vector<double> d1(n), c1(n), d2(n), c2(n);
      ref.dot_cross(b.view(), horizontal, d1, c1);
      simd->dot_cross(b.view(), horizontal, d2, c2);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(same_bits(d1[i], d2[i]));
        CHECK(same_bits(c1[i], c2[i]));
      }
    }

    std::vector<double> t(n), v(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += 0.005 * (0.5 + u(rng));
      t[i] = acc;
      v[i] = u(rng) < 0.05 ? NAN : g(rng);
    }
    std::vector<double> f1(n), f2(n);
    ref.forward_difference(t, v, f1);
    simd->forward_difference(t, v, f2);
    for (std::size_t i = 0; i < n; ++i) CHECK(same_bits(f1[i], f2[i]));

    std::vector<std::uint8_t> mask(n);
    for (std::size_t i = 0; i < n; ++i) mask[i] = (u(rng) < 0.8 && !std::isnan(v[i])) ? 1 : 0;
    const auto m1 = ref.masked_moments(v, mask);
    const auto m2 = simd->masked_moments(v, mask);
    CHECK(m1.count == m2.count);
    CHECK(same_bits(m1.mean, m2.mean));
    CHECK(same_bits(m1.sum_sq_dev, m2.sum_sq_dev));

    std::vector<std::uint8_t> o1(n), o2(n);
    ref.flag_deviation(v, mask, 3.0, 12.5, o1);
    simd->flag_deviation(v, mask, 3.0, 12.5, o2);
    CHECK(o1 == o2);
  }
}

TEST_CASE("flag_deviation boundary is inclusive") {
  std::vector<double> v{0.0, 2.0, -2.0, 1.999999, NAN};
  std::vector<std::uint8_t> mask{1, 1, 1, 1, 1};
  std::vector<std::uint8_t> out(v.size());
  scalar_kernels().flag_deviation(v, mask, 0.0, 2.0, out);
  CHECK(out == std::vector<std::uint8_t>{0, 1, 1, 0, 0});
  if (const auto* simd = avx2_kernels()) {
    std::vector<std::uint8_t> o2(v.size());
    simd->flag_deviation(v, mask, 0.0, 2.0, o2);
    CHECK(o2 == out);
  }
}
