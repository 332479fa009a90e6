#include "vergescope/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <numbers>
#include <string_view>
#include <vector>

namespace vergescope::kernels {

#if defined(VERGESCOPE_HAVE_AVX2)
const KernelTable& avx2_table_unchecked() noexcept;
#endif

const KernelTable* avx2_kernels() noexcept {
#if defined(VERGESCOPE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? &avx2_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active_kernels() noexcept {
  static const KernelTable& chosen = []() -> const KernelTable& {
    if (const char* forced = std::getenv("VERGESCOPE_KERNELS");
        forced != nullptr && std::string_view(forced) == "scalar")
      return scalar_kernels();
    if (const KernelTable* avx2 = avx2_kernels()) return *avx2;
    return scalar_kernels();
  }();
  return chosen;
}

void vergence_angles(const KernelTable& k, const DirectionBlock& in, bool horizontal,
                     std::span<double> out_deg) {
  const std::size_t n = in.size();
  std::vector<double> cross_norm(n);
  k.dot_cross(in, horizontal, out_deg, cross_norm);
  constexpr double kDegPerRad = 180.0 / std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) out_deg[i] = std::atan2(cross_norm[i], out_deg[i]) * kDegPerRad;
}

}  // namespace vergescope::kernels
