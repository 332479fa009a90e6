#pragma once

// Binocular vergence geometry.
//
// Frame convention: head-fixed, right-handed; x to the right, y up, z forward
// along the optical (depth) axis. Angles cross the API in degrees.

#include <cmath>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace vergescope {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) noexcept { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) noexcept { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator*(double k, Vec3 a) noexcept { return {k * a.x, k * a.y, k * a.z}; }
  friend constexpr bool operator==(Vec3, Vec3) = default;

  bool finite() const noexcept { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

constexpr double dot(Vec3 a, Vec3 b) noexcept { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(Vec3 a, Vec3 b) noexcept {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) noexcept { return std::sqrt(dot(a, a)); }

/// Unit vector along `v`. Throws DegenerateInput for zero or non-finite input.
Vec3 normalized(Vec3 v);

/// Rotation about the vertical (y) axis; positive yaw turns +z toward +x.
Vec3 rotate_yaw(Vec3 v, double yaw_deg) noexcept;

struct GazeRay {
  Vec3 origin;
  Vec3 direction;

  /// Validating constructor: the direction is normalized, zero length throws.
  static GazeRay make(Vec3 origin, Vec3 direction);
};

struct EyeConfig {
  double ipd = 0.0648;
  Vec3 left_center{-0.0324, 0.0, 0.0};
  Vec3 right_center{0.0324, 0.0, 0.0};

  /// Eyes placed symmetrically about the cyclopean origin on the x axis.
  static EyeConfig symmetric(double ipd);
};

struct TargetSpec {
  Vec3 position;
  double depth_m = 0.0;
  double depth_d = 0.0;

  /// Midline target straight ahead of the cyclopean point.
  static TargetSpec midline(double depth_m);
  /// Target at `depth_m` from the cyclopean point, `azimuth_deg` to the right.
  static TargetSpec at_azimuth(double depth_m, double azimuth_deg);
};

enum class VergenceMode {
  Full3D,      // the full 3D dot product
  Horizontal,  // vectors projected onto the x-z plane first
};

/// Angle between the two gaze directions in degrees, in [0, 180].
/// Symmetric in its arguments and invariant to positive scaling.
double vergence_angle(Vec3 left_dir, Vec3 right_dir, VergenceMode mode = VergenceMode::Full3D);

/// Vergence demand of a midline target: 2 atan(ipd / (2 depth)), in degrees.
double ideal_vergence(double depth_m, double ipd_m);

double to_diopters(double depth_m);

/// Ideal gaze rays from each eye to `target`. The eyes are first rotated by
/// `head_yaw_deg` about the vertical axis through the cyclopean point.
std::pair<GazeRay, GazeRay> forward_gaze(const TargetSpec& target, const EyeConfig& eyes,
                                         double head_yaw_deg = 0.0);

struct GvaPoint {
  double t_s;
  double gva_deg;  // NaN marks an invalid sample
};

struct VelocityPoint {
  double t_s;
  double deg_per_s;  // NaN when the difference would span an invalid sample
};

/// Backward-looking forward differences of a GVA series: entry i holds
/// (g[i] - g[i-1]) / (t[i] - t[i-1]). Entry 0 and any entry touching an
/// invalid sample are NaN. Returns an empty vector when no difference can be
/// formed at all.
std::vector<VelocityPoint> gva_velocity(std::span<const GvaPoint> series);

}  // namespace vergescope
