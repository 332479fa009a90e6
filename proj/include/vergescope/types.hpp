#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace vergescope {

enum class Environment { Real, AR, VR };

inline constexpr std::array<Environment, 3> kAllEnvironments{Environment::Real, Environment::AR,
                                                             Environment::VR};

std::string_view environment_name(Environment env) noexcept;

/// Accepts "Real"/"real", "AR"/"ar", "VR"/"vr"; throws Parse otherwise.
Environment parse_environment(std::string_view text);

using ParticipantId = std::string;

enum class LandoltDirection { Left, Right, Top, Bottom, Timeout };

std::string_view landolt_name(LandoltDirection d) noexcept;
LandoltDirection parse_landolt(std::string_view text);

}  // namespace vergescope
