#include "vergescope/types.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "vergescope/error.hpp"

namespace vergescope {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

std::string_view environment_name(Environment env) noexcept {
  switch (env) {
    case Environment::Real: return "Real";
    case Environment::AR: return "AR";
    case Environment::VR: return "VR";
  }
  return "?";
}

Environment parse_environment(std::string_view text) {
  const std::string t = lower(text);
  if (t == "real") return Environment::Real;
  if (t == "ar") return Environment::AR;
  if (t == "vr") return Environment::VR;
  throw Error(ErrorCode::Parse, "unknown environment '" + std::string(text) + "'");
}

std::string_view landolt_name(LandoltDirection d) noexcept {
  switch (d) {
    case LandoltDirection::Left: return "left";
    case LandoltDirection::Right: return "right";
    case LandoltDirection::Top: return "top";
    case LandoltDirection::Bottom: return "bottom";
    case LandoltDirection::Timeout: return "timeout";
  }
  return "?";
}

LandoltDirection parse_landolt(std::string_view text) {
  const std::string t = lower(text);
  if (t == "left") return LandoltDirection::Left;
  if (t == "right") return LandoltDirection::Right;
  if (t == "top" || t == "up") return LandoltDirection::Top;
  if (t == "bottom" || t == "down") return LandoltDirection::Bottom;
  if (t == "timeout" || t == "none" || t.empty()) return LandoltDirection::Timeout;
  throw Error(ErrorCode::Parse, "unknown Landolt direction '" + std::string(text) + "'");
}

}  // namespace vergescope
