#include <string>

#include "flywheel/device.hpp"
#include "flywheel/error.hpp"
#include "flywheel/random.hpp"

namespace flywheel {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNoFeasiblePath: return "NoFeasiblePath";
    case ErrorCode::kUnboundSlot: return "UnboundSlot";
    case ErrorCode::kUnknownEnvironment: return "UnknownEnvironment";
    case ErrorCode::kIllegalAction: return "IllegalAction";
    case ErrorCode::kUndecomposableInstruction: return "UndecomposableInstruction";
    case ErrorCode::kMissingPredicate: return "MissingPredicate";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kCollapsedGroup: return "CollapsedGroup";
    case ErrorCode::kUnknownToken: return "UnknownToken";
    case ErrorCode::kUnencodableText: return "UnencodableText";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kWeightSumInvalid: return "WeightSumInvalid";
    case ErrorCode::kUnplannableInstruction: return "UnplannableInstruction";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

std::uint64_t Rng::uniform_index(std::uint64_t bound) {
  if (bound == 0) throw Error(ErrorCode::kInvalidArgument, "uniform_index bound 0");
  // Rejection sampling on the top of the range keeps the result exactly uniform.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % bound;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view component,
                          std::uint64_t index) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : component) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(global_seed ^ h) + index);
}

std::string_view to_string(DeviceFamily device) {
  switch (device) {
    case DeviceFamily::kMobile: return "mobile";
    case DeviceFamily::kDesktop: return "desktop";
    case DeviceFamily::kWeb: return "web";
  }
  return "unknown";
}

DeviceFamily parse_device(std::string_view name) {
  if (name == "mobile") return DeviceFamily::kMobile;
  if (name == "desktop") return DeviceFamily::kDesktop;
  if (name == "web") return DeviceFamily::kWeb;
  throw Error(ErrorCode::kParseError, "unknown device family '" + std::string(name) + "'");
}

}  // namespace flywheel
