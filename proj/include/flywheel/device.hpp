#pragma once

#include <array>
#include <string_view>

namespace flywheel {

enum class DeviceFamily { kMobile = 0, kDesktop = 1, kWeb = 2 };

inline constexpr std::array<DeviceFamily, 3> kAllDevices = {
    DeviceFamily::kMobile, DeviceFamily::kDesktop, DeviceFamily::kWeb};

std::string_view to_string(DeviceFamily device);

// Throws Error(kParseError) for anything outside {mobile, desktop, web}.
DeviceFamily parse_device(std::string_view name);

}  // namespace flywheel
