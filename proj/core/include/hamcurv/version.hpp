#pragma once

namespace hamcurv {
inline constexpr const char* kVersion = "0.1.0";
}
