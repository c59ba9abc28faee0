#pragma once

namespace otrecon {
inline constexpr const char* VERSION = "0.1.0";
}
