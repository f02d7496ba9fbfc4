#pragma once

namespace rtpower {

inline const char* version() {
#ifdef RTPOWER_VERSION
  return RTPOWER_VERSION;
#else
  return "0.1.0";
#endif
}

} // namespace rtpower
