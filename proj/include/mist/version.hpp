#ifndef MIST_VERSION_HPP
#define MIST_VERSION_HPP

namespace mist {
inline constexpr const char* kVersion = "0.1.0";
}

#endif
