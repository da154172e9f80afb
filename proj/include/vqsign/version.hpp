#ifndef VQSIGN_VERSION_HPP
#define VQSIGN_VERSION_HPP

namespace vqsign {

constexpr const char* kToolVersion = "0.1.0";

}  // namespace vqsign

#endif  // VQSIGN_VERSION_HPP
