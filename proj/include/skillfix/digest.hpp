#ifndef SKILLFIX_DIGEST_HPP
#define SKILLFIX_DIGEST_HPP

#include <string>
#include <string_view>

namespace skillfix {

// Name of the digest algorithm backing all state and trace digests.
// Recorded in trace headers so exported files are self-describing.
inline constexpr const char* kDigestAlgorithm = "sha256";

// Hex-encoded SHA-256 of the input bytes.
std::string sha256_hex(std::string_view bytes);

}  // namespace skillfix

#endif
