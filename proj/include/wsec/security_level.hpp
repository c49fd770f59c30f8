#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace wsec {

enum class SecurityLevel { None, Auth, AuthEnc };

inline std::string_view to_string(SecurityLevel l) {
    switch (l) {
    case SecurityLevel::None: return "None";
    case SecurityLevel::Auth: return "Auth";
    case SecurityLevel::AuthEnc: return "AuthEnc";
    }
    return "None";
}

inline std::optional<SecurityLevel> parse_security_level(std::string_view s) {
    if (s == "None" || s == "none") return SecurityLevel::None;
    if (s == "Auth" || s == "auth") return SecurityLevel::Auth;
    if (s == "AuthEnc" || s == "authenc") return SecurityLevel::AuthEnc;
    return std::nullopt;
}

} // namespace wsec
