#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace twostep {

/// The standard 64-symbol alphabet (A-Z, a-z, 0-9, '+', '/').
inline constexpr std::string_view kBase64Alphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(std::span<const std::uint8_t> data, bool pad = true);

/// Strict decode. Accepts input with or without trailing '=' padding and
/// returns nullopt for anything outside the alphabet or with an impossible
/// length.
std::optional<std::vector<std::uint8_t>> base64_decode(std::string_view text);

/// 6-bit index of an alphabet character, or -1.
int base64_index(char c);

bool is_base64_alphabet(std::string_view text);

}  // namespace twostep
