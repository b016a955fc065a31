#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace rpo {

// Lowercased maximal runs of alphanumeric bytes. Bytes >= 0x80 are treated
// as word characters so UTF-8 words survive intact.
std::vector<std::string> tokenize(std::string_view text);

std::string_view trim(std::string_view text);
std::string to_lower(std::string_view text);

// Whitespace-separated word count.
std::size_t count_words(std::string_view text);

// 64-bit FNV-1a. Platform independent; used to key mock scripts and to
// fingerprint configs.
std::uint64_t fnv1a64(std::string_view data);
std::string stable_hash(std::string_view data);

}  // namespace rpo
