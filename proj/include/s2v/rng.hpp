#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace s2v {

using Rng = std::mt19937_64;

// Derives an independent stream seed from a root seed and a label
// ("init", "shuffle", "dropout", "synthetic", ...).
std::uint64_t sub_seed(std::uint64_t root, std::string_view label);
std::uint64_t sub_seed(std::uint64_t root, std::string_view label, std::uint64_t index);

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace s2v
