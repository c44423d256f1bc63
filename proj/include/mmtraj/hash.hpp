#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace mmtraj {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::span<const double> values, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace mmtraj
