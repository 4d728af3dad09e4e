#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace opgeom {

using Rng = std::mt19937_64;

/// Derives an independent generator for one named stream. The stream is a
/// pure function of (seed, path), so e.g. grid cell (s, b, t) can be
/// regenerated without replaying the cells before it.
Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path = {});

}  // namespace opgeom
