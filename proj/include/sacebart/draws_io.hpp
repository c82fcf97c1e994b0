#pragma once

#include <string>

#include "sacebart/sampler.hpp"

namespace sacebart {

// Columnar draws file: magic "SBDRAWS1", little-endian u64 metadata length,
// metadata JSON (config echo, seed, retained count, convention note), then
// raw column blocks in order: strata (u8), m111 (f64), m110 (f64), sigma2
// (f64, 3 per iteration).  No timestamps: identical runs produce identical
// bytes.
void write_draws(const std::string& path, const PosteriorDraws& draws);
PosteriorDraws read_draws(const std::string& path);

}  // namespace sacebart
