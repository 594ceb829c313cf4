#pragma once

#include "embinv/types.hpp"

#include <random>
#include <string>

namespace embinv {

enum class DefenseKind { None, Random, LapMech, PurMech };

DefenseKind defense_kind_from_string(const std::string& s);
std::string to_string(DefenseKind k);

/// Embedding protection mechanism applied to victim outputs.
///
/// - Random: per-coordinate gaussian noise, then re-normalized.
/// - LapMech: planar-Laplace style noise, direction uniform on the sphere and
///   magnitude Gamma(d, 1/eps) with eps = eps_per_dim * d, re-normalized.
/// - PurMech: geodesic perturbation by an angle drawn from a density
///   proportional to exp(-eps*theta) * sin^(d-2)(theta) on [0, pi].
struct DefenseSpec {
  DefenseKind kind = DefenseKind::None;
  double eps_per_dim = 1.0;   // required for lapmech/purmech
  double noise_scale = 0.1;   // stddev for the random kind
  std::uint64_t seed = 0;
};

/// Returns the message for the first violated invariant, or nullopt.
std::optional<std::string> defense_error(const DefenseSpec& spec);

/// Applies the mechanism to one embedding. Directional mechanisms normalize
/// the input first and reject zero vectors. The caller owns the RNG stream.
Embedding apply_defense(const DefenseSpec& spec, const Embedding& e, std::mt19937_64& rng);

}  // namespace embinv
