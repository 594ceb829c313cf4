#include "embinv/defense.hpp"

#include <cmath>

namespace embinv {

namespace {

constexpr double kTinyNorm = 1e-12;

Embedding gaussian_vector(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Embedding v(dim);
  for (int i = 0; i < dim; ++i) v[i] = gauss(rng);
  return v;
}

Embedding uniform_sphere(int dim, std::mt19937_64& rng) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    Embedding v = gaussian_vector(dim, rng);
    double n = v.norm();
    if (n > kTinyNorm) return v / n;
  }
  throw std::runtime_error("failed to sample a sphere direction");
}

// Unit direction orthogonal to the unit vector axis.
Embedding uniform_tangent(const Embedding& axis, std::mt19937_64& rng) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    Embedding v = gaussian_vector(static_cast<int>(axis.size()), rng);
    v -= axis.dot(v) * axis;
    double n = v.norm();
    if (n > kTinyNorm) return v / n;
  }
  throw std::runtime_error("failed to sample a tangent direction");
}

// Density on [0, pi] proportional to exp(-eps*theta) * sin^(d-2)(theta).
double sample_geodesic_angle(double eps, int dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (dim == 2) {
    // exp(-eps*theta) alone: exact inverse-CDF draw.
    double u = unif(rng);
    return -std::log1p(-u * (1.0 - std::exp(-eps * M_PI))) / eps;
  }
  double shape = static_cast<double>(dim - 2);
  double mode = std::atan2(shape, eps);
  double log_max = -eps * mode + shape * std::log(std::sin(mode));
  for (int attempt = 0; attempt < 100000; ++attempt) {
    double theta = unif(rng) * M_PI;
    double s = std::sin(theta);
    if (s <= 0.0) continue;
    double log_f = -eps * theta + shape * std::log(s);
    if (std::log(unif(rng)) <= log_f - log_max) return theta;
  }
  return mode;  // acceptance rate is far above the cap for any tested budget
}

Embedding unit_or_throw(const Embedding& e, const char* mech) {
  double n = e.norm();
  if (n <= kTinyNorm) {
    throw std::invalid_argument(std::string(mech) + " requires a non-zero embedding");
  }
  return e / n;
}

}  // namespace

DefenseKind defense_kind_from_string(const std::string& s) {
  if (s == "none") return DefenseKind::None;
  if (s == "random") return DefenseKind::Random;
  if (s == "lapmech") return DefenseKind::LapMech;
  if (s == "purmech") return DefenseKind::PurMech;
  throw std::invalid_argument("unknown defense kind: " + s);
}

std::string to_string(DefenseKind k) {
  switch (k) {
    case DefenseKind::None: return "none";
    case DefenseKind::Random: return "random";
    case DefenseKind::LapMech: return "lapmech";
    case DefenseKind::PurMech: return "purmech";
  }
  return "none";
}

std::optional<std::string> defense_error(const DefenseSpec& spec) {
  if (spec.kind == DefenseKind::Random && !(spec.noise_scale > 0.0)) {
    return "noise_scale must be positive";
  }
  if ((spec.kind == DefenseKind::LapMech || spec.kind == DefenseKind::PurMech) &&
      !(spec.eps_per_dim > 0.0)) {
    return "eps_per_dim must be positive";
  }
  return std::nullopt;
}

Embedding apply_defense(const DefenseSpec& spec, const Embedding& e, std::mt19937_64& rng) {
  if (auto err = defense_error(spec)) throw std::invalid_argument(*err);
  int dim = static_cast<int>(e.size());
  switch (spec.kind) {
    case DefenseKind::None:
      return e;
    case DefenseKind::Random: {
      std::normal_distribution<double> gauss(0.0, spec.noise_scale);
      Embedding out = e;
      for (int i = 0; i < dim; ++i) out[i] += gauss(rng);
      double n = out.norm();
      if (n <= kTinyNorm) return uniform_sphere(dim, rng);
      return out / n;
    }
    case DefenseKind::LapMech: {
      Embedding unit = unit_or_throw(e, "lapmech");
      double eps = spec.eps_per_dim * dim;
      std::gamma_distribution<double> magnitude(static_cast<double>(dim), 1.0 / eps);
      Embedding out = unit + magnitude(rng) * uniform_sphere(dim, rng);
      double n = out.norm();
      if (n <= kTinyNorm) return uniform_sphere(dim, rng);
      return out / n;
    }
    case DefenseKind::PurMech: {
      if (dim < 2) throw std::invalid_argument("purmech requires dimension >= 2");
      Embedding unit = unit_or_throw(e, "purmech");
      double eps = spec.eps_per_dim * dim;
      double theta = sample_geodesic_angle(eps, dim, rng);
      Embedding tangent = uniform_tangent(unit, rng);
      return std::cos(theta) * unit + std::sin(theta) * tangent;
    }
  }
  return e;
}

}  // namespace embinv
