#pragma once

// Relativistic spinless particle in a plane wave travelling along x^3, in
// light-cone variables: coordinates (xp, x1, x2), parameters (tau, xm),
//   H_tau = 0,  H_xm = -((p_x1 + e A1)^2 + (p_x2 + e A2)^2 + m^2) / (2 p_xp).
// Also closed-form oracles, a Legendre-consistency check and fixtures.

#include <array>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "hjflow/flow.hpp"
#include "hjflow/system.hpp"

namespace hjflow::planewave {

enum class PotentialKind { Zero, Cosine, GaussianPulse };

/// One transverse component A_a(xm).
///   cosine:         amplitude * cos(k xm)
///   gaussian pulse: amplitude * exp(-xm^2 / (2 width^2)) * cos(k xm)
/// The pulse is an extension used to exercise localized interactions.
struct PotentialSpec {
  PotentialKind kind = PotentialKind::Zero;
  double amplitude = 0.0;
  double k = 1.0;
  double width = 1.0;

  static PotentialSpec zero() { return {}; }
  static PotentialSpec cosine(double amplitude, double k) {
    return {PotentialKind::Cosine, amplitude, k, 1.0};
  }
  static PotentialSpec pulse(double amplitude, double k, double width) {
    return {PotentialKind::GaussianPulse, amplitude, k, width};
  }

  void validate() const;
  double operator()(double xm) const;
  /// Expression text in the variable `xm`.
  std::string expression() const;
  /// Integral of A and of A^2 over [from, to]; zero and cosine only.
  double integral(double from, double to) const;
  double integral_of_square(double from, double to) const;
};

struct ModelParams {
  double m = 1.0;
  double e = 1.0;
  double pi_plus = -1.0;
  std::array<PotentialSpec, 2> potential{};
  /// |p_xp| below this is treated as singular.
  double exclusion = 0.5;

  void validate() const;
};

ModelParams load_model_params(const nlohmann::json& doc);
nlohmann::json to_json(const ModelParams& params);

/// The system-definition document for these parameters.
nlohmann::json plane_wave_document(const ModelParams& params);
ConstrainedSystem plane_wave_system(const ModelParams& params);

/// On-surface start with p_xp = params.pi_plus and the given transverse data.
PhasePoint initial_point(const ModelParams& params, const ConstrainedSystem& sys, double tau,
                         double xm, std::array<double, 3> coords, std::array<double, 2> p_perp);

/// Exact endpoint of the flow along xm from `initial` to `xm_final`:
/// momenta constant, transverse and xp positions and the action by closed
/// form integrals of A and A^2, p_xm on surface. Throws for pulse potentials.
PhasePoint quadrature_solution(const ModelParams& params, const PhasePoint& initial,
                               double xm_final);

/// Light-cone momenta from velocities of the reparametrization invariant
/// action -m sqrt(2 v+ v- - v_perp^2) - e v_a A_a(xm).
struct LightConeMomenta {
  double pi_plus = 0.0;
  double pi_minus = 0.0;
  std::array<double, 2> pi_perp{};
};

/// Throws PreconditionError outside the timelike domain or for v- = 0.
LightConeMomenta momenta_from_velocities(const ModelParams& params, double xm, double v_plus,
                                         double v_minus, std::array<double, 2> v_perp);

struct LegendreReport {
  int samples = 0;
  double mass_shell = 0.0;       // max |2 pi+ pi- - (pi_a + e A_a)^2 - m^2|, relative
  double velocity_relations = 0.0;  // max residual of v+ and v_a in terms of momenta
  double canonical_hamiltonian = 0.0;  // max |H_tau|, relative to its terms
  double reparametrization = 0.0;  // max momentum change under velocity doubling
  /// Residual of v_a = ((pi_a + e A_a)/pi+) v-, the relation without the minus
  /// sign that the momentum definitions imply. Informational only.
  double unsigned_transverse_relation = 0.0;
  double tol = 1e-10;

  bool passed() const {
    return mass_shell <= tol && velocity_relations <= tol && canonical_hamiltonian <= tol &&
           reparametrization <= tol;
  }
};

LegendreReport verify_legendre(const ModelParams& params, int samples, std::uint64_t seed,
                               double tol = 1e-10);

/// Coordinate q, parameters (tau, s1, s2), H_s1 = p_q^2/2, H_s2 = q^2/2;
/// {H'_s1, H'_s2} = -p_q q. With `restricted`, only (tau, s1).
ConstrainedSystem nonintegrable_fixture(bool restricted = false);
nlohmann::json nonintegrable_document(bool restricted = false);

}  // namespace hjflow::planewave
