#pragma once

// Constrained systems in Hamilton-Jacobi form: loading, extended
// Hamiltonians H'_a = p_a + H_a, the integrability matrix of extended
// brackets, and the Pfaffian right-hand sides used by the integrator.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hjflow/expr.hpp"

namespace hjflow {

/// Momentum symbol of a coordinate or parameter: "p_" + name.
std::string momentum_of(std::string_view name);

struct SingularExclusion {
  std::string symbol;
  double exclude_abs_below = 0.0;
};

class ConstrainedSystem {
 public:
  /// Validates and builds. The first parameter is the primary one.
  /// Throws SchemaError on naming collisions, missing Hamiltonians, or
  /// Hamiltonians that mention a parameter conjugate or an unknown symbol.
  ConstrainedSystem(std::string name, std::vector<std::string> coordinates,
                    std::vector<std::string> parameters, std::map<std::string, double> constants,
                    Definitions definitions, std::map<std::string, Expr> hamiltonians,
                    std::vector<SingularExclusion> singular = {});

  const std::string& name() const { return name_; }
  const std::vector<std::string>& coordinates() const { return coordinates_; }
  const std::vector<std::string>& parameters() const { return parameters_; }
  const std::map<std::string, double>& constants() const { return constants_; }
  const Definitions& definitions() const { return definitions_; }
  const std::vector<SingularExclusion>& singular() const { return singular_; }

  std::vector<std::string> coordinate_momenta() const;
  std::vector<std::string> parameter_conjugates() const;

  /// H_a as written, before substitution.
  const Expr& raw_hamiltonian(std::string_view parameter) const;
  /// H_a with definitions and constants substituted; depends only on
  /// parameters, coordinates and coordinate momenta.
  const Expr& hamiltonian(std::string_view parameter) const;
  std::size_t parameter_index(std::string_view parameter) const;
  std::size_t coordinate_index(std::string_view coordinate) const;

  /// Substitutes this system's definitions and constants into `e`.
  Expr resolve(const Expr& e) const;

  /// Coordinate pairs followed by parameter pairs.
  ConjugatePairs extended_pairs() const;

  /// Default sampling domain over every phase-space symbol: [-range, range]
  /// with the declared singular exclusions.
  SamplingDomain sampling_domain(double range = 2.0) const;

  /// The system-definition document this system was built from.
  nlohmann::json to_json() const;

 private:
  std::string name_;
  std::vector<std::string> coordinates_;
  std::vector<std::string> parameters_;
  std::map<std::string, double> constants_;
  Definitions definitions_;
  std::vector<Expr> raw_;
  std::vector<Expr> resolved_;
  std::vector<SingularExclusion> singular_;
};

/// Parses a system-definition document. Errors carry the JSON path of the
/// offending entry.
ConstrainedSystem load_system(const nlohmann::json& doc);
ConstrainedSystem load_system_file(const std::string& path);

struct ExtendedHamiltonian {
  std::string parameter;
  Expr expr;
};

std::vector<ExtendedHamiltonian> build_extended_hamiltonians(const ConstrainedSystem& sys);

enum class Classification { AbelianFirstClass, FirstClassOnSurface, NotIntegrable };

std::string_view to_string(Classification c);

struct BracketEntry {
  Expr bracket;
  ZeroVerdict identically;
  ZeroVerdict on_surface;
};

struct IntegrabilityReport {
  std::vector<std::string> parameters;
  /// Row-major, parameters.size() squared entries; (a, b) = {H'_a, H'_b}.
  std::vector<BracketEntry> entries;
  bool antisymmetric = true;
  Classification classification = Classification::AbelianFirstClass;

  std::size_t size() const { return parameters.size(); }
  const BracketEntry& at(std::size_t a, std::size_t b) const { return entries[a * size() + b]; }
};

/// Hook that places a sampled point on the constraint surface by binding
/// every parameter conjugate to -H_a.
BindingHook on_surface_hook(const ConstrainedSystem& sys);

IntegrabilityReport integrability_matrix(const ConstrainedSystem& sys,
                                         const ZeroTestOptions& opts = {});

/// Classification from the verdict flags alone.
Classification classify_flags(const IntegrabilityReport& report);

struct ClassificationSummary {
  Classification classification;
  std::string text;
};

ClassificationSummary classify(const IntegrabilityReport& report);

/// Symbolic partial derivatives of each H'_a used by the Pfaffian system
///   dq = dH'/dp dt,  dp = -dH'/dq dt,  dp_b = -dH'/dt_b dt,
///   dz = (-H + p dH'/dp) dt.
struct PfaffianTerms {
  std::string parameter;
  std::vector<Expr> dq;      // per coordinate
  std::vector<Expr> dp;      // per coordinate momentum
  std::vector<Expr> dconj;   // per parameter conjugate
  Expr action;
};

std::vector<PfaffianTerms> pfaffian_terms(const ConstrainedSystem& sys);

/// Compiled form of pfaffian_terms over the state layout
/// [parameters..., coordinates..., coordinate momenta..., conjugates...].
class PfaffianRhs {
 public:
  explicit PfaffianRhs(const ConstrainedSystem& sys);

  std::size_t n_params() const { return n_params_; }
  std::size_t n_coords() const { return n_coords_; }
  const std::vector<std::string>& slots() const { return slots_; }
  const std::vector<PfaffianTerms>& terms() const { return terms_; }

  /// Adds weight * F_alpha(x) to `dx`, where `dx` has the state layout plus
  /// a trailing action slot. Parameter slots receive weight for alpha.
  void accumulate(std::size_t alpha, double weight, std::span<const double> x,
                  std::span<double> dx) const;

  double hamiltonian(std::size_t alpha, std::span<const double> x) const;
  double extended_hamiltonian(std::size_t alpha, std::span<const double> x) const;

 private:
  std::size_t n_params_;
  std::size_t n_coords_;
  std::vector<std::string> slots_;
  std::vector<PfaffianTerms> terms_;
  struct Compiled {
    std::vector<CompiledExpr> dq, dp, dconj;
    CompiledExpr action;
    CompiledExpr h;
    std::vector<bool> dq_zero, dp_zero, dconj_zero;
    bool action_zero = false;
  };
  std::vector<Compiled> compiled_;
};

}  // namespace hjflow
