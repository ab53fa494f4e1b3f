#pragma once

// Multi-parameter integration of the total differential equations of motion
// and the action, path-independence checks, and a gauge-fixed Dirac
// reference integrator.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hjflow/system.hpp"

namespace hjflow {

struct PhasePoint {
  std::vector<double> params;      // t_a
  std::vector<double> coords;      // q_a
  std::vector<double> momenta;     // p_a
  std::vector<double> conjugates;  // p_t for each parameter
  double action = 0.0;             // z

  /// [params, coords, momenta, conjugates] followed by the action.
  std::vector<double> pack() const;
  static PhasePoint unpack(std::span<const double> x, std::size_t n_params, std::size_t n_coords);
};

/// Builds a point with conjugates set to -H_a, i.e. on the constraint surface.
PhasePoint make_on_surface(const ConstrainedSystem& sys, std::vector<double> params,
                           std::vector<double> coords, std::vector<double> momenta,
                           double action = 0.0);

/// |p_a + H_a| per parameter.
std::vector<double> constraint_values(const ConstrainedSystem& sys, const PhasePoint& pt);

class ParameterPath {
 public:
  /// Throws PreconditionError for fewer than two waypoints, a dimension
  /// mismatch, or a path of zero length.
  ParameterPath(std::vector<std::vector<double>> waypoints, std::size_t dimension);

  const std::vector<std::vector<double>>& waypoints() const { return waypoints_; }
  std::size_t segments() const { return waypoints_.size() - 1; }
  double segment_length(std::size_t i) const { return lengths_[i]; }
  /// Euclidean arclength in parameter space.
  double length() const { return total_; }

  /// Steps per segment, proportional to segment length, at least one per
  /// nonzero segment, summing to `steps`.
  std::vector<std::size_t> allocate_steps(std::size_t steps) const;

 private:
  std::vector<std::vector<double>> waypoints_;
  std::vector<double> lengths_;
  double total_ = 0.0;
};

ParameterPath make_path(const ConstrainedSystem& sys, std::vector<std::vector<double>> waypoints);

struct TrajectoryRecord {
  std::vector<double> s;          // arclength fraction of each snapshot
  std::vector<PhasePoint> points;  // steps + 1 snapshots
  /// hprime[k][a] = H'_a at snapshot k.
  std::vector<std::vector<double>> hprime;
  /// Gauge multiplier per snapshot (Dirac runs only).
  std::optional<std::vector<double>> lambda;

  std::size_t steps() const { return points.empty() ? 0 : points.size() - 1; }
  double max_abs_hprime() const;
};

struct IntegrateOptions {
  bool allow_off_surface = false;
  /// Relative on-surface tolerance for the initial point.
  double surface_tol = 1e-12;
};

/// Classical RK4 along the path, pulled back to the arclength parameter.
/// Throws SingularityError when a declared singular symbol falls inside its
/// exclusion or the state becomes non-finite.
TrajectoryRecord integrate(const ConstrainedSystem& sys, const PhasePoint& initial,
                           const ParameterPath& path, std::size_t steps,
                           const IntegrateOptions& opts = {});

struct PathDiscrepancy {
  double max = 0.0;
  std::vector<std::pair<std::string, double>> per_variable;
  PhasePoint end_a;
  PhasePoint end_b;
};

/// Integrates from the same start along both paths (which must share their
/// first and last waypoints) and compares every endpoint component.
PathDiscrepancy path_independence_check(const ConstrainedSystem& sys, const PhasePoint& initial,
                                        const ParameterPath& a, const ParameterPath& b,
                                        std::size_t steps, const IntegrateOptions& opts = {});

/// Names of every state component in pack() order, action last.
std::vector<std::string> state_names(const ConstrainedSystem& sys);

/// Gauge-fixed evolution in the primary parameter tau with total
/// Hamiltonian lambda * constraint, where lambda = -(d gauge/d tau) / {gauge,
/// constraint} is recomputed at every RK stage. Brackets run over the
/// coordinate pairs and the non-primary parameter pairs.
TrajectoryRecord dirac_reference(const ConstrainedSystem& sys, const Expr& constraint,
                                 const Expr& gauge, const PhasePoint& initial, double tau_from,
                                 double tau_to, std::size_t steps);

/// CSV with header s,<t>,<q>,<p>,<p_t>,z,<Hprime_t>[,lambda] and 17
/// significant digits.
void write_trajectory_csv(std::ostream& out, const ConstrainedSystem& sys,
                          const TrajectoryRecord& rec);

struct InitialState {
  PhasePoint point;
  bool conjugates_given = false;
};

/// Reads {"coordinates", "momenta", "parameters", "conjugates" | "on_surface"}.
/// Momenta may be keyed by coordinate name or by momentum symbol.
InitialState load_initial_state(const ConstrainedSystem& sys, const nlohmann::json& doc);

/// Reads {"waypoints": [{parameter: value, ...}, ...]}; every waypoint names
/// every parameter.
ParameterPath load_path(const ConstrainedSystem& sys, const nlohmann::json& doc);

nlohmann::json read_json_file(const std::string& path);

}  // namespace hjflow
