#pragma once

// Quantum sector of the plane-wave model on a periodic transverse grid.
// The wavefunction is phi(x_perp; x_-) with the e^{i pi_+ x_+} factor carried
// analytically. Evolution in x_- follows
//   i d phi/d x_- = K phi,  K = -((p + e A(x_-))^2 + m^2) / (2 pi_+).

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hjflow/planewave.hpp"

namespace hjflow::lightcone {

using Complex = std::complex<double>;

struct GridSpec {
  int d = 1;           // transverse dimension, 1 or 2
  std::size_t n = 256;  // points per axis, power of two
  double l = 40.0;      // box length, domain [-l/2, l/2)

  void validate() const;
  double dx() const { return l / static_cast<double>(n); }
  std::size_t size() const { return d == 1 ? n : n * n; }
  double coordinate(std::size_t j) const { return -0.5 * l + dx() * static_cast<double>(j); }
  /// Angular wavenumber of FFT index j (signed ordering).
  double wavenumber(std::size_t j) const;
  double cell() const { return d == 1 ? dx() : dx() * dx(); }
  bool operator==(const GridSpec&) const = default;
};

struct WaveGrid {
  GridSpec grid;
  double x_minus = 0.0;
  double pi_plus = -1.0;
  std::vector<Complex> psi;  // row-major, x1 slowest

  double norm() const;
};

struct PacketSpec {
  std::vector<double> center;
  std::vector<double> width;  // sigma of |psi|^2
  std::vector<double> momentum;
};

/// Normalized exp(-(x-c)^2/(4 sigma^2) + i p x) per axis. Throws
/// ResolutionError when sigma < 4 dx or |p| > (pi/dx)/2.
WaveGrid init_gaussian(const GridSpec& grid, const PacketSpec& packet, double pi_plus,
                       double x_minus = 0.0);

struct Observables {
  double norm = 0.0;
  std::vector<double> mean_x;
  std::vector<double> mean_p;
  std::vector<double> spread_x;
};

Observables observables(const WaveGrid& wave);
/// Norm computed from the spectral coefficients.
double momentum_space_norm(const WaveGrid& wave);

struct ResolutionLimits {
  /// Mass fraction allowed at |p_a| > p_max/2.
  double spectral_tail = 1e-8;
  /// Mass allowed within l/16 of each box edge.
  double boundary_mass = 1e-6;
  /// Largest allowed x_- step times the drive wavenumber (or inverse pulse width).
  double drive_step = 0.7853981633974483;
};

/// Throws ResolutionError naming the violated bound.
void check_resolution(const WaveGrid& wave, const ResolutionLimits& limits);

struct EvolveOptions {
  bool keep_snapshots = false;
  bool check_resolution = true;
  ResolutionLimits limits;
  unsigned threads = 1;
};

struct EvolutionRecord {
  GridSpec grid;
  double pi_plus = 0.0;
  std::vector<double> x_minus;      // steps + 1 values
  std::vector<Observables> observables;
  std::vector<std::vector<Complex>> snapshots;  // empty unless requested
  WaveGrid final;

  double norm_drift() const;
};

/// Spectral evolution from `from` to `to` in `steps` equal steps. The
/// generator is diagonal in momentum space once A is frozen at the step
/// midpoint, so each step is one exact exponential. Uses wave.pi_plus and the
/// mass, charge and potentials of `model`.
EvolutionRecord evolve_splitstep(const WaveGrid& wave, const planewave::ModelParams& model,
                                 double from, double to, std::size_t steps,
                                 const EvolveOptions& opts = {});

struct EhrenfestReport {
  double max_position_deviation = 0.0;
  double max_momentum_deviation = 0.0;
  double norm_drift = 0.0;
  std::vector<double> x_minus;
  std::vector<std::vector<double>> quantum_x;    // [step][axis]
  std::vector<std::vector<double>> classical_x;  // [step][axis]
  EvolutionRecord quantum;
};

/// Runs the quantum evolution and the classical flow from the packet's
/// moments side by side and compares transverse positions and momenta.
EhrenfestReport ehrenfest_compare(const planewave::ModelParams& model, const GridSpec& grid,
                                  const PacketSpec& packet, double from, double to,
                                  std::size_t steps, const EvolveOptions& opts = {});

struct ResidualReport {
  double max = 0.0;
  std::vector<double> per_slice;  // interior snapshots only
};

/// L2 norm of 2 i pi_+ d phi/dx_- + ((p + e A)^2 + m^2) phi on stored
/// snapshots; the x_- derivative by central differences. Uses model.pi_plus.
ResidualReport kg_residual(const EvolutionRecord& record, const planewave::ModelParams& model);

struct KernelMatrix {
  GridSpec grid;
  double x_from = 0.0;
  double delta = 0.0;
  std::size_t slices = 0;
  Eigen::MatrixXcd k;
};

/// Time-sliced phase-space kernel from x_from to x_from + delta. Per slice
/// the momentum integral is done on the grid's momentum lattice with A frozen
/// at the slice midpoint; the normalization is fixed by grid unitarity.
/// Applying to psi means K psi dx. d = 1 only.
KernelMatrix sliced_kernel(const planewave::ModelParams& model, double x_from, double delta,
                           std::size_t slices, const GridSpec& grid);

/// Continuum short-time free kernel sqrt(M/(2 pi i ds)) exp(i M (x-y)^2/(2 ds))
/// with M = -pi_+, times the m^2 phase, sampled on the grid with periodic images of the
/// nearest separation. Throws ResolutionError when the phase between
/// neighbouring points at the box edge reaches pi.
Eigen::MatrixXcd gaussian_free_kernel(const planewave::ModelParams& model, double ds,
                                      const GridSpec& grid);

WaveGrid apply_kernel(const KernelMatrix& kernel, const WaveGrid& wave);

struct QuantumRun {
  planewave::ModelParams model;
  GridSpec grid;
  PacketSpec initial;
  double from = 0.0;
  double to = 1.0;
  std::size_t steps = 1;

  WaveGrid initial_wave() const;
};

QuantumRun load_quantum_run(const nlohmann::json& doc);
nlohmann::json to_json(const QuantumRun& run);

struct KernelStudyRow {
  std::size_t slices = 0;
  double distance = 0.0;
};

struct KernelStudy {
  std::vector<KernelStudyRow> rows;
  std::size_t reference_steps = 0;
  /// Fitted exponent of distance ~ slices^-order; absent with fewer than two
  /// positive distances.
  std::optional<double> order;
  /// Every distance is at or below 1e-6.
  bool exact = false;
};

/// Kernel-applied versus split-step packets for each slice count.
KernelStudy kernel_convergence(const QuantumRun& run, std::span<const std::size_t> slices,
                               const EvolveOptions& opts = {});

/// Least-squares slope of log(error) against log(1/h-like count), negated.
double fitted_order(std::span<const double> counts, std::span<const double> errors);

/// x_minus,norm,mean_x..,mean_p..,spread_x..
void write_observables_csv(std::ostream& out, const EvolutionRecord& record);

/// 32-byte header "HJFLOWWF", int32 d, int32 n, double l, double x_minus, then
/// interleaved little-endian (re, im) doubles.
void write_wavefunction(std::ostream& out, const WaveGrid& wave);
WaveGrid read_wavefunction(std::istream& in, double pi_plus);

/// Version string of the spectral transform library.
std::string fft_library_version();

}  // namespace hjflow::lightcone
