#include "hjflow/lightcone.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <istream>
#include <mutex>
#include <numbers>
#include <ostream>
#include <thread>

#include <fftw3.h>

#include "hjflow/error.hpp"
#include "hjflow/flow.hpp"

namespace hjflow::lightcone {

static_assert(std::endian::native == std::endian::little, "wavefunction dumps assume little endian");

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// In-place transforms through an FFTW-owned buffer; forward is unnormalized,
// backward divides by the point count.
class Spectral {
 public:
  explicit Spectral(const GridSpec& g) : size_(g.size()) {
    buf_ = fftw_alloc_complex(size_);
    const int n = static_cast<int>(g.n);
    const int dims[2] = {n, n};
    std::lock_guard lock(planner_mutex());
    fwd_ = fftw_plan_dft(g.d, dims, buf_, buf_, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft(g.d, dims, buf_, buf_, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  Spectral(const Spectral&) = delete;
  Spectral& operator=(const Spectral&) = delete;
  ~Spectral() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(buf_);
  }

  void forward(std::vector<Complex>& data) { run(fwd_, data, 1.0); }
  void backward(std::vector<Complex>& data) { run(bwd_, data, 1.0 / static_cast<double>(size_)); }

 private:
  void run(fftw_plan plan, std::vector<Complex>& data, double scale) {
    std::memcpy(buf_, data.data(), size_ * sizeof(fftw_complex));
    fftw_execute(plan);
    const auto* out = reinterpret_cast<const Complex*>(buf_);
    for (std::size_t i = 0; i < size_; ++i) data[i] = out[i] * scale;
  }

  std::size_t size_;
  fftw_complex* buf_;
  fftw_plan fwd_;
  fftw_plan bwd_;
};

template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
  if (threads <= 1 || n < 4096) {
    body(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t lo = t * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

// Axis-a index of flat index i (row-major, axis 0 slowest).
std::size_t axis_index(const GridSpec& g, std::size_t i, int a) {
  if (g.d == 1) return i;
  return a == 0 ? i / g.n : i % g.n;
}

double kinetic_q(const GridSpec& g, std::size_t i, const double* shift, double m) {
  double q = m * m;
  for (int a = 0; a < g.d; ++a) {
    const double p = g.wavenumber(axis_index(g, i, a)) + shift[a];
    q += p * p;
  }
  return q;
}

Observables observables_from(const GridSpec& g, const std::vector<Complex>& psi,
                             const std::vector<Complex>& spectrum) {
  Observables o;
  const auto d = static_cast<std::size_t>(g.d);
  o.mean_x.assign(d, 0.0);
  o.mean_p.assign(d, 0.0);
  o.spread_x.assign(d, 0.0);
  std::vector<double> second(d, 0.0);
  double mass = 0.0;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const double w = std::norm(psi[i]);
    mass += w;
    for (std::size_t a = 0; a < d; ++a) {
      const double x = g.coordinate(axis_index(g, i, static_cast<int>(a)));
      o.mean_x[a] += w * x;
      second[a] += w * x * x;
    }
  }
  double spec_mass = 0.0;
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    const double w = std::norm(spectrum[i]);
    spec_mass += w;
    for (std::size_t a = 0; a < d; ++a) {
      o.mean_p[a] += w * g.wavenumber(axis_index(g, i, static_cast<int>(a)));
    }
  }
  o.norm = mass * g.cell();
  for (std::size_t a = 0; a < d; ++a) {
    if (mass > 0.0) {
      o.mean_x[a] /= mass;
      second[a] /= mass;
      o.spread_x[a] = std::sqrt(std::max(0.0, second[a] - o.mean_x[a] * o.mean_x[a]));
    }
    if (spec_mass > 0.0) o.mean_p[a] /= spec_mass;
  }
  return o;
}

void check_spectrum(const GridSpec& g, const std::vector<Complex>& spectrum, double limit,
                    double x_minus) {
  const double edge = 0.5 * std::numbers::pi / g.dx();
  double total = 0.0;
  double tail = 0.0;
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    const double w = std::norm(spectrum[i]);
    total += w;
    for (int a = 0; a < g.d; ++a) {
      if (std::abs(g.wavenumber(axis_index(g, i, a))) > edge) {
        tail += w;
        break;
      }
    }
  }
  const double frac = total > 0.0 ? tail / total : 0.0;
  if (frac > limit) {
    char msg[160];
    std::snprintf(msg, sizeof msg, "spectral tail mass %.3g exceeds %.3g at x_minus=%.6g", frac,
                  limit, x_minus);
    throw ResolutionError(msg);
  }
}

void check_boundary(const GridSpec& g, const std::vector<Complex>& psi, double limit,
                    double x_minus) {
  const double band = g.l / 16.0;
  double mass = 0.0;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    for (int a = 0; a < g.d; ++a) {
      const double x = g.coordinate(axis_index(g, i, a));
      if (x < -0.5 * g.l + band || x >= 0.5 * g.l - band) {
        mass += std::norm(psi[i]);
        break;
      }
    }
  }
  mass *= g.cell();
  if (mass > limit) {
    char msg[160];
    std::snprintf(msg, sizeof msg, "boundary mass %.3g exceeds %.3g at x_minus=%.6g", mass, limit,
                  x_minus);
    throw ResolutionError(msg);
  }
}

void check_drive(const planewave::ModelParams& model, int d, double h, double limit) {
  for (int a = 0; a < d; ++a) {
    const auto& pot = model.potential[static_cast<std::size_t>(a)];
    if (pot.kind == planewave::PotentialKind::Zero || pot.amplitude == 0.0 || model.e == 0.0) {
      continue;
    }
    double rate = pot.k;
    if (pot.kind == planewave::PotentialKind::GaussianPulse) rate = std::max(rate, 1.0 / pot.width);
    if (std::abs(h) * rate > limit) {
      char msg[160];
      std::snprintf(msg, sizeof msg,
                    "x_minus step %.6g does not resolve the drive: step*rate %.3g exceeds %.3g", h,
                    std::abs(h) * rate, limit);
      throw ResolutionError(msg);
    }
  }
}

std::vector<double> field_at(const planewave::ModelParams& model, int d, double xm) {
  std::vector<double> shift(static_cast<std::size_t>(d));
  for (int a = 0; a < d; ++a) shift[static_cast<std::size_t>(a)] = model.e * model.potential[static_cast<std::size_t>(a)](xm);
  return shift;
}

std::vector<double> read_vector(const nlohmann::json& v, const std::string& path, int d) {
  if (!v.is_array() || static_cast<int>(v.size()) != d) {
    throw SchemaError(path + ": expected an array of " + std::to_string(d) + " numbers");
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw SchemaError(path + "[" + std::to_string(i) + "]: expected a number");
    out.push_back(v[i].get<double>());
  }
  return out;
}

void reject_unknown(const nlohmann::json& obj, const std::string& path,
                    std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw SchemaError(path + ": expected an object");
  for (const auto& [k, v] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw SchemaError(path + ": unexpected key '" + k + "'");
    }
  }
}

const nlohmann::json& need(const nlohmann::json& obj, const char* key, const std::string& path) {
  if (!obj.contains(key)) throw SchemaError(path + "." + key + ": missing");
  return obj[key];
}

double need_number(const nlohmann::json& obj, const char* key, const std::string& path) {
  const auto& v = need(obj, key, path);
  if (!v.is_number()) throw SchemaError(path + "." + key + ": expected a number");
  return v.get<double>();
}

std::int64_t need_integer(const nlohmann::json& obj, const char* key, const std::string& path) {
  const auto& v = need(obj, key, path);
  if (!v.is_number_integer()) throw SchemaError(path + "." + key + ": expected an integer");
  return v.get<std::int64_t>();
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void GridSpec::validate() const {
  if (d != 1 && d != 2) throw SchemaError("grid dimension must be 1 or 2");
  if (n < 4 || !std::has_single_bit(n)) throw SchemaError("grid point count must be a power of two >= 4");
  if (!(l > 0.0) || !std::isfinite(l)) throw SchemaError("box length must be positive");
}

double GridSpec::wavenumber(std::size_t j) const {
  const auto signed_j = j < n / 2 ? static_cast<double>(j)
                                  : static_cast<double>(j) - static_cast<double>(n);
  return 2.0 * std::numbers::pi / l * signed_j;
}

double WaveGrid::norm() const {
  double s = 0.0;
  for (const auto& c : psi) s += std::norm(c);
  return s * grid.cell();
}

WaveGrid init_gaussian(const GridSpec& grid, const PacketSpec& packet, double pi_plus,
                       double x_minus) {
  grid.validate();
  const auto d = static_cast<std::size_t>(grid.d);
  if (packet.center.size() != d || packet.width.size() != d || packet.momentum.size() != d) {
    throw SchemaError("packet center, width and momentum need one entry per transverse axis");
  }
  if (!std::isfinite(pi_plus) || pi_plus == 0.0) throw SchemaError("pi_plus must be nonzero");
  const double dx = grid.dx();
  const double p_limit = 0.5 * std::numbers::pi / dx;
  for (std::size_t a = 0; a < d; ++a) {
    if (!(packet.width[a] > 0.0)) throw SchemaError("packet width must be positive");
    if (packet.width[a] < 4.0 * dx) {
      throw ResolutionError("packet width " + fmt(packet.width[a]) + " is below 4*dx = " +
                            fmt(4.0 * dx));
    }
    if (std::abs(packet.momentum[a]) > p_limit) {
      throw ResolutionError("packet momentum " + fmt(packet.momentum[a]) +
                            " exceeds (pi/dx)/2 = " + fmt(p_limit));
    }
    if (std::abs(packet.center[a]) >= 0.5 * grid.l) {
      throw ResolutionError("packet center " + fmt(packet.center[a]) + " lies outside the box");
    }
  }
  WaveGrid w;
  w.grid = grid;
  w.x_minus = x_minus;
  w.pi_plus = pi_plus;
  w.psi.resize(grid.size());
  for (std::size_t i = 0; i < w.psi.size(); ++i) {
    double re = 0.0;
    double ph = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      const double x = grid.coordinate(axis_index(grid, i, static_cast<int>(a)));
      const double u = x - packet.center[a];
      re -= u * u / (4.0 * packet.width[a] * packet.width[a]);
      ph += packet.momentum[a] * x;
    }
    w.psi[i] = std::polar(std::exp(re), ph);
  }
  const double scale = 1.0 / std::sqrt(w.norm());
  for (auto& c : w.psi) c *= scale;
  return w;
}

Observables observables(const WaveGrid& wave) {
  Spectral fft(wave.grid);
  auto spectrum = wave.psi;
  fft.forward(spectrum);
  return observables_from(wave.grid, wave.psi, spectrum);
}

double momentum_space_norm(const WaveGrid& wave) {
  Spectral fft(wave.grid);
  auto spectrum = wave.psi;
  fft.forward(spectrum);
  double s = 0.0;
  for (const auto& c : spectrum) s += std::norm(c);
  // Parseval for the unnormalized DFT: sum |psi|^2 = sum |psi_hat|^2 / size
  return s / static_cast<double>(wave.grid.size()) * wave.grid.cell();
}

void check_resolution(const WaveGrid& wave, const ResolutionLimits& limits) {
  Spectral fft(wave.grid);
  auto spectrum = wave.psi;
  fft.forward(spectrum);
  check_spectrum(wave.grid, spectrum, limits.spectral_tail, wave.x_minus);
  check_boundary(wave.grid, wave.psi, limits.boundary_mass, wave.x_minus);
}

double EvolutionRecord::norm_drift() const {
  double drift = 0.0;
  if (observables.empty()) return drift;
  const double start = observables.front().norm;
  for (const auto& o : observables) drift = std::max(drift, std::abs(o.norm - start));
  return drift;
}

EvolutionRecord evolve_splitstep(const WaveGrid& wave, const planewave::ModelParams& model,
                                 double from, double to, std::size_t steps,
                                 const EvolveOptions& opts) {
  const GridSpec& g = wave.grid;
  g.validate();
  if (steps < 1) throw PreconditionError("evolution needs at least one step");
  if (!std::isfinite(from) || !std::isfinite(to)) throw PreconditionError("x_minus range must be finite");
  if (wave.psi.size() != g.size()) throw PreconditionError("amplitude array does not match the grid");
  if (std::abs(wave.x_minus - from) > 1e-12 * (1.0 + std::abs(from))) {
    throw PreconditionError("wavefunction is at x_minus=" + fmt(wave.x_minus) +
                            ", evolution starts at " + fmt(from));
  }
  if (std::abs(wave.norm() - 1.0) > 1e-12) {
    throw PreconditionError("input wavefunction is not normalized (norm " + fmt(wave.norm()) + ")");
  }
  if (!std::isfinite(wave.pi_plus) || wave.pi_plus == 0.0) {
    throw PreconditionError("pi_plus must be nonzero");
  }
  const double h = (to - from) / static_cast<double>(steps);
  if (opts.check_resolution) {
    check_drive(model, g.d, h, opts.limits.drive_step);
    check_resolution(wave, opts.limits);
  }

  Spectral fft(g);
  EvolutionRecord rec;
  rec.grid = g;
  rec.pi_plus = wave.pi_plus;
  rec.x_minus.reserve(steps + 1);
  rec.observables.reserve(steps + 1);

  std::vector<Complex> psi = wave.psi;
  std::vector<Complex> spectrum = psi;
  fft.forward(spectrum);
  rec.x_minus.push_back(from);
  rec.observables.push_back(observables_from(g, psi, spectrum));
  if (opts.keep_snapshots) rec.snapshots.push_back(psi);

  const double factor = h / (2.0 * wave.pi_plus);
  for (std::size_t s = 0; s < steps; ++s) {
    const double mid = from + (to - from) * (static_cast<double>(s) + 0.5) / static_cast<double>(steps);
    const auto shift = field_at(model, g.d, mid);
    spectrum = psi;
    fft.forward(spectrum);
    if (opts.check_resolution) {
      check_spectrum(g, spectrum, opts.limits.spectral_tail, rec.x_minus.back());
    }
    parallel_for(spectrum.size(), opts.threads, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        spectrum[i] *= std::polar(1.0, kinetic_q(g, i, shift.data(), model.m) * factor);
      }
    });
    psi = spectrum;
    fft.backward(psi);
    const double xm = from + (to - from) * static_cast<double>(s + 1) / static_cast<double>(steps);
    for (const auto& c : psi) {
      if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) {
        throw ResolutionError("non-finite amplitude at x_minus=" + fmt(xm));
      }
    }
    if (opts.check_resolution) check_boundary(g, psi, opts.limits.boundary_mass, xm);
    rec.x_minus.push_back(xm);
    rec.observables.push_back(observables_from(g, psi, spectrum));
    if (opts.keep_snapshots) rec.snapshots.push_back(psi);
  }

  rec.final.grid = g;
  rec.final.x_minus = to;
  rec.final.pi_plus = wave.pi_plus;
  rec.final.psi = std::move(psi);
  return rec;
}

EhrenfestReport ehrenfest_compare(const planewave::ModelParams& model, const GridSpec& grid,
                                  const PacketSpec& packet, double from, double to,
                                  std::size_t steps, const EvolveOptions& opts) {
  model.validate();
  const auto wave = init_gaussian(grid, packet, model.pi_plus, from);
  EhrenfestReport rep;
  rep.quantum = evolve_splitstep(wave, model, from, to, steps, opts);
  rep.norm_drift = rep.quantum.norm_drift();

  const auto& start = rep.quantum.observables.front();
  const auto sys = planewave::plane_wave_system(model);
  std::array<double, 3> coords{0.0, 0.0, 0.0};
  std::array<double, 2> p_perp{0.0, 0.0};
  for (int a = 0; a < grid.d; ++a) {
    coords[static_cast<std::size_t>(a) + 1] = start.mean_x[static_cast<std::size_t>(a)];
    p_perp[static_cast<std::size_t>(a)] = start.mean_p[static_cast<std::size_t>(a)];
  }
  const auto initial = planewave::initial_point(model, sys, 0.0, from, coords, p_perp);
  const auto path = make_path(sys, {{0.0, from}, {0.0, to}});
  const auto classical = integrate(sys, initial, path, steps);

  const auto d = static_cast<std::size_t>(grid.d);
  for (std::size_t s = 0; s <= steps; ++s) {
    const auto& q = rep.quantum.observables[s];
    const auto& c = classical.points[s];
    std::vector<double> qx(d), cx(d);
    for (std::size_t a = 0; a < d; ++a) {
      qx[a] = q.mean_x[a];
      cx[a] = c.coords[a + 1];
      rep.max_position_deviation = std::max(rep.max_position_deviation, std::abs(qx[a] - cx[a]));
      rep.max_momentum_deviation =
          std::max(rep.max_momentum_deviation, std::abs(q.mean_p[a] - c.momenta[a + 1]));
    }
    rep.x_minus.push_back(rep.quantum.x_minus[s]);
    rep.quantum_x.push_back(std::move(qx));
    rep.classical_x.push_back(std::move(cx));
  }
  return rep;
}

ResidualReport kg_residual(const EvolutionRecord& record, const planewave::ModelParams& model) {
  const auto& snaps = record.snapshots;
  if (snaps.size() < 3) throw PreconditionError("residual needs at least 3 stored slices");
  if (snaps.size() != record.x_minus.size()) {
    throw PreconditionError("snapshots do not match the recorded x_minus values");
  }
  const GridSpec& g = record.grid;
  Spectral fft(g);
  ResidualReport rep;
  std::vector<Complex> work;
  for (std::size_t k = 1; k + 1 < snaps.size(); ++k) {
    const double span = record.x_minus[k + 1] - record.x_minus[k - 1];
    const auto shift = field_at(model, g.d, record.x_minus[k]);
    work = snaps[k];
    fft.forward(work);
    for (std::size_t i = 0; i < work.size(); ++i) work[i] *= kinetic_q(g, i, shift.data(), model.m);
    fft.backward(work);
    double sum = 0.0;
    for (std::size_t i = 0; i < work.size(); ++i) {
      const Complex deriv = (snaps[k + 1][i] - snaps[k - 1][i]) / span;
      const Complex r = Complex(0.0, 2.0 * model.pi_plus) * deriv + work[i];
      sum += std::norm(r);
    }
    const double l2 = std::sqrt(sum * g.cell());
    rep.per_slice.push_back(l2);
    rep.max = std::max(rep.max, l2);
  }
  return rep;
}

KernelMatrix sliced_kernel(const planewave::ModelParams& model, double x_from, double delta,
                           std::size_t slices, const GridSpec& grid) {
  grid.validate();
  if (grid.d != 1) throw PreconditionError("kernel supports d=1 only");
  if (slices < 1) throw PreconditionError("kernel needs at least one slice");
  if (!std::isfinite(delta) || !std::isfinite(x_from)) throw PreconditionError("kernel range must be finite");
  model.validate();
  const std::size_t n = grid.n;
  const double dx = grid.dx();
  const double ds = delta / static_cast<double>(slices);
  const double beta = ds / (2.0 * model.pi_plus);

  fftw_complex* buf = fftw_alloc_complex(n);
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  auto* data = reinterpret_cast<Complex*>(buf);

  KernelMatrix out;
  out.grid = grid;
  out.x_from = x_from;
  out.delta = delta;
  out.slices = slices;
  Eigen::MatrixXcd slice(n, n);
  for (std::size_t s = 0; s < slices; ++s) {
    const double mid = x_from + delta * (static_cast<double>(s) + 0.5) / static_cast<double>(slices);
    const double shift = model.e * model.potential[0](mid);
    for (std::size_t j = 0; j < n; ++j) {
      const double p = grid.wavenumber(j) + shift;
      data[j] = std::polar(1.0, beta * (p * p + model.m * model.m));
    }
    fftw_execute(plan);
    // K(x_i, x_l) = (1/l) sum_k exp(i p_k (x_i - x_l)) phase_k depends on i - l only
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t l = 0; l < n; ++l) {
        slice(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) =
            data[(i + n - l) % n] / grid.l;
      }
    }
    if (s == 0) {
      out.k = slice;
    } else {
      out.k = (slice * out.k) * dx;
    }
  }
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);
  if (!out.k.allFinite()) throw ResolutionError("kernel has non-finite entries");
  return out;
}

Eigen::MatrixXcd gaussian_free_kernel(const planewave::ModelParams& model, double ds,
                                      const GridSpec& grid) {
  grid.validate();
  if (grid.d != 1) throw PreconditionError("kernel supports d=1 only");
  if (!(ds != 0.0) || !std::isfinite(ds)) throw PreconditionError("slice width must be nonzero");
  const double mass = -model.pi_plus;
  const double dx = grid.dx();
  const double edge_phase = std::abs(mass) * 0.5 * grid.l * dx / std::abs(ds);
  if (edge_phase >= std::numbers::pi) {
    throw ResolutionError("free-kernel phase step " + fmt(edge_phase) +
                          " between neighbouring points at the box edge reaches pi; slice width " +
                          fmt(ds) + " is too short for this grid");
  }
  const double sign = mass * ds > 0.0 ? 1.0 : -1.0;
  const Complex prefactor =
      std::sqrt(std::abs(mass / ds) / (2.0 * std::numbers::pi)) * std::polar(1.0, -sign * std::numbers::pi / 4.0) *
      std::polar(1.0, model.m * model.m * ds / (2.0 * model.pi_plus));
  const auto n = static_cast<Eigen::Index>(grid.n);
  Eigen::MatrixXcd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double sep = static_cast<double>(i - j) * dx;
      sep -= grid.l * std::round(sep / grid.l);
      k(i, j) = prefactor * std::polar(1.0, mass * sep * sep / (2.0 * ds));
    }
  }
  return k;
}

WaveGrid apply_kernel(const KernelMatrix& kernel, const WaveGrid& wave) {
  if (!(kernel.grid == wave.grid)) throw PreconditionError("kernel and wavefunction grids differ");
  const auto n = static_cast<Eigen::Index>(wave.psi.size());
  Eigen::Map<const Eigen::VectorXcd> in(wave.psi.data(), n);
  Eigen::VectorXcd res = kernel.k * in * wave.grid.dx();
  WaveGrid out = wave;
  out.x_minus = wave.x_minus + kernel.delta;
  out.psi.assign(res.data(), res.data() + n);
  return out;
}

WaveGrid QuantumRun::initial_wave() const { return init_gaussian(grid, initial, model.pi_plus, from); }

QuantumRun load_quantum_run(const nlohmann::json& doc) {
  reject_unknown(doc, "run", {"model", "grid", "initial", "range", "steps"});
  QuantumRun run;
  try {
    run.model = planewave::load_model_params(need(doc, "model", "run"));
  } catch (const SchemaError& e) {
    throw SchemaError(std::string("run.") + e.what());
  }
  const auto& g = need(doc, "grid", "run");
  reject_unknown(g, "run.grid", {"d", "n", "l"});
  const auto d = need_integer(g, "d", "run.grid");
  const auto n = need_integer(g, "n", "run.grid");
  if (d != 1 && d != 2) throw SchemaError("run.grid.d: must be 1 or 2");
  if (n < 4 || !std::has_single_bit(static_cast<std::uint64_t>(n))) {
    throw SchemaError("run.grid.n: must be a power of two >= 4");
  }
  run.grid.d = static_cast<int>(d);
  run.grid.n = static_cast<std::size_t>(n);
  run.grid.l = need_number(g, "l", "run.grid");
  if (!(run.grid.l > 0.0)) throw SchemaError("run.grid.l: must be positive");

  const auto& init = need(doc, "initial", "run");
  reject_unknown(init, "run.initial", {"center", "width", "momentum"});
  run.initial.center = read_vector(need(init, "center", "run.initial"), "run.initial.center", run.grid.d);
  run.initial.width = read_vector(need(init, "width", "run.initial"), "run.initial.width", run.grid.d);
  run.initial.momentum =
      read_vector(need(init, "momentum", "run.initial"), "run.initial.momentum", run.grid.d);
  for (double w : run.initial.width) {
    if (!(w > 0.0)) throw SchemaError("run.initial.width: entries must be positive");
  }

  const auto& range = need(doc, "range", "run");
  reject_unknown(range, "run.range", {"from", "to"});
  run.from = need_number(range, "from", "run.range");
  run.to = need_number(range, "to", "run.range");
  if (run.from == run.to) throw SchemaError("run.range: from and to must differ");
  const auto steps = need_integer(doc, "steps", "run");
  if (steps < 1) throw SchemaError("run.steps: must be at least 1");
  run.steps = static_cast<std::size_t>(steps);
  return run;
}

nlohmann::json to_json(const QuantumRun& run) {
  return {
      {"model", planewave::to_json(run.model)},
      {"grid", {{"d", run.grid.d}, {"n", run.grid.n}, {"l", run.grid.l}}},
      {"initial",
       {{"center", run.initial.center}, {"width", run.initial.width}, {"momentum", run.initial.momentum}}},
      {"range", {{"from", run.from}, {"to", run.to}}},
      {"steps", run.steps},
  };
}

double fitted_order(std::span<const double> counts, std::span<const double> errors) {
  if (counts.size() != errors.size() || counts.size() < 2) {
    throw PreconditionError("order fit needs at least two (count, error) pairs");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto n = static_cast<double>(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (!(counts[i] > 0.0) || !(errors[i] > 0.0)) throw PreconditionError("order fit needs positive values");
    const double x = std::log(counts[i]);
    const double y = std::log(errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw PreconditionError("order fit needs distinct counts");
  return -(n * sxy - sx * sy) / denom;
}

KernelStudy kernel_convergence(const QuantumRun& run, std::span<const std::size_t> slices,
                               const EvolveOptions& opts) {
  if (run.grid.d != 1) throw PreconditionError("kernel supports d=1 only");
  if (slices.empty()) throw PreconditionError("no slice counts given");
  for (auto s : slices) {
    if (s < 1) throw PreconditionError("slice counts must be positive");
  }
  const auto wave = run.initial_wave();
  KernelStudy study;
  const std::size_t most = *std::max_element(slices.begin(), slices.end());
  study.reference_steps = std::max(run.steps, 16 * most);
  EvolveOptions ref_opts = opts;
  ref_opts.keep_snapshots = false;
  const auto reference = evolve_splitstep(wave, run.model, run.from, run.to, study.reference_steps, ref_opts);
  const auto& target = reference.final.psi;

  std::vector<double> counts, errors;
  double worst = 0.0;
  for (auto s : slices) {
    const auto kernel = sliced_kernel(run.model, run.from, run.to - run.from, s, run.grid);
    const auto out = apply_kernel(kernel, wave);
    double sum = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) sum += std::norm(out.psi[i] - target[i]);
    const double dist = std::sqrt(sum * run.grid.dx());
    study.rows.push_back({s, dist});
    worst = std::max(worst, dist);
    if (dist > 0.0) {
      counts.push_back(static_cast<double>(s));
      errors.push_back(dist);
    }
  }
  study.exact = worst <= 1e-6;
  bool distinct = false;
  for (std::size_t i = 1; i < counts.size(); ++i) distinct = distinct || counts[i] != counts[0];
  if (counts.size() >= 2 && distinct) study.order = fitted_order(counts, errors);
  return study;
}

void write_observables_csv(std::ostream& out, const EvolutionRecord& record) {
  const int d = record.grid.d;
  out << "x_minus,norm";
  for (const char* kind : {"mean_x", "mean_p", "spread_x"}) {
    for (int a = 1; a <= d; ++a) out << ',' << kind << a;
  }
  out << '\n';
  for (std::size_t s = 0; s < record.observables.size(); ++s) {
    const auto& o = record.observables[s];
    out << fmt(record.x_minus[s]) << ',' << fmt(o.norm);
    for (const auto* v : {&o.mean_x, &o.mean_p, &o.spread_x}) {
      for (double x : *v) out << ',' << fmt(x);
    }
    out << '\n';
  }
}

void write_wavefunction(std::ostream& out, const WaveGrid& wave) {
  const std::int32_t d = wave.grid.d;
  const std::int32_t n = static_cast<std::int32_t>(wave.grid.n);
  out.write("HJFLOWWF", 8);
  out.write(reinterpret_cast<const char*>(&d), sizeof d);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(&wave.grid.l), sizeof(double));
  out.write(reinterpret_cast<const char*>(&wave.x_minus), sizeof(double));
  for (const auto& c : wave.psi) {
    const double parts[2] = {c.real(), c.imag()};
    out.write(reinterpret_cast<const char*>(parts), sizeof parts);
  }
  if (!out) throw Error("failed to write wavefunction dump");
}

WaveGrid read_wavefunction(std::istream& in, double pi_plus) {
  char magic[8];
  std::int32_t d = 0, n = 0;
  WaveGrid w;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&d), sizeof d);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  in.read(reinterpret_cast<char*>(&w.grid.l), sizeof(double));
  in.read(reinterpret_cast<char*>(&w.x_minus), sizeof(double));
  if (!in || std::memcmp(magic, "HJFLOWWF", 8) != 0) throw SchemaError("not a wavefunction dump");
  if (n < 4) throw SchemaError("wavefunction dump has an invalid point count");
  w.grid.d = d;
  w.grid.n = static_cast<std::size_t>(n);
  w.grid.validate();
  w.pi_plus = pi_plus;
  w.psi.resize(w.grid.size());
  for (auto& c : w.psi) {
    double parts[2];
    in.read(reinterpret_cast<char*>(parts), sizeof parts);
    c = {parts[0], parts[1]};
  }
  if (!in) throw SchemaError("wavefunction dump is truncated");
  return w;
}

std::string fft_library_version() { return fftw_version; }

}  // namespace hjflow::lightcone
