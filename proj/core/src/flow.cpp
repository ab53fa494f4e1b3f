#include "hjflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "hjflow/error.hpp"

namespace hjflow {

std::vector<double> PhasePoint::pack() const {
  std::vector<double> x;
  x.reserve(params.size() + coords.size() + momenta.size() + conjugates.size() + 1);
  x.insert(x.end(), params.begin(), params.end());
  x.insert(x.end(), coords.begin(), coords.end());
  x.insert(x.end(), momenta.begin(), momenta.end());
  x.insert(x.end(), conjugates.begin(), conjugates.end());
  x.push_back(action);
  return x;
}

PhasePoint PhasePoint::unpack(std::span<const double> x, std::size_t n_params,
                              std::size_t n_coords) {
  PhasePoint pt;
  auto it = x.begin();
  pt.params.assign(it, it + n_params);
  it += n_params;
  pt.coords.assign(it, it + n_coords);
  it += n_coords;
  pt.momenta.assign(it, it + n_coords);
  it += n_coords;
  pt.conjugates.assign(it, it + n_params);
  it += n_params;
  pt.action = *it;
  return pt;
}

namespace {

Bindings point_bindings(const ConstrainedSystem& sys, const PhasePoint& pt) {
  Bindings b;
  for (std::size_t i = 0; i < sys.parameters().size(); ++i) b[sys.parameters()[i]] = pt.params[i];
  const auto momenta = sys.coordinate_momenta();
  for (std::size_t i = 0; i < sys.coordinates().size(); ++i) {
    b[sys.coordinates()[i]] = pt.coords[i];
    b[momenta[i]] = pt.momenta[i];
  }
  const auto conj = sys.parameter_conjugates();
  for (std::size_t i = 0; i < conj.size(); ++i) b[conj[i]] = pt.conjugates[i];
  return b;
}

void check_dims(const ConstrainedSystem& sys, const PhasePoint& pt) {
  if (pt.params.size() != sys.parameters().size() ||
      pt.conjugates.size() != sys.parameters().size() ||
      pt.coords.size() != sys.coordinates().size() ||
      pt.momenta.size() != sys.coordinates().size()) {
    throw PreconditionError("phase point dimensions do not match system '" + sys.name() + "'");
  }
}

}  // namespace

PhasePoint make_on_surface(const ConstrainedSystem& sys, std::vector<double> params,
                           std::vector<double> coords, std::vector<double> momenta,
                           double action) {
  PhasePoint pt{std::move(params), std::move(coords), std::move(momenta),
                std::vector<double>(sys.parameters().size(), 0.0), action};
  check_dims(sys, pt);
  const Bindings b = point_bindings(sys, pt);
  for (std::size_t i = 0; i < sys.parameters().size(); ++i) {
    pt.conjugates[i] = -evaluate(sys.hamiltonian(sys.parameters()[i]), b);
  }
  return pt;
}

std::vector<double> constraint_values(const ConstrainedSystem& sys, const PhasePoint& pt) {
  check_dims(sys, pt);
  const Bindings b = point_bindings(sys, pt);
  std::vector<double> out;
  for (std::size_t i = 0; i < sys.parameters().size(); ++i) {
    out.push_back(std::abs(pt.conjugates[i] + evaluate(sys.hamiltonian(sys.parameters()[i]), b)));
  }
  return out;
}

// ---------------------------------------------------------------- paths

ParameterPath::ParameterPath(std::vector<std::vector<double>> waypoints, std::size_t dimension)
    : waypoints_(std::move(waypoints)) {
  if (waypoints_.size() < 2) throw PreconditionError("a path needs at least two waypoints");
  for (std::size_t i = 0; i < waypoints_.size(); ++i) {
    if (waypoints_[i].size() != dimension) {
      throw PreconditionError("waypoint " + std::to_string(i) + " has dimension " +
                              std::to_string(waypoints_[i].size()) + ", expected " +
                              std::to_string(dimension));
    }
    for (double v : waypoints_[i]) {
      if (!std::isfinite(v)) throw PreconditionError("waypoint " + std::to_string(i) + " is not finite");
    }
  }
  for (std::size_t i = 0; i + 1 < waypoints_.size(); ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < dimension; ++k) {
      const double d = waypoints_[i + 1][k] - waypoints_[i][k];
      sq += d * d;
    }
    lengths_.push_back(std::sqrt(sq));
    total_ += lengths_.back();
  }
  if (total_ == 0.0) throw PreconditionError("path has zero length");
}

std::vector<std::size_t> ParameterPath::allocate_steps(std::size_t steps) const {
  const std::size_t n = segments();
  std::vector<std::size_t> alloc(n, 0);
  std::vector<double> frac(n, -1.0);
  std::size_t nonzero = 0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (lengths_[i] == 0.0) continue;
    ++nonzero;
    const double exact = static_cast<double>(steps) * lengths_[i] / total_;
    alloc[i] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(exact)));
    frac[i] = exact - std::floor(exact);
    used += alloc[i];
  }
  if (steps < nonzero) {
    throw PreconditionError("need at least one step per nonzero path segment (" +
                            std::to_string(nonzero) + ")");
  }
  while (used > steps) {
    auto it = std::max_element(alloc.begin(), alloc.end());
    --*it;
    --used;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; used < steps; k = (k + 1) % n) {
    if (lengths_[order[k]] == 0.0) continue;
    ++alloc[order[k]];
    ++used;
  }
  return alloc;
}

ParameterPath make_path(const ConstrainedSystem& sys, std::vector<std::vector<double>> waypoints) {
  return ParameterPath(std::move(waypoints), sys.parameters().size());
}

double TrajectoryRecord::max_abs_hprime() const {
  double m = 0.0;
  for (const auto& row : hprime) {
    for (double v : row) m = std::max(m, std::abs(v));
  }
  return m;
}

std::vector<std::string> state_names(const ConstrainedSystem& sys) {
  std::vector<std::string> names = sys.parameters();
  names.insert(names.end(), sys.coordinates().begin(), sys.coordinates().end());
  for (const auto& m : sys.coordinate_momenta()) names.push_back(m);
  for (const auto& m : sys.parameter_conjugates()) names.push_back(m);
  names.emplace_back("z");
  return names;
}

// ---------------------------------------------------------------- integration

namespace {

struct SingularSlot {
  std::size_t index;
  double bound;
  std::string symbol;
};

std::vector<SingularSlot> singular_slots(const ConstrainedSystem& sys,
                                         const std::vector<std::string>& slots) {
  std::vector<SingularSlot> out;
  for (const auto& s : sys.singular()) {
    auto it = std::find(slots.begin(), slots.end(), s.symbol);
    if (it != slots.end() && s.exclude_abs_below > 0.0) {
      out.push_back({static_cast<std::size_t>(it - slots.begin()), s.exclude_abs_below, s.symbol});
    }
  }
  return out;
}

void check_state(std::span<const double> x, const std::vector<SingularSlot>& singular,
                 std::size_t step) {
  for (double v : x) {
    if (!std::isfinite(v)) throw SingularityError("non-finite state", step);
  }
  for (const auto& s : singular) {
    if (std::abs(x[s.index]) < s.bound) {
      throw SingularityError("|" + s.symbol + "| fell below " + std::to_string(s.bound), step);
    }
  }
}

// y += h * k
void axpy(std::vector<double>& y, double h, const std::vector<double>& k) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += h * k[i];
}

template <class Rhs>
void rk4_step(std::vector<double>& x, double h, Rhs&& rhs, std::vector<double>* k_scratch) {
  auto& k1 = k_scratch[0];
  auto& k2 = k_scratch[1];
  auto& k3 = k_scratch[2];
  auto& k4 = k_scratch[3];
  auto& tmp = k_scratch[4];
  rhs(0.0, x, k1);
  tmp = x;
  axpy(tmp, 0.5 * h, k1);
  rhs(0.5, tmp, k2);
  tmp = x;
  axpy(tmp, 0.5 * h, k2);
  rhs(0.5, tmp, k3);
  tmp = x;
  axpy(tmp, h, k3);
  rhs(1.0, tmp, k4);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
}

void record(TrajectoryRecord& rec, const PfaffianRhs& rhs, std::span<const double> x, double s) {
  rec.s.push_back(s);
  rec.points.push_back(PhasePoint::unpack(x, rhs.n_params(), rhs.n_coords()));
  std::vector<double> hp;
  for (std::size_t a = 0; a < rhs.n_params(); ++a) hp.push_back(rhs.extended_hamiltonian(a, x));
  rec.hprime.push_back(std::move(hp));
}

}  // namespace

TrajectoryRecord integrate(const ConstrainedSystem& sys, const PhasePoint& initial,
                           const ParameterPath& path, std::size_t steps,
                           const IntegrateOptions& opts) {
  if (steps < 1) throw PreconditionError("steps must be at least 1");
  check_dims(sys, initial);
  if (path.waypoints().front().size() != sys.parameters().size()) {
    throw PreconditionError("path dimension does not match the system's parameters");
  }
  for (std::size_t i = 0; i < initial.params.size(); ++i) {
    if (initial.params[i] != path.waypoints().front()[i]) {
      throw PreconditionError("initial parameters do not match the path's first waypoint");
    }
  }
  if (!opts.allow_off_surface) {
    const Bindings b = point_bindings(sys, initial);
    for (std::size_t i = 0; i < sys.parameters().size(); ++i) {
      const double h = evaluate(sys.hamiltonian(sys.parameters()[i]), b);
      if (std::abs(initial.conjugates[i] + h) > opts.surface_tol * (1.0 + std::abs(h))) {
        throw PreconditionError("initial point is off the constraint surface: H'_" +
                                sys.parameters()[i] + " = " +
                                std::to_string(initial.conjugates[i] + h));
      }
    }
  }

  const PfaffianRhs rhs(sys);
  const auto singular = singular_slots(sys, rhs.slots());
  const std::size_t np = rhs.n_params();
  const auto alloc = path.allocate_steps(steps);

  std::vector<double> x = initial.pack();
  check_state(x, singular, 0);
  TrajectoryRecord rec;
  rec.points.reserve(steps + 1);
  record(rec, rhs, x, 0.0);

  std::vector<double> scratch[5];
  for (auto& s : scratch) s.assign(x.size(), 0.0);

  double s_done = 0.0;
  std::size_t step = 0;
  for (std::size_t seg = 0; seg < path.segments(); ++seg) {
    const std::size_t n = alloc[seg];
    if (n == 0) continue;
    const auto& from = path.waypoints()[seg];
    const auto& to = path.waypoints()[seg + 1];
    std::vector<double> delta(np);
    for (std::size_t a = 0; a < np; ++a) delta[a] = to[a] - from[a];
    auto field = [&](double, const std::vector<double>& y, std::vector<double>& dy) {
      std::fill(dy.begin(), dy.end(), 0.0);
      for (std::size_t a = 0; a < np; ++a) rhs.accumulate(a, delta[a], y, dy);
    };
    const double h = 1.0 / static_cast<double>(n);
    const double seg_frac = path.segment_length(seg) / path.length();
    for (std::size_t k = 1; k <= n; ++k) {
      rk4_step(x, h, field, scratch);
      ++step;
      const double u = static_cast<double>(k) / static_cast<double>(n);
      for (std::size_t a = 0; a < np; ++a) x[a] = k == n ? to[a] : from[a] + u * delta[a];
      check_state(x, singular, step);
      record(rec, rhs, x, k == n ? s_done + seg_frac : s_done + u * seg_frac);
    }
    s_done += seg_frac;
  }
  rec.s.back() = 1.0;
  return rec;
}

PathDiscrepancy path_independence_check(const ConstrainedSystem& sys, const PhasePoint& initial,
                                        const ParameterPath& a, const ParameterPath& b,
                                        std::size_t steps, const IntegrateOptions& opts) {
  if (a.waypoints().front() != b.waypoints().front() ||
      a.waypoints().back() != b.waypoints().back()) {
    throw PreconditionError("paths do not share their first and last waypoints");
  }
  const auto ra = integrate(sys, initial, a, steps, opts);
  const auto rb = integrate(sys, initial, b, steps, opts);
  PathDiscrepancy out;
  out.end_a = ra.points.back();
  out.end_b = rb.points.back();
  const auto xa = out.end_a.pack();
  const auto xb = out.end_b.pack();
  const auto names = state_names(sys);
  for (std::size_t i = 0; i < xa.size(); ++i) {
    const double d = std::abs(xa[i] - xb[i]);
    out.per_variable.emplace_back(names[i], d);
    out.max = std::max(out.max, d);
  }
  return out;
}

// ---------------------------------------------------------------- dirac

TrajectoryRecord dirac_reference(const ConstrainedSystem& sys, const Expr& constraint,
                                 const Expr& gauge, const PhasePoint& initial, double tau_from,
                                 double tau_to, std::size_t steps) {
  if (steps < 1) throw PreconditionError("steps must be at least 1");
  if (!(tau_to != tau_from)) throw PreconditionError("empty tau range");
  check_dims(sys, initial);
  const PfaffianRhs rhs(sys);
  const auto& slots = rhs.slots();
  const std::size_t np = rhs.n_params();
  const std::size_t nc = rhs.n_coords();
  const std::string& tau = sys.parameters().front();

  const Expr phi = sys.resolve(constraint);
  const Expr chi = sys.resolve(gauge);
  if (!depends_on(chi, tau)) {
    throw PreconditionError("gauge '" + gauge.str() + "' does not depend on " + tau);
  }

  // Dirac phase space: coordinate pairs plus every non-primary parameter pair
  std::vector<ConjugatePair> pair_list;
  std::vector<std::pair<std::size_t, std::size_t>> pair_slots;
  for (std::size_t i = 0; i < nc; ++i) {
    pair_list.push_back({sys.coordinates()[i], momentum_of(sys.coordinates()[i])});
    pair_slots.emplace_back(np + i, np + nc + i);
  }
  for (std::size_t a = 1; a < np; ++a) {
    pair_list.push_back({sys.parameters()[a], momentum_of(sys.parameters()[a])});
    pair_slots.emplace_back(a, np + 2 * nc + a);
  }
  const ConjugatePairs pairs(pair_list);

  struct PairCode {
    CompiledExpr dphi_dp, dphi_dq;
    std::size_t q_slot, p_slot;
  };
  std::vector<PairCode> code;
  Expr p_dphi = Expr::number(0.0);
  for (std::size_t i = 0; i < pair_list.size(); ++i) {
    const auto& [q, p] = pair_list[i];
    const Expr dp = differentiate(phi, p);
    code.push_back({CompiledExpr(dp, slots), CompiledExpr(differentiate(phi, q), slots),
                    pair_slots[i].first, pair_slots[i].second});
    p_dphi = p_dphi + Expr::symbol(p) * dp;
  }
  const CompiledExpr lagrangian(p_dphi - phi, slots);
  const CompiledExpr dchi_dtau(differentiate(chi, tau), slots);
  const CompiledExpr chi_phi(poisson_bracket(chi, phi, pairs), slots);

  auto lambda_at = [&](std::span<const double> y) {
    const double br = chi_phi(y);
    if (!(std::abs(br) > 1e-14)) {
      throw PreconditionError("gauge is degenerate: {gauge, constraint} vanishes");
    }
    return -dchi_dtau(y) / br;
  };

  const auto singular = singular_slots(sys, slots);
  std::vector<double> x = initial.pack();
  x[0] = tau_from;
  check_state(x, singular, 0);

  TrajectoryRecord rec;
  rec.lambda.emplace();
  auto snap = [&](double s) {
    record(rec, rhs, x, s);
    rec.lambda->push_back(lambda_at(x));
  };
  snap(0.0);

  const double h = (tau_to - tau_from) / static_cast<double>(steps);
  auto field = [&](double, const std::vector<double>& y, std::vector<double>& dy) {
    std::fill(dy.begin(), dy.end(), 0.0);
    const double lam = lambda_at(y);
    dy[0] = 1.0;
    for (const auto& c : code) {
      dy[c.q_slot] += lam * c.dphi_dp(y);
      dy[c.p_slot] -= lam * c.dphi_dq(y);
    }
    dy.back() = lam * lagrangian(y);
  };
  std::vector<double> scratch[5];
  for (auto& s : scratch) s.assign(x.size(), 0.0);
  for (std::size_t k = 1; k <= steps; ++k) {
    rk4_step(x, h, field, scratch);
    const double u = static_cast<double>(k) / static_cast<double>(steps);
    x[0] = k == steps ? tau_to : tau_from + u * (tau_to - tau_from);
    check_state(x, singular, k);
    snap(u);
  }
  return rec;
}

// ---------------------------------------------------------------- io

void write_trajectory_csv(std::ostream& out, const ConstrainedSystem& sys,
                          const TrajectoryRecord& rec) {
  out << 's';
  for (const auto& n : state_names(sys)) out << ',' << n;
  for (const auto& p : sys.parameters()) out << ",Hprime_" << p;
  if (rec.lambda) out << ",lambda";
  out << '\n';
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (std::size_t k = 0; k < rec.points.size(); ++k) {
    put(rec.s[k]);
    for (double v : rec.points[k].pack()) {
      out << ',';
      put(v);
    }
    for (double v : rec.hprime[k]) {
      out << ',';
      put(v);
    }
    if (rec.lambda) {
      out << ',';
      put((*rec.lambda)[k]);
    }
    out << '\n';
  }
}

namespace {

double number_at(const nlohmann::json& v, const std::string& path) {
  if (!v.is_number()) throw SchemaError(path + ": expected a number");
  return v.get<double>();
}

void reject_unknown(const nlohmann::json& obj, const std::string& path,
                    std::initializer_list<std::string_view> keys) {
  for (const auto& [k, v] : obj.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      throw SchemaError(path + ": unexpected key '" + k + "'");
    }
  }
}

}  // namespace

InitialState load_initial_state(const ConstrainedSystem& sys, const nlohmann::json& doc) {
  if (!doc.is_object()) throw SchemaError("initial state must be an object");
  reject_unknown(doc, "initial", {"coordinates", "momenta", "parameters", "conjugates", "on_surface"});
  const std::size_t np = sys.parameters().size();
  const std::size_t nc = sys.coordinates().size();
  std::vector<double> params(np, 0.0), coords(nc, 0.0), momenta(nc, 0.0);

  auto read_map = [&](const char* key, const std::vector<std::string>& names,
                      const std::vector<std::string>* alias, std::vector<double>& into) {
    if (!doc.contains(key)) return;
    if (!doc[key].is_object()) throw SchemaError(std::string(key) + ": expected an object");
    for (const auto& [k, v] : doc[key].items()) {
      auto it = std::find(names.begin(), names.end(), k);
      if (it == names.end() && alias) {
        auto jt = std::find(alias->begin(), alias->end(), k);
        if (jt != alias->end()) it = names.begin() + (jt - alias->begin());
      }
      if (it == names.end()) throw SchemaError(std::string(key) + ": unknown name '" + k + "'");
      into[static_cast<std::size_t>(it - names.begin())] =
          number_at(v, std::string(key) + "." + k);
    }
  };
  const auto momentum_names = sys.coordinate_momenta();
  read_map("coordinates", sys.coordinates(), nullptr, coords);
  read_map("momenta", sys.coordinates(), &momentum_names, momenta);
  read_map("parameters", sys.parameters(), nullptr, params);

  InitialState out;
  out.point = make_on_surface(sys, params, coords, momenta);
  if (doc.contains("conjugates")) {
    if (doc.contains("on_surface") && doc["on_surface"] == true) {
      throw SchemaError("initial: give either conjugates or on_surface, not both");
    }
    const auto conj = sys.parameter_conjugates();
    read_map("conjugates", sys.parameters(), &conj, out.point.conjugates);
    out.conjugates_given = true;
  } else if (doc.contains("on_surface") && !doc["on_surface"].is_boolean()) {
    throw SchemaError("on_surface: expected a boolean");
  }
  return out;
}

ParameterPath load_path(const ConstrainedSystem& sys, const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("waypoints") || !doc["waypoints"].is_array()) {
    throw SchemaError("path: expected {\"waypoints\": [...]}");
  }
  std::vector<std::vector<double>> waypoints;
  for (std::size_t i = 0; i < doc["waypoints"].size(); ++i) {
    const auto& w = doc["waypoints"][i];
    const std::string path = "waypoints[" + std::to_string(i) + "]";
    if (!w.is_object()) throw SchemaError(path + ": expected an object");
    std::vector<double> v;
    for (const auto& p : sys.parameters()) {
      if (!w.contains(p)) throw SchemaError(path + ": missing parameter '" + p + "'");
      v.push_back(number_at(w[p], path + "." + p));
    }
    if (w.size() != sys.parameters().size()) {
      throw SchemaError(path + ": unexpected parameter name");
    }
    waypoints.push_back(std::move(v));
  }
  try {
    return make_path(sys, std::move(waypoints));
  } catch (const PreconditionError& e) {
    throw SchemaError(std::string("path: ") + e.what());
  }
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

}  // namespace hjflow
