#include "hjflow/planewave.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>

#include "hjflow/error.hpp"

namespace hjflow::planewave {

namespace {

std::string num(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  std::string s(buf.data(), end);
  return v < 0 ? "(" + s + ")" : s;
}

const char* kind_name(PotentialKind k) {
  switch (k) {
    case PotentialKind::Zero:
      return "zero";
    case PotentialKind::Cosine:
      return "cosine";
    case PotentialKind::GaussianPulse:
      return "gaussian_pulse";
  }
  return "zero";
}

}  // namespace

void PotentialSpec::validate() const {
  if (!std::isfinite(amplitude)) throw SchemaError("potential amplitude must be finite");
  if (kind == PotentialKind::Cosine && !(k > 0.0)) throw SchemaError("cosine potential needs k > 0");
  if (kind == PotentialKind::GaussianPulse) {
    if (!(width > 0.0)) throw SchemaError("gaussian pulse needs width > 0");
    if (!(k >= 0.0) || !std::isfinite(k)) throw SchemaError("gaussian pulse needs finite k >= 0");
  }
}

double PotentialSpec::operator()(double xm) const {
  switch (kind) {
    case PotentialKind::Zero:
      return 0.0;
    case PotentialKind::Cosine:
      return amplitude * std::cos(k * xm);
    case PotentialKind::GaussianPulse:
      return amplitude * std::exp(-xm * xm / (2.0 * width * width)) * std::cos(k * xm);
  }
  return 0.0;
}

std::string PotentialSpec::expression() const {
  switch (kind) {
    case PotentialKind::Zero:
      return "0";
    case PotentialKind::Cosine:
      return num(amplitude) + "*cos(" + num(k) + "*xm)";
    case PotentialKind::GaussianPulse:
      return num(amplitude) + "*exp(-xm^2/(2*" + num(width) + "^2))*cos(" + num(k) + "*xm)";
  }
  return "0";
}

double PotentialSpec::integral(double from, double to) const {
  switch (kind) {
    case PotentialKind::Zero:
      return 0.0;
    case PotentialKind::Cosine:
      return amplitude / k * (std::sin(k * to) - std::sin(k * from));
    default:
      throw PreconditionError("no closed-form integral for a gaussian pulse");
  }
}

double PotentialSpec::integral_of_square(double from, double to) const {
  switch (kind) {
    case PotentialKind::Zero:
      return 0.0;
    case PotentialKind::Cosine:
      return amplitude * amplitude *
             (0.5 * (to - from) + (std::sin(2.0 * k * to) - std::sin(2.0 * k * from)) / (4.0 * k));
    default:
      throw PreconditionError("no closed-form integral for a gaussian pulse");
  }
}

void ModelParams::validate() const {
  if (!(m > 0.0) || !std::isfinite(m)) throw SchemaError("mass must be positive");
  if (!std::isfinite(e)) throw SchemaError("charge must be finite");
  if (!(exclusion >= 0.0)) throw SchemaError("exclusion bound must be non-negative");
  if (!std::isfinite(pi_plus) || pi_plus == 0.0 || std::abs(pi_plus) < exclusion) {
    throw SchemaError("pi_plus must be nonzero with |pi_plus| >= " + std::to_string(exclusion));
  }
  for (const auto& p : potential) p.validate();
}

ModelParams load_model_params(const nlohmann::json& doc) {
  if (!doc.is_object()) throw SchemaError("model: expected an object");
  for (const auto& [k, v] : doc.items()) {
    if (k != "m" && k != "e" && k != "pi_plus" && k != "potential") {
      throw SchemaError("model: unexpected key '" + k + "'");
    }
  }
  ModelParams p;
  auto read = [&](const char* key, double& into) {
    if (!doc.contains(key)) throw SchemaError(std::string("model.") + key + ": missing");
    if (!doc[key].is_number()) throw SchemaError(std::string("model.") + key + ": expected a number");
    into = doc[key].get<double>();
  };
  read("m", p.m);
  read("e", p.e);
  read("pi_plus", p.pi_plus);
  if (doc.contains("potential")) {
    const auto& list = doc["potential"];
    if (!list.is_array() || list.size() > 2) {
      throw SchemaError("model.potential: expected at most two component entries");
    }
    for (std::size_t i = 0; i < list.size(); ++i) {
      const auto& c = list[i];
      const std::string path = "model.potential[" + std::to_string(i) + "]";
      if (!c.is_object() || !c.contains("kind") || !c["kind"].is_string()) {
        throw SchemaError(path + ": expected an object with a kind");
      }
      const auto kind = c["kind"].get<std::string>();
      PotentialSpec s;
      if (kind == "zero") {
        s.kind = PotentialKind::Zero;
      } else if (kind == "cosine") {
        s.kind = PotentialKind::Cosine;
      } else if (kind == "gaussian_pulse") {
        s.kind = PotentialKind::GaussianPulse;
      } else {
        throw SchemaError(path + ": unknown kind '" + kind + "'");
      }
      auto opt = [&](const char* key, double& into) {
        if (!c.contains(key)) return;
        if (!c[key].is_number()) throw SchemaError(path + "." + key + ": expected a number");
        into = c[key].get<double>();
      };
      opt("amplitude", s.amplitude);
      opt("k", s.k);
      opt("width", s.width);
      p.potential[i] = s;
    }
  }
  p.validate();
  return p;
}

nlohmann::json to_json(const ModelParams& params) {
  nlohmann::json doc{{"m", params.m}, {"e", params.e}, {"pi_plus", params.pi_plus}};
  doc["potential"] = nlohmann::json::array();
  for (const auto& s : params.potential) {
    doc["potential"].push_back(
        {{"kind", kind_name(s.kind)}, {"amplitude", s.amplitude}, {"k", s.k}, {"width", s.width}});
  }
  return doc;
}

nlohmann::json plane_wave_document(const ModelParams& params) {
  params.validate();
  return {
      {"name", "plane_wave"},
      {"coordinates", {"xp", "x1", "x2"}},
      {"parameters", {"tau", "xm"}},
      {"constants", {{"m", params.m}, {"e", params.e}}},
      {"definitions",
       {{"A1", params.potential[0].expression()}, {"A2", params.potential[1].expression()}}},
      {"hamiltonians",
       {{"tau", "0"}, {"xm", "-(((p_x1+e*A1)^2+(p_x2+e*A2)^2+m^2)/(2*p_xp))"}}},
      {"singular", {{{"symbol", "p_xp"}, {"exclude_abs_below", params.exclusion}}}},
  };
}

ConstrainedSystem plane_wave_system(const ModelParams& params) {
  return load_system(plane_wave_document(params));
}

PhasePoint initial_point(const ModelParams& params, const ConstrainedSystem& sys, double tau,
                         double xm, std::array<double, 3> coords, std::array<double, 2> p_perp) {
  return make_on_surface(sys, {tau, xm}, {coords[0], coords[1], coords[2]},
                         {params.pi_plus, p_perp[0], p_perp[1]});
}

PhasePoint quadrature_solution(const ModelParams& params, const PhasePoint& initial,
                               double xm_final) {
  params.validate();
  if (initial.params.size() != 2 || initial.coords.size() != 3 || initial.momenta.size() != 3) {
    throw PreconditionError("initial point is not a plane-wave phase point");
  }
  const double x0 = initial.params[1];
  const double span = xm_final - x0;
  const double pp = initial.momenta[0];
  const double e = params.e;

  PhasePoint out = initial;
  out.params[1] = xm_final;
  double q_int = params.m * params.m * span;  // integral of Q = sum (p_a + e A_a)^2 + m^2
  double pk_int = 0.0;                        // integral of sum p_a (p_a + e A_a)
  double q_end = params.m * params.m;
  for (std::size_t a = 0; a < 2; ++a) {
    const auto& pot = params.potential[a];
    const double p = initial.momenta[a + 1];
    const double i1 = pot.integral(x0, xm_final);
    const double i2 = pot.integral_of_square(x0, xm_final);
    out.coords[a + 1] = initial.coords[a + 1] - (p * span + e * i1) / pp;
    q_int += p * p * span + 2.0 * p * e * i1 + e * e * i2;
    pk_int += p * p * span + p * e * i1;
    const double shifted = p + e * pot(xm_final);
    q_end += shifted * shifted;
  }
  out.coords[0] = initial.coords[0] + q_int / (2.0 * pp * pp);
  out.conjugates[0] = 0.0;
  out.conjugates[1] = q_end / (2.0 * pp);
  out.action = initial.action + (q_int - pk_int) / pp;
  return out;
}

LightConeMomenta momenta_from_velocities(const ModelParams& params, double xm, double v_plus,
                                         double v_minus, std::array<double, 2> v_perp) {
  const double interval = 2.0 * v_plus * v_minus - v_perp[0] * v_perp[0] - v_perp[1] * v_perp[1];
  if (!(interval > 0.0)) throw PreconditionError("velocity sample is not timelike");
  if (v_minus == 0.0) throw PreconditionError("velocity sample has v- = 0");
  const double root = std::sqrt(interval);
  LightConeMomenta out;
  out.pi_plus = -params.m * v_minus / root;
  out.pi_minus = -params.m * v_plus / root;
  for (std::size_t a = 0; a < 2; ++a) {
    out.pi_perp[a] = params.m * v_perp[a] / root - params.e * params.potential[a](xm);
  }
  return out;
}

LegendreReport verify_legendre(const ModelParams& params, int samples, std::uint64_t seed,
                               double tol) {
  params.validate();
  if (samples < 1) throw PreconditionError("verify_legendre needs at least one sample");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto rel = [](double a, double b) { return std::abs(a - b) / (1.0 + std::abs(a) + std::abs(b)); };

  LegendreReport rep;
  rep.samples = samples;
  rep.tol = tol;
  const double m = params.m;
  const double e = params.e;
  for (int i = 0; i < samples; ++i) {
    double vp = 0, vm = 0;
    std::array<double, 2> vt{};
    do {
      const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
      vm = sign * uniform(0.2, 2.0);
      vp = sign * uniform(0.2, 2.0);
      vt = {uniform(-1.0, 1.0), uniform(-1.0, 1.0)};
    } while (2.0 * vp * vm - vt[0] * vt[0] - vt[1] * vt[1] < 0.05);
    const double xm = uniform(-5.0, 5.0);

    const auto mom = momenta_from_velocities(params, xm, vp, vm, vt);
    std::array<double, 2> kin{};
    double kin_sq = 0.0;
    for (std::size_t a = 0; a < 2; ++a) {
      kin[a] = mom.pi_perp[a] + e * params.potential[a](xm);
      kin_sq += kin[a] * kin[a];
    }

    // mass shell 2 pi+ pi- = (pi_a + e A_a)^2 + m^2
    rep.mass_shell = std::max(rep.mass_shell, rel(2.0 * mom.pi_plus * mom.pi_minus, kin_sq + m * m));

    // expressible velocities in terms of the unexpressible v-
    double vel = rel(vp, mom.pi_minus / mom.pi_plus * vm);
    double unsigned_rel = 0.0;
    for (std::size_t a = 0; a < 2; ++a) {
      vel = std::max(vel, rel(vt[a], -kin[a] / mom.pi_plus * vm));
      unsigned_rel = std::max(unsigned_rel, rel(vt[a], kin[a] / mom.pi_plus * vm));
    }
    rep.velocity_relations = std::max(rep.velocity_relations, vel);
    rep.unsigned_transverse_relation = std::max(rep.unsigned_transverse_relation, unsigned_rel);

    // H_tau = -L + pi_a v_a + pi+ v+ - v- H_xm with H_xm from the momenta
    const double root = std::sqrt(2.0 * vp * vm - vt[0] * vt[0] - vt[1] * vt[1]);
    double coupling = 0.0;
    for (std::size_t a = 0; a < 2; ++a) coupling += vt[a] * params.potential[a](xm);
    const double lagrangian = -m * root - e * coupling;
    const double h_xm = -(kin_sq + m * m) / (2.0 * mom.pi_plus);
    const double terms[] = {-lagrangian, mom.pi_perp[0] * vt[0], mom.pi_perp[1] * vt[1],
                            mom.pi_plus * vp, -vm * h_xm};
    double h_tau = 0.0;
    double scale = 0.0;
    for (double t : terms) {
      h_tau += t;
      scale += std::abs(t);
    }
    rep.canonical_hamiltonian = std::max(rep.canonical_hamiltonian, std::abs(h_tau) / (1.0 + scale));

    // momenta are homogeneous of degree zero in the velocities
    const auto doubled =
        momenta_from_velocities(params, xm, 2.0 * vp, 2.0 * vm, {2.0 * vt[0], 2.0 * vt[1]});
    double rp = std::max(rel(doubled.pi_plus, mom.pi_plus), rel(doubled.pi_minus, mom.pi_minus));
    for (std::size_t a = 0; a < 2; ++a) rp = std::max(rp, rel(doubled.pi_perp[a], mom.pi_perp[a]));
    rep.reparametrization = std::max(rep.reparametrization, rp);
  }
  return rep;
}

nlohmann::json nonintegrable_document(bool restricted) {
  nlohmann::json doc{
      {"name", restricted ? "nonintegrable_restricted" : "nonintegrable"},
      {"coordinates", {"q"}},
      {"constants", nlohmann::json::object()},
      {"definitions", nlohmann::json::object()},
      {"singular", nlohmann::json::array()},
  };
  if (restricted) {
    doc["parameters"] = {"tau", "s1"};
    doc["hamiltonians"] = {{"tau", "0"}, {"s1", "p_q^2/2"}};
  } else {
    doc["parameters"] = {"tau", "s1", "s2"};
    doc["hamiltonians"] = {{"tau", "0"}, {"s1", "p_q^2/2"}, {"s2", "q^2/2"}};
  }
  return doc;
}

ConstrainedSystem nonintegrable_fixture(bool restricted) {
  return load_system(nonintegrable_document(restricted));
}

}  // namespace hjflow::planewave
