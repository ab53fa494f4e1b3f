#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "hjflow/error.hpp"
#include "hjflow/planewave.hpp"
#include "oracles.hpp"

using namespace hjflow;
using namespace hjflow::planewave;
using nlohmann::json;

namespace {

ModelParams cosine_model(double a = 0.3, double k = 1.0) {
  ModelParams p;
  p.potential[0] = PotentialSpec::cosine(a, k);
  return p;
}

std::vector<ModelParams> shipped_models() {
  ModelParams zero;
  ModelParams pulse;
  pulse.potential[0] = PotentialSpec::pulse(0.5, 2.0, 1.5);
  pulse.potential[1] = PotentialSpec::cosine(-0.2, 0.7);
  ModelParams heavy = cosine_model(0.8, 2.0);
  heavy.m = 2.5;
  heavy.e = -1.0;
  heavy.pi_plus = 1.5;
  return {zero, cosine_model(), pulse, heavy};
}

// Test-side Lagrangian -m sqrt(2 v+ v- - v_perp^2) - e v_a A_a with the
// first field component a cos(k xm) and no second component.
double lagrangian(const oracle::Wave& w, double xm, double vp, double vm, double v1, double v2) {
  return -w.m * std::sqrt(2 * vp * vm - v1 * v1 - v2 * v2) - w.e * v1 * w.field(xm);
}

}  // namespace

// ---------------------------------------------------------------- potentials

TEST(Potential, Expressions) {
  EXPECT_EQ(PotentialSpec::zero().expression(), "0");
  EXPECT_EQ(PotentialSpec::cosine(0.3, 1.0).expression(), "0.3*cos(1*xm)");
  const auto pulse = PotentialSpec::pulse(0.5, 2.0, 1.5);
  EXPECT_NEAR(evaluate(parse(pulse.expression()), {{"xm", 0.4}}), pulse(0.4), 1e-15);
  const auto neg = PotentialSpec::cosine(-0.25, 3.0);
  EXPECT_NEAR(evaluate(parse(neg.expression()), {{"xm", 0.4}}), -0.25 * std::cos(1.2), 1e-15);
}

TEST(Potential, Values) {
  EXPECT_EQ(PotentialSpec::zero()(1.7), 0.0);
  EXPECT_DOUBLE_EQ(PotentialSpec::cosine(0.3, 2.0)(0.5), 0.3 * std::cos(1.0));
  EXPECT_DOUBLE_EQ(PotentialSpec::pulse(1.0, 0.0, 2.0)(2.0), std::exp(-0.5));
}

TEST(Potential, ClosedFormIntegralsAgainstSimpson) {
  for (const auto& p : {PotentialSpec::zero(), PotentialSpec::cosine(0.3, 1.0), PotentialSpec::cosine(-0.7, 2.5)}) {
    const double i1 = oracle::simpson([&](double s) { return p(s); }, -1.0, 4.0, 20000);
    const double i2 = oracle::simpson([&](double s) { return p(s) * p(s); }, -1.0, 4.0, 20000);
    EXPECT_NEAR(p.integral(-1.0, 4.0), i1, 1e-12);
    EXPECT_NEAR(p.integral_of_square(-1.0, 4.0), i2, 1e-12);
  }
  EXPECT_THROW(PotentialSpec::pulse(1, 1, 1).integral(0, 1), PreconditionError);
  EXPECT_THROW(PotentialSpec::pulse(1, 1, 1).integral_of_square(0, 1), PreconditionError);
}

TEST(Potential, Validation) {
  EXPECT_THROW(PotentialSpec::cosine(0.3, 0.0).validate(), SchemaError);
  EXPECT_THROW(PotentialSpec::cosine(NAN, 1.0).validate(), SchemaError);
  EXPECT_THROW(PotentialSpec::pulse(0.3, 1.0, 0.0).validate(), SchemaError);
  EXPECT_THROW(PotentialSpec::pulse(0.3, -1.0, 1.0).validate(), SchemaError);
  EXPECT_NO_THROW(PotentialSpec::pulse(0.3, 0.0, 1.0).validate());
}

// ---------------------------------------------------------------- model parameters

TEST(ModelParamsDoc, Validation) {
  ModelParams p;
  p.m = 0.0;
  EXPECT_THROW(p.validate(), SchemaError);
  p = ModelParams{};
  p.pi_plus = 0.2;
  EXPECT_THROW(p.validate(), SchemaError);
  p.pi_plus = 0.5;
  EXPECT_NO_THROW(p.validate());
}

TEST(ModelParamsDoc, RoundTrip) {
  for (const auto& m : shipped_models()) {
    const auto back = load_model_params(to_json(m));
    EXPECT_EQ(to_json(back), to_json(m));
  }
}

TEST(ModelParamsDoc, SchemaErrors) {
  const json good = {{"m", 1}, {"e", 1}, {"pi_plus", -1},
                     {"potential", {{{"kind", "cosine"}, {"amplitude", 0.3}, {"k", 1}}}}};
  EXPECT_NO_THROW(load_model_params(good));
  json bad = good;
  bad["spin"] = 0.5;
  EXPECT_THROW(load_model_params(bad), SchemaError);
  bad = good;
  bad["potential"][0]["kind"] = "square";
  EXPECT_THROW(load_model_params(bad), SchemaError);
  bad = good;
  bad["potential"] = {good["potential"][0], good["potential"][0], good["potential"][0]};
  EXPECT_THROW(load_model_params(bad), SchemaError);
  bad = good;
  bad["m"] = "heavy";
  EXPECT_THROW(load_model_params(bad), SchemaError);
  bad = good;
  bad["potential"][0]["k"] = 0;
  EXPECT_THROW(load_model_params(bad), SchemaError);
}

// ---------------------------------------------------------------- system construction

TEST(PlaneWaveSystem, CosineDefinitions) {
  const auto doc = plane_wave_document(cosine_model());
  EXPECT_EQ(doc["definitions"]["A1"], "0.3*cos(1*xm)");
  EXPECT_EQ(doc["definitions"]["A2"], "0");
  EXPECT_EQ(doc["hamiltonians"]["tau"], "0");
  EXPECT_EQ(doc["parameters"], json({"tau", "xm"}));
}

TEST(PlaneWaveSystem, MatchesShippedReferenceDocument) {
  const auto shipped = load_system_file(oracle::data("planewave.json"));
  const auto built = plane_wave_system(cosine_model());
  Sampler s(shipped.sampling_domain(), 5);
  for (int i = 0; i < 20; ++i) {
    const auto b = s.next();
    EXPECT_NEAR(evaluate(built.hamiltonian("xm"), b), evaluate(shipped.hamiltonian("xm"), b), 1e-14);
  }
}

TEST(PlaneWaveSystem, ZeroPotentialReducesToFreeShell) {
  const auto sys = plane_wave_system(ModelParams{});
  EXPECT_FALSE(depends_on(sys.hamiltonian("xm"), "xm"));
  const Bindings b{{"p_xp", -1.0}, {"p_x1", 0.3}, {"p_x2", 0.4}};
  EXPECT_NEAR(evaluate(sys.hamiltonian("xm"), b), (0.09 + 0.16 + 1.0) / 2.0, 1e-15);
}

TEST(PlaneWaveSystem, EveryModelIsAbelianAndRoundTrips) {
  for (const auto& m : shipped_models()) {
    const auto sys = plane_wave_system(m);
    const auto r = integrability_matrix(sys);
    EXPECT_EQ(r.classification, Classification::AbelianFirstClass);
    EXPECT_NO_THROW(load_system(plane_wave_document(m)));
    EXPECT_DOUBLE_EQ(sys.singular().at(0).exclude_abs_below, m.exclusion);
  }
}

TEST(PlaneWaveSystem, InitialPointIsOnSurface) {
  const auto m = cosine_model();
  const auto sys = plane_wave_system(m);
  const auto p = initial_point(m, sys, 0.0, 0.7, {1, 2, 3}, {0.2, -0.1});
  EXPECT_EQ(p.momenta[0], m.pi_plus);
  for (double c : constraint_values(sys, p)) EXPECT_LE(c, 1e-15);
}

// ---------------------------------------------------------------- quadrature oracle

TEST(Quadrature, FreeExample) {
  const ModelParams m;
  const auto sys = plane_wave_system(m);
  const auto init = initial_point(m, sys, 0.0, 0.0, {0, 0, 0}, {0.3, 0.0});
  const auto end = quadrature_solution(m, init, 2.0);
  EXPECT_NEAR(end.coords[1], 0.6, 1e-15);
  EXPECT_NEAR(end.coords[0], 1.09, 1e-15);
  EXPECT_EQ(end.momenta, init.momenta);
  EXPECT_DOUBLE_EQ(end.params[1], 2.0);
}

TEST(Quadrature, FullCosinePeriodAgainstFineSimpson) {
  const auto m = cosine_model();
  const auto sys = plane_wave_system(m);
  const auto init = initial_point(m, sys, 0.0, 0.0, {0, 0, 0}, {0.0, 0.0});
  const double period = 2 * std::numbers::pi;
  const auto end = quadrature_solution(m, init, period);
  EXPECT_NEAR(end.coords[1], 0.0, 1e-14);
  const auto q = oracle::plane_wave_by_quadrature(oracle::Wave{}, 0.0, period, 0, 0, 0, -1.0, 0.0, 0.0, 1000000);
  EXPECT_NEAR(end.coords[0], q.xp, 1e-10);
  EXPECT_NEAR(end.coords[1], q.x1, 1e-10);
  EXPECT_NEAR(end.action, q.z, 1e-10);
  // xp advance over a period: (m^2 + (e a)^2 / 2) * period / (2 pi+^2)
  EXPECT_NEAR(end.coords[0], (1.0 + 0.09 / 2) * period / 2.0, 1e-12);
}

TEST(Quadrature, GeneralStartAgainstSimpson) {
  const auto m = cosine_model(0.6, 1.7);
  const auto sys = plane_wave_system(m);
  const auto init = initial_point(m, sys, 0.5, -0.4, {0.3, -0.1, 0.2}, {0.25, -0.15});
  const auto end = quadrature_solution(m, init, 3.1);
  const oracle::Wave w{1.0, 1.0, 0.6, 1.7};
  const auto q = oracle::plane_wave_by_quadrature(w, -0.4, 3.1, 0.3, -0.1, 0.2, -1.0, 0.25, -0.15);
  EXPECT_NEAR(end.coords[0], q.xp, 1e-11);
  EXPECT_NEAR(end.coords[1], q.x1, 1e-11);
  EXPECT_NEAR(end.coords[2], q.x2, 1e-11);
  EXPECT_NEAR(end.action - init.action, q.z, 1e-11);
  EXPECT_NEAR(end.conjugates[1], q.p_xm, 1e-13);
  EXPECT_DOUBLE_EQ(end.params[0], 0.5);
}

TEST(Quadrature, DerivativeMatchesPfaffianRhs) {
  const auto m = cosine_model(0.4, 1.3);
  const auto sys = plane_wave_system(m);
  const auto terms = pfaffian_terms(sys);
  const auto& xm_terms = terms[1];
  const auto init = initial_point(m, sys, 0.0, 0.0, {0.1, 0.2, 0.3}, {0.3, -0.2});
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> u(0.2, 5.0);
  const auto names = state_names(sys);
  for (int i = 0; i < 10; ++i) {
    const double x = u(rng);
    const auto at = quadrature_solution(m, init, x);
    Bindings b;
    const auto packed = at.pack();
    for (std::size_t j = 0; j + 1 < names.size(); ++j) b[names[j]] = packed[j];
    const double h = 1e-5;
    const auto hi = quadrature_solution(m, init, x + h);
    const auto lo = quadrature_solution(m, init, x - h);
    for (std::size_t a = 0; a < 3; ++a) {
      const double fd = (hi.coords[a] - lo.coords[a]) / (2 * h);
      const double rhs = evaluate(xm_terms.dq[a], b);
      EXPECT_LE(std::abs(fd - rhs) / std::max(1.0, std::abs(rhs)), 1e-6);
    }
    const double fd_z = (hi.action - lo.action) / (2 * h);
    EXPECT_LE(std::abs(fd_z - evaluate(xm_terms.action, b)) / std::max(1.0, std::abs(fd_z)), 1e-6);
    const double fd_conj = (hi.conjugates[1] - lo.conjugates[1]) / (2 * h);
    EXPECT_LE(std::abs(fd_conj - evaluate(xm_terms.dconj[1], b)), 1e-6);
  }
}

TEST(Quadrature, Errors) {
  ModelParams pulse;
  pulse.potential[0] = PotentialSpec::pulse(0.5, 1.0, 1.0);
  const auto sys = plane_wave_system(pulse);
  const auto init = initial_point(pulse, sys, 0.0, 0.0, {0, 0, 0}, {0, 0});
  EXPECT_THROW(quadrature_solution(pulse, init, 1.0), PreconditionError);
  PhasePoint wrong{{0}, {0}, {0}, {0}, 0};
  EXPECT_THROW(quadrature_solution(ModelParams{}, wrong, 1.0), PreconditionError);
}

// ---------------------------------------------------------------- Legendre consistency

TEST(Legendre, RestFrameExample) {
  ModelParams free;
  free.e = 0.0;
  const auto pi = momenta_from_velocities(free, 0.0, 1.0, 1.0, {0.0, 0.0});
  EXPECT_NEAR(pi.pi_plus, -1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(pi.pi_minus, -1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(2 * pi.pi_plus * pi.pi_minus, 1.0, 1e-15);
}

TEST(Legendre, MomentaAreVelocityGradientsOfLagrangian) {
  const auto m = cosine_model();
  const oracle::Wave w;
  std::mt19937_64 rng(73);
  std::uniform_real_distribution<double> u(0.3, 1.5), t(-0.4, 0.4), x(-3, 3);
  for (int i = 0; i < 20; ++i) {
    const double vp = u(rng), vm = u(rng), v1 = t(rng), v2 = t(rng), xm = x(rng);
    const auto pi = momenta_from_velocities(m, xm, vp, vm, {v1, v2});
    auto d = [&](int which) {
      return oracle::central_difference(
          [&](double v) {
            return lagrangian(w, xm, which == 0 ? v : vp, which == 1 ? v : vm, which == 2 ? v : v1,
                              which == 3 ? v : v2);
          },
          which == 0 ? vp : which == 1 ? vm : which == 2 ? v1 : v2, 1e-6);
    };
    EXPECT_NEAR(pi.pi_plus, d(0), 1e-8);
    EXPECT_NEAR(pi.pi_minus, d(1), 1e-8);
    EXPECT_NEAR(pi.pi_perp[0], d(2), 1e-8);
    EXPECT_NEAR(pi.pi_perp[1], d(3), 1e-8);
  }
}

TEST(Legendre, ReparametrizationInvariance) {
  const auto m = cosine_model();
  const auto a = momenta_from_velocities(m, 0.4, 0.7, 1.3, {0.2, -0.3});
  const auto b = momenta_from_velocities(m, 0.4, 1.4, 2.6, {0.4, -0.6});
  EXPECT_NEAR(a.pi_plus, b.pi_plus, 1e-15);
  EXPECT_NEAR(a.pi_minus, b.pi_minus, 1e-15);
  EXPECT_NEAR(a.pi_perp[0], b.pi_perp[0], 1e-15);
  EXPECT_NEAR(a.pi_perp[1], b.pi_perp[1], 1e-15);
}

TEST(Legendre, OutsideTimelikeDomain) {
  const ModelParams m;
  EXPECT_THROW(momenta_from_velocities(m, 0.0, 1.0, 1.0, {2.0, 0.0}), PreconditionError);
  EXPECT_THROW(momenta_from_velocities(m, 0.0, 1.0, 0.0, {0.0, 0.0}), PreconditionError);
  EXPECT_THROW(momenta_from_velocities(m, 0.0, -1.0, 1.0, {0.0, 0.0}), PreconditionError);
}

TEST(Legendre, AllModelsPass) {
  for (const auto& m : shipped_models()) {
    const auto r = verify_legendre(m, 50, 42);
    EXPECT_EQ(r.samples, 50);
    EXPECT_TRUE(r.passed()) << r.mass_shell << " " << r.velocity_relations << " "
                            << r.canonical_hamiltonian << " " << r.reparametrization;
  }
}

TEST(Legendre, UnsignedTransverseRelationFails) {
  const auto r = verify_legendre(cosine_model(), 50, 42);
  EXPECT_GT(r.unsigned_transverse_relation, 1e-3);
}

TEST(Legendre, DeterministicForSeed) {
  const auto a = verify_legendre(cosine_model(), 10, 7);
  const auto b = verify_legendre(cosine_model(), 10, 7);
  EXPECT_EQ(a.mass_shell, b.mass_shell);
  EXPECT_EQ(a.velocity_relations, b.velocity_relations);
  EXPECT_THROW(verify_legendre(cosine_model(), 0, 7), PreconditionError);
}

// ---------------------------------------------------------------- fixtures

TEST(Fixtures, NonintegrableSystem) {
  const auto sys = nonintegrable_fixture();
  const auto r = integrability_matrix(sys);
  EXPECT_EQ(r.classification, Classification::NotIntegrable);
  const auto& e = r.at(sys.parameter_index("s1"), sys.parameter_index("s2"));
  ASSERT_TRUE(e.on_surface.witness);
  EXPECT_NEAR(e.on_surface.witness_value, -e.on_surface.witness->at("p_q") * e.on_surface.witness->at("q"), 1e-12);
}

TEST(Fixtures, RestrictedFixtureIsIntegrable) {
  const auto sys = nonintegrable_fixture(true);
  EXPECT_EQ(sys.parameters(), (std::vector<std::string>{"tau", "s1"}));
  EXPECT_EQ(integrability_matrix(sys).classification, Classification::AbelianFirstClass);
}

TEST(Fixtures, MatchesShippedDocument) {
  EXPECT_EQ(nonintegrable_document(), read_json_file(oracle::data("fixture_nonintegrable.json")));
}

TEST(Fixtures, RectangleDiscrepancyGrowsWithArea) {
  const auto sys = nonintegrable_fixture();
  const auto init = make_on_surface(sys, {0, 0, 0}, {0.5}, {0.5});
  auto discrepancy = [&](double side) {
    const auto a = make_path(sys, {{0, 0, 0}, {0, side, 0}, {0, side, side}});
    const auto b = make_path(sys, {{0, 0, 0}, {0, 0, side}, {0, side, side}});
    return path_independence_check(sys, init, a, b, 200).max;
  };
  const double small = discrepancy(0.05), large = discrepancy(0.1);
  EXPECT_GT(large, small);
  // leading term is the bracket times the enclosed area
  EXPECT_NEAR(large / small, 4.0, 0.4);
}
