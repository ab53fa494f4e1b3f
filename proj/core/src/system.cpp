#include "hjflow/system.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "hjflow/error.hpp"

namespace hjflow {

std::string momentum_of(std::string_view name) { return "p_" + std::string(name); }

ConstrainedSystem::ConstrainedSystem(std::string name, std::vector<std::string> coordinates,
                                     std::vector<std::string> parameters,
                                     std::map<std::string, double> constants,
                                     Definitions definitions,
                                     std::map<std::string, Expr> hamiltonians,
                                     std::vector<SingularExclusion> singular)
    : name_(std::move(name)),
      coordinates_(std::move(coordinates)),
      parameters_(std::move(parameters)),
      constants_(std::move(constants)),
      definitions_(std::move(definitions)),
      singular_(std::move(singular)) {
  if (parameters_.empty()) throw SchemaError("system needs at least one parameter");

  // user symbols, then generated momenta; every name must be unique
  std::map<std::string, std::string> owner;
  auto claim = [&](const std::string& sym, const std::string& role) {
    if (!is_identifier(sym)) throw SchemaError(role + " '" + sym + "' is not a valid identifier");
    if (is_builtin_function(sym)) throw SchemaError(role + " '" + sym + "' shadows a function");
    auto [it, fresh] = owner.emplace(sym, role);
    if (!fresh) {
      throw SchemaError("symbol collision: '" + sym + "' is both " + it->second + " and " + role);
    }
  };
  for (const auto& c : coordinates_) claim(c, "coordinate");
  for (const auto& p : parameters_) claim(p, "parameter");
  for (const auto& [k, v] : constants_) {
    claim(k, "constant");
    if (!std::isfinite(v)) throw SchemaError("constant '" + k + "' is not finite");
  }
  for (const auto& [k, d] : definitions_) {
    claim(k, "definition");
    for (const auto& param : d.params) {
      if (!is_identifier(param)) {
        throw SchemaError("definition '" + k + "' has invalid parameter '" + param + "'");
      }
    }
  }
  for (const auto& c : coordinates_) claim(momentum_of(c), "momentum of coordinate " + c);
  for (const auto& p : parameters_) claim(momentum_of(p), "conjugate of parameter " + p);

  for (const auto& [k, h] : hamiltonians) {
    if (std::find(parameters_.begin(), parameters_.end(), k) == parameters_.end()) {
      throw SchemaError("hamiltonian given for unknown parameter '" + k + "'");
    }
  }

  std::set<std::string> allowed(coordinates_.begin(), coordinates_.end());
  allowed.insert(parameters_.begin(), parameters_.end());
  for (const auto& c : coordinates_) allowed.insert(momentum_of(c));
  const auto conjugates = parameter_conjugates();

  for (const auto& p : parameters_) {
    auto it = hamiltonians.find(p);
    if (it == hamiltonians.end()) throw SchemaError("missing hamiltonian for parameter '" + p + "'");
    raw_.push_back(it->second);
    Expr r;
    try {
      r = resolve(it->second);
    } catch (const SubstitutionError& e) {
      throw SchemaError("hamiltonians." + p + ": " + e.what());
    }
    for (const auto& call : user_calls(r)) {
      throw SchemaError("hamiltonians." + p + ": unresolved function '" + call + "'");
    }
    for (const auto& s : free_symbols(r)) {
      if (std::find(conjugates.begin(), conjugates.end(), s) != conjugates.end()) {
        throw SchemaError("hamiltonians." + p + " references parameter conjugate '" + s +
                          "'; H may depend only on parameters, coordinates and momenta");
      }
      if (!allowed.contains(s)) {
        throw SchemaError("hamiltonians." + p + " references unknown symbol '" + s + "'");
      }
    }
    resolved_.push_back(r);
  }

  for (const auto& s : singular_) {
    if (!owner.contains(s.symbol)) {
      throw SchemaError("singular exclusion names unknown symbol '" + s.symbol + "'");
    }
    if (!(s.exclude_abs_below >= 0.0)) {
      throw SchemaError("singular exclusion for '" + s.symbol + "' must be non-negative");
    }
  }
}

std::vector<std::string> ConstrainedSystem::coordinate_momenta() const {
  std::vector<std::string> out;
  for (const auto& c : coordinates_) out.push_back(momentum_of(c));
  return out;
}

std::vector<std::string> ConstrainedSystem::parameter_conjugates() const {
  std::vector<std::string> out;
  for (const auto& p : parameters_) out.push_back(momentum_of(p));
  return out;
}

std::size_t ConstrainedSystem::parameter_index(std::string_view parameter) const {
  auto it = std::find(parameters_.begin(), parameters_.end(), parameter);
  if (it == parameters_.end()) throw SchemaError("unknown parameter '" + std::string(parameter) + "'");
  return static_cast<std::size_t>(it - parameters_.begin());
}

std::size_t ConstrainedSystem::coordinate_index(std::string_view coordinate) const {
  auto it = std::find(coordinates_.begin(), coordinates_.end(), coordinate);
  if (it == coordinates_.end()) {
    throw SchemaError("unknown coordinate '" + std::string(coordinate) + "'");
  }
  return static_cast<std::size_t>(it - coordinates_.begin());
}

const Expr& ConstrainedSystem::raw_hamiltonian(std::string_view parameter) const {
  return raw_[parameter_index(parameter)];
}

const Expr& ConstrainedSystem::hamiltonian(std::string_view parameter) const {
  return resolved_[parameter_index(parameter)];
}

Expr ConstrainedSystem::resolve(const Expr& e) const {
  std::map<std::string, Expr, std::less<>> values;
  for (const auto& [k, v] : constants_) values.emplace(k, Expr::number(v));
  return fold(replace_symbols(substitute(e, definitions_), values));
}

ConjugatePairs ConstrainedSystem::extended_pairs() const {
  std::vector<ConjugatePair> pairs;
  for (const auto& c : coordinates_) pairs.push_back({c, momentum_of(c)});
  for (const auto& p : parameters_) pairs.push_back({p, momentum_of(p)});
  return ConjugatePairs(std::move(pairs));
}

SamplingDomain ConstrainedSystem::sampling_domain(double range) const {
  SamplingDomain d;
  const auto pairs = extended_pairs();
  for (const auto& [q, p] : pairs.pairs()) {
    d[q] = Interval{-range, range, 0.0};
    d[p] = Interval{-range, range, 0.0};
  }
  for (const auto& s : singular_) {
    auto& iv = d[s.symbol];
    iv.exclude_abs_below = s.exclude_abs_below;
    // keep a nonempty admissible set around the exclusion
    iv.lo = std::min(iv.lo, -4.0 * s.exclude_abs_below);
    iv.hi = std::max(iv.hi, 4.0 * s.exclude_abs_below);
  }
  return d;
}

nlohmann::json ConstrainedSystem::to_json() const {
  nlohmann::json doc;
  doc["name"] = name_;
  doc["coordinates"] = coordinates_;
  doc["parameters"] = parameters_;
  doc["constants"] = nlohmann::json::object();
  for (const auto& [k, v] : constants_) doc["constants"][k] = v;
  doc["definitions"] = nlohmann::json::object();
  for (const auto& [k, d] : definitions_) {
    std::string key = k;
    if (!d.params.empty()) {
      key += '(';
      for (std::size_t i = 0; i < d.params.size(); ++i) key += (i ? "," : "") + d.params[i];
      key += ')';
    }
    doc["definitions"][key] = d.body.str();
  }
  doc["hamiltonians"] = nlohmann::json::object();
  for (std::size_t i = 0; i < parameters_.size(); ++i) {
    doc["hamiltonians"][parameters_[i]] = raw_[i].str();
  }
  doc["singular"] = nlohmann::json::array();
  for (const auto& s : singular_) {
    doc["singular"].push_back({{"symbol", s.symbol}, {"exclude_abs_below", s.exclude_abs_below}});
  }
  return doc;
}

// ---------------------------------------------------------------- loading

namespace {

Expr parse_at(const nlohmann::json& v, const std::string& path) {
  if (!v.is_string()) throw SchemaError(path + ": expected an expression string");
  try {
    return parse(v.get<std::string>());
  } catch (const ParseError& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

std::vector<std::string> string_list(const nlohmann::json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_array()) {
    throw SchemaError(std::string(key) + ": expected an array of names");
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < doc[key].size(); ++i) {
    const auto& v = doc[key][i];
    if (!v.is_string()) {
      throw SchemaError(std::string(key) + "[" + std::to_string(i) + "]: expected a string");
    }
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::pair<std::string, std::vector<std::string>> split_definition_key(const std::string& key) {
  const auto open = key.find('(');
  if (open == std::string::npos) return {key, {}};
  if (key.back() != ')') throw SchemaError("definitions." + key + ": malformed parameter list");
  std::vector<std::string> params;
  std::stringstream ss(key.substr(open + 1, key.size() - open - 2));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), [](char c) { return c == ' '; }),
               item.end());
    params.push_back(item);
  }
  return {key.substr(0, open), params};
}

}  // namespace

ConstrainedSystem load_system(const nlohmann::json& doc) {
  if (!doc.is_object()) throw SchemaError("system document must be an object");
  static const std::set<std::string> kKeys = {"name",        "coordinates",  "parameters",
                                              "constants",   "definitions",  "hamiltonians",
                                              "singular"};
  for (const auto& [k, v] : doc.items()) {
    if (!kKeys.contains(k)) throw SchemaError("unexpected key '" + k + "'");
  }
  if (!doc.contains("name") || !doc["name"].is_string()) throw SchemaError("name: expected a string");
  auto coordinates = string_list(doc, "coordinates");
  auto parameters = string_list(doc, "parameters");

  std::map<std::string, double> constants;
  if (doc.contains("constants")) {
    if (!doc["constants"].is_object()) throw SchemaError("constants: expected an object");
    for (const auto& [k, v] : doc["constants"].items()) {
      if (!v.is_number()) throw SchemaError("constants." + k + ": expected a number");
      constants[k] = v.get<double>();
    }
  }

  Definitions definitions;
  if (doc.contains("definitions")) {
    if (!doc["definitions"].is_object()) throw SchemaError("definitions: expected an object");
    for (const auto& [k, v] : doc["definitions"].items()) {
      auto [name, params] = split_definition_key(k);
      definitions[name] = Definition{params, parse_at(v, "definitions." + k)};
    }
  }

  if (!doc.contains("hamiltonians") || !doc["hamiltonians"].is_object()) {
    throw SchemaError("hamiltonians: expected an object");
  }
  std::map<std::string, Expr> hamiltonians;
  for (const auto& [k, v] : doc["hamiltonians"].items()) {
    hamiltonians[k] = parse_at(v, "hamiltonians." + k);
  }

  std::vector<SingularExclusion> singular;
  if (doc.contains("singular")) {
    if (!doc["singular"].is_array()) throw SchemaError("singular: expected an array");
    for (std::size_t i = 0; i < doc["singular"].size(); ++i) {
      const auto& s = doc["singular"][i];
      const std::string path = "singular[" + std::to_string(i) + "]";
      if (!s.is_object() || !s.contains("symbol") || !s["symbol"].is_string() ||
          !s.contains("exclude_abs_below") || !s["exclude_abs_below"].is_number()) {
        throw SchemaError(path + ": expected {\"symbol\": string, \"exclude_abs_below\": number}");
      }
      singular.push_back({s["symbol"].get<std::string>(), s["exclude_abs_below"].get<double>()});
    }
  }

  return ConstrainedSystem(doc["name"].get<std::string>(), std::move(coordinates),
                           std::move(parameters), std::move(constants), std::move(definitions),
                           std::move(hamiltonians), std::move(singular));
}

ConstrainedSystem load_system_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open system document '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
  return load_system(doc);
}

// ---------------------------------------------------------------- analysis

std::vector<ExtendedHamiltonian> build_extended_hamiltonians(const ConstrainedSystem& sys) {
  std::vector<ExtendedHamiltonian> out;
  for (const auto& p : sys.parameters()) {
    out.push_back({p, Expr::symbol(momentum_of(p)) + sys.hamiltonian(p)});
  }
  return out;
}

std::string_view to_string(Classification c) {
  switch (c) {
    case Classification::AbelianFirstClass:
      return "abelian-first-class";
    case Classification::FirstClassOnSurface:
      return "first-class-on-surface";
    case Classification::NotIntegrable:
      return "not-integrable";
  }
  return "unknown";
}

BindingHook on_surface_hook(const ConstrainedSystem& sys) {
  std::vector<std::pair<std::string, Expr>> conj;
  for (const auto& p : sys.parameters()) conj.emplace_back(momentum_of(p), sys.hamiltonian(p));
  return [conj](Bindings& b) {
    for (const auto& [name, h] : conj) b[name] = -evaluate(h, b);
  };
}

IntegrabilityReport integrability_matrix(const ConstrainedSystem& sys,
                                         const ZeroTestOptions& opts) {
  const auto ext = build_extended_hamiltonians(sys);
  const auto pairs = sys.extended_pairs();
  const auto domain = sys.sampling_domain();
  const auto hook = on_surface_hook(sys);

  IntegrabilityReport report;
  report.parameters = sys.parameters();
  const std::size_t n = ext.size();
  report.entries.resize(n * n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      auto& entry = report.entries[a * n + b];
      entry.bracket = poisson_bracket(ext[a].expr, ext[b].expr, pairs);
      entry.identically = is_zero(entry.bracket, domain, opts);
      entry.on_surface = is_zero(entry.bracket, domain, opts, hook);
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) {
      const Expr sum = report.at(a, b).bracket + report.at(b, a).bracket;
      if (!is_zero(sum, domain, opts).zero) report.antisymmetric = false;
    }
  }
  report.classification = classify_flags(report);
  return report;
}

Classification classify_flags(const IntegrabilityReport& report) {
  const bool all_identically = std::all_of(report.entries.begin(), report.entries.end(),
                                           [](const auto& e) { return e.identically.zero; });
  if (all_identically) return Classification::AbelianFirstClass;
  const bool all_on_surface = std::all_of(report.entries.begin(), report.entries.end(),
                                          [](const auto& e) { return e.on_surface.zero; });
  return all_on_surface ? Classification::FirstClassOnSurface : Classification::NotIntegrable;
}

ClassificationSummary classify(const IntegrabilityReport& report) {
  ClassificationSummary out{classify_flags(report), {}};
  std::ostringstream os;
  os.precision(17);
  os << "classification: " << to_string(out.classification) << '\n';
  const std::size_t n = report.size();
  bool any = false;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const auto& e = report.at(a, b);
      if (e.identically.zero && e.on_surface.zero) continue;
      if (!any) os << "nonzero brackets:\n";
      any = true;
      os << "  {H'_" << report.parameters[a] << ", H'_" << report.parameters[b]
         << "} = " << e.bracket.str() << '\n';
      const ZeroVerdict& v = e.on_surface.zero ? e.identically : e.on_surface;
      os << "    " << (e.on_surface.zero ? "vanishes on surface only" : "nonzero on surface");
      if (v.witness) os << "; witness " << format_bindings(*v.witness) << " -> " << v.witness_value;
      os << '\n';
    }
  }
  if (!any) os << "all extended brackets vanish\n";
  out.text = os.str();
  return out;
}

// ---------------------------------------------------------------- pfaffian

std::vector<PfaffianTerms> pfaffian_terms(const ConstrainedSystem& sys) {
  std::vector<PfaffianTerms> out;
  const auto ext = build_extended_hamiltonians(sys);
  const auto momenta = sys.coordinate_momenta();
  for (std::size_t a = 0; a < ext.size(); ++a) {
    PfaffianTerms t;
    t.parameter = ext[a].parameter;
    const Expr& hp = ext[a].expr;
    Expr p_dh = Expr::number(0.0);
    for (std::size_t i = 0; i < sys.coordinates().size(); ++i) {
      Expr dhdp = differentiate(hp, momenta[i]);
      t.dq.push_back(dhdp);
      t.dp.push_back(-differentiate(hp, sys.coordinates()[i]));
      p_dh = p_dh + Expr::symbol(momenta[i]) * dhdp;
    }
    for (const auto& beta : sys.parameters()) t.dconj.push_back(-differentiate(hp, beta));
    t.action = p_dh - sys.hamiltonian(ext[a].parameter);
    out.push_back(std::move(t));
  }
  return out;
}

PfaffianRhs::PfaffianRhs(const ConstrainedSystem& sys)
    : n_params_(sys.parameters().size()),
      n_coords_(sys.coordinates().size()),
      terms_(pfaffian_terms(sys)) {
  slots_ = sys.parameters();
  slots_.insert(slots_.end(), sys.coordinates().begin(), sys.coordinates().end());
  for (const auto& m : sys.coordinate_momenta()) slots_.push_back(m);
  for (const auto& m : sys.parameter_conjugates()) slots_.push_back(m);

  auto compile_all = [&](const std::vector<Expr>& es, std::vector<CompiledExpr>& cs,
                         std::vector<bool>& zero) {
    for (const auto& e : es) {
      cs.emplace_back(e, slots_);
      zero.push_back(e.is_number(0.0));
    }
  };
  for (const auto& t : terms_) {
    Compiled c;
    compile_all(t.dq, c.dq, c.dq_zero);
    compile_all(t.dp, c.dp, c.dp_zero);
    compile_all(t.dconj, c.dconj, c.dconj_zero);
    c.action = CompiledExpr(t.action, slots_);
    c.action_zero = t.action.is_number(0.0);
    c.h = CompiledExpr(sys.hamiltonian(t.parameter), slots_);
    compiled_.push_back(std::move(c));
  }
}

void PfaffianRhs::accumulate(std::size_t alpha, double weight, std::span<const double> x,
                             std::span<double> dx) const {
  if (weight == 0.0) return;
  const auto& c = compiled_[alpha];
  const std::size_t q0 = n_params_;
  const std::size_t p0 = n_params_ + n_coords_;
  const std::size_t c0 = n_params_ + 2 * n_coords_;
  dx[alpha] += weight;
  for (std::size_t i = 0; i < n_coords_; ++i) {
    if (!c.dq_zero[i]) dx[q0 + i] += weight * c.dq[i](x);
    if (!c.dp_zero[i]) dx[p0 + i] += weight * c.dp[i](x);
  }
  for (std::size_t b = 0; b < n_params_; ++b) {
    if (!c.dconj_zero[b]) dx[c0 + b] += weight * c.dconj[b](x);
  }
  if (!c.action_zero) dx[c0 + n_params_] += weight * c.action(x);
}

double PfaffianRhs::hamiltonian(std::size_t alpha, std::span<const double> x) const {
  return compiled_[alpha].h(x);
}

double PfaffianRhs::extended_hamiltonian(std::size_t alpha, std::span<const double> x) const {
  return x[n_params_ + 2 * n_coords_ + alpha] + compiled_[alpha].h(x);
}

}  // namespace hjflow
