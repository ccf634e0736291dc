#include "hexpert/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

namespace hexpert::config {

namespace {

constexpr unsigned bit(Kind k) { return 1u << static_cast<unsigned>(k); }
constexpr unsigned kAll = 0x3Fu;
constexpr unsigned kLearned = bit(Kind::Supervised) | bit(Kind::Density) | bit(Kind::RL) | bit(Kind::Meta) |
                              bit(Kind::RateUtilitySweep);
constexpr unsigned kClassify = bit(Kind::Supervised) | bit(Kind::RateUtilitySweep);

// Returns an error message, or nullopt when the value is acceptable.
using Check = std::function<std::optional<std::string>(const Config&, const std::string& key)>;

struct Field {
  std::string key;
  FieldType type;
  unsigned kinds;
  std::string def;
  std::vector<std::pair<Kind, std::string>> kind_defaults;
  Check check;
  std::string help;

  std::string default_for(Kind k) const {
    for (const auto& [kk, v] : kind_defaults)
      if (kk == k) return v;
    return def;
  }
};

Check positive() {
  return [](const Config& c, const std::string& k) -> std::optional<std::string> {
    if (c.get_double(k) > 0.0) return std::nullopt;
    return "must be > 0";
  };
}

Check at_least(long lo) {
  return [lo](const Config& c, const std::string& k) -> std::optional<std::string> {
    if (c.get_int(k) >= lo) return std::nullopt;
    return "must be >= " + std::to_string(lo);
  };
}

Check non_negative() {
  return [](const Config& c, const std::string& k) -> std::optional<std::string> {
    if (c.get_double(k) >= 0.0) return std::nullopt;
    return "must be >= 0";
  };
}

Check open_unit() {
  return [](const Config& c, const std::string& k) -> std::optional<std::string> {
    const double v = c.get_double(k);
    if (v > 0.0 && v < 1.0) return std::nullopt;
    return "must lie in (0, 1)";
  };
}

Check closed_unit() {
  return [](const Config& c, const std::string& k) -> std::optional<std::string> {
    const double v = c.get_double(k);
    if (v >= 0.0 && v <= 1.0) return std::nullopt;
    return "must lie in [0, 1]";
  };
}

Check one_of(std::vector<std::string> options) {
  return [options](const Config& c, const std::string& k) -> std::optional<std::string> {
    const std::string v = c.get_string(k);
    if (std::find(options.begin(), options.end(), v) != options.end()) return std::nullopt;
    std::string msg = "must be one of";
    for (const auto& o : options) msg += " " + o;
    return msg;
  };
}

Check positive_ints() {
  return [](const Config& c, const std::string& k) -> std::optional<std::string> {
    for (int v : c.get_ints(k))
      if (v < 1) return "entries must be >= 1";
    return std::nullopt;
  };
}

Check positive_doubles(bool nonempty) {
  return [nonempty](const Config& c, const std::string& k) -> std::optional<std::string> {
    const auto vs = c.get_doubles(k);
    if (nonempty && vs.empty()) return "must not be empty";
    for (double v : vs)
      if (!(v > 0.0)) return "entries must be > 0";
    return std::nullopt;
  };
}

Check any() {
  return [](const Config&, const std::string&) -> std::optional<std::string> { return std::nullopt; };
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    using K = Kind;
    using T = FieldType;
    std::vector<Field> f;
    f.push_back({"kind", T::String, kAll, "", {},
                 one_of({"oracle", "supervised", "density", "rl", "meta", "rate-utility-sweep"}),
                 "experiment kind"});
    f.push_back({"seed", T::Int, kAll, "0", {}, at_least(0), "master seed"});
    f.push_back({"name", T::String, kAll, "", {}, any(), "output subdirectory; defaults to the kind"});
    f.push_back({"rp.beta1", T::Double, kAll, "25", {{K::Density, "20"}}, positive(), "selector resource"});
    f.push_back({"rp.beta2",
                 T::Double,
                 kAll,
                 "10",
                 {{K::Density, "1"}, {K::RL, "2.5"}, {K::Meta, "1.25"}},
                 positive(),
                 "expert resource"});
    f.push_back({"rp.lambda1", T::Double, kLearned, "0.99", {}, open_unit(), "EMA rate of expert priors"});
    f.push_back({"rp.lambda2", T::Double, kLearned, "0.99", {}, open_unit(), "EMA rate of p(m)"});
    f.push_back({"rp.gamma", T::Double, bit(K::RL), "0.99", {}, closed_unit(), "discount"});
    f.push_back({"sweep.param", T::String, kAll, "", {}, any(), "key varied by the sweep command"});
    f.push_back({"sweep.values", T::String, kAll, "", {}, any(), "comma-separated values of sweep.param"});
    f.push_back({"sweep.seeds", T::IntList, kAll, "0", {}, any(), "seeds run by the sweep command"});

    f.push_back({"model.experts", T::Int, kAll, "4", {{K::Oracle, "2"}, {K::RL, "2"}, {K::Meta, "8"}}, at_least(1),
                 "number of experts M"});
    f.push_back({"model.selector_hidden", T::IntList, kLearned, "10,10", {{K::RL, "32,32"}, {K::Meta, "16,16"}},
                 positive_ints(), "selector hidden widths"});
    f.push_back({"model.expert_hidden", T::IntList, bit(K::Supervised) | bit(K::RateUtilitySweep) | bit(K::RL) |
                                                        bit(K::Meta),
                 "", {{K::Meta, "40"}}, positive_ints(), "expert hidden widths; empty is linear"});

    f.push_back({"oracle.states", T::Int, bit(K::Oracle), "4", {}, at_least(1), "|X| of a random problem"});
    f.push_back({"oracle.actions", T::Int, bit(K::Oracle), "3", {}, at_least(1), "|Y| of a random problem"});
    f.push_back({"oracle.utility", T::Matrix, bit(K::Oracle), "", {}, any(),
                 "explicit utility rows 'u u u; u u u'; empty draws a random problem"});
    f.push_back({"oracle.px", T::DoubleList, bit(K::Oracle), "", {}, any(), "p(x) for an explicit utility; empty is uniform"});
    f.push_back({"oracle.tol", T::Double, bit(K::Oracle), "1e-10", {}, positive(), "sweep change tolerance"});
    f.push_back({"oracle.max_sweeps", T::Int, bit(K::Oracle), "100000", {}, at_least(1), "sweep budget"});

    f.push_back({"data.name", T::String, kClassify, "circles", {}, one_of({"circles", "moons", "blobs", "tabular"}),
                 "dataset"});
    f.push_back({"data.n", T::Int, kClassify | bit(K::Density), "1024", {{K::Density, "4000"}}, at_least(2),
                 "number of samples"});
    f.push_back({"data.noise", T::Double, kClassify, "0.05", {}, non_negative(), "classification noise"});
    f.push_back({"data.folds", T::Int, kClassify, "10", {}, at_least(2), "cross-validation folds"});
    f.push_back({"data.states", T::Int, kClassify, "4", {}, at_least(1), "tabular |X|"});
    f.push_back({"data.actions", T::Int, kClassify, "3", {}, at_least(1), "tabular |Y|"});
    f.push_back({"data.cov", T::Double, bit(K::Density), "0.15", {}, positive(), "mixture component variance"});
    f.push_back({"data.means", T::Matrix, bit(K::Density), "-1 -1; -1 1; 1 -1; 1 1", {}, any(),
                 "mixture component means, one row each"});

    f.push_back({"train.steps", T::Int, kLearned, "30000", {{K::RL, "2000"}, {K::Meta, "50000"}}, at_least(1),
                 "optimizer steps, RL iterations or meta episodes"});
    f.push_back({"train.batch", T::Int, kLearned, "32", {{K::Density, "64"}, {K::RL, "8"}, {K::Meta, "16"}},
                 at_least(1), "samples, rollouts or tasks per step"});
    f.push_back({"train.selector_lr", T::Double, kLearned, "3e-4", {{K::Density, "1e-3"}, {K::RL, "1e-4"}},
                 positive(), "selector Adam rate"});
    f.push_back({"train.expert_lr", T::Double, kLearned, "3e-4",
                 {{K::Density, "1e-2"}, {K::RL, "1e-4"}, {K::Meta, "1e-3"}}, positive(), "expert Adam rate"});
    f.push_back({"train.critic_lr", T::Double, bit(K::RL), "1e-3", {}, positive(), "critic Adam rate"});
    f.push_back({"train.log_every", T::Int, kLearned, "1000", {{K::RL, "1"}}, at_least(1), "trace interval"});

    f.push_back({"sweep.beta1", T::DoubleList, bit(K::RateUtilitySweep), "0.5,2,10,50", {}, positive_doubles(true),
                 "beta1 grid"});
    f.push_back({"sweep.beta2", T::DoubleList, bit(K::RateUtilitySweep), "0.5,2,10,50", {}, positive_doubles(true),
                 "beta2 grid"});

    f.push_back({"density.lambda", T::Double, bit(K::Density), "25", {}, positive(), "posterior mean precision scale"});
    f.push_back({"density.prior_lambda", T::Double, bit(K::Density), "0.1", {}, positive(),
                 "prior mean precision scale"});
    f.push_back({"density.nu", T::Double, bit(K::Density), "0", {}, non_negative(), "Wishart dof; 0 is D + 2"});
    f.push_back({"density.init_at_data", T::Bool, bit(K::Density), "true", {}, any(),
                 "seed posterior means at spread-out data points"});
    f.push_back({"density.grid_points", T::Int, bit(K::Density), "61", {}, at_least(2), "density grid resolution"});
    f.push_back({"density.grid_lo", T::Double, bit(K::Density), "-3", {}, any(), "density grid lower edge"});
    f.push_back({"density.grid_hi", T::Double, bit(K::Density), "3", {}, any(), "density grid upper edge"});

    f.push_back({"rl.critic_hidden", T::IntList, bit(K::RL), "32,32", {}, positive_ints(), "critic hidden widths"});
    f.push_back({"rl.max_steps", T::Int, bit(K::RL), "500", {}, at_least(1), "episode step limit"});
    f.push_back({"rl.minibatches", T::Int, bit(K::RL), "16", {}, at_least(1), "expert/critic steps per iteration"});
    f.push_back({"rl.critic_epochs", T::Int, bit(K::RL), "4", {}, at_least(1), "critic passes per iteration"});
    f.push_back({"rl.huber_delta", T::Double, bit(K::RL), "1", {}, positive(), "critic Huber threshold"});
    f.push_back({"rl.eval_episodes", T::Int, bit(K::RL), "20", {}, at_least(1), "greedy evaluation episodes"});
    f.push_back({"rl.partition_episodes", T::Int, bit(K::RL), "5", {}, at_least(1), "episodes in the partition dump"});

    f.push_back({"meta.k", T::Int, bit(K::Meta), "10", {}, at_least(1), "shots per split"});
    f.push_back({"meta.bins", T::Int, bit(K::Meta), "20", {}, at_least(1), "embedding bins"});
    f.push_back({"meta.x_lo", T::Double, bit(K::Meta), "-5", {}, any(), "input range lower edge"});
    f.push_back({"meta.x_hi", T::Double, bit(K::Meta), "5", {}, any(), "input range upper edge"});
    f.push_back({"meta.huber_delta", T::Double, bit(K::Meta), "1", {}, positive(), "expert Huber threshold"});
    f.push_back({"meta.adapt_steps", T::Int, bit(K::Meta), "10", {}, at_least(0), "adaptation gradient steps"});
    f.push_back({"meta.adapt_lr", T::Double, bit(K::Meta), "0.01", {}, positive(), "adaptation step size"});
    f.push_back({"meta.eval_tasks", T::Int, bit(K::Meta), "200", {}, at_least(1), "held-out evaluation tasks"});
    f.push_back({"meta.eval_k", T::IntList, bit(K::Meta), "1,5,10", {}, positive_ints(), "shots for evaluation"});
    f.push_back({"meta.grid", T::Int, bit(K::Meta), "20", {}, at_least(1), "partition grid points per axis"});
    return f;
  }();
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return &f;
  return nullptr;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

template <typename T>
std::optional<T> parse_number(const std::string& s) {
  T v{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(v)) return std::nullopt;
  return v;
}

bool valid_key(const std::string& key) {
  if (key.empty()) return false;
  for (char c : key)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-')) return false;
  return true;
}

}  // namespace

const char* to_string(Kind k) {
  switch (k) {
    case Kind::Oracle: return "oracle";
    case Kind::Supervised: return "supervised";
    case Kind::Density: return "density";
    case Kind::RL: return "rl";
    case Kind::Meta: return "meta";
    case Kind::RateUtilitySweep: return "rate-utility-sweep";
  }
  return "?";
}

Kind kind_from_string(const std::string& s) {
  for (Kind k : {Kind::Oracle, Kind::Supervised, Kind::Density, Kind::RL, Kind::Meta, Kind::RateUtilitySweep})
    if (s == to_string(k)) return k;
  throw ConfigError("kind", "unknown experiment kind '" + s + "'");
}

Config Config::parse(std::string_view text, const std::string& source) {
  Config c;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("", source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (!valid_key(key)) throw ConfigError("", source + ":" + std::to_string(lineno) + ": malformed key '" + key + "'");
    if (c.values_.count(key)) throw ConfigError(key, source + ":" + std::to_string(lineno) + ": duplicate key");
    c.values_[key] = value;
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void Config::set(const std::string& key, const std::string& value) {
  if (!valid_key(key)) throw ConfigError("", "malformed key '" + key + "'");
  values_[key] = trim(value);
}

void Config::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("", "override '" + assignment + "' is not key=value");
  set(trim(std::string_view(assignment).substr(0, eq)), assignment.substr(eq + 1));
}

Kind Config::kind() const {
  const auto it = values_.find("kind");
  if (it == values_.end()) throw ConfigError("kind", "required key missing");
  return kind_from_string(it->second);
}

std::string Config::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it != values_.end()) return it->second;
  const Field* f = find_field(key);
  if (!f) throw ConfigError(key, "unknown key");
  if (key == "name") return to_string(kind());
  return f->default_for(kind());
}

void Config::validate() const {
  const Kind k = kind();
  for (const auto& [key, value] : values_) {
    const Field* f = find_field(key);
    if (!f) throw ConfigError(key, "unknown key");
    if (!(f->kinds & bit(k))) throw ConfigError(key, std::string("does not apply to kind '") + to_string(k) + "'");
  }
  for (const auto& f : fields()) {
    if (!(f.kinds & bit(k))) continue;
    // Type check first so the constraint can use the typed getters.
    try {
      switch (f.type) {
        case FieldType::Int: get_int(f.key); break;
        case FieldType::Double: get_double(f.key); break;
        case FieldType::Bool: get_bool(f.key); break;
        case FieldType::String: break;
        case FieldType::IntList: get_ints(f.key); break;
        case FieldType::DoubleList: get_doubles(f.key); break;
        case FieldType::Matrix: get_matrix(f.key); break;
      }
    } catch (const ConfigError&) {
      throw;
    }
    if (auto err = f.check(*this, f.key)) throw ConfigError(f.key, *err + " (got '" + raw(f.key) + "')");
  }
  if (k == Kind::Density && get_matrix("data.means").rows() < 1) throw ConfigError("data.means", "must not be empty");
  if (k == Kind::Density && !(get_double("density.grid_hi") > get_double("density.grid_lo")))
    throw ConfigError("density.grid_hi", "must exceed density.grid_lo");
  if (k == Kind::Meta && !(get_double("meta.x_hi") > get_double("meta.x_lo")))
    throw ConfigError("meta.x_hi", "must exceed meta.x_lo");
  if (k == Kind::Oracle) {
    const Eigen::MatrixXd u = get_matrix("oracle.utility");
    const auto px = get_doubles("oracle.px");
    if (u.size() == 0 && !px.empty()) throw ConfigError("oracle.px", "needs oracle.utility");
    if (u.size() > 0 && !px.empty() && static_cast<Eigen::Index>(px.size()) != u.rows())
      throw ConfigError("oracle.px", "length must equal the number of utility rows");
  }
  const std::string param = get_string("sweep.param");
  if (!param.empty()) {
    if (param == "kind" || param.rfind("sweep.", 0) == 0) throw ConfigError("sweep.param", "cannot sweep '" + param + "'");
    const Field* f = find_field(param);
    if (!f || !(f->kinds & bit(k))) throw ConfigError("sweep.param", "unknown key '" + param + "' for this kind");
    if (get_string("sweep.values").empty()) throw ConfigError("sweep.values", "must list values for sweep.param");
    for (const auto& v : split(get_string("sweep.values"), ',')) {
      Config probe = *this;
      probe.set(param, v);
      try {
        probe.validate_field_only(param);
      } catch (const ConfigError& e) {
        throw ConfigError("sweep.values", std::string("value '") + v + "' rejected: " + e.what());
      }
    }
  }
}

void Config::validate_field_only(const std::string& key) const {
  const Field* f = find_field(key);
  if (!f) throw ConfigError(key, "unknown key");
  switch (f->type) {
    case FieldType::Int: get_int(key); break;
    case FieldType::Double: get_double(key); break;
    case FieldType::Bool: get_bool(key); break;
    case FieldType::String: break;
    case FieldType::IntList: get_ints(key); break;
    case FieldType::DoubleList: get_doubles(key); break;
    case FieldType::Matrix: get_matrix(key); break;
  }
  if (auto err = f->check(*this, key)) throw ConfigError(key, *err + " (got '" + raw(key) + "')");
}

std::vector<std::string> Config::defaulted() const {
  const Kind k = kind();
  std::vector<std::string> out;
  for (const auto& f : fields())
    if ((f.kinds & bit(k)) && !values_.count(f.key)) out.push_back(f.key);
  return out;
}

std::map<std::string, std::string> Config::effective() const {
  const Kind k = kind();
  std::map<std::string, std::string> out;
  for (const auto& f : fields())
    if (f.kinds & bit(k)) out[f.key] = raw(f.key);
  return out;
}

nlohmann::json Config::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : effective()) j[k] = v;
  return j;
}

long Config::get_int(const std::string& key) const {
  const std::string v = raw(key);
  const auto n = parse_number<long>(v);
  if (!n) throw ConfigError(key, "expected an integer (got '" + v + "')");
  return *n;
}

double Config::get_double(const std::string& key) const {
  const std::string v = raw(key);
  const auto n = parse_number<double>(v);
  if (!n) throw ConfigError(key, "expected a finite number (got '" + v + "')");
  return *n;
}

bool Config::get_bool(const std::string& key) const {
  const std::string v = raw(key);
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ConfigError(key, "expected true or false (got '" + v + "')");
}

std::string Config::get_string(const std::string& key) const { return raw(key); }

std::vector<int> Config::get_ints(const std::string& key) const {
  const std::string v = raw(key);
  std::vector<int> out;
  if (v.empty()) return out;
  for (const auto& item : split(v, ',')) {
    const auto n = parse_number<int>(item);
    if (!n) throw ConfigError(key, "expected comma-separated integers (got '" + v + "')");
    out.push_back(*n);
  }
  return out;
}

std::vector<double> Config::get_doubles(const std::string& key) const {
  const std::string v = raw(key);
  std::vector<double> out;
  if (v.empty()) return out;
  for (const auto& item : split(v, ',')) {
    const auto n = parse_number<double>(item);
    if (!n) throw ConfigError(key, "expected comma-separated numbers (got '" + v + "')");
    out.push_back(*n);
  }
  return out;
}

Eigen::MatrixXd Config::get_matrix(const std::string& key) const {
  const std::string v = raw(key);
  if (v.empty()) return {};
  std::vector<std::vector<double>> rows;
  for (const auto& row : split(v, ';')) {
    std::vector<double> r;
    std::istringstream in(row);
    std::string tok;
    while (in >> tok) {
      for (const auto& piece : split(tok, ',')) {
        if (piece.empty()) continue;
        const auto n = parse_number<double>(piece);
        if (!n) throw ConfigError(key, "bad matrix entry '" + piece + "'");
        r.push_back(*n);
      }
    }
    if (r.empty()) throw ConfigError(key, "empty matrix row");
    if (!rows.empty() && r.size() != rows.front().size()) throw ConfigError(key, "matrix rows differ in length");
    rows.push_back(std::move(r));
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

std::vector<FieldInfo> schema_for(Kind kind) {
  std::vector<FieldInfo> out;
  for (const auto& f : fields())
    if (f.kinds & bit(kind)) out.push_back({f.key, f.type, f.help});
  return out;
}

}  // namespace hexpert::config
