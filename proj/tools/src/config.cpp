#include "w2r_cli/config.hpp"

#include "w2r/potentials.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace w2r::cli {

using nlohmann::json;

namespace {

json defaults() {
  return {
      {"seed", 0},
      {"data", "canonical"},
      {"n", 1000},
      {"n_nu", nullptr},
      {"mu_path", nullptr},
      {"nu_path", nullptr},
      {"mu_mean", {0.0, 0.0}},
      {"mu_cov", {{1.0, 0.0}, {0.0, 1.0}}},
      {"nu_mean", {1.0, -1.0}},
      {"nu_cov", {{2.0, 0.5}, {0.5, 1.0}}},
      {"mixture_spread", 2.0},
      {"mixture_var", 0.25},
      {"affine_a", {{1.5, 0.5}, {0.5, 1.0}}},
      {"affine_b", {1.0, -1.0}},
      {"class", "icnn"},
      {"widths", {64, 128, 64}},
      {"first_activation", "relu_squared"},
      {"hidden_activation", "relu"},
      {"strong_convexity", 0.0},
      {"radius", 1.0},
      {"plq_pieces", 2},
      {"eps_spd", kDefaultEpsSpd},
      {"closed_form", true},
      {"epochs", 400},
      {"step", 1e-3},
      {"step_decay", 0.0},
      {"batch", 64},
      {"eval_every", 50},
      {"box_half_width", nullptr},
      {"train_inner_max_iter", 20},
      {"train_inner_grad_tol", 1e-6},
      {"inner_max_iter", 200},
      {"inner_grad_tol", 1e-7},
      {"inner_step_init", 1.0},
      {"inner_backtrack", 0.5},
      {"inner_armijo", 1e-4},
      {"checkpoint", nullptr},
      {"epsilon", 0.1},
      {"sinkhorn_iters", 5000},
      {"sinkhorn_tol", 1e-9},
      {"write_coupling", false},
      {"bench_n", {250, 500, 1000, 2000}},
      {"bench_seeds", 5},
      {"bench_methods", {"restricted_icnn", "restricted_quadratic", "sinkhorn_barycentric"}},
  };
}

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw ConfigError("config key '" + key + "': " + why);
}

template <class T>
T get(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    bad(key, "has the wrong type (" + j.at(key).dump() + ")");
  }
}

double positive(const json& j, const std::string& key) {
  const double v = get<double>(j, key);
  if (!(v > 0.0) || !std::isfinite(v)) bad(key, "must be a positive number");
  return v;
}

Index count(const json& j, const std::string& key, Index min) {
  if (!j.at(key).is_number_integer()) bad(key, "must be an integer");
  const auto v = j.at(key).get<long long>();
  if (v < min) bad(key, "must be >= " + std::to_string(min));
  return static_cast<Index>(v);
}

Vector vector_of(const json& j, const std::string& key) {
  const auto v = get<std::vector<double>>(j, key);
  if (v.empty()) bad(key, "must be a non-empty array");
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

Matrix matrix_of(const json& j, const std::string& key) {
  const auto rows = get<std::vector<std::vector<double>>>(j, key);
  if (rows.empty() || rows.front().empty()) bad(key, "must be a non-empty array of rows");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) bad(key, "rows have different lengths");
    for (std::size_t k = 0; k < rows[i].size(); ++k) m(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
  }
  return m;
}

// A scalar or an array of scalars.
template <class T>
std::vector<T> list_of(const json& j, const std::string& key) {
  const json& v = j.at(key);
  std::vector<T> out;
  try {
    if (v.is_array()) {
      out = v.get<std::vector<T>>();
    } else {
      out.push_back(v.get<T>());
    }
  } catch (const json::exception&) {
    bad(key, "must be a number or an array of numbers");
  }
  if (out.empty()) bad(key, "must not be empty");
  return out;
}

Activation activation_of(const json& j, const std::string& key) {
  try {
    return activation_from_string(get<std::string>(j, key));
  } catch (const ValidationError& e) {
    bad(key, e.what());
  }
}

// Shifted and stretched copies of ½‖x‖²; positive combinations stay convex.
std::vector<BasisFunction> default_basis(Index d) {
  std::vector<BasisFunction> basis;
  basis.push_back(Quadratic{Matrix::Identity(d, d), Vector::Zero(d)});
  for (Index k = 0; k < d; ++k) {
    for (double s : {-1.0, 1.0}) basis.push_back(Quadratic{Matrix::Identity(d, d), s * Vector::Unit(d, k)});
    Matrix stretch = Matrix::Identity(d, d);
    stretch(k, k) = 2.0;
    basis.push_back(Quadratic{stretch, Vector::Zero(d)});
  }
  return basis;
}

ExperimentConfig from_json(const json& j) {
  ExperimentConfig c;
  if (!j.at("seed").is_number_unsigned() && !(j.at("seed").is_number_integer() && j.at("seed").get<long long>() >= 0))
    bad("seed", "must be a nonnegative integer");
  c.seed = j.at("seed").get<std::uint64_t>();

  const auto data = get<std::string>(j, "data");
  if (data == "canonical") {
    c.data = DataSource::canonical;
  } else if (data == "gaussian") {
    c.data = DataSource::gaussian;
  } else if (data == "files") {
    c.data = DataSource::files;
  } else {
    bad("data", "must be one of canonical, gaussian, files");
  }
  c.n = count(j, "n", 1);
  c.n_nu = j.at("n_nu").is_null() ? c.n : count(j, "n_nu", 1);
  if (!j.at("mu_path").is_null()) c.mu_path = get<std::string>(j, "mu_path");
  if (!j.at("nu_path").is_null()) c.nu_path = get<std::string>(j, "nu_path");
  if (c.data == DataSource::files && (c.mu_path.empty() || c.nu_path.empty()))
    bad("data", "'files' requires mu_path and nu_path");

  c.mu_gaussian = {vector_of(j, "mu_mean"), matrix_of(j, "mu_cov")};
  c.nu_gaussian = {vector_of(j, "nu_mean"), matrix_of(j, "nu_cov")};
  c.mixture_spread = get<double>(j, "mixture_spread");
  c.mixture_var = positive(j, "mixture_var");
  c.affine_a = matrix_of(j, "affine_a");
  c.affine_b = vector_of(j, "affine_b");
  if (c.data == DataSource::gaussian) {
    try {
      c.mu_gaussian.validate();
      c.nu_gaussian.validate();
    } catch (const ValidationError& e) {
      bad("mu_cov/nu_cov", e.what());
    }
  }
  if (c.affine_a.rows() != 2 || c.affine_a.cols() != 2 || c.affine_b.size() != 2)
    bad("affine_a/affine_b", "the canonical fixture is two-dimensional");

  ClassSpec& cs = c.class_spec;
  try {
    cs.kind = potential_class_from_string(get<std::string>(j, "class"));
  } catch (const ValidationError& e) {
    bad("class", e.what());
  }
  cs.icnn.widths.clear();
  for (const auto w : list_of<long long>(j, "widths")) {
    if (w < 1) bad("widths", "entries must be positive");
    cs.icnn.widths.push_back(static_cast<Index>(w));
  }
  cs.icnn.first_activation = activation_of(j, "first_activation");
  cs.icnn.hidden_activation = activation_of(j, "hidden_activation");
  cs.icnn.eta = get<double>(j, "strong_convexity");
  if (!(cs.icnn.eta >= 0.0)) bad("strong_convexity", "must be >= 0");
  cs.radius = positive(j, "radius");
  cs.plq_pieces = count(j, "plq_pieces", 1);
  cs.eps_spd = positive(j, "eps_spd");
  cs.prefer_closed_form = get<bool>(j, "closed_form");

  TrainConfig& t = c.train;
  t.epochs = static_cast<int>(count(j, "epochs", 0));
  t.step.values = list_of<double>(j, "step");
  t.step.decay = get<double>(j, "step_decay");
  t.batch_sizes.clear();
  for (const auto m : list_of<long long>(j, "batch")) t.batch_sizes.push_back(static_cast<Index>(m));
  t.eval_every = static_cast<int>(count(j, "eval_every", 1));
  t.seed = c.seed;
  t.inner.max_iter = static_cast<int>(count(j, "train_inner_max_iter", 1));
  t.inner.grad_tol = positive(j, "train_inner_grad_tol");

  ConjugateConfig& e = c.eval_inner;
  e.max_iter = static_cast<int>(count(j, "inner_max_iter", 1));
  e.grad_tol = positive(j, "inner_grad_tol");
  e.step_init = positive(j, "inner_step_init");
  e.backtrack_factor = get<double>(j, "inner_backtrack");
  e.armijo_c = positive(j, "inner_armijo");
  t.inner.step_init = e.step_init;
  t.inner.backtrack_factor = e.backtrack_factor;
  t.inner.armijo_c = e.armijo_c;
  if (!j.at("box_half_width").is_null()) c.box_half_width = positive(j, "box_half_width");
  try {
    t.validate();
    e.validate();
  } catch (const ValidationError& err) {
    throw ConfigError(err.what());
  }

  c.epsilon = positive(j, "epsilon");
  c.sinkhorn_iters = static_cast<int>(count(j, "sinkhorn_iters", 1));
  c.sinkhorn_tol = get<double>(j, "sinkhorn_tol");
  if (!(c.sinkhorn_tol >= 0.0)) bad("sinkhorn_tol", "must be >= 0");
  c.write_coupling = get<bool>(j, "write_coupling");

  for (const auto n : list_of<long long>(j, "bench_n")) {
    if (n < 1) bad("bench_n", "entries must be positive");
    c.bench_n.push_back(static_cast<Index>(n));
  }
  c.bench_seeds = static_cast<int>(count(j, "bench_seeds", 1));
  for (const auto& name : get<std::vector<std::string>>(j, "bench_methods")) {
    if (name == "restricted_icnn") {
      c.bench_methods.push_back(BenchMethod::restricted_icnn);
    } else if (name == "restricted_quadratic") {
      c.bench_methods.push_back(BenchMethod::restricted_quadratic);
    } else if (name == "sinkhorn_barycentric") {
      c.bench_methods.push_back(BenchMethod::sinkhorn_barycentric);
    } else {
      bad("bench_methods", "unknown method '" + name + "'");
    }
  }
  return c;
}

Index data_dim(const ExperimentConfig& c) {
  return c.data == DataSource::gaussian ? c.mu_gaussian.mean.size() : 2;
}

void merge(json& base, const json& extra, const std::string& origin) {
  if (!extra.is_object()) throw ConfigError(origin + ": top level must be a JSON object");
  for (const auto& [key, value] : extra.items()) {
    if (key == "out") continue;
    if (!base.contains(key)) throw ConfigError(origin + ": unknown key '" + key + "'");
    base[key] = value;
  }
}

}  // namespace

std::string_view to_string(BenchMethod m) {
  switch (m) {
    case BenchMethod::restricted_icnn:
      return "restricted_icnn";
    case BenchMethod::restricted_quadratic:
      return "restricted_quadratic";
    case BenchMethod::sinkhorn_barycentric:
      return "sinkhorn_barycentric";
  }
  return "unknown";
}

std::string default_config_json() { return defaults().dump(2); }

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ExperimentConfig resolve_config(const std::optional<std::filesystem::path>& config_file,
                                const std::vector<std::pair<std::string, std::string>>& overrides,
                                std::optional<std::uint64_t> seed, std::optional<std::filesystem::path> out) {
  json resolved = defaults();
  std::filesystem::path out_dir = ".";
  if (config_file) {
    std::ifstream in(*config_file);
    if (!in) throw ConfigError("cannot read config file " + config_file->string());
    json file;
    try {
      file = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
      throw ConfigError(config_file->string() + ": " + e.what());
    }
    merge(resolved, file, config_file->string());
    if (file.contains("out")) {
      if (!file["out"].is_string()) throw ConfigError("config key 'out' must be a string");
      out_dir = file["out"].get<std::string>();
    }
  }
  for (const auto& [key, text] : overrides) {
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    if (key == "out") {
      out_dir = value.is_string() ? value.get<std::string>() : text;
      continue;
    }
    merge(resolved, json{{key, value}}, "--set");
  }
  if (seed) resolved["seed"] = *seed;
  if (out) out_dir = *out;

  ExperimentConfig c = from_json(resolved);
  c.out = out_dir;
  c.checkpoint = resolved["checkpoint"].is_null() ? out_dir / "checkpoint.json"
                                                  : std::filesystem::path(resolved["checkpoint"].get<std::string>());
  if (c.box_half_width) c.train.search_box = Box::cube(data_dim(c), *c.box_half_width);
  if (c.class_spec.kind == PotentialClass::cone_combo) c.class_spec.basis = default_basis(data_dim(c));
  c.resolved_json = resolved.dump();
  c.config_hash = fnv1a64(c.resolved_json);
  return c;
}

}  // namespace w2r::cli
