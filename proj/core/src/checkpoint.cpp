#include "w2r/checkpoint.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace w2r {

using nlohmann::ordered_json;

namespace {

constexpr const char* kFormat = "w2restrict-checkpoint";
constexpr int kVersion = 1;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

ordered_json matrix_json(const Matrix& m) {
  ordered_json data = ordered_json::array();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

ordered_json vector_json(const Vector& v) {
  ordered_json out = ordered_json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

const ordered_json& field(const ordered_json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) throw ParseError(std::string("checkpoint: missing field '") + name + "'");
  return j.at(name);
}

Matrix matrix_from(const ordered_json& j) {
  const Index rows = field(j, "rows").get<Index>();
  const Index cols = field(j, "cols").get<Index>();
  const auto& data = field(j, "data");
  if (rows < 0 || cols < 0 || !data.is_array() || static_cast<Index>(data.size()) != rows * cols)
    throw ParseError("checkpoint: matrix data does not match its shape");
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index k = 0; k < cols; ++k) m(i, k) = data[static_cast<std::size_t>(i * cols + k)].get<double>();
  return m;
}

Vector vector_from(const ordered_json& j) {
  if (!j.is_array()) throw ParseError("checkpoint: expected an array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
  return v;
}

ordered_json plq_pieces_json(const Plq& p) {
  ordered_json pieces = ordered_json::array();
  for (const auto& piece : p.pieces)
    pieces.push_back({{"a", matrix_json(piece.a)}, {"b", vector_json(piece.b)}, {"c", piece.c}});
  return pieces;
}

Plq plq_from(const ordered_json& j) {
  Plq p;
  if (j.contains("eps_spd")) p.eps_spd = j.at("eps_spd").get<double>();
  for (const auto& piece : field(j, "pieces"))
    p.pieces.push_back({matrix_from(field(piece, "a")), vector_from(field(piece, "b")), field(piece, "c").get<double>()});
  return p;
}

ordered_json to_json(const PotentialParams& theta) {
  ordered_json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["class_tag"] = std::string(class_tag(theta));
  j["dim"] = input_dim(theta);
  std::visit(overloaded{
                 [&](const Quadratic& q) {
                   j["eta"] = 0.0;
                   j["eps_spd"] = q.eps_spd;
                   j["a"] = matrix_json(q.a);
                   j["b"] = vector_json(q.b);
                 },
                 [&](const BallLinear& l) {
                   j["eta"] = 0.0;
                   j["eps_spd"] = 0.0;
                   j["w"] = vector_json(l.w);
                   j["radius"] = l.radius;
                 },
                 [&](const ConeCombo& c) {
                   j["eta"] = 0.0;
                   j["eps_spd"] = 0.0;
                   j["alphas"] = vector_json(c.alphas);
                   ordered_json basis = ordered_json::array();
                   for (const auto& f : c.basis) {
                     std::visit(overloaded{
                                    [&](const Quadratic& q) {
                                      basis.push_back({{"class_tag", "quadratic"},
                                                       {"eps_spd", q.eps_spd},
                                                       {"a", matrix_json(q.a)},
                                                       {"b", vector_json(q.b)}});
                                    },
                                    [&](const Plq& p) {
                                      basis.push_back(
                                          {{"class_tag", "plq"}, {"eps_spd", p.eps_spd}, {"pieces", plq_pieces_json(p)}});
                                    },
                                },
                                f);
                   }
                   j["basis"] = std::move(basis);
                 },
                 [&](const Plq& p) {
                   j["eta"] = 0.0;
                   j["eps_spd"] = p.eps_spd;
                   j["pieces"] = plq_pieces_json(p);
                 },
                 [&](const Icnn& n) {
                   j["eta"] = n.eta;
                   j["eps_spd"] = 0.0;
                   ordered_json layers = ordered_json::array();
                   for (const auto& layer : n.layers) {
                     layers.push_back({{"activation", std::string(to_string(layer.activation))},
                                       {"w", matrix_json(layer.w)},
                                       {"a", matrix_json(layer.a)},
                                       {"b", vector_json(layer.b)}});
                   }
                   j["layers"] = std::move(layers);
                 },
             },
             theta);
  return j;
}

PotentialParams from_json(const ordered_json& j) {
  if (!j.is_object()) throw ParseError("checkpoint: top level must be an object");
  if (j.contains("format") && j.at("format") != kFormat) throw ParseError("checkpoint: unrecognized format");
  const std::string tag = field(j, "class_tag").get<std::string>();
  if (tag == "quadratic") {
    return Quadratic{matrix_from(field(j, "a")), vector_from(field(j, "b")), field(j, "eps_spd").get<double>()};
  }
  if (tag == "ball_linear") return BallLinear{vector_from(field(j, "w")), field(j, "radius").get<double>()};
  if (tag == "plq") return plq_from(j);
  if (tag == "cone_combo") {
    ConeCombo c;
    c.alphas = vector_from(field(j, "alphas"));
    for (const auto& f : field(j, "basis")) {
      const std::string ftag = field(f, "class_tag").get<std::string>();
      if (ftag == "quadratic")
        c.basis.emplace_back(
            Quadratic{matrix_from(field(f, "a")), vector_from(field(f, "b")), field(f, "eps_spd").get<double>()});
      else if (ftag == "plq")
        c.basis.emplace_back(plq_from(f));
      else
        throw ParseError("checkpoint: unsupported basis class '" + ftag + "'");
    }
    return c;
  }
  if (tag == "icnn") {
    Icnn n;
    n.eta = field(j, "eta").get<double>();
    for (const auto& layer : field(j, "layers")) {
      n.layers.push_back({matrix_from(field(layer, "w")), matrix_from(field(layer, "a")), vector_from(field(layer, "b")),
                          activation_from_string(field(layer, "activation").get<std::string>())});
    }
    return n;
  }
  throw ParseError("checkpoint: unknown class_tag '" + tag + "'");
}

ordered_json parse(const std::string& text) {
  try {
    return ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint: invalid JSON: ") + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

std::string params_to_json(const PotentialParams& theta, int indent) { return to_json(theta).dump(indent); }

PotentialParams params_from_json(const std::string& text) {
  PotentialParams theta;
  try {
    theta = from_json(parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  validate_feasible(theta);
  return theta;
}

void save_checkpoint(const PotentialParams& theta, const std::filesystem::path& path) {
  write_text(path, to_json(theta).dump(2));
}

void save_checkpoint(const FitResult& result, const std::filesystem::path& path) {
  ordered_json j = to_json(result.theta_bar);
  ordered_json history = ordered_json::array();
  for (const auto& h : result.history)
    history.push_back({{"epoch", h.epoch}, {"objective", h.objective}, {"grad_norm", h.grad_norm}, {"seconds", h.seconds}});
  j["history"] = std::move(history);
  write_text(path, j.dump(2));
}

PotentialParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return params_from_json(buf.str());
}

PotentialParams load_checkpoint(const std::filesystem::path& path, std::string_view expected_tag) {
  PotentialParams theta = load_checkpoint(path);
  if (class_tag(theta) != expected_tag) {
    throw ValidationError("checkpoint class '" + std::string(class_tag(theta)) + "' does not match expected class '" +
                          std::string(expected_tag) + "'");
  }
  return theta;
}

}  // namespace w2r
