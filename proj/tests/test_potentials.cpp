#include <doctest.h>

#include "test_util.hpp"
#include "w2r/potentials.hpp"
#include "w2r/solver.hpp"

using namespace w2r;

namespace {

Quadratic scalar_quadratic(double a, double b) { return {Matrix::Constant(1, 1, a), Vector::Constant(1, b)}; }

Plq two_piece_plq() {
  // {½x², ½x² + x − 1}
  Plq p;
  p.pieces.push_back({Matrix::Constant(1, 1, 1.0), Vector::Constant(1, 0.0), 0.0});
  p.pieces.push_back({Matrix::Constant(1, 1, 1.0), Vector::Constant(1, 1.0), -1.0});
  return p;
}

// Random feasible network with every activation kind represented by `act`.
Icnn random_icnn(Rng& rng, Index d, std::vector<Index> widths, Activation act, double eta) {
  Icnn net;
  net.eta = eta;
  Index prev = 0;
  widths.push_back(1);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    IcnnLayer layer;
    const Index n = widths[l];
    layer.w = test::random_matrix(rng, n, prev).cwiseAbs() * 0.5;
    layer.a = test::random_matrix(rng, n, d, 0.7);
    layer.b = test::random_vector(rng, n, 0.3);
    layer.activation = l + 1 == widths.size() ? Activation::linear : act;
    net.layers.push_back(std::move(layer));
    prev = n;
  }
  return net;
}

// Central differences of f(·; θ) in the flat parameter vector.
Vector fd_param_gradient(const PotentialParams& theta, const Vector& x, double h) {
  const Vector base = flatten(theta);
  Vector g(base.size());
  for (Index k = 0; k < base.size(); ++k) {
    Vector plus = base, minus = base;
    plus(k) += h;
    minus(k) -= h;
    const PotentialParams tp = unflatten(theta, plus), tm = unflatten(theta, minus);
    g(k) = (Potential::unchecked(tp).value(x) - Potential::unchecked(tm).value(x)) / (2 * h);
  }
  return g;
}

Vector fd_x_gradient(const PotentialParams& theta, const Vector& x, double h) {
  const Potential f = Potential::unchecked(theta);
  Vector g(x.size());
  for (Index k = 0; k < x.size(); ++k) {
    Vector plus = x, minus = x;
    plus(k) += h;
    minus(k) -= h;
    g(k) = (f.value(plus) - f.value(minus)) / (2 * h);
  }
  return g;
}

// Per-block relative error ‖g − fd‖ / max(‖fd‖, floor).
double worst_block_error(const ParamGradient& g, const Vector& fd, double floor = 1e-6) {
  double worst = 0.0;
  for (const auto& b : g.blocks) {
    const double err = (g.flat.segment(b.offset, b.size) - fd.segment(b.offset, b.size)).norm();
    worst = std::max(worst, err / std::max(fd.segment(b.offset, b.size).norm(), floor));
  }
  return worst;
}

}  // namespace

TEST_CASE("eval") {
  CHECK(eval(scalar_quadratic(2, 1), Vector::Constant(1, 3.0)) == doctest::Approx(12.0));

  Icnn single = make_identity_icnn(1);
  CHECK(eval(single, Vector::Constant(1, 3.0)) == doctest::Approx(4.5).epsilon(1e-15));

  const Plq p = two_piece_plq();
  CHECK(eval(p, Vector::Constant(1, 0.0)) == doctest::Approx(0.0));
  CHECK(eval(p, Vector::Constant(1, 3.0)) == doctest::Approx(6.5));

  CHECK(eval(BallLinear{Vector{{1.0, 0.0}}, 2.0}, Vector{{1.0, 2.0}}) == doctest::Approx(3.5));
}

TEST_CASE("identity ICNN equals half squared norm") {
  Rng rng(17);
  for (Index d : {1, 2, 3, 5}) {
    const Icnn net = make_identity_icnn(d);
    for (int k = 0; k < 100; ++k) {
      const Vector x = test::random_vector(rng, d, 3.0);
      CHECK(std::abs(eval(net, x) - 0.5 * x.squaredNorm()) <= 1e-12);
      CHECK((grad_x(net, x) - x).norm() <= 1e-12);
    }
  }
}

TEST_CASE("grad_x") {
  CHECK(grad_x(scalar_quadratic(2, 1), Vector::Constant(1, 3.0))(0) == doctest::Approx(7.0));
  CHECK(grad_x(BallLinear{Vector{{1.0, 0.0}}, 2.0}, Vector::Zero(2)).isApprox(Vector{{1.0, 0.0}}));

  // Both pieces equal ½ at x = 1; the first-listed piece's gradient (x = 1) wins over x + 1 = 2.
  const Plq p = two_piece_plq();
  const Vector tie = Vector::Constant(1, 1.0);
  CHECK(eval(p, tie) == doctest::Approx(0.5));
  CHECK(grad_x(p, tie)(0) == doctest::Approx(1.0));

  Rng rng(5);
  for (Activation act : {Activation::softplus, Activation::relu_squared}) {
    const Icnn net = random_icnn(rng, 3, {5, 4}, act, 0.2);
    for (int k = 0; k < 10; ++k) {
      const Vector x = test::random_vector(rng, 3);
      const Vector fd = fd_x_gradient(net, x, 1e-5);
      CHECK((grad_x(net, x) - fd).norm() <= 1e-6 * std::max(1.0, fd.norm()));
    }
  }
}

TEST_CASE("grad_params") {
  const Quadratic q{Matrix::Identity(2, 2), Vector::Zero(2)};
  const Vector x{{1.0, 2.0}};
  const ParamGradient g = grad_params(q, x);
  REQUIRE(g.blocks.size() == 2);
  CHECK(g.flat.segment(4, 2).isApprox(x));
  const Matrix expected_a = 0.5 * x * x.transpose();
  CHECK(g.flat(0) == doctest::Approx(expected_a(0, 0)));
  CHECK(g.flat(1) == doctest::Approx(expected_a(0, 1)));
  CHECK(g.flat(3) == doctest::Approx(expected_a(1, 1)));

  const ParamGradient gl = grad_params(BallLinear{Vector{{0.1, 0.2}}, 1.0}, x);
  CHECK(gl.flat.isApprox(x));
}

TEST_CASE("grad_params matches central finite differences") {
  Rng rng(99);
  SUBCASE("icnn softplus") {
    for (int trial = 0; trial < 5; ++trial) {
      const PotentialParams net = random_icnn(rng, 2, {6, 5}, Activation::softplus, 0.1);
      const Vector x = test::random_vector(rng, 2);
      CHECK(worst_block_error(grad_params(net, x), fd_param_gradient(net, x, 1e-5)) <= 1e-4);
    }
  }
  SUBCASE("icnn relu_squared first layer, softplus hidden") {
    Icnn net = random_icnn(rng, 3, {6, 4, 3}, Activation::softplus, 0.0);
    net.layers[0].activation = Activation::relu_squared;
    const PotentialParams theta = net;
    const Vector x = test::random_vector(rng, 3);
    CHECK(worst_block_error(grad_params(theta, x), fd_param_gradient(theta, x, 1e-5)) <= 1e-4);
  }
  SUBCASE("quadratic and ball linear") {
    const PotentialParams q = Quadratic{test::random_spd(rng, 3), test::random_vector(rng, 3)};
    const PotentialParams l = BallLinear{test::random_vector(rng, 3, 0.1), 5.0};
    const Vector x = test::random_vector(rng, 3);
    CHECK(worst_block_error(grad_params(q, x), fd_param_gradient(q, x, 1e-5)) <= 1e-4);
    CHECK(worst_block_error(grad_params(l, x), fd_param_gradient(l, x, 1e-5)) <= 1e-4);
  }
  SUBCASE("plq away from ties flows into the active piece only") {
    const PotentialParams p = two_piece_plq();
    const Vector x = Vector::Constant(1, 3.0);  // second piece active
    const ParamGradient g = grad_params(p, x);
    CHECK(g.flat.segment(0, 3).isZero());
    CHECK(worst_block_error(g, fd_param_gradient(p, x, 1e-5)) <= 1e-4);
  }
  SUBCASE("cone combo") {
    ConeCombo c;
    c.basis = {Quadratic{Matrix::Identity(2, 2), Vector::Zero(2)}, Quadratic{test::random_spd(rng, 2), Vector::Ones(2)}};
    c.alphas = Vector{{0.3, 0.7}};
    const PotentialParams theta = c;
    const Vector x = test::random_vector(rng, 2);
    CHECK(worst_block_error(grad_params(theta, x), fd_param_gradient(theta, x, 1e-5)) <= 1e-4);
  }
}

TEST_CASE("project_feasible") {
  SUBCASE("icnn negative weight is clamped, nothing else changes") {
    Icnn net = make_identity_icnn(2);
    net.layers[1].w(0, 1) = -0.3;
    const PotentialParams projected = project_feasible(net);
    const Icnn& out = std::get<Icnn>(projected);
    CHECK(out.layers[1].w(0, 1) == 0.0);
    Icnn expected = net;
    expected.layers[1].w(0, 1) = 0.0;
    CHECK(flatten(projected) == flatten(expected));
  }
  SUBCASE("quadratic eigen-clamp") {
    const PotentialParams q = Quadratic{Matrix::Constant(1, 1, -1.0), Vector::Zero(1), 1e-6};
    const PotentialParams projected = project_feasible(q);
    const Quadratic& out = std::get<Quadratic>(projected);
    CHECK(out.a(0, 0) == doctest::Approx(1e-6).epsilon(1e-9));
  }
  SUBCASE("ball linear rescales onto the sphere") {
    const PotentialParams projected = project_feasible(BallLinear{Vector{{3.0, 4.0}}, 1.0});
    const BallLinear& out = std::get<BallLinear>(projected);
    CHECK(out.w.norm() == doctest::Approx(1.0));
    CHECK(out.w(0) == doctest::Approx(0.6));
  }
  SUBCASE("idempotent and a fixed point on feasible inputs") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<PotentialParams> cases;
      cases.push_back(Quadratic{test::random_matrix(rng, 3, 3), test::random_vector(rng, 3)});
      cases.push_back(BallLinear{test::random_vector(rng, 3, 2.0), 1.0});
      cases.push_back(ConeCombo{test::random_vector(rng, 2), {Quadratic{Matrix::Identity(3, 3), Vector::Zero(3)},
                                                              Quadratic{2 * Matrix::Identity(3, 3), Vector::Ones(3)}}});
      Plq p;
      p.pieces.push_back({test::random_matrix(rng, 3, 3), test::random_vector(rng, 3), 0.1});
      p.pieces.push_back({test::random_matrix(rng, 3, 3), test::random_vector(rng, 3), -0.1});
      cases.push_back(p);
      Icnn net = random_icnn(rng, 3, {4, 3}, Activation::relu, 0.0);
      net.layers[1].w = test::random_matrix(rng, 3, 4);
      cases.push_back(net);

      for (const auto& theta : cases) {
        const PotentialParams once = project_feasible(theta);
        CHECK(is_feasible(once));
        const PotentialParams twice = project_feasible(once);
        CHECK(flatten(twice) == flatten(once));
      }
    }
  }
  SUBCASE("icnn projection never moves a coordinate further from the feasible set") {
    Rng rng(12);
    Icnn net = random_icnn(rng, 2, {5}, Activation::relu, 0.0);
    net.layers[1].w = test::random_matrix(rng, 1, 5);
    const PotentialParams projected = project_feasible(net);
    const Icnn& out = std::get<Icnn>(projected);
    for (Index j = 0; j < 5; ++j) {
      const double before = std::max(-net.layers[1].w(0, j), 0.0);
      const double after = std::max(-out.layers[1].w(0, j), 0.0);
      CHECK(after <= before);
    }
  }
}

TEST_CASE("infeasible parameters are rejected by eval") {
  Icnn net = make_identity_icnn(1);
  net.layers[1].w(0, 0) = -1.0;
  CHECK_THROWS_AS(eval(net, Vector::Zero(1)), ValidationError);
  CHECK_THROWS_AS(eval(Quadratic{Matrix::Constant(1, 1, -1.0), Vector::Zero(1)}, Vector::Zero(1)), ValidationError);
  CHECK_THROWS_AS(eval(BallLinear{Vector{{2.0}}, 1.0}, Vector::Zero(1)), ValidationError);
  CHECK_THROWS_AS(eval(ConeCombo{Vector{{-1.0}}, {Quadratic{Matrix::Identity(1, 1), Vector::Zero(1)}}}, Vector::Zero(1)),
                  ValidationError);
}

TEST_CASE("convexity_probe") {
  const Box box = Box::cube(2, 3.0);
  Rng rng(4);
  SUBCASE("feasible classes stay below 1e-9") {
    const PotentialParams icnn_relu = random_icnn(rng, 2, {8, 6}, Activation::relu, 0.0);
    const PotentialParams icnn_soft = random_icnn(rng, 2, {8, 6}, Activation::softplus, 0.01);
    const PotentialParams quad = Quadratic{test::random_spd(rng, 2, 1e-3, 10.0), test::random_vector(rng, 2)};
    Plq p;
    for (int m = 0; m < 3; ++m) p.pieces.push_back({test::random_spd(rng, 2), test::random_vector(rng, 2), rng.normal()});
    const PotentialParams plq = p;
    for (const PotentialParams* theta : {&icnn_relu, &icnn_soft, &quad, &plq})
      CHECK(convexity_probe(*theta, 1, 10000, box) <= 1e-9);
  }
  SUBCASE("a negative hidden weight breaks convexity") {
    // Output = −(x)₊² is concave.
    Icnn net = make_identity_icnn(2);
    net.layers[1].w(0, 0) = -1.0;
    CHECK(convexity_probe(net, 1, 1000, box) > 1e-3);
  }
}

TEST_CASE("conjugate_closed_form") {
  const auto q = conjugate_closed_form(scalar_quadratic(2, 1), Vector::Constant(1, 3.0));
  REQUIRE(q);
  CHECK(q->value == doctest::Approx(1.0));
  CHECK(q->argmax(0) == doctest::Approx(1.0));

  const auto l = conjugate_closed_form(BallLinear{Vector{{1.0, 0.0}}, 2.0}, Vector{{1.0, 0.0}});
  REQUIRE(l);
  CHECK(l->value == doctest::Approx(0.0));
  CHECK(l->argmax.isZero());

  CHECK_FALSE(conjugate_closed_form(make_identity_icnn(1), Vector::Zero(1)));
  CHECK_FALSE(conjugate_closed_form(two_piece_plq(), Vector::Zero(1)));
}

TEST_CASE("closed-form conjugates satisfy Fenchel-Young with equality") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const Index d = 1 + static_cast<Index>(rng.below(4));
    const PotentialParams q = Quadratic{test::random_spd(rng, d, 0.1, 10.0), test::random_vector(rng, d)};
    const PotentialParams l = BallLinear{test::random_vector(rng, d, 0.2), 10.0};
    const Vector y = test::random_vector(rng, d, 2.0);
    for (const PotentialParams* theta : {&q, &l}) {
      const auto c = conjugate_closed_form(*theta, y);
      REQUIRE(c);
      CHECK(std::abs(eval(*theta, c->argmax) + c->value - y.dot(c->argmax)) <= 1e-10);
    }
  }
}

TEST_CASE("strong_convexity_modulus") {
  CHECK(strong_convexity_modulus(Quadratic{Matrix::Identity(3, 3), Vector::Zero(3)}) == doctest::Approx(1.0));
  CHECK(strong_convexity_modulus(BallLinear{Vector::Zero(2), 1.0}) == 1.0);
  Icnn net = make_identity_icnn(2);
  net.eta = 0.01;
  CHECK(strong_convexity_modulus(net) == 0.01);
  CHECK(strong_convexity_modulus(ConeCombo{Vector{{1.0}}, {Quadratic{Matrix::Identity(1, 1), Vector::Zero(1)}}}) == 0.0);
  CHECK(strong_convexity_modulus(two_piece_plq()) == doctest::Approx(1.0));
}

TEST_CASE("flatten and unflatten are inverse") {
  Rng rng(30);
  const PotentialParams net = random_icnn(rng, 3, {4, 5}, Activation::relu, 0.3);
  const Vector flat = flatten(net);
  CHECK(flat.size() == param_count(net));
  CHECK(flatten(unflatten(net, flat)) == flat);
  const auto blocks = param_blocks(net);
  Index total = 0;
  for (const auto& b : blocks) total += b.size;
  CHECK(total == flat.size());
  CHECK_THROWS_AS(unflatten(net, Vector::Zero(3)), ValidationError);
}
