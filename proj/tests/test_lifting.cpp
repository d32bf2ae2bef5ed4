#include <tinysdp/lifting.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace tinysdp;

namespace {

Matrix random_matrix(std::mt19937& rng, Index rows, Index cols)
{
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  Matrix M(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) {
      M(i, j) = dist(rng);
    }
  }
  return M;
}

Matrix random_symmetric(std::mt19937& rng, Index p)
{
  Matrix M = random_matrix(rng, p, p);
  return 0.5 * (M + M.transpose());
}

Vector random_vector(std::mt19937& rng, Index n)
{
  return random_matrix(rng, n, 1).col(0);
}

}  // namespace

TEST_CASE("kron handles identity and scalar cases")
{
  const Matrix I2 = Matrix::Identity(2, 2);
  CHECK(kron(I2, I2).isApprox(Matrix::Identity(4, 4)));

  Matrix a(1, 1), b(1, 1);
  a << 2.0;
  b << 3.0;
  CHECK(kron(a, b)(0, 0) == 6.0);

  Matrix A(2, 2);
  A << 1, 2, 3, 4;
  Matrix K = kron(A, I2);
  Matrix expect(4, 4);
  expect << 1, 0, 2, 0,
            0, 1, 0, 2,
            3, 0, 4, 0,
            0, 3, 0, 4;
  CHECK(K.isApprox(expect));
}

TEST_CASE("vec stacks columns and unvec inverts it")
{
  Matrix M(2, 2);
  M << 1, 2, 2, 4;
  Vector v = vec(M);
  CHECK(v(0) == 1.0);
  CHECK(v(1) == 2.0);
  CHECK(v(2) == 2.0);
  CHECK(v(3) == 4.0);
  CHECK(unvec(v, 2, 2).isApprox(M));

  Matrix s(1, 1);
  s << 7.0;
  CHECK(vec(s)(0) == 7.0);

  CHECK_THROWS_AS(unvec(v, 3, 2), std::invalid_argument);
}

TEST_CASE("vec commutes with congruence through the Kronecker product")
{
  std::mt19937 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 1 + static_cast<Index>(rng() % 4);
    Matrix A = random_matrix(rng, n, n);
    Matrix X = random_matrix(rng, n, n);
    Vector lhs = vec(A * X * A.transpose());
    Vector rhs = kron(A, A) * vec(X);
    REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("svec scales off-diagonals to preserve inner products")
{
  Matrix S(2, 2);
  S << 1, 2, 2, 3;
  Vector s = svec(S);
  REQUIRE(s.size() == 3);
  CHECK(s(0) == 1.0);
  CHECK(s(1) == Catch::Approx(2.0 * std::sqrt(2.0)));
  CHECK(s(2) == 3.0);

  Matrix ones = Matrix::Ones(2, 2);
  CHECK(svec(ones).dot(svec(ones)) == Catch::Approx(4.0));

  std::mt19937 rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index p = 1 + static_cast<Index>(rng() % 7);
    Matrix A = random_symmetric(rng, p);
    Matrix B = random_symmetric(rng, p);
    const double frob = (A.transpose() * B).trace();
    REQUIRE(std::abs(frob - svec(A).dot(svec(B))) < 1e-12);
    REQUIRE((smat(svec(A)) - A).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("smat rejects lengths that are not triangular numbers")
{
  CHECK_THROWS_AS(smat(Vector::Zero(2)), std::invalid_argument);
  CHECK_THROWS_AS(smat(Vector::Zero(5)), std::invalid_argument);
  CHECK(smat(Vector::Zero(6)).rows() == 3);
}

TEST_CASE("lifted system carries the exact block structure")
{
  SECTION("scalar system")
  {
    LinearSystem sys;
    sys.A = Matrix::Constant(1, 1, 2.0);
    sys.B = Matrix::Zero(1, 1);
    sys.dt = 0.1;
    sys.pos_rows = {0};
    LiftedSystem L = build_lifted_system(sys);
    CHECK(L.A(0, 0) == 2.0);
    CHECK(L.A(1, 1) == 4.0);
    CHECK(L.A(0, 1) == 0.0);
    CHECK(L.A(1, 0) == 0.0);
  }

  SECTION("identity transition stays identity")
  {
    std::mt19937 rng(3);
    LinearSystem sys;
    sys.A = Matrix::Identity(2, 2);
    sys.B = random_matrix(rng, 2, 1);
    sys.dt = 0.1;
    sys.pos_rows = {0};
    LiftedSystem L = build_lifted_system(sys);
    CHECK(L.A.isApprox(Matrix::Identity(6, 6)));
  }

  SECTION("blocks match their Kronecker factors")
  {
    std::mt19937 rng(5);
    LinearSystem sys;
    sys.A = random_matrix(rng, 2, 2);
    sys.B = random_matrix(rng, 2, 1);
    sys.dt = 0.1;
    sys.pos_rows = {0, 1};
    LiftedSystem L = build_lifted_system(sys);
    REQUIRE(L.nbar_x() == 6);
    REQUIRE(L.nbar_u() == 6);
    CHECK(L.A.topLeftCorner(2, 2).isApprox(sys.A));
    CHECK(L.A.bottomRightCorner(4, 4).isApprox(kron(sys.A, sys.A)));
    CHECK(L.B.topLeftCorner(2, 1).isApprox(sys.B));
    CHECK(L.B.block(2, 1, 4, 2).isApprox(kron(sys.B, sys.A)));
    CHECK(L.B.block(2, 3, 4, 2).isApprox(kron(sys.A, sys.B)));
    CHECK(L.B.block(2, 5, 4, 1).isApprox(kron(sys.B, sys.B)));
    CHECK(L.A.topRightCorner(2, 4).isZero());
    CHECK(L.A.bottomLeftCorner(4, 2).isZero());
  }

  SECTION("invalid position rows are rejected")
  {
    LinearSystem sys;
    sys.A = Matrix::Identity(2, 2);
    sys.B = Matrix::Identity(2, 2);
    sys.dt = 0.1;
    sys.pos_rows = {0, 5};
    CHECK_THROWS_AS(build_lifted_system(sys), std::invalid_argument);
  }
}

TEST_CASE("lift_state produces the rank-consistent second-order lift")
{
  LinearSystem sys;
  sys.A = Matrix::Identity(2, 2);
  sys.B = Matrix::Identity(2, 2);
  sys.dt = 0.1;
  sys.pos_rows = {0, 1};
  LiftedSystem L = build_lifted_system(sys);

  Vector x(2);
  x << 1, 2;
  Vector xb = lift_state(L, x);
  Vector expect(6);
  expect << 1, 2, 1, 2, 2, 4;
  CHECK((xb - expect).cwiseAbs().maxCoeff() == 0.0);

  CHECK(lift_state(L, Vector::Zero(2)).isZero());

  CHECK((L.Cx * xb).isApprox(x));
  Matrix X = unvec(xb.tail(4), 2, 2);
  CHECK(X.trace() == Catch::Approx(x.squaredNorm()));
}

TEST_CASE("exact lifted input mirrors the outer-product moments")
{
  LinearSystem sys;
  sys.A = Matrix::Identity(1, 1);
  sys.B = Matrix::Identity(1, 1);
  sys.dt = 0.1;
  sys.pos_rows = {0};
  LiftedSystem L = build_lifted_system(sys);

  Vector x(1), u(1);
  x << 1;
  u << 2;
  Vector ub = exact_lifted_input(L, x, u);
  Vector expect(4);
  expect << 2, 2, 2, 4;
  CHECK((ub - expect).cwiseAbs().maxCoeff() == 0.0);

  CHECK(exact_lifted_input(L, x, Vector::Zero(1)).isZero());
}

TEST_CASE("lifting commutes with propagation")
{
  std::mt19937 rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index n = 1 + static_cast<Index>(rng() % 3);
    const Index m = 1 + static_cast<Index>(rng() % 2);
    LinearSystem sys;
    sys.A = random_matrix(rng, n, n);
    sys.B = random_matrix(rng, n, m);
    sys.dt = 0.04;
    sys.pos_rows = {0};
    LiftedSystem L = build_lifted_system(sys);

    Vector x = random_vector(rng, n);
    Vector u = random_vector(rng, m);
    Vector propagated = L.A * lift_state(L, x) + L.B * exact_lifted_input(L, x, u);
    Vector lifted = lift_state(L, sys.A * x + sys.B * u);
    REQUIRE((propagated - lifted).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("moment weights count slot multiplicities")
{
  LinearSystem sys;
  sys.A = Matrix::Identity(1, 1);
  sys.B = Matrix::Identity(1, 1);
  sys.dt = 0.1;
  sys.pos_rows = {0};
  LiftedSystem L = build_lifted_system(sys);

  Vector wx, wu;
  moment_weights(L, MomentBlock::full, wx, wu);
  REQUIRE(wx.size() == 2);
  REQUIRE(wu.size() == 4);
  CHECK(wx(0) == 2.0);
  CHECK(wx(1) == 1.0);
  CHECK(wu(0) == 2.0);
  CHECK(wu(1) == 1.0);
  CHECK(wu(2) == 1.0);
  CHECK(wu(3) == 1.0);
}

TEST_CASE("moment weights reproduce the squared Frobenius norm of the moment matrix")
{
  std::mt19937 rng(23);
  LinearSystem sys;
  sys.A = random_matrix(rng, 2, 2);
  sys.B = random_matrix(rng, 2, 1);
  sys.dt = 0.04;
  sys.pos_rows = {0, 1};
  LiftedSystem L = build_lifted_system(sys);

  Vector wx, wu;
  moment_weights(L, MomentBlock::full, wx, wu);
  for (int trial = 0; trial < 50; ++trial) {
    Vector x = random_vector(rng, 2);
    Vector u = random_vector(rng, 1);
    Vector xb = lift_state(L, x);
    Vector ub = exact_lifted_input(L, x, u);
    // termwise assembly: 1 + 2|x|^2 + 2|u|^2 + |X|^2 + |XU|^2 + |UX|^2 + |UU|^2
    const double norm2 = 1.0 + xb.cwiseProduct(wx.cwiseProduct(xb)).sum() +
                         ub.cwiseProduct(wu.cwiseProduct(ub)).sum();
    Vector triple(4);
    triple << 1.0, x(0), x(1), u(0);
    const double direct = (triple * triple.transpose()).squaredNorm();
    REQUIRE(norm2 == Catch::Approx(direct).margin(1e-10));
  }
}

TEST_CASE("lifted cost embeds physical weights and keeps the input cost positive definite")
{
  LinearSystem sys;
  sys.A = Matrix::Identity(2, 2);
  sys.B = Matrix::Identity(2, 2);
  sys.dt = 0.1;
  sys.pos_rows = {0, 1};
  LiftedSystem L = build_lifted_system(sys);

  const Matrix Q = Matrix::Identity(2, 2);
  const Matrix R = 0.5 * Matrix::Identity(2, 2);
  const Matrix Qf = 3.0 * Matrix::Identity(2, 2);
  Vector goal(2);
  goal << 1.0, -2.0;

  LiftedCost cost = build_lifted_cost(L, Q, R, Qf, goal, 1.0);

  CHECK(cost.Qbar.topLeftCorner(2, 2).isApprox(Q));
  CHECK(cost.Qbar.bottomRightCorner(4, 4).isZero());
  CHECK(cost.Rbar.topLeftCorner(2, 2).isApprox(R));

  // quadratic weights: physical entries get 2*Q + 2*rho, lifted entries rho
  CHECK(cost.Qhat(0, 0) == Catch::Approx(2.0 + 2.0));
  CHECK(cost.Qhat(3, 3) == Catch::Approx(1.0));
  CHECK(cost.Rhat(0, 0) == Catch::Approx(1.0 + 2.0));

  Eigen::LLT<Matrix> llt(cost.Rhat);
  CHECK(llt.info() == Eigen::Success);

  // goal terms act on physical coordinates only
  CHECK(cost.q_ref.head(2).isApprox(-2.0 * (Q * goal)));
  CHECK(cost.q_ref.tail(4).isZero());
  CHECK(cost.r_ref.isZero());

  SECTION("vanishing moment penalty leaves the physical costs")
  {
    LiftedCost tiny = build_lifted_cost(L, Q, R, Qf, goal, 1e-12);
    CHECK((tiny.Qhat.topLeftCorner(2, 2) - 2.0 * Q).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((tiny.Rhat.topLeftCorner(2, 2) - 2.0 * R).cwiseAbs().maxCoeff() < 1e-9);
  }

  SECTION("position block leaves uncovered coordinates ridged, not singular")
  {
    CostOptions opts;
    opts.block = MomentBlock::position;
    LiftedCost pos = build_lifted_cost(L, Q, R, Qf, goal, 1.0, opts);
    Eigen::LLT<Matrix> pllt(pos.Rhat);
    CHECK(pllt.info() == Eigen::Success);
    CHECK(pos.wu.isZero());
    CHECK(pos.Rhat(2, 2) == Catch::Approx(opts.lift_ridge));
  }
}
