#include <tinysdp/cones.hpp>

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

Matrix random_psd(std::mt19937& rng, Index p)
{
  Matrix M = random_matrix(rng, p, p);
  return M * M.transpose();
}

LiftedSystem small_lift(Index n, Index m, std::vector<Index> pos)
{
  std::mt19937 rng(91);
  LinearSystem sys;
  sys.A = random_matrix(rng, n, n);
  sys.B = random_matrix(rng, n, m);
  sys.dt = 0.04;
  sys.pos_rows = std::move(pos);
  return build_lifted_system(sys);
}

// Raw termwise moment map: every lifted coordinate lands in its own slot and
// physical entries land in both their row and column slots. No symmetrizing;
// this is the map whose squared Frobenius norm the diagonal weights replicate.
Matrix termwise_moment(const Vector& xb, const Vector& ub, const LiftedSystem& L, MomentBlock block)
{
  const Index n = L.nx;
  const Index m = L.nu;
  if (block == MomentBlock::full) {
    Matrix M = Matrix::Zero(1 + n + m, 1 + n + m);
    M(0, 0) = 1.0;
    M.block(1, 0, n, 1) = xb.head(n);
    M.block(0, 1, 1, n) = xb.head(n).transpose();
    M.block(1 + n, 0, m, 1) = ub.head(m);
    M.block(0, 1 + n, 1, m) = ub.head(m).transpose();
    M.block(1, 1, n, n) = unvec(xb.tail(n * n), n, n);
    M.block(1, 1 + n, n, m) = unvec(ub.segment(m, n * m), n, m);
    M.block(1 + n, 1, m, n) = unvec(ub.segment(m + n * m, m * n), m, n);
    M.block(1 + n, 1 + n, m, m) = unvec(ub.tail(m * m), m, m);
    return M;
  }
  const Index d = L.dim();
  Matrix M = Matrix::Zero(1 + d, 1 + d);
  M(0, 0) = 1.0;
  const Matrix X = unvec(xb.tail(n * n), n, n);
  for (Index i = 0; i < d; ++i) {
    const Index a = L.pos_rows[static_cast<std::size_t>(i)];
    M(1 + i, 0) = M(0, 1 + i) = xb[a];
    for (Index j = 0; j < d; ++j) {
      M(1 + i, 1 + j) = X(a, L.pos_rows[static_cast<std::size_t>(j)]);
    }
  }
  return M;
}

double moment_penalty(const Vector& xb, const Vector& ub, const LiftedSystem& L, MomentBlock block,
                      const Matrix& T, double rho)
{
  return 0.5 * rho * (termwise_moment(xb, ub, L, block) - T).squaredNorm();
}

}  // namespace

TEST_CASE("symmetric eigendecomposition reconstructs random matrices")
{
  std::mt19937 rng(31);
  for (int trial = 0; trial < 400; ++trial) {
    const Index p = 1 + static_cast<Index>(rng() % 7);
    Matrix A = random_symmetric(rng, p);
    Vector lambda;
    Matrix V;
    eig_sym(A, lambda, V);
    REQUIRE((V * lambda.asDiagonal() * V.transpose() - A).cwiseAbs().maxCoeff() < 1e-9);
    REQUIRE((V.transpose() * V - Matrix::Identity(p, p)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("3x3 eigendecomposition survives repeated eigenvalues")
{
  auto check = [](const Matrix& A) {
    Vector lambda;
    Matrix V;
    eig_sym(A, lambda, V);
    CHECK((V * lambda.asDiagonal() * V.transpose() - A).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((V.transpose() * V - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-9);
  };

  check(Matrix::Identity(3, 3) * 3.0);
  Matrix D = Matrix::Zero(3, 3);
  D.diagonal() << 2.0, 2.0, 5.0;
  check(D);
  D.diagonal() << 5.0, 2.0, 2.0;
  check(D);

  // rotate a nearly degenerate spectrum into a dense matrix
  std::mt19937 rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix Q = random_matrix(rng, 3, 3);
    Eigen::HouseholderQR<Matrix> qr(Q);
    Matrix U = qr.householderQ();
    Matrix lam = Matrix::Zero(3, 3);
    lam.diagonal() << 1.0, 1.0 + 1e-9, -2.0;
    check(U * lam * U.transpose());
  }
}

TEST_CASE("PSD projection clamps negative eigenvalues")
{
  Matrix D = Matrix::Zero(2, 2);
  D.diagonal() << 2.0, -3.0;
  Matrix P = project_psd(D);
  CHECK(P(0, 0) == Catch::Approx(2.0));
  CHECK(P(1, 1) == Catch::Approx(0.0).margin(1e-14));

  Matrix F(2, 2);
  F << 0, 1, 1, 0;
  Matrix PF = project_psd(F);
  CHECK(PF(0, 0) == Catch::Approx(0.5));
  CHECK(PF(0, 1) == Catch::Approx(0.5));
  CHECK(PF(1, 0) == Catch::Approx(0.5));
  CHECK(PF(1, 1) == Catch::Approx(0.5));

  std::mt19937 rng(53);
  Matrix Y = random_psd(rng, 4);
  CHECK((project_psd(Y) - Y).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("PSD projection is idempotent and lands in the cone")
{
  std::mt19937 rng(59);
  for (int trial = 0; trial < 200; ++trial) {
    const Index p = 1 + static_cast<Index>(rng() % 5);
    Matrix Y = random_symmetric(rng, p);
    Matrix P1 = project_psd(Y);
    Matrix P2 = project_psd(P1);
    REQUIRE((P1 - P2).cwiseAbs().maxCoeff() < 1e-10);

    Vector lambda;
    Matrix V;
    eig_sym(P1, lambda, V);
    REQUIRE(lambda.minCoeff() >= -1e-10);
  }
}

TEST_CASE("PSD projection beats random PSD candidates in Frobenius distance")
{
  std::mt19937 rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    const Index p = 2 + static_cast<Index>(rng() % 4);
    Matrix Y = random_symmetric(rng, p);
    const double best = (project_psd(Y) - Y).norm();
    for (int c = 0; c < 50; ++c) {
      Matrix X = random_psd(rng, p);
      REQUIRE(best <= (X - Y).norm() + 1e-12);
    }
  }
}

TEST_CASE("projections agree between matrix and svec-stored forms")
{
  std::mt19937 rng(67);
  for (int trial = 0; trial < 100; ++trial) {
    const Index p = 1 + static_cast<Index>(rng() % 5);
    Matrix Y = random_symmetric(rng, p);
    Vector via_svec = project_psd_svec(svec(Y));
    Vector via_matrix = svec(project_psd(Y));
    REQUIRE((via_svec - via_matrix).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("box projection clamps elementwise")
{
  Vector v(1), lo(1), hi(1);
  v << 5.0;
  lo << -1.0;
  hi << 1.0;
  CHECK(project_box(v, lo, hi)(0) == 1.0);
  v << 0.3;
  CHECK(project_box(v, lo, hi)(0) == 0.3);
  lo << 0.5;
  hi << 0.5;
  CHECK(project_box(v, lo, hi)(0) == 0.5);
}

TEST_CASE("obstacle slack is the positive part")
{
  CHECK(project_obstacle_slack(-2.0) == 0.0);
  CHECK(project_obstacle_slack(3.0) == 3.0);
  CHECK(project_obstacle_slack(0.0) == 0.0);
}

TEST_CASE("moment assembly reproduces the rank-1 outer product on exact lifts")
{
  LiftedSystem L = small_lift(1, 1, {0});
  Vector x(1), u(1);
  x << 1;
  u << 2;
  Matrix M = assemble_moment(lift_state(L, x), exact_lifted_input(L, x, u), L);
  Matrix expect(3, 3);
  expect << 1, 1, 2, 1, 1, 2, 2, 2, 4;
  CHECK((M - expect).cwiseAbs().maxCoeff() < 1e-14);

  Matrix Z = assemble_moment(Vector::Zero(L.nbar_x()), Vector::Zero(L.nbar_u()), L);
  CHECK(Z(0, 0) == 1.0);
  CHECK(Z.cwiseAbs().sum() == 1.0);
}

TEST_CASE("exact lifts give rank-1 moment spectra")
{
  std::mt19937 rng(71);
  LiftedSystem L = small_lift(2, 1, {0, 1});
  for (int trial = 0; trial < 200; ++trial) {
    Vector x = random_vector(rng, 2);
    Vector u = random_vector(rng, 1);
    Matrix M = assemble_moment(lift_state(L, x), exact_lifted_input(L, x, u), L);
    Vector lambda;
    Matrix V;
    eig_sym(M, lambda, V);
    std::sort(lambda.data(), lambda.data() + lambda.size());
    const double top = 1.0 + x.squaredNorm() + u.squaredNorm();
    REQUIRE(lambda(lambda.size() - 1) == Catch::Approx(top).margin(1e-9));
    for (Index i = 0; i + 1 < lambda.size(); ++i) {
      REQUIRE(std::abs(lambda(i)) < 1e-9);
    }
  }
}

TEST_CASE("position moment block extracts the geometric subspace")
{
  LiftedSystem L = small_lift(4, 2, {0, 1});
  Vector x(4);
  x << 1.0, -2.0, 0.5, 3.0;
  Vector u(2);
  u << 0.1, 0.2;
  Matrix M = assemble_moment(lift_state(L, x), exact_lifted_input(L, x, u), L, MomentBlock::position);
  REQUIRE(M.rows() == 3);
  CHECK(M(0, 0) == 1.0);
  CHECK(M(1, 0) == Catch::Approx(1.0));
  CHECK(M(2, 0) == Catch::Approx(-2.0));
  CHECK(M(1, 1) == Catch::Approx(1.0));
  CHECK(M(2, 2) == Catch::Approx(4.0));
  CHECK(M(1, 2) == Catch::Approx(-2.0));
}

TEST_CASE("adjoint pullback doubles physical slots")
{
  LiftedSystem L = small_lift(1, 1, {0});
  Matrix T = Matrix::Zero(3, 3);
  T(0, 1) = T(1, 0) = 1.0;
  Vector dq, dr;
  adjoint_moment(T, L, 1.0, MomentBlock::full, dq, dr);
  CHECK(dq(0) == Catch::Approx(-2.0));
  CHECK(dq(1) == Catch::Approx(0.0).margin(1e-15));
  CHECK(dr.isZero());

  adjoint_moment(Matrix::Zero(3, 3), L, 1.0, MomentBlock::full, dq, dr);
  CHECK(dq.isZero());
  CHECK(dr.isZero());
}

TEST_CASE("adjoint matches central finite differences of the moment penalty")
{
  std::mt19937 rng(73);
  const double rho = 1.3;
  const double h = 1e-6;

  auto run_mode = [&](const LiftedSystem& L, MomentBlock block) {
    Vector wx, wu;
    moment_weights(L, block, wx, wu);
    for (int trial = 0; trial < 25; ++trial) {
      Matrix T = random_symmetric(rng, moment_dim(L, block));
      Vector xb = random_vector(rng, L.nbar_x());
      Vector ub = random_vector(rng, L.nbar_u());
      Vector dq, dr;
      adjoint_moment(T, L, rho, block, dq, dr);

      for (Index i = 0; i < xb.size(); ++i) {
        Vector xp = xb, xm = xb;
        xp[i] += h;
        xm[i] -= h;
        const double numeric = (moment_penalty(xp, ub, L, block, T, rho) -
                                moment_penalty(xm, ub, L, block, T, rho)) /
                               (2.0 * h);
        const double analytic = rho * wx[i] * xb[i] + dq[i];
        REQUIRE(std::abs(numeric - analytic) < 1e-5);
      }
      for (Index i = 0; i < ub.size(); ++i) {
        Vector up = ub, um = ub;
        up[i] += h;
        um[i] -= h;
        const double numeric = (moment_penalty(xb, up, L, block, T, rho) -
                                moment_penalty(xb, um, L, block, T, rho)) /
                               (2.0 * h);
        const double analytic = rho * wu[i] * ub[i] + dr[i];
        REQUIRE(std::abs(numeric - analytic) < 1e-5);
      }
    }
  };

  run_mode(small_lift(2, 1, {0, 1}), MomentBlock::full);
  run_mode(small_lift(3, 2, {0, 1}), MomentBlock::position);
}
