#include <doctest.h>

#include "hamcurv/symplin.hpp"
#include "support/oracles.hpp"

using namespace hamcurv;
using namespace hamcurv::symplin;
using oracles::random_lagrangian;

TEST_CASE("standard form matches the fixed sign convention") {
  // sigma((p,q),(p',q')) = <p,q'> - <p',q>, so the matrix is [[0,I],[-I,0]].
  const auto s1 = standard_form(1);
  CHECK(s1.form(0, 1) == 1.0);
  CHECK(s1.form(1, 0) == -1.0);
  Vec v(2), w(2);
  v << 2.0, 3.0;  // (p, q)
  w << 5.0, 7.0;
  CHECK(s1.sigma(v, w) == doctest::Approx(2.0 * 7.0 - 5.0 * 3.0));

  const auto s2 = standard_form(2);
  CHECK(((s2.form * s2.form) + Mat::Identity(4, 4)).norm() < 1e-14);

  const auto s3 = standard_form(3);
  CHECK(s3.form.determinant() == doctest::Approx(1.0));
}

TEST_CASE("is_lagrangian") {
  const auto s1 = standard_form(1);
  Mat line(2, 1);
  line << 1.0, 0.0;
  CHECK(is_lagrangian(s1, line));

  const auto s2 = standard_form(2);
  Mat plane(4, 2);
  plane.setZero();
  plane(0, 0) = 1.0;
  plane(1, 1) = 1.0;  // span{e_p1, e_p2}
  CHECK(is_lagrangian(s2, plane));

  Mat bad(4, 2);
  bad.setZero();
  bad(0, 0) = 1.0;
  bad(2, 1) = 1.0;  // span{e_p1, e_q1}: sigma = 1
  CHECK_FALSE(is_lagrangian(s2, bad));

  Mat rank_def(4, 2);
  rank_def.setZero();
  rank_def(0, 0) = 1.0;
  rank_def(0, 1) = 1.0;
  CHECK_THROWS_AS(is_lagrangian(s2, rank_def), DegenerateFrameError);
}

TEST_CASE("is_lagrangian is invariant under right GL(k) action") {
  Rng rng(11);
  const auto s = standard_form(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat frame = random_lagrangian(3, rng);
    Mat g(3, 3);
    do {
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) g(i, j) = rng.normal();
    } while (std::abs(g.determinant()) < 0.1);
    CHECK(is_lagrangian(s, frame) == is_lagrangian(s, Mat(frame * g)));
  }
}

TEST_CASE("projector on coordinate and skew splittings") {
  const auto s1 = standard_form(1);
  Mat onto(2, 1), parallel(2, 1);
  onto << 1.0, 0.0;
  parallel << 0.0, 1.0;
  Mat p = projector(s1, onto, parallel);
  Mat want(2, 2);
  want << 1, 0, 0, 0;
  CHECK((p - want).norm() < 1e-14);

  parallel << 1.0, 1.0;
  p = projector(s1, onto, parallel);
  want << 1, -1, 0, 0;
  CHECK((p - want).norm() < 1e-12);

  CHECK_THROWS_AS(projector(s1, onto, onto), TransversalityError);
}

TEST_CASE("projector invariants on seeded pairs") {
  Rng rng(23);
  for (int n : {1, 2, 3}) {
    const auto s = standard_form(n);
    for (int trial = 0; trial < 20; ++trial) {
      const Mat a = random_lagrangian(n, rng);
      Mat b = random_lagrangian(n, rng);
      b.topRows(n) += 0.5 * Mat::Identity(n, n);  // decorrelate
      Mat stacked(2 * n, 2 * n);
      stacked << a, b;
      if (cond2(stacked) > 1e6) continue;
      const Mat p = projector(s, a, b);
      CHECK((p * p - p).norm() <= 1e-10 * std::max(1.0, p.norm()));
      CHECK((p * a - a).norm() <= 1e-9 * std::max(1.0, a.norm()));
      CHECK((p * b).norm() <= 1e-9 * std::max(1.0, b.norm()));
    }
  }
}

TEST_CASE("gram form of g^h on the vertical distribution") {
  const auto s2 = standard_form(2);
  Mat vertical(4, 2);
  vertical.setZero();
  vertical(0, 0) = 1.0;
  vertical(1, 1) = 1.0;

  SUBCASE("mechanical kinetic term gives the identity") {
    Mat hess = Mat::Zero(4, 4);
    hess.topLeftCorner(2, 2) = Mat::Identity(2, 2);
    hess(2, 2) = 0.7;  // potential Hessian, irrelevant on the fiber
    const auto g = gram_gh(s2, hess, vertical);
    CHECK((g.matrix - Mat::Identity(2, 2)).norm() < 1e-12);
    CHECK(g.signature() == std::tuple<int, int, int>{2, 0, 0});
    CHECK(g.positive_definite());
  }

  SUBCASE("split kinetic signature breaks monotonicity") {
    Mat hess = Mat::Zero(4, 4);
    hess(0, 0) = 1.0;
    hess(1, 1) = -1.0;
    const auto g = gram_gh(s2, hess, vertical);
    CHECK(g.signature() == std::tuple<int, int, int>{1, 1, 0});
    CHECK_FALSE(g.sign_definite());
  }

  SUBCASE("h linear in p is fully degenerate") {
    Mat hess = Mat::Zero(4, 4);
    hess.bottomRightCorner(2, 2) << 1.0, 0.2, 0.2, 0.5;
    const auto g = gram_gh(s2, hess, vertical);
    CHECK(g.signature() == std::tuple<int, int, int>{0, 0, 2});
  }
}

TEST_CASE("gram form is symmetric for Lagrangian frames") {
  Rng rng(31);
  const auto s = standard_form(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Mat frame = random_lagrangian(3, rng);
    const Mat h = oracles::random_psd(6, rng) - 2.0 * Mat::Identity(6, 6);
    const auto g = gram_gh(s, symmetrize(h), frame);
    CHECK(asym_defect(g.matrix) <= 1e-10 * std::max(1.0, g.matrix.norm()));
  }
}

TEST_CASE("darboux_complete") {
  const auto s1 = standard_form(1);
  Mat e(2, 1);
  e << 1.0, 0.0;
  const Mat b1 = darboux_complete(s1, e);
  CHECK((b1.transpose() * s1.form * b1 - s1.form).norm() < 1e-12);
  CHECK(std::abs(std::abs(b1(1, 1)) - 1.0) < 1e-12);

  const auto s2 = standard_form(2);
  Mat plane(4, 2);
  plane.setZero();
  plane(0, 0) = 1.0;
  plane(1, 1) = 1.0;
  const Mat b2 = darboux_complete(s2, plane);
  CHECK((b2.transpose() * s2.form * b2 - s2.form).norm() < 1e-12);

  Mat notlag(4, 2);
  notlag.setZero();
  notlag(0, 0) = 1.0;
  notlag(2, 1) = 1.0;
  CHECK_THROWS_AS(darboux_complete(s2, notlag), DegenerateFrameError);
}

TEST_CASE("darboux_complete on seeded random Lagrangian frames") {
  Rng rng(47);
  for (int n : {1, 2, 3}) {
    const auto s = standard_form(n);
    for (int trial = 0; trial < 20; ++trial) {
      const Mat frame = random_lagrangian(n, rng);
      const Mat b = darboux_complete(s, frame);
      CHECK((b.transpose() * s.form * b - s.form).norm() <= 1e-10);
    }
  }
}

TEST_CASE("general symplectic space validation") {
  Mat bad = Mat::Ones(2, 2);
  CHECK_THROWS_AS(SymplecticSpace::general(bad), DegenerateFrameError);
  Mat odd = Mat::Zero(3, 3);
  CHECK_THROWS_AS(SymplecticSpace::general(odd), DegenerateFrameError);
}
