#include <doctest.h>

#include "irof/interval.hpp"
#include "oracles.hpp"

using namespace irof;

TEST_SUITE("interval_core")
{
  TEST_CASE("split of a mixed-sign matrix")
  {
    Mat m(2, 2);
    m << 1, -2, 3, 0;
    const SplitMatrix s = split(m);
    Mat plus(2, 2), minus(2, 2);
    plus << 1, 0, 3, 0;
    minus << 0, 2, 0, 0;
    CHECK(s.plus == plus);
    CHECK(s.minus == minus);
    CHECK(s.abs == m.cwiseAbs());
    CHECK(s.plus - s.minus == m);
  }

  TEST_CASE("split of the identity")
  {
    const Mat I = Mat::Identity(3, 3);
    const SplitMatrix s = split(I);
    CHECK(s.plus == I);
    CHECK(s.minus == Mat::Zero(3, 3));
    CHECK(s.abs == I);
  }

  TEST_CASE("CSTR A - LC has no negative part")
  {
    Mat A(2, 2), L(2, 1), C(1, 2);
    A << 0.745, -0.002, 5.610, 0.780;
    L << -0.002, 0.390;
    C << 0.0, 1.0;
    const Mat alc = A - L * C;
    Mat expect(2, 2);
    expect << 0.745, 0.0, 5.610, 0.390;
    CHECK((alc - expect).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(split(alc).minus.cwiseAbs().maxCoeff() == 0.0);

    Mat block = Mat::Zero(4, 4);
    block.topLeftCorner(2, 2) = expect;
    block.bottomRightCorner(2, 2) = expect;
    CHECK((pmbox(alc) - block).cwiseAbs().maxCoeff() < 1e-15);
  }

  TEST_CASE("pmbox of nonnegative and negated identity")
  {
    Mat m(2, 2);
    m << 1, 2, 0, 3;
    Mat block = Mat::Zero(4, 4);
    block.topLeftCorner(2, 2) = m;
    block.bottomRightCorner(2, 2) = m;
    CHECK(pmbox(m) == block);

    Mat neg = Mat::Zero(4, 4);
    neg.topRightCorner(2, 2) = -Mat::Identity(2, 2);
    neg.bottomLeftCorner(2, 2) = -Mat::Identity(2, 2);
    CHECK(pmbox(-Mat::Identity(2, 2)) == neg);
    CHECK_THROWS_AS(pmbox(Mat::Zero(2, 3)), DimensionError);
  }

  TEST_CASE("pmbox acting on [hi; lo] equals bound_product")
  {
    StreamRng rng(7, Stream::kTest);
    for (int t = 0; t < 200; ++t) {
      const Mat m = oracle::random_matrix(rng, 3, 3);
      const IntervalVector x = oracle::random_box(rng, 3);
      const Vec stacked = pmbox(m) * stack_upper_first(x);
      const IntervalVector b = bound_product(m, x);
      CHECK((stacked.head(3) - b.hi()).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((stacked.tail(3) - b.lo()).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("bound_product small cases")
  {
    Vec one = Vec::Ones(2);
    const IntervalVector sq(-one, one);
    const IntervalVector same = bound_product(Mat::Identity(2, 2), sq);
    CHECK(same.lo() == sq.lo());
    CHECK(same.hi() == sq.hi());

    Vec lo(2), hi(2);
    lo << 0, 0;
    hi << 1, 2;
    const IntervalVector n = bound_product(-Mat::Identity(2, 2), IntervalVector(lo, hi));
    CHECK(n.lo() == -hi);
    CHECK(n.hi() == -lo);
    CHECK_THROWS_AS(bound_product(Mat::Identity(3, 3), sq), DimensionError);
  }

  TEST_CASE("bound_product matches vertex enumeration")
  {
    StreamRng rng(11, Stream::kTest);
    double worst = 0.0;
    for (int t = 0; t < 2000; ++t) {
      const Eigen::Index r = 1 + static_cast<Eigen::Index>(rng.uniform() * 4);
      const Eigen::Index c = 1 + static_cast<Eigen::Index>(rng.uniform() * 4);
      const Mat m = oracle::random_matrix(rng, r, c);
      const IntervalVector x = oracle::random_box(rng, c);
      const IntervalVector mine = bound_product(m, x);
      const IntervalVector ref = oracle::vertex_image(m, x);
      worst = std::max({worst, (mine.lo() - ref.lo()).cwiseAbs().maxCoeff(),
                        (mine.hi() - ref.hi()).cwiseAbs().maxCoeff()});
    }
    CHECK(worst <= 1e-12);
  }

  TEST_CASE("interval vector construction and containment")
  {
    Vec lo(2), hi(2);
    lo << 0, 1;
    hi << 1, 0;
    CHECK_THROWS_AS(IntervalVector(lo, hi), IntervalInversion);
    CHECK_THROWS_AS(IntervalVector(Vec::Zero(2), Vec::Zero(3)), DimensionError);

    const IntervalVector b = IntervalVector::centered(Vec::Zero(2), Vec::Ones(2));
    CHECK(b.contains(Vec::Zero(2)));
    CHECK_FALSE(b.contains(Vec::Constant(2, 1.5)));
    CHECK(b.contains(Vec::Constant(2, 1.0 + 1e-9), 1e-8));
    CHECK(b.contains(IntervalVector::point(Vec::Constant(2, 0.5))));
    CHECK(b.width() == Vec::Constant(2, 2.0));
    CHECK(b.midpoint() == Vec::Zero(2));
  }

  TEST_CASE("intersection and Minkowski sum")
  {
    const IntervalVector a(Vec::Constant(2, 0.0), Vec::Constant(2, 2.0));
    const IntervalVector b(Vec::Constant(2, 1.0), Vec::Constant(2, 3.0));
    const IntervalVector i = intersect(a, b);
    CHECK(i.lo() == Vec::Constant(2, 1.0));
    CHECK(i.hi() == Vec::Constant(2, 2.0));
    const IntervalVector far(Vec::Constant(2, 5.0), Vec::Constant(2, 6.0));
    CHECK_THROWS_AS(intersect(a, far), EmptyIntersection);
    const IntervalVector s = minkowski_sum(a, b);
    CHECK(s.lo() == Vec::Constant(2, 1.0));
    CHECK(s.hi() == Vec::Constant(2, 5.0));
  }
}
