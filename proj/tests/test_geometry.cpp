#include <random>

#include <gtest/gtest.h>

#include "aot/geometry.hpp"
#include "test_util.hpp"

using namespace aot;

TEST(Pose, ComposeWithIdentity) {
  std::mt19937_64 rng(1);
  const Pose p = test::random_pose(rng);
  EXPECT_LE(max_abs_diff(compose(Pose::identity(), p), p), 1e-15);
}

TEST(Pose, ComposeWithInverseIsIdentity) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const Pose p = test::random_pose(rng, 5.0);
    EXPECT_LE(max_abs_diff(compose(p, inverse(p)), Pose::identity()), 1e-9);
    EXPECT_LE(max_abs_diff(inverse(inverse(p)), p), 1e-9);
  }
}

TEST(Pose, QuarterTurnsComposeToHalfTurn) {
  const Pose q = rotation_pose(rot_z(kPi / 2));
  const Pose h = compose(q, q);
  // Oracle: multiply the two affine matrices directly.
  const Mat4 expect = as_affine(q) * as_affine(q);
  const Mat4 got = as_affine(h);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(got.m[i], expect.m[i], 1e-12);
  EXPECT_NEAR(h.rotation(0, 0), -1.0, 1e-12);
  EXPECT_NEAR(h.rotation(1, 1), -1.0, 1e-12);
}

TEST(Pose, ComposeMatchesAffineProduct) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const Pose a = test::random_pose(rng, 3.0), b = test::random_pose(rng, 3.0);
    const Mat4 expect = as_affine(a) * as_affine(b);
    const Mat4 got = as_affine(compose(a, b));
    for (std::size_t k = 0; k < 16; ++k) EXPECT_NEAR(got.m[k], expect.m[k], 1e-12);
  }
}

TEST(Pose, CompositionIsAssociative) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const Pose a = test::random_pose(rng, 3.0), b = test::random_pose(rng, 3.0), c = test::random_pose(rng, 3.0);
    EXPECT_LE(max_abs_diff(compose(compose(a, b), c), compose(a, compose(b, c))), 1e-9);
  }
}

TEST(Pose, AffineBottomRowAndHomogeneousW) {
  std::mt19937_64 rng(5);
  const Pose p = test::random_pose(rng);
  const Mat4 a = as_affine(p);
  EXPECT_EQ(a(3, 0), 0.0);
  EXPECT_EQ(a(3, 1), 0.0);
  EXPECT_EQ(a(3, 2), 0.0);
  EXPECT_EQ(a(3, 3), 1.0);
  const auto w = a.apply({0.3, -2.0, 1.5, 1.0});
  EXPECT_EQ(w[3], 1.0);
  const Vec3d direct = transform_point(p, {0.3, -2.0, 1.5});
  EXPECT_NEAR(w[0], direct.x, 1e-12);
  EXPECT_NEAR(w[1], direct.y, 1e-12);
  EXPECT_NEAR(w[2], direct.z, 1e-12);
}

TEST(Pose, RotationInvariants) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 100; ++i) EXPECT_TRUE(is_rotation(test::random_pose(rng).rotation, 1e-9));
}

TEST(TransformPoint, Examples) {
  const Vec3d x{1, 2, 3};
  EXPECT_EQ(transform_point(Pose::identity(), x), x);
  EXPECT_EQ(transform_point(translation_pose({1, 0, 0}), Vec3d{}), (Vec3d{1, 0, 0}));
  // Hand evaluation of rotZ(90 deg) = [[0,-1,0],[1,0,0],[0,0,1]] on (1,0,0).
  const Vec3d r = transform_point(rotation_pose(rot_z(kPi / 2)), {1, 0, 0});
  EXPECT_NEAR(r.x, 0.0, 1e-12);
  EXPECT_NEAR(r.y, 1.0, 1e-12);
  EXPECT_NEAR(r.z, 0.0, 1e-12);
}

TEST(Pose, FromAffineRejectsNonRigid) {
  Mat4 a = Mat4::identity();
  a(0, 0) = 2.0;
  EXPECT_THROW(pose_from_affine(a), DomainError);
  Mat4 b = Mat4::identity();
  b(3, 0) = 1.0;
  EXPECT_THROW(pose_from_affine(b), DomainError);
}

TEST(Rotation, BetweenVectors) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    const Vec3d a = test::random_unit(rng), b = test::random_unit(rng);
    const Mat3d r = rotation_between(a, b);
    const Vec3d ra = r * a;
    EXPECT_NEAR(norm(ra - b), 0.0, 1e-12);
  }
  const Mat3d flip = rotation_between({0, 0, 1}, {0, 0, -1});
  EXPECT_NEAR(norm(flip * Vec3d{0, 0, 1} - Vec3d{0, 0, -1}), 0.0, 1e-12);
}
