#include <gtest/gtest.h>

#include <atomic>
#include <random>
#include <stdexcept>

#include "aot/hull.hpp"
#include "aot/kdtree.hpp"
#include "aot/parallel.hpp"
#include "test_util.hpp"

using namespace aot;

namespace {

std::vector<Vec3d> random_points(std::size_t n, std::uint64_t seed, double spread = 1.0) {
  std::mt19937_64 rng(seed);
  std::vector<Vec3d> pts(n);
  for (auto& p : pts) p = {test::uniform(rng, -spread, spread), test::uniform(rng, -spread, spread),
                           test::uniform(rng, -spread, spread)};
  return pts;
}

}  // namespace

TEST(KdTree, NearestMatchesBruteForce) {
  const auto pts = random_points(2000, 1);
  const KdTree tree(pts);
  const auto queries = random_points(500, 2, 1.5);
  for (const auto& q : queries) {
    std::size_t best = 0;
    double bd = squared_norm(pts[0] - q);
    for (std::size_t i = 1; i < pts.size(); ++i) {
      const double d = squared_norm(pts[i] - q);
      if (d < bd) bd = d, best = i;
    }
    const auto hit = tree.nearest(q);
    EXPECT_EQ(hit.index, best);
    EXPECT_EQ(hit.sq_dist, bd);
  }
}

TEST(KdTree, NearestOtherSkipsSelf) {
  const auto pts = random_points(300, 3);
  const KdTree tree(pts);
  for (std::size_t s = 0; s < pts.size(); ++s) {
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (i != s) bd = std::min(bd, squared_norm(pts[i] - pts[s]));
    const auto hit = tree.nearest_other(s);
    EXPECT_NE(hit.index, s);
    EXPECT_EQ(hit.sq_dist, bd);
  }
}

TEST(KdTree, TiesResolveToLowestIndex) {
  std::vector<Vec3d> pts(40, Vec3d{1, 1, 1});
  pts.push_back({0, 0, 0});
  const KdTree tree(pts);
  EXPECT_EQ(tree.nearest({1, 1, 1}).index, 0u);
  EXPECT_EQ(tree.nearest({0.9, 1, 1}).index, 0u);
}

TEST(KdTree, EmptyTreeReportsInfinity) {
  const KdTree tree(std::span<const Vec3d>{});
  EXPECT_TRUE(tree.empty());
  EXPECT_TRUE(std::isinf(tree.nearest({0, 0, 0}).sq_dist));
}

TEST(Hull, CubeCornersAreTheOnlyVertices) {
  std::vector<Vec3d> pts;
  for (int i = 0; i < 8; ++i) pts.push_back({i & 1 ? 1.0 : -1.0, i & 2 ? 1.0 : -1.0, i & 4 ? 1.0 : -1.0});
  for (const auto& p : random_points(500, 4, 0.99)) pts.push_back(p);
  const auto v = convex_hull_vertices(pts);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(static_cast<bool>(v[i]), i < 8) << i;
}

TEST(Hull, SpherePointsAreVerticesInteriorPointsAreNot) {
  // Oracle: points on a sphere are extreme, points strictly inside are not.
  std::mt19937_64 rng(5);
  std::vector<Vec3d> pts;
  for (int i = 0; i < 400; ++i) pts.push_back(test::random_unit(rng));
  for (int i = 0; i < 400; ++i) pts.push_back(test::random_unit(rng) * test::uniform(rng, 0.0, 0.5));
  const auto v = convex_hull_vertices(pts);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(static_cast<bool>(v[i]), i < 400) << i;
}

TEST(Hull, DegenerateInputsThrow) {
  std::vector<Vec3d> flat;
  for (int i = 0; i < 20; ++i) flat.push_back({static_cast<double>(i % 5), static_cast<double>(i / 5), 0.0});
  EXPECT_THROW(convex_hull_vertices(flat), GeometryError);
  EXPECT_THROW(convex_hull_vertices(std::vector<Vec3d>{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}), GeometryError);
}

TEST(Parallel, EveryIndexRunsOnceForAnyJobCount) {
  for (std::size_t jobs : {1u, 2u, 5u, 0u}) {
    std::vector<int> hits(257, 0);
    parallel_for(hits.size(), jobs, [&](std::size_t i) { ++hits[i]; });
    for (int h : hits) EXPECT_EQ(h, 1);
  }
}

TEST(Parallel, RethrowsWorkerException) {
  EXPECT_THROW(parallel_for(50, 3,
                            [](std::size_t i) {
                              if (i == 17) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
}
