#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <set>

#include "sugvoxel/kernels.hpp"

using namespace sugvoxel;

namespace {

std::set<Coord3> as_set(const std::vector<Coord3>& v) { return {v.begin(), v.end()}; }

// Brute force: a point is reachable if it splits into one offset per layer.
bool splits(const std::vector<KernelSpec>& ks, std::size_t layers, const Coord3& p) {
  if (layers == 0) return p == Coord3{0, 0, 0};
  for (const auto& o : ks[layers - 1].offsets)
    if (splits(ks, layers - 1, p - o)) return true;
  return false;
}

std::set<Coord3> reachable(const std::vector<KernelSpec>& ks, std::int32_t radius) {
  std::set<Coord3> out;
  for (std::int32_t x = -radius; x <= radius; ++x)
    for (std::int32_t y = -radius; y <= radius; ++y)
      for (std::int32_t z = -radius; z <= radius; ++z)
        if (splits(ks, ks.size(), {x, y, z})) out.insert({x, y, z});
  return out;
}

}  // namespace

TEST(KernelOffsets, CubicThreeIsFullCube) {
  const auto o = kernel_offsets(KernelShape::cubic, 3);
  ASSERT_EQ(o.size(), 27u);
  EXPECT_EQ(as_set(o).size(), 27u);
  for (const auto& c : o) {
    EXPECT_LE(std::abs(c.x), 1);
    EXPECT_LE(std::abs(c.y), 1);
    EXPECT_LE(std::abs(c.z), 1);
  }
}

TEST(KernelOffsets, HyperCrossThreeIsCentrePlusAxes) {
  const auto o = kernel_offsets(KernelShape::hyper_cross, 3);
  ASSERT_EQ(o.size(), 7u);
  const std::set<Coord3> expect{{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  EXPECT_EQ(as_set(o), expect);
  EXPECT_TRUE(std::is_sorted(o.begin(), o.end()));
}

TEST(KernelOffsets, SizeTwoSets) {
  const std::set<Coord3> hc{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  EXPECT_EQ(as_set(kernel_offsets(KernelShape::hyper_cross, 2)), hc);
  const auto cube = kernel_offsets(KernelShape::cubic, 2);
  ASSERT_EQ(cube.size(), 8u);
  for (const auto& c : cube) {
    EXPECT_TRUE(c.x == 0 || c.x == 1);
    EXPECT_TRUE(c.y == 0 || c.y == 1);
    EXPECT_TRUE(c.z == 0 || c.z == 1);
  }
}

TEST(KernelOffsets, CubicSizeOneAndFive) {
  EXPECT_EQ(kernel_offsets(KernelShape::cubic, 1), (std::vector<Coord3>{{0, 0, 0}}));
  const auto o = kernel_offsets(KernelShape::cubic, 5);
  EXPECT_EQ(o.size(), 125u);
  EXPECT_EQ(o.front(), (Coord3{-2, -2, -2}));
  EXPECT_EQ(o.back(), (Coord3{2, 2, 2}));
}

TEST(KernelOffsets, UnsupportedSizesThrow) {
  for (std::int32_t s : {0, 1, 4, 5, -3}) {
    try {
      (void)kernel_offsets(KernelShape::hyper_cross, s);
      FAIL() << "size " << s;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::unsupported_kernel_size);
    }
  }
  EXPECT_THROW((void)kernel_offsets(KernelShape::cubic, 0), Error);
}

TEST(KernelShapeNames, ParseAndPrint) {
  EXPECT_EQ(parse_kernel_shape("cubic"), KernelShape::cubic);
  EXPECT_EQ(parse_kernel_shape("hyper_cross"), KernelShape::hyper_cross);
  EXPECT_EQ(to_string(KernelShape::hyper_cross), "hyper_cross");
  EXPECT_THROW((void)parse_kernel_shape("sphere"), Error);
}

TEST(ReceptiveField, ThreeHyperCrossLayersCoverTheCube) {
  const std::vector<KernelSpec> ks(3, KernelSpec::make(KernelShape::hyper_cross, 3));
  const auto rf = receptive_field(ks);
  const auto rf_set = as_set(rf);
  for (std::int32_t x = -1; x <= 1; ++x)
    for (std::int32_t y = -1; y <= 1; ++y)
      for (std::int32_t z = -1; z <= 1; ++z) EXPECT_TRUE(rf_set.count({x, y, z})) << x << y << z;
  EXPECT_TRUE(rf_set.count({1, 1, 1}));
  EXPECT_TRUE(rf_set.count({-1, -1, -1}));
  // L1 ball of radius 3 holds 63 lattice points.
  EXPECT_EQ(rf.size(), 63u);
  EXPECT_EQ(rf_set, reachable(ks, 4));
}

TEST(ReceptiveField, TwoLayersMissTheCorner) {
  const std::vector<KernelSpec> ks(2, KernelSpec::make(KernelShape::hyper_cross, 3));
  const auto rf = as_set(receptive_field(ks));
  EXPECT_FALSE(rf.count({1, 1, 1}));
  EXPECT_TRUE(rf.count({1, 1, 0}));
  EXPECT_EQ(rf.size(), 25u);
}

TEST(ReceptiveField, MixedStacksMatchBruteForce) {
  const std::vector<std::vector<KernelSpec>> stacks{
      {KernelSpec::make(KernelShape::cubic, 3)},
      {KernelSpec::make(KernelShape::cubic, 3), KernelSpec::make(KernelShape::cubic, 3)},
      {KernelSpec::make(KernelShape::hyper_cross, 3), KernelSpec::make(KernelShape::hyper_cross, 2),
       KernelSpec::make(KernelShape::hyper_cross, 2)},
      {KernelSpec::make(KernelShape::cubic, 2), KernelSpec::make(KernelShape::hyper_cross, 3)},
  };
  for (const auto& s : stacks) EXPECT_EQ(as_set(receptive_field(s)), reachable(s, 4));
  EXPECT_EQ(receptive_field(stacks[1]).size(), 125u);
}

TEST(ReceptiveField, EmptyStackThrows) {
  EXPECT_THROW((void)receptive_field(std::vector<KernelSpec>{}), Error);
}

TEST(ConvParams, IdentityAndValidation) {
  const auto p = ConvParams::identity(KernelSpec::make(KernelShape::hyper_cross, 3), 3);
  EXPECT_NO_THROW(p.validate());
  auto bad = p;
  bad.bias.pop_back();
  EXPECT_THROW(bad.validate(), Error);
  KernelSpec off_centre{KernelShape::cubic, 2, {{1, 0, 0}, {0, 1, 0}}};
  EXPECT_THROW((void)ConvParams::identity(off_centre, 2), Error);
}
