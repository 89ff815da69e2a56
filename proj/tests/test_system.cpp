#include <gtest/gtest.h>

#include <random>
#include <set>

#include "sqd/system.hpp"

using namespace sqd;

namespace {

Determinant parse(const std::string& s, int n) { return parse_bitstring(s, make_shape(n, 0, 0)); }

}  // namespace

TEST(HammingWeights, PaperStrings) {
  EXPECT_EQ(hamming_weights(parse("0101", 2)), (SpinCounts{1, 1}));
  EXPECT_EQ(hamming_weights(parse("1001", 2)), (SpinCounts{1, 1}));
  EXPECT_EQ(hamming_weights(Determinant{}), (SpinCounts{0, 0}));
  EXPECT_EQ(hamming_weights(parse("1101", 2)).total(), 3);
}

TEST(RhfDeterminant, Strings) {
  EXPECT_EQ(render_bitstring(rhf_determinant(make_shape(2, 1, 1)), 2), "0101");
  EXPECT_EQ(render_bitstring(rhf_determinant(make_shape(3, 1, 1)), 3), "001001");
  EXPECT_EQ(render_bitstring(rhf_determinant(make_shape(2, 2, 2)), 2), "1111");
  EXPECT_EQ(render_bitstring(rhf_determinant(make_shape(4, 3, 1)), 4), "00010111");
}

TEST(RhfDeterminant, WeightsMatchShape) {
  for (int n = 0; n <= 10; ++n)
    for (int a = 0; a <= n; ++a)
      for (int b = 0; b <= n; ++b) EXPECT_EQ(hamming_weights(rhf_determinant(make_shape(n, a, b))), (SpinCounts{a, b}));
}

TEST(SpinInverse, Examples) {
  EXPECT_EQ(render_bitstring(spin_inverse(parse("1001", 2)), 2), "0110");
  EXPECT_EQ(render_bitstring(spin_inverse(parse("0101", 2)), 2), "0101");
  EXPECT_EQ(render_bitstring(spin_inverse(parse("1010", 2)), 2), "1010");
  EXPECT_EQ(render_bitstring(spin_inverse(parse("1100", 2)), 2), "0011");
}

TEST(SpinInverse, InvolutionSwapsCounts) {
  std::mt19937_64 gen(7);
  for (int t = 0; t < 500; ++t) {
    const Determinant d{gen() & low_bits(20), gen() & low_bits(20)};
    const Determinant s = spin_inverse(d);
    EXPECT_EQ(spin_inverse(s), d);
    EXPECT_EQ(hamming_weights(s).up, hamming_weights(d).dn);
    EXPECT_EQ(hamming_weights(s).dn, hamming_weights(d).up);
    EXPECT_EQ(hamming_weights(s).total(), hamming_weights(d).total());
  }
}

TEST(SectorDimension, TableValues) {
  EXPECT_EQ(sector_dimension(make_shape(16, 5, 5)), 19079424u);
  EXPECT_EQ(sector_dimension(make_shape(20, 15, 15)), 240374016u);
  EXPECT_EQ(sector_dimension(make_shape(9, 0, 0)), 1u);
  EXPECT_EQ(sector_dimension(make_shape(0, 0, 0)), 1u);
}

TEST(SectorDimension, MatchesEnumeration) {
  for (int n = 0; n <= 8; ++n)
    for (int a = 0; a <= n; ++a)
      for (int b = 0; b <= n; ++b) {
        const auto shape = make_shape(n, a, b);
        std::uint64_t count = 0;
        for (Mask x = 0; x < (Mask{1} << n); ++x)
          for (Mask y = 0; y < (Mask{1} << n); ++y) count += in_sector({x, y}, shape);
        EXPECT_EQ(sector_dimension(shape), count);
        EXPECT_EQ(enumerate_sector(shape).size(), count);
      }
}

TEST(SectorDimension, OverflowIsReported) {
  EXPECT_THROW(sector_dimension(make_shape(64, 32, 32)), BudgetError);
}

TEST(EnumerateSector, CanonicalOrderAndMembership) {
  const auto shape = make_shape(6, 2, 3);
  const auto dets = enumerate_sector(shape);
  EXPECT_TRUE(std::is_sorted(dets.begin(), dets.end()));
  EXPECT_EQ(std::set<Determinant>(dets.begin(), dets.end()).size(), dets.size());
  for (const auto& d : dets) EXPECT_TRUE(in_sector(d, shape));
}

TEST(EnumerateStrings, Edges) {
  EXPECT_EQ(enumerate_strings(5, 0), std::vector<Mask>{0});
  EXPECT_EQ(enumerate_strings(5, 5), std::vector<Mask>{0b11111});
  EXPECT_TRUE(enumerate_strings(5, 6).empty());
  EXPECT_EQ(enumerate_strings(64, 1).size(), 64u);
  EXPECT_EQ(enumerate_strings(64, 63).size(), 64u);
}

TEST(ParseBitstring, Examples) {
  const auto d = parse("0101", 2);
  EXPECT_EQ(d.alpha, 0b01u);
  EXPECT_EQ(d.beta, 0b01u);
  const auto e = parse("1100", 2);
  EXPECT_EQ(e.alpha, 0b00u);
  EXPECT_EQ(e.beta, 0b11u);
  EXPECT_THROW(parse("01x1", 2), FormatError);
  EXPECT_THROW(parse("010", 2), FormatError);
}

TEST(ParseBitstring, RoundTripRandomMasks) {
  std::mt19937_64 gen(11);
  for (int n : {1, 3, 17, 32, 63, 64}) {
    const auto shape = make_shape(n, 0, 0);
    for (int t = 0; t < 200; ++t) {
      const Determinant d{gen() & low_bits(n), gen() & low_bits(n)};
      EXPECT_EQ(parse_bitstring(render_bitstring(d, n), shape), d);
    }
  }
}

TEST(SystemShape, Validation) {
  EXPECT_THROW(make_shape(3, 4, 0), DomainError);
  EXPECT_THROW(make_shape(3, 0, -1), DomainError);
  EXPECT_THROW(make_shape(65, 0, 0), DomainError);
  const auto s = make_shape(5, 3, 2);
  EXPECT_EQ(s.n_qubits(), 10);
  EXPECT_EQ(s.n_electrons(), 5);
}

TEST(Determinant, FitsShape) {
  const auto shape = make_shape(3, 1, 1);
  EXPECT_TRUE(fits_shape({0b100, 0b001}, shape));
  EXPECT_FALSE(fits_shape({0b1000, 0b001}, shape));
}
