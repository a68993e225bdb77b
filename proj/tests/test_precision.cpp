#include <doctest.h>

#include <bit>
#include <cmath>
#include <limits>

#include "mgua/precision.hpp"
#include "mgua/rng.hpp"
#include "oracles.hpp"

using mgua::PrecisionLevel;
using mgua::round_to;

namespace {

bool bit_equal(double a, double b) {
    return std::bit_cast<uint64_t>(a) == std::bit_cast<uint64_t>(b);
}

constexpr PrecisionLevel kLevels[] = {PrecisionLevel::FP64, PrecisionLevel::FP32,
                                      PrecisionLevel::BF16, PrecisionLevel::FP16};

}  // namespace

TEST_SUITE("precision") {

TEST_CASE("format specs") {
    CHECK(mgua::format_spec(PrecisionLevel::FP64).exponent_bits == 11);
    CHECK(mgua::format_spec(PrecisionLevel::FP64).mantissa_bits == 52);
    CHECK(mgua::format_spec(PrecisionLevel::FP32).exponent_bits == 8);
    CHECK(mgua::format_spec(PrecisionLevel::FP32).mantissa_bits == 23);
    CHECK(mgua::format_spec(PrecisionLevel::BF16).exponent_bits == 8);
    CHECK(mgua::format_spec(PrecisionLevel::BF16).mantissa_bits == 7);
    CHECK(mgua::format_spec(PrecisionLevel::FP16).exponent_bits == 5);
    CHECK(mgua::format_spec(PrecisionLevel::FP16).mantissa_bits == 10);
    CHECK(mgua::format_spec(PrecisionLevel::FP16).max_finite == 65504.0);
    CHECK(mgua::format_spec(PrecisionLevel::FP32).max_finite ==
          doctest::Approx(3.4028234663852886e38).epsilon(1e-15));
}

TEST_CASE("round_to pinned values") {
    CHECK(round_to(1.0, PrecisionLevel::BF16) == 1.0);
    // 1/3 normalizes to 1.0101010|101... x 2^-2; guard 1, sticky 1 rounds the
    // 7-bit mantissa up to 1.0101011 x 2^-2 (cross-checked against ml_dtypes
    // bfloat16).
    CHECK(round_to(1.0 / 3.0, PrecisionLevel::BF16) == 0.333984375);

    const double nz = round_to(-0.0, PrecisionLevel::FP16);
    CHECK(nz == 0.0);
    CHECK(std::signbit(nz));

    // 257 sits halfway between the BF16-representable 256 and 258; ties to even.
    CHECK(round_to(257.0, PrecisionLevel::BF16) == 256.0);

    // FP16 overflow threshold: 65520 is the midpoint above max finite 65504.
    CHECK(round_to(65519.9999, PrecisionLevel::FP16) == 65504.0);
    CHECK(std::isinf(round_to(65520.0, PrecisionLevel::FP16)));
    CHECK(std::isinf(round_to(1e39, PrecisionLevel::BF16)));
    CHECK(round_to(1e39, PrecisionLevel::BF16) > 0.0);
    CHECK(std::isinf(round_to(-1e39, PrecisionLevel::BF16)));

    // NaN and infinities pass through.
    CHECK(std::isnan(round_to(std::nan(""), PrecisionLevel::FP16)));
    CHECK(std::isinf(round_to(HUGE_VAL, PrecisionLevel::BF16)));

    // Below half the minimum FP16 subnormal (2^-25) rounds to signed zero.
    const double tiny = std::ldexp(1.0, -26);
    CHECK(round_to(tiny, PrecisionLevel::FP16) == 0.0);
    CHECK(!std::signbit(round_to(tiny, PrecisionLevel::FP16)));
    CHECK(std::signbit(round_to(-tiny, PrecisionLevel::FP16)));
    // Exactly half the minimum subnormal ties to zero (even).
    CHECK(round_to(std::ldexp(1.0, -25), PrecisionLevel::FP16) == 0.0);
    // Just above the tie point rounds to the minimum subnormal.
    CHECK(round_to(std::ldexp(1.0, -25) * 1.0000001, PrecisionLevel::FP16) ==
          std::ldexp(1.0, -24));
}

TEST_CASE("round_to subnormals honored") {
    // FP16 subnormal quantum is 2^-24.
    const double q = std::ldexp(1.0, -24);
    CHECK(round_to(3.4 * q, PrecisionLevel::FP16) == 3.0 * q);
    CHECK(round_to(3.6 * q, PrecisionLevel::FP16) == 4.0 * q);
    CHECK(round_to(2.5 * q, PrecisionLevel::FP16) == 2.0 * q);  // tie to even
    CHECK(round_to(3.5 * q, PrecisionLevel::FP16) == 4.0 * q);  // tie to even
}

TEST_CASE("exactness at fp64") {
    mgua::Rng rng(11);
    for (int i = 0; i < 10000; ++i) {
        const uint64_t bits = rng.next_u64();
        const double x = std::bit_cast<double>(bits);
        CHECK(bit_equal(round_to(x, PrecisionLevel::FP64), x));
    }
}

TEST_CASE("idempotence and monotonicity") {
    mgua::Rng rng(12);
    for (PrecisionLevel level : kLevels) {
        for (int i = 0; i < 20000; ++i) {
            double x = std::bit_cast<double>(rng.next_u64());
            if (std::isnan(x)) continue;
            const double r = round_to(x, level);
            CHECK(bit_equal(round_to(r, level), r));

            double y = std::bit_cast<double>(rng.next_u64());
            if (std::isnan(y)) continue;
            if (x > y) std::swap(x, y);
            CHECK(round_to(x, level) <= round_to(y, level));
        }
    }
}

TEST_CASE("agreement with the bit-manipulation oracle") {
    mgua::Rng rng(13);
    for (PrecisionLevel level : kLevels) {
        // Random bit patterns cover normals, subnormals, infinities, NaNs.
        for (int i = 0; i < 100000; ++i) {
            const double x = std::bit_cast<double>(rng.next_u64());
            CHECK(bit_equal(round_to(x, level), oracle::round_to(x, level)));
        }
        // Plus a band around each format's interesting magnitudes.
        for (int e = -30; e <= 30; ++e) {
            for (int i = 0; i < 200; ++i) {
                const double x = rng.uniform_real(-1.0, 1.0) * std::ldexp(1.0, e);
                CHECK(bit_equal(round_to(x, level), oracle::round_to(x, level)));
            }
        }
    }
}

TEST_CASE("mac_in semantics") {
    CHECK(mgua::mac_in(1.0, 1.0, 0.0, PrecisionLevel::FP64) == 1.0);

    // At FP64 the contract is native double arithmetic with the product
    // rounded before the add (i.e. plain a*b then +).
    mgua::Rng rng(14);
    for (int i = 0; i < 10000; ++i) {
        const double a = rng.uniform_real(-100.0, 100.0);
        const double b = rng.uniform_real(-100.0, 100.0);
        const double acc = rng.uniform_real(-100.0, 100.0);
        CHECK(bit_equal(mgua::mac_in(a, b, acc, PrecisionLevel::FP64), acc + a * b));
        CHECK(bit_equal(mgua::mac_in(a, b, acc, PrecisionLevel::FP64, true),
                        std::fma(a, b, acc)));
    }

    // 256*1 + 1 = 257 -> not representable in BF16's 8 significand bits.
    CHECK(mgua::mac_in(256.0, 1.0, 1.0, PrecisionLevel::BF16) == 256.0);

    // Reduced-precision product rounds before the add.
    for (PrecisionLevel level : {PrecisionLevel::FP32, PrecisionLevel::BF16}) {
        for (int i = 0; i < 2000; ++i) {
            const double a = round_to(rng.uniform_real(-8.0, 8.0), level);
            const double b = round_to(rng.uniform_real(-8.0, 8.0), level);
            const double acc = round_to(rng.uniform_real(-8.0, 8.0), level);
            const double expected = round_to(acc + round_to(a * b, level), level);
            CHECK(bit_equal(mgua::mac_in(a, b, acc, level), expected));
        }
    }
}

TEST_CASE("config tokens and validity") {
    CHECK(mgua::to_token(PrecisionLevel::BF16) == "bf16");
    CHECK(mgua::level_from_token("fp32") == PrecisionLevel::FP32);
    CHECK(!mgua::level_from_token("fp8").has_value());

    const auto cfg = mgua::config_from_string("bf16,bf16,fp32,fp32");
    REQUIRE(cfg.has_value());
    CHECK(cfg->u_p == PrecisionLevel::BF16);
    CHECK(cfg->u_q == PrecisionLevel::FP32);
    CHECK(mgua::config_to_string(*cfg) == "bf16,bf16,fp32,fp32");

    // u_q must be at least as fine as u_s.
    CHECK(!mgua::config_from_string("fp64,fp64,bf16,fp32").has_value());
    // bf16 and fp16 rank equal, so bf16 accumulate with fp16 storage is valid.
    CHECK(mgua::config_from_string("fp32,fp32,bf16,fp16").has_value());
}

TEST_CASE("escalation ladder ranks") {
    CHECK(mgua::fineness_rank(PrecisionLevel::BF16) == 0);
    CHECK(mgua::fineness_rank(PrecisionLevel::FP16) == 0);
    CHECK(mgua::fineness_rank(PrecisionLevel::FP32) == 1);
    CHECK(mgua::fineness_rank(PrecisionLevel::FP64) == 2);
}

}  // TEST_SUITE
