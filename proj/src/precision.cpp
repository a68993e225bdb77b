#include "mgua/precision.hpp"

#include <cmath>

namespace mgua {

namespace {

constexpr FormatSpec make_spec(int exp_bits, int mant_bits) {
    const int emax = (1 << (exp_bits - 1)) - 1;
    const int emin = 1 - emax;
    // (2 - 2^-m) * 2^emax, built without touching the double's own limits.
    double max_finite = 2.0;
    double ulp = 1.0;
    for (int i = 0; i < mant_bits; ++i) ulp *= 0.5;
    max_finite -= ulp;
    for (int i = 0; i < emax; ++i) max_finite *= 2.0;
    return FormatSpec{exp_bits, mant_bits, emax, emin, max_finite};
}

constexpr FormatSpec kSpecs[kPrecisionLevelCount] = {
    make_spec(11, 52),  // FP64
    make_spec(8, 23),   // FP32
    make_spec(8, 7),    // BF16
    make_spec(5, 10),   // FP16
};

}  // namespace

const FormatSpec& format_spec(PrecisionLevel level) {
    return kSpecs[static_cast<int>(level)];
}

int fineness_rank(PrecisionLevel level) {
    switch (level) {
        case PrecisionLevel::BF16:
        case PrecisionLevel::FP16: return 0;
        case PrecisionLevel::FP32: return 1;
        case PrecisionLevel::FP64: return 2;
    }
    return 0;
}

bool at_least_as_fine(PrecisionLevel a, PrecisionLevel b) {
    return fineness_rank(a) >= fineness_rank(b);
}

std::string to_token(PrecisionLevel level) {
    switch (level) {
        case PrecisionLevel::FP64: return "fp64";
        case PrecisionLevel::FP32: return "fp32";
        case PrecisionLevel::BF16: return "bf16";
        case PrecisionLevel::FP16: return "fp16";
    }
    return "fp64";
}

std::optional<PrecisionLevel> level_from_token(std::string_view token) {
    if (token == "fp64") return PrecisionLevel::FP64;
    if (token == "fp32") return PrecisionLevel::FP32;
    if (token == "bf16") return PrecisionLevel::BF16;
    if (token == "fp16") return PrecisionLevel::FP16;
    return std::nullopt;
}

double round_to(double x, PrecisionLevel level) {
    if (level == PrecisionLevel::FP64) return x;
    if (!std::isfinite(x)) return x;  // NaN and +/-inf pass through
    if (x == 0.0) return x;           // keeps the sign of zero

    const FormatSpec& fs = format_spec(level);

    // |x| = f * 2^bexp with f in [0.5, 1), so the unbiased exponent is bexp-1.
    int bexp = 0;
    std::frexp(x, &bexp);
    const int e = bexp - 1;

    // Quantum of the target binade; the subnormal range shares the quantum of
    // the lowest normal binade.
    const int qexp = (e >= fs.emin ? e : fs.emin) - fs.mantissa_bits;
    const double quantum = std::ldexp(1.0, qexp);

    // x/quantum < 2^(mant+1) <= 2^53, so rint is exact and RNE under the
    // default rounding mode; y is then an exact multiple of the quantum.
    const double y = std::rint(x / quantum) * quantum;

    if (std::fabs(y) > fs.max_finite) return std::copysign(HUGE_VAL, x);
    if (y == 0.0) return std::copysign(0.0, x);
    return y;
}

double mac_in(double a, double b, double acc, PrecisionLevel level, bool fused) {
    const double ra = round_to(a, level);
    const double rb = round_to(b, level);
    const double racc = round_to(acc, level);
    if (fused) {
        return round_to(std::fma(ra, rb, racc), level);
    }
    const double product = round_to(ra * rb, level);
    return round_to(racc + product, level);
}

bool valid_config(const PrecisionConfig& config) {
    return at_least_as_fine(config.u_q, config.u_s);
}

std::string config_to_string(const PrecisionConfig& config) {
    return to_token(config.u_p) + "," + to_token(config.u_m) + "," + to_token(config.u_q) + "," +
           to_token(config.u_s);
}

std::optional<PrecisionConfig> config_from_string(std::string_view text) {
    PrecisionLevel levels[4];
    size_t start = 0;
    for (int i = 0; i < 4; ++i) {
        const size_t comma = text.find(',', start);
        const bool last = (i == 3);
        if (last != (comma == std::string_view::npos)) return std::nullopt;
        const std::string_view token =
            last ? text.substr(start) : text.substr(start, comma - start);
        const auto level = level_from_token(token);
        if (!level) return std::nullopt;
        levels[i] = *level;
        start = comma + 1;
    }
    PrecisionConfig config{levels[0], levels[1], levels[2], levels[3]};
    if (!valid_config(config)) return std::nullopt;
    return config;
}

}  // namespace mgua
