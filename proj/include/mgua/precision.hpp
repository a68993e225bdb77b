#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace mgua {

// Emulated floating-point formats. All values are carried in fp64 and rounded
// to the target format after every elementary operation.
enum class PrecisionLevel : uint8_t { FP64 = 0, FP32 = 1, BF16 = 2, FP16 = 3 };

inline constexpr int kPrecisionLevelCount = 4;

struct FormatSpec {
    int exponent_bits;
    int mantissa_bits;  // stored (explicit) mantissa bits
    int emax;           // largest unbiased exponent of a normal value
    int emin;           // smallest unbiased exponent of a normal value
    double max_finite;
};

const FormatSpec& format_spec(PrecisionLevel level);

// Fineness rank on the escalation ladder BF16 -> FP32 -> FP64. FP16 ranks
// with BF16: it is a storage-only format and never appears on the ladder
// (its 5-bit exponent cannot survive ill-conditioned geometry).
int fineness_rank(PrecisionLevel level);
bool at_least_as_fine(PrecisionLevel a, PrecisionLevel b);

std::string to_token(PrecisionLevel level);  // "fp64", "fp32", "bf16", "fp16"
std::optional<PrecisionLevel> level_from_token(std::string_view token);

// Round an fp64 value to the nearest value representable in `level`
// (round-to-nearest-even), widened back to fp64. Total function: overflow
// yields signed infinity, magnitudes below half the minimum subnormal yield
// signed zero, NaN passes through, subnormals are honored.
double round_to(double x, PrecisionLevel level);

// One multiply-accumulate executed "in precision `level`": inputs are rounded
// to the level, then acc + round(a*b) with both the product and the sum
// rounded. With `fused` the product feeds the add unrounded (fp64 FMA).
double mac_in(double a, double b, double acc, PrecisionLevel level, bool fused = false);

// The four precision assignments of a mixed-precision assembly:
// basis tabulation, geometry computation, matrix operations, storage.
struct PrecisionConfig {
    PrecisionLevel u_p;
    PrecisionLevel u_m;
    PrecisionLevel u_q;
    PrecisionLevel u_s;

    bool operator==(const PrecisionConfig&) const = default;
};

// Accumulation must be at least as fine as storage.
bool valid_config(const PrecisionConfig& config);

std::string config_to_string(const PrecisionConfig& config);  // "bf16,bf16,fp32,fp32"
std::optional<PrecisionConfig> config_from_string(std::string_view text);

inline constexpr PrecisionConfig kConfigAllFp64{PrecisionLevel::FP64, PrecisionLevel::FP64,
                                                PrecisionLevel::FP64, PrecisionLevel::FP64};
inline constexpr PrecisionConfig kConfigAllFp32{PrecisionLevel::FP32, PrecisionLevel::FP32,
                                                PrecisionLevel::FP32, PrecisionLevel::FP32};
inline constexpr PrecisionConfig kConfigBf16Mixed{PrecisionLevel::BF16, PrecisionLevel::BF16,
                                                  PrecisionLevel::FP32, PrecisionLevel::FP32};

}  // namespace mgua
