#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace mgua {

// Tile sizes of the simulated systolic array along output-channel,
// input-channel, spatial and temporal axes. Each dimension is one of
// {1,2,4,8,16} and the product (the PE budget) is capped at 256 = 4^4,
// the default configuration's product.
struct SystolicConfig {
    int m = 4;
    int v = 4;
    int n = 4;
    int s = 4;

    int product() const { return m * v * n * s; }
    bool operator==(const SystolicConfig&) const = default;
};

bool valid_systolic_config(const SystolicConfig& config);
std::string systolic_config_to_string(const SystolicConfig& config);  // "4,4,4,4"
std::optional<SystolicConfig> systolic_config_from_string(std::string_view text);

// Sparsity pattern families. Structured patterns keep a fixed count per
// fixed-size group; LEARNED carries per-group keep counts.
enum class PatternKind : uint8_t { P2_4 = 0, P1_4 = 1, P1_3 = 2, Learned = 3 };

std::string pattern_token(PatternKind kind);  // "2:4", "1:4", "1:3", "learned"
std::optional<PatternKind> pattern_from_token(std::string_view token);
int pattern_group_size(PatternKind kind);  // 4, 4, 3, 4
int pattern_keep_count(PatternKind kind);  // 2, 1, 1, -1 (learned: per group)

// Shape of a spike tensor: input-channel x spatial x temporal.
struct Dims3 {
    int64_t v = 0;
    int64_t n = 0;
    int64_t s = 0;

    int64_t size() const { return v * n * s; }
    bool operator==(const Dims3&) const = default;
};

}  // namespace mgua
