#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mgua/memory.hpp"
#include "mgua/rng.hpp"
#include "mgua/types.hpp"

namespace mgua {

// A sparsity pattern: structured N:M (fixed keep count per group) or learned
// (budgeted per-group keep counts, still representable with 2-bit indices).
struct SparsityPattern {
    PatternKind kind = PatternKind::P2_4;
    std::vector<uint8_t> keep_counts;  // learned only; one entry per group

    int group_size() const { return pattern_group_size(kind); }
};

struct SparsityCharacteristics {
    double density = 0.0;                      // fraction of |x| > 1e-12
    std::array<int64_t, 5> group_histogram{};  // #groups with k nonzeros, group size 4
    double group_variance = 0.0;               // variance of per-group density
    bool low_density = false;                  // density < 0.10 (soft precondition)
    int64_t size = 0;
    int density_decile = 0;   // clamp(floor(density*10), 0, 9)
    int variance_tercile = 0; // thresholds 1/12, 1/6 on [0, 0.25]
    // Relative L2 pruning error for each candidate pattern on this tensor
    // (learned evaluated at the tensor's own density, clamped to >= 0.1).
    std::array<double, 4> predicted_error{};
};

SparsityCharacteristics analyze_sparsity(std::span<const double> x, int64_t rows, int64_t cols);

// Keep the largest-magnitude keep_count entries per group (ties -> lowest
// index), zero the rest. Groups run along the last axis; a non-divisible tail
// is treated as zero-padded.
std::vector<double> prune_to_pattern(std::span<const double> x, int64_t rows, int64_t cols,
                                     const SparsityPattern& pattern);

struct CompressedTensor {
    enum class Dtype : uint8_t { F32 = 0, I8 = 1 };
    enum class Encoding : uint8_t { Index = 0, Bitmap = 1 };

    PatternKind pattern = PatternKind::P2_4;
    int group_size = 4;
    Encoding encoding = Encoding::Index;
    Dtype dtype = Dtype::F32;
    int64_t rows = 0;
    int64_t cols = 0;                  // logical (unpadded) last-axis extent
    std::vector<uint8_t> keep_counts;  // per group, row-major
    std::vector<uint8_t> indices;      // 2-bit codes (stored unpacked), strictly
                                       // increasing within each group
    std::vector<double> values;        // kept entries, group order

    int64_t groups_per_row() const { return (cols + group_size - 1) / group_size; }
    int64_t total_kept() const { return static_cast<int64_t>(values.size()); }
};

// Pack a pattern-conforming pruned tensor. A group holding more nonzeros than
// the pattern allows is a contract error naming the group.
CompressedTensor compress(std::span<const double> pruned, int64_t rows, int64_t cols,
                          const SparsityPattern& pattern);
std::vector<double> decompress(const CompressedTensor& c);

struct SparseTrace {
    uint64_t macs = 0;
    uint64_t cycles = 0;
    double utilization = 0.0;  // macs / (16 * cycles) on the 4x4 PE array
};

struct SparseMacResult {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<double> result;
    SparseTrace trace;
};

// result[i,k] = sum over kept entries a_val * b[global_index, k]. Equals a
// dense matmul of the pruned matrix with b. The trace models an
// output-stationary 4x4 PE array: outputs tile 4x4, each PE accumulates one
// output while the compressed row streams past; skipped zeros cost nothing.
SparseMacResult sparse_mac(const CompressedTensor& a, std::span<const double> b,
                           int64_t b_cols);

// Budgeted per-group keep counts by global greedy magnitude selection:
// total kept = round(target_density * size). Greedy-by-magnitude minimizes
// the pruning L2 error for this separable objective.
SparsityPattern learned_pattern(std::span<const double> x, int64_t rows, int64_t cols,
                                double target_density);

// ---------------------------------------------------------------------------
// Curriculum over the permitted pattern set: stage 0 {2:4}, stage 1 adds
// {1:4, 1:3}, stage 2 adds learned. Stages only advance.
// ---------------------------------------------------------------------------
struct CurriculumState {
    int stage = 0;
    std::vector<std::pair<PatternKind, double>> window;  // last <= 20 outcomes
    Rng rng;

    explicit CurriculumState(uint64_t seed) : rng(mix_seed(seed, 0x63757272)) {}
};

std::vector<PatternKind> permitted_patterns(int stage);

// Memory recommendation first (when permitted), else the permitted pattern
// with the smallest predicted pruning error; epsilon-greedy exploration.
PatternKind curriculum_select(const SparsityCharacteristics& characteristics,
                              CurriculumState& state, AdaptiveMemory& memory, double epsilon);

// Append an outcome; advance when the 20-outcome moving average reaches 0.95
// with a full window (the window resets on advancement).
void curriculum_update(CurriculumState& state, PatternKind pattern, double accuracy_retention);

// ---------------------------------------------------------------------------
// File codec: 64-byte header, then (index encoding) keep_counts u8/group +
// 2-bit indices packed four per byte + values, or (bitmap encoding) one bit
// per logical element + values packed densely. See docs/formats.md.
// ---------------------------------------------------------------------------
std::vector<uint8_t> compressed_to_bytes(const CompressedTensor& c);
CompressedTensor compressed_from_bytes(std::span<const uint8_t> bytes);

// Curriculum snapshot (persisted alongside the memory snapshot).
std::string curriculum_to_json(const CurriculumState& state);
void curriculum_from_json(const std::string& json_text, CurriculumState& state);

}  // namespace mgua
