#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mgua/fem.hpp"
#include "mgua/memory.hpp"
#include "mgua/mesh.hpp"
#include "mgua/snn.hpp"
#include "mgua/sparse.hpp"

namespace mgua {

// ---------------------------------------------------------------------------
// Cost model: a declared per-operation unit table standing in for energy.
// The values are modeled constants, not measurements; only ratios between
// modes carry meaning. The table is printed in every report.
// ---------------------------------------------------------------------------
struct CostTable {
    double fp64 = 4.0;
    double fp32 = 1.0;
    double bf16 = 0.3;
    double fp16 = 0.3;
    double int8 = 0.2;
    double spike = 0.1;  // binary-spike accumulate

    double rate(PrecisionLevel level) const;
};

struct CostCounters {
    std::array<uint64_t, kPrecisionLevelCount> macs_by_level{};      // stage-1 u_q MACs
    std::array<uint64_t, kPrecisionLevelCount> geometry_by_level{};  // stage-1 u_m ops
    uint64_t spike_macs = 0;   // stage-2 binary accumulates
    uint64_t int8_ops = 0;     // stage-2 quantize + shift-add integer ops
    uint64_t sparse_macs = 0;  // stage-3 kept-entry MACs (fp32 data)

    CostCounters& operator+=(const CostCounters& other);
};

double cost_model(const CostCounters& counters, const CostTable& table);

// ---------------------------------------------------------------------------
// Run configuration. Defaults reproduce the "full model": adaptive precision,
// adaptive parallelism, curriculum sparsity, index compression, unfused MACs.
// ---------------------------------------------------------------------------
struct RunConfig {
    uint64_t seed = 0;
    int batch_size = 32;
    std::string mesh_path;
    std::string output_dir = "out";

    std::optional<PrecisionConfig> fixed_precision;   // ablation: no adaptive precision
    std::optional<SystolicConfig> fixed_parallelism;  // ablation: no adaptive parallelism
    bool structured_only = false;                     // ablation: no curriculum
    CompressedTensor::Encoding compression = CompressedTensor::Encoding::Index;
    bool fused = false;
    std::string spike_format = "json";  // "json" | "packed"
    std::string stage1_dtype = "f64";   // "f64" | "f32"

    std::vector<LayerSpec> layers;  // empty: one square "fc" layer
    int snn_time_steps = 1;         // folds part of the spatial axis into time
    int sparse_b_cols = 8;
    std::optional<double> sparse_target_density;

    double epsilon = 0.1;  // exploration rate; 0 for greedy replay
    CostTable cost_table;
};

RunConfig run_config_from_json(const std::string& json_text);
std::string run_config_to_json(const RunConfig& config);  // canonical form (hashed)

// ---------------------------------------------------------------------------
// Stage summaries feeding the run report.
// ---------------------------------------------------------------------------
struct Stage1Summary {
    int64_t elements = 0;
    int matrix_dim = 0;
    int batches = 0;
    double mean_l2_error = 0.0;
    double max_l2_error = 0.0;
    int64_t flagged_high_kappa = 0;
    int64_t adaptations = 0;
    CostCounters counters;
    double cost_units = 0.0;
    std::vector<std::string> configs_used;  // distinct config strings, sorted
};

struct Stage2LayerSummary {
    std::string name;
    int bitwidth = 8;
    SystolicConfig config;
    uint64_t cycles = 0;
    double utilization = 0.0;
    uint64_t spike_macs = 0;
    double reconstruction_error = 0.0;
    bool saturated = false;
};

struct Stage2Summary {
    std::vector<Stage2LayerSummary> layers;
    int64_t saturation_events = 0;
    CostCounters counters;
    double cost_units = 0.0;
};

struct Stage3Summary {
    std::string pattern;
    double density = 0.0;
    bool low_density_flag = false;
    double accuracy_retention = 0.0;
    double sparse_dense_max_abs_diff = 0.0;
    uint64_t macs = 0;
    uint64_t cycles = 0;
    double utilization = 0.0;
    uint64_t compressed_bytes = 0;
    int curriculum_stage = 0;
    CostCounters counters;
    double cost_units = 0.0;
};

struct RunReport {
    uint64_t seed = 0;
    std::string config_hash;
    std::string memory_hash;  // snapshot hash after the run
    CostTable cost_table;
    Stage1Summary stage1;
    Stage2Summary stage2;
    Stage3Summary stage3;
    double total_cost_units = 0.0;
    uint64_t total_macs = 0;
};

std::string report_to_json(const RunReport& report);
std::string report_to_csv(const RunReport& report);

// ---------------------------------------------------------------------------
// Stage runners. Every stage reads its input artifact from files and writes
// its output artifact back, so a fused run and standalone stage runs follow
// byte-identical paths. Artifact names under output_dir:
//   stage1.bin / stage1.json      assembled element tensor + sidecar
//   spikes.json | spikes.bin      stage-2 spike document
//   stage3.mgct                   compressed output tensor
//   output.bin / output.json      pruned dense output + sidecar
//   report.json | report.csv
// ---------------------------------------------------------------------------
struct StageContext {
    RunConfig config;
    AdaptiveMemory memory;
    CurriculumState curriculum;

    explicit StageContext(const RunConfig& cfg);
};

// Combined memory + curriculum snapshot (the --dump-memory/--load-memory payload).
std::string dump_state(const StageContext& ctx);
void load_state(StageContext& ctx, const std::string& json_text);

Stage1Summary run_fem_stage(StageContext& ctx);
Stage2Summary run_snn_stage(StageContext& ctx);
Stage3Summary run_sparse_stage(StageContext& ctx);

RunReport run_pipeline(StageContext& ctx);

// ---------------------------------------------------------------------------
// Synthetic mesh generation: anisotropic affine maps of the reference element
// with singular-value ratio log-uniform in [kappa_min, kappa_max]. Achieved
// condition numbers are verified within 5% of target and recorded.
// ---------------------------------------------------------------------------
struct MeshGenInfo {
    std::vector<double> target_kappa;
    std::vector<double> achieved_kappa;
};

Mesh generate_synthetic_mesh(int n_elements, double kappa_min, double kappa_max,
                             ElementType type, uint64_t seed, MeshGenInfo* info = nullptr);

}  // namespace mgua
