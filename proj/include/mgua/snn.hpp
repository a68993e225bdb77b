#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mgua/memory.hpp"
#include "mgua/types.hpp"

namespace mgua {

// Unsigned affine quantization of the magnitudes; signs are carried aside and
// realized as two positive/negative passes so spike tensors stay strictly
// binary.
struct QuantizedTensor {
    Dims3 dims;
    std::vector<uint8_t> ints;   // each in [0, 2^b - 1]
    std::vector<int8_t> signs;   // -1 or +1 (zero maps to +1)
    int b = 8;
    double scale = 1.0;
    int zero_point = 0;
};

// scale = max|x| / (2^b - 1) (1 when x == 0); ints = round-half-even(|x|/scale)
QuantizedTensor quantize(std::span<const double> x, Dims3 dims, int b);
std::vector<double> dequantize(const QuantizedTensor& q);

struct SpikeTensor {
    Dims3 dims;
    std::vector<uint8_t> bits;  // strictly 0/1, row-major (v, n, s)
};

// Bit planes of the unsigned ints, LSB first: sum_j 2^j * plane_j == ints.
std::vector<SpikeTensor> decompose_multibit(const QuantizedTensor& q);

// Two-pass signed split: plane sets for max(x,0) and max(-x,0) magnitudes.
struct SignedPlanes {
    std::vector<SpikeTensor> pos;
    std::vector<SpikeTensor> neg;
};
SignedPlanes decompose_signed(const QuantizedTensor& q);

struct SystolicTrace {
    uint64_t cycles = 0;
    uint64_t active_pe_cycles = 0;
    uint64_t macs = 0;
    double utilization = 0.0;  // active / (M*V*N*S * cycles)

    SystolicTrace& operator+=(const SystolicTrace& other);
    void finalize(const SystolicConfig& config);
};

struct SystolicMatmulResult {
    Dims3 dims;  // (m, n, s)
    std::vector<int32_t> partials;
    SystolicTrace trace;
};

// partials[m,n,s] = sum_v spikes[v,n,s] * weights[m,v], exact integers.
// The trace counts one cycle per (M,V,N,S) tile step; edge tiles are
// partially occupied. Values are independent of the tiling.
SystolicMatmulResult systolic_matmul(const SpikeTensor& spikes,
                                     std::span<const int32_t> weights, int64_t m_total,
                                     const SystolicConfig& config);

struct ReconstructResult {
    std::vector<int64_t> values;
    bool saturated = false;  // some |value| exceeded the 32-bit accumulator
};

// result = sum_j (partials_j << j), planes LSB first. Accumulation is exact;
// exceeding int32 raises the saturation flag (values clamp, never wrap).
ReconstructResult shift_add_reconstruct(
    const std::vector<std::vector<int32_t>>& plane_partials, size_t count);

// ---------------------------------------------------------------------------
// Layer execution: quantize -> decompose -> per-plane systolic matmul ->
// shift-add -> dequantize, with the memory layer choosing bit-width and
// parallelism.
// ---------------------------------------------------------------------------
struct LayerSpec {
    std::string name = "layer";
    std::string layer_type = "fc";
    int out_channels = 0;   // 0: square (out = in channels)
    int weight_bits = 8;    // b_w <= 8
    std::string weights_file;  // empty: seeded random
};

struct LayerRun {
    std::string name;
    int bitwidth = 8;
    SystolicConfig config;
    SystolicTrace trace;
    double reconstruction_error = 0.0;  // vs fp64 dense matmul oracle
    uint64_t recon_adds = 0;
    bool saturated = false;
    Dims3 out_dims;
    std::vector<double> output;        // dequantized result
    QuantizedTensor out_quant;         // integer result requantized at `bitwidth`
};

struct SnnStageOptions {
    std::optional<SystolicConfig> fixed_parallelism;
    std::optional<int> fixed_bitwidth;
};

// One layer through the bit-serial path. `weights` is row-major
// out_channels x dims.v signed integers.
LayerRun run_layer(std::span<const double> x, Dims3 dims, std::span<const int32_t> weights,
                   const LayerSpec& spec, AdaptiveMemory& memory,
                   const SnnStageOptions& options);

std::vector<int32_t> seeded_weights(int64_t rows, int64_t cols, int weight_bits, uint64_t seed);

// ---------------------------------------------------------------------------
// Spike interchange document: the stage-2 output tensor as signed bit planes.
// JSON form: {"spike_trains": [pos, neg], "metadata": {b, M, V, N, S, scale}}
// where pos/neg are [plane][v][n][s] nested arrays of 0/1. The packed form is
// a 64-byte header plus bit-packed planes (see docs/formats.md).
// ---------------------------------------------------------------------------
struct SpikeDocument {
    SignedPlanes planes;
    Dims3 dims;
    int b = 8;
    SystolicConfig config;  // last layer's parallelism, carried as metadata
    double scale = 1.0;
};

SpikeDocument make_spike_document(const QuantizedTensor& q, const SystolicConfig& config);

std::string spike_document_to_json(const SpikeDocument& doc);
SpikeDocument spike_document_from_json(const std::string& json_text);

std::vector<uint8_t> spike_document_to_packed(const SpikeDocument& doc);
SpikeDocument spike_document_from_packed(std::span<const uint8_t> bytes);

// Reconstruct the real tensor: scale * (sum 2^j pos_j - sum 2^j neg_j).
std::vector<double> spike_document_tensor(const SpikeDocument& doc);

}  // namespace mgua
