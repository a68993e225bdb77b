#include "mgua/snn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include <nlohmann/json.hpp>

#include "mgua/error.hpp"
#include "mgua/threads.hpp"

namespace mgua {

using nlohmann::json;
using nlohmann::ordered_json;

QuantizedTensor quantize(std::span<const double> x, Dims3 dims, int b) {
    if (b < 1 || b > 8) {
        throw_contract("bit-width must lie in [1, 8], got " + std::to_string(b));
    }
    if (static_cast<int64_t>(x.size()) != dims.size()) {
        throw_contract("quantize: data size does not match dims");
    }
    for (double v : x) {
        if (!std::isfinite(v)) throw_contract("quantize requires finite inputs");
    }

    QuantizedTensor q;
    q.dims = dims;
    q.b = b;
    double max_abs = 0.0;
    for (double v : x) max_abs = std::max(max_abs, std::fabs(v));
    const double levels = static_cast<double>((1 << b) - 1);
    q.scale = max_abs > 0.0 ? max_abs / levels : 1.0;

    q.ints.resize(x.size());
    q.signs.resize(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        const double mag = std::fabs(x[i]) / q.scale;
        q.ints[i] = static_cast<uint8_t>(std::rint(mag));  // RNE; mag <= 2^b - 1
        q.signs[i] = x[i] < 0.0 ? -1 : 1;
    }
    return q;
}

std::vector<double> dequantize(const QuantizedTensor& q) {
    std::vector<double> out(q.ints.size());
    for (size_t i = 0; i < q.ints.size(); ++i) {
        out[i] = q.scale * static_cast<double>(q.ints[i]) * static_cast<double>(q.signs[i]);
    }
    return out;
}

namespace {

std::vector<SpikeTensor> planes_of(std::span<const uint8_t> ints, Dims3 dims, int b) {
    std::vector<SpikeTensor> planes(static_cast<size_t>(b));
    for (int j = 0; j < b; ++j) {
        planes[static_cast<size_t>(j)].dims = dims;
        planes[static_cast<size_t>(j)].bits.resize(ints.size());
    }
    for (size_t i = 0; i < ints.size(); ++i) {
        for (int j = 0; j < b; ++j) {
            planes[static_cast<size_t>(j)].bits[i] = (ints[i] >> j) & 1u;
        }
    }
    return planes;
}

}  // namespace

std::vector<SpikeTensor> decompose_multibit(const QuantizedTensor& q) {
    return planes_of(q.ints, q.dims, q.b);
}

SignedPlanes decompose_signed(const QuantizedTensor& q) {
    std::vector<uint8_t> pos(q.ints.size()), neg(q.ints.size());
    for (size_t i = 0; i < q.ints.size(); ++i) {
        pos[i] = q.signs[i] >= 0 ? q.ints[i] : 0;
        neg[i] = q.signs[i] < 0 ? q.ints[i] : 0;
    }
    return SignedPlanes{planes_of(pos, q.dims, q.b), planes_of(neg, q.dims, q.b)};
}

SystolicTrace& SystolicTrace::operator+=(const SystolicTrace& other) {
    cycles += other.cycles;
    active_pe_cycles += other.active_pe_cycles;
    macs += other.macs;
    return *this;
}

void SystolicTrace::finalize(const SystolicConfig& config) {
    const double total = static_cast<double>(config.product()) * static_cast<double>(cycles);
    utilization = total > 0.0 ? static_cast<double>(active_pe_cycles) / total : 0.0;
}

SystolicMatmulResult systolic_matmul(const SpikeTensor& spikes, std::span<const int32_t> weights,
                                     int64_t m_total, const SystolicConfig& config) {
    const Dims3 d = spikes.dims;
    if (static_cast<int64_t>(weights.size()) != m_total * d.v) {
        throw_contract("systolic_matmul: weight matrix must be " + std::to_string(m_total) + "x" +
                       std::to_string(d.v));
    }
    if (!valid_systolic_config(config)) {
        throw_contract("invalid systolic config " + systolic_config_to_string(config));
    }

    SystolicMatmulResult out;
    out.dims = Dims3{m_total, d.n, d.s};
    out.partials.assign(static_cast<size_t>(m_total * d.n * d.s), 0);

    // Values: plain integer contraction over v; the tiling never changes them.
    for (int64_t m = 0; m < m_total; ++m) {
        const int32_t* wrow = weights.data() + m * d.v;
        for (int64_t v = 0; v < d.v; ++v) {
            const int32_t w = wrow[v];
            if (w == 0) continue;
            const uint8_t* src = spikes.bits.data() + static_cast<size_t>(v * d.n * d.s);
            int32_t* dst = out.partials.data() + static_cast<size_t>(m * d.n * d.s);
            for (int64_t i = 0; i < d.n * d.s; ++i) {
                if (src[i]) dst[i] += w;
            }
        }
    }

    // Trace: one cycle per tile step; edge tiles are partially occupied.
    const int64_t extents[4] = {m_total, d.v, d.n, d.s};
    const int tiles[4] = {config.m, config.v, config.n, config.s};
    int64_t steps[4];
    for (int i = 0; i < 4; ++i) steps[i] = (extents[i] + tiles[i] - 1) / tiles[i];
    SystolicTrace& trace = out.trace;
    for (int64_t tm = 0; tm < steps[0]; ++tm) {
        const int64_t em = std::min<int64_t>(tiles[0], extents[0] - tm * tiles[0]);
        for (int64_t tn = 0; tn < steps[2]; ++tn) {
            const int64_t en = std::min<int64_t>(tiles[2], extents[2] - tn * tiles[2]);
            for (int64_t ts = 0; ts < steps[3]; ++ts) {
                const int64_t es = std::min<int64_t>(tiles[3], extents[3] - ts * tiles[3]);
                for (int64_t tv = 0; tv < steps[1]; ++tv) {
                    const int64_t ev = std::min<int64_t>(tiles[1], extents[1] - tv * tiles[1]);
                    trace.cycles += 1;
                    trace.active_pe_cycles += static_cast<uint64_t>(em * ev * en * es);
                }
            }
        }
    }
    trace.macs = trace.active_pe_cycles;
    trace.finalize(config);
    return out;
}

ReconstructResult shift_add_reconstruct(const std::vector<std::vector<int32_t>>& plane_partials,
                                        size_t count) {
    ReconstructResult out;
    out.values.assign(count, 0);
    for (size_t j = 0; j < plane_partials.size(); ++j) {
        const auto& plane = plane_partials[j];
        if (plane.size() != count) {
            throw_contract("shift_add_reconstruct: plane " + std::to_string(j) +
                           " has wrong size");
        }
        const int64_t weight = int64_t{1} << j;
        for (size_t i = 0; i < count; ++i) {
            out.values[i] += weight * static_cast<int64_t>(plane[i]);
        }
    }
    constexpr int64_t kMax = std::numeric_limits<int32_t>::max();
    constexpr int64_t kMin = std::numeric_limits<int32_t>::min();
    for (auto& v : out.values) {
        if (v > kMax) {
            v = kMax;
            out.saturated = true;
        } else if (v < kMin) {
            v = kMin;
            out.saturated = true;
        }
    }
    return out;
}

std::vector<int32_t> seeded_weights(int64_t rows, int64_t cols, int weight_bits, uint64_t seed) {
    if (weight_bits < 1 || weight_bits > 8) {
        throw_contract("weight_bits must lie in [1, 8]");
    }
    Rng rng(seed);
    std::vector<int32_t> w(static_cast<size_t>(rows * cols));
    if (weight_bits == 1) {
        for (auto& value : w) value = static_cast<int32_t>(rng.uniform_u64(2));
    } else {
        const int64_t hi = (int64_t{1} << (weight_bits - 1)) - 1;
        for (auto& value : w) value = static_cast<int32_t>(rng.uniform_int(-hi, hi));
    }
    return w;
}

LayerRun run_layer(std::span<const double> x, Dims3 dims, std::span<const int32_t> weights,
                   const LayerSpec& spec, AdaptiveMemory& memory,
                   const SnnStageOptions& options) {
    LayerRun run;
    run.name = spec.name;

    LayerFeatures features;
    features.tensor_size = dims.size();
    for (double v : x) features.value_range = std::max(features.value_range, std::fabs(v));

    run.bitwidth = options.fixed_bitwidth ? *options.fixed_bitwidth
                                          : memory.predict_bitwidth(features);
    run.config = options.fixed_parallelism ? *options.fixed_parallelism
                                           : memory.parallelism_policy(spec.layer_type);

    const int64_t m_total = static_cast<int64_t>(weights.size()) / dims.v;
    run.out_dims = Dims3{m_total, dims.n, dims.s};

    const QuantizedTensor q = quantize(x, dims, run.bitwidth);
    const SignedPlanes planes = decompose_signed(q);

    // Per-plane systolic matmuls; planes are independent, traces merge by
    // summation in plane order.
    const size_t plane_count = planes.pos.size() + planes.neg.size();
    std::vector<SystolicMatmulResult> results(plane_count);
    parallel_for(plane_count, [&](size_t p) {
        const SpikeTensor& plane = p < planes.pos.size()
                                       ? planes.pos[p]
                                       : planes.neg[p - planes.pos.size()];
        results[p] = systolic_matmul(plane, weights, m_total, run.config);
    });

    std::vector<std::vector<int32_t>> pos_partials, neg_partials;
    for (size_t p = 0; p < plane_count; ++p) {
        run.trace += results[p].trace;
        if (p < planes.pos.size()) {
            pos_partials.push_back(std::move(results[p].partials));
        } else {
            neg_partials.push_back(std::move(results[p].partials));
        }
    }
    run.trace.finalize(run.config);

    const size_t out_count = static_cast<size_t>(run.out_dims.size());
    const ReconstructResult pos = shift_add_reconstruct(pos_partials, out_count);
    const ReconstructResult neg = shift_add_reconstruct(neg_partials, out_count);
    run.saturated = pos.saturated || neg.saturated;
    run.recon_adds = static_cast<uint64_t>(plane_count) * out_count;

    // Integer result of the bit-serial path, then back to reals by the input
    // scale (weights are integers, so no weight scale applies).
    std::vector<int64_t> ints(out_count);
    run.output.resize(out_count);
    for (size_t i = 0; i < out_count; ++i) {
        ints[i] = pos.values[i] - neg.values[i];
        run.output[i] = q.scale * static_cast<double>(ints[i]);
    }

    // fp64 dense oracle for the reconstruction error.
    double diff2 = 0.0, ref2 = 0.0;
    {
        std::vector<double> oracle(out_count, 0.0);
        for (int64_t m = 0; m < m_total; ++m) {
            for (int64_t v = 0; v < dims.v; ++v) {
                const double w = static_cast<double>(weights[m * dims.v + v]);
                if (w == 0.0) continue;
                const double* src = x.data() + v * dims.n * dims.s;
                double* dst = oracle.data() + m * dims.n * dims.s;
                for (int64_t i = 0; i < dims.n * dims.s; ++i) dst[i] += w * src[i];
            }
        }
        for (size_t i = 0; i < out_count; ++i) {
            const double d = run.output[i] - oracle[i];
            diff2 += d * d;
            ref2 += oracle[i] * oracle[i];
        }
    }
    run.reconstruction_error = ref2 > 0.0 ? std::sqrt(diff2 / ref2) : (diff2 > 0.0 ? 1.0 : 0.0);

    // Requantize the output at the layer bit-width for the interchange
    // document; also feeds the experience buffer.
    run.out_quant = quantize(run.output, run.out_dims, run.bitwidth);

    memory.record_bitwidth_outcome(features, run.bitwidth, run.reconstruction_error,
                                   static_cast<double>(run.trace.macs));
    memory.record_utilization(spec.layer_type,
                              {m_total, dims.v, dims.n, dims.s}, run.config,
                              run.trace.utilization, static_cast<double>(run.trace.cycles));
    return run;
}

// ---------------------------------------------------------------------------
// Spike interchange document.
// ---------------------------------------------------------------------------
SpikeDocument make_spike_document(const QuantizedTensor& q, const SystolicConfig& config) {
    SpikeDocument doc;
    doc.planes = decompose_signed(q);
    doc.dims = q.dims;
    doc.b = q.b;
    doc.config = config;
    doc.scale = q.scale;
    return doc;
}

namespace {

ordered_json planes_to_json(const std::vector<SpikeTensor>& planes, Dims3 dims) {
    ordered_json group = json::array();
    for (const SpikeTensor& plane : planes) {
        ordered_json jp = json::array();
        for (int64_t v = 0; v < dims.v; ++v) {
            ordered_json jv = json::array();
            for (int64_t n = 0; n < dims.n; ++n) {
                ordered_json jn = json::array();
                for (int64_t s = 0; s < dims.s; ++s) {
                    jn.push_back(static_cast<int>(plane.bits[static_cast<size_t>(
                        (v * dims.n + n) * dims.s + s)]));
                }
                jv.push_back(std::move(jn));
            }
            jp.push_back(std::move(jv));
        }
        group.push_back(std::move(jp));
    }
    return group;
}

std::vector<SpikeTensor> planes_from_json(const json& group, Dims3& dims, bool& dims_known) {
    std::vector<SpikeTensor> planes;
    for (const json& jp : group) {
        SpikeTensor plane;
        Dims3 d{static_cast<int64_t>(jp.size()), 0, 0};
        for (const json& jv : jp) {
            d.n = static_cast<int64_t>(jv.size());
            for (const json& jn : jv) {
                d.s = static_cast<int64_t>(jn.size());
                for (const json& bit : jn) {
                    const int value = bit.get<int>();
                    if (value != 0 && value != 1) throw_parse("spike train entry not 0/1");
                    plane.bits.push_back(static_cast<uint8_t>(value));
                }
            }
        }
        plane.dims = d;
        if (!dims_known) {
            dims = d;
            dims_known = true;
        } else if (!(d == dims)) {
            throw_parse("inconsistent spike plane shapes");
        }
        planes.push_back(std::move(plane));
    }
    return planes;
}

}  // namespace

std::string spike_document_to_json(const SpikeDocument& doc) {
    ordered_json j;
    j["spike_trains"] = {planes_to_json(doc.planes.pos, doc.dims),
                         planes_to_json(doc.planes.neg, doc.dims)};
    j["metadata"] = {{"b", doc.b},         {"M", doc.config.m}, {"V", doc.config.v},
                     {"N", doc.config.n},  {"S", doc.config.s}, {"scale", doc.scale}};
    return j.dump() + "\n";
}

SpikeDocument spike_document_from_json(const std::string& json_text) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) throw_parse("malformed spike JSON at $");
    if (!j.contains("spike_trains")) throw_parse("missing required key at $.spike_trains");
    if (!j.contains("metadata")) throw_parse("missing required key at $.metadata");
    const json& trains = j["spike_trains"];
    if (!trains.is_array() || trains.size() != 2) {
        throw_parse("expected [pos, neg] groups at $.spike_trains");
    }

    SpikeDocument doc;
    bool dims_known = false;
    doc.planes.pos = planes_from_json(trains[0], doc.dims, dims_known);
    doc.planes.neg = planes_from_json(trains[1], doc.dims, dims_known);

    const json& meta = j["metadata"];
    doc.b = meta.at("b").get<int>();
    doc.config.m = meta.at("M").get<int>();
    doc.config.v = meta.at("V").get<int>();
    doc.config.n = meta.at("N").get<int>();
    doc.config.s = meta.at("S").get<int>();
    doc.scale = meta.at("scale").get<double>();
    if (static_cast<int>(doc.planes.pos.size()) != doc.b ||
        static_cast<int>(doc.planes.neg.size()) != doc.b) {
        throw_parse("spike plane count does not match metadata b");
    }
    return doc;
}

namespace {

constexpr char kSpikeMagic[4] = {'M', 'G', 'S', 'P'};

void append_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void append_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint32_t read_u32(std::span<const uint8_t> b, size_t at) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[at + i]) << (8 * i);
    return v;
}

uint64_t read_u64(std::span<const uint8_t> b, size_t at) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[at + i]) << (8 * i);
    return v;
}

void pack_plane(std::vector<uint8_t>& out, const SpikeTensor& plane) {
    const size_t n = plane.bits.size();
    const size_t bytes = (n + 7) / 8;
    size_t start = out.size();
    out.resize(start + bytes, 0);
    for (size_t i = 0; i < n; ++i) {
        if (plane.bits[i]) out[start + i / 8] |= static_cast<uint8_t>(1u << (i % 8));
    }
}

SpikeTensor unpack_plane(std::span<const uint8_t> bytes, size_t& at, Dims3 dims) {
    SpikeTensor plane;
    plane.dims = dims;
    const size_t n = static_cast<size_t>(dims.size());
    const size_t nbytes = (n + 7) / 8;
    if (at + nbytes > bytes.size()) throw_parse("truncated spike plane data");
    plane.bits.resize(n);
    for (size_t i = 0; i < n; ++i) {
        plane.bits[i] = (bytes[at + i / 8] >> (i % 8)) & 1u;
    }
    at += nbytes;
    return plane;
}

}  // namespace

std::vector<uint8_t> spike_document_to_packed(const SpikeDocument& doc) {
    std::vector<uint8_t> out;
    out.reserve(64);
    out.insert(out.end(), kSpikeMagic, kSpikeMagic + 4);
    append_u32(out, 1);  // version
    append_u32(out, static_cast<uint32_t>(doc.b));
    append_u32(out, 2);  // sign groups
    append_u64(out, static_cast<uint64_t>(doc.dims.v));
    append_u64(out, static_cast<uint64_t>(doc.dims.n));
    append_u64(out, static_cast<uint64_t>(doc.dims.s));
    append_u32(out, static_cast<uint32_t>(doc.config.m));
    append_u32(out, static_cast<uint32_t>(doc.config.v));
    append_u32(out, static_cast<uint32_t>(doc.config.n));
    append_u32(out, static_cast<uint32_t>(doc.config.s));
    uint64_t scale_bits;
    std::memcpy(&scale_bits, &doc.scale, 8);
    append_u64(out, scale_bits);
    // header is exactly 64 bytes
    for (const SpikeTensor& p : doc.planes.pos) pack_plane(out, p);
    for (const SpikeTensor& p : doc.planes.neg) pack_plane(out, p);
    return out;
}

SpikeDocument spike_document_from_packed(std::span<const uint8_t> bytes) {
    if (bytes.size() < 64) throw_parse("spike file shorter than 64-byte header");
    if (std::memcmp(bytes.data(), kSpikeMagic, 4) != 0) throw_parse("bad spike file magic");
    if (read_u32(bytes, 4) != 1) throw_parse("unsupported spike file version");

    SpikeDocument doc;
    doc.b = static_cast<int>(read_u32(bytes, 8));
    const uint32_t groups = read_u32(bytes, 12);
    if (groups != 2) throw_parse("unsupported sign group count");
    doc.dims.v = static_cast<int64_t>(read_u64(bytes, 16));
    doc.dims.n = static_cast<int64_t>(read_u64(bytes, 24));
    doc.dims.s = static_cast<int64_t>(read_u64(bytes, 32));
    doc.config.m = static_cast<int>(read_u32(bytes, 40));
    doc.config.v = static_cast<int>(read_u32(bytes, 44));
    doc.config.n = static_cast<int>(read_u32(bytes, 48));
    doc.config.s = static_cast<int>(read_u32(bytes, 52));
    const uint64_t scale_bits = read_u64(bytes, 56);
    std::memcpy(&doc.scale, &scale_bits, 8);

    size_t at = 64;
    for (int j = 0; j < doc.b; ++j) doc.planes.pos.push_back(unpack_plane(bytes, at, doc.dims));
    for (int j = 0; j < doc.b; ++j) doc.planes.neg.push_back(unpack_plane(bytes, at, doc.dims));
    if (at != bytes.size()) throw_parse("trailing bytes after spike planes");
    return doc;
}

std::vector<double> spike_document_tensor(const SpikeDocument& doc) {
    const size_t n = static_cast<size_t>(doc.dims.size());
    std::vector<double> out(n, 0.0);
    for (size_t j = 0; j < doc.planes.pos.size(); ++j) {
        const double w = std::ldexp(1.0, static_cast<int>(j));
        for (size_t i = 0; i < n; ++i) {
            out[i] += w * (static_cast<double>(doc.planes.pos[j].bits[i]) -
                           static_cast<double>(doc.planes.neg[j].bits[i]));
        }
    }
    for (auto& v : out) v *= doc.scale;
    return out;
}

}  // namespace mgua
