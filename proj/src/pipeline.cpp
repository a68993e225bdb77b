#include "mgua/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <set>

#include <nlohmann/json.hpp>

#include "mgua/error.hpp"
#include "mgua/io.hpp"
#include "mgua/threads.hpp"

namespace mgua {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Cost model.
// ---------------------------------------------------------------------------
double CostTable::rate(PrecisionLevel level) const {
    switch (level) {
        case PrecisionLevel::FP64: return fp64;
        case PrecisionLevel::FP32: return fp32;
        case PrecisionLevel::BF16: return bf16;
        case PrecisionLevel::FP16: return fp16;
    }
    return fp64;
}

CostCounters& CostCounters::operator+=(const CostCounters& other) {
    for (size_t i = 0; i < macs_by_level.size(); ++i) {
        macs_by_level[i] += other.macs_by_level[i];
        geometry_by_level[i] += other.geometry_by_level[i];
    }
    spike_macs += other.spike_macs;
    int8_ops += other.int8_ops;
    sparse_macs += other.sparse_macs;
    return *this;
}

double cost_model(const CostCounters& counters, const CostTable& table) {
    double cost = 0.0;
    for (int i = 0; i < kPrecisionLevelCount; ++i) {
        const PrecisionLevel level = static_cast<PrecisionLevel>(i);
        cost += static_cast<double>(counters.macs_by_level[static_cast<size_t>(i)]) *
                table.rate(level);
        cost += static_cast<double>(counters.geometry_by_level[static_cast<size_t>(i)]) *
                table.rate(level);
    }
    cost += static_cast<double>(counters.spike_macs) * table.spike;
    cost += static_cast<double>(counters.int8_ops) * table.int8;
    cost += static_cast<double>(counters.sparse_macs) * table.fp32;
    return cost;
}

// ---------------------------------------------------------------------------
// RunConfig serialization.
// ---------------------------------------------------------------------------
namespace {

ordered_json cost_table_to_json(const CostTable& t) {
    return {{"fp64", t.fp64}, {"fp32", t.fp32}, {"bf16", t.bf16},
            {"fp16", t.fp16}, {"int8", t.int8}, {"spike", t.spike},
            {"note", "modeled, not measured"}};
}

CostTable cost_table_from_json(const json& j) {
    CostTable t;
    t.fp64 = j.value("fp64", t.fp64);
    t.fp32 = j.value("fp32", t.fp32);
    t.bf16 = j.value("bf16", t.bf16);
    t.fp16 = j.value("fp16", t.fp16);
    t.int8 = j.value("int8", t.int8);
    t.spike = j.value("spike", t.spike);
    return t;
}

}  // namespace

RunConfig run_config_from_json(const std::string& json_text) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) throw_parse("malformed run config JSON at $");
    if (!j.is_object()) throw_parse("expected object at $");

    RunConfig c;
    c.seed = j.value("seed", 0ull);
    c.batch_size = j.value("batch_size", 32);
    if (c.batch_size < 1) throw_validation("batch_size must be >= 1");
    c.mesh_path = j.value("mesh", std::string{});
    c.output_dir = j.value("output_dir", std::string{"out"});

    if (j.contains("fixed_precision") && !j["fixed_precision"].is_null()) {
        const auto parsed = config_from_string(j["fixed_precision"].get<std::string>());
        if (!parsed) throw_validation("bad fixed_precision '" +
                                      j["fixed_precision"].get<std::string>() + "'");
        c.fixed_precision = *parsed;
    }
    if (j.contains("fixed_parallelism") && !j["fixed_parallelism"].is_null()) {
        const auto parsed =
            systolic_config_from_string(j["fixed_parallelism"].get<std::string>());
        if (!parsed) throw_validation("bad fixed_parallelism '" +
                                      j["fixed_parallelism"].get<std::string>() + "'");
        c.fixed_parallelism = *parsed;
    }
    c.structured_only = j.value("structured_only", false);
    const std::string compression = j.value("compression", std::string{"index"});
    if (compression == "index") {
        c.compression = CompressedTensor::Encoding::Index;
    } else if (compression == "bitmap") {
        c.compression = CompressedTensor::Encoding::Bitmap;
    } else {
        throw_validation("compression must be 'index' or 'bitmap'");
    }
    c.fused = j.value("fused", false);
    c.spike_format = j.value("spike_format", std::string{"json"});
    if (c.spike_format != "json" && c.spike_format != "packed") {
        throw_validation("spike_format must be 'json' or 'packed'");
    }
    c.stage1_dtype = j.value("stage1_dtype", std::string{"f64"});
    if (c.stage1_dtype != "f64" && c.stage1_dtype != "f32") {
        throw_validation("stage1_dtype must be 'f64' or 'f32'");
    }

    for (const json& jl : j.value("layers", json::array())) {
        LayerSpec spec;
        spec.name = jl.value("name", "layer" + std::to_string(c.layers.size()));
        spec.layer_type = jl.value("layer_type", std::string{"fc"});
        spec.out_channels = jl.value("out_channels", 0);
        spec.weight_bits = jl.value("weight_bits", 8);
        spec.weights_file = jl.value("weights_file", std::string{});
        if (spec.weight_bits < 1 || spec.weight_bits > 8) {
            throw_validation("layer '" + spec.name + "': weight_bits must lie in [1, 8]");
        }
        c.layers.push_back(std::move(spec));
    }
    c.snn_time_steps = j.value("snn_time_steps", 1);
    if (c.snn_time_steps < 1) throw_validation("snn_time_steps must be >= 1");
    c.sparse_b_cols = j.value("sparse_b_cols", 8);
    if (c.sparse_b_cols < 1) throw_validation("sparse_b_cols must be >= 1");
    if (j.contains("sparse_target_density") && !j["sparse_target_density"].is_null()) {
        c.sparse_target_density = j["sparse_target_density"].get<double>();
    }
    c.epsilon = j.value("epsilon", 0.1);
    if (j.contains("cost_table")) c.cost_table = cost_table_from_json(j["cost_table"]);
    return c;
}

std::string run_config_to_json(const RunConfig& c) {
    ordered_json j;
    j["seed"] = c.seed;
    j["batch_size"] = c.batch_size;
    j["mesh"] = c.mesh_path;
    j["output_dir"] = c.output_dir;
    j["fixed_precision"] =
        c.fixed_precision ? json(config_to_string(*c.fixed_precision)) : json(nullptr);
    j["fixed_parallelism"] = c.fixed_parallelism
                                 ? json(systolic_config_to_string(*c.fixed_parallelism))
                                 : json(nullptr);
    j["structured_only"] = c.structured_only;
    j["compression"] =
        c.compression == CompressedTensor::Encoding::Index ? "index" : "bitmap";
    j["fused"] = c.fused;
    j["spike_format"] = c.spike_format;
    j["stage1_dtype"] = c.stage1_dtype;
    ordered_json layers = json::array();
    for (const LayerSpec& l : c.layers) {
        layers.push_back({{"name", l.name},
                          {"layer_type", l.layer_type},
                          {"out_channels", l.out_channels},
                          {"weight_bits", l.weight_bits},
                          {"weights_file", l.weights_file}});
    }
    j["layers"] = std::move(layers);
    j["snn_time_steps"] = c.snn_time_steps;
    j["sparse_b_cols"] = c.sparse_b_cols;
    j["sparse_target_density"] =
        c.sparse_target_density ? json(*c.sparse_target_density) : json(nullptr);
    j["epsilon"] = c.epsilon;
    j["cost_table"] = cost_table_to_json(c.cost_table);
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Stage context and state snapshots.
// ---------------------------------------------------------------------------
namespace {

AdaptiveMemoryOptions memory_options_for(const RunConfig& config) {
    AdaptiveMemoryOptions options;
    options.epsilon = config.epsilon;
    std::set<std::string> vocab(options.layer_vocabulary.begin(),
                                options.layer_vocabulary.end());
    for (const LayerSpec& l : config.layers) vocab.insert(l.layer_type);
    options.layer_vocabulary.assign(vocab.begin(), vocab.end());
    return options;
}

}  // namespace

StageContext::StageContext(const RunConfig& cfg)
    : config(cfg), memory(cfg.seed, memory_options_for(cfg)), curriculum(cfg.seed) {}

std::string dump_state(const StageContext& ctx) {
    ordered_json j;
    j["memory"] = json::parse(ctx.memory.dump_snapshot());
    j["curriculum"] = json::parse(curriculum_to_json(ctx.curriculum));
    return j.dump(2) + "\n";
}

void load_state(StageContext& ctx, const std::string& json_text) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) throw_parse("malformed state snapshot JSON");
    ctx.memory.load_snapshot(j.at("memory").dump());
    curriculum_from_json(j.at("curriculum").dump(), ctx.curriculum);
}

// ---------------------------------------------------------------------------
// Stage 1: adaptive-precision FEM assembly.
// ---------------------------------------------------------------------------
Stage1Summary run_fem_stage(StageContext& ctx) {
    const RunConfig& config = ctx.config;
    if (config.mesh_path.empty()) throw_validation("run config misses 'mesh' path");
    const Mesh mesh = parse_mesh(read_file_text(config.mesh_path));

    const ElementType type = mesh.elements.front().type;
    for (size_t i = 0; i < mesh.elements.size(); ++i) {
        if (mesh.elements[i].type != type) {
            throw_validation("stage 1 requires a uniform element type; element " +
                             std::to_string(i) + " differs");
        }
    }

    const int64_t n_e = static_cast<int64_t>(mesh.element_count());
    const int m = nodes_per_element(type);

    Stage1Summary summary;
    summary.elements = n_e;
    summary.matrix_dim = m;

    std::vector<double> tensor(static_cast<size_t>(n_e) * m * m, 0.0);
    struct PerElement {
        double kappa = 1.0;
        PrecisionConfig config = kConfigAllFp64;
        bool flagged = false;
        double l2_error = 0.0;
        uint64_t macs = 0;
        uint64_t geometry_ops = 0;
    };
    std::vector<PerElement> per_element(static_cast<size_t>(n_e));

    const int64_t batch_size = config.batch_size;
    std::set<std::string> configs_used;

    for (int64_t batch_start = 0; batch_start < n_e; batch_start += batch_size) {
        const int64_t batch_end = std::min(n_e, batch_start + batch_size);
        ++summary.batches;

        // Policy resolution is sequential (single-writer store mutations);
        // the assembly work below runs element-parallel on the decisions.
        for (int64_t i = batch_start; i < batch_end; ++i) {
            PerElement& pe = per_element[static_cast<size_t>(i)];
            pe.kappa = condition_number(element_geometry(mesh, static_cast<size_t>(i)));
            pe.flagged = AdaptiveMemory::high_kappa_flagged(pe.kappa);
            pe.config = config.fixed_precision
                            ? *config.fixed_precision
                            : ctx.memory.memory_lookup(pe.kappa, type);
        }

        parallel_for(static_cast<size_t>(batch_end - batch_start), [&](size_t k) {
            const int64_t i = batch_start + static_cast<int64_t>(k);
            PerElement& pe = per_element[static_cast<size_t>(i)];
            const ElementGeometry geom = element_geometry(mesh, static_cast<size_t>(i));
            AssemblyOptions options;
            options.config = pe.config;
            options.fused = config.fused;
            const ElementMatrix em = assemble_element(geom, options, static_cast<int>(i));
            const ElementMatrix ref = reference_assembly(geom, static_cast<int>(i));
            pe.l2_error = element_l2_error(em, ref);
            pe.macs = em.macs;
            pe.geometry_ops = em.geometry_ops;
            std::copy(em.a.begin(), em.a.end(),
                      tensor.begin() + static_cast<int64_t>(i) * m * m);
        });

        for (int64_t i = batch_start; i < batch_end; ++i) {
            const PerElement& pe = per_element[static_cast<size_t>(i)];
            const double cost =
                static_cast<double>(pe.macs) * config.cost_table.rate(pe.config.u_q) +
                static_cast<double>(pe.geometry_ops) * config.cost_table.rate(pe.config.u_m);
            if (!config.fixed_precision && !pe.flagged) {
                const PolicyKey key{PolicyKind::Precision, AdaptiveMemory::kappa_bucket(pe.kappa),
                                    element_type_token(type)};
                ctx.memory.record_outcome(key, pe.l2_error, cost);
            }
        }
        if (!config.fixed_precision) {
            for (const auto& change : ctx.memory.adapt_policy()) {
                if (!change.saturated) ++summary.adaptations;
            }
        }
    }

    double error_sum = 0.0;
    for (int64_t i = 0; i < n_e; ++i) {
        const PerElement& pe = per_element[static_cast<size_t>(i)];
        error_sum += pe.l2_error;
        summary.max_l2_error = std::max(summary.max_l2_error, pe.l2_error);
        if (pe.flagged) ++summary.flagged_high_kappa;
        summary.counters.macs_by_level[static_cast<size_t>(pe.config.u_q)] += pe.macs;
        summary.counters.geometry_by_level[static_cast<size_t>(pe.config.u_m)] +=
            pe.geometry_ops;
        configs_used.insert(config_to_string(pe.config));
    }
    summary.mean_l2_error = n_e > 0 ? error_sum / static_cast<double>(n_e) : 0.0;
    summary.cost_units = cost_model(summary.counters, config.cost_table);
    summary.configs_used.assign(configs_used.begin(), configs_used.end());

    // Persist the stage tensor + sidecar.
    std::filesystem::create_directories(config.output_dir);
    write_tensor_binary(config.output_dir + "/stage1.bin", tensor, config.stage1_dtype);
    ordered_json sidecar;
    sidecar["shape"] = {n_e, m, m};
    sidecar["dtype"] = config.stage1_dtype;
    sidecar["element_type"] = element_type_token(type);
    ordered_json per = json::array();
    for (int64_t i = 0; i < n_e; ++i) {
        const PerElement& pe = per_element[static_cast<size_t>(i)];
        per.push_back({{"kappa", pe.kappa},
                       {"config", config_to_string(pe.config)},
                       {"l2_error", pe.l2_error},
                       {"macs", pe.macs},
                       {"geometry_ops", pe.geometry_ops},
                       {"flagged", pe.flagged}});
    }
    sidecar["per_element"] = std::move(per);
    write_file_text(config.output_dir + "/stage1.json", sidecar.dump(2) + "\n");
    return summary;
}

// ---------------------------------------------------------------------------
// Stage 2: bit-serial spatiotemporal spike matmul.
// ---------------------------------------------------------------------------
namespace {

std::vector<int32_t> load_weights_file(const std::string& path, int64_t rows, int64_t cols) {
    json j = json::parse(read_file_text(path), nullptr, false);
    if (j.is_discarded()) throw_parse("malformed weights JSON in '" + path + "'");
    if (j.at("rows").get<int64_t>() != rows || j.at("cols").get<int64_t>() != cols) {
        throw_validation("weights file '" + path + "' shape mismatch: expected " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
    std::vector<int32_t> w;
    for (const json& v : j.at("data")) {
        const int64_t value = v.get<int64_t>();
        if (value < -255 || value > 255) {
            throw_validation("weight magnitude exceeds 8-bit range in '" + path + "'");
        }
        w.push_back(static_cast<int32_t>(value));
    }
    if (static_cast<int64_t>(w.size()) != rows * cols) {
        throw_validation("weights file '" + path + "' data length mismatch");
    }
    return w;
}

}  // namespace

Stage2Summary run_snn_stage(StageContext& ctx) {
    const RunConfig& config = ctx.config;
    const json sidecar =
        json::parse(read_file_text(config.output_dir + "/stage1.json"));
    const auto shape = sidecar.at("shape");
    const int64_t n_e = shape[0].get<int64_t>();
    const int64_t m = shape[1].get<int64_t>();
    const std::string dtype = sidecar.at("dtype").get<std::string>();
    std::vector<double> x = read_tensor_binary(config.output_dir + "/stage1.bin", dtype);
    if (static_cast<int64_t>(x.size()) != n_e * m * m) {
        throw_validation("stage1.bin size does not match its sidecar shape");
    }

    const int64_t spatial = m * m;
    if (spatial % config.snn_time_steps != 0) {
        throw_validation("snn_time_steps must divide the per-channel extent " +
                         std::to_string(spatial));
    }
    Dims3 dims{n_e, spatial / config.snn_time_steps, config.snn_time_steps};

    std::vector<LayerSpec> layers = config.layers;
    if (layers.empty()) {
        LayerSpec fc;
        fc.name = "fc0";
        fc.layer_type = "fc";
        layers.push_back(fc);
    }

    SnnStageOptions options;
    options.fixed_parallelism = config.fixed_parallelism;

    Stage2Summary summary;
    LayerRun last;
    for (size_t l = 0; l < layers.size(); ++l) {
        const LayerSpec& spec = layers[l];
        const int64_t out_channels = spec.out_channels > 0 ? spec.out_channels : dims.v;
        std::vector<int32_t> weights;
        if (!spec.weights_file.empty()) {
            weights = load_weights_file(spec.weights_file, out_channels, dims.v);
        } else {
            weights = seeded_weights(out_channels, dims.v, spec.weight_bits,
                                     mix_seed(config.seed, 0x77650000ull + l));
        }

        LayerRun run = run_layer(x, dims, weights, spec, ctx.memory, options);

        Stage2LayerSummary ls;
        ls.name = run.name;
        ls.bitwidth = run.bitwidth;
        ls.config = run.config;
        ls.cycles = run.trace.cycles;
        ls.utilization = run.trace.utilization;
        ls.spike_macs = run.trace.macs;
        ls.reconstruction_error = run.reconstruction_error;
        ls.saturated = run.saturated;
        summary.layers.push_back(std::move(ls));
        if (run.saturated) ++summary.saturation_events;

        summary.counters.spike_macs += run.trace.macs;
        summary.counters.int8_ops += run.recon_adds +
                                     static_cast<uint64_t>(dims.size()) +
                                     static_cast<uint64_t>(run.out_dims.size());

        x = run.output;
        dims = run.out_dims;
        last = std::move(run);
    }
    summary.cost_units = cost_model(summary.counters, config.cost_table);

    const SpikeDocument doc = make_spike_document(last.out_quant, last.config);
    if (config.spike_format == "json") {
        write_file_text(config.output_dir + "/spikes.json", spike_document_to_json(doc));
    } else {
        write_file_bytes(config.output_dir + "/spikes.bin", spike_document_to_packed(doc));
    }
    return summary;
}

// ---------------------------------------------------------------------------
// Stage 3: adaptive sparse tensor acceleration.
// ---------------------------------------------------------------------------
Stage3Summary run_sparse_stage(StageContext& ctx) {
    const RunConfig& config = ctx.config;
    SpikeDocument doc;
    if (config.spike_format == "json") {
        doc = spike_document_from_json(read_file_text(config.output_dir + "/spikes.json"));
    } else {
        doc = spike_document_from_packed(read_file_bytes(config.output_dir + "/spikes.bin"));
    }
    const std::vector<double> x = spike_document_tensor(doc);
    const int64_t rows = doc.dims.v;
    const int64_t cols = doc.dims.n * doc.dims.s;

    const SparsityCharacteristics ch = analyze_sparsity(x, rows, cols);

    Stage3Summary summary;
    summary.density = ch.density;
    summary.low_density_flag = ch.low_density;

    PatternKind kind;
    if (config.structured_only) {
        // Fixed structured support: best structured pattern by predicted
        // pruning error, no curriculum and no pattern store.
        kind = PatternKind::P2_4;
        double best = ch.predicted_error[static_cast<size_t>(kind)];
        for (PatternKind p : {PatternKind::P1_4, PatternKind::P1_3}) {
            const double err = ch.predicted_error[static_cast<size_t>(p)];
            if (err < best) {
                kind = p;
                best = err;
            }
        }
    } else {
        kind = curriculum_select(ch, ctx.curriculum, ctx.memory, config.epsilon);
    }

    SparsityPattern pattern;
    if (kind == PatternKind::Learned) {
        const double target = config.sparse_target_density
                                  ? *config.sparse_target_density
                                  : std::clamp(ch.density, 0.1, 1.0);
        pattern = learned_pattern(x, rows, cols, target);
    } else {
        pattern.kind = kind;
    }

    const std::vector<double> pruned = prune_to_pattern(x, rows, cols, pattern);
    double diff2 = 0.0, ref2 = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - pruned[i];
        diff2 += d * d;
        ref2 += x[i] * x[i];
    }
    const double retention = ref2 > 0.0 ? 1.0 - std::sqrt(diff2 / ref2) : 1.0;
    summary.accuracy_retention = retention;
    summary.pattern = pattern_token(kind);

    CompressedTensor compressed = compress(pruned, rows, cols, pattern);
    compressed.encoding = config.compression;
    compressed.dtype = CompressedTensor::Dtype::F32;
    const std::vector<uint8_t> bytes = compressed_to_bytes(compressed);
    write_file_bytes(config.output_dir + "/stage3.mgct", bytes);
    summary.compressed_bytes = bytes.size();

    // Sparse MAC against a seeded dense B; the dense matmul of the pruned
    // matrix is the correctness oracle.
    const int64_t b_cols = config.sparse_b_cols;
    std::vector<double> b(static_cast<size_t>(cols * b_cols));
    {
        Rng rng(mix_seed(config.seed, 0x73706233));
        for (auto& v : b) v = rng.uniform_real(-1.0, 1.0);
    }
    const SparseMacResult mac = sparse_mac(compressed, b, b_cols);
    summary.macs = mac.trace.macs;
    summary.cycles = mac.trace.cycles;
    summary.utilization = mac.trace.utilization;
    {
        double max_diff = 0.0;
        for (int64_t i = 0; i < rows; ++i) {
            for (int64_t k = 0; k < b_cols; ++k) {
                double dense = 0.0;
                for (int64_t j = 0; j < cols; ++j) {
                    dense += pruned[static_cast<size_t>(i * cols + j)] *
                             b[static_cast<size_t>(j * b_cols + k)];
                }
                max_diff = std::max(
                    max_diff,
                    std::fabs(dense - mac.result[static_cast<size_t>(i * b_cols + k)]));
            }
        }
        summary.sparse_dense_max_abs_diff = max_diff;
    }

    if (!config.structured_only) {
        curriculum_update(ctx.curriculum, kind, retention);
        ctx.memory.sparsity_store(kind, ch.density_decile, ch.variance_tercile, retention,
                                  static_cast<double>(mac.trace.macs));
    }
    summary.curriculum_stage = ctx.curriculum.stage;
    summary.counters.sparse_macs = mac.trace.macs;
    summary.cost_units = cost_model(summary.counters, config.cost_table);

    // Final output tensor: the pruned dense result plus a sidecar carrying the
    // (1, C_o, H_o*W_o folded) shape mapping.
    write_tensor_binary(config.output_dir + "/output.bin", pruned, "f64");
    ordered_json sidecar;
    sidecar["shape"] = {int64_t{1}, doc.dims.v, doc.dims.n, doc.dims.s};
    sidecar["dtype"] = "f64";
    sidecar["pattern"] = summary.pattern;
    sidecar["density"] = summary.density;
    sidecar["low_density_flag"] = summary.low_density_flag;
    sidecar["accuracy_retention"] = summary.accuracy_retention;
    write_file_text(config.output_dir + "/output.json", sidecar.dump(2) + "\n");
    return summary;
}

// ---------------------------------------------------------------------------
// Full pipeline + reports.
// ---------------------------------------------------------------------------
RunReport run_pipeline(StageContext& ctx) {
    RunReport report;
    report.seed = ctx.config.seed;
    report.cost_table = ctx.config.cost_table;
    report.config_hash = fnv1a64_hex(run_config_to_json(ctx.config));
    report.stage1 = run_fem_stage(ctx);
    report.stage2 = run_snn_stage(ctx);
    report.stage3 = run_sparse_stage(ctx);
    report.memory_hash = fnv1a64_hex(dump_state(ctx));
    report.total_cost_units =
        report.stage1.cost_units + report.stage2.cost_units + report.stage3.cost_units;
    uint64_t total_macs = 0;
    for (uint64_t v : report.stage1.counters.macs_by_level) total_macs += v;
    total_macs += report.stage2.counters.spike_macs;
    total_macs += report.stage3.counters.sparse_macs;
    report.total_macs = total_macs;
    return report;
}

namespace {

ordered_json counters_to_json(const CostCounters& c) {
    ordered_json j;
    ordered_json macs, geometry;
    for (int i = 0; i < kPrecisionLevelCount; ++i) {
        const std::string token = to_token(static_cast<PrecisionLevel>(i));
        macs[token] = c.macs_by_level[static_cast<size_t>(i)];
        geometry[token] = c.geometry_by_level[static_cast<size_t>(i)];
    }
    j["macs_by_level"] = std::move(macs);
    j["geometry_ops_by_level"] = std::move(geometry);
    j["spike_macs"] = c.spike_macs;
    j["int8_ops"] = c.int8_ops;
    j["sparse_macs"] = c.sparse_macs;
    return j;
}

}  // namespace

std::string report_to_json(const RunReport& report) {
    ordered_json j;
    j["provenance"] = {{"seed", report.seed},
                       {"config_hash", report.config_hash},
                       {"memory_hash", report.memory_hash},
                       {"tool", "mgua"}};
    j["cost_table"] = cost_table_to_json(report.cost_table);

    ordered_json s1;
    s1["elements"] = report.stage1.elements;
    s1["matrix_dim"] = report.stage1.matrix_dim;
    s1["batches"] = report.stage1.batches;
    s1["mean_l2_error"] = report.stage1.mean_l2_error;
    s1["max_l2_error"] = report.stage1.max_l2_error;
    s1["flagged_high_kappa"] = report.stage1.flagged_high_kappa;
    s1["adaptations"] = report.stage1.adaptations;
    s1["configs_used"] = report.stage1.configs_used;
    s1["counters"] = counters_to_json(report.stage1.counters);
    s1["cost_units"] = report.stage1.cost_units;
    j["stage1"] = std::move(s1);

    ordered_json s2;
    ordered_json layers = json::array();
    for (const Stage2LayerSummary& l : report.stage2.layers) {
        layers.push_back({{"name", l.name},
                          {"b", l.bitwidth},
                          {"config", systolic_config_to_string(l.config)},
                          {"cycles", l.cycles},
                          {"utilization", l.utilization},
                          {"spike_macs", l.spike_macs},
                          {"reconstruction_error", l.reconstruction_error},
                          {"saturated", l.saturated}});
    }
    s2["layers"] = std::move(layers);
    s2["saturation_events"] = report.stage2.saturation_events;
    s2["counters"] = counters_to_json(report.stage2.counters);
    s2["cost_units"] = report.stage2.cost_units;
    j["stage2"] = std::move(s2);

    ordered_json s3;
    s3["pattern"] = report.stage3.pattern;
    s3["density"] = report.stage3.density;
    s3["low_density_flag"] = report.stage3.low_density_flag;
    s3["accuracy_retention"] = report.stage3.accuracy_retention;
    s3["sparse_dense_max_abs_diff"] = report.stage3.sparse_dense_max_abs_diff;
    s3["macs"] = report.stage3.macs;
    s3["cycles"] = report.stage3.cycles;
    s3["utilization"] = report.stage3.utilization;
    s3["compressed_bytes"] = report.stage3.compressed_bytes;
    s3["curriculum_stage"] = report.stage3.curriculum_stage;
    s3["counters"] = counters_to_json(report.stage3.counters);
    s3["cost_units"] = report.stage3.cost_units;
    j["stage3"] = std::move(s3);

    j["totals"] = {{"cost_units", report.total_cost_units}, {"macs", report.total_macs}};
    return j.dump(2) + "\n";
}

std::string report_to_csv(const RunReport& report) {
    // Flatten the JSON form into deterministic key,value rows.
    const json j = json::parse(report_to_json(report));
    std::string out = "key,value\n";
    const std::function<void(const json&, const std::string&)> walk =
        [&](const json& node, const std::string& prefix) {
            if (node.is_object()) {
                for (auto it = node.begin(); it != node.end(); ++it) {
                    walk(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key());
                }
            } else if (node.is_array()) {
                for (size_t i = 0; i < node.size(); ++i) {
                    walk(node[i], prefix + "[" + std::to_string(i) + "]");
                }
            } else {
                out += prefix + "," + node.dump() + "\n";
            }
        };
    walk(j, "");
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic mesh generation.
// ---------------------------------------------------------------------------
namespace {

void rotate2(double angle, double out[2][2]) {
    const double c = std::cos(angle), s = std::sin(angle);
    out[0][0] = c;
    out[0][1] = -s;
    out[1][0] = s;
    out[1][1] = c;
}

void rotate3(double a, double b, double g, double out[3][3]) {
    const double ca = std::cos(a), sa = std::sin(a);
    const double cb = std::cos(b), sb = std::sin(b);
    const double cg = std::cos(g), sg = std::sin(g);
    // Rz(a) * Ry(b) * Rx(g)
    out[0][0] = ca * cb;
    out[0][1] = ca * sb * sg - sa * cg;
    out[0][2] = ca * sb * cg + sa * sg;
    out[1][0] = sa * cb;
    out[1][1] = sa * sb * sg + ca * cg;
    out[1][2] = sa * sb * cg - ca * sg;
    out[2][0] = -sb;
    out[2][1] = cb * sg;
    out[2][2] = cb * cg;
}

}  // namespace

Mesh generate_synthetic_mesh(int n_elements, double kappa_min, double kappa_max,
                             ElementType type, uint64_t seed, MeshGenInfo* info) {
    if (n_elements < 1) throw_contract("n_elements must be >= 1");
    if (!(kappa_min >= 1.0) || kappa_max < kappa_min) {
        throw_contract("kappa range must satisfy 1 <= kappa_min <= kappa_max");
    }

    Rng rng(mix_seed(seed, 0x6d657368));
    Mesh mesh;
    mesh.dim = element_dimension(type);

    static constexpr double kTriRef[3][3] = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    static constexpr double kTetRef[4][3] = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    static constexpr double kHexRef[8][3] = {
        {-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1},
        {-1, -1, 1},  {1, -1, 1},  {1, 1, 1},  {-1, 1, 1},
    };

    const int n_nodes = nodes_per_element(type);
    for (int e = 0; e < n_elements; ++e) {
        const double kappa_target =
            kappa_min == kappa_max ? kappa_min : rng.log_uniform(kappa_min, kappa_max);
        const double stretch = std::sqrt(kappa_target);

        double J[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
        if (mesh.dim == 2) {
            double R[2][2];
            rotate2(rng.uniform_real(0.0, 6.283185307179586), R);
            // J = R * diag(stretch, 1/stretch): det 1, sigma ratio = kappa.
            J[0][0] = R[0][0] * stretch;
            J[0][1] = R[0][1] / stretch;
            J[1][0] = R[1][0] * stretch;
            J[1][1] = R[1][1] / stretch;
        } else {
            double R[3][3];
            rotate3(rng.uniform_real(0.0, 6.283185307179586),
                    rng.uniform_real(0.0, 6.283185307179586),
                    rng.uniform_real(0.0, 6.283185307179586), R);
            const double s[3] = {stretch, 1.0, 1.0 / stretch};
            for (int i = 0; i < 3; ++i) {
                for (int k = 0; k < 3; ++k) J[i][k] = R[i][k] * s[k];
            }
        }

        const double offset = 3.0 * static_cast<double>(e);
        MeshElement element;
        element.type = type;
        element.coeff = 1.0;
        for (int b = 0; b < n_nodes; ++b) {
            const double* ref = type == ElementType::Tri3   ? kTriRef[b]
                                : type == ElementType::Tet4 ? kTetRef[b]
                                                            : kHexRef[b];
            std::array<double, 3> p{offset, 0.0, 0.0};
            for (int r = 0; r < mesh.dim; ++r) {
                double sum = 0.0;
                for (int c = 0; c < mesh.dim; ++c) sum += J[r][c] * ref[c];
                p[static_cast<size_t>(r)] += sum;
            }
            element.nodes.push_back(static_cast<int>(mesh.nodes.size()));
            mesh.nodes.push_back(p);
        }
        mesh.elements.push_back(std::move(element));

        const double achieved =
            condition_number(element_geometry(mesh, mesh.elements.size() - 1));
        if (std::fabs(achieved - kappa_target) > 0.05 * kappa_target) {
            throw_contract("synthetic element " + std::to_string(e) + " achieved kappa " +
                           std::to_string(achieved) + " misses target " +
                           std::to_string(kappa_target) + " by more than 5%");
        }
        if (info) {
            info->target_kappa.push_back(kappa_target);
            info->achieved_kappa.push_back(achieved);
        }
    }
    return mesh;
}

}  // namespace mgua
