// mgua — memory-guided unified accelerator model, command-line front end.
//
//   mgua run      --config cfg.json [--seed N] [--report out.json] ...
//   mgua fem      --config cfg.json                 stage 1 only
//   mgua snn      --config cfg.json                 stage 2 only (reads stage1.*)
//   mgua sparse   --config cfg.json                 stage 3 only (reads spikes.*)
//   mgua gen-mesh --n N --kappa-min A --kappa-max B --type tri3 --seed S --out mesh.json
//   mgua ablate   --variant <name> --config cfg.json ...
//
// Stage subcommands exchange artifacts through the configured output
// directory, so `fem; snn; sparse` (with --dump-memory/--load-memory chained)
// reproduces a fused `run` byte for byte.

#include <chrono>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mgua/error.hpp"
#include "mgua/io.hpp"
#include "mgua/mesh.hpp"
#include "mgua/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string report_path;
    std::string report_format = "json";
    std::string load_memory;
    std::string dump_memory;
    std::optional<uint64_t> seed;
    std::string fixed_precision;
    std::string fixed_parallelism;
    bool structured_only = false;
    std::string compression;
    bool fused = false;
    std::string spike_format;
    std::optional<double> epsilon;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_report) {
    cmd->add_option("--config", args.config_path, "Run configuration JSON")->required();
    cmd->add_option("--seed", args.seed, "Override the config seed");
    cmd->add_option("--load-memory", args.load_memory, "Warm-start memory snapshot");
    cmd->add_option("--dump-memory", args.dump_memory, "Write memory snapshot after the run");
    cmd->add_option("--fixed-precision", args.fixed_precision,
                    "Disable adaptive precision: u_p,u_m,u_q,u_s");
    cmd->add_option("--fixed-parallelism", args.fixed_parallelism,
                    "Disable adaptive parallelism: M,V,N,S");
    cmd->add_flag("--structured-only", args.structured_only,
                  "Disable curriculum sparsity (structured patterns only)");
    cmd->add_option("--compression", args.compression, "Sparse encoding: index|bitmap");
    cmd->add_flag("--fused", args.fused, "Fuse the reduced-precision multiply-add");
    cmd->add_option("--spike-format", args.spike_format, "Stage-2 artifact: json|packed");
    cmd->add_option("--epsilon", args.epsilon, "Exploration rate (0 = greedy replay)");
    if (with_report) {
        cmd->add_option("--report", args.report_path, "Report output path");
        cmd->add_option("--report-format", args.report_format, "json|csv")
            ->check(CLI::IsMember({"json", "csv"}));
    }
}

mgua::RunConfig load_config(const CommonArgs& args) {
    mgua::RunConfig config =
        mgua::run_config_from_json(mgua::read_file_text(args.config_path));
    if (args.seed) config.seed = *args.seed;
    if (!args.fixed_precision.empty()) {
        const auto parsed = mgua::config_from_string(args.fixed_precision);
        if (!parsed) throw mgua::Error(mgua::ErrorKind::Validation,
                                       "bad --fixed-precision '" + args.fixed_precision + "'");
        config.fixed_precision = *parsed;
    }
    if (!args.fixed_parallelism.empty()) {
        const auto parsed = mgua::systolic_config_from_string(args.fixed_parallelism);
        if (!parsed)
            throw mgua::Error(mgua::ErrorKind::Validation,
                              "bad --fixed-parallelism '" + args.fixed_parallelism + "'");
        config.fixed_parallelism = *parsed;
    }
    if (args.structured_only) config.structured_only = true;
    if (!args.compression.empty()) {
        if (args.compression == "index") {
            config.compression = mgua::CompressedTensor::Encoding::Index;
        } else if (args.compression == "bitmap") {
            config.compression = mgua::CompressedTensor::Encoding::Bitmap;
        } else {
            throw mgua::Error(mgua::ErrorKind::Validation,
                              "--compression must be index or bitmap");
        }
    }
    if (args.fused) config.fused = true;
    if (!args.spike_format.empty()) config.spike_format = args.spike_format;
    if (args.epsilon) config.epsilon = *args.epsilon;
    return config;
}

mgua::StageContext make_context(const CommonArgs& args, const mgua::RunConfig& config) {
    mgua::StageContext ctx(config);
    if (!args.load_memory.empty()) {
        mgua::load_state(ctx, mgua::read_file_text(args.load_memory));
    }
    return ctx;
}

void finish(const CommonArgs& args, mgua::StageContext& ctx) {
    if (!args.dump_memory.empty()) {
        mgua::write_file_text(args.dump_memory, mgua::dump_state(ctx));
    }
}

void write_report(const CommonArgs& args, const mgua::RunReport& report) {
    const std::string text = args.report_format == "csv" ? mgua::report_to_csv(report)
                                                         : mgua::report_to_json(report);
    if (args.report_path.empty()) {
        std::cout << text;
    } else {
        mgua::write_file_text(args.report_path, text);
    }
}

int run_command(const CommonArgs& args, const std::string& stage) {
    const mgua::RunConfig config = load_config(args);
    mgua::StageContext ctx = make_context(args, config);
    const auto t0 = std::chrono::steady_clock::now();
    if (stage == "run") {
        const mgua::RunReport report = mgua::run_pipeline(ctx);
        write_report(args, report);
    } else if (stage == "fem") {
        mgua::run_fem_stage(ctx);
    } else if (stage == "snn") {
        mgua::run_snn_stage(ctx);
    } else {
        mgua::run_sparse_stage(ctx);
    }
    finish(args, ctx);
    const auto elapsed = std::chrono::duration<double>(
        std::chrono::steady_clock::now() - t0);
    // Timing goes to stderr only: report files stay byte-identical across runs.
    std::cerr << "mgua " << stage << ": " << elapsed.count() << " s\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"memory-guided unified accelerator model"};
    app.require_subcommand(1);

    CommonArgs run_args, fem_args, snn_args, sparse_args, ablate_args;
    add_common(app.add_subcommand("run", "Full three-stage pipeline"), run_args, true);
    add_common(app.add_subcommand("fem", "Stage 1: adaptive-precision assembly"), fem_args,
               false);
    add_common(app.add_subcommand("snn", "Stage 2: bit-serial spike matmul"), snn_args, false);
    add_common(app.add_subcommand("sparse", "Stage 3: sparse tensor acceleration"),
               sparse_args, false);

    auto* ablate = app.add_subcommand("ablate", "Run with an ablation preset");
    std::string variant;
    ablate->add_option("--variant", variant, "Ablation variant")
        ->required()
        ->check(CLI::IsMember({"no-adaptive-precision", "no-adaptive-parallelism",
                               "structured-only", "bitmap"}));
    add_common(ablate, ablate_args, true);

    auto* gen = app.add_subcommand("gen-mesh", "Generate a synthetic mesh");
    int gen_n = 1;
    double gen_kmin = 1.0, gen_kmax = 1.0;
    std::string gen_type = "tri3";
    uint64_t gen_seed = 0;
    std::string gen_out = "mesh.json";
    gen->add_option("--n", gen_n, "Element count")->required();
    gen->add_option("--kappa-min", gen_kmin, "Smallest target condition number")->required();
    gen->add_option("--kappa-max", gen_kmax, "Largest target condition number")->required();
    gen->add_option("--type", gen_type, "tri3|tet4|hex8")
        ->check(CLI::IsMember({"tri3", "tet4", "hex8"}));
    gen->add_option("--seed", gen_seed, "RNG seed");
    gen->add_option("--out", gen_out, "Mesh JSON output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("run")) return run_command(run_args, "run");
        if (app.got_subcommand("fem")) return run_command(fem_args, "fem");
        if (app.got_subcommand("snn")) return run_command(snn_args, "snn");
        if (app.got_subcommand("sparse")) return run_command(sparse_args, "sparse");

        if (app.got_subcommand("ablate")) {
            // Presets; explicit flags still apply on top.
            if (variant == "no-adaptive-precision") {
                if (ablate_args.fixed_precision.empty()) {
                    ablate_args.fixed_precision = "fp32,fp32,bf16,fp16";
                }
            } else if (variant == "no-adaptive-parallelism") {
                if (ablate_args.fixed_parallelism.empty()) {
                    ablate_args.fixed_parallelism = "4,4,4,4";
                }
            } else if (variant == "structured-only") {
                ablate_args.structured_only = true;
            } else {
                if (ablate_args.compression.empty()) ablate_args.compression = "bitmap";
            }
            return run_command(ablate_args, "run");
        }

        if (app.got_subcommand("gen-mesh")) {
            const auto type = mgua::element_type_from_token(gen_type);
            if (!type) {
                std::cerr << "error: unknown element type '" << gen_type << "'\n";
                return 2;
            }
            mgua::MeshGenInfo info;
            const mgua::Mesh mesh =
                mgua::generate_synthetic_mesh(gen_n, gen_kmin, gen_kmax, *type, gen_seed, &info);
            mgua::write_file_text(gen_out, mgua::mesh_to_json(mesh));
            // Provenance sidecar: targets and achieved condition numbers.
            nlohmann::ordered_json side;
            side["seed"] = gen_seed;
            side["type"] = gen_type;
            side["kappa_min"] = gen_kmin;
            side["kappa_max"] = gen_kmax;
            side["target_kappa"] = info.target_kappa;
            side["achieved_kappa"] = info.achieved_kappa;
            mgua::write_file_text(gen_out + ".gen.json", side.dump(2) + "\n");
            return 0;
        }
    } catch (const mgua::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
