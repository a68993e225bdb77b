#include "mgua/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include <nlohmann/json.hpp>

#include "mgua/error.hpp"

namespace mgua {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr double kZeroTol = 1e-12;

// Positions of the `keep` largest-magnitude entries of a group, ties broken
// by lowest index; returned sorted ascending. `extent` entries are real, the
// rest is zero padding and never outranks a real entry.
std::vector<int> top_positions(const double* group, int extent, int keep) {
    std::vector<int> idx(static_cast<size_t>(extent));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return std::fabs(group[a]) > std::fabs(group[b]);
    });
    const int kept = std::min(keep, extent);
    idx.resize(static_cast<size_t>(kept));
    std::sort(idx.begin(), idx.end());
    return idx;
}

double pruning_error(std::span<const double> x, std::span<const double> pruned) {
    double diff2 = 0.0, ref2 = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - pruned[i];
        diff2 += d * d;
        ref2 += x[i] * x[i];
    }
    return ref2 > 0.0 ? std::sqrt(diff2 / ref2) : 0.0;
}

}  // namespace

SparsityCharacteristics analyze_sparsity(std::span<const double> x, int64_t rows, int64_t cols) {
    if (x.empty() || rows <= 0 || cols <= 0 ||
        static_cast<int64_t>(x.size()) != rows * cols) {
        throw_contract("analyze_sparsity requires a nonempty rows x cols tensor");
    }

    SparsityCharacteristics ch;
    ch.size = rows * cols;

    int64_t nnz = 0;
    for (double v : x) {
        if (std::fabs(v) > kZeroTol) ++nnz;
    }
    ch.density = static_cast<double>(nnz) / static_cast<double>(ch.size);
    ch.low_density = ch.density < 0.10;
    ch.density_decile = std::clamp(static_cast<int>(ch.density * 10.0), 0, 9);

    // Histogram and per-group density variance, group size 4 along last axis.
    const int64_t groups_per_row = (cols + 3) / 4;
    const int64_t n_groups = rows * groups_per_row;
    double mean = 0.0;
    std::vector<double> group_density(static_cast<size_t>(n_groups));
    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t g = 0; g < groups_per_row; ++g) {
            int count = 0;
            for (int64_t k = g * 4; k < std::min(cols, (g + 1) * 4); ++k) {
                if (std::fabs(x[static_cast<size_t>(r * cols + k)]) > kZeroTol) ++count;
            }
            ch.group_histogram[static_cast<size_t>(count)] += 1;
            const double d = count / 4.0;
            group_density[static_cast<size_t>(r * groups_per_row + g)] = d;
            mean += d;
        }
    }
    mean /= static_cast<double>(n_groups);
    double var = 0.0;
    for (double d : group_density) var += (d - mean) * (d - mean);
    ch.group_variance = var / static_cast<double>(n_groups);
    // Per-group densities live in [0,1], so the variance cannot exceed 1/4;
    // terciles split that range.
    ch.variance_tercile = ch.group_variance < 1.0 / 12.0 ? 0
                          : ch.group_variance < 1.0 / 6.0 ? 1
                                                          : 2;

    for (PatternKind kind : {PatternKind::P2_4, PatternKind::P1_4, PatternKind::P1_3}) {
        SparsityPattern p{kind, {}};
        const auto pruned = prune_to_pattern(x, rows, cols, p);
        ch.predicted_error[static_cast<size_t>(kind)] = pruning_error(x, pruned);
    }
    {
        const double target = std::clamp(ch.density, 0.1, 1.0);
        SparsityPattern learned = learned_pattern(x, rows, cols, target);
        const auto pruned = prune_to_pattern(x, rows, cols, learned);
        ch.predicted_error[static_cast<size_t>(PatternKind::Learned)] = pruning_error(x, pruned);
    }
    return ch;
}

std::vector<double> prune_to_pattern(std::span<const double> x, int64_t rows, int64_t cols,
                                     const SparsityPattern& pattern) {
    const int gs = pattern.group_size();
    const int64_t groups_per_row = (cols + gs - 1) / gs;
    std::vector<double> out(x.size(), 0.0);

    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t g = 0; g < groups_per_row; ++g) {
            const int64_t base = r * cols + g * gs;
            const int extent = static_cast<int>(std::min<int64_t>(gs, cols - g * gs));
            int keep;
            if (pattern.kind == PatternKind::Learned) {
                const size_t gi = static_cast<size_t>(r * groups_per_row + g);
                keep = gi < pattern.keep_counts.size() ? pattern.keep_counts[gi] : 0;
            } else {
                keep = pattern_keep_count(pattern.kind);
            }
            for (int pos : top_positions(x.data() + base, extent, keep)) {
                out[static_cast<size_t>(base + pos)] = x[static_cast<size_t>(base + pos)];
            }
        }
    }
    return out;
}

CompressedTensor compress(std::span<const double> pruned, int64_t rows, int64_t cols,
                          const SparsityPattern& pattern) {
    const int gs = pattern.group_size();
    const int64_t groups_per_row = (cols + gs - 1) / gs;

    CompressedTensor c;
    c.pattern = pattern.kind;
    c.group_size = gs;
    c.rows = rows;
    c.cols = cols;
    c.keep_counts.reserve(static_cast<size_t>(rows * groups_per_row));

    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t g = 0; g < groups_per_row; ++g) {
            const int64_t base = r * cols + g * gs;
            const int extent = static_cast<int>(std::min<int64_t>(gs, cols - g * gs));
            int allowed;
            if (pattern.kind == PatternKind::Learned) {
                const size_t gi = static_cast<size_t>(r * groups_per_row + g);
                allowed = gi < pattern.keep_counts.size() ? pattern.keep_counts[gi] : 0;
            } else {
                allowed = pattern_keep_count(pattern.kind);
            }

            int nnz = 0;
            for (int k = 0; k < extent; ++k) {
                if (std::fabs(pruned[static_cast<size_t>(base + k)]) > kZeroTol) ++nnz;
            }
            if (nnz > allowed) {
                throw_contract("group " + std::to_string(r * groups_per_row + g) + " holds " +
                               std::to_string(nnz) + " nonzeros, pattern " +
                               pattern_token(pattern.kind) + " allows " +
                               std::to_string(allowed));
            }

            // Store exactly `allowed` entries (capped by real extent): the
            // nonzeros, padded with the lowest-index zeros.
            const auto kept = top_positions(pruned.data() + base, extent, allowed);
            c.keep_counts.push_back(static_cast<uint8_t>(kept.size()));
            for (int pos : kept) {
                c.indices.push_back(static_cast<uint8_t>(pos));
                c.values.push_back(pruned[static_cast<size_t>(base + pos)]);
            }
        }
    }
    return c;
}

std::vector<double> decompress(const CompressedTensor& c) {
    std::vector<double> out(static_cast<size_t>(c.rows * c.cols), 0.0);
    const int64_t groups_per_row = c.groups_per_row();
    size_t cursor = 0;
    for (int64_t r = 0; r < c.rows; ++r) {
        for (int64_t g = 0; g < groups_per_row; ++g) {
            const uint8_t count = c.keep_counts[static_cast<size_t>(r * groups_per_row + g)];
            for (uint8_t k = 0; k < count; ++k, ++cursor) {
                const int64_t col = g * c.group_size + c.indices[cursor];
                if (col >= c.cols) throw_contract("compressed index beyond logical extent");
                out[static_cast<size_t>(r * c.cols + col)] = c.values[cursor];
            }
        }
    }
    return out;
}

SparseMacResult sparse_mac(const CompressedTensor& a, std::span<const double> b,
                           int64_t b_cols) {
    if (static_cast<int64_t>(b.size()) != a.cols * b_cols) {
        throw_contract("sparse_mac: B must be " + std::to_string(a.cols) + "x" +
                       std::to_string(b_cols));
    }

    SparseMacResult out;
    out.rows = a.rows;
    out.cols = b_cols;
    out.result.assign(static_cast<size_t>(a.rows * b_cols), 0.0);

    const int64_t groups_per_row = a.groups_per_row();

    // Entry stream offsets per row (for the value accumulation and the
    // per-row stream lengths of the cycle model).
    std::vector<size_t> row_start(static_cast<size_t>(a.rows) + 1, 0);
    {
        size_t cursor = 0;
        for (int64_t r = 0; r < a.rows; ++r) {
            row_start[static_cast<size_t>(r)] = cursor;
            for (int64_t g = 0; g < groups_per_row; ++g) {
                cursor += a.keep_counts[static_cast<size_t>(r * groups_per_row + g)];
            }
        }
        row_start[static_cast<size_t>(a.rows)] = cursor;
    }

    for (int64_t r = 0; r < a.rows; ++r) {
        size_t cursor = row_start[static_cast<size_t>(r)];
        for (int64_t g = 0; g < groups_per_row; ++g) {
            const uint8_t count = a.keep_counts[static_cast<size_t>(r * groups_per_row + g)];
            for (uint8_t k = 0; k < count; ++k, ++cursor) {
                const int64_t col = g * a.group_size + a.indices[cursor];
                const double value = a.values[cursor];
                const double* brow = b.data() + col * b_cols;
                double* dst = out.result.data() + r * b_cols;
                for (int64_t j = 0; j < b_cols; ++j) dst[j] += value * brow[j];
                out.trace.macs += static_cast<uint64_t>(b_cols);
            }
        }
    }

    // Output-stationary 4x4 array: outputs tile into 4 rows x 4 result
    // columns; the four row streams advance in lockstep, so a tile costs the
    // longest stream among its rows.
    for (int64_t r0 = 0; r0 < a.rows; r0 += 4) {
        uint64_t longest = 0;
        for (int64_t r = r0; r < std::min<int64_t>(a.rows, r0 + 4); ++r) {
            longest = std::max<uint64_t>(
                longest, row_start[static_cast<size_t>(r) + 1] - row_start[static_cast<size_t>(r)]);
        }
        const int64_t col_tiles = (b_cols + 3) / 4;
        out.trace.cycles += longest * static_cast<uint64_t>(col_tiles);
    }
    out.trace.utilization =
        out.trace.cycles > 0
            ? static_cast<double>(out.trace.macs) / (16.0 * static_cast<double>(out.trace.cycles))
            : 0.0;
    return out;
}

SparsityPattern learned_pattern(std::span<const double> x, int64_t rows, int64_t cols,
                                double target_density) {
    if (!(target_density >= 0.1) || target_density > 1.0) {
        throw_contract("target_density must lie in [0.1, 1], got " +
                       std::to_string(target_density));
    }
    const int gs = 4;
    const int64_t groups_per_row = (cols + gs - 1) / gs;
    const int64_t size = rows * cols;
    const int64_t budget = std::llround(target_density * static_cast<double>(size));

    std::vector<int64_t> order(static_cast<size_t>(size));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
        return std::fabs(x[static_cast<size_t>(a)]) > std::fabs(x[static_cast<size_t>(b)]);
    });

    SparsityPattern pattern;
    pattern.kind = PatternKind::Learned;
    pattern.keep_counts.assign(static_cast<size_t>(rows * groups_per_row), 0);
    int64_t taken = 0;
    for (int64_t flat : order) {
        if (taken >= budget) break;
        const int64_t r = flat / cols;
        const int64_t col = flat % cols;
        const size_t gi = static_cast<size_t>(r * groups_per_row + col / gs);
        if (pattern.keep_counts[gi] >= gs) continue;  // 2-bit index bound
        pattern.keep_counts[gi] += 1;
        ++taken;
    }
    return pattern;
}

std::vector<PatternKind> permitted_patterns(int stage) {
    if (stage <= 0) return {PatternKind::P2_4};
    if (stage == 1) return {PatternKind::P2_4, PatternKind::P1_4, PatternKind::P1_3};
    return {PatternKind::P2_4, PatternKind::P1_4, PatternKind::P1_3, PatternKind::Learned};
}

PatternKind curriculum_select(const SparsityCharacteristics& characteristics,
                              CurriculumState& state, AdaptiveMemory& memory, double epsilon) {
    const auto permitted = permitted_patterns(state.stage);
    if (permitted.size() > 1 && epsilon > 0.0 && state.rng.bernoulli(epsilon)) {
        return permitted[state.rng.uniform_u64(permitted.size())];
    }

    if (const auto stored = memory.sparsity_lookup(characteristics.density_decile,
                                                   characteristics.variance_tercile)) {
        if (std::find(permitted.begin(), permitted.end(), *stored) != permitted.end()) {
            return *stored;
        }
    }

    PatternKind best = permitted.front();
    double best_error = characteristics.predicted_error[static_cast<size_t>(best)];
    for (PatternKind p : permitted) {
        const double err = characteristics.predicted_error[static_cast<size_t>(p)];
        if (err < best_error) {  // strict: ties keep the earlier structured pattern
            best = p;
            best_error = err;
        }
    }
    return best;
}

void curriculum_update(CurriculumState& state, PatternKind pattern, double accuracy_retention) {
    if (accuracy_retention < 0.0 || accuracy_retention > 1.0) {
        throw_contract("accuracy_retention must lie in [0, 1]");
    }
    state.window.emplace_back(pattern, accuracy_retention);
    if (state.window.size() > 20) state.window.erase(state.window.begin());
    if (state.window.size() == 20 && state.stage < 2) {
        double sum = 0.0;
        for (const auto& [p, r] : state.window) sum += r;
        if (sum / 20.0 >= 0.95) {
            state.stage += 1;
            state.window.clear();  // each stage earns its own evaluation window
        }
    }
}

// ---------------------------------------------------------------------------
// File codec.
// ---------------------------------------------------------------------------
namespace {

constexpr char kMagic[4] = {'M', 'G', 'U', 'A'};

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

void append_values(std::vector<uint8_t>& out, const CompressedTensor& c) {
    if (c.dtype == CompressedTensor::Dtype::F32) {
        for (double v : c.values) {
            const float f = static_cast<float>(v);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            append_u32(out, bits);
        }
    } else {
        for (double v : c.values) {
            out.push_back(static_cast<uint8_t>(static_cast<int8_t>(std::lrint(v))));
        }
    }
}

void read_values(std::span<const uint8_t> bytes, size_t& at, size_t count,
                 CompressedTensor& c) {
    c.values.reserve(count);
    if (c.dtype == CompressedTensor::Dtype::F32) {
        if (at + 4 * count > bytes.size()) throw_parse("truncated compressed values");
        for (size_t i = 0; i < count; ++i, at += 4) {
            const uint32_t bits = read_u32(bytes, at);
            float f;
            std::memcpy(&f, &bits, 4);
            c.values.push_back(static_cast<double>(f));
        }
    } else {
        if (at + count > bytes.size()) throw_parse("truncated compressed values");
        for (size_t i = 0; i < count; ++i, ++at) {
            c.values.push_back(static_cast<double>(static_cast<int8_t>(bytes[at])));
        }
    }
}

}  // namespace

std::vector<uint8_t> compressed_to_bytes(const CompressedTensor& c) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    append_u32(out, 1);  // version
    append_u32(out, static_cast<uint32_t>(c.dtype));
    append_u32(out, static_cast<uint32_t>(c.encoding));
    append_u32(out, static_cast<uint32_t>(c.pattern));
    append_u32(out, static_cast<uint32_t>(c.group_size));
    append_u32(out, 2);  // rank
    append_u32(out, 0);  // reserved
    append_u64(out, static_cast<uint64_t>(c.rows));
    append_u64(out, static_cast<uint64_t>(c.cols));
    append_u64(out, 1);
    append_u64(out, 1);
    // header is exactly 64 bytes

    if (c.encoding == CompressedTensor::Encoding::Index) {
        out.insert(out.end(), c.keep_counts.begin(), c.keep_counts.end());
        // 2-bit indices, four per byte, zero-padded tail.
        uint8_t packed = 0;
        int fill = 0;
        for (uint8_t idx : c.indices) {
            packed |= static_cast<uint8_t>((idx & 0x3u) << (2 * fill));
            if (++fill == 4) {
                out.push_back(packed);
                packed = 0;
                fill = 0;
            }
        }
        if (fill > 0) out.push_back(packed);
    } else {
        // Bitmap: one bit per logical element marking kept positions.
        const int64_t groups_per_row = c.groups_per_row();
        std::vector<uint8_t> mask(static_cast<size_t>((c.rows * c.cols + 7) / 8), 0);
        size_t cursor = 0;
        for (int64_t r = 0; r < c.rows; ++r) {
            for (int64_t g = 0; g < groups_per_row; ++g) {
                const uint8_t count =
                    c.keep_counts[static_cast<size_t>(r * groups_per_row + g)];
                for (uint8_t k = 0; k < count; ++k, ++cursor) {
                    const int64_t flat = r * c.cols + g * c.group_size + c.indices[cursor];
                    mask[static_cast<size_t>(flat / 8)] |=
                        static_cast<uint8_t>(1u << (flat % 8));
                }
            }
        }
        out.insert(out.end(), mask.begin(), mask.end());
    }

    append_values(out, c);
    return out;
}

CompressedTensor compressed_from_bytes(std::span<const uint8_t> bytes) {
    if (bytes.size() < 64) throw_parse("compressed file shorter than 64-byte header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw_parse("bad compressed file magic");
    if (read_u32(bytes, 4) != 1) throw_parse("unsupported compressed file version");

    CompressedTensor c;
    c.dtype = static_cast<CompressedTensor::Dtype>(read_u32(bytes, 8));
    c.encoding = static_cast<CompressedTensor::Encoding>(read_u32(bytes, 12));
    c.pattern = static_cast<PatternKind>(read_u32(bytes, 16));
    c.group_size = static_cast<int>(read_u32(bytes, 20));
    if (read_u32(bytes, 24) != 2) throw_parse("unsupported compressed tensor rank");
    c.rows = static_cast<int64_t>(read_u64(bytes, 32));
    c.cols = static_cast<int64_t>(read_u64(bytes, 40));
    if (c.group_size != 3 && c.group_size != 4) throw_parse("bad group size");

    const int64_t groups = c.rows * c.groups_per_row();
    size_t at = 64;

    if (c.encoding == CompressedTensor::Encoding::Index) {
        if (at + static_cast<size_t>(groups) > bytes.size()) {
            throw_parse("truncated keep counts");
        }
        c.keep_counts.assign(bytes.begin() + static_cast<int64_t>(at),
                             bytes.begin() + static_cast<int64_t>(at) + groups);
        at += static_cast<size_t>(groups);

        size_t total = 0;
        for (uint8_t k : c.keep_counts) total += k;
        const size_t index_bytes = (total + 3) / 4;
        if (at + index_bytes > bytes.size()) throw_parse("truncated index data");
        c.indices.reserve(total);
        for (size_t i = 0; i < total; ++i) {
            const uint8_t byte = bytes[at + i / 4];
            c.indices.push_back(static_cast<uint8_t>((byte >> (2 * (i % 4))) & 0x3u));
        }
        at += index_bytes;
        read_values(bytes, at, total, c);
    } else {
        const size_t mask_bytes = static_cast<size_t>((c.rows * c.cols + 7) / 8);
        if (at + mask_bytes > bytes.size()) throw_parse("truncated bitmap");
        const int64_t groups_per_row = c.groups_per_row();
        c.keep_counts.assign(static_cast<size_t>(groups), 0);
        for (int64_t flat = 0; flat < c.rows * c.cols; ++flat) {
            if ((bytes[at + static_cast<size_t>(flat / 8)] >> (flat % 8)) & 1u) {
                const int64_t r = flat / c.cols;
                const int64_t col = flat % c.cols;
                c.keep_counts[static_cast<size_t>(r * groups_per_row + col / c.group_size)] += 1;
                c.indices.push_back(static_cast<uint8_t>(col % c.group_size));
            }
        }
        at += mask_bytes;
        read_values(bytes, at, c.indices.size(), c);
    }

    if (at != bytes.size()) throw_parse("trailing bytes after compressed payload");
    return c;
}

std::string curriculum_to_json(const CurriculumState& state) {
    ordered_json j;
    j["stage"] = state.stage;
    ordered_json window = json::array();
    for (const auto& [pattern, retention] : state.window) {
        window.push_back({{"pattern", pattern_token(pattern)}, {"retention", retention}});
    }
    j["window"] = std::move(window);
    return j.dump() + "\n";
}

void curriculum_from_json(const std::string& json_text, CurriculumState& state) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) throw_parse("malformed curriculum JSON");
    state.stage = j.at("stage").get<int>();
    state.window.clear();
    for (const json& e : j.at("window")) {
        const auto pattern = pattern_from_token(e.at("pattern").get<std::string>());
        if (!pattern) throw_parse("bad pattern token in curriculum window");
        state.window.emplace_back(*pattern, e.at("retention").get<double>());
    }
}

}  // namespace mgua
