#include "mgua/memory.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "mgua/error.hpp"

namespace mgua {

using nlohmann::json;
using nlohmann::ordered_json;

std::string policy_kind_token(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::Precision: return "precision";
        case PolicyKind::Parallelism: return "parallelism";
        case PolicyKind::Sparsity: return "sparsity";
    }
    return "precision";
}

std::optional<PolicyKind> policy_kind_from_token(std::string_view token) {
    if (token == "precision") return PolicyKind::Precision;
    if (token == "parallelism") return PolicyKind::Parallelism;
    if (token == "sparsity") return PolicyKind::Sparsity;
    return std::nullopt;
}

size_t PolicyKeyHash::operator()(const PolicyKey& key) const {
    size_t h = std::hash<std::string>()(key.tag);
    h ^= static_cast<size_t>(key.bucket) * 0x9e3779b97f4a7c15ull;
    h ^= (static_cast<size_t>(key.kind) + 1) * 0xbf58476d1ce4e5b9ull;
    return h;
}

int precision_config_tier(const PrecisionConfig& config) {
    return fineness_rank(config.u_p);
}

PrecisionConfig precision_tier_config(int tier) {
    if (tier <= 0) return kConfigBf16Mixed;
    if (tier == 1) return kConfigAllFp32;
    return kConfigAllFp64;
}

AdaptiveMemory::AdaptiveMemory(uint64_t seed, AdaptiveMemoryOptions options)
    : options_(std::move(options)),
      long_term_(options_.long_term_capacity),
      ring_precision_(options_.short_term_capacity),
      ring_utilization_(options_.short_term_capacity),
      ring_performance_(options_.short_term_capacity),
      rng_precision_(mix_seed(seed, 0x70726563)),
      rng_parallel_(mix_seed(seed, 0x70617261)),
      rng_sparsity_(mix_seed(seed, 0x73706172)) {}

int AdaptiveMemory::kappa_bucket(double kappa) {
    const int bucket = static_cast<int>(std::floor(std::log10(kappa)));
    return std::clamp(bucket, 0, 6);
}

PrecisionConfig AdaptiveMemory::default_precision_config(int bucket) {
    if (bucket <= 1) return kConfigBf16Mixed;
    if (bucket <= 3) return kConfigAllFp32;
    return kConfigAllFp64;
}

PrecisionConfig AdaptiveMemory::memory_lookup(double kappa, ElementType element_type) {
    if (!std::isfinite(kappa) || kappa < 1.0) {
        throw_contract("memory_lookup requires finite kappa >= 1, got " + std::to_string(kappa));
    }
    // Soft-bound violation: process, but pin to full precision. These
    // elements never participate in adaptation.
    if (high_kappa_flagged(kappa)) return kConfigAllFp64;

    const PolicyKey key{PolicyKind::Precision, kappa_bucket(kappa),
                        element_type_token(element_type)};
    if (PolicyRecord* record = long_term_.touch(key)) {
        ++record->hits;
        return std::get<PrecisionConfig>(record->payload);
    }
    const PrecisionConfig config = default_precision_config(key.bucket);
    PolicyRecord record;
    record.payload = config;
    long_term_.put(key, std::move(record));
    return config;
}

void AdaptiveMemory::ema_update(PolicyRecord& record, double error, double cost) {
    if (!record.ema_init) {
        record.error_ema = error;
        record.cost_ema = cost;
        record.ema_init = true;
        return;
    }
    const double a = options_.ema_alpha;
    record.error_ema = (1.0 - a) * record.error_ema + a * error;
    record.cost_ema = (1.0 - a) * record.cost_ema + a * cost;
}

PolicyRecord& AdaptiveMemory::ensure_record(const PolicyKey& key) {
    if (PolicyRecord* record = long_term_.touch(key)) return *record;
    PolicyRecord record;
    switch (key.kind) {
        case PolicyKind::Precision: record.payload = default_precision_config(key.bucket); break;
        case PolicyKind::Parallelism: record.payload = SystolicConfig{}; break;
        case PolicyKind::Sparsity: record.payload = PatternKind::P2_4; break;
    }
    return long_term_.put(key, std::move(record));
}

void AdaptiveMemory::record_outcome(const PolicyKey& key, double observed_error,
                                    double observed_cost) {
    if (observed_error < 0.0 || observed_cost < 0.0) {
        throw_contract("record_outcome requires nonnegative error and cost");
    }
    PolicyRecord& record = ensure_record(key);
    ema_update(record, observed_error, observed_cost);
    ++seq_;
    switch (key.kind) {
        case PolicyKind::Precision:
            ring_precision_.push(BatchRecord{key.bucket, key.tag,
                                             std::get<PrecisionConfig>(record.payload),
                                             observed_error, observed_cost, seq_});
            break;
        case PolicyKind::Parallelism:
            ring_utilization_.push(UtilizationRecord{key.tag,
                                                     {0, 0, 0, 0},
                                                     std::get<SystolicConfig>(record.payload),
                                                     1.0 - observed_error, seq_});
            break;
        case PolicyKind::Sparsity:
            ring_performance_.push(PerformanceRecord{key.bucket, 0,
                                                     std::get<PatternKind>(record.payload),
                                                     1.0 - observed_error, observed_cost, seq_});
            break;
    }
}

std::vector<AdaptiveMemory::PolicyChange> AdaptiveMemory::adapt_policy() {
    std::vector<PolicyChange> changes;

    // Mean error of the records that arrived since the previous round,
    // grouped by kappa bucket.
    struct BucketStats {
        double sum = 0.0;
        int count = 0;
    };
    std::map<int, BucketStats> stats;
    for (const BatchRecord& record : ring_precision_.snapshot()) {
        if (record.seq <= last_adapt_seq_) continue;
        BucketStats& s = stats[record.bucket];
        s.sum += record.error;
        s.count += 1;
    }
    last_adapt_seq_ = seq_;

    for (const auto& [bucket, s] : stats) {
        if (s.count < options_.min_bucket_records) continue;
        const double mean = s.sum / s.count;

        int direction = 0;  // +1 escalate, -1 de-escalate
        if (mean > options_.tau_hi) {
            direction = +1;
            low_rounds_[static_cast<size_t>(bucket)] = 0;
        } else if (mean < options_.tau_lo) {
            int& rounds = low_rounds_[static_cast<size_t>(bucket)];
            if (++rounds >= options_.deescalate_rounds) {
                direction = -1;
                rounds = 0;
            }
        } else {
            low_rounds_[static_cast<size_t>(bucket)] = 0;  // dead band
        }
        if (direction == 0) continue;

        // Move every stored precision entry of this bucket one rung.
        for (const PolicyKey& key : long_term_.keys_mru()) {
            if (key.kind != PolicyKind::Precision || key.bucket != bucket) continue;
            PolicyRecord* record = long_term_.touch(key);
            const PrecisionConfig old_config = std::get<PrecisionConfig>(record->payload);
            const int tier = precision_config_tier(old_config);
            const int new_tier = std::clamp(tier + direction, 0, 2);
            const PrecisionConfig new_config = precision_tier_config(new_tier);
            PolicyChange change{key, old_config, new_config, new_tier == tier};
            if (new_tier != tier) {
                record->payload = new_config;
                ++adaptations_;
            }
            changes.push_back(std::move(change));
        }
    }
    return changes;
}

SystolicConfig AdaptiveMemory::best_config_for_dims(const std::array<int64_t, 4>& dims) {
    static constexpr int kTiles[] = {1, 2, 4, 8, 16};
    SystolicConfig best{4, 4, 4, 4};
    double best_util = -1.0;
    uint64_t best_cycles = ~0ull;
    for (int m : kTiles) {
        for (int v : kTiles) {
            for (int n : kTiles) {
                for (int s : kTiles) {
                    const SystolicConfig c{m, v, n, s};
                    if (c.product() > 256) continue;
                    const int tile[4] = {m, v, n, s};
                    double util = 1.0;
                    uint64_t cycles = 1;
                    for (int d = 0; d < 4; ++d) {
                        const int64_t extent = std::max<int64_t>(dims[static_cast<size_t>(d)], 1);
                        const uint64_t steps = static_cast<uint64_t>(
                            (extent + tile[d] - 1) / tile[d]);
                        cycles *= steps;
                        util *= static_cast<double>(extent) /
                                (static_cast<double>(tile[d]) * static_cast<double>(steps));
                    }
                    if (util > best_util || (util == best_util && cycles < best_cycles)) {
                        best = c;
                        best_util = util;
                        best_cycles = cycles;
                    }
                }
            }
        }
    }
    return best;
}

SystolicConfig AdaptiveMemory::random_candidate(Rng& rng) {
    static constexpr int kTiles[] = {1, 2, 4, 8, 16};
    for (;;) {
        const SystolicConfig c{kTiles[rng.uniform_u64(5)], kTiles[rng.uniform_u64(5)],
                               kTiles[rng.uniform_u64(5)], kTiles[rng.uniform_u64(5)]};
        if (c.product() <= 256) return c;
    }
}

SystolicConfig AdaptiveMemory::parallelism_policy(const std::string& layer_type,
                                                  std::span<const UtilizationRecord> history) {
    const auto& vocab = options_.layer_vocabulary;
    if (std::find(vocab.begin(), vocab.end(), layer_type) == vocab.end()) {
        throw_contract("unknown layer_type '" + layer_type + "'");
    }
    const PolicyKey key{PolicyKind::Parallelism, 0, layer_type};

    // Most recent workload extents observed for this layer type.
    const UtilizationRecord* latest = nullptr;
    for (auto it = history.rbegin(); it != history.rend(); ++it) {
        if (it->layer_type == layer_type && it->dims[0] > 0) {
            latest = &*it;
            break;
        }
    }

    PolicyRecord* stored = long_term_.touch(key);
    if (!stored && !latest) return SystolicConfig{4, 4, 4, 4};  // cold start

    if (options_.epsilon > 0.0 && rng_parallel_.bernoulli(options_.epsilon)) {
        return random_candidate(rng_parallel_);
    }

    if (latest) {
        const SystolicConfig best = best_config_for_dims(latest->dims);
        PolicyRecord& record = ensure_record(key);
        record.payload = best;
        ++record.hits;
        return best;
    }
    ++stored->hits;
    return std::get<SystolicConfig>(stored->payload);
}

SystolicConfig AdaptiveMemory::parallelism_policy(const std::string& layer_type) {
    const auto history = ring_utilization_.snapshot();
    return parallelism_policy(layer_type, history);
}

void AdaptiveMemory::record_utilization(const std::string& layer_type,
                                        const std::array<int64_t, 4>& dims,
                                        const SystolicConfig& config, double utilization,
                                        double cost) {
    const PolicyKey key{PolicyKind::Parallelism, 0, layer_type};
    PolicyRecord& record = ensure_record(key);
    const SystolicConfig stored = std::get<SystolicConfig>(record.payload);
    if (stored == config) {
        ema_update(record, 1.0 - utilization, cost);
    } else if (!record.ema_init || utilization > 1.0 - record.error_ema) {
        // A different candidate beat the stored one: it becomes the new best.
        record.payload = config;
        record.error_ema = 1.0 - utilization;
        record.cost_ema = cost;
        record.ema_init = true;
    }
    ++seq_;
    ring_utilization_.push(UtilizationRecord{layer_type, dims, config, utilization, seq_});
}

int AdaptiveMemory::predict_bitwidth(const LayerFeatures& features) const {
    if (experience_.empty()) return 8;

    const double qsize = std::log2(static_cast<double>(std::max<int64_t>(features.tensor_size, 1)));
    const double qrange = std::log10(std::max(features.value_range, 1e-300));

    // Nearest feature class by squared distance in (log2 size, log10 range).
    struct Class {
        double d2;
        std::array<double, 9> ema;   // per bitwidth 1..8
        std::array<bool, 9> seen;
    };
    std::map<std::pair<int, int>, Class> classes;
    for (const ExperienceRecord& r : experience_) {
        const auto key = std::make_pair(static_cast<int>(std::lround(r.log2_size)),
                                        static_cast<int>(std::lround(r.log10_range)));
        auto [it, inserted] = classes.try_emplace(key);
        Class& c = it->second;
        if (inserted) {
            c.ema.fill(0.0);
            c.seen.fill(false);
            const double ds = qsize - key.first;
            const double dr = qrange - key.second;
            c.d2 = ds * ds + dr * dr;
        }
        const size_t b = static_cast<size_t>(r.bitwidth);
        if (!c.seen[b]) {
            c.ema[b] = r.rel_error;
            c.seen[b] = true;
        } else {
            c.ema[b] = (1.0 - options_.ema_alpha) * c.ema[b] + options_.ema_alpha * r.rel_error;
        }
    }
    const Class* nearest = nullptr;
    for (const auto& [key, c] : classes) {
        if (!nearest || c.d2 < nearest->d2) nearest = &c;
    }
    for (int b = 1; b <= 8; ++b) {
        const size_t idx = static_cast<size_t>(b);
        if (nearest->seen[idx] && nearest->ema[idx] <= options_.tau_bitwidth) return b;
    }
    return 8;
}

void AdaptiveMemory::record_bitwidth_outcome(const LayerFeatures& features, int bitwidth,
                                             double rel_error, double cost) {
    if (bitwidth < 1 || bitwidth > 8) {
        throw_contract("bitwidth must lie in [1, 8], got " + std::to_string(bitwidth));
    }
    const ExperienceRecord record{
        std::log2(static_cast<double>(std::max<int64_t>(features.tensor_size, 1))),
        std::log10(std::max(features.value_range, 1e-300)), bitwidth, rel_error, cost};
    if (experience_.size() < options_.experience_capacity) {
        experience_.push_back(record);
    } else {
        experience_[experience_head_] = record;
        experience_head_ = (experience_head_ + 1) % options_.experience_capacity;
    }
}

namespace {

std::string sparsity_tag(int variance_tercile, PatternKind pattern) {
    return "var" + std::to_string(variance_tercile) + "|" + pattern_token(pattern);
}

}  // namespace

void AdaptiveMemory::sparsity_store(PatternKind pattern, int density_decile,
                                    int variance_tercile, double accuracy_retention,
                                    double cost) {
    if (accuracy_retention < 0.0 || accuracy_retention > 1.0) {
        throw_contract("accuracy_retention must lie in [0, 1]");
    }
    const PolicyKey key{PolicyKind::Sparsity, density_decile,
                        sparsity_tag(variance_tercile, pattern)};
    PolicyRecord& record = ensure_record(key);
    record.payload = pattern;
    ema_update(record, 1.0 - accuracy_retention, cost);
    ++seq_;
    ring_performance_.push(PerformanceRecord{density_decile, variance_tercile, pattern,
                                             accuracy_retention, cost, seq_});
}

std::optional<PatternKind> AdaptiveMemory::sparsity_lookup(int density_decile,
                                                           int variance_tercile) {
    // Score = retention_ema - lambda * (cost_ema / max cost among candidates).
    // Ties prefer structured patterns over learned (enum order).
    static constexpr PatternKind kAll[] = {PatternKind::P2_4, PatternKind::P1_4,
                                           PatternKind::P1_3, PatternKind::Learned};
    double max_cost = 0.0;
    for (PatternKind p : kAll) {
        const PolicyKey key{PolicyKind::Sparsity, density_decile, sparsity_tag(variance_tercile, p)};
        if (const PolicyRecord* r = long_term_.peek(key)) {
            max_cost = std::max(max_cost, r->cost_ema);
        }
    }
    std::optional<PatternKind> best;
    double best_score = 0.0;
    for (PatternKind p : kAll) {
        const PolicyKey key{PolicyKind::Sparsity, density_decile, sparsity_tag(variance_tercile, p)};
        const PolicyRecord* r = long_term_.peek(key);
        if (!r || !r->ema_init) continue;
        const double norm_cost = max_cost > 0.0 ? r->cost_ema / max_cost : 0.0;
        const double score = (1.0 - r->error_ema) - options_.sparsity_lambda * norm_cost;
        if (!best || score > best_score) {
            best = p;
            best_score = score;
        }
    }
    if (best) {
        const PolicyKey key{PolicyKind::Sparsity, density_decile,
                            sparsity_tag(variance_tercile, *best)};
        if (PolicyRecord* r = long_term_.touch(key)) ++r->hits;
    }
    return best;
}

// ---------------------------------------------------------------------------
// Snapshot serialization.
// ---------------------------------------------------------------------------
namespace {

ordered_json payload_to_json(const PolicyPayload& payload) {
    ordered_json j;
    if (const auto* p = std::get_if<PrecisionConfig>(&payload)) {
        j["type"] = "precision";
        j["config"] = config_to_string(*p);
    } else if (const auto* s = std::get_if<SystolicConfig>(&payload)) {
        j["type"] = "systolic";
        j["config"] = systolic_config_to_string(*s);
    } else {
        j["type"] = "pattern";
        j["config"] = pattern_token(std::get<PatternKind>(payload));
    }
    return j;
}

PolicyPayload payload_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    const std::string config = j.at("config").get<std::string>();
    if (type == "precision") {
        const auto c = config_from_string(config);
        if (!c) throw_parse("bad precision payload '" + config + "'");
        return *c;
    }
    if (type == "systolic") {
        const auto c = systolic_config_from_string(config);
        if (!c) throw_parse("bad systolic payload '" + config + "'");
        return *c;
    }
    const auto p = pattern_from_token(config);
    if (!p) throw_parse("bad pattern payload '" + config + "'");
    return *p;
}

}  // namespace

std::string AdaptiveMemory::dump_snapshot() const {
    ordered_json doc;
    doc["version"] = 1;
    doc["seq"] = seq_;
    doc["last_adapt_seq"] = last_adapt_seq_;
    doc["adaptations"] = adaptations_;
    doc["low_rounds"] = low_rounds_;

    ordered_json entries = json::array();
    long_term_.for_each_mru([&](const PolicyKey& key, const PolicyRecord& record) {
        ordered_json e;
        e["kind"] = policy_kind_token(key.kind);
        e["bucket"] = key.bucket;
        e["tag"] = key.tag;
        e["payload"] = payload_to_json(record.payload);
        e["error_ema"] = record.error_ema;
        e["cost_ema"] = record.cost_ema;
        e["hits"] = record.hits;
        e["ema_init"] = record.ema_init;
        entries.push_back(std::move(e));
    });
    doc["long_term"] = std::move(entries);

    ordered_json precision = json::array();
    for (const BatchRecord& r : ring_precision_.snapshot()) {
        precision.push_back({{"bucket", r.bucket},
                             {"tag", r.tag},
                             {"config", config_to_string(r.config)},
                             {"error", r.error},
                             {"cost", r.cost},
                             {"seq", r.seq}});
    }
    doc["short_term_precision"] = std::move(precision);

    ordered_json utilization = json::array();
    for (const UtilizationRecord& r : ring_utilization_.snapshot()) {
        utilization.push_back({{"layer_type", r.layer_type},
                               {"dims", r.dims},
                               {"config", systolic_config_to_string(r.config)},
                               {"utilization", r.utilization},
                               {"seq", r.seq}});
    }
    doc["short_term_utilization"] = std::move(utilization);

    ordered_json performance = json::array();
    for (const PerformanceRecord& r : ring_performance_.snapshot()) {
        performance.push_back({{"density_decile", r.density_decile},
                               {"variance_tercile", r.variance_tercile},
                               {"pattern", pattern_token(r.pattern)},
                               {"retention", r.retention},
                               {"cost", r.cost},
                               {"seq", r.seq}});
    }
    doc["short_term_performance"] = std::move(performance);

    ordered_json experience = json::array();
    for (size_t i = 0; i < experience_.size(); ++i) {
        const ExperienceRecord& r =
            experience_[(experience_head_ + i) % experience_.size()];
        experience.push_back({{"log2_size", r.log2_size},
                              {"log10_range", r.log10_range},
                              {"bitwidth", r.bitwidth},
                              {"rel_error", r.rel_error},
                              {"cost", r.cost}});
    }
    doc["experience"] = std::move(experience);

    return doc.dump(2) + "\n";
}

void AdaptiveMemory::load_snapshot(const std::string& json_text) {
    json doc = json::parse(json_text, nullptr, false);
    if (doc.is_discarded()) throw_parse("malformed memory snapshot JSON");

    seq_ = doc.value("seq", 0ull);
    last_adapt_seq_ = doc.value("last_adapt_seq", 0ull);
    adaptations_ = doc.value("adaptations", 0ull);
    if (doc.contains("low_rounds")) {
        const auto& lr = doc["low_rounds"];
        for (size_t i = 0; i < low_rounds_.size() && i < lr.size(); ++i) {
            low_rounds_[i] = lr[i].get<int>();
        }
    }

    long_term_ = Store(options_.long_term_capacity);
    const auto& entries = doc.at("long_term");
    // Insert LRU-first so the reconstructed recency order matches the dump.
    for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
        const json& e = *it;
        const auto kind = policy_kind_from_token(e.at("kind").get<std::string>());
        if (!kind) throw_parse("bad policy kind in snapshot");
        PolicyKey key{*kind, e.at("bucket").get<int>(), e.at("tag").get<std::string>()};
        PolicyRecord record;
        record.payload = payload_from_json(e.at("payload"));
        record.error_ema = e.at("error_ema").get<double>();
        record.cost_ema = e.at("cost_ema").get<double>();
        record.hits = e.at("hits").get<uint64_t>();
        record.ema_init = e.at("ema_init").get<bool>();
        long_term_.put(key, std::move(record));
    }

    ring_precision_ = RingBuffer<BatchRecord>(options_.short_term_capacity);
    for (const json& r : doc.value("short_term_precision", json::array())) {
        const auto config = config_from_string(r.at("config").get<std::string>());
        if (!config) throw_parse("bad config in snapshot ring");
        ring_precision_.push(BatchRecord{r.at("bucket").get<int>(),
                                         r.at("tag").get<std::string>(), *config,
                                         r.at("error").get<double>(), r.at("cost").get<double>(),
                                         r.at("seq").get<uint64_t>()});
    }

    ring_utilization_ = RingBuffer<UtilizationRecord>(options_.short_term_capacity);
    for (const json& r : doc.value("short_term_utilization", json::array())) {
        const auto config = systolic_config_from_string(r.at("config").get<std::string>());
        if (!config) throw_parse("bad systolic config in snapshot ring");
        std::array<int64_t, 4> dims{};
        const auto& jd = r.at("dims");
        for (size_t i = 0; i < 4; ++i) dims[i] = jd[i].get<int64_t>();
        ring_utilization_.push(UtilizationRecord{r.at("layer_type").get<std::string>(), dims,
                                                 *config, r.at("utilization").get<double>(),
                                                 r.at("seq").get<uint64_t>()});
    }

    ring_performance_ = RingBuffer<PerformanceRecord>(options_.short_term_capacity);
    for (const json& r : doc.value("short_term_performance", json::array())) {
        const auto pattern = pattern_from_token(r.at("pattern").get<std::string>());
        if (!pattern) throw_parse("bad pattern in snapshot ring");
        ring_performance_.push(PerformanceRecord{
            r.at("density_decile").get<int>(), r.at("variance_tercile").get<int>(), *pattern,
            r.at("retention").get<double>(), r.at("cost").get<double>(),
            r.at("seq").get<uint64_t>()});
    }

    experience_.clear();
    experience_head_ = 0;
    for (const json& r : doc.value("experience", json::array())) {
        experience_.push_back(ExperienceRecord{
            r.at("log2_size").get<double>(), r.at("log10_range").get<double>(),
            r.at("bitwidth").get<int>(), r.at("rel_error").get<double>(),
            r.at("cost").get<double>()});
    }
}

}  // namespace mgua
