#pragma once

#include <cstdint>
#include <list>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "mgua/mesh.hpp"
#include "mgua/precision.hpp"
#include "mgua/rng.hpp"
#include "mgua/types.hpp"

namespace mgua {

// ---------------------------------------------------------------------------
// LRU policy store. front of the order list = most recently used; inserting
// at capacity evicts exactly the least recently used key.
// ---------------------------------------------------------------------------
template <typename K, typename V, typename Hash = std::hash<K>>
class LruStore {
public:
    explicit LruStore(size_t capacity) : capacity_(capacity) {}

    size_t size() const { return order_.size(); }
    size_t capacity() const { return capacity_; }
    bool contains(const K& key) const { return index_.count(key) != 0; }

    // Recency-bumping lookup.
    V* touch(const K& key) {
        auto it = index_.find(key);
        if (it == index_.end()) return nullptr;
        order_.splice(order_.begin(), order_, it->second);
        return &it->second->second;
    }

    // Lookup without recency update.
    const V* peek(const K& key) const {
        auto it = index_.find(key);
        return it == index_.end() ? nullptr : &it->second->second;
    }

    // Insert or assign, bumping recency; evicts the LRU entry at capacity.
    V& put(const K& key, V value) {
        auto it = index_.find(key);
        if (it != index_.end()) {
            it->second->second = std::move(value);
            order_.splice(order_.begin(), order_, it->second);
            return it->second->second;
        }
        if (order_.size() >= capacity_ && capacity_ > 0) {
            index_.erase(order_.back().first);
            order_.pop_back();
        }
        order_.emplace_front(key, std::move(value));
        index_[key] = order_.begin();
        return order_.front().second;
    }

    // Iterate entries most-recent first.
    template <typename F>
    void for_each_mru(F&& fn) const {
        for (const auto& [key, value] : order_) fn(key, value);
    }

    std::vector<K> keys_mru() const {
        std::vector<K> keys;
        keys.reserve(order_.size());
        for (const auto& [key, value] : order_) keys.push_back(key);
        return keys;
    }

private:
    size_t capacity_;
    std::list<std::pair<K, V>> order_;
    std::unordered_map<K, typename std::list<std::pair<K, V>>::iterator, Hash> index_;
};

// ---------------------------------------------------------------------------
// Ring buffer of the most recent `capacity` records, oldest overwritten first.
// ---------------------------------------------------------------------------
template <typename T>
class RingBuffer {
public:
    explicit RingBuffer(size_t capacity) : capacity_(capacity) {}

    void push(T value) {
        if (data_.size() < capacity_) {
            data_.push_back(std::move(value));
        } else {
            data_[head_] = std::move(value);
            head_ = (head_ + 1) % capacity_;
        }
    }

    size_t size() const { return data_.size(); }
    size_t capacity() const { return capacity_; }

    // Oldest to newest.
    std::vector<T> snapshot() const {
        std::vector<T> out;
        out.reserve(data_.size());
        for (size_t i = 0; i < data_.size(); ++i) {
            out.push_back(data_[(head_ + i) % data_.size()]);
        }
        return out;
    }

private:
    size_t capacity_;
    size_t head_ = 0;
    std::vector<T> data_;
};

// ---------------------------------------------------------------------------
// Policy store keys and records.
// ---------------------------------------------------------------------------
enum class PolicyKind : uint8_t { Precision = 0, Parallelism = 1, Sparsity = 2 };

std::string policy_kind_token(PolicyKind kind);
std::optional<PolicyKind> policy_kind_from_token(std::string_view token);

struct PolicyKey {
    PolicyKind kind;
    int bucket;       // precision: clamp(floor(log10 kappa), 0, 6); sparsity: density decile
    std::string tag;  // element type | layer type | "var<T>|<pattern>"

    bool operator==(const PolicyKey&) const = default;
};

struct PolicyKeyHash {
    size_t operator()(const PolicyKey& key) const;
};

using PolicyPayload = std::variant<PrecisionConfig, SystolicConfig, PatternKind>;

struct PolicyRecord {
    PolicyPayload payload;
    double error_ema = 0.0;  // parallelism stores 1-utilization, sparsity 1-retention
    double cost_ema = 0.0;
    uint64_t hits = 0;
    bool ema_init = false;
};

// ---------------------------------------------------------------------------
// Short-term rings (one per policy domain, 100 entries each).
// ---------------------------------------------------------------------------
struct BatchRecord {
    int bucket;
    std::string tag;
    PrecisionConfig config;
    double error;
    double cost;
    uint64_t seq;
};

struct UtilizationRecord {
    std::string layer_type;
    std::array<int64_t, 4> dims;  // workload extents (M,V,N,S); 0 = unknown
    SystolicConfig config;
    double utilization;
    uint64_t seq;
};

struct PerformanceRecord {
    int density_decile;
    int variance_tercile;
    PatternKind pattern;
    double retention;
    double cost;
    uint64_t seq;
};

struct LayerFeatures {
    int64_t tensor_size = 0;
    double value_range = 0.0;  // max|x| - min|x| proxy: max absolute value
};

struct ExperienceRecord {
    double log2_size;
    double log10_range;
    int bitwidth;
    double rel_error;
    double cost;
};

struct AdaptiveMemoryOptions {
    size_t long_term_capacity = 10000;
    size_t short_term_capacity = 100;
    size_t experience_capacity = 1000;
    double epsilon = 0.1;       // exploration rate of the tabular policies
    double ema_alpha = 0.2;
    double tau_hi = 1e-4;       // escalate above this mean error
    double tau_lo = 1e-8;       // de-escalate below this for 3 rounds
    double tau_bitwidth = 1e-2;
    double sparsity_lambda = 0.1;
    int min_bucket_records = 5;
    int deescalate_rounds = 3;
    std::vector<std::string> layer_vocabulary = {"fc", "conv", "pool"};
};

// ---------------------------------------------------------------------------
// The memory-guided adaptation layer shared by all three stages.
//
// Mutations are single-writer: stages resolve policies and record outcomes on
// one logical thread at batch boundaries; the parallel workers in between
// only read their pre-resolved decisions.
// ---------------------------------------------------------------------------
class AdaptiveMemory {
public:
    explicit AdaptiveMemory(uint64_t seed, AdaptiveMemoryOptions options = {});

    // --- precision policy (stage 1) ---

    // clamp(floor(log10 kappa), 0, 6)
    static int kappa_bucket(double kappa);
    // buckets 0-1 -> (bf16,bf16,fp32,fp32); 2-3 -> all fp32; >=4 -> all fp64
    static PrecisionConfig default_precision_config(int bucket);
    static bool high_kappa_flagged(double kappa) { return kappa >= 1000.0; }

    // Stored config for the (kappa bucket, element type) key, inserting the
    // default-table entry on a miss. Elements flagged at kappa >= 1000 are
    // pinned to all-FP64 and bypass the store.
    PrecisionConfig memory_lookup(double kappa, ElementType element_type);

    void record_outcome(const PolicyKey& key, double observed_error, double observed_cost);

    struct PolicyChange {
        PolicyKey key;
        PolicyPayload old_payload;
        PolicyPayload new_payload;
        bool saturated = false;
    };

    // Batch-boundary adaptation over the short-term records seen since the
    // previous round. Returns the change log.
    std::vector<PolicyChange> adapt_policy();

    // --- parallelism policy (stage 2) ---

    SystolicConfig parallelism_policy(const std::string& layer_type,
                                      std::span<const UtilizationRecord> history);
    SystolicConfig parallelism_policy(const std::string& layer_type);  // internal ring

    void record_utilization(const std::string& layer_type, const std::array<int64_t, 4>& dims,
                            const SystolicConfig& config, double utilization, double cost);

    // Best config for a workload by exhaustive candidate enumeration:
    // maximize utilization, then fewer cycles, then lexicographic order.
    static SystolicConfig best_config_for_dims(const std::array<int64_t, 4>& dims);

    // --- bit-width experience (stage 2) ---

    int predict_bitwidth(const LayerFeatures& features) const;
    void record_bitwidth_outcome(const LayerFeatures& features, int bitwidth, double rel_error,
                                 double cost);

    // --- sparsity pattern store (stage 3) ---

    void sparsity_store(PatternKind pattern, int density_decile, int variance_tercile,
                        double accuracy_retention, double cost);
    std::optional<PatternKind> sparsity_lookup(int density_decile, int variance_tercile);

    // --- snapshots ---

    std::string dump_snapshot() const;        // JSON, recency order included
    void load_snapshot(const std::string& json_text);

    // --- accessors (tests, report) ---

    using Store = LruStore<PolicyKey, PolicyRecord, PolicyKeyHash>;
    const Store& long_term() const { return long_term_; }
    const RingBuffer<BatchRecord>& precision_ring() const { return ring_precision_; }
    const RingBuffer<UtilizationRecord>& utilization_ring() const { return ring_utilization_; }
    const RingBuffer<PerformanceRecord>& performance_ring() const { return ring_performance_; }
    const std::vector<ExperienceRecord>& experience() const { return experience_; }
    const AdaptiveMemoryOptions& options() const { return options_; }
    void set_epsilon(double epsilon) { options_.epsilon = epsilon; }
    uint64_t adaptation_count() const { return adaptations_; }

private:
    void ema_update(PolicyRecord& record, double error, double cost);
    PolicyRecord& ensure_record(const PolicyKey& key);
    SystolicConfig random_candidate(Rng& rng);

    AdaptiveMemoryOptions options_;
    Store long_term_;
    RingBuffer<BatchRecord> ring_precision_;
    RingBuffer<UtilizationRecord> ring_utilization_;
    RingBuffer<PerformanceRecord> ring_performance_;
    std::vector<ExperienceRecord> experience_;  // ring semantics, capacity 1000
    size_t experience_head_ = 0;
    Rng rng_precision_;
    Rng rng_parallel_;
    Rng rng_sparsity_;
    uint64_t seq_ = 0;
    uint64_t last_adapt_seq_ = 0;
    uint64_t adaptations_ = 0;
    std::array<int, 7> low_rounds_{};  // consecutive low-error rounds per bucket
};

// Escalation ladder over whole configs; matches the default-table tiers
// (bf16,bf16,fp32,fp32) -> (fp32 x4) -> (fp64 x4). u_s follows u_q.
int precision_config_tier(const PrecisionConfig& config);
PrecisionConfig precision_tier_config(int tier);

}  // namespace mgua
