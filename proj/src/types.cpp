#include "mgua/types.hpp"

#include <charconv>

namespace mgua {

namespace {

bool valid_tile(int t) { return t == 1 || t == 2 || t == 4 || t == 8 || t == 16; }

}  // namespace

bool valid_systolic_config(const SystolicConfig& config) {
    return valid_tile(config.m) && valid_tile(config.v) && valid_tile(config.n) &&
           valid_tile(config.s) && config.product() <= 256;
}

std::string systolic_config_to_string(const SystolicConfig& config) {
    return std::to_string(config.m) + "," + std::to_string(config.v) + "," +
           std::to_string(config.n) + "," + std::to_string(config.s);
}

std::optional<SystolicConfig> systolic_config_from_string(std::string_view text) {
    int values[4];
    size_t start = 0;
    for (int i = 0; i < 4; ++i) {
        const size_t comma = text.find(',', start);
        const bool last = (i == 3);
        if (last != (comma == std::string_view::npos)) return std::nullopt;
        const std::string_view token =
            last ? text.substr(start) : text.substr(start, comma - start);
        int value = 0;
        const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
        if (ec != std::errc() || ptr != token.data() + token.size()) return std::nullopt;
        values[i] = value;
        start = comma + 1;
    }
    SystolicConfig config{values[0], values[1], values[2], values[3]};
    if (!valid_systolic_config(config)) return std::nullopt;
    return config;
}

std::string pattern_token(PatternKind kind) {
    switch (kind) {
        case PatternKind::P2_4: return "2:4";
        case PatternKind::P1_4: return "1:4";
        case PatternKind::P1_3: return "1:3";
        case PatternKind::Learned: return "learned";
    }
    return "2:4";
}

std::optional<PatternKind> pattern_from_token(std::string_view token) {
    if (token == "2:4") return PatternKind::P2_4;
    if (token == "1:4") return PatternKind::P1_4;
    if (token == "1:3") return PatternKind::P1_3;
    if (token == "learned") return PatternKind::Learned;
    return std::nullopt;
}

int pattern_group_size(PatternKind kind) {
    return kind == PatternKind::P1_3 ? 3 : 4;
}

int pattern_keep_count(PatternKind kind) {
    switch (kind) {
        case PatternKind::P2_4: return 2;
        case PatternKind::P1_4: return 1;
        case PatternKind::P1_3: return 1;
        case PatternKind::Learned: return -1;
    }
    return 2;
}

}  // namespace mgua
