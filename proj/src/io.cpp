#include "mgua/io.hpp"

#include <cstring>
#include <fstream>

#include "mgua/error.hpp"

namespace mgua {

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw_io("cannot open '" + path + "' for reading");
    const std::streamsize size = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<uint8_t> bytes(static_cast<size_t>(size));
    if (size > 0 && !f.read(reinterpret_cast<char*>(bytes.data()), size)) {
        throw_io("failed to read '" + path + "'");
    }
    return bytes;
}

std::string read_file_text(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

void write_file_bytes(const std::string& path, std::span<const uint8_t> bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw_io("cannot open '" + path + "' for writing");
    if (!bytes.empty() &&
        !f.write(reinterpret_cast<const char*>(bytes.data()),
                 static_cast<std::streamsize>(bytes.size()))) {
        throw_io("failed to write '" + path + "'");
    }
}

void write_file_text(const std::string& path, const std::string& text) {
    write_file_bytes(path, std::span<const uint8_t>(
                               reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

void write_tensor_binary(const std::string& path, std::span<const double> data,
                         const std::string& dtype) {
    std::vector<uint8_t> bytes;
    if (dtype == "f64") {
        bytes.resize(data.size() * 8);
        for (size_t i = 0; i < data.size(); ++i) {
            uint64_t bits;
            std::memcpy(&bits, &data[i], 8);
            for (int k = 0; k < 8; ++k) {
                bytes[i * 8 + static_cast<size_t>(k)] = static_cast<uint8_t>(bits >> (8 * k));
            }
        }
    } else if (dtype == "f32") {
        bytes.resize(data.size() * 4);
        for (size_t i = 0; i < data.size(); ++i) {
            const float f = static_cast<float>(data[i]);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            for (int k = 0; k < 4; ++k) {
                bytes[i * 4 + static_cast<size_t>(k)] = static_cast<uint8_t>(bits >> (8 * k));
            }
        }
    } else {
        throw_contract("unsupported tensor dtype '" + dtype + "'");
    }
    write_file_bytes(path, bytes);
}

std::vector<double> read_tensor_binary(const std::string& path, const std::string& dtype) {
    const auto bytes = read_file_bytes(path);
    std::vector<double> data;
    if (dtype == "f64") {
        if (bytes.size() % 8 != 0) throw_parse("f64 tensor file size not a multiple of 8");
        data.resize(bytes.size() / 8);
        for (size_t i = 0; i < data.size(); ++i) {
            uint64_t bits = 0;
            for (int k = 0; k < 8; ++k) {
                bits |= static_cast<uint64_t>(bytes[i * 8 + static_cast<size_t>(k)]) << (8 * k);
            }
            std::memcpy(&data[i], &bits, 8);
        }
    } else if (dtype == "f32") {
        if (bytes.size() % 4 != 0) throw_parse("f32 tensor file size not a multiple of 4");
        data.resize(bytes.size() / 4);
        for (size_t i = 0; i < data.size(); ++i) {
            uint32_t bits = 0;
            for (int k = 0; k < 4; ++k) {
                bits |= static_cast<uint32_t>(bytes[i * 4 + static_cast<size_t>(k)]) << (8 * k);
            }
            float f;
            std::memcpy(&f, &bits, 4);
            data[i] = static_cast<double>(f);
        }
    } else {
        throw_contract("unsupported tensor dtype '" + dtype + "'");
    }
    return data;
}

uint64_t fnv1a64(std::span<const uint8_t> bytes) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string fnv1a64_hex(const std::string& text) {
    const uint64_t h = fnv1a64(std::span<const uint8_t>(
        reinterpret_cast<const uint8_t*>(text.data()), text.size()));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace mgua
