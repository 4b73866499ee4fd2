#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "geez/nn.hpp"

namespace geez::nn {

namespace {

constexpr char kMagic[4] = {'G', 'Z', 'O', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::ostream& out, std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

void need(std::istream& in, char* dst, std::streamsize n, const char* what) {
    in.read(dst, n);
    if (in.gcount() != n) throw std::runtime_error(std::string("checkpoint truncated in ") + what);
}

std::uint16_t get_u16(std::istream& in, const char* what) {
    unsigned char b[2];
    need(in, reinterpret_cast<char*>(b), 2, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    need(in, reinterpret_cast<char*>(b), 4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in, const char* what) {
    unsigned char b[8];
    need(in, reinterpret_cast<char*>(b), 8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(params.entries().size()));
    for (const auto& [name, tensor] : params.entries()) {
        if (name.size() > 0xffff) throw std::invalid_argument("parameter name too long");
        put_u16(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        const auto& shape = tensor.shape();
        out.put(static_cast<char>(shape.size()));
        for (int d : shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : tensor.values()) put_f64(out, v);
    }
    if (!out) throw std::runtime_error("short write to checkpoint " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    char magic[4];
    need(in, magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error(path.string() + ": not a GZOC checkpoint (bad magic)");
    }
    const std::uint32_t version = get_u32(in, "version");
    if (version != kVersion) {
        throw std::runtime_error(path.string() + ": unsupported checkpoint version " +
                                 std::to_string(version));
    }
    const std::uint32_t count = get_u32(in, "entry count");
    ModelParams params;
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::uint16_t name_len = get_u16(in, "name length");
        std::string name(name_len, '\0');
        need(in, name.data(), name_len, "name");
        char rank_c;
        need(in, &rank_c, 1, "rank");
        const int rank = static_cast<unsigned char>(rank_c);
        if (rank < 1 || rank > 4) {
            throw std::runtime_error(path.string() + ": bad tensor rank for " + name);
        }
        Shape shape(static_cast<std::size_t>(rank));
        for (int d = 0; d < rank; ++d) {
            shape[static_cast<std::size_t>(d)] = static_cast<int>(get_u32(in, "dims"));
        }
        const std::int64_t n = numel(shape);
        std::vector<double> values(static_cast<std::size_t>(n));
        for (auto& v : values) v = get_f64(in, name.c_str());
        params.add(name, Tensor::from_values(shape, std::move(values),
                                             !ModelParams::is_buffer(name)));
    }
    return params;
}

void validate_checkpoint(const ModelParams& loaded, const ModelParams& expected) {
    for (const auto& [name, tensor] : loaded.entries()) {
        if (!expected.has(name)) {
            throw std::runtime_error("checkpoint holds unknown parameter name '" + name + "'");
        }
        if (expected.at(name).shape() != tensor.shape()) {
            throw std::runtime_error("checkpoint parameter '" + name + "' has shape " +
                                     shape_str(tensor.shape()) + ", model expects " +
                                     shape_str(expected.at(name).shape()));
        }
    }
    for (const auto& [name, tensor] : expected.entries()) {
        if (!loaded.has(name)) {
            throw std::runtime_error("checkpoint is missing parameter '" + name + "'");
        }
    }
}

}  // namespace geez::nn
