#include "jbm/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "jbm/errors.hpp"

namespace jbm {

namespace {

void put_u32(std::ofstream& out, uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                          static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError(path + ": truncated header");
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

void put_floats(std::ofstream& out, const float* data, size_t n) {
    // Little-endian host assumed (checked once at startup would be overkill;
    // x86/aarch64 targets only).
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
}

void get_floats(std::ifstream& in, float* data, size_t n, const std::string& path) {
    if (!in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(float))))
        throw FormatError(path + ": truncated payload");
}

}  // namespace

void write_feature_file(const std::string& path, const MatF& m, Modality tag) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for write: " + path);
    out.write("JBMF", 4);
    put_u32(out, 1);
    put_u32(out, static_cast<uint32_t>(m.rows));
    put_u32(out, static_cast<uint32_t>(m.cols));
    const unsigned char tail[4] = {static_cast<unsigned char>(tag), 0, 0, 0};
    out.write(reinterpret_cast<const char*>(tail), 4);
    put_floats(out, m.data(), static_cast<size_t>(m.size()));
    if (!out) throw FormatError("write failed: " + path);
}

FeatureFile read_feature_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "JBMF", 4) != 0)
        throw FormatError(path + ": bad magic (expected JBMF)");
    const uint32_t version = get_u32(in, path);
    if (version != 1) throw FormatError(path + ": unsupported version " + std::to_string(version));
    const uint32_t rows = get_u32(in, path);
    const uint32_t cols = get_u32(in, path);
    unsigned char tail[4];
    if (!in.read(reinterpret_cast<char*>(tail), 4)) throw FormatError(path + ": truncated header");
    if (tail[0] > 1) throw FormatError(path + ": unknown modality tag " + std::to_string(tail[0]));
    FeatureFile f;
    f.tag = static_cast<Modality>(tail[0]);
    f.matrix = MatF(rows, cols);
    get_floats(in, f.matrix.data(), static_cast<size_t>(f.matrix.size()), path);
    // must be exactly at EOF
    char extra;
    if (in.read(&extra, 1)) throw FormatError(path + ": trailing bytes after payload");
    return f;
}

void write_checkpoint_tensors(const std::string& path, const std::vector<const Parameter*>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for write: " + path);
    out.write("JBMC", 4);
    put_u32(out, 1);
    put_u32(out, static_cast<uint32_t>(tensors.size()));
    for (const Parameter* p : tensors) {
        put_u32(out, static_cast<uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put_u32(out, static_cast<uint32_t>(p->value.rows));
        put_u32(out, static_cast<uint32_t>(p->value.cols));
        put_floats(out, p->value.data(), static_cast<size_t>(p->value.size()));
    }
    if (!out) throw FormatError("write failed: " + path);
}

std::vector<Parameter> read_checkpoint_tensors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "JBMC", 4) != 0)
        throw FormatError(path + ": bad magic (expected JBMC)");
    const uint32_t version = get_u32(in, path);
    if (version != 1) throw FormatError(path + ": unsupported version " + std::to_string(version));
    const uint32_t count = get_u32(in, path);
    std::vector<Parameter> tensors;
    tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = get_u32(in, path);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw FormatError(path + ": truncated tensor name");
        const uint32_t rows = get_u32(in, path);
        const uint32_t cols = get_u32(in, path);
        Parameter p(name, rows, cols);
        get_floats(in, p.value.data(), static_cast<size_t>(p.value.size()), path);
        tensors.push_back(std::move(p));
    }
    return tensors;
}

uint64_t file_fingerprint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path);
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!in) break;
    }
    return h;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path);
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for write: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw FormatError("write failed: " + path);
}

}  // namespace jbm
