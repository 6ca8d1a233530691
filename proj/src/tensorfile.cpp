#include "planeq/tensorfile.hpp"

#include <cstring>
#include <memory>

#include "planeq/params.hpp"

namespace planeq::io {

namespace {

void put_bytes(std::FILE* f, const void* p, size_t n) {
    if (std::fwrite(p, 1, n, f) != n) throw IoError("short write");
}

void get_bytes(std::FILE* f, void* p, size_t n) {
    if (std::fread(p, 1, n, f) != n) throw IoError("short read");
}

void put_u32(std::FILE* f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    put_bytes(f, b, 4);
}

uint32_t get_u32(std::FILE* f) {
    unsigned char b[4];
    get_bytes(f, b, 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

// float layout is little-endian IEEE-754 on every supported target
static_assert(sizeof(float) == 4);

}  // namespace

void write_tensor(std::FILE* f, const Tensor& t) {
    put_bytes(f, "PQT1", 4);
    const unsigned char dtype = 0, ndim = static_cast<unsigned char>(t.ndim());
    put_bytes(f, &dtype, 1);
    put_bytes(f, &ndim, 1);
    for (int i = 0; i < t.ndim(); ++i) put_u32(f, static_cast<uint32_t>(t.dim(i)));
    std::vector<float> buf(static_cast<size_t>(t.numel()));
    for (int i = 0; i < t.numel(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(t[i]);
    put_bytes(f, buf.data(), buf.size() * 4);
}

Tensor read_tensor(std::FILE* f) {
    char magic[4];
    get_bytes(f, magic, 4);
    if (std::memcmp(magic, "PQT1", 4) != 0) throw IoError("bad tensor magic");
    unsigned char dtype, ndim;
    get_bytes(f, &dtype, 1);
    get_bytes(f, &ndim, 1);
    if (dtype != 0) throw IoError("unsupported tensor dtype");
    std::vector<int> dims(ndim);
    for (int i = 0; i < ndim; ++i) dims[static_cast<size_t>(i)] = static_cast<int>(get_u32(f));
    Tensor t(dims);
    std::vector<float> buf(static_cast<size_t>(t.numel()));
    get_bytes(f, buf.data(), buf.size() * 4);
    for (int i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(buf[static_cast<size_t>(i)]);
    return t;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_or_throw(const std::string& path, const char* mode) {
    std::FILE* f = std::fopen(path.c_str(), mode);
    if (!f) throw IoError("cannot open " + path);
    return FilePtr(f);
}

}  // namespace

void save_tensor(const std::string& path, const Tensor& t) {
    FilePtr f = open_or_throw(path, "wb");
    write_tensor(f.get(), t);
}

Tensor load_tensor(const std::string& path) {
    FilePtr f = open_or_throw(path, "rb");
    return read_tensor(f.get());
}

void write_named_tensor(std::FILE* f, const std::string& name, const Tensor& t) {
    put_u32(f, static_cast<uint32_t>(name.size()));
    put_bytes(f, name.data(), name.size());
    write_tensor(f, t);
}

std::pair<std::string, Tensor> read_named_tensor(std::FILE* f) {
    const uint32_t len = get_u32(f);
    if (len > 4096) throw IoError("tensor name too long");
    std::string name(len, '\0');
    get_bytes(f, name.data(), len);
    return {name, read_tensor(f)};
}

uint64_t file_fnv64(const std::string& path) {
    FilePtr f = open_or_throw(path, "rb");
    uint64_t h = 0xCBF29CE484222325ull;
    unsigned char buf[65536];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), f.get())) > 0) {
        for (size_t i = 0; i < n; ++i) {
            h ^= buf[i];
            h *= 0x100000001B3ull;
        }
    }
    return h;
}

}  // namespace planeq::io
