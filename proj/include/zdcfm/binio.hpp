#pragma once

// Small helpers shared by the binary container formats (dataset, checkpoint):
// buffered little-endian writing and an FNV-1a 64 integrity checksum.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace zdcfm {

inline uint64_t fnv1a64(const uint8_t* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    for (size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

struct ByteWriter {
    std::vector<uint8_t> buf;

    void bytes(const void* p, size_t n) {
        const uint8_t* b = static_cast<const uint8_t*>(p);
        buf.insert(buf.end(), b, b + n);
    }
    void u32(uint32_t v) { bytes(&v, 4); }
    void u64(uint64_t v) { bytes(&v, 8); }
    void str(const std::string& s) { bytes(s.data(), s.size()); }

    void write_file_with_checksum(const std::string& path) {
        uint64_t sum = fnv1a64(buf.data(), buf.size());
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open for writing: " + path);
        f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        f.write(reinterpret_cast<const char*>(&sum), 8);
        if (!f) throw std::runtime_error("write failed: " + path);
    }
};

struct ByteReader {
    std::vector<uint8_t> buf;
    size_t pos = 0;

    // loads the file, verifies and strips the trailing checksum
    static ByteReader from_file_checked(const std::string& path) {
        std::ifstream f(path, std::ios::binary | std::ios::ate);
        if (!f) throw std::runtime_error("cannot open: " + path);
        std::streamsize size = f.tellg();
        if (size < 8) throw std::runtime_error("truncated file: " + path);
        f.seekg(0);
        ByteReader r;
        r.buf.resize(static_cast<size_t>(size));
        f.read(reinterpret_cast<char*>(r.buf.data()), size);
        if (!f) throw std::runtime_error("read failed: " + path);
        uint64_t stored;
        std::memcpy(&stored, r.buf.data() + r.buf.size() - 8, 8);
        r.buf.resize(r.buf.size() - 8);
        uint64_t calc = fnv1a64(r.buf.data(), r.buf.size());
        if (calc != stored) throw std::runtime_error("integrity check failed: " + path);
        return r;
    }

    void need(size_t n) const {
        if (pos + n > buf.size()) throw std::runtime_error("truncated payload");
    }
    void bytes(void* p, size_t n) {
        need(n);
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    uint32_t u32() {
        uint32_t v;
        bytes(&v, 4);
        return v;
    }
    uint64_t u64() {
        uint64_t v;
        bytes(&v, 8);
        return v;
    }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
};

}  // namespace zdcfm
