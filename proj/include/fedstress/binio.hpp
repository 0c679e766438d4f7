#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fedstress/errors.hpp"

namespace fedstress {

// Little-endian binary IO, independent of host endianness.

class BinWriter {
public:
    explicit BinWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw RuntimeFailure("cannot open for writing: " + path);
        path_ = path;
    }

    void u8(uint8_t v) { put(&v, 1); }

    void u32(uint32_t v) {
        uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                        static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
        put(b, 4);
    }

    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }

    void bytes(const void* p, size_t n) { put(p, n); }

    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        put(s.data(), s.size());
    }

    void close() {
        out_.close();
        if (!out_) throw RuntimeFailure("write failed: " + path_);
    }

private:
    void put(const void* p, size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_) throw RuntimeFailure("write failed: " + path_);
    }

    std::ofstream out_;
    std::string path_;
};

class BinReader {
public:
    explicit BinReader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw FormatError("cannot open: " + path, 0);
    }

    size_t offset() const { return offset_; }

    uint8_t u8() {
        uint8_t v;
        get(&v, 1);
        return v;
    }

    uint32_t u32() {
        uint8_t b[4];
        get(b, 4);
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    }

    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    void bytes(void* p, size_t n) { get(p, n); }

    std::string str(size_t max_len = 1 << 20) {
        uint32_t n = u32();
        if (n > max_len) throw FormatError("string length " + std::to_string(n) + " too large", offset_);
        std::string s(n, '\0');
        get(s.data(), n);
        return s;
    }

    void expect_eof(const char* what) {
        if (in_.peek() != std::char_traits<char>::eof())
            throw FormatError(std::string("trailing bytes after ") + what, offset_);
    }

private:
    void get(void* p, size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in_.gcount()) != n)
            throw FormatError("truncated file", offset_ + static_cast<size_t>(in_.gcount()));
        offset_ += n;
    }

    std::ifstream in_;
    size_t offset_ = 0;
};

}  // namespace fedstress
