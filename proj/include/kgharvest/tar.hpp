// SPDX-License-Identifier: Apache-2.0
//
// Minimal ustar archive writer/reader for dataset shards. Fixed mtime 0 and
// mode 0644 keep shard bytes reproducible across runs.
#pragma once

#include <cstdint>
#include <cstring>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgharvest {

namespace detail {

inline void tar_octal(char* field, size_t width, uint64_t value) {
    // width includes the trailing NUL.
    for (size_t i = width - 1; i-- > 0;) {
        field[i] = char('0' + (value & 7));
        value >>= 3;
    }
    field[width - 1] = '\0';
}

}  // namespace detail

struct TarEntry {
    std::string name;
    std::string bytes;
};

class TarWriter {
public:
    explicit TarWriter(std::ostream& out) : out_(out) {}

    void add_file(const std::string& name, const std::string& bytes) {
        if (name.empty() || name.size() > 100)
            throw std::invalid_argument("tar member name must be 1..100 bytes: " + name);
        char header[512] = {};
        std::memcpy(header, name.data(), name.size());
        detail::tar_octal(header + 100, 8, 0644);      // mode
        detail::tar_octal(header + 108, 8, 0);         // uid
        detail::tar_octal(header + 116, 8, 0);         // gid
        detail::tar_octal(header + 124, 12, bytes.size());
        detail::tar_octal(header + 136, 12, 0);        // mtime
        std::memset(header + 148, ' ', 8);             // chksum placeholder
        header[156] = '0';                             // regular file
        std::memcpy(header + 257, "ustar", 6);
        std::memcpy(header + 263, "00", 2);
        unsigned sum = 0;
        for (unsigned char c : header) sum += c;
        detail::tar_octal(header + 148, 7, sum);
        header[155] = ' ';
        out_.write(header, 512);
        out_.write(bytes.data(), std::streamsize(bytes.size()));
        size_t pad = (512 - bytes.size() % 512) % 512;
        if (pad) {
            char zeros[512] = {};
            out_.write(zeros, std::streamsize(pad));
        }
    }

    void finish() {
        char zeros[1024] = {};
        out_.write(zeros, 1024);
        out_.flush();
    }

private:
    std::ostream& out_;
};

// Parses regular-file members until the end-of-archive zero block. Throws on
// structural corruption; checksum mismatches are corruption.
inline std::vector<TarEntry> read_tar(const std::string& data) {
    std::vector<TarEntry> entries;
    size_t pos = 0;
    while (pos + 512 <= data.size()) {
        const char* header = data.data() + pos;
        bool all_zero = true;
        for (size_t i = 0; i < 512; ++i)
            if (header[i] != 0) {
                all_zero = false;
                break;
            }
        if (all_zero) break;
        if (std::memcmp(header + 257, "ustar", 5) != 0)
            throw std::runtime_error("tar: bad magic at offset " + std::to_string(pos));
        unsigned stored = unsigned(std::strtoul(header + 148, nullptr, 8));
        unsigned sum = 0;
        for (size_t i = 0; i < 512; ++i)
            sum += (i >= 148 && i < 156) ? unsigned(' ') : (unsigned char)header[i];
        if (sum != stored)
            throw std::runtime_error("tar: checksum mismatch at offset " +
                                     std::to_string(pos));
        size_t name_len = 0;
        while (name_len < 100 && header[name_len] != '\0') ++name_len;
        uint64_t size = std::strtoull(header + 124, nullptr, 8);
        pos += 512;
        if (pos + size > data.size())
            throw std::runtime_error("tar: truncated member body");
        if (header[156] == '0' || header[156] == '\0')
            entries.push_back({std::string(header, name_len),
                               data.substr(pos, size)});
        pos += size + (512 - size % 512) % 512;
    }
    return entries;
}

}  // namespace kgharvest
