// SPDX-License-Identifier: Apache-2.0
//
// Minimal image codecs: enough to measure dimensions, feed the grayscale
// descriptor backend, and synthesize fixtures. BMP/PPM/PGM/PNG decode
// fully; JPEG and GIF are header-sniffed for dimensions only.
#pragma once

#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

namespace kgharvest {

enum class ImageFormat { png, jpeg, gif, bmp, ppm, pgm, unknown };

inline std::string image_extension(ImageFormat f) {
    switch (f) {
        case ImageFormat::png: return "png";
        case ImageFormat::jpeg: return "jpg";
        case ImageFormat::gif: return "gif";
        case ImageFormat::bmp: return "bmp";
        case ImageFormat::ppm: return "ppm";
        case ImageFormat::pgm: return "pgm";
        default: return "bin";
    }
}

inline ImageFormat sniff_image_format(std::string_view bytes) {
    auto has_prefix = [&](std::string_view magic) {
        return bytes.size() >= magic.size() && bytes.substr(0, magic.size()) == magic;
    };
    if (has_prefix("\x89PNG\r\n\x1a\n")) return ImageFormat::png;
    if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
        static_cast<unsigned char>(bytes[1]) == 0xD8 && static_cast<unsigned char>(bytes[2]) == 0xFF)
        return ImageFormat::jpeg;
    if (has_prefix("GIF87a") || has_prefix("GIF89a")) return ImageFormat::gif;
    if (has_prefix("BM")) return ImageFormat::bmp;
    if (has_prefix("P6")) return ImageFormat::ppm;
    if (has_prefix("P5")) return ImageFormat::pgm;
    return ImageFormat::unknown;
}

struct ImageDims {
    uint32_t width = 0;
    uint32_t height = 0;
};

namespace detail {

inline uint32_t be32(const unsigned char* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | p[3];
}
inline uint16_t be16(const unsigned char* p) { return uint16_t((p[0] << 8) | p[1]); }
inline uint32_t le32(const unsigned char* p) {
    return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) | (uint32_t(p[3]) << 24);
}
inline uint16_t le16(const unsigned char* p) { return uint16_t(p[0] | (p[1] << 8)); }

inline const unsigned char* u8(std::string_view s) {
    return reinterpret_cast<const unsigned char*>(s.data());
}

inline std::optional<ImageDims> png_dims(std::string_view b) {
    // IHDR is always the first chunk, 8 bytes after the signature.
    if (b.size() < 33) return std::nullopt;
    const unsigned char* p = u8(b);
    if (std::memcmp(p + 12, "IHDR", 4) != 0) return std::nullopt;
    return ImageDims{be32(p + 16), be32(p + 20)};
}

inline std::optional<ImageDims> jpeg_dims(std::string_view b) {
    const unsigned char* p = u8(b);
    size_t n = b.size(), i = 2;
    while (i + 4 <= n) {
        if (p[i] != 0xFF) return std::nullopt;
        while (i < n && p[i] == 0xFF) ++i;
        if (i >= n) return std::nullopt;
        unsigned char marker = p[i++];
        if (marker == 0xD8 || marker == 0x01 || (marker >= 0xD0 && marker <= 0xD7)) continue;
        if (i + 2 > n) return std::nullopt;
        uint16_t seg = be16(p + i);
        bool is_sof = marker >= 0xC0 && marker <= 0xCF && marker != 0xC4 && marker != 0xC8 &&
                      marker != 0xCC;
        if (is_sof) {
            if (i + 7 > n) return std::nullopt;
            return ImageDims{be16(p + i + 5), be16(p + i + 3)};
        }
        if (marker == 0xD9 || marker == 0xDA) return std::nullopt;
        i += seg;
    }
    return std::nullopt;
}

inline std::optional<ImageDims> gif_dims(std::string_view b) {
    if (b.size() < 10) return std::nullopt;
    const unsigned char* p = u8(b);
    return ImageDims{le16(p + 6), le16(p + 8)};
}

inline std::optional<ImageDims> bmp_dims(std::string_view b) {
    if (b.size() < 26) return std::nullopt;
    const unsigned char* p = u8(b);
    int32_t w = static_cast<int32_t>(le32(p + 18));
    int32_t h = static_cast<int32_t>(le32(p + 22));
    if (w <= 0 || h == 0) return std::nullopt;
    return ImageDims{uint32_t(w), uint32_t(h < 0 ? -h : h)};
}

// PNM header tokens, skipping '#' comments.
inline bool pnm_header(std::string_view b, size_t& pos, uint32_t out[3]) {
    size_t i = 2;
    for (int tok = 0; tok < 3; ++tok) {
        while (i < b.size()) {
            if (b[i] == '#') {
                while (i < b.size() && b[i] != '\n') ++i;
            } else if (b[i] == ' ' || b[i] == '\t' || b[i] == '\n' || b[i] == '\r') {
                ++i;
            } else {
                break;
            }
        }
        uint64_t v = 0;
        bool any = false;
        while (i < b.size() && b[i] >= '0' && b[i] <= '9') {
            v = v * 10 + (b[i] - '0');
            ++i;
            any = true;
        }
        if (!any || v == 0 || v > 0xFFFFFFFFull) return false;
        out[tok] = static_cast<uint32_t>(v);
    }
    if (i >= b.size()) return false;
    pos = i + 1;  // single whitespace byte before raster data
    return true;
}

inline std::optional<ImageDims> pnm_dims(std::string_view b) {
    size_t pos;
    uint32_t hdr[3];
    if (!pnm_header(b, pos, hdr)) return std::nullopt;
    return ImageDims{hdr[0], hdr[1]};
}

}  // namespace detail

inline std::optional<ImageDims> image_dimensions(std::string_view bytes) {
    switch (sniff_image_format(bytes)) {
        case ImageFormat::png: return detail::png_dims(bytes);
        case ImageFormat::jpeg: return detail::jpeg_dims(bytes);
        case ImageFormat::gif: return detail::gif_dims(bytes);
        case ImageFormat::bmp: return detail::bmp_dims(bytes);
        case ImageFormat::ppm:
        case ImageFormat::pgm: return detail::pnm_dims(bytes);
        default: return std::nullopt;
    }
}

// Row-major grayscale pixels in [0, 1].
struct GrayImage {
    uint32_t width = 0;
    uint32_t height = 0;
    std::vector<float> pixels;

    float at(uint32_t x, uint32_t y) const { return pixels[size_t(y) * width + x]; }
};

namespace detail {

inline float luma(unsigned char r, unsigned char g, unsigned char b) {
    return (0.299f * r + 0.587f * g + 0.114f * b) / 255.0f;
}

inline std::optional<GrayImage> decode_pnm(std::string_view b, bool color) {
    size_t pos;
    uint32_t hdr[3];
    if (!pnm_header(b, pos, hdr)) return std::nullopt;
    uint32_t w = hdr[0], h = hdr[1];
    if (hdr[2] > 255) return std::nullopt;
    size_t channels = color ? 3 : 1;
    size_t need = size_t(w) * h * channels;
    if (b.size() < pos + need) return std::nullopt;
    GrayImage img{w, h, std::vector<float>(size_t(w) * h)};
    const unsigned char* p = u8(b) + pos;
    for (size_t i = 0; i < size_t(w) * h; ++i) {
        img.pixels[i] = color ? luma(p[3 * i], p[3 * i + 1], p[3 * i + 2])
                              : p[i] / 255.0f;
    }
    return img;
}

inline std::optional<GrayImage> decode_bmp(std::string_view b) {
    if (b.size() < 54) return std::nullopt;
    const unsigned char* p = u8(b);
    uint32_t data_offset = le32(p + 10);
    int32_t w = static_cast<int32_t>(le32(p + 18));
    int32_t h_raw = static_cast<int32_t>(le32(p + 22));
    uint16_t bpp = le16(p + 28);
    uint32_t compression = le32(p + 30);
    if (w <= 0 || h_raw == 0 || compression != 0 || (bpp != 24 && bpp != 32)) return std::nullopt;
    bool top_down = h_raw < 0;
    uint32_t h = uint32_t(top_down ? -h_raw : h_raw);
    size_t bytes_pp = bpp / 8;
    size_t stride = ((size_t(w) * bytes_pp + 3) / 4) * 4;
    if (b.size() < data_offset + stride * h) return std::nullopt;
    GrayImage img{uint32_t(w), h, std::vector<float>(size_t(w) * h)};
    for (uint32_t y = 0; y < h; ++y) {
        uint32_t src_row = top_down ? y : (h - 1 - y);
        const unsigned char* row = p + data_offset + size_t(src_row) * stride;
        for (int32_t x = 0; x < w; ++x) {
            const unsigned char* px = row + size_t(x) * bytes_pp;  // BGR order
            img.pixels[size_t(y) * w + x] = luma(px[2], px[1], px[0]);
        }
    }
    return img;
}

inline std::optional<std::vector<unsigned char>> zlib_inflate(std::string_view in, size_t expected) {
    std::vector<unsigned char> out(expected);
    uLongf out_len = expected;
    int rc = uncompress(out.data(), &out_len, u8(in), in.size());
    if (rc != Z_OK || out_len != expected) return std::nullopt;
    return out;
}

inline unsigned char paeth(int a, int b, int c) {
    int pp = a + b - c;
    int pa = std::abs(pp - a), pb = std::abs(pp - b), pc = std::abs(pp - c);
    if (pa <= pb && pa <= pc) return static_cast<unsigned char>(a);
    if (pb <= pc) return static_cast<unsigned char>(b);
    return static_cast<unsigned char>(c);
}

// 8-bit, non-interlaced PNG; color types 0/2/3/4/6.
inline std::optional<GrayImage> decode_png(std::string_view b) {
    auto dims = png_dims(b);
    if (!dims) return std::nullopt;
    const unsigned char* p = u8(b);
    size_t n = b.size();
    uint8_t bit_depth = p[24], color_type = p[25], interlace = p[28];
    if (bit_depth != 8 || interlace != 0) return std::nullopt;
    size_t channels;
    switch (color_type) {
        case 0: channels = 1; break;
        case 2: channels = 3; break;
        case 3: channels = 1; break;
        case 4: channels = 2; break;
        case 6: channels = 4; break;
        default: return std::nullopt;
    }
    std::string idat;
    std::vector<unsigned char> palette;
    size_t i = 8;
    while (i + 12 <= n) {
        uint32_t len = be32(p + i);
        const char* type = reinterpret_cast<const char*>(p + i + 4);
        if (i + 12 + len > n) return std::nullopt;
        if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.append(reinterpret_cast<const char*>(p + i + 8), len);
        } else if (std::memcmp(type, "PLTE", 4) == 0) {
            palette.assign(p + i + 8, p + i + 8 + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        i += 12 + len;
    }
    if (idat.empty()) return std::nullopt;
    if (color_type == 3 && palette.size() < 3) return std::nullopt;
    uint32_t w = dims->width, h = dims->height;
    size_t row_bytes = size_t(w) * channels;
    auto raw = zlib_inflate(idat, (row_bytes + 1) * h);
    if (!raw) return std::nullopt;

    std::vector<unsigned char> prev(row_bytes, 0), cur(row_bytes);
    GrayImage img{w, h, std::vector<float>(size_t(w) * h)};
    size_t bpp = channels;
    for (uint32_t y = 0; y < h; ++y) {
        const unsigned char* src = raw->data() + size_t(y) * (row_bytes + 1);
        unsigned char filter = src[0];
        ++src;
        for (size_t x = 0; x < row_bytes; ++x) {
            int a = x >= bpp ? cur[x - bpp] : 0;
            int up = prev[x];
            int c = x >= bpp ? prev[x - bpp] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += up; break;
                case 3: v += (a + up) / 2; break;
                case 4: v += paeth(a, up, c); break;
                default: return std::nullopt;
            }
            cur[x] = static_cast<unsigned char>(v & 0xFF);
        }
        for (uint32_t x = 0; x < w; ++x) {
            const unsigned char* px = cur.data() + size_t(x) * channels;
            float g;
            switch (color_type) {
                case 0: g = px[0] / 255.0f; break;
                case 2: g = luma(px[0], px[1], px[2]); break;
                case 3: {
                    size_t idx = size_t(px[0]) * 3;
                    if (idx + 2 >= palette.size()) return std::nullopt;
                    g = luma(palette[idx], palette[idx + 1], palette[idx + 2]);
                    break;
                }
                case 4: g = px[0] / 255.0f; break;
                default: g = luma(px[0], px[1], px[2]); break;
            }
            img.pixels[size_t(y) * w + x] = g;
        }
        std::swap(prev, cur);
    }
    return img;
}

}  // namespace detail

inline std::optional<GrayImage> decode_gray(std::string_view bytes) {
    switch (sniff_image_format(bytes)) {
        case ImageFormat::png: return detail::decode_png(bytes);
        case ImageFormat::bmp: return detail::decode_bmp(bytes);
        case ImageFormat::ppm: return detail::decode_pnm(bytes, true);
        case ImageFormat::pgm: return detail::decode_pnm(bytes, false);
        default: return std::nullopt;
    }
}

// ---- Encoders (fixtures and the mock web server) ----

inline std::string encode_ppm(uint32_t w, uint32_t h, const std::vector<unsigned char>& rgb) {
    std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.append(reinterpret_cast<const char*>(rgb.data()), rgb.size());
    return out;
}

inline std::string encode_pgm(uint32_t w, uint32_t h, const std::vector<unsigned char>& gray) {
    std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.append(reinterpret_cast<const char*>(gray.data()), gray.size());
    return out;
}

inline std::string encode_bmp24(uint32_t w, uint32_t h, const std::vector<unsigned char>& rgb) {
    size_t stride = ((size_t(w) * 3 + 3) / 4) * 4;
    uint32_t data_size = static_cast<uint32_t>(stride * h);
    uint32_t file_size = 54 + data_size;
    std::string out(54, '\0');
    auto put32 = [&](size_t off, uint32_t v) {
        out[off] = char(v & 0xFF);
        out[off + 1] = char((v >> 8) & 0xFF);
        out[off + 2] = char((v >> 16) & 0xFF);
        out[off + 3] = char((v >> 24) & 0xFF);
    };
    out[0] = 'B';
    out[1] = 'M';
    put32(2, file_size);
    put32(10, 54);
    put32(14, 40);
    put32(18, w);
    put32(22, h);
    out[26] = 1;
    out[28] = 24;
    put32(34, data_size);
    std::string data(stride * h, '\0');
    for (uint32_t y = 0; y < h; ++y) {
        size_t dst = size_t(h - 1 - y) * stride;
        for (uint32_t x = 0; x < w; ++x) {
            size_t src = (size_t(y) * w + x) * 3;
            data[dst + 3 * x] = char(rgb[src + 2]);
            data[dst + 3 * x + 1] = char(rgb[src + 1]);
            data[dst + 3 * x + 2] = char(rgb[src]);
        }
    }
    return out + data;
}

inline std::string encode_png_rgb(uint32_t w, uint32_t h, const std::vector<unsigned char>& rgb) {
    std::string raw;
    raw.reserve((size_t(w) * 3 + 1) * h);
    for (uint32_t y = 0; y < h; ++y) {
        raw.push_back('\0');  // filter 0
        raw.append(reinterpret_cast<const char*>(rgb.data() + size_t(y) * w * 3), size_t(w) * 3);
    }
    uLongf bound = compressBound(raw.size());
    std::vector<unsigned char> compressed(bound);
    compress2(compressed.data(), &bound, detail::u8(raw), raw.size(), 6);

    std::string out("\x89PNG\r\n\x1a\n", 8);
    auto be = [](uint32_t v) {
        std::string s(4, '\0');
        s[0] = char(v >> 24);
        s[1] = char((v >> 16) & 0xFF);
        s[2] = char((v >> 8) & 0xFF);
        s[3] = char(v & 0xFF);
        return s;
    };
    auto chunk = [&](const char* type, const std::string& data) {
        std::string body = std::string(type, 4) + data;
        uint32_t crc = static_cast<uint32_t>(
            crc32(0, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
        out += be(static_cast<uint32_t>(data.size())) + body + be(crc);
    };
    std::string ihdr = be(w) + be(h);
    ihdr += '\x08';  // depth
    ihdr += '\x02';  // RGB
    ihdr += std::string(3, '\0');
    chunk("IHDR", ihdr);
    chunk("IDAT", std::string(reinterpret_cast<char*>(compressed.data()), bound));
    chunk("IEND", "");
    return out;
}

// Deterministic synthetic test image: 8px blocky noise keyed by seed. Equal
// seeds give byte-identical pixels in any container; distinct seeds give
// pictures with essentially uncorrelated downscaled descriptors, which is
// what dedup thresholds need from a fixture corpus.
inline std::vector<unsigned char> synth_rgb(uint32_t w, uint32_t h, uint64_t seed) {
    std::vector<unsigned char> rgb(size_t(w) * h * 3);
    for (uint32_t y = 0; y < h; ++y) {
        for (uint32_t x = 0; x < w; ++x) {
            uint64_t v = seed ^ (uint64_t(x / 8) << 40) ^ (uint64_t(y / 8) << 20);
            v ^= v >> 33;
            v *= 0xFF51AFD7ED558CCDull;
            v ^= v >> 33;
            v *= 0xC4CEB9FE1A85EC53ull;
            v ^= v >> 33;
            size_t i = (size_t(y) * w + x) * 3;
            rgb[i] = static_cast<unsigned char>(v);
            rgb[i + 1] = static_cast<unsigned char>(v >> 8);
            rgb[i + 2] = static_cast<unsigned char>(v >> 16);
        }
    }
    return rgb;
}

}  // namespace kgharvest
