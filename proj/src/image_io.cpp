#include "psfsim/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace psfsim {

static_assert(std::endian::native == std::endian::little,
              "float payload code assumes a little-endian host");

Image Image::channel(int c) const {
    Image out(width, height, 1);
    std::copy(plane(c), plane(c) + plane_size(), out.plane(0));
    return out;
}

double srgb_to_linear(double v) {
    if (v <= 0.04045) {
        return v / 12.92;
    }
    return std::pow((v + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double v) {
    if (v <= 0.0031308) {
        return 12.92 * v;
    }
    return 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    const auto size = static_cast<std::size_t>(in.tellg());
    std::vector<unsigned char> buf(size);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size));
    if (!in) {
        throw IoError("read from '" + path + "' failed");
    }
    return buf;
}

void write_file(const std::string& path, const unsigned char* data, std::size_t size) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(size));
    out.flush();
    if (!out) {
        throw IoError("write to '" + path + "' failed");
    }
}

// ---------------------------------------------------------------- PFM

struct PfmHeader {
    bool color = false;
    int width = 0;
    int height = 0;
    double scale = -1.0;
    std::size_t data_offset = 0;
};

PfmHeader parse_pfm_header(const std::vector<unsigned char>& buf, const std::string& path) {
    PfmHeader h;
    std::size_t pos = 0;
    auto token = [&]() -> std::string {
        while (pos < buf.size() && std::isspace(buf[pos])) {
            ++pos;
        }
        std::string t;
        while (pos < buf.size() && !std::isspace(buf[pos])) {
            t.push_back(static_cast<char>(buf[pos++]));
        }
        return t;
    };
    const std::string magic = token();
    if (magic == "PF") {
        h.color = true;
    } else if (magic != "Pf") {
        throw FormatError("'" + path + "' is not a PFM file");
    }
    try {
        h.width = std::stoi(token());
        h.height = std::stoi(token());
        h.scale = std::stod(token());
    } catch (const std::exception&) {
        throw FormatError("malformed PFM header in '" + path + "'");
    }
    if (h.width <= 0 || h.height <= 0 || h.scale == 0.0) {
        throw FormatError("malformed PFM header in '" + path + "'");
    }
    if (pos >= buf.size()) {
        throw FormatError("PFM header truncated in '" + path + "'");
    }
    ++pos; // single whitespace after the scale
    h.data_offset = pos;
    return h;
}

// ---------------------------------------------------------------- PNG

constexpr unsigned char kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void put_u32(std::vector<unsigned char>& v, std::uint32_t x) {
    v.push_back(static_cast<unsigned char>(x >> 24));
    v.push_back(static_cast<unsigned char>(x >> 16));
    v.push_back(static_cast<unsigned char>(x >> 8));
    v.push_back(static_cast<unsigned char>(x));
}

std::uint32_t get_u32(const unsigned char* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void append_chunk(std::vector<unsigned char>& out, const char type[4],
                  const unsigned char* payload, std::size_t size) {
    put_u32(out, static_cast<std::uint32_t>(size));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload, payload + size);
    const uLong crc = crc32(crc32(0L, Z_NULL, 0), out.data() + start,
                            static_cast<uInt>(4 + size));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a);
    const int pb = std::abs(p - b);
    const int pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) {
        return a;
    }
    return pb <= pc ? b : c;
}

void unfilter_scanlines(std::vector<unsigned char>& raw, int height, std::size_t stride,
                        int bpp) {
    std::vector<unsigned char> prev(stride, 0);
    for (int y = 0; y < height; ++y) {
        unsigned char* row = raw.data() + static_cast<std::size_t>(y) * (stride + 1);
        const int filter = row[0];
        unsigned char* cur = row + 1;
        for (std::size_t x = 0; x < stride; ++x) {
            const int a = x >= static_cast<std::size_t>(bpp) ? cur[x - bpp] : 0;
            const int b = prev[x];
            const int c = x >= static_cast<std::size_t>(bpp) ? prev[x - bpp] : 0;
            int v = cur[x];
            switch (filter) {
            case 0: break;
            case 1: v += a; break;
            case 2: v += b; break;
            case 3: v += (a + b) / 2; break;
            case 4: v += paeth(a, b, c); break;
            default: throw FormatError("unknown PNG filter type");
            }
            cur[x] = static_cast<unsigned char>(v & 0xff);
        }
        std::memcpy(prev.data(), cur, stride);
    }
}

} // namespace

Image read_pfm(const std::string& path) {
    const std::vector<unsigned char> buf = read_file(path);
    const PfmHeader h = parse_pfm_header(buf, path);
    const int channels = h.color ? 3 : 1;
    const std::size_t count = static_cast<std::size_t>(h.width) *
                              static_cast<std::size_t>(h.height) *
                              static_cast<std::size_t>(channels);
    if (buf.size() - h.data_offset < count * 4) {
        throw FormatError("PFM payload truncated in '" + path + "'");
    }
    const bool little = h.scale < 0.0;
    Image img(h.width, h.height, channels);
    const unsigned char* p = buf.data() + h.data_offset;
    // PFM rows run bottom to top
    for (int y = h.height - 1; y >= 0; --y) {
        for (int x = 0; x < h.width; ++x) {
            for (int c = 0; c < channels; ++c) {
                unsigned char b[4];
                std::memcpy(b, p, 4);
                p += 4;
                if (!little) {
                    std::swap(b[0], b[3]);
                    std::swap(b[1], b[2]);
                }
                float f;
                std::memcpy(&f, b, 4);
                img.at(y, x, c) = static_cast<double>(f);
            }
        }
    }
    return img;
}

void write_pfm(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3) {
        throw FormatError("PFM supports 1 or 3 channels");
    }
    std::ostringstream header;
    header << (img.channels == 3 ? "PF" : "Pf") << "\n"
           << img.width << " " << img.height << "\n-1.0\n";
    std::vector<unsigned char> buf;
    const std::string hs = header.str();
    buf.insert(buf.end(), hs.begin(), hs.end());
    for (int y = img.height - 1; y >= 0; --y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                const float f = static_cast<float>(img.at(y, x, c));
                unsigned char b[4];
                std::memcpy(b, &f, 4);
                buf.insert(buf.end(), b, b + 4);
            }
        }
    }
    write_file(path, buf.data(), buf.size());
}

Image read_png(const std::string& path, GammaMode gamma) {
    const std::vector<unsigned char> buf = read_file(path);
    if (buf.size() < 8 || std::memcmp(buf.data(), kPngSignature, 8) != 0) {
        throw FormatError("'" + path + "' is not a PNG file");
    }
    std::size_t pos = 8;
    int width = 0, height = 0, bit_depth = 0, color_type = 0;
    std::vector<unsigned char> idat;
    bool saw_ihdr = false, saw_iend = false;
    while (pos + 8 <= buf.size() && !saw_iend) {
        const std::uint32_t len = get_u32(buf.data() + pos);
        if (pos + 12 + len > buf.size()) {
            throw FormatError("PNG chunk truncated in '" + path + "'");
        }
        const char* type = reinterpret_cast<const char*>(buf.data() + pos + 4);
        const unsigned char* payload = buf.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) {
                throw FormatError("bad IHDR length");
            }
            width = static_cast<int>(get_u32(payload));
            height = static_cast<int>(get_u32(payload + 4));
            bit_depth = payload[8];
            color_type = payload[9];
            if (payload[12] != 0) {
                throw FormatError("interlaced PNG is not supported");
            }
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || idat.empty()) {
        throw FormatError("PNG missing IHDR or IDAT in '" + path + "'");
    }
    if (width <= 0 || height <= 0) {
        throw FormatError("bad PNG dimensions");
    }
    if (bit_depth != 8 && bit_depth != 16) {
        throw FormatError("only 8- and 16-bit PNG supported");
    }
    int samples = 0;
    switch (color_type) {
    case 0: samples = 1; break; // gray
    case 2: samples = 3; break; // rgb
    case 4: samples = 2; break; // gray + alpha
    case 6: samples = 4; break; // rgba
    default: throw FormatError("unsupported PNG color type");
    }
    const int bpp = samples * bit_depth / 8;
    const std::size_t stride = static_cast<std::size_t>(width) * bpp;
    const std::size_t raw_size = static_cast<std::size_t>(height) * (stride + 1);
    std::vector<unsigned char> raw(raw_size);
    uLongf dest_len = raw_size;
    const int zres = uncompress(raw.data(), &dest_len, idat.data(),
                                static_cast<uLong>(idat.size()));
    if (zres != Z_OK || dest_len != raw_size) {
        throw FormatError("PNG inflate failed in '" + path + "'");
    }
    unfilter_scanlines(raw, height, stride, bpp);

    const int out_channels = samples >= 3 ? 3 : 1; // drop alpha
    Image img(width, height, out_channels);
    const double maxval = bit_depth == 8 ? 255.0 : 65535.0;
    for (int y = 0; y < height; ++y) {
        const unsigned char* row = raw.data() + static_cast<std::size_t>(y) * (stride + 1) + 1;
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < out_channels; ++c) {
                const unsigned char* s = row + (static_cast<std::size_t>(x) * samples + c) *
                                                   (bit_depth / 8);
                double v;
                if (bit_depth == 8) {
                    v = s[0] / maxval;
                } else {
                    v = ((s[0] << 8) | s[1]) / maxval;
                }
                img.at(y, x, c) = gamma == GammaMode::srgb ? srgb_to_linear(v) : v;
            }
        }
    }
    return img;
}

void write_png(const std::string& path, const Image& img, GammaMode gamma, int bit_depth) {
    if (img.channels != 1 && img.channels != 3) {
        throw FormatError("PNG writer supports 1 or 3 channels");
    }
    if (bit_depth != 8 && bit_depth != 16) {
        throw FormatError("PNG bit depth must be 8 or 16");
    }
    const int samples = img.channels;
    const int bpp = samples * bit_depth / 8;
    const std::size_t stride = static_cast<std::size_t>(img.width) * bpp;
    std::vector<unsigned char> raw;
    raw.reserve(static_cast<std::size_t>(img.height) * (stride + 1));
    const double maxval = bit_depth == 8 ? 255.0 : 65535.0;
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0); // filter: none
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < samples; ++c) {
                double v = img.at(y, x, c);
                if (gamma == GammaMode::srgb) {
                    v = linear_to_srgb(v);
                }
                v = std::clamp(v, 0.0, 1.0);
                const auto q = static_cast<std::uint32_t>(std::lround(v * maxval));
                if (bit_depth == 8) {
                    raw.push_back(static_cast<unsigned char>(q));
                } else {
                    raw.push_back(static_cast<unsigned char>(q >> 8));
                    raw.push_back(static_cast<unsigned char>(q & 0xff));
                }
            }
        }
    }

    uLongf comp_bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> comp(comp_bound);
    if (compress2(comp.data(), &comp_bound, raw.data(), static_cast<uLong>(raw.size()),
                  Z_BEST_COMPRESSION) != Z_OK) {
        throw IoError("PNG deflate failed");
    }
    comp.resize(comp_bound);

    std::vector<unsigned char> out;
    out.insert(out.end(), kPngSignature, kPngSignature + 8);
    unsigned char ihdr[13];
    ihdr[0] = static_cast<unsigned char>(img.width >> 24);
    ihdr[1] = static_cast<unsigned char>(img.width >> 16);
    ihdr[2] = static_cast<unsigned char>(img.width >> 8);
    ihdr[3] = static_cast<unsigned char>(img.width);
    ihdr[4] = static_cast<unsigned char>(img.height >> 24);
    ihdr[5] = static_cast<unsigned char>(img.height >> 16);
    ihdr[6] = static_cast<unsigned char>(img.height >> 8);
    ihdr[7] = static_cast<unsigned char>(img.height);
    ihdr[8] = static_cast<unsigned char>(bit_depth);
    ihdr[9] = samples == 3 ? 2 : 0;
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    append_chunk(out, "IHDR", ihdr, 13);
    append_chunk(out, "IDAT", comp.data(), comp.size());
    append_chunk(out, "IEND", nullptr, 0);
    write_file(path, out.data(), out.size());
}

std::vector<double> read_pgm16(const std::string& path, int& width, int& height) {
    const std::vector<unsigned char> buf = read_file(path);
    std::size_t pos = 0;
    auto token = [&]() -> std::string {
        while (pos < buf.size() && std::isspace(buf[pos])) {
            ++pos;
        }
        std::string t;
        while (pos < buf.size() && !std::isspace(buf[pos])) {
            t.push_back(static_cast<char>(buf[pos++]));
        }
        return t;
    };
    if (token() != "P5") {
        throw FormatError("'" + path + "' is not a binary PGM file");
    }
    int maxval = 0;
    try {
        width = std::stoi(token());
        height = std::stoi(token());
        maxval = std::stoi(token());
    } catch (const std::exception&) {
        throw FormatError("malformed PGM header in '" + path + "'");
    }
    if (maxval != 65535) {
        throw FormatError("PGM depth buffers must be 16-bit (maxval 65535)");
    }
    ++pos; // single whitespace after maxval
    const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (buf.size() - pos < count * 2) {
        throw FormatError("PGM payload truncated in '" + path + "'");
    }
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        const unsigned hi = buf[pos + 2 * i];
        const unsigned lo = buf[pos + 2 * i + 1];
        values[i] = static_cast<double>((hi << 8) | lo) / 65535.0;
    }
    return values;
}

void write_pgm16(const std::string& path, const std::vector<double>& values01,
                 int width, int height) {
    if (values01.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw ShapeMismatchError("PGM value count does not match dimensions");
    }
    std::ostringstream header;
    header << "P5\n" << width << " " << height << "\n65535\n";
    std::vector<unsigned char> buf;
    const std::string hs = header.str();
    buf.insert(buf.end(), hs.begin(), hs.end());
    for (double v : values01) {
        const auto q = static_cast<std::uint32_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
        buf.push_back(static_cast<unsigned char>(q >> 8));
        buf.push_back(static_cast<unsigned char>(q & 0xff));
    }
    write_file(path, buf.data(), buf.size());
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

} // namespace

Image read_image(const std::string& path, GammaMode gamma) {
    if (ends_with(path, ".pfm")) {
        return read_pfm(path);
    }
    if (ends_with(path, ".png")) {
        return read_png(path, gamma);
    }
    throw FormatError("unsupported image extension on '" + path + "'");
}

void write_image(const std::string& path, const Image& img, GammaMode gamma) {
    if (ends_with(path, ".pfm")) {
        write_pfm(path, img);
        return;
    }
    if (ends_with(path, ".png")) {
        write_png(path, img, gamma);
        return;
    }
    throw FormatError("unsupported image extension on '" + path + "'");
}

} // namespace psfsim
