#include "muap/perturbation.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "muap/errors.hpp"

namespace muap {

std::string norm_order_name(NormOrder g) {
    switch (g) {
        case NormOrder::l1: return "1";
        case NormOrder::l2: return "2";
        case NormOrder::linf: return "inf";
    }
    return "?";
}

NormOrder norm_order_from_string(const std::string& s) {
    if (s == "1") return NormOrder::l1;
    if (s == "2") return NormOrder::l2;
    if (s == "inf" || s == "Inf" || s == "INF") return NormOrder::linf;
    throw std::invalid_argument("unknown norm order '" + s + "' (expected 1, 2 or inf)");
}

double norm_l1(const Image& v) {
    double s = 0.0;
    for (float x : v.pixels) s += std::fabs(static_cast<double>(x));
    return s;
}

double norm_l2(const Image& v) {
    double s = 0.0;
    for (float x : v.pixels) {
        double d = static_cast<double>(x);
        s += d * d;
    }
    return std::sqrt(s);
}

double norm_linf(const Image& v) {
    double m = 0.0;
    for (float x : v.pixels) m = std::max(m, std::fabs(static_cast<double>(x)));
    return m;
}

double norm_of(const Image& v, NormOrder g) {
    switch (g) {
        case NormOrder::l1: return norm_l1(v);
        case NormOrder::l2: return norm_l2(v);
        case NormOrder::linf: return norm_linf(v);
    }
    return 0.0;
}

Image apply_perturbation(const Image& q, const Perturbation& u, bool clamp) {
    if (!q.same_shape(u.values)) {
        throw std::invalid_argument("apply_perturbation: shape mismatch");
    }
    Image out = q;
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        float v = out.pixels[i] + u.values.pixels[i];
        out.pixels[i] = clamp ? clamp_pixel(v) : v;
    }
    return out;
}

namespace {

constexpr char kMagic[4] = {'M', 'U', 'A', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    const std::string& path;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) {
            throw FormatError(FormatIssue::truncated, "load_uap: truncated file: " + path);
        }
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

std::uint8_t gamma_code(NormOrder g) {
    switch (g) {
        case NormOrder::l1: return 1;
        case NormOrder::l2: return 2;
        case NormOrder::linf: return 255;
    }
    return 255;
}

NormOrder gamma_from_code(std::uint8_t c, const std::string& path) {
    switch (c) {
        case 1: return NormOrder::l1;
        case 2: return NormOrder::l2;
        case 255: return NormOrder::linf;
    }
    throw FormatError(FormatIssue::bad_header,
                      "load_uap: unknown gamma code " + std::to_string(c) + " in " + path);
}

}  // namespace

void save_uap(const Perturbation& u, const std::string& path) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);
    buf.push_back(static_cast<char>(gamma_code(u.gamma)));
    put_f32(buf, u.epsilon);
    put_u32(buf, static_cast<std::uint32_t>(u.values.channels));
    put_u32(buf, static_cast<std::uint32_t>(u.values.height));
    put_u32(buf, static_cast<std::uint32_t>(u.values.width));
    for (float v : u.values.pixels) put_f32(buf, v);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_uap: cannot open " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("save_uap: write failed for " + path);
}

Perturbation load_uap(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_uap: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Reader r{buf, 0, path};
    r.need(4);
    if (std::memcmp(buf.data(), kMagic, 4) != 0) {
        throw FormatError(FormatIssue::bad_magic, "load_uap: bad magic in " + path);
    }
    r.pos = 4;
    std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw FormatError(FormatIssue::version_mismatch,
                          "load_uap: unsupported version " + std::to_string(version) + " in " + path);
    }
    Perturbation u;
    u.gamma = gamma_from_code(r.u8(), path);
    u.epsilon = r.f32();
    std::uint32_t c = r.u32();
    std::uint32_t h = r.u32();
    std::uint32_t w = r.u32();
    if (c == 0 || h == 0 || w == 0) {
        throw FormatError(FormatIssue::bad_header, "load_uap: zero dimension in " + path);
    }
    u.values = Image::zeros(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
    for (std::size_t i = 0; i < u.values.pixels.size(); ++i) u.values.pixels[i] = r.f32();
    return u;
}

}  // namespace muap
