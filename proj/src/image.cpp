#include "muap/image.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

#include "muap/errors.hpp"

namespace muap {

void save_image_ppm(const Image& img, const std::string& path) {
    if (img.channels != 3) {
        throw std::invalid_argument("save_image_ppm: PPM requires 3 channels, got " +
                                    std::to_string(img.channels));
    }
    if (img.height <= 0 || img.width <= 0) {
        throw std::invalid_argument("save_image_ppm: empty image");
    }
    for (float v : img.pixels) {
        if (!(v >= 0.0f && v <= 255.0f)) {
            throw std::invalid_argument("save_image_ppm: pixel outside [0,255]");
        }
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_image_ppm: cannot open " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";

    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                // round half away from zero; inputs are non-negative here
                float v = std::round(img.at(c, y, x));
                row[static_cast<std::size_t>(x) * 3 + c] = static_cast<std::uint8_t>(v);
            }
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw std::runtime_error("save_image_ppm: write failed for " + path);
}

namespace {

// Reads one whitespace-delimited token, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    return tok;
}

}  // namespace

Image load_image_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_image_ppm: cannot open " + path);

    std::string magic = next_token(in);
    if (magic != "P6") {
        throw FormatError(FormatIssue::bad_header, "load_image_ppm: not a P6 file: " + path);
    }
    std::string ws = next_token(in);
    std::string hs = next_token(in);
    std::string ms = next_token(in);
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(ws);
        h = std::stoi(hs);
        maxval = std::stoi(ms);
    } catch (const std::exception&) {
        throw FormatError(FormatIssue::bad_header, "load_image_ppm: malformed header: " + path);
    }
    if (w <= 0 || h <= 0 || maxval != 255) {
        throw FormatError(FormatIssue::bad_header, "load_image_ppm: unsupported header: " + path);
    }

    std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (static_cast<std::size_t>(in.gcount()) != data.size()) {
        throw FormatError(FormatIssue::truncated,
                          "load_image_ppm: payload does not match dimensions: " + path);
    }

    Image img = Image::zeros(3, h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(c, y, x) =
                    static_cast<float>(data[(static_cast<std::size_t>(y) * w + x) * 3 + c]);
            }
        }
    }
    return img;
}

}  // namespace muap
