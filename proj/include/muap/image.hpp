#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace muap {

// Dense C×H×W float image, row-major, pixel units [0,255] for clean data.
// Gradients and perturbation values reuse the same layout but may be
// negative and unbounded.
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> pixels;  // channels * height * width

    static Image zeros(int c, int h, int w) {
        Image img;
        img.channels = c;
        img.height = h;
        img.width = w;
        img.pixels.assign(static_cast<std::size_t>(c) * h * w, 0.0f);
        return img;
    }

    std::size_t size() const { return pixels.size(); }

    bool same_shape(const Image& other) const {
        return channels == other.channels && height == other.height && width == other.width;
    }

    float& at(int c, int y, int x) {
        return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

// Flat gradient buffer with Image layout; kept in double for exact
// accumulation.
using Grad = std::vector<double>;

inline float clamp_pixel(float v) {
    if (v < 0.0f) return 0.0f;
    if (v > 255.0f) return 255.0f;
    return v;
}

// Binary P6 PPM, 8-bit. Values are rounded half-away-from-zero on save;
// loading yields floats equal to the stored bytes.
void save_image_ppm(const Image& img, const std::string& path);
Image load_image_ppm(const std::string& path);

}  // namespace muap
