#pragma once

#include <string>

#include "muap/image.hpp"

namespace muap {

enum class NormOrder { l1, l2, linf };

std::string norm_order_name(NormOrder g);
NormOrder norm_order_from_string(const std::string& s);

// Universal perturbation with its declared (gamma, epsilon) budget.
// `values` shares the Image layout; entries may be negative.
struct Perturbation {
    Image values;
    NormOrder gamma = NormOrder::linf;
    float epsilon = 0.0f;

    static Perturbation zeros(int c, int h, int w, NormOrder gamma, float epsilon) {
        Perturbation u;
        u.values = Image::zeros(c, h, w);
        u.gamma = gamma;
        u.epsilon = epsilon;
        return u;
    }
};

// 64-bit accumulated norms of the value array.
double norm_l1(const Image& v);
double norm_l2(const Image& v);
double norm_linf(const Image& v);
double norm_of(const Image& v, NormOrder g);

// q' = q + u, clamped to [0,255] unless clamp is off.
Image apply_perturbation(const Image& q, const Perturbation& u, bool clamp = true);

// Binary UAP file: "MUAP", u32 version=1, u8 gamma code (1, 2, 255=inf),
// f32 epsilon, u32 C, u32 H, u32 W, C*H*W f32 values. Little-endian,
// bit-exact round-trip.
void save_uap(const Perturbation& u, const std::string& path);
Perturbation load_uap(const std::string& path);

}  // namespace muap
