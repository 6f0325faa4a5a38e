#include "muap/regularizer.hpp"

#include <cmath>

namespace muap {

namespace {

inline double sign0(double v) {
    if (v > 0.0) return 1.0;
    if (v < 0.0) return -1.0;
    return 0.0;
}

}  // namespace

double mi_loss(const Image& q, const MiConfig& cfg) {
    double l1 = 0.0;
    double l2 = 0.0;
    for (int c = 0; c < q.channels; ++c) {
        for (int y = 0; y < q.height; ++y) {
            for (int x = 0; x < q.width; ++x) {
                double v = q.at(c, y, x);
                if (x + 1 < q.width) {
                    double dx = static_cast<double>(q.at(c, y, x + 1)) - v;
                    l1 += std::fabs(dx);
                    l2 += dx * dx;
                }
                if (y + 1 < q.height) {
                    double dy = static_cast<double>(q.at(c, y + 1, x)) - v;
                    l1 += std::fabs(dy);
                    l2 += dy * dy;
                }
            }
        }
    }
    return cfg.w1 * l1 + cfg.w2 * l2;
}

Grad mi_grad(const Image& q, const MiConfig& cfg) {
    Grad g(q.size(), 0.0);
    auto idx = [&](int c, int y, int x) {
        return (static_cast<std::size_t>(c) * q.height + y) * q.width + x;
    };
    for (int c = 0; c < q.channels; ++c) {
        for (int y = 0; y < q.height; ++y) {
            for (int x = 0; x < q.width; ++x) {
                double v = q.at(c, y, x);
                if (x + 1 < q.width) {
                    double dx = static_cast<double>(q.at(c, y, x + 1)) - v;
                    double t = cfg.w1 * sign0(dx) + cfg.w2 * 2.0 * dx;
                    g[idx(c, y, x + 1)] += t;
                    g[idx(c, y, x)] -= t;
                }
                if (y + 1 < q.height) {
                    double dy = static_cast<double>(q.at(c, y + 1, x)) - v;
                    double t = cfg.w1 * sign0(dy) + cfg.w2 * 2.0 * dy;
                    g[idx(c, y + 1, x)] += t;
                    g[idx(c, y, x)] -= t;
                }
            }
        }
    }
    return g;
}

double gradient_energy(const Image& img) {
    return mi_loss(img, MiConfig{0.0, 1.0});
}

}  // namespace muap
