#include "muap/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "muap/errors.hpp"
#include "muap/rng.hpp"

namespace muap {

namespace {

constexpr double kInputScale = 1.0 / 255.0;
constexpr double kNormFloor = 1e-12;

std::size_t vol(int c, int h, int w) {
    return static_cast<std::size_t>(c) * h * w;
}

std::vector<double> layer_forward(const LayerDesc& L, const float* params,
                                  const std::vector<double>& in) {
    std::vector<double> out(vol(L.out_c, L.out_h, L.out_w), 0.0);
    switch (L.kind) {
        case LayerKind::dense: {
            const std::size_t n_in = in.size();
            const float* W = params + L.w_off;
            const float* b = params + L.b_off;
            for (int o = 0; o < L.out_c; ++o) {
                double acc = static_cast<double>(b[o]);
                const float* row = W + static_cast<std::size_t>(o) * n_in;
                for (std::size_t i = 0; i < n_in; ++i) acc += static_cast<double>(row[i]) * in[i];
                out[o] = acc;
            }
            break;
        }
        case LayerKind::relu: {
            for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
            break;
        }
        case LayerKind::conv3x3: {
            const float* W = params + L.w_off;
            const float* b = params + L.b_off;
            for (int oc = 0; oc < L.out_c; ++oc) {
                for (int y = 0; y < L.out_h; ++y) {
                    for (int x = 0; x < L.out_w; ++x) {
                        double acc = static_cast<double>(b[oc]);
                        for (int ic = 0; ic < L.in_c; ++ic) {
                            for (int ky = 0; ky < 3; ++ky) {
                                int iy = y + ky - 1;
                                if (iy < 0 || iy >= L.in_h) continue;
                                for (int kx = 0; kx < 3; ++kx) {
                                    int ix = x + kx - 1;
                                    if (ix < 0 || ix >= L.in_w) continue;
                                    double wv = W[((static_cast<std::size_t>(oc) * L.in_c + ic) * 3 + ky) * 3 + kx];
                                    acc += wv * in[(static_cast<std::size_t>(ic) * L.in_h + iy) * L.in_w + ix];
                                }
                            }
                        }
                        out[(static_cast<std::size_t>(oc) * L.out_h + y) * L.out_w + x] = acc;
                    }
                }
            }
            break;
        }
        case LayerKind::global_avg_pool: {
            double inv = 1.0 / (static_cast<double>(L.in_h) * L.in_w);
            for (int c = 0; c < L.in_c; ++c) {
                double acc = 0.0;
                const double* plane = in.data() + static_cast<std::size_t>(c) * L.in_h * L.in_w;
                for (int i = 0; i < L.in_h * L.in_w; ++i) acc += plane[i];
                out[c] = acc * inv;
            }
            break;
        }
        case LayerKind::patch_avg_pool: {
            int p = L.pool;
            double inv = 1.0 / (static_cast<double>(p) * p);
            for (int c = 0; c < L.in_c; ++c) {
                for (int oy = 0; oy < L.out_h; ++oy) {
                    for (int ox = 0; ox < L.out_w; ++ox) {
                        double acc = 0.0;
                        for (int dy = 0; dy < p; ++dy) {
                            for (int dx = 0; dx < p; ++dx) {
                                acc += in[(static_cast<std::size_t>(c) * L.in_h + oy * p + dy) * L.in_w +
                                          ox * p + dx];
                            }
                        }
                        out[(static_cast<std::size_t>(c) * L.out_h + oy) * L.out_w + ox] = acc * inv;
                    }
                }
            }
            break;
        }
    }
    return out;
}

std::vector<double> layer_backward_input(const LayerDesc& L, const float* params,
                                         const std::vector<double>& in,
                                         const std::vector<double>& gout) {
    std::vector<double> gin(in.size(), 0.0);
    switch (L.kind) {
        case LayerKind::dense: {
            const std::size_t n_in = in.size();
            const float* W = params + L.w_off;
            for (int o = 0; o < L.out_c; ++o) {
                double g = gout[o];
                if (g == 0.0) continue;
                const float* row = W + static_cast<std::size_t>(o) * n_in;
                for (std::size_t i = 0; i < n_in; ++i) gin[i] += static_cast<double>(row[i]) * g;
            }
            break;
        }
        case LayerKind::relu: {
            // subgradient 0 at 0
            for (std::size_t i = 0; i < in.size(); ++i) gin[i] = in[i] > 0.0 ? gout[i] : 0.0;
            break;
        }
        case LayerKind::conv3x3: {
            const float* W = params + L.w_off;
            for (int oc = 0; oc < L.out_c; ++oc) {
                for (int y = 0; y < L.out_h; ++y) {
                    for (int x = 0; x < L.out_w; ++x) {
                        double g = gout[(static_cast<std::size_t>(oc) * L.out_h + y) * L.out_w + x];
                        if (g == 0.0) continue;
                        for (int ic = 0; ic < L.in_c; ++ic) {
                            for (int ky = 0; ky < 3; ++ky) {
                                int iy = y + ky - 1;
                                if (iy < 0 || iy >= L.in_h) continue;
                                for (int kx = 0; kx < 3; ++kx) {
                                    int ix = x + kx - 1;
                                    if (ix < 0 || ix >= L.in_w) continue;
                                    double wv = W[((static_cast<std::size_t>(oc) * L.in_c + ic) * 3 + ky) * 3 + kx];
                                    gin[(static_cast<std::size_t>(ic) * L.in_h + iy) * L.in_w + ix] += wv * g;
                                }
                            }
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::global_avg_pool: {
            double inv = 1.0 / (static_cast<double>(L.in_h) * L.in_w);
            for (int c = 0; c < L.in_c; ++c) {
                double g = gout[c] * inv;
                double* plane = gin.data() + static_cast<std::size_t>(c) * L.in_h * L.in_w;
                for (int i = 0; i < L.in_h * L.in_w; ++i) plane[i] = g;
            }
            break;
        }
        case LayerKind::patch_avg_pool: {
            int p = L.pool;
            double inv = 1.0 / (static_cast<double>(p) * p);
            for (int c = 0; c < L.in_c; ++c) {
                for (int oy = 0; oy < L.out_h; ++oy) {
                    for (int ox = 0; ox < L.out_w; ++ox) {
                        double g = gout[(static_cast<std::size_t>(c) * L.out_h + oy) * L.out_w + ox] * inv;
                        for (int dy = 0; dy < p; ++dy) {
                            for (int dx = 0; dx < p; ++dx) {
                                gin[(static_cast<std::size_t>(c) * L.in_h + oy * p + dy) * L.in_w + ox * p + dx] = g;
                            }
                        }
                    }
                }
            }
            break;
        }
    }
    return gin;
}

void layer_backward_params(const LayerDesc& L, const std::vector<double>& in,
                           const std::vector<double>& gout, std::vector<double>& dparams) {
    switch (L.kind) {
        case LayerKind::dense: {
            const std::size_t n_in = in.size();
            for (int o = 0; o < L.out_c; ++o) {
                double g = gout[o];
                dparams[L.b_off + o] += g;
                if (g == 0.0) continue;
                double* row = dparams.data() + L.w_off + static_cast<std::size_t>(o) * n_in;
                for (std::size_t i = 0; i < n_in; ++i) row[i] += in[i] * g;
            }
            break;
        }
        case LayerKind::conv3x3: {
            for (int oc = 0; oc < L.out_c; ++oc) {
                for (int y = 0; y < L.out_h; ++y) {
                    for (int x = 0; x < L.out_w; ++x) {
                        double g = gout[(static_cast<std::size_t>(oc) * L.out_h + y) * L.out_w + x];
                        if (g == 0.0) continue;
                        dparams[L.b_off + oc] += g;
                        for (int ic = 0; ic < L.in_c; ++ic) {
                            for (int ky = 0; ky < 3; ++ky) {
                                int iy = y + ky - 1;
                                if (iy < 0 || iy >= L.in_h) continue;
                                for (int kx = 0; kx < 3; ++kx) {
                                    int ix = x + kx - 1;
                                    if (ix < 0 || ix >= L.in_w) continue;
                                    dparams[L.w_off + ((static_cast<std::size_t>(oc) * L.in_c + ic) * 3 + ky) * 3 + kx] +=
                                        in[(static_cast<std::size_t>(ic) * L.in_h + iy) * L.in_w + ix] * g;
                                }
                            }
                        }
                    }
                }
            }
            break;
        }
        default:
            break;  // parameter-free layers
    }
}

std::vector<double> image_to_input(const Embedder& model, const Image& x) {
    if (x.channels != model.in_c || x.height != model.in_h || x.width != model.in_w) {
        throw std::invalid_argument("embedder: input shape mismatch");
    }
    std::vector<double> in(x.pixels.size());
    for (std::size_t i = 0; i < in.size(); ++i) in[i] = static_cast<double>(x.pixels[i]) * kInputScale;
    return in;
}

// acts[i] is the input of layer i; acts.back() is the raw feature.
std::vector<std::vector<double>> forward_acts(const Embedder& model, const Image& x) {
    std::vector<std::vector<double>> acts;
    acts.reserve(model.layers.size() + 1);
    acts.push_back(image_to_input(model, x));
    for (const LayerDesc& L : model.layers) {
        acts.push_back(layer_forward(L, model.params.data(), acts.back()));
    }
    return acts;
}

std::vector<double> input_grad_from_feature_grad(const Embedder& model,
                                                 const std::vector<std::vector<double>>& acts,
                                                 std::vector<double> g) {
    for (std::size_t li = model.layers.size(); li-- > 0;) {
        g = layer_backward_input(model.layers[li], model.params.data(), acts[li], g);
    }
    for (double& v : g) v *= kInputScale;  // chain through the input scaling
    return g;
}

}  // namespace

std::string arch_name(Arch a) {
    switch (a) {
        case Arch::linear: return "linear";
        case Arch::mlp: return "mlp";
        case Arch::conv: return "conv";
        case Arch::pool_mlp: return "pool-mlp";
    }
    return "?";
}

Arch arch_from_string(const std::string& s) {
    if (s == "linear") return Arch::linear;
    if (s == "mlp") return Arch::mlp;
    if (s == "conv") return Arch::conv;
    if (s == "pool-mlp" || s == "pool_mlp") return Arch::pool_mlp;
    throw std::invalid_argument("unknown architecture '" + s +
                                "' (expected linear, mlp, conv or pool-mlp)");
}

std::vector<double> raw_feature(const Embedder& model, const Image& x) {
    return forward_acts(model, x).back();
}

std::vector<double> forward(const Embedder& model, const Image& x) {
    std::vector<double> y = raw_feature(model, x);
    double n = std::sqrt(std::inner_product(y.begin(), y.end(), y.begin(), 0.0));
    if (n < kNormFloor) throw DegenerateEmbeddingError("forward: raw feature norm below 1e-12");
    for (double& v : y) v /= n;
    return y;
}

Grad backward_input(const Embedder& model, const Image& x, const std::vector<double>& grad_out) {
    if (static_cast<int>(grad_out.size()) != model.embed_dim) {
        throw std::invalid_argument("backward_input: grad_out length != embed_dim");
    }
    auto acts = forward_acts(model, x);
    const std::vector<double>& y = acts.back();
    double n = std::sqrt(std::inner_product(y.begin(), y.end(), y.begin(), 0.0));
    if (n < kNormFloor) throw DegenerateEmbeddingError("backward_input: raw feature norm below 1e-12");

    // J = (I - y^ y^T) / ||y||
    double dot = 0.0;
    for (int i = 0; i < model.embed_dim; ++i) dot += grad_out[i] * y[i] / n;
    std::vector<double> g(model.embed_dim);
    for (int i = 0; i < model.embed_dim; ++i) g[i] = (grad_out[i] - dot * y[i] / n) / n;

    return input_grad_from_feature_grad(model, acts, std::move(g));
}

Grad backward_input_raw(const Embedder& model, const Image& x, const std::vector<double>& grad_raw) {
    if (static_cast<int>(grad_raw.size()) != model.embed_dim) {
        throw std::invalid_argument("backward_input_raw: grad length != embed_dim");
    }
    auto acts = forward_acts(model, x);
    return input_grad_from_feature_grad(model, acts, grad_raw);
}

std::vector<double> classify(const Embedder& model, const ClassifierHead& head, const Image& x) {
    if (head.n_classes < 2) throw std::invalid_argument("classify: head needs >= 2 classes");
    if (head.embed_dim != model.embed_dim) throw std::invalid_argument("classify: head dim mismatch");
    std::vector<double> y = raw_feature(model, x);
    std::vector<double> logits(head.n_classes, 0.0);
    for (int d = 0; d < head.embed_dim; ++d) {
        double v = y[d];
        if (v == 0.0) continue;
        const float* row = head.weight.data() + static_cast<std::size_t>(d) * head.n_classes;
        for (int c = 0; c < head.n_classes; ++c) logits[c] += v * static_cast<double>(row[c]);
    }
    return logits;
}

namespace {

LayerDesc dense_layer(int in_c, int in_h, int in_w, int out, std::size_t& off) {
    LayerDesc L;
    L.kind = LayerKind::dense;
    L.in_c = in_c;
    L.in_h = in_h;
    L.in_w = in_w;
    L.out_c = out;
    L.out_h = 1;
    L.out_w = 1;
    L.w_len = vol(in_c, in_h, in_w) * static_cast<std::size_t>(out);
    L.w_off = off;
    off += L.w_len;
    L.b_len = static_cast<std::size_t>(out);
    L.b_off = off;
    off += L.b_len;
    return L;
}

LayerDesc relu_layer(const LayerDesc& prev) {
    LayerDesc L;
    L.kind = LayerKind::relu;
    L.in_c = prev.out_c;
    L.in_h = prev.out_h;
    L.in_w = prev.out_w;
    L.out_c = L.in_c;
    L.out_h = L.in_h;
    L.out_w = L.in_w;
    return L;
}

LayerDesc conv_layer(int in_c, int in_h, int in_w, int out_c, std::size_t& off) {
    LayerDesc L;
    L.kind = LayerKind::conv3x3;
    L.in_c = in_c;
    L.in_h = in_h;
    L.in_w = in_w;
    L.out_c = out_c;
    L.out_h = in_h;
    L.out_w = in_w;
    L.w_len = static_cast<std::size_t>(out_c) * in_c * 9;
    L.w_off = off;
    off += L.w_len;
    L.b_len = static_cast<std::size_t>(out_c);
    L.b_off = off;
    off += L.b_len;
    return L;
}

Embedder build_architecture(Arch arch, int in_c, int in_h, int in_w, const TrainConfig& cfg) {
    Embedder m;
    m.arch = arch;
    m.in_c = in_c;
    m.in_h = in_h;
    m.in_w = in_w;
    m.embed_dim = cfg.embed_dim;
    std::size_t off = 0;

    switch (arch) {
        case Arch::linear: {
            m.layers.push_back(dense_layer(in_c, in_h, in_w, cfg.embed_dim, off));
            break;
        }
        case Arch::mlp: {
            m.layers.push_back(dense_layer(in_c, in_h, in_w, cfg.hidden, off));
            m.layers.push_back(relu_layer(m.layers.back()));
            m.layers.push_back(dense_layer(cfg.hidden, 1, 1, cfg.embed_dim, off));
            break;
        }
        case Arch::conv: {
            m.layers.push_back(conv_layer(in_c, in_h, in_w, cfg.conv_c1, off));
            m.layers.push_back(relu_layer(m.layers.back()));
            m.layers.push_back(conv_layer(cfg.conv_c1, in_h, in_w, cfg.conv_c2, off));
            m.layers.push_back(relu_layer(m.layers.back()));
            LayerDesc gap;
            gap.kind = LayerKind::global_avg_pool;
            gap.in_c = cfg.conv_c2;
            gap.in_h = in_h;
            gap.in_w = in_w;
            gap.out_c = cfg.conv_c2;
            gap.out_h = 1;
            gap.out_w = 1;
            m.layers.push_back(gap);
            m.layers.push_back(dense_layer(cfg.conv_c2, 1, 1, cfg.embed_dim, off));
            break;
        }
        case Arch::pool_mlp: {
            if (in_h % cfg.patch != 0 || in_w % cfg.patch != 0) {
                throw std::invalid_argument("pool-mlp: image dims must be divisible by patch size");
            }
            LayerDesc pool;
            pool.kind = LayerKind::patch_avg_pool;
            pool.pool = cfg.patch;
            pool.in_c = in_c;
            pool.in_h = in_h;
            pool.in_w = in_w;
            pool.out_c = in_c;
            pool.out_h = in_h / cfg.patch;
            pool.out_w = in_w / cfg.patch;
            m.layers.push_back(pool);
            m.layers.push_back(dense_layer(in_c, pool.out_h, pool.out_w, cfg.hidden, off));
            m.layers.push_back(relu_layer(m.layers.back()));
            m.layers.push_back(dense_layer(cfg.hidden, 1, 1, cfg.embed_dim, off));
            break;
        }
    }
    m.params.assign(off, 0.0f);
    return m;
}

void init_params(Embedder& m, Rng& rng) {
    for (const LayerDesc& L : m.layers) {
        if (L.w_len == 0) continue;
        std::size_t fan_in = vol(L.in_c, L.in_h, L.in_w);
        if (L.kind == LayerKind::conv3x3) fan_in = static_cast<std::size_t>(L.in_c) * 9;
        double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (std::size_t i = 0; i < L.w_len; ++i) {
            m.params[L.w_off + i] = static_cast<float>(rng.normal(0.0, sigma));
        }
        // biases stay zero
    }
}

}  // namespace

TrainedModel train_embedder(Arch arch, const Dataset& dataset, const TrainConfig& cfg) {
    std::vector<const DatasetItem*> train = train_items(dataset);
    if (train.empty()) throw std::invalid_argument("train_embedder: empty train split");

    std::vector<int> ids;
    for (const DatasetItem* it : train) ids.push_back(it->identity);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.size() < 2) throw std::invalid_argument("train_embedder: need >= 2 train identities");

    auto class_of = [&](int identity) {
        return static_cast<int>(std::lower_bound(ids.begin(), ids.end(), identity) - ids.begin());
    };

    const Image& probe = train.front()->image;
    Embedder model = build_architecture(arch, probe.channels, probe.height, probe.width, cfg);
    Rng rng(derive_seed(cfg.seed, 17));
    init_params(model, rng);

    ClassifierHead head;
    head.embed_dim = cfg.embed_dim;
    head.n_classes = static_cast<int>(ids.size());
    head.class_identities = ids;
    head.weight.resize(static_cast<std::size_t>(cfg.embed_dim) * ids.size());
    double head_sigma = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
    for (float& w : head.weight) w = static_cast<float>(rng.normal(0.0, head_sigma));

    std::vector<double> vel_params(model.params.size(), 0.0);
    std::vector<double> vel_head(head.weight.size(), 0.0);
    std::vector<double> master_params(model.params.begin(), model.params.end());
    std::vector<double> master_head(head.weight.begin(), head.weight.end());

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    double last_loss = 0.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<double> dparams(model.params.size(), 0.0);
            std::vector<double> dhead(head.weight.size(), 0.0);
            double batch_loss = 0.0;

            for (std::size_t bi = start; bi < end; ++bi) {
                const DatasetItem* item = train[order[bi]];
                auto acts = forward_acts(model, item->image);
                const std::vector<double>& y = acts.back();
                int target = class_of(item->identity);

                std::vector<double> logits(head.n_classes, 0.0);
                for (int d = 0; d < head.embed_dim; ++d) {
                    const float* row = head.weight.data() + static_cast<std::size_t>(d) * head.n_classes;
                    for (int c = 0; c < head.n_classes; ++c) logits[c] += y[d] * static_cast<double>(row[c]);
                }
                double mx = *std::max_element(logits.begin(), logits.end());
                double z = 0.0;
                for (double v : logits) z += std::exp(v - mx);
                double logp = logits[target] - mx - std::log(z);
                batch_loss -= logp;

                // dlogits = softmax - onehot
                std::vector<double> dlogits(head.n_classes);
                for (int c = 0; c < head.n_classes; ++c) {
                    dlogits[c] = std::exp(logits[c] - mx) / z - (c == target ? 1.0 : 0.0);
                }
                std::vector<double> dy(head.embed_dim, 0.0);
                for (int d = 0; d < head.embed_dim; ++d) {
                    const float* row = head.weight.data() + static_cast<std::size_t>(d) * head.n_classes;
                    double acc = 0.0;
                    for (int c = 0; c < head.n_classes; ++c) {
                        acc += static_cast<double>(row[c]) * dlogits[c];
                        dhead[static_cast<std::size_t>(d) * head.n_classes + c] += y[d] * dlogits[c];
                    }
                    dy[d] = acc;
                }

                std::vector<double> g = std::move(dy);
                for (std::size_t li = model.layers.size(); li-- > 0;) {
                    layer_backward_params(model.layers[li], acts[li], g, dparams);
                    if (li > 0) g = layer_backward_input(model.layers[li], model.params.data(), acts[li], g);
                }
            }

            double inv_b = 1.0 / static_cast<double>(end - start);
            if (!std::isfinite(batch_loss)) {
                throw DivergenceError(epoch, "train_embedder: non-finite loss at epoch " +
                                                 std::to_string(epoch));
            }
            epoch_loss += batch_loss;
            seen += end - start;

            for (std::size_t i = 0; i < master_params.size(); ++i) {
                vel_params[i] = cfg.momentum * vel_params[i] - cfg.lr * dparams[i] * inv_b;
                master_params[i] += vel_params[i];
                model.params[i] = static_cast<float>(master_params[i]);
            }
            for (std::size_t i = 0; i < master_head.size(); ++i) {
                vel_head[i] = cfg.momentum * vel_head[i] - cfg.lr * dhead[i] * inv_b;
                master_head[i] += vel_head[i];
                head.weight[i] = static_cast<float>(master_head[i]);
            }
        }
        last_loss = epoch_loss / static_cast<double>(seen);
    }

    int correct = 0;
    for (const DatasetItem* item : train) {
        std::vector<double> logits = classify(model, head, item->image);
        int pred = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
        if (pred == class_of(item->identity)) ++correct;
    }

    TrainedModel out;
    out.embedder = std::move(model);
    out.head = std::move(head);
    out.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
    out.final_loss = last_loss;
    return out;
}

namespace {

constexpr char kModelMagic[4] = {'M', 'E', 'M', 'B'};
constexpr std::uint32_t kModelVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
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
            throw FormatError(FormatIssue::truncated, "load_model: truncated file: " + path);
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
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

}  // namespace

void save_model(const Embedder& model, const ClassifierHead& head, const std::string& path) {
    std::string buf;
    buf.append(kModelMagic, 4);
    put_u32(buf, kModelVersion);
    buf.push_back(static_cast<char>(model.arch));
    put_u32(buf, static_cast<std::uint32_t>(model.embed_dim));
    put_u32(buf, static_cast<std::uint32_t>(model.in_c));
    put_u32(buf, static_cast<std::uint32_t>(model.in_h));
    put_u32(buf, static_cast<std::uint32_t>(model.in_w));
    put_u32(buf, static_cast<std::uint32_t>(model.layers.size()));
    for (const LayerDesc& L : model.layers) {
        buf.push_back(static_cast<char>(L.kind));
        put_u32(buf, static_cast<std::uint32_t>(L.in_c));
        put_u32(buf, static_cast<std::uint32_t>(L.in_h));
        put_u32(buf, static_cast<std::uint32_t>(L.in_w));
        put_u32(buf, static_cast<std::uint32_t>(L.out_c));
        put_u32(buf, static_cast<std::uint32_t>(L.out_h));
        put_u32(buf, static_cast<std::uint32_t>(L.out_w));
        put_u32(buf, static_cast<std::uint32_t>(L.pool));
        put_u64(buf, L.w_off);
        put_u64(buf, L.w_len);
        put_u64(buf, L.b_off);
        put_u64(buf, L.b_len);
    }
    put_u32(buf, static_cast<std::uint32_t>(head.n_classes));
    put_u32(buf, static_cast<std::uint32_t>(head.class_identities.size()));
    for (int id : head.class_identities) put_u32(buf, static_cast<std::uint32_t>(id));
    put_u64(buf, model.params.size());
    for (float v : model.params) put_f32(buf, v);
    put_u64(buf, head.weight.size());
    for (float v : head.weight) put_f32(buf, v);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_model: cannot open " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

LoadedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_model: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Reader r{buf, 0, path};
    r.need(4);
    if (std::memcmp(buf.data(), kModelMagic, 4) != 0) {
        throw FormatError(FormatIssue::bad_magic, "load_model: bad magic in " + path);
    }
    r.pos = 4;
    std::uint32_t version = r.u32();
    if (version != kModelVersion) {
        throw FormatError(FormatIssue::version_mismatch,
                          "load_model: unsupported version " + std::to_string(version));
    }

    LoadedModel lm;
    Embedder& m = lm.embedder;
    m.arch = static_cast<Arch>(r.u8());
    m.embed_dim = static_cast<int>(r.u32());
    m.in_c = static_cast<int>(r.u32());
    m.in_h = static_cast<int>(r.u32());
    m.in_w = static_cast<int>(r.u32());
    std::uint32_t n_layers = r.u32();
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        LayerDesc L;
        L.kind = static_cast<LayerKind>(r.u8());
        L.in_c = static_cast<int>(r.u32());
        L.in_h = static_cast<int>(r.u32());
        L.in_w = static_cast<int>(r.u32());
        L.out_c = static_cast<int>(r.u32());
        L.out_h = static_cast<int>(r.u32());
        L.out_w = static_cast<int>(r.u32());
        L.pool = static_cast<int>(r.u32());
        L.w_off = r.u64();
        L.w_len = r.u64();
        L.b_off = r.u64();
        L.b_len = r.u64();
        m.layers.push_back(L);
    }
    lm.head.embed_dim = m.embed_dim;
    lm.head.n_classes = static_cast<int>(r.u32());
    std::uint32_t n_ids = r.u32();
    for (std::uint32_t i = 0; i < n_ids; ++i) {
        lm.head.class_identities.push_back(static_cast<int>(r.u32()));
    }
    std::uint64_t n_params = r.u64();
    m.params.resize(n_params);
    for (std::uint64_t i = 0; i < n_params; ++i) m.params[i] = r.f32();
    std::uint64_t n_head = r.u64();
    lm.head.weight.resize(n_head);
    for (std::uint64_t i = 0; i < n_head; ++i) lm.head.weight[i] = r.f32();
    return lm;
}

}  // namespace muap
