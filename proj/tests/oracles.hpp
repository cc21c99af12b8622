#pragma once
// Brute-force reference implementations used only by tests.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "leprompter/clustering.hpp"
#include "leprompter/mask.hpp"
#include "leprompter/morphology.hpp"
#include "leprompter/params.hpp"
#include "leprompter/prompt_codec.hpp"
#include "leprompter/rng.hpp"
#include "leprompter/tensor.hpp"

namespace oracle {

using namespace leprompter;

inline BinaryMask random_mask(Rng& rng, int w, int h, double density) {
    BinaryMask m(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.set(x, y, rng.uniform() < density);
    return m;
}

// Scatter form of dilation: every foreground q marks q − o for each SE offset o.
inline BinaryMask dilate(const BinaryMask& m, const StructuringElement& se) {
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            if (!m.at(x, y)) continue;
            for (int sy = 0; sy < se.height(); ++sy)
                for (int sx = 0; sx < se.width(); ++sx) {
                    if (!se.at(sx, sy)) continue;
                    const int px = x - (sx - se.anchor_x()), py = y - (sy - se.anchor_y());
                    if (out.in_bounds(px, py)) out.set(px, py, true);
                }
        }
    return out;
}

inline BinaryMask erode(const BinaryMask& m, const StructuringElement& se) {
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            bool all = true;
            for (int sy = 0; sy < se.height() && all; ++sy)
                for (int sx = 0; sx < se.width() && all; ++sx) {
                    if (!se.at(sx, sy)) continue;
                    const int px = x + sx - se.anchor_x(), py = y + sy - se.anchor_y();
                    all = m.in_bounds(px, py) && m.at(px, py);
                }
            out.set(x, y, all);
        }
    return out;
}

/// Partition as a set of sorted pixel-index sets, for comparison up to renaming.
using Partition = std::set<std::vector<int>>;

inline Partition partition_of(const std::vector<PixelCluster>& clusters, int width) {
    Partition p;
    for (const auto& c : clusters) {
        std::vector<int> ids;
        for (const auto& px : c.pixels) ids.push_back(px.y * width + px.x);
        std::sort(ids.begin(), ids.end());
        p.insert(ids);
    }
    return p;
}

/// Textbook O(n²) DBSCAN over the foreground list in row-major order.
inline Partition dbscan(const BinaryMask& m, double eps, int min_pts) {
    std::vector<Pixel> pts;
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m.at(x, y)) pts.push_back({x, y});
    const std::size_t n = pts.size();
    auto neighbors = [&](std::size_t i) {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < n; ++j) {
            const double dx = pts[i].x - pts[j].x, dy = pts[i].y - pts[j].y;
            if (std::sqrt(dx * dx + dy * dy) <= eps) out.push_back(j);
        }
        return out;
    };
    std::vector<int> label(n, -2); // -2 unvisited, -1 noise
    int c = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (label[i] != -2) continue;
        auto nb = neighbors(i);
        if (static_cast<int>(nb.size()) < min_pts) {
            label[i] = -1;
            continue;
        }
        label[i] = c;
        std::vector<std::size_t> seeds(nb.begin(), nb.end());
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            const auto q = seeds[s];
            if (label[q] == -1) label[q] = c;
            if (label[q] != -2) continue;
            label[q] = c;
            auto nq = neighbors(q);
            if (static_cast<int>(nq.size()) >= min_pts) seeds.insert(seeds.end(), nq.begin(), nq.end());
        }
        ++c;
    }
    std::map<int, std::vector<int>> groups;
    for (std::size_t i = 0; i < n; ++i)
        if (label[i] >= 0) groups[label[i]].push_back(pts[i].y * m.width() + pts[i].x);
    Partition p;
    for (auto& [l, ids] : groups) {
        std::sort(ids.begin(), ids.end());
        p.insert(ids);
    }
    return p;
}

/// 8-connected components by recursive-free flood fill.
inline Partition components8(const BinaryMask& m) {
    std::vector<int> seen(m.size(), 0);
    Partition p;
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            if (!m.at(x, y) || seen[y * m.width() + x]) continue;
            std::vector<int> ids;
            std::vector<Pixel> stack{{x, y}};
            seen[y * m.width() + x] = 1;
            while (!stack.empty()) {
                auto q = stack.back();
                stack.pop_back();
                ids.push_back(q.y * m.width() + q.x);
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = q.x + dx, ny = q.y + dy;
                        if (m.in_bounds(nx, ny) && m.at(nx, ny) && !seen[ny * m.width() + nx]) {
                            seen[ny * m.width() + nx] = 1;
                            stack.push_back({nx, ny});
                        }
                    }
            }
            std::sort(ids.begin(), ids.end());
            p.insert(ids);
        }
    return p;
}

/// Foreground pixels with a background (or out-of-image) 4-neighbor.
inline BinaryMask boundary_pixels(const BinaryMask& m) {
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            if (!m.at(x, y)) continue;
            const bool b = !m.get_or_zero(x - 1, y) || !m.get_or_zero(x + 1, y) || !m.get_or_zero(x, y - 1) ||
                           !m.get_or_zero(x, y + 1);
            out.set(x, y, b);
        }
    return out;
}

/// Number of background pixels not 4-reachable from the border.
inline int enclosed_count(const BinaryMask& m) {
    const int w = m.width(), h = m.height();
    std::vector<int> reach(m.size(), 0);
    bool changed = true;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (!m.at(x, y) && (x == 0 || y == 0 || x == w - 1 || y == h - 1)) reach[y * w + x] = 1;
    while (changed) {
        changed = false;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (m.at(x, y) || reach[y * w + x]) continue;
                const int nb[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
                for (auto& d : nb) {
                    const int nx = x + d[0], ny = y + d[1];
                    if (m.in_bounds(nx, ny) && reach[ny * w + nx]) {
                        reach[y * w + x] = 1;
                        changed = true;
                        break;
                    }
                }
            }
    }
    int count = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) count += !m.at(x, y) && !reach[y * w + x];
    return count;
}

// ---- numeric references ----------------------------------------------------

/// Direct nested-loop convolution, zero padding.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* b, int stride, int pad, int groups) {
    const int cin = int(x.dim(0)), h = int(x.dim(1)), wd = int(x.dim(2));
    const int cout = int(w.dim(0)), cin_g = int(w.dim(1)), kh = int(w.dim(2)), kw = int(w.dim(3));
    const int ho = (h + 2 * pad - kh) / stride + 1, wo = (wd + 2 * pad - kw) / stride + 1;
    const int cout_g = cout / groups;
    (void)cin;
    Tensor out({std::size_t(cout), std::size_t(ho), std::size_t(wo)});
    for (int co = 0; co < cout; ++co) {
        const int g = co / cout_g;
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double acc = b ? (*b)[co] : 0.0;
                for (int ci = 0; ci < cin_g; ++ci)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                            if (iy < 0 || ix < 0 || iy >= h || ix >= wd) continue;
                            acc += w.data[((co * cin_g + ci) * kh + ky) * kw + kx] *
                                   x.at(std::size_t(g * cin_g + ci), std::size_t(iy), std::size_t(ix));
                        }
                out.at(std::size_t(co), std::size_t(oy), std::size_t(ox)) = acc;
            }
    }
    return out;
}

/// Bilinear upsampling written from the half-pixel-center definition.
inline Tensor upsample(const Tensor& x, int f) {
    const int c = int(x.dim(0)), h = int(x.dim(1)), w = int(x.dim(2));
    Tensor out({std::size_t(c), std::size_t(h * f), std::size_t(w * f)});
    auto sample = [&](int ch, double sy, double sx) {
        sy = std::clamp(sy, 0.0, double(h - 1));
        sx = std::clamp(sx, 0.0, double(w - 1));
        const int y0 = int(std::floor(sy)), x0 = int(std::floor(sx));
        const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
        const double fy = sy - y0, fx = sx - x0;
        auto v = [&](int yy, int xx) { return x.at(std::size_t(ch), std::size_t(yy), std::size_t(xx)); };
        return (1 - fy) * ((1 - fx) * v(y0, x0) + fx * v(y0, x1)) + fy * ((1 - fx) * v(y1, x0) + fx * v(y1, x1));
    };
    for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < h * f; ++oy)
            for (int ox = 0; ox < w * f; ++ox)
                out.at(std::size_t(ch), std::size_t(oy), std::size_t(ox)) =
                    sample(ch, (oy + 0.5) / f - 0.5, (ox + 0.5) / f - 0.5);
    return out;
}

// Plain row-major matrices for the decoder reference.
struct Mat {
    std::size_t rows = 0, cols = 0;
    std::vector<double> v;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
    double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

inline Mat from_tensor(const Tensor& t) {
    Mat m(t.dim(0), t.size() / t.dim(0));
    m.v = t.data;
    return m;
}

inline Mat affine(const Mat& x, const Tensor& w, const Tensor& b) {
    Mat out(x.rows, w.dim(1));
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < out.cols; ++j) {
            double acc = b[j];
            for (std::size_t k = 0; k < x.cols; ++k) acc += x(i, k) * w.at(k, j);
            out(i, j) = acc;
        }
    return out;
}

inline Mat plus(Mat a, const Mat& b) {
    for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
    return a;
}

inline Mat norm(const Mat& x, const Tensor& g, const Tensor& b) {
    Mat out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        double mu = 0, var = 0;
        for (std::size_t j = 0; j < x.cols; ++j) mu += x(i, j);
        mu /= double(x.cols);
        for (std::size_t j = 0; j < x.cols; ++j) var += (x(i, j) - mu) * (x(i, j) - mu);
        var /= double(x.cols);
        for (std::size_t j = 0; j < x.cols; ++j) out(i, j) = g[j] * (x(i, j) - mu) / std::sqrt(var + 1e-5) + b[j];
    }
    return out;
}

inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
}

inline Mat attend(const ParamStore& ps, const std::string& p, const Mat& qi, const Mat& ki, const Mat& vi, int heads) {
    auto W = [&](const std::string& n) { return ps.value(p + "." + n + ".weight"); };
    auto B = [&](const std::string& n) { return ps.value(p + "." + n + ".bias"); };
    const Mat q = affine(qi, W("q"), B("q")), k = affine(ki, W("k"), B("k")), v = affine(vi, W("v"), B("v"));
    const std::size_t c = q.cols, d = c / std::size_t(heads);
    Mat merged(q.rows, c);
    for (int h = 0; h < heads; ++h) {
        const std::size_t off = std::size_t(h) * d;
        for (std::size_t i = 0; i < q.rows; ++i) {
            std::vector<double> s(k.rows);
            double mx = -1e300;
            for (std::size_t j = 0; j < k.rows; ++j) {
                double dot = 0;
                for (std::size_t t = 0; t < d; ++t) dot += q(i, off + t) * k(j, off + t);
                s[j] = dot / std::sqrt(double(d));
                mx = std::max(mx, s[j]);
            }
            double z = 0;
            for (auto& e : s) z += e = std::exp(e - mx);
            for (std::size_t t = 0; t < d; ++t) {
                double acc = 0;
                for (std::size_t j = 0; j < k.rows; ++j) acc += s[j] / z * v(j, off + t);
                merged(i, off + t) = acc;
            }
        }
    }
    return affine(merged, W("out"), B("out"));
}

/// Reference image-prompt block without sequence reduction. Returns
/// (tokens [N,C], map [C,h,w] flattened as a tensor).
inline std::pair<Tensor, Tensor> iptb(const ParamStore& ps, int block, const Tensor& sparse, const Tensor& dense,
                                      const Tensor& freq, int heads) {
    const std::string p = PromptCodec::block_prefix(block);
    auto G = [&](const std::string& n) { return ps.value(p + n + ".gain"); };
    auto Bn = [&](const std::string& n) { return ps.value(p + n + ".bias"); };
    const std::size_t c = dense.dim(0), h = dense.dim(1), w = dense.dim(2);
    Mat t = from_tensor(sparse);
    Mat img(h * w, c);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h * w; ++i) img(i, ch) = dense.data[ch * h * w + i];
    Mat pe(h * w, c);
    const std::size_t half = c / 2;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double u = 2.0 * (x + 0.5) / double(w) - 1.0, v = 2.0 * (y + 0.5) / double(h) - 1.0;
            for (std::size_t j = 0; j < half; ++j) {
                const double a = 2.0 * M_PI * (u * freq.at(0, j) + v * freq.at(1, j));
                pe(y * w + x, j) = std::sin(a);
                pe(y * w + x, half + j) = std::cos(a);
            }
        }
    Mat a = norm(t, G("norm1"), Bn("norm1"));
    t = plus(t, attend(ps, p + "self_attn", a, a, a, heads));
    const Mat kv = norm(img, G("kv_norm"), Bn("kv_norm"));
    a = norm(t, G("norm2"), Bn("norm2"));
    t = plus(t, attend(ps, p + "cross_t2i", a, plus(kv, pe), kv, heads));
    a = norm(t, G("norm3"), Bn("norm3"));
    Mat hid = affine(a, ps.value(p + "mlp.fc1.weight"), ps.value(p + "mlp.fc1.bias"));
    for (auto& e : hid.v) e = gelu(e);
    t = plus(t, affine(hid, ps.value(p + "mlp.fc2.weight"), ps.value(p + "mlp.fc2.bias")));
    a = norm(img, G("norm4"), Bn("norm4"));
    img = plus(img, attend(ps, p + "cross_i2t", plus(a, pe), t, t, heads));
    Tensor out_t({t.rows, t.cols}, t.v);
    Tensor out_d({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h * w; ++i) out_d.data[ch * h * w + i] = img(i, ch);
    return {out_t, out_d};
}

/// Closed-form prompt parameter count written out term by term.
inline std::size_t prompt_param_count(std::size_t C, std::size_t mlp, std::size_t mask_hidden, std::size_t R) {
    const std::size_t embeddings = 7 * C;                      // query + 6 learned embeddings
    const std::size_t stage1 = 1 * 9 + 1 + mask_hidden * 1 + mask_hidden;
    const std::size_t stage2 = mask_hidden * 9 + mask_hidden + C * mask_hidden + C;
    const std::size_t fuse = C * C * 9 + C;
    const std::size_t attn = 4 * (C * C + C);
    const std::size_t mlp_p = C * mlp + mlp + mlp * C + C;
    const std::size_t norms = 5 * 2 * C;
    const std::size_t sr = R > 1 ? C * C * R * R + C : 0;
    return embeddings + stage1 + stage2 + fuse + 2 * (3 * attn + mlp_p + norms + sr);
}

} // namespace oracle
