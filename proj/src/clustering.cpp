#include "leprompter/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

namespace leprompter {

void DbscanParams::validate() const {
    if (!(eps > 0.0)) throw ContractError("DbscanParams: eps must be > 0");
    if (min_pts < 1) throw ContractError("DbscanParams: min_pts must be >= 1");
}

std::vector<PixelCluster> dbscan(const BinaryMask& mask, const DbscanParams& params) {
    params.validate();
    const int w = mask.width();
    const int h = mask.height();
    const int reach = static_cast<int>(std::floor(params.eps));
    const double eps2 = params.eps * params.eps;

    // Window offsets within eps, so neighbor queries never scan the whole mask.
    std::vector<Pixel> offsets;
    for (int dy = -reach; dy <= reach; ++dy) {
        for (int dx = -reach; dx <= reach; ++dx) {
            if (dx * dx + dy * dy <= eps2) offsets.push_back({dx, dy});
        }
    }

    constexpr int kUnvisited = -2;
    constexpr int kNoise = -1;
    std::vector<int> label(mask.size(), kUnvisited);
    auto idx = [w](int x, int y) { return static_cast<std::size_t>(y) * w + x; };

    std::vector<Pixel> neighbors;
    auto region_query = [&](Pixel p) {
        neighbors.clear();
        for (const auto& o : offsets) {
            const int x = p.x + o.x, y = p.y + o.y;
            if (mask.in_bounds(x, y) && mask.at(x, y)) neighbors.push_back({x, y});
        }
    };

    int next_label = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y) || label[idx(x, y)] != kUnvisited) continue;
            region_query({x, y});
            if (static_cast<int>(neighbors.size()) < params.min_pts) {
                label[idx(x, y)] = kNoise;
                continue;
            }
            const int c = next_label++;
            label[idx(x, y)] = c;
            std::deque<Pixel> frontier(neighbors.begin(), neighbors.end());
            while (!frontier.empty()) {
                const Pixel q = frontier.front();
                frontier.pop_front();
                auto& lq = label[idx(q.x, q.y)];
                if (lq == kNoise) lq = c; // border point
                if (lq != kUnvisited) continue;
                lq = c;
                region_query(q);
                if (static_cast<int>(neighbors.size()) >= params.min_pts) {
                    frontier.insert(frontier.end(), neighbors.begin(), neighbors.end());
                }
            }
        }
    }

    std::vector<PixelCluster> clusters(static_cast<std::size_t>(next_label));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int l = label[idx(x, y)];
            if (l >= 0) clusters[static_cast<std::size_t>(l)].pixels.push_back({x, y});
        }
    }
    // Canonical order: by first row-major pixel.
    std::sort(clusters.begin(), clusters.end(), [&](const PixelCluster& a, const PixelCluster& b) {
        return idx(a.pixels.front().x, a.pixels.front().y) < idx(b.pixels.front().x, b.pixels.front().y);
    });
    for (std::size_t i = 0; i < clusters.size(); ++i) clusters[i].label = static_cast<int>(i);
    return clusters;
}

Centroid centroid(const std::vector<Pixel>& pixels) {
    if (pixels.empty()) throw ContractError("centroid of an empty cluster");
    double sx = 0.0, sy = 0.0;
    for (const auto& p : pixels) {
        sx += p.x;
        sy += p.y;
    }
    const auto n = static_cast<double>(pixels.size());
    return {sx / n, sy / n};
}

Centroid centroid(const PixelCluster& cluster) { return centroid(cluster.pixels); }

Extremes bounding_extremes(const std::vector<Pixel>& pixels) {
    if (pixels.empty()) throw ContractError("bounding_extremes of an empty pixel list");
    Extremes e{pixels[0].x, pixels[0].y, pixels[0].x, pixels[0].y};
    for (const auto& p : pixels) {
        e.x_min = std::min(e.x_min, p.x);
        e.y_min = std::min(e.y_min, p.y);
        e.x_max = std::max(e.x_max, p.x);
        e.y_max = std::max(e.y_max, p.y);
    }
    return e;
}

std::vector<Pixel> cluster_union(const std::vector<PixelCluster>& clusters) {
    std::vector<Pixel> all;
    for (const auto& c : clusters) all.insert(all.end(), c.pixels.begin(), c.pixels.end());
    std::sort(all.begin(), all.end(), [](Pixel a, Pixel b) { return a.y != b.y ? a.y < b.y : a.x < b.x; });
    return all;
}

} // namespace leprompter
