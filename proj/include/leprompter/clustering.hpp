#pragma once

#include <utility>
#include <vector>

#include "leprompter/mask.hpp"

namespace leprompter {

struct PixelCluster {
    int label = 0;
    std::vector<Pixel> pixels; // row-major order
};

struct DbscanParams {
    double eps = 1.5;
    int min_pts = 4;

    void validate() const;
};

/// DBSCAN over foreground pixel coordinates with Euclidean distance. A
/// pixel's neighborhood includes itself. Noise pixels belong to no
/// cluster. Clusters are labelled 0.. in order of their first row-major
/// pixel.
std::vector<PixelCluster> dbscan(const BinaryMask& mask, const DbscanParams& params = {});

struct Centroid {
    double x = 0.0;
    double y = 0.0;
};

Centroid centroid(const PixelCluster& cluster);
Centroid centroid(const std::vector<Pixel>& pixels);

struct Extremes {
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;
    friend bool operator==(const Extremes&, const Extremes&) = default;
};

Extremes bounding_extremes(const std::vector<Pixel>& pixels);

/// Union of all cluster pixels, row-major.
std::vector<Pixel> cluster_union(const std::vector<PixelCluster>& clusters);

} // namespace leprompter
