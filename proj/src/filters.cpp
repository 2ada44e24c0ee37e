/*
 * respmodel : population-based 4D respiratory motion models
 *
 * Copyright 2026 The respmodel authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "filters.h"

#include <algorithm>
#include <cmath>

namespace respmodel::detail {

namespace {

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double &w : k) {
        w /= sum;
    }
    return k;
}

// One separable pass along `axis`, replicated borders.
template <class T>
std::vector<T> convolve_axis(const GridMeta &m, const std::vector<T> &in, const std::vector<double> &kernel,
                             int axis) {
    const int radius = static_cast<int>(kernel.size() / 2);
    const int n = m.dims[axis];
    const std::size_t stride = axis == 0 ? 1
                               : axis == 1 ? static_cast<std::size_t>(m.dims[0])
                                           : static_cast<std::size_t>(m.dims[0]) * m.dims[1];
    std::vector<T> out(in.size());
    for_each_voxel(m, [&](int i, int j, int k, std::size_t idx) {
        const int pos = axis == 0 ? i : (axis == 1 ? j : k);
        const std::size_t line = idx - static_cast<std::size_t>(pos) * stride;
        T acc{};
        for (int t = -radius; t <= radius; ++t) {
            const int q = std::clamp(pos + t, 0, n - 1);
            acc += in[line + static_cast<std::size_t>(q) * stride] * kernel[t + radius];
        }
        out[idx] = acc;
    });
    return out;
}

template <class T>
std::vector<T> separable(const GridMeta &m, std::vector<T> data, const std::vector<double> &kernel) {
    for (int axis = 0; axis < 3; ++axis) {
        data = convolve_axis(m, data, kernel, axis);
    }
    return data;
}

} // namespace

std::vector<double> gaussian_smooth(const GridMeta &m, const std::vector<double> &data, double sigma) {
    if (sigma <= 0.0) {
        return data;
    }
    return separable(m, data, gaussian_kernel(sigma));
}

std::vector<Vec3> gaussian_smooth(const GridMeta &m, const std::vector<Vec3> &data, double sigma) {
    if (sigma <= 0.0) {
        return data;
    }
    return separable(m, data, gaussian_kernel(sigma));
}

std::vector<Vec3> masked_gaussian_smooth(const GridMeta &m, const std::vector<Vec3> &data,
                                         const std::vector<std::uint8_t> &labels, double sigma) {
    if (sigma <= 0.0) {
        return data;
    }
    const auto kernel = gaussian_kernel(sigma);
    std::vector<Vec3> out(data.size());
    for (std::uint8_t label : {std::uint8_t{0}, std::uint8_t{1}}) {
        std::vector<Vec3> part(data.size());
        std::vector<double> weight(data.size());
        bool any = false;
        for (std::size_t n = 0; n < data.size(); ++n) {
            if (labels[n] == label) {
                part[n] = data[n];
                weight[n] = 1.0;
                any = true;
            }
        }
        if (!any) {
            continue;
        }
        part = separable(m, std::move(part), kernel);
        weight = separable(m, std::move(weight), kernel);
        for (std::size_t n = 0; n < data.size(); ++n) {
            if (labels[n] == label) {
                out[n] = weight[n] > 1e-12 ? part[n] * (1.0 / weight[n]) : data[n];
            }
        }
    }
    return out;
}

std::vector<double> box3(const GridMeta &m, const std::vector<double> &data) {
    return separable(m, data, std::vector<double>{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
}

std::vector<Vec3> image_gradient(const GridMeta &m, const std::vector<double> &data) {
    std::vector<Vec3> g(data.size());
    const std::size_t stride[3] = {1, static_cast<std::size_t>(m.dims[0]),
                                   static_cast<std::size_t>(m.dims[0]) * m.dims[1]};
    for_each_voxel(m, [&](int i, int j, int k, std::size_t n) {
        const int pos[3] = {i, j, k};
        for (int a = 0; a < 3; ++a) {
            const int hi = std::min(pos[a] + 1, m.dims[a] - 1);
            const int lo = std::max(pos[a] - 1, 0);
            const double v_hi = data[n + (hi - pos[a]) * stride[a]];
            const double v_lo = data[n - (pos[a] - lo) * stride[a]];
            g[n][a] = (v_hi - v_lo) / ((hi - lo) * m.spacing[a]);
        }
    });
    return g;
}

} // namespace respmodel::detail
