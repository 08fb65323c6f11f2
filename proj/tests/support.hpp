// SPDX-License-Identifier: Apache-2.0
//
// hmimo: near-field holographic MIMO channel simulation and estimation
// Copyright (C) 2026 The hmimo authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

// Shared fixtures for the unit tests.
#pragma once

#include "hmimo/hybrid_nn.hpp"

#include <doctest.h>

#include <random>

namespace hmimo::testing
{
    // Purely relative tolerance; doctest's default Approx adds an absolute margin of epsilon.
    inline doctest::Approx rel(double v, double eps) { return doctest::Approx(v).epsilon(eps).scale(0.0); }

    inline SurfaceGeometry ci_geometry() { return {6, 6, 3, 3, 0.05, 0.05, 0.01, 0.01}; }
    inline SurfaceGeometry paper_geometry() { return {10, 10, 5, 5, 0.05, 0.05, 0.01, 0.01}; }
    inline PriorBox default_prior() { return {-1.0, 1.0, -1.0, 1.0, 20.0, 40.0}; }

    // Random weights with inputs normalized over `box`; smooth enough for finite differences.
    inline HybridNet random_net(int nh, std::uint64_t seed, const CoordinateBox &box, double out_scale = 1e-5)
    {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> g(0.0, 1.0);
        HybridNet net = HybridNet::zeros(nh, 3e9);
        for (int h = 0; h < nh; ++h)
        {
            for (int a = 0; a < 3; ++a)
                net.w1(h, a) = g(rng);
            net.b1[h] = g(rng);
            for (int j = 0; j < num_outputs; ++j)
                net.w2(h, j) = g(rng) / std::sqrt(static_cast<double>(nh));
        }
        for (int j = 0; j < num_outputs; ++j)
        {
            net.b2[j] = g(rng);
            net.output_scale[j] = out_scale;
        }
        const double lo[3] = {box.x_min, box.y_min, box.z_min};
        const double hi[3] = {box.x_max, box.y_max, box.z_max};
        for (int a = 0; a < 3; ++a)
        {
            net.input_scale[a] = 2.0 / (hi[a] - lo[a]);
            net.input_offset[a] = -1.0 - lo[a] * net.input_scale[a];
        }
        return net;
    }

    inline Position uniform_in(const CoordinateBox &b, std::mt19937_64 &rng)
    {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        return {b.x_min + (b.x_max - b.x_min) * u(rng), b.y_min + (b.y_max - b.y_min) * u(rng),
                b.z_min + (b.z_max - b.z_min) * u(rng)};
    }

    inline CMat random_cmat(Eigen::Index r, Eigen::Index c, std::uint64_t seed)
    {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> g(0.0, 1.0);
        CMat m(r, c);
        for (Eigen::Index j = 0; j < c; ++j)
            for (Eigen::Index i = 0; i < r; ++i)
                m(i, j) = cd(g(rng), g(rng));
        return m;
    }

    inline double rel_err(const CMat &a, const CMat &b) { return (a - b).norm() / b.norm(); }

} // namespace hmimo::testing
