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

#pragma once

#include "hmimo/geometry.hpp"
#include "hmimo/types.hpp"

#include <array>
#include <iosfwd>
#include <vector>

namespace hmimo
{
    // Independent entries of the symmetric 3x3 polarization block, in stacking order.
    enum class Pol : int
    {
        xx = 0,
        yy = 1,
        zz = 2,
        xy = 3,
        xz = 4,
        yz = 5
    };

    inline constexpr int num_pol = 6;

    // (row, col) of each polarization inside the 3x3 block.
    inline constexpr std::array<std::array<int, 2>, num_pol> pol_entry = {{{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}}};

    const char *pol_name(int kappa);

    struct WaveConfig
    {
        double frequency_hz = 0.0;
        double wavelength = 0.0;
        double k0 = 0.0;
        double omega = 0.0;
        cd prefactor{0.0, 0.0}; // i * omega * mu0

        static WaveConfig from_frequency(double frequency_hz);
    };

    // Gauss-Legendre nodes and weights mapped to [-1/2, 1/2]; weights sum to 1.
    class QuadratureRule
    {
    public:
        explicit QuadratureRule(int order = 8);

        int order() const { return static_cast<int>(nodes_.size()); }
        const std::vector<double> &nodes() const { return nodes_; }
        const std::vector<double> &weights() const { return weights_; }

    private:
        std::vector<double> nodes_;
        std::vector<double> weights_;
    };

    using DyadicBlock = Eigen::Matrix3cd;

    cd scalar_green(const Position &rt, const Position &rr, const WaveConfig &wave);

    // g(rt, rr) [c1 I + c2 r r^T], without the i*omega*mu prefactor.
    DyadicBlock dyadic_green(const Position &rt, const Position &rr, const WaveConfig &wave);

    // Dyadic Green's function as a function of the separation d = rt - rr.
    DyadicBlock dyadic_green_separation(double dx, double dy, double dz, const WaveConfig &wave);

    // i*omega*mu times the area integral of the dyadic Green's function over both patches,
    // for a pair whose centers are separated by `rel` (tx center minus rx center).
    DyadicBlock patch_channel_relative(const Position &rel, const SurfaceGeometry &geom, const WaveConfig &wave,
                                       const QuadratureRule &quad);

    DyadicBlock patch_channel(int m, int n, const SurfaceGeometry &geom, const Position &p1, const WaveConfig &wave,
                              const QuadratureRule &quad);

    // Closed-form sinc approximation of the patch channel.
    DyadicBlock approx_channel_relative(const Position &rel, const SurfaceGeometry &geom, const WaveConfig &wave);

    DyadicBlock approx_channel(int m, int n, const SurfaceGeometry &geom, const Position &p1, const WaveConfig &wave);

    // Unnormalized sinc, sin(x)/x.
    double sinc(double x);

    // Six polarization matrices H_k (N x M each, entry (n, m) = h^k_mn).
    struct ChannelTensor
    {
        int N = 0;
        int M = 0;
        std::array<CMat, num_pol> pol;

        ChannelTensor() = default;
        ChannelTensor(int n_tx, int m_rx);

        // [H_xx; H_yy; H_zz; H_xy; H_xz; H_yz], 6N x M.
        CMat stacked() const;
        static ChannelTensor from_stacked(const CMat &h, int n_tx);

        void set_block(int m, int n, const DyadicBlock &block);
        DyadicBlock block(int m, int n) const;
    };

    enum class ChannelModel
    {
        quadrature,
        approximate
    };

    // All M*N blocks. Blocks are cached by relative offset and evaluated across `threads` workers;
    // the result does not depend on the thread count.
    ChannelTensor full_channel(const SurfaceGeometry &geom, const Position &p1, const WaveConfig &wave,
                               const QuadratureRule &quad, int threads = 1);

    ChannelTensor full_channel_approx(const SurfaceGeometry &geom, const Position &p1, const WaveConfig &wave);

    // Number of distinct blocks full_channel evaluates for this geometry.
    int distinct_offsets(const SurfaceGeometry &geom);

    // A two-dimensional sweep of p1: one coordinate is held fixed, the other two span
    // [lo, hi] on a resolution x resolution grid.
    struct FieldPlane
    {
        int fixed_axis = 0; // 0 = x, 1 = y, 2 = z
        double fixed_value = 0.0;
        double u_min = 0.0, u_max = 1.0; // first free axis, in (x, y, z) order
        double v_min = 0.0, v_max = 1.0; // second free axis
        int resolution_u = 2;
        int resolution_v = 2;
    };

    struct FieldSample
    {
        Position p;
        cd raw;
        cd derotated;
    };

    // h^xx_11 over the plane, row-major over (v, u); `derotated` divides out exp(i k0 r_11).
    std::vector<FieldSample> field_dump(const FieldPlane &plane, const SurfaceGeometry &geom, const WaveConfig &wave,
                                        const QuadratureRule &quad);

    void write_field_csv(std::ostream &os, const std::vector<FieldSample> &samples);

} // namespace hmimo
