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

#include "hmimo/green_channel.hpp"
#include "hmimo/parallel.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <utility>

namespace hmimo
{
    const char *pol_name(int kappa)
    {
        static constexpr const char *names[num_pol] = {"xx", "yy", "zz", "xy", "xz", "yz"};
        return names[kappa];
    }

    WaveConfig WaveConfig::from_frequency(double frequency_hz)
    {
        if (!(frequency_hz > 0.0) || !std::isfinite(frequency_hz))
            throw ConfigError("wave: frequency must be positive");
        WaveConfig w;
        w.frequency_hz = frequency_hz;
        w.wavelength = speed_of_light / frequency_hz;
        w.k0 = 2.0 * pi / w.wavelength;
        w.omega = 2.0 * pi * frequency_hz;
        w.prefactor = cd(0.0, w.omega * mu0);
        return w;
    }

    QuadratureRule::QuadratureRule(int order)
    {
        if (order < 2)
            throw ConfigError("quadrature order must be at least 2");
        nodes_.resize(order);
        weights_.resize(order);

        // Newton iteration on the roots of P_order over [-1, 1].
        for (int i = 0; i < order; ++i)
        {
            double x = std::cos(pi * (i + 0.75) / (order + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it)
            {
                double p0 = 1.0, p1 = x;
                for (int k = 2; k <= order; ++k)
                {
                    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = order * (x * p1 - p0) / (x * x - 1.0);
                const double step = p1 / dp;
                x -= step;
                if (std::abs(step) < 1e-16)
                    break;
            }
            // Recompute the derivative at the converged root.
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= order; ++k)
            {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = order * (x * p1 - p0) / (x * x - 1.0);

            // Map [-1, 1] -> [-1/2, 1/2]; the weights then sum to 1.
            nodes_[order - 1 - i] = 0.5 * x;
            weights_[order - 1 - i] = 0.5 * 2.0 / ((1.0 - x * x) * dp * dp);
        }
    }

    double sinc(double x)
    {
        if (std::abs(x) < 1e-8)
            return 1.0 - x * x / 6.0;
        return std::sin(x) / x;
    }

    cd scalar_green(const Position &rt, const Position &rr, const WaveConfig &wave)
    {
        const double r = (rt - rr).norm();
        if (!(r > 0.0))
            throw SingularityError("scalar Green's function evaluated at zero distance");
        return std::polar(1.0 / (4.0 * pi * r), wave.k0 * r);
    }

    namespace
    {
        // Upper triangle of g [c1 I + c2 rhat rhat^T] in Pol order.
        inline void green_entries(double dx, double dy, double dz, double k0, std::array<cd, num_pol> &out)
        {
            const double r2 = dx * dx + dy * dy + dz * dz;
            const double r = std::sqrt(r2);
            const double kr = k0 * r;
            const double inv_kr = 1.0 / kr;
            const double inv_kr2 = inv_kr * inv_kr;
            const cd g = std::polar(1.0 / (4.0 * pi * r), kr);
            const cd c1 = g * cd(1.0 - inv_kr2, inv_kr);
            const cd c2 = g * cd(3.0 * inv_kr2 - 1.0, -3.0 * inv_kr);
            const double ux = dx / r, uy = dy / r, uz = dz / r;
            out[0] = c1 + c2 * (ux * ux);
            out[1] = c1 + c2 * (uy * uy);
            out[2] = c1 + c2 * (uz * uz);
            out[3] = c2 * (ux * uy);
            out[4] = c2 * (ux * uz);
            out[5] = c2 * (uy * uz);
        }

        DyadicBlock block_from_entries(const std::array<cd, num_pol> &e)
        {
            DyadicBlock b;
            for (int k = 0; k < num_pol; ++k)
            {
                b(pol_entry[k][0], pol_entry[k][1]) = e[k];
                b(pol_entry[k][1], pol_entry[k][0]) = e[k];
            }
            return b;
        }
    } // namespace

    DyadicBlock dyadic_green_separation(double dx, double dy, double dz, const WaveConfig &wave)
    {
        if (!(dx * dx + dy * dy + dz * dz > 0.0))
            throw SingularityError("dyadic Green's function evaluated at zero distance");
        std::array<cd, num_pol> e;
        green_entries(dx, dy, dz, wave.k0, e);
        return block_from_entries(e);
    }

    DyadicBlock dyadic_green(const Position &rt, const Position &rr, const WaveConfig &wave)
    {
        const Position d = rt - rr;
        return dyadic_green_separation(d.x, d.y, d.z, wave);
    }

    DyadicBlock patch_channel_relative(const Position &rel, const SurfaceGeometry &geom, const WaveConfig &wave,
                                       const QuadratureRule &quad)
    {
        if (!(rel.z != 0.0))
            throw SingularityError("patch channel requires separated surfaces (z != 0)");
        const auto &t = quad.nodes();
        const auto &w = quad.weights();
        const int q = quad.order();

        // Separation offsets along x and y for every (rx node, tx node) pair, with their weights.
        const int q2 = q * q;
        std::vector<double> off_x(q2), off_y(q2), wt(q2);
        for (int i = 0; i < q; ++i)
            for (int k = 0; k < q; ++k)
            {
                off_x[i * q + k] = rel.x + t[k] * geom.tx_dx - t[i] * geom.rx_dx;
                off_y[i * q + k] = rel.y + t[k] * geom.tx_dy - t[i] * geom.rx_dy;
                wt[i * q + k] = w[i] * w[k];
            }

        std::array<cd, num_pol> acc{};
        std::array<cd, num_pol> e;
        for (int a = 0; a < q2; ++a)
        {
            std::array<cd, num_pol> row{};
            for (int b = 0; b < q2; ++b)
            {
                green_entries(off_x[a], off_y[b], rel.z, wave.k0, e);
                for (int k = 0; k < num_pol; ++k)
                    row[k] += wt[b] * e[k];
            }
            for (int k = 0; k < num_pol; ++k)
                acc[k] += wt[a] * row[k];
        }

        const cd scale = wave.prefactor * (geom.rx_area() * geom.tx_area());
        for (auto &v : acc)
            v *= scale;
        return block_from_entries(acc);
    }

    DyadicBlock patch_channel(int m, int n, const SurfaceGeometry &geom, const Position &p1, const WaveConfig &wave,
                              const QuadratureRule &quad)
    {
        return patch_channel_relative(relative_coords(m, n, geom, p1), geom, wave, quad);
    }

    DyadicBlock approx_channel_relative(const Position &rel, const SurfaceGeometry &geom, const WaveConfig &wave)
    {
        const double r = rel.norm();
        if (!(r > 0.0) || rel.z == 0.0)
            throw SingularityError("approximate channel requires separated surfaces");
        std::array<cd, num_pol> e;
        green_entries(rel.x, rel.y, rel.z, wave.k0, e);
        // x_m^r - x_n^t = -rel.x; sinc is even.
        const double sx = sinc(wave.k0 * rel.x * geom.tx_dx / (2.0 * r));
        const double sy = sinc(wave.k0 * rel.y * geom.tx_dy / (2.0 * r));
        const cd scale = wave.prefactor * (geom.rx_area() * geom.tx_area()) * (sx * sy);
        for (auto &v : e)
            v *= scale;
        return block_from_entries(e);
    }

    DyadicBlock approx_channel(int m, int n, const SurfaceGeometry &geom, const Position &p1, const WaveConfig &wave)
    {
        return approx_channel_relative(relative_coords(m, n, geom, p1), geom, wave);
    }

    ChannelTensor::ChannelTensor(int n_tx, int m_rx) : N(n_tx), M(m_rx)
    {
        for (auto &p : pol)
            p = CMat::Zero(n_tx, m_rx);
    }

    CMat ChannelTensor::stacked() const
    {
        CMat h(num_pol * N, M);
        for (int k = 0; k < num_pol; ++k)
            h.middleRows(k * N, N) = pol[k];
        return h;
    }

    ChannelTensor ChannelTensor::from_stacked(const CMat &h, int n_tx)
    {
        if (n_tx <= 0 || h.rows() != num_pol * n_tx)
            throw RangeError("stacked channel must have 6N rows");
        ChannelTensor t(n_tx, static_cast<int>(h.cols()));
        for (int k = 0; k < num_pol; ++k)
            t.pol[k] = h.middleRows(k * n_tx, n_tx);
        return t;
    }

    void ChannelTensor::set_block(int m, int n, const DyadicBlock &block)
    {
        for (int k = 0; k < num_pol; ++k)
            pol[k](n - 1, m - 1) = block(pol_entry[k][0], pol_entry[k][1]);
    }

    DyadicBlock ChannelTensor::block(int m, int n) const
    {
        DyadicBlock b;
        for (int k = 0; k < num_pol; ++k)
        {
            b(pol_entry[k][0], pol_entry[k][1]) = pol[k](n - 1, m - 1);
            b(pol_entry[k][1], pol_entry[k][0]) = pol[k](n - 1, m - 1);
        }
        return b;
    }

    namespace
    {
        using OffsetKey = std::pair<long long, long long>;

        // Offsets are combinations of patch-size multiples; rounding to 1e-12 m merges
        // mathematically equal offsets that differ in the last bits.
        OffsetKey offset_key(const SurfaceGeometry &geom, int m, int n)
        {
            const GridCell r = grid_cell(m, geom.rx_cols);
            const GridCell t = grid_cell(n, geom.tx_cols);
            const double ox = (t.col - 1) * geom.tx_dx - (r.col - 1) * geom.rx_dx;
            const double oy = (t.row - 1) * geom.tx_dy - (r.row - 1) * geom.rx_dy;
            return {std::llround(ox * 1e12), std::llround(oy * 1e12)};
        }

        struct OffsetTable
        {
            std::vector<std::pair<int, int>> representative; // (m, n) per distinct offset
            std::vector<int> slot;                           // (m - 1) * N + (n - 1) -> distinct index
        };

        OffsetTable build_offsets(const SurfaceGeometry &geom)
        {
            OffsetTable table;
            std::map<OffsetKey, int> index;
            const int M = geom.M(), N = geom.N();
            table.slot.resize(static_cast<std::size_t>(M) * N);
            for (int m = 1; m <= M; ++m)
                for (int n = 1; n <= N; ++n)
                {
                    auto [it, inserted] = index.emplace(offset_key(geom, m, n), static_cast<int>(table.representative.size()));
                    if (inserted)
                        table.representative.emplace_back(m, n);
                    table.slot[static_cast<std::size_t>(m - 1) * N + (n - 1)] = it->second;
                }
            return table;
        }
    } // namespace

    int distinct_offsets(const SurfaceGeometry &geom)
    {
        geom.validate();
        return static_cast<int>(build_offsets(geom).representative.size());
    }

    ChannelTensor full_channel(const SurfaceGeometry &geom, const Position &p1, const WaveConfig &wave,
                               const QuadratureRule &quad, int threads)
    {
        geom.validate();
        const OffsetTable table = build_offsets(geom);
        std::vector<DyadicBlock> blocks(table.representative.size());
        parallel_for(blocks.size(), threads, [&](std::size_t i)
                     {
                         const auto [m, n] = table.representative[i];
                         blocks[i] = patch_channel(m, n, geom, p1, wave, quad); });

        ChannelTensor h(geom.N(), geom.M());
        for (int m = 1; m <= geom.M(); ++m)
            for (int n = 1; n <= geom.N(); ++n)
                h.set_block(m, n, blocks[table.slot[static_cast<std::size_t>(m - 1) * geom.N() + (n - 1)]]);
        return h;
    }

    ChannelTensor full_channel_approx(const SurfaceGeometry &geom, const Position &p1, const WaveConfig &wave)
    {
        geom.validate();
        ChannelTensor h(geom.N(), geom.M());
        for (int m = 1; m <= geom.M(); ++m)
            for (int n = 1; n <= geom.N(); ++n)
                h.set_block(m, n, approx_channel(m, n, geom, p1, wave));
        return h;
    }

    std::vector<FieldSample> field_dump(const FieldPlane &plane, const SurfaceGeometry &geom, const WaveConfig &wave,
                                        const QuadratureRule &quad)
    {
        if (plane.fixed_axis < 0 || plane.fixed_axis > 2)
            throw ConfigError("field dump: fixed axis must be 0, 1 or 2");
        if (plane.resolution_u < 1 || plane.resolution_v < 1)
            throw ConfigError("field dump: resolution must be positive");
        const int au = plane.fixed_axis == 0 ? 1 : 0;
        const int av = plane.fixed_axis == 2 ? 1 : 2;

        auto grid = [](double lo, double hi, int count, int i)
        { return count == 1 ? lo : lo + (hi - lo) * i / (count - 1); };

        std::vector<FieldSample> out;
        out.reserve(static_cast<std::size_t>(plane.resolution_u) * plane.resolution_v);
        for (int j = 0; j < plane.resolution_v; ++j)
            for (int i = 0; i < plane.resolution_u; ++i)
            {
                Position p;
                p[plane.fixed_axis] = plane.fixed_value;
                p[au] = grid(plane.u_min, plane.u_max, plane.resolution_u, i);
                p[av] = grid(plane.v_min, plane.v_max, plane.resolution_v, j);
                const cd raw = patch_channel_relative(p, geom, wave, quad)(0, 0);
                const cd derot = raw * std::polar(1.0, -wave.k0 * p.norm());
                out.push_back({p, raw, derot});
            }
        return out;
    }

    void write_field_csv(std::ostream &os, const std::vector<FieldSample> &samples)
    {
        os << "x,y,z,re_raw,im_raw,re_derot,im_derot\n";
        os << std::setprecision(17);
        for (const auto &s : samples)
            os << s.p.x << ',' << s.p.y << ',' << s.p.z << ',' << s.raw.real() << ',' << s.raw.imag() << ','
               << s.derotated.real() << ',' << s.derotated.imag() << '\n';
        if (!os)
            throw IoError("failed writing field dump CSV");
    }

} // namespace hmimo
