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

#include "hmimo/crlb.hpp"

#include "hmimo/nnhmp.hpp"

#include <Eigen/Eigenvalues>

namespace hmimo
{
    namespace
    {
        double re_inner(const CMat &a, const CMat &b) { return (a.array().conjugate() * b.array()).sum().real(); }

        void check_gamma(double gamma)
        {
            if (!(gamma > 0.0) || !std::isfinite(gamma))
                throw ConfigError("noise precision must be positive and finite");
        }

        CMat combine(const CMat &H, const Combiner *F) { return F ? combine_channel(*F, H) : H; }
    } // namespace

    ChannelJacobian channel_jacobian(const HybridNet &net, const SurfaceGeometry &geom, const Position &p,
                                     const WaveConfig &wave, const Combiner *F)
    {
        net.validate();
        LinearizationPoint lin = taylor_linearize(net, geom, p, wave);
        ChannelJacobian j;
        j.h = combine(lin.h, F);
        for (int a = 0; a < 3; ++a)
            j.d[a] = combine(lin.d[a], F);
        return j;
    }

    std::array<std::array<CMat, 3>, 3> channel_hessian(const HybridNet &net, const SurfaceGeometry &geom,
                                                       const Position &p, const WaveConfig &wave, const Combiner *F)
    {
        net.validate();
        const int N = geom.N();
        const int M = geom.M();
        std::array<std::array<CMat, 3>, 3> out;
        for (auto &row : out)
            for (auto &m : row)
                m = CMat::Zero(num_pol * N, M);
        for (int n = 1; n <= N; ++n)
        {
            const PatchOffset w = patch_offset(n, geom);
            const Position xn{p.x + w.dx, p.y + w.dy, p.z};
            for (int m = 1; m <= M; ++m)
            {
                const ChannelSecondDerivs s = channel_second_derivs(net, m, n, geom, xn, wave);
                for (int k = 0; k < num_pol; ++k)
                    for (int a = 0; a < 3; ++a)
                        for (int b = 0; b < 3; ++b)
                            out[a][b](k * N + n - 1, m - 1) = s.d2h[k][a][b];
            }
        }
        if (F)
            for (auto &row : out)
                for (auto &m : row)
                    m = combine_channel(*F, m);
        return out;
    }

    FisherInfo fim(const Position &p, const HybridNet &net, const SurfaceGeometry &geom, const CMat &S, double gamma,
                   const WaveConfig &wave, const Combiner *F)
    {
        check_gamma(gamma);
        const ChannelJacobian j = channel_jacobian(net, geom, p, wave, F);
        if (S.cols() != j.h.rows())
            throw RangeError("pilot matrix does not match the channel stack");
        std::array<CMat, 3> sd;
        for (int a = 0; a < 3; ++a)
            sd[a] = S * j.d[a];
        FisherInfo fi;
        fi.gamma = gamma;
        for (int a = 0; a < 3; ++a)
            for (int b = a; b < 3; ++b)
                fi.unit(a, b) = fi.unit(b, a) = 2.0 * re_inner(sd[a], sd[b]);
        fi.F = gamma * fi.unit;
        return fi;
    }

    CrlbValue crlb_position(const FisherInfo &fi, const Position &p)
    {
        // Invert the precision-free part so the bound scales as 1/gamma without rounding from the solver.
        const bool factored = fi.gamma > 0.0 && !fi.unit.isZero(0.0);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(factored ? fi.unit : fi.F);
        const Eigen::Vector3d ev = es.eigenvalues();
        const double tol = 1e-12 * std::max(std::abs(ev[2]), std::numeric_limits<double>::min());
        if (!(ev[0] > tol))
            throw SingularityError("Fisher information is singular; position is not identifiable");
        CrlbValue c;
        c.bound = ev.cwiseInverse().sum();
        if (factored)
            c.bound /= fi.gamma;
        const double pn = p.squared_norm();
        c.normalized = pn > 0.0 ? c.bound / pn : std::numeric_limits<double>::infinity();
        return c;
    }

    double log_likelihood(const Position &p, const HybridNet &net, const SurfaceGeometry &geom, const CMat &S,
                          const CMat &Y, double gamma, const WaveConfig &wave, const Combiner *F)
    {
        check_gamma(gamma);
        net.validate();
        const CMat H = combine(hybrid_full_channel(net, geom, p, wave), F);
        return -gamma * (Y - S * H).squaredNorm();
    }

    Eigen::Vector3d score(const Position &p, const HybridNet &net, const SurfaceGeometry &geom, const CMat &S,
                          const CMat &Y, double gamma, const WaveConfig &wave, const Combiner *F)
    {
        check_gamma(gamma);
        const ChannelJacobian j = channel_jacobian(net, geom, p, wave, F);
        const CMat res = Y - S * j.h;
        Eigen::Vector3d g;
        for (int a = 0; a < 3; ++a)
            g[a] = 2.0 * gamma * re_inner(S * j.d[a], res);
        return g;
    }

    Eigen::Matrix3d log_likelihood_hessian(const Position &p, const HybridNet &net, const SurfaceGeometry &geom,
                                           const CMat &S, const CMat &Y, double gamma, const WaveConfig &wave,
                                           const Combiner *F)
    {
        check_gamma(gamma);
        const ChannelJacobian j = channel_jacobian(net, geom, p, wave, F);
        const auto d2 = channel_hessian(net, geom, p, wave, F);
        const CMat res = Y - S * j.h;
        std::array<CMat, 3> sd;
        for (int a = 0; a < 3; ++a)
            sd[a] = S * j.d[a];
        Eigen::Matrix3d Hs;
        for (int a = 0; a < 3; ++a)
            for (int b = a; b < 3; ++b)
                Hs(a, b) = Hs(b, a) = 2.0 * gamma * (re_inner(S * d2[a][b], res) - re_inner(sd[a], sd[b]));
        return Hs;
    }

} // namespace hmimo
