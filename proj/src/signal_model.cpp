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

#include "hmimo/signal_model.hpp"

#include <Eigen/SVD>

#include <random>

namespace hmimo
{
    PilotBlock gen_pilots(int N, int L, std::uint64_t seed)
    {
        if (N <= 0 || L <= 0)
            throw ConfigError("pilot dimensions must be positive");
        PilotBlock p;
        p.N = N;
        p.L = L;
        std::mt19937_64 rng(seed);
        const double a = 1.0 / std::sqrt(2.0);
        auto draw = [&](CMat &s)
        {
            s.resize(N, L);
            // Column-major fill keeps the draw order independent of Eigen internals.
            for (int l = 0; l < L; ++l)
                for (int n = 0; n < N; ++n)
                {
                    const std::uint64_t bits = rng();
                    s(n, l) = {(bits & 1) ? a : -a, (bits & 2) ? a : -a};
                }
        };
        draw(p.sx);
        draw(p.sy);
        draw(p.sz);
        return p;
    }

    CMat PilotBlock::assemble() const
    {
        CMat S = CMat::Zero(3 * L, 6 * N);
        const CMat tx = sx.transpose(), ty = sy.transpose(), tz = sz.transpose();
        auto put = [&](int row_block, int col_block, const CMat &b) { S.block(row_block * L, col_block * N, L, N) = b; };
        // Column blocks follow the polarization order xx, yy, zz, xy, xz, yz.
        put(0, 0, tx);
        put(0, 3, ty);
        put(0, 4, tz);
        put(1, 1, ty);
        put(1, 3, tx);
        put(1, 5, tz);
        put(2, 2, tz);
        put(2, 4, tx);
        put(2, 5, ty);
        return S;
    }

    RxSignal simulate_rx(const CMat &S, const CMat &H, double snr_db, std::uint64_t seed)
    {
        if (S.cols() != H.rows())
            throw RangeError("pilot matrix has " + std::to_string(S.cols()) + " columns but channel has " +
                             std::to_string(H.rows()) + " rows");
        RxSignal out;
        out.Y = S * H;
        if (std::isinf(snr_db) && snr_db > 0)
        {
            out.gamma = std::numeric_limits<double>::infinity();
            return out;
        }
        if (!std::isfinite(snr_db))
            throw ConfigError("SNR must be finite or +inf");
        const double entries = static_cast<double>(out.Y.rows() * out.Y.cols());
        const double signal = out.Y.squaredNorm() / entries;
        if (!(signal > 0.0))
            throw ConfigError("received signal has zero power; SNR is undefined");
        const double noise_var = signal / from_db(snr_db);
        out.gamma = 1.0 / noise_var;

        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, std::sqrt(noise_var / 2.0));
        for (Eigen::Index c = 0; c < out.Y.cols(); ++c)
            for (Eigen::Index r = 0; r < out.Y.rows(); ++r)
            {
                const double re = gauss(rng);
                const double im = gauss(rng);
                out.Y(r, c) += cd(re, im);
            }
        return out;
    }

    RxSignal simulate_rx(const ChannelTensor &H, const PilotBlock &pilots, double snr_db, std::uint64_t seed)
    {
        if (H.N != pilots.N)
            throw RangeError("channel and pilots disagree on the transmit patch count");
        return simulate_rx(pilots.assemble(), H.stacked(), snr_db, seed);
    }

    UnitaryModel unitary_transform(const CMat &S, const CMat &Y)
    {
        if (S.rows() != Y.rows())
            throw RangeError("pilot matrix and observation disagree on row count");
        if (S.rows() < S.cols())
            throw RankError("pilot matrix has fewer rows (" + std::to_string(S.rows()) + ") than columns (" +
                            std::to_string(S.cols()) + ")");
        Eigen::BDCSVD<CMat> svd(S, Eigen::ComputeFullU);
        UnitaryModel u;
        u.singular_values = svd.singularValues();
        const double smax = u.singular_values.size() ? u.singular_values[0] : 0.0;
        const double smin = u.singular_values.size() ? u.singular_values[u.singular_values.size() - 1] : 0.0;
        const double tol = std::numeric_limits<double>::epsilon() * static_cast<double>(S.rows()) * smax;
        if (!(smin > tol))
            throw RankError("pilot matrix is rank deficient (smallest singular value " + std::to_string(smin) + ")");
        u.U = svd.matrixU();
        const CMat Uh = u.U.adjoint();
        u.Phi = Uh * S;
        u.R = Uh * Y;
        return u;
    }

    CMat Combiner::expanded() const
    {
        const Eigen::Index p = F.rows(), m = F.cols();
        CMat E = CMat::Zero(3 * p, 3 * m);
        for (int b = 0; b < 3; ++b)
            E.block(b * p, b * m, p, m) = F;
        return E;
    }

    Combiner gen_combiner(int P, int M, std::uint64_t seed, bool identity)
    {
        if (P < 1 || M < 1)
            throw ConfigError("combiner dimensions must be positive");
        if (P > M)
            throw ConfigError("combiner needs P <= M (got P = " + std::to_string(P) + ", M = " + std::to_string(M) + ")");
        Combiner c;
        if (identity)
        {
            if (P != M)
                throw ConfigError("identity combiner requires P = M");
            c.F = CMat::Identity(M, M);
            return c;
        }
        c.F.resize(P, M);
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> theta(0.0, 2.0 * pi);
        const double s = 1.0 / std::sqrt(static_cast<double>(M));
        for (int p = 0; p < P; ++p)
            for (int m = 0; m < M; ++m)
                c.F(p, m) = std::polar(s, theta(rng));
        return c;
    }

    CMat combine_channel(const Combiner &F, const CMat &H)
    {
        if (H.cols() != F.M())
            throw RangeError("channel has " + std::to_string(H.cols()) + " receive columns but combiner expects " +
                             std::to_string(F.M()));
        return H * F.F.transpose();
    }

    RxSignal simulate_rx_hybrid(const Combiner &F, const CMat &S, const CMat &H, double snr_db, std::uint64_t seed)
    {
        return simulate_rx(S, combine_channel(F, H), snr_db, seed);
    }

} // namespace hmimo
