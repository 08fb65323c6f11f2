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

#include "hmimo/green_channel.hpp"
#include "hmimo/types.hpp"

#include <cstdint>
#include <limits>

namespace hmimo
{
    // QPSK pilots per transmit polarization, each N x L.
    struct PilotBlock
    {
        int N = 0;
        int L = 0;
        CMat sx, sy, sz;

        // 3L x 6N matrix multiplying the stacked channel [H_xx; H_yy; H_zz; H_xy; H_xz; H_yz].
        CMat assemble() const;
    };

    PilotBlock gen_pilots(int N, int L, std::uint64_t seed);

    inline constexpr double noiseless = std::numeric_limits<double>::infinity();

    struct RxSignal
    {
        CMat Y;
        double gamma = 0.0; // noise precision; +inf when noiseless
        bool noisy() const { return std::isfinite(gamma); }
    };

    // Y = S H + W, with the noise precision chosen so that ||S H||^2 / (rows * cols) * gamma equals
    // the requested SNR. snr_db = +inf (hmimo::noiseless) returns Y = S H exactly.
    RxSignal simulate_rx(const CMat &S, const CMat &H, double snr_db, std::uint64_t seed);
    RxSignal simulate_rx(const ChannelTensor &H, const PilotBlock &pilots, double snr_db, std::uint64_t seed);

    // Full-SVD transform: S = U Lambda V, R = U^H Y, Phi = U^H S. All 3L rows are kept so that
    // ||R - Phi H|| = ||Y - S H|| holds for every H.
    struct UnitaryModel
    {
        CMat U;
        CMat Phi;
        CMat R;
        RVec singular_values;
    };

    UnitaryModel unitary_transform(const CMat &S, const CMat &Y);

    struct Combiner
    {
        CMat F; // P x M
        int P() const { return static_cast<int>(F.rows()); }
        int M() const { return static_cast<int>(F.cols()); }

        // blockdiag(F, F, F).
        CMat expanded() const;
    };

    // Random phase-shifter combiner with entries exp(i theta) / sqrt(M). identity = true requires P = M.
    Combiner gen_combiner(int P, int M, std::uint64_t seed, bool identity = false);

    // G_k^T = F H_k^T for every polarization block, i.e. G = H F^T (6N x P).
    CMat combine_channel(const Combiner &F, const CMat &H);

    RxSignal simulate_rx_hybrid(const Combiner &F, const CMat &S, const CMat &H, double snr_db, std::uint64_t seed);

} // namespace hmimo
