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
#include "hmimo/green_channel.hpp"
#include "hmimo/types.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace hmimo
{
    inline constexpr int num_outputs = 12;

    // Output slots (0-based) holding the real and imaginary part of each polarization.
    inline constexpr std::array<std::array<int, 2>, num_pol> pol_slots = {{{0, 6}, {1, 7}, {2, 8}, {3, 9}, {4, 10}, {5, 11}}};

    inline double tansig(double u) { return std::tanh(u); }

    using NetOutput = std::array<double, num_outputs>;
    using PolValues = std::array<cd, num_pol>;

    // Single-hidden-layer tansig network mapping relative coordinates (x, y, z) to the
    // de-rotated channel. Inputs are mapped affinely to the core (scale * x + offset) and the
    // core output is mapped back (scale * out + offset), so derivatives stay exact.
    struct HybridNet
    {
        int hidden_count = 0;
        RMat w1; // hidden_count x 3
        RVec b1; // hidden_count
        RMat w2; // hidden_count x 12
        RVec b2; // 12
        std::array<double, 3> input_scale{1.0, 1.0, 1.0};
        std::array<double, 3> input_offset{0.0, 0.0, 0.0};
        NetOutput output_scale{};
        NetOutput output_offset{};
        double frequency_hz = 0.0;

        HybridNet() { output_scale.fill(1.0); }
        static HybridNet zeros(int hidden_count, double frequency_hz = 0.0);

        bool trained() const { return hidden_count > 0 && w1.rows() == hidden_count; }
        void validate() const;

        NetOutput forward(double x, double y, double z) const;
        NetOutput forward(const Position &p) const { return forward(p.x, p.y, p.z); }

        // Column-wise evaluation: X is 3 x K raw inputs, result is 12 x K.
        RMat forward_batch(const RMat &X) const;

        // phi^k assembled from the paired output slots.
        PolValues phi(const Position &p) const;
    };

    // h^k = phi^k(x, y, z) exp(i k0 r).
    PolValues hybrid_channel(const HybridNet &net, const Position &rel, const WaveConfig &wave);

    // phi^k_mn(x_n, y_n, z_n) = phi^k(x_n - x_m^r, y_n - y_m^r, z_n).
    NetOutput phi_shifted(const HybridNet &net, int m, int n, const SurfaceGeometry &geom, const Position &tx_patch);

    struct ChannelDerivs
    {
        PolValues h{};
        std::array<std::array<cd, 3>, num_pol> dh{}; // d h^k / d(x, y, z)
        PolValues phi{};
        double r = 0.0;
    };

    struct ChannelSecondDerivs
    {
        ChannelDerivs first;
        std::array<std::array<std::array<cd, 3>, 3>, num_pol> d2h{}; // symmetric in the last two indices
    };

    // Derivatives with respect to the transmit patch coordinates; identical to derivatives with
    // respect to the relative coordinates since the receive patch is fixed.
    ChannelDerivs channel_first_derivs_relative(const HybridNet &net, const Position &rel, const WaveConfig &wave);
    ChannelSecondDerivs channel_second_derivs_relative(const HybridNet &net, const Position &rel, const WaveConfig &wave);

    ChannelDerivs channel_first_derivs(const HybridNet &net, int m, int n, const SurfaceGeometry &geom,
                                       const Position &tx_patch, const WaveConfig &wave);
    ChannelSecondDerivs channel_second_derivs(const HybridNet &net, int m, int n, const SurfaceGeometry &geom,
                                              const Position &tx_patch, const WaveConfig &wave);

    // Channel stack (6N x M) predicted by the hybrid model for first-patch position p1.
    CMat hybrid_full_channel(const HybridNet &net, const SurfaceGeometry &geom, const Position &p1, const WaveConfig &wave);

    // ---- training ---------------------------------------------------------------------------

    struct CoordinateBox
    {
        double x_min = 0.0, x_max = 0.0;
        double y_min = 0.0, y_max = 0.0;
        double z_min = 0.0, z_max = 0.0;

        void validate() const;
        Position lower() const { return {x_min, y_min, z_min}; }
        Position upper() const { return {x_max, y_max, z_max}; }
    };

    // Box of first-patch positions p1 (the estimator prior).
    using PriorBox = CoordinateBox;

    // Every relative coordinate reachable from p1 in `prior` plus the patch offsets.
    CoordinateBox relative_box(const SurfaceGeometry &geom, const PriorBox &prior);

    struct SurrogateSample
    {
        Position input;
        NetOutput target{}; // (Re, Im) of h^k / exp(i k0 r) in slot order
    };

    NetOutput derotated_target(const DyadicBlock &block, const Position &rel, const WaveConfig &wave);

    std::vector<SurrogateSample> generate_training_set(const SurfaceGeometry &geom, const CoordinateBox &box,
                                                       const WaveConfig &wave, const QuadratureRule &quad, int count,
                                                       std::uint64_t seed, ChannelModel model = ChannelModel::quadrature,
                                                       int threads = 1);

    struct TrainConfig
    {
        int hidden_count = 50;
        int epochs = 400;
        int batch_size = 256;
        double learning_rate = 5e-3;       // initial Adam step
        double final_learning_rate = 1e-5; // reached by exponential decay at the last epoch
        double validation_fraction = 0.1;
        int patience = 0; // epochs without validation improvement before stopping; 0 disables
        std::uint64_t seed = 1;
        CoordinateBox box; // input normalization range
    };

    struct TrainReport
    {
        double validation_nmse_db = 0.0;
        double final_train_loss = 0.0;
        int epochs_run = 0;
        int best_epoch = 0;
        std::vector<double> validation_history_db;
    };

    HybridNet train(const std::vector<SurrogateSample> &samples, const TrainConfig &cfg, double frequency_hz,
                    TrainReport *report = nullptr);

    // NMSE (linear) of the complex channel predicted by `net` against sample targets.
    double surrogate_nmse(const HybridNet &net, const std::vector<SurrogateSample> &samples);

    // ---- serialization ----------------------------------------------------------------------

    void save_net(const HybridNet &net, std::ostream &os);
    HybridNet load_net(std::istream &is);
    void save_net_file(const HybridNet &net, const std::string &path);
    HybridNet load_net_file(const std::string &path);

} // namespace hmimo
