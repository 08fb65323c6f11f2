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

#include "hmimo/hybrid_nn.hpp"
#include "hmimo/signal_model.hpp"

#include <optional>

namespace hmimo
{
    // Fisher information on the first-patch position under the hybrid model, known precision.
    struct FisherInfo
    {
        Eigen::Matrix3d F = Eigen::Matrix3d::Zero();
        Eigen::Matrix3d unit = Eigen::Matrix3d::Zero(); // F / gamma; zero when F was set directly
        double gamma = 0.0;
    };

    struct CrlbValue
    {
        double bound = 0.0;      // trace of the inverse, m^2
        double normalized = 0.0; // bound / ||p||^2
    };

    // Channel stack and its partials with respect to the first-patch coordinates. With a combiner
    // the stack is replaced by H F^T.
    struct ChannelJacobian
    {
        CMat h;
        std::array<CMat, 3> d;
    };
    ChannelJacobian channel_jacobian(const HybridNet &net, const SurfaceGeometry &geom, const Position &p,
                                     const WaveConfig &wave, const Combiner *F = nullptr);

    // Second partials d2[a][b] of the channel stack (symmetric in a, b).
    std::array<std::array<CMat, 3>, 3> channel_hessian(const HybridNet &net, const SurfaceGeometry &geom,
                                                       const Position &p, const WaveConfig &wave,
                                                       const Combiner *F = nullptr);

    // F_ab = 2 gamma Re tr((S dH_a)^H S dH_b).
    FisherInfo fim(const Position &p, const HybridNet &net, const SurfaceGeometry &geom, const CMat &S, double gamma,
                   const WaveConfig &wave, const Combiner *F = nullptr);

    CrlbValue crlb_position(const FisherInfo &fi, const Position &p);

    // -gamma ||Y - S H(p)||^2, constants dropped.
    double log_likelihood(const Position &p, const HybridNet &net, const SurfaceGeometry &geom, const CMat &S,
                          const CMat &Y, double gamma, const WaveConfig &wave, const Combiner *F = nullptr);

    Eigen::Vector3d score(const Position &p, const HybridNet &net, const SurfaceGeometry &geom, const CMat &S,
                          const CMat &Y, double gamma, const WaveConfig &wave, const Combiner *F = nullptr);

    // Hessian of the log-likelihood before the expectation over Y (data terms kept).
    Eigen::Matrix3d log_likelihood_hessian(const Position &p, const HybridNet &net, const SurfaceGeometry &geom,
                                           const CMat &S, const CMat &Y, double gamma, const WaveConfig &wave,
                                           const Combiner *F = nullptr);

} // namespace hmimo
