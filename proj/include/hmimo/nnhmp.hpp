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

#include "hmimo/gaussian.hpp"
#include "hmimo/geometry.hpp"
#include "hmimo/green_channel.hpp"
#include "hmimo/hybrid_nn.hpp"
#include "hmimo/signal_model.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

namespace hmimo
{
    // ---- UAMP linear stage ------------------------------------------------------------------

    struct UampState
    {
        CMat H;  // belief mean of the unknown (6N x K)
        RMat VH; // belief variance
        CMat S;  // 3L x K
        RMat VS;
        CMat P;
        RMat VP;
        CMat Q; // extrinsic mean passed to the prior side
        RMat VQ;
        double gamma = 1.0;

        // All-zero estimate, unit variances, S = 0.
        static UampState initial(Eigen::Index rows_obs, Eigen::Index rows_unknown, Eigen::Index cols, double gamma);
    };

    struct UampOptions
    {
        bool update_gamma = true;
        VarianceClamp clamp;
        int iteration = 0; // reported in numerical errors
    };

    // One pass of the linear stage: V_P, P, (V_Z, Z, gamma), V_S, S, V_Q, Q.
    void uamp_linear_step(const CMat &Phi, const RMat &Phi_abs2, const CMat &R, UampState &st, const UampOptions &opt);
    void uamp_linear_step(const UnitaryModel &model, UampState &st, const UampOptions &opt = {});

    // ---- Taylor linearization of the hybrid model -------------------------------------------

    // Rows follow the channel stack: row k*N + n - 1, column m - 1.
    struct LinearizationPoint
    {
        CMat h;
        std::array<CMat, 3> d; // partials with respect to x_n, y_n, z_n
        CMat xi;               // h - d_x x_n - d_y y_n - d_z z_n
        std::array<RVec, 3> at; // expansion coordinate of each transmit patch, per axis (length N)
    };

    // Expansion at x_n = p1 + w_n. `scale` divides every channel quantity (normalized units).
    LinearizationPoint taylor_linearize(const HybridNet &net, const SurfaceGeometry &geom, const Position &p1,
                                        const WaveConfig &wave, double scale = 1.0);

    // ---- location messages ------------------------------------------------------------------

    // Per-edge Gaussian messages for one coordinate axis; matrices shaped like the channel stack.
    struct EdgeMessages
    {
        RMat mean;
        RMat var;
    };

    struct AxisMessages
    {
        EdgeMessages forward;          // f_h -> coordinate of patch n, per edge
        RVec patch_forward_mean, patch_forward_var; // product over (m, k), per patch (patch coordinate)
        RealGaussian belief;           // first-patch coordinate
        RVec patch_backward_mean, patch_backward_var; // extrinsic back to each patch (patch coordinate)
        RVec patch_belief_mean, patch_belief_var;
        EdgeMessages backward;         // coordinate of patch n -> f_h, per edge
    };

    // Forward pass for `axis`: pseudo-observations from (Q, V_Q) given the other axes' per-edge
    // backward messages, then products over edges and patches into the first-patch belief.
    void location_forward(int axis, const LinearizationPoint &lin, const CMat &Q, const RMat &VQ,
                          const std::array<EdgeMessages, 3> &backward, const SurfaceGeometry &geom,
                          const VarianceClamp &clamp, AxisMessages &out);

    // Backward pass: extrinsic per patch, offset addition, per-patch belief, per-edge extrinsics.
    void location_backward(int axis, const SurfaceGeometry &geom, const VarianceClamp &clamp, AxisMessages &msgs);

    // Prior on the channel from the location side: mean xi + sum_a a d_a, variance sum_a v_a |d_a|^2.
    void channel_prior(const LinearizationPoint &lin, const std::array<EdgeMessages, 3> &backward,
                       const VarianceClamp &clamp, CMat &mean, RMat &var);

    // Elementwise Gaussian product of (Q, V_Q) and the location prior.
    void channel_belief(const CMat &Q, const RMat &VQ, const CMat &prior_mean, const RMat &prior_var,
                        const VarianceClamp &clamp, CMat &H, RMat &VH);

    // ---- estimators -------------------------------------------------------------------------

    enum class Stage2Mode
    {
        uamp,    // second UAMP stage on the pseudo-observation model
        gaussian // exact Gaussian message through G_k^T = F H_k^T
    };

    struct EstimatorConfig
    {
        int max_iters = 50;
        double tolerance = 1e-6; // meters, change of the location estimate between iterations
        double damping = 0.7;    // weight of the new value; 1 disables damping
        VarianceClamp clamp;
        int init_grid = 9;
        double init_variance = 1e-4; // m^2, variance of the initial location messages
        PriorBox prior{-1.0, 1.0, -1.0, 1.0, 20.0, 40.0};
        std::optional<Position> init_position; // skip the search and start here
        std::optional<double> fixed_gamma;     // physical noise precision; disables re-estimation
        Stage2Mode stage2 = Stage2Mode::gaussian;
        // Start the channel belief from the location prior at the initial point instead of (0, 1).
        bool warm_start = true;
        bool record_states = false;
        CMat truth; // optional true channel, only used for the running NMSE in the trace

        void validate() const;
    };

    struct TraceRow
    {
        int iter = 0;
        Position p;
        double nmse_h_running = 0.0; // NaN without a reference channel
        double gamma_hat = 0.0;
        double residual = 0.0; // ||R - Phi H||^2 / ||R||^2 for the belief mean
    };

    struct IterationState
    {
        CMat H; // belief mean, normalized units
        RMat VH;
        Position p;
        RealGaussian loc[3];
        double gamma = 0.0; // normalized units
    };

    struct EstimateResult
    {
        CMat H;        // reconstructed from the hybrid model at p
        CMat H_belief; // belief means of the last iteration (physical units)
        Position p;
        std::array<double, 3> p_var{};
        Position init;
        double gamma_hat = 0.0; // physical units
        double scale = 1.0;     // normalization applied internally
        int iterations = 0;
        bool converged = false;
        std::vector<TraceRow> trace;
        std::vector<IterationState> states;
    };

    class EstimatorFailure : public NumericalError
    {
    public:
        EstimatorFailure(const std::string &what, int iteration, std::vector<TraceRow> trace)
            : NumericalError(what, iteration), trace_(std::move(trace)) {}
        const std::vector<TraceRow> &trace() const { return trace_; }

    private:
        std::vector<TraceRow> trace_;
    };

    CMat ls_estimate(const CMat &S, const CMat &Y);

    // H_LS^T = F^+ G_LS^T.
    CMat ls_estimate_hybrid(const CMat &S, const CMat &Y, const Combiner &F);

    // Model evaluated at a first-patch position; `d` holds the partials when requested.
    struct ModelEval
    {
        CMat h;
        std::array<CMat, 3> d;
    };
    using ModelFn = std::function<ModelEval(const Position &, bool with_jacobian)>;

    // Start point for the estimator: coarse grid on the normalized correlation with `target`, direction
    // refinement, then multi-start Gauss-Newton on ||target - h(p)||^2 over carrier-cycle candidates
    // along the range.
    Position initial_location(const CMat &target, const ModelFn &model, const PriorBox &prior, int grid,
                              double wavelength);

    // Full-digital estimator on (S, Y) or any (Phi, R) related to it by a unitary left factor.
    EstimateResult nnhmp_estimate(const CMat &S, const CMat &Y, const HybridNet &net, const SurfaceGeometry &geom,
                                  const WaveConfig &wave, const EstimatorConfig &cfg);

    // Hybrid-receiver estimator; Y is 3L x P.
    EstimateResult nnhmp_hybrid_estimate(const CMat &S, const CMat &Y, const Combiner &F, const HybridNet &net,
                                         const SurfaceGeometry &geom, const WaveConfig &wave, const EstimatorConfig &cfg);

    void write_trace_csv(std::ostream &os, const std::vector<TraceRow> &trace);

    double nmse(const CMat &estimate, const CMat &truth);

} // namespace hmimo
