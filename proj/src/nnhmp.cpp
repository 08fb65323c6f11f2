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

#include "hmimo/nnhmp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <cstdio>
#include <limits>
#include <ostream>

namespace hmimo
{
    namespace
    {
        constexpr double inf = std::numeric_limits<double>::infinity();
        constexpr double nan = std::numeric_limits<double>::quiet_NaN();

        RMat clamp_mat(const RMat &m, const VarianceClamp &c) { return m.unaryExpr([&](double v) { return c(v); }); }

        void check_finite(const CMat &m, const char *what, int iteration)
        {
            if (!m.allFinite())
                throw NumericalError(std::string("non-finite ") + what, iteration);
        }

        void check_finite(const RMat &m, const char *what, int iteration)
        {
            if (!m.allFinite())
                throw NumericalError(std::string("non-finite ") + what, iteration);
        }

        // Patch offset of transmit patch n along an axis; z has none.
        double offset_along(int axis, int n, const SurfaceGeometry &geom)
        {
            if (axis == 2)
                return 0.0;
            const PatchOffset w = patch_offset(n, geom);
            return axis == 0 ? w.dx : w.dy;
        }
    } // namespace

    double nmse(const CMat &estimate, const CMat &truth)
    {
        if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
            throw RangeError("nmse: dimension mismatch");
        return (estimate - truth).squaredNorm() / truth.squaredNorm();
    }

    // ---- UAMP linear stage ------------------------------------------------------------------

    UampState UampState::initial(Eigen::Index rows_obs, Eigen::Index rows_unknown, Eigen::Index cols, double gamma)
    {
        UampState s;
        s.H = CMat::Zero(rows_unknown, cols);
        s.VH = RMat::Ones(rows_unknown, cols);
        s.S = CMat::Zero(rows_obs, cols);
        s.VS = RMat::Ones(rows_obs, cols);
        s.P = CMat::Zero(rows_obs, cols);
        s.VP = RMat::Ones(rows_obs, cols);
        s.Q = CMat::Zero(rows_unknown, cols);
        s.VQ = RMat::Ones(rows_unknown, cols);
        s.gamma = gamma;
        return s;
    }

    void uamp_linear_step(const CMat &Phi, const RMat &Phi_abs2, const CMat &R, UampState &st, const UampOptions &opt)
    {
        const auto &c = opt.clamp;
        st.VP = clamp_mat(Phi_abs2 * st.VH, c);
        st.P = Phi * st.H - (st.VP.cast<cd>().array() * st.S.array()).matrix();
        if (opt.update_gamma)
        {
            const RMat denom = (st.gamma * st.VP.array() + 1.0).matrix();
            const RMat VZ = (st.VP.array() / denom.array()).matrix();
            const CMat Z = ((st.gamma * st.VP.cast<cd>().array() * R.array() + st.P.array()) / denom.cast<cd>().array()).matrix();
            const double total = (R - Z).squaredNorm() + VZ.sum();
            const double numel = static_cast<double>(R.rows() * R.cols());
            double g = numel / total;
            if (!std::isfinite(g) || g > 1.0 / c.min)
                g = 1.0 / c.min;
            st.gamma = std::max(g, 1.0 / c.max);
        }
        st.VS = (1.0 / (st.VP.array() + 1.0 / st.gamma)).matrix();
        st.S = (st.VS.cast<cd>().array() * (R - st.P).array()).matrix();
        st.VQ = clamp_mat((1.0 / (Phi_abs2.transpose() * st.VS).array()).matrix(), c);
        st.Q = st.H + (st.VQ.cast<cd>().array() * (Phi.adjoint() * st.S).array()).matrix();
        check_finite(st.P, "UAMP P", opt.iteration);
        check_finite(st.S, "UAMP S", opt.iteration);
        check_finite(st.Q, "UAMP Q", opt.iteration);
        check_finite(st.VQ, "UAMP V_Q", opt.iteration);
        if (!std::isfinite(st.gamma))
            throw NumericalError("non-finite noise precision", opt.iteration);
    }

    void uamp_linear_step(const UnitaryModel &model, UampState &st, const UampOptions &opt)
    {
        uamp_linear_step(model.Phi, model.Phi.cwiseAbs2(), model.R, st, opt);
    }

    // ---- Taylor linearization ----------------------------------------------------------------

    LinearizationPoint taylor_linearize(const HybridNet &net, const SurfaceGeometry &geom, const Position &p1,
                                        const WaveConfig &wave, double scale)
    {
        if (!p1.finite() || !(p1.z > 0.0))
            throw RangeError("linearization point must be finite with z > 0");
        const int N = geom.N();
        const int M = geom.M();
        LinearizationPoint lin;
        lin.h.resize(num_pol * N, M);
        lin.xi.resize(num_pol * N, M);
        for (auto &d : lin.d)
            d.resize(num_pol * N, M);
        for (auto &a : lin.at)
            a.resize(N);
        const double inv = 1.0 / scale;
        for (int n = 1; n <= N; ++n)
        {
            const PatchOffset w = patch_offset(n, geom);
            const Position xn{p1.x + w.dx, p1.y + w.dy, p1.z};
            lin.at[0][n - 1] = xn.x;
            lin.at[1][n - 1] = xn.y;
            lin.at[2][n - 1] = xn.z;
            for (int m = 1; m <= M; ++m)
            {
                const ChannelDerivs cd_ = channel_first_derivs(net, m, n, geom, xn, wave);
                for (int k = 0; k < num_pol; ++k)
                {
                    const int r = k * N + n - 1;
                    const cd h = cd_.h[k] * inv;
                    const cd dx = cd_.dh[k][0] * inv;
                    const cd dy = cd_.dh[k][1] * inv;
                    const cd dz = cd_.dh[k][2] * inv;
                    lin.h(r, m - 1) = h;
                    lin.d[0](r, m - 1) = dx;
                    lin.d[1](r, m - 1) = dy;
                    lin.d[2](r, m - 1) = dz;
                    lin.xi(r, m - 1) = h - dx * xn.x - dy * xn.y - dz * xn.z;
                }
            }
        }
        return lin;
    }

    // ---- location messages ------------------------------------------------------------------

    void location_forward(int axis, const LinearizationPoint &lin, const CMat &Q, const RMat &VQ,
                          const std::array<EdgeMessages, 3> &backward, const SurfaceGeometry &geom,
                          const VarianceClamp &clamp, AxisMessages &out)
    {
        const int N = geom.N();
        const Eigen::Index rows = lin.h.rows(), cols = lin.h.cols();
        const int b = (axis + 1) % 3, c = (axis + 2) % 3;
        out.forward.mean.resize(rows, cols);
        out.forward.var.resize(rows, cols);
        for (Eigen::Index m = 0; m < cols; ++m)
            for (Eigen::Index r = 0; r < rows; ++r)
            {
                const cd da = lin.d[axis](r, m);
                const double da2 = std::norm(da);
                const cd db = lin.d[b](r, m), dc = lin.d[c](r, m);
                const double var = VQ(r, m) + backward[b].var(r, m) * std::norm(db) + backward[c].var(r, m) * std::norm(dc);
                if (!(da2 > 0.0) || !std::isfinite(var))
                {
                    out.forward.mean(r, m) = 0.0;
                    out.forward.var(r, m) = inf;
                    continue;
                }
                const cd num = Q(r, m) - lin.xi(r, m) - backward[b].mean(r, m) * db - backward[c].mean(r, m) * dc;
                out.forward.mean(r, m) = (num / da).real();
                out.forward.var(r, m) = clamp(var / da2);
            }

        out.patch_forward_mean.resize(N);
        out.patch_forward_var.resize(N);
        std::vector<RealGaussian> to_first(N);
        for (int n = 0; n < N; ++n)
        {
            KahanSum prec, wsum;
            for (int k = 0; k < num_pol; ++k)
                for (Eigen::Index m = 0; m < cols; ++m)
                {
                    const double v = out.forward.var(k * N + n, m);
                    if (!(v < inf))
                        continue;
                    prec.add(1.0 / v);
                    wsum.add(out.forward.mean(k * N + n, m) / v);
                }
            if (prec.value() > 0.0)
            {
                out.patch_forward_var[n] = clamp(1.0 / prec.value());
                out.patch_forward_mean[n] = wsum.value() / prec.value();
            }
            else
            {
                out.patch_forward_var[n] = inf;
                out.patch_forward_mean[n] = 0.0;
            }
            to_first[n] = {out.patch_forward_mean[n] - offset_along(axis, n + 1, geom), out.patch_forward_var[n]};
        }
        out.belief = gaussian_product<double>(std::span<const RealGaussian>(to_first), clamp);
    }

    void location_backward(int axis, const SurfaceGeometry &geom, const VarianceClamp &clamp, AxisMessages &msgs)
    {
        const int N = geom.N();
        const Eigen::Index rows = msgs.forward.mean.rows(), cols = msgs.forward.mean.cols();
        msgs.patch_backward_mean.resize(N);
        msgs.patch_backward_var.resize(N);
        msgs.patch_belief_mean.resize(N);
        msgs.patch_belief_var.resize(N);
        msgs.backward.mean.resize(rows, cols);
        msgs.backward.var.resize(rows, cols);
        for (int n = 0; n < N; ++n)
        {
            const double w = offset_along(axis, n + 1, geom);
            const RealGaussian fwd{msgs.patch_forward_mean[n] - w, msgs.patch_forward_var[n]};
            const RealGaussian ext = extrinsic(msgs.belief, fwd, clamp);
            msgs.patch_backward_mean[n] = ext.mean + w;
            msgs.patch_backward_var[n] = ext.var;
            const RealGaussian bel = gaussian_product(RealGaussian{ext.mean + w, ext.var},
                                                      RealGaussian{msgs.patch_forward_mean[n], msgs.patch_forward_var[n]},
                                                      clamp);
            msgs.patch_belief_mean[n] = bel.mean;
            msgs.patch_belief_var[n] = bel.var;
            for (int k = 0; k < num_pol; ++k)
                for (Eigen::Index m = 0; m < cols; ++m)
                {
                    const Eigen::Index r = k * N + n;
                    const RealGaussian e =
                        extrinsic(bel, RealGaussian{msgs.forward.mean(r, m), msgs.forward.var(r, m)}, clamp);
                    msgs.backward.mean(r, m) = e.mean;
                    msgs.backward.var(r, m) = e.var;
                }
        }
    }

    void channel_prior(const LinearizationPoint &lin, const std::array<EdgeMessages, 3> &backward,
                       const VarianceClamp &clamp, CMat &mean, RMat &var)
    {
        mean = lin.xi;
        var = RMat::Zero(lin.xi.rows(), lin.xi.cols());
        for (int a = 0; a < 3; ++a)
        {
            mean += (backward[a].mean.cast<cd>().array() * lin.d[a].array()).matrix();
            var += (backward[a].var.array() * lin.d[a].cwiseAbs2().array()).matrix();
        }
        var = clamp_mat(var, clamp);
    }

    void channel_belief(const CMat &Q, const RMat &VQ, const CMat &prior_mean, const RMat &prior_var,
                        const VarianceClamp &clamp, CMat &H, RMat &VH)
    {
        const RMat prec = (1.0 / VQ.array() + 1.0 / prior_var.array()).matrix();
        VH = clamp_mat((1.0 / prec.array()).matrix(), clamp);
        H = ((Q.array() / VQ.cast<cd>().array() + prior_mean.array() / prior_var.cast<cd>().array()) /
             prec.cast<cd>().array())
                .matrix();
    }

    // ---- estimators -------------------------------------------------------------------------

    void EstimatorConfig::validate() const
    {
        if (max_iters < 1)
            throw ConfigError("estimator: max_iters must be at least 1");
        if (!(tolerance >= 0.0))
            throw ConfigError("estimator: tolerance must be non-negative");
        if (!(damping > 0.0 && damping <= 1.0))
            throw ConfigError("estimator: damping must lie in (0, 1]");
        if (!(clamp.min > 0.0 && clamp.max > clamp.min))
            throw ConfigError("estimator: invalid variance clamp");
        if (init_grid < 1)
            throw ConfigError("estimator: init grid must have at least one point per axis");
        if (!(init_variance > 0.0))
            throw ConfigError("estimator: init variance must be positive");
        prior.validate();
        if (fixed_gamma && !(*fixed_gamma > 0.0))
            throw ConfigError("estimator: fixed noise precision must be positive");
    }

    CMat ls_estimate(const CMat &S, const CMat &Y)
    {
        if (S.rows() != Y.rows())
            throw RangeError("ls_estimate: dimension mismatch");
        if (S.rows() < S.cols())
            throw RankError("ls_estimate: fewer observations than unknowns");
        Eigen::ColPivHouseholderQR<CMat> qr(S);
        if (qr.rank() < S.cols())
            throw RankError("ls_estimate: S^H S is singular");
        return qr.solve(Y);
    }

    CMat ls_estimate_hybrid(const CMat &S, const CMat &Y, const Combiner &F)
    {
        const CMat G = ls_estimate(S, Y);
        const CMat Fp = F.F.completeOrthogonalDecomposition().pseudoInverse();
        return G * Fp.transpose();
    }

    namespace
    {
        cd inner(const CMat &a, const CMat &b) { return (a.adjoint() * b).trace(); }

        Position clamp_box(Position p, const PriorBox &b)
        {
            p.x = std::clamp(p.x, b.x_min, b.x_max);
            p.y = std::clamp(p.y, b.y_min, b.y_max);
            p.z = std::clamp(p.z, b.z_min, b.z_max);
            return p;
        }
    } // namespace

    namespace
    {
        // Levenberg-Marquardt on the real coordinates; returns the final squared residual.
        double gauss_newton(const CMat &target, const ModelFn &model, const PriorBox &prior, Position &p)
        {
            ModelEval ev = model(p, true);
            double cost = (target - ev.h).squaredNorm();
            double mu = 1e-9;
            for (int it = 0; it < 20; ++it)
            {
                const CMat res = target - ev.h;
                Eigen::Matrix3d A;
                Eigen::Vector3d g;
                for (int a = 0; a < 3; ++a)
                {
                    g[a] = inner(ev.d[a], res).real();
                    for (int b = a; b < 3; ++b)
                        A(a, b) = A(b, a) = inner(ev.d[a], ev.d[b]).real();
                }
                bool accepted = false;
                for (int tries = 0; tries < 8 && !accepted; ++tries)
                {
                    Eigen::Matrix3d Ad = A;
                    for (int a = 0; a < 3; ++a)
                        Ad(a, a) *= 1.0 + mu;
                    const Eigen::Vector3d step = Ad.ldlt().solve(g);
                    if (!step.allFinite())
                        break;
                    const Position cand = clamp_box({p.x + step[0], p.y + step[1], p.z + step[2]}, prior);
                    ModelEval ce = model(cand, true);
                    const double c = (target - ce.h).squaredNorm();
                    if (c < cost)
                    {
                        const double moved = (cand - p).norm();
                        p = cand;
                        ev = std::move(ce);
                        cost = c;
                        mu = std::max(mu * 0.1, 1e-12);
                        accepted = true;
                        if (moved < 1e-9)
                            return cost;
                    }
                    else
                        mu *= 10.0;
                }
                if (!accepted)
                    break;
            }
            return cost;
        }
    } // namespace

    Position initial_location(const CMat &target, const ModelFn &model, const PriorBox &prior, int grid,
                              double wavelength)
    {
        prior.validate();
        auto corr = [&](const Position &p)
        {
            const CMat h = model(p, false).h;
            const double hn = h.squaredNorm();
            return hn > 0.0 ? std::norm(inner(target, h)) / hn : 0.0;
        };
        auto envelope = [&](const Position &p)
        {
            const CMat h = model(p, false).h;
            return h.squaredNorm() - 2.0 * std::abs(inner(target, h));
        };
        auto coord = [&](double lo, double hi, int i) { return grid == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (grid - 1); };

        // Coarse grid on the normalized correlation.
        Position best = clamp_box({0.0, 0.0, 0.5 * (prior.z_min + prior.z_max)}, prior);
        double best_score = -1.0;
        for (int iz = 0; iz < grid; ++iz)
            for (int iy = 0; iy < grid; ++iy)
                for (int ix = 0; ix < grid; ++ix)
                {
                    const Position p{coord(prior.x_min, prior.x_max, ix), coord(prior.y_min, prior.y_max, iy),
                                     coord(prior.z_min, prior.z_max, iz)};
                    const double s = corr(p);
                    if (s > best_score)
                    {
                        best_score = s;
                        best = p;
                    }
                }

        // Direction refinement at fixed range.
        const double gx = grid > 1 ? (prior.x_max - prior.x_min) / (grid - 1) : prior.x_max - prior.x_min;
        const double gy = grid > 1 ? (prior.y_max - prior.y_min) / (grid - 1) : prior.y_max - prior.y_min;
        {
            double sx = 0.5 * gx, sy = 0.5 * gy;
            while (sx > 1e-5 || sy > 1e-5)
            {
                bool moved = false;
                const Position cand[4] = {{best.x + sx, best.y, best.z},
                                          {best.x - sx, best.y, best.z},
                                          {best.x, best.y + sy, best.z},
                                          {best.x, best.y - sy, best.z}};
                for (const auto &c0 : cand)
                {
                    const Position c = clamp_box(c0, prior);
                    const double s = corr(c);
                    if (s > best_score)
                    {
                        best_score = s;
                        best = c;
                        moved = true;
                    }
                }
                if (!moved)
                {
                    sx *= 0.5;
                    sy *= 0.5;
                }
            }
        }

        // Range along the ray from the receiver origin, on the phase-free envelope.
        const Position dir = best * (1.0 / best.z);
        auto on_ray = [&](double z) { return clamp_box(dir * z, prior); };
        double z_env = best.z;
        {
            double e_best = inf;
            const int steps = std::max(2, static_cast<int>(std::ceil((prior.z_max - prior.z_min) / 0.05)));
            for (int i = 0; i <= steps; ++i)
            {
                const double z = prior.z_min + (prior.z_max - prior.z_min) * i / steps;
                const double e = envelope(on_ray(z));
                if (e < e_best)
                {
                    e_best = e;
                    z_env = z;
                }
            }
        }

        // The carrier phase repeats every wavelength in range; refine from half-wavelength spaced starts.
        double cost_best = inf;
        Position out = on_ray(z_env);
        for (int j = -20; j <= 20; ++j)
        {
            const double z = z_env + 0.5 * j * wavelength;
            if (z < prior.z_min || z > prior.z_max)
                continue;
            Position p = on_ray(z);
            const double c = gauss_newton(target, model, prior, p);
            if (c < cost_best)
            {
                cost_best = c;
                out = p;
            }
        }
        return out;
    }

    namespace
    {
        double gamma_from_ls(const CMat &Phi, const CMat &R, const CMat &H_ls, const VarianceClamp &c)
        {
            const double dof = static_cast<double>((Phi.rows() - Phi.cols()) * R.cols());
            const double res = (R - Phi * H_ls).squaredNorm();
            if (dof <= 0.0)
                return 1.0;
            if (!(res > 0.0))
                return 1.0 / c.min;
            return std::min(dof / res, 1.0 / c.min);
        }

        ModelFn full_digital_model(const HybridNet &net, const SurfaceGeometry &geom, const WaveConfig &wave, double c)
        {
            return [&net, &geom, &wave, c](const Position &p, bool jac)
            {
                ModelEval ev;
                if (!jac)
                {
                    ev.h = hybrid_full_channel(net, geom, p, wave) / c;
                    return ev;
                }
                LinearizationPoint lin = taylor_linearize(net, geom, p, wave, c);
                ev.h = std::move(lin.h);
                ev.d = std::move(lin.d);
                return ev;
            };
        }

        ModelFn combined_model(const HybridNet &net, const SurfaceGeometry &geom, const WaveConfig &wave, double c,
                               const CMat &Ft)
        {
            return [&net, &geom, &wave, c, Ft](const Position &p, bool jac)
            {
                ModelEval ev;
                if (!jac)
                {
                    ev.h = hybrid_full_channel(net, geom, p, wave) * Ft / c;
                    return ev;
                }
                const LinearizationPoint lin = taylor_linearize(net, geom, p, wave, c);
                ev.h = lin.h * Ft;
                for (int a = 0; a < 3; ++a)
                    ev.d[a] = lin.d[a] * Ft;
                return ev;
            };
        }

        class LocationEngine
        {
        public:
            LocationEngine(const HybridNet &net, const SurfaceGeometry &geom, const WaveConfig &wave,
                           const EstimatorConfig &cfg, double scale, const Position &init)
                : net_(net), geom_(geom), wave_(wave), cfg_(cfg), scale_(scale), expansion_(init)
            {
                const int N = geom.N(), M = geom.M();
                for (int a = 0; a < 3; ++a)
                {
                    back_[a].mean.resize(num_pol * N, M);
                    back_[a].var = RMat::Constant(num_pol * N, M, cfg.init_variance);
                    for (int n = 1; n <= N; ++n)
                        for (int k = 0; k < num_pol; ++k)
                            back_[a].mean.row(k * N + n - 1).setConstant(init[a] + offset_along(a, n, geom));
                    belief_[a] = {init[a], cfg.init_variance};
                }
            }

            // Linearize, pass location messages on every axis, return the channel prior.
            void update(const CMat &Q, const RMat &VQ, CMat &prior_mean, RMat &prior_var)
            {
                lin_ = taylor_linearize(net_, geom_, expansion_, wave_, scale_);
                for (int a = 0; a < 3; ++a)
                {
                    location_forward(a, lin_, Q, VQ, back_, geom_, cfg_.clamp, axes_[a]);
                    location_backward(a, geom_, cfg_.clamp, axes_[a]);
                    back_[a] = axes_[a].backward;
                    belief_[a] = axes_[a].belief;
                }
                channel_prior(lin_, back_, cfg_.clamp, prior_mean, prior_var);
            }

            // Channel prior implied by the initial location messages.
            void initial_prior(CMat &prior_mean, RMat &prior_var) const
            {
                const LinearizationPoint lin = taylor_linearize(net_, geom_, expansion_, wave_, scale_);
                channel_prior(lin, back_, cfg_.clamp, prior_mean, prior_var);
            }

            Position belief_mean() const { return {belief_[0].mean, belief_[1].mean, belief_[2].mean}; }
            const RealGaussian &belief(int a) const { return belief_[a]; }

            // Next expansion point; returns the distance moved.
            double advance(double beta, bool first)
            {
                const Position target = clamp_box(belief_mean(), cfg_.prior);
                if (!target.finite())
                    return inf;
                const Position next = first ? target : target * beta + expansion_ * (1.0 - beta);
                const double moved = (next - expansion_).norm();
                expansion_ = next;
                return moved;
            }

            const Position &expansion() const { return expansion_; }

        private:
            const HybridNet &net_;
            const SurfaceGeometry &geom_;
            const WaveConfig &wave_;
            const EstimatorConfig &cfg_;
            double scale_;
            Position expansion_;
            LinearizationPoint lin_;
            std::array<EdgeMessages, 3> back_;
            std::array<AxisMessages, 3> axes_;
            std::array<RealGaussian, 3> belief_;
        };

        template <typename A, typename B>
        void damp(A &old_value, const B &new_value, double beta, bool first)
        {
            if (first || beta >= 1.0)
                old_value = new_value;
            else
                old_value = beta * new_value + (1.0 - beta) * old_value;
        }

        struct Prepared
        {
            UnitaryModel um;
            RMat phi_abs2;
            CMat R; // normalized
            CMat ls; // LS of the unknown matrix, physical units
            double scale = 1.0;
            double gamma0 = 1.0; // normalized units
        };

        Prepared prepare(const CMat &S, const CMat &Y, const EstimatorConfig &cfg)
        {
            Prepared p;
            p.um = unitary_transform(S, Y);
            p.phi_abs2 = p.um.Phi.cwiseAbs2();
            p.ls = ls_estimate(p.um.Phi, p.um.R);
            const double rms = std::sqrt(p.ls.squaredNorm() / static_cast<double>(p.ls.size()));
            p.scale = rms > 0.0 ? rms : 1.0;
            p.R = p.um.R / p.scale;
            const CMat ls_n = p.ls / p.scale;
            p.gamma0 = cfg.fixed_gamma ? *cfg.fixed_gamma * p.scale * p.scale : gamma_from_ls(p.um.Phi, p.R, ls_n, cfg.clamp);
            return p;
        }

        TraceRow trace_row(int iter, const Position &p, const CMat &H_norm, const CMat &Phi_unknown, const CMat &R,
                           double gamma_norm, double scale, const EstimatorConfig &cfg, const CMat *truth_view)
        {
            TraceRow row;
            row.iter = iter;
            row.p = p;
            row.gamma_hat = gamma_norm / (scale * scale);
            row.residual = (R - Phi_unknown * H_norm).squaredNorm() / R.squaredNorm();
            row.nmse_h_running = nan;
            if (truth_view && truth_view->rows() == H_norm.rows() && truth_view->cols() == H_norm.cols())
                row.nmse_h_running = nmse(H_norm * scale, *truth_view);
            (void)cfg;
            return row;
        }

        void finish(EstimateResult &res, const LocationEngine &loc, const HybridNet &net, const SurfaceGeometry &geom,
                    const WaveConfig &wave, const PriorBox &prior)
        {
            res.p = loc.belief_mean();
            for (int a = 0; a < 3; ++a)
                res.p_var[a] = loc.belief(a).var;
            const Position recon = clamp_box(res.p, prior);
            res.H = hybrid_full_channel(net, geom, recon, wave);
        }
    } // namespace

    EstimateResult nnhmp_estimate(const CMat &S, const CMat &Y, const HybridNet &net, const SurfaceGeometry &geom,
                                  const WaveConfig &wave, const EstimatorConfig &cfg)
    {
        cfg.validate();
        net.validate();
        if (S.cols() != num_pol * geom.N())
            throw RangeError("pilot matrix does not match the transmit geometry");
        if (Y.cols() != geom.M())
            throw RangeError("observation does not match the receive geometry");

        const Prepared pre = prepare(S, Y, cfg);
        const double c = pre.scale;
        EstimateResult res;
        res.scale = c;
        res.init = cfg.init_position ? *cfg.init_position
                                     : initial_location(pre.ls / c, full_digital_model(net, geom, wave, c), cfg.prior,
                                                        cfg.init_grid, wave.wavelength);

        LocationEngine loc(net, geom, wave, cfg, c, res.init);
        UampState st = UampState::initial(pre.R.rows(), pre.um.Phi.cols(), pre.R.cols(), pre.gamma0);
        if (cfg.warm_start)
            loc.initial_prior(st.H, st.VH);
        UampOptions opt;
        opt.update_gamma = !cfg.fixed_gamma.has_value();
        opt.clamp = cfg.clamp;
        const CMat *truth = cfg.truth.size() ? &cfg.truth : nullptr;

        CMat prior_mean, H_new;
        RMat prior_var, VH_new;
        for (int it = 1; it <= cfg.max_iters; ++it)
        {
            try
            {
                opt.iteration = it;
                uamp_linear_step(pre.um.Phi, pre.phi_abs2, pre.R, st, opt);
                loc.update(st.Q, st.VQ, prior_mean, prior_var);
                channel_belief(st.Q, st.VQ, prior_mean, prior_var, cfg.clamp, H_new, VH_new);
                check_finite(H_new, "channel belief", it);
                const bool first = it == 1;
                damp(st.H, H_new, cfg.damping, first);
                damp(st.VH, VH_new, cfg.damping, first);
                const double moved = loc.advance(cfg.damping, first);
                if (!std::isfinite(moved))
                    throw NumericalError("non-finite location belief", it);

                res.trace.push_back(trace_row(it, loc.belief_mean(), st.H, pre.um.Phi, pre.R, st.gamma, c, cfg, truth));
                if (cfg.record_states)
                    res.states.push_back({st.H, st.VH, loc.belief_mean(), {loc.belief(0), loc.belief(1), loc.belief(2)}, st.gamma});
                res.iterations = it;
                if (!first && moved < cfg.tolerance)
                {
                    res.converged = true;
                    break;
                }
            }
            catch (const NumericalError &e)
            {
                throw EstimatorFailure(e.what(), it, res.trace);
            }
        }
        res.H_belief = st.H * c;
        res.gamma_hat = st.gamma / (c * c);
        finish(res, loc, net, geom, wave, cfg.prior);
        return res;
    }

    namespace
    {
        // Exact Gaussian message through g = F h for every (k, n) row: returns the extrinsic on h.
        void stage2_gaussian(const Combiner &F, const CMat &QG, const RMat &VQG, const CMat &prior_mean,
                             const RMat &prior_var, const VarianceClamp &clamp, CMat &q, RMat &vq)
        {
            const Eigen::Index rows = QG.rows();
            const Eigen::Index M = F.M(), P = F.P();
            q.resize(rows, M);
            vq.resize(rows, M);
            const CMat &Fm = F.F;
            for (Eigen::Index r = 0; r < rows; ++r)
            {
                CMat A = CMat::Zero(M, M);
                CVec b = CVec::Zero(M);
                for (Eigen::Index p = 0; p < P; ++p)
                {
                    const double w = 1.0 / VQG(r, p);
                    A.noalias() += w * Fm.row(p).adjoint() * Fm.row(p);
                    b.noalias() += (w * QG(r, p)) * Fm.row(p).adjoint();
                }
                for (Eigen::Index m = 0; m < M; ++m)
                {
                    A(m, m) += 1.0 / prior_var(r, m);
                    b[m] += prior_mean(r, m) / prior_var(r, m);
                }
                Eigen::LDLT<CMat> ldlt(A);
                if (ldlt.info() != Eigen::Success)
                    throw NumericalError("second-stage factorization failed", 0);
                const CVec mu = ldlt.solve(b);
                const CMat Sigma = ldlt.solve(CMat::Identity(M, M));
                for (Eigen::Index m = 0; m < M; ++m)
                {
                    const ComplexGaussian post{mu[m], Sigma(m, m).real()};
                    const ComplexGaussian pr{prior_mean(r, m), prior_var(r, m)};
                    const ComplexGaussian e = extrinsic(post, pr, clamp);
                    q(r, m) = e.mean;
                    vq(r, m) = e.var;
                }
            }
        }
    } // namespace

    EstimateResult nnhmp_hybrid_estimate(const CMat &S, const CMat &Y, const Combiner &F, const HybridNet &net,
                                         const SurfaceGeometry &geom, const WaveConfig &wave, const EstimatorConfig &cfg)
    {
        cfg.validate();
        net.validate();
        if (S.cols() != num_pol * geom.N())
            throw RangeError("pilot matrix does not match the transmit geometry");
        if (F.M() != geom.M())
            throw RangeError("combiner does not match the receive geometry");
        if (Y.cols() != F.P())
            throw RangeError("observation does not match the combiner");

        const Eigen::Index M = geom.M(), P = F.P();
        const Prepared pre = prepare(S, Y, cfg);
        const double c = pre.scale;
        const CMat Ft = F.F.transpose();
        const RMat F2t = F.F.cwiseAbs2().transpose();

        EstimateResult res;
        res.scale = c;
        res.init = cfg.init_position ? *cfg.init_position
                                     : initial_location(pre.ls / c, combined_model(net, geom, wave, c, Ft), cfg.prior,
                                                        cfg.init_grid, wave.wavelength);

        LocationEngine loc(net, geom, wave, cfg, c, res.init);
        UampState st = UampState::initial(pre.R.rows(), pre.um.Phi.cols(), P, pre.gamma0);
        UampOptions opt;
        opt.update_gamma = !cfg.fixed_gamma.has_value();
        opt.clamp = cfg.clamp;
        const CMat *truth = cfg.truth.size() ? &cfg.truth : nullptr;
        const Eigen::Index rows = pre.um.Phi.cols();

        // Location-side prior on H; uninformative until the first location pass.
        CMat prior_mean = CMat::Zero(rows, M);
        RMat prior_var = RMat::Ones(rows, M);
        CMat H = CMat::Zero(rows, M);
        RMat VH = RMat::Ones(rows, M);
        if (cfg.warm_start)
        {
            loc.initial_prior(prior_mean, prior_var);
            H = prior_mean;
            VH = prior_var;
            st.H = prior_mean * Ft;
            st.VH = clamp_mat(prior_var * F2t, cfg.clamp);
        }

        // Second-stage UAMP quantities (Stage2Mode::uamp).
        CMat UF, UFh, PhiH;
        RMat UF2;
        RMat PhiH2;
        std::vector<CMat> S_H(num_pol);
        CMat PH_stack;
        RMat VPH_stack;
        if (cfg.stage2 == Stage2Mode::uamp)
        {
            Eigen::JacobiSVD<CMat> svd(F.F, Eigen::ComputeThinU | Eigen::ComputeThinV);
            UF = svd.matrixU();
            UF2 = UF.cwiseAbs2();
            UFh = UF.adjoint();
            PhiH = svd.singularValues().cast<cd>().asDiagonal() * svd.matrixV().adjoint();
            PhiH2 = PhiH.cwiseAbs2();
            for (auto &s : S_H)
                s = CMat::Zero(P, geom.N());
        }
        if (cfg.stage2 == Stage2Mode::uamp && cfg.warm_start)
        {
            PH_stack = st.H;
            VPH_stack = st.VH;
        }

        const int N = geom.N();
        CMat q, G_new, H_new;
        RMat vq, VG_new, VH_new;
        for (int it = 1; it <= cfg.max_iters; ++it)
        {
            try
            {
                opt.iteration = it;
                const bool first = it == 1;
                uamp_linear_step(pre.um.Phi, pre.phi_abs2, pre.R, st, opt);

                if (cfg.stage2 == Stage2Mode::gaussian)
                {
                    stage2_gaussian(F, st.Q, st.VQ, prior_mean, prior_var, cfg.clamp, q, vq);
                }
                else
                {
                    q.resize(rows, M);
                    vq.resize(rows, M);
                    PH_stack.resize(rows, P);
                    VPH_stack.resize(rows, P);
                    for (int k = 0; k < num_pol; ++k)
                    {
                        const CMat RG = UFh * st.Q.middleRows(k * N, N).transpose();            // P x N
                        // Pseudo-noise of the stage-1 extrinsic; the belief variance would count the H side twice.
                        const RMat VGk = st.VQ.middleRows(k * N, N).transpose();                  // P x N
                        const CMat Hk = H.middleRows(k * N, N).transpose();                       // M x N
                        const RMat VHk = VH.middleRows(k * N, N).transpose();
                        const RMat VPk = clamp_mat(PhiH2 * VHk, cfg.clamp);
                        const CMat Pk = PhiH * Hk - (VPk.cast<cd>().array() * S_H[k].array()).matrix();
                        const RMat VSk = (1.0 / (VGk.array() + VPk.array())).matrix();
                        S_H[k] = (VSk.cast<cd>().array() * (RG - Pk).array()).matrix();
                        const RMat VQk = clamp_mat((1.0 / (PhiH2.transpose() * VSk).array()).matrix(), cfg.clamp);
                        const CMat Qk = Hk + (VQk.cast<cd>().array() * (PhiH.adjoint() * S_H[k]).array()).matrix();
                        q.middleRows(k * N, N) = Qk.transpose();
                        vq.middleRows(k * N, N) = VQk.transpose();
                        // Back to the combined-channel domain before it meets the stage-1 message.
                        PH_stack.middleRows(k * N, N) = (UF * Pk).transpose();
                        VPH_stack.middleRows(k * N, N) = clamp_mat(UF2 * VPk, cfg.clamp).transpose();
                    }
                }
                check_finite(q, "second-stage message", it);
                check_finite(vq, "second-stage variance", it);

                loc.update(q, vq, prior_mean, prior_var);
                channel_belief(q, vq, prior_mean, prior_var, cfg.clamp, H_new, VH_new);
                check_finite(H_new, "channel belief", it);

                if (cfg.stage2 == Stage2Mode::gaussian)
                {
                    // Message from f_G to G given the location-side prior, then the belief of G.
                    const CMat down_mean = prior_mean * Ft;
                    const RMat down_var = clamp_mat(prior_var * F2t, cfg.clamp);
                    channel_belief(st.Q, st.VQ, down_mean, down_var, cfg.clamp, G_new, VG_new);
                }
                else
                {
                    channel_belief(st.Q, st.VQ, PH_stack, VPH_stack, cfg.clamp, G_new, VG_new);
                }
                check_finite(G_new, "combined-channel belief", it);

                damp(st.H, G_new, cfg.damping, first);
                damp(st.VH, VG_new, cfg.damping, first);
                damp(H, H_new, cfg.damping, first);
                damp(VH, VH_new, cfg.damping, first);
                const double moved = loc.advance(cfg.damping, first);
                if (!std::isfinite(moved))
                    throw NumericalError("non-finite location belief", it);

                res.trace.push_back(trace_row(it, loc.belief_mean(), st.H, pre.um.Phi, pre.R, st.gamma, c, cfg, nullptr));
                if (truth && truth->rows() == H.rows() && truth->cols() == H.cols())
                    res.trace.back().nmse_h_running = nmse(H * c, *truth);
                if (cfg.record_states)
                    res.states.push_back({H, VH, loc.belief_mean(), {loc.belief(0), loc.belief(1), loc.belief(2)}, st.gamma});
                res.iterations = it;
                if (!first && moved < cfg.tolerance)
                {
                    res.converged = true;
                    break;
                }
            }
            catch (const NumericalError &e)
            {
                throw EstimatorFailure(e.what(), it, res.trace);
            }
        }
        res.H_belief = H * c;
        res.gamma_hat = st.gamma / (c * c);
        finish(res, loc, net, geom, wave, cfg.prior);
        return res;
    }

    void write_trace_csv(std::ostream &os, const std::vector<TraceRow> &trace)
    {
        os << "iter,x,y,z,nmse_h_running,gamma_hat,residual\n";
        char buf[256];
        for (const auto &r : trace)
        {
            std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.iter, r.p.x, r.p.y, r.p.z,
                          r.nmse_h_running, r.gamma_hat, r.residual);
            os << buf;
        }
        if (!os)
            throw IoError("failed writing iteration trace");
    }

} // namespace hmimo
