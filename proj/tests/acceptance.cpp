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

// End-to-end acceptance checks at CI scale. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include "hmimo/crlb.hpp"
#include "hmimo/harness.hpp"
#include "hmimo/nnhmp.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

using namespace hmimo;
namespace fs = std::filesystem;

namespace
{
    struct Outcome
    {
        bool pass = false;
        std::string detail;
    };

    class Clock
    {
    public:
        double seconds() const
        {
            return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        }

    private:
        std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
    };

    std::string fmt(const char *f, ...) __attribute__((format(printf, 1, 2)));
    std::string fmt(const char *f, ...)
    {
        char buf[1024];
        va_list ap;
        va_start(ap, f);
        std::vsnprintf(buf, sizeof buf, f, ap);
        va_end(ap);
        return buf;
    }

    Position uniform_in(const CoordinateBox &b, std::mt19937_64 &rng)
    {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        return {b.x_min + (b.x_max - b.x_min) * u(rng), b.y_min + (b.y_max - b.y_min) * u(rng),
                b.z_min + (b.z_max - b.z_min) * u(rng)};
    }

    // Random weights with normalized inputs; smooth enough for finite differences.
    HybridNet random_net(int nh, std::uint64_t seed, const CoordinateBox &box)
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
            net.output_scale[j] = 1e-5;
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

    template <typename A>
    double err_ratio(const A &an, const A &fd)
    {
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < an.size(); ++i)
        {
            num += std::norm(an[i] - fd[i]);
            den += std::norm(fd[i]);
        }
        return std::sqrt(num / den);
    }

    double rel_err(const CMat &a, const CMat &b) { return (a - b).norm() / b.norm(); }
    double rel_err(const RMat &a, const RMat &b) { return (a - b).norm() / b.norm(); }

    bool same_bytes(const fs::path &a, const fs::path &b)
    {
        std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
        if (!fa || !fb)
            return false;
        std::stringstream sa, sb;
        sa << fa.rdbuf();
        sb << fb.rdbuf();
        return !sa.str().empty() && sa.str() == sb.str();
    }

    struct Context
    {
        ExperimentConfig cfg = profile_config("ci");
        WaveConfig wave = WaveConfig::from_frequency(3e9);
        fs::path out_dir;
        std::string cli;
        int threads = 1;
        std::string oracle_path, appmod_path;

        std::optional<TrainSummary> summary;
        std::optional<SurrogatePair> nets_cache;
        std::optional<std::vector<PointResult>> sweep_cache;

        const SurrogatePair &nets()
        {
            if (nets_cache)
                return *nets_cache;
            if (!oracle_path.empty() && !appmod_path.empty())
            {
                nets_cache = SurrogatePair{load_net_file(oracle_path), load_net_file(appmod_path)};
                return *nets_cache;
            }
            const Clock c;
            summary = train_surrogates(cfg, threads);
            std::printf("  trained both surrogates in %.0f s (oracle held-out %.2f dB, closed form vs quadrature %.2f dB)\n",
                        c.seconds(), summary->oracle_holdout_db, summary->appmod_vs_oracle_db);
            save_net_file(summary->nets.oracle, (out_dir / "oracle_net.json").string());
            save_net_file(summary->nets.appmod, (out_dir / "appmod_net.json").string());
            nets_cache = summary->nets;
            return *nets_cache;
        }

        const std::vector<PointResult> &snr_sweep()
        {
            if (sweep_cache)
                return *sweep_cache;
            const SurrogatePair &n = nets();
            const Clock c;
            sweep_cache = sweep(cfg, n, threads);
            std::printf("  SNR sweep (%zu points, %d trials) in %.0f s\n", cfg.sweep_values.size(), cfg.trials,
                        c.seconds());
            std::ofstream os(out_dir / "sweep_snr.csv");
            write_sweep_csv(os, *sweep_cache);
            return *sweep_cache;
        }

        const PointResult &at_snr(double v)
        {
            for (const auto &p : snr_sweep())
                if (p.value == v)
                    return p;
            throw ConfigError("sweep has no point at " + std::to_string(v) + " dB");
        }
    };

    double row_db(const PointResult &p, EstimatorId e) { return p.rows[static_cast<int>(e)].nmse_h_db; }

    // ---- criteria ---------------------------------------------------------------------------

    Outcome surrogate_fidelity(Context &ctx)
    {
        const SurrogatePair &nets = ctx.nets();
        const Clock c;
        const SurfaceGeometry geom = ctx.cfg.largest_geometry();
        const CoordinateBox box = relative_box(geom, ctx.cfg.prior);
        const QuadratureRule quad(ctx.cfg.quadrature_order);
        const int n = 11;
        std::vector<SurrogateSample> grid;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                {
                    const Position rel{box.x_min + (box.x_max - box.x_min) * i / (n - 1),
                                       box.y_min + (box.y_max - box.y_min) * j / (n - 1),
                                       box.z_min + (box.z_max - box.z_min) * k / (n - 1)};
                    SurrogateSample s;
                    s.input = rel;
                    s.target = derotated_target(patch_channel_relative(rel, geom, ctx.wave, quad), rel, ctx.wave);
                    grid.push_back(s);
                }
        const double grid_db = db(surrogate_nmse(nets.oracle, grid));
        Outcome o;
        const double hold_db = ctx.summary ? ctx.summary->oracle_holdout_db : grid_db;
        o.pass = grid_db <= -45.0 && hold_db <= -45.0;
        o.detail = fmt("N_h = %d, held-out %.2f dB, %d^3 grid %.2f dB over the relative box (evaluated in %.1f s)",
                       nets.oracle.hidden_count, hold_db, n, grid_db, c.seconds());
        return o;
    }

    Outcome hidden_sweep(Context &ctx)
    {
        const SurfaceGeometry geom = ctx.cfg.largest_geometry();
        const QuadratureRule quad(ctx.cfg.quadrature_order);
        TrainConfig tc = train_config(ctx.cfg);
        const auto samples = generate_training_set(geom, tc.box, ctx.wave, quad, ctx.cfg.training.samples,
                                                   mix_seed(ctx.cfg.training_seed, 0), ChannelModel::quadrature,
                                                   ctx.threads);
        const auto hold = generate_training_set(geom, tc.box, ctx.wave, quad, ctx.cfg.training.holdout_samples,
                                                mix_seed(ctx.cfg.training_seed, 1), ChannelModel::quadrature,
                                                ctx.threads);
        const std::vector<int> sizes{5, 10, 20, 50, 100};
        std::vector<double> val;
        std::ofstream os(ctx.out_dir / "hidden_sweep.csv");
        os << "hidden_count,validation_nmse_db,holdout_nmse_db,train_s\n";
        for (int nh : sizes)
        {
            const Clock c;
            tc.hidden_count = nh;
            TrainReport rep;
            const HybridNet net = train(samples, tc, ctx.cfg.frequency_hz, &rep);
            const double h = db(surrogate_nmse(net, hold));
            val.push_back(h);
            os << nh << ',' << fmt("%.4f", rep.validation_nmse_db) << ',' << fmt("%.4f", h) << ','
               << fmt("%.1f", c.seconds()) << '\n';
            std::printf("  N_h = %3d: validation %.2f dB, held-out %.2f dB (%.0f s)\n", nh, rep.validation_nmse_db, h,
                        c.seconds());
        }
        Outcome o;
        bool mono = true;
        for (std::size_t i = 1; i < 4; ++i)
            mono = mono && val[i] < val[i - 1];
        const double gain = val[3] - val[4];
        o.pass = mono && gain < 3.0;
        o.detail = fmt("held-out NMSE %.2f, %.2f, %.2f, %.2f, %.2f dB; monotone over 5..50: %s; gain 50 -> 100: %.2f dB",
                       val[0], val[1], val[2], val[3], val[4], mono ? "yes" : "no", gain);
        return o;
    }

    Outcome estimator_ordering(Context &ctx)
    {
        const PointResult &p = ctx.at_snr(8.0);
        const double b = row_db(p, EstimatorId::bound), n = row_db(p, EstimatorId::nnhmp),
                     a = row_db(p, EstimatorId::appmod), l = row_db(p, EstimatorId::ls);
        Outcome o;
        o.pass = b <= n && n < a && n <= l - 10.0 && static_cast<int>(p.trials.size()) >= 20;
        o.detail = fmt("8 dB, %zu trials: bound %.2f, NNHMP %.2f (+-%.2f), AppMod %.2f (+-%.2f), LS %.2f dB", p.trials.size(),
                       b, n, p.rows[1].nmse_h_stderr_db, a, p.rows[2].nmse_h_stderr_db, l);
        return o;
    }

    Outcome crlb_property(Context &ctx)
    {
        const auto &pts = ctx.snr_sweep();
        Outcome o;
        o.pass = true;
        std::string worst;
        double worst_margin = std::numeric_limits<double>::infinity();
        for (const auto &p : pts)
        {
            std::vector<double> se, cr;
            for (const auto &t : p.trials)
                if (t.ok[static_cast<int>(EstimatorId::nnhmp)])
                {
                    se.push_back(t.squared_error_p);
                    cr.push_back(t.crlb);
                }
            if (se.size() < 2)
            {
                o.pass = false;
                continue;
            }
            const double k = static_cast<double>(se.size());
            double mse = 0.0, mc = 0.0;
            for (std::size_t i = 0; i < se.size(); ++i)
            {
                mse += se[i] / k;
                mc += cr[i] / k;
            }
            double var = 0.0;
            for (double v : se)
                var += (v - mse) * (v - mse) / (k - 1.0);
            const double sigma = std::sqrt(var / k);
            const double margin = (mse - (mc - 3.0 * sigma)) / mc;
            if (!(mse >= mc - 3.0 * sigma))
                o.pass = false;
            if (margin < worst_margin)
            {
                worst_margin = margin;
                worst = fmt("%.0f dB: MSE %.3g m^2 vs CRLB %.3g m^2, 3 sigma %.3g", p.value, mse, mc, 3.0 * sigma);
            }
        }

        // Exact precision scaling at every trial location of the sweep.
        const SurfaceGeometry geom = ctx.cfg.geometry;
        const QuadratureRule quad(ctx.cfg.quadrature_order);
        double worst_shift = 0.0;
        for (const auto &t : pts.front().trials)
        {
            const CMat S = gen_pilots(geom.N(), ctx.cfg.L, mix_seed(t.seed, 1)).assemble();
            const FisherInfo lo = fim(t.p, ctx.nets().oracle, geom, S, 1e6, ctx.wave);
            const FisherInfo hi = fim(t.p, ctx.nets().oracle, geom, S, 1e7, ctx.wave);
            const double shift = db(crlb_position(hi, t.p).bound) - db(crlb_position(lo, t.p).bound);
            worst_shift = std::max(worst_shift, std::abs(shift + 10.0));
        }
        // Sweep points are 4 dB apart; 0 and 20 dB share all draws, so their gap must be exactly 20 dB.
        double sweep_shift = 0.0;
        for (std::size_t t = 0; t < pts.front().trials.size(); ++t)
        {
            const double d = db(pts.back().trials[t].crlb) - db(pts.front().trials[t].crlb);
            const double expect = -(pts.back().value - pts.front().value);
            sweep_shift = std::max(sweep_shift, std::abs(d - expect));
        }
        const bool exact = worst_shift < 1e-9 && sweep_shift < 1e-9;
        o.pass = o.pass && exact;
        o.detail = fmt("closest point %s; +10 dB precision shift error %.1e dB, 0 -> 20 dB sweep shift error %.1e dB",
                       worst.c_str(), worst_shift, sweep_shift);
        return o;
    }

    // Identity combiner: the hybrid estimator must replay the full-digital iterations.
    Outcome degenerate_reduction(Context &ctx)
    {
        const SurfaceGeometry geom = ctx.cfg.geometry;
        const QuadratureRule quad(ctx.cfg.quadrature_order);
        const HybridNet &net = ctx.nets().oracle;
        std::mt19937_64 rng(2024);
        const Position truth = uniform_in(ctx.cfg.prior, rng);
        const CMat H = full_channel(geom, truth, ctx.wave, quad).stacked();
        const CMat S = gen_pilots(geom.N(), ctx.cfg.L, 77).assemble();
        const RxSignal rx = simulate_rx(S, H, 8.0, 78);
        EstimatorConfig cfg = ctx.cfg.estimator;
        cfg.record_states = true;
        cfg.tolerance = 0.0;
        const EstimateResult a = nnhmp_estimate(S, rx.Y, net, geom, ctx.wave, cfg);
        const Combiner F = gen_combiner(geom.M(), geom.M(), 0, true);
        const EstimateResult b = nnhmp_hybrid_estimate(S, rx.Y, F, net, geom, ctx.wave, cfg);
        Outcome o;
        if (a.states.size() != b.states.size() || a.states.empty())
        {
            o.detail = fmt("state counts differ: %zu vs %zu", a.states.size(), b.states.size());
            return o;
        }
        double worst = 0.0;
        for (std::size_t i = 0; i < a.states.size(); ++i)
        {
            const auto &x = a.states[i], &y = b.states[i];
            worst = std::max(worst, rel_err(y.H, x.H));
            worst = std::max(worst, rel_err(y.VH, x.VH));
            worst = std::max(worst, (y.p - x.p).norm() / x.p.norm());
            worst = std::max(worst, std::abs(y.gamma - x.gamma) / x.gamma);
            for (int k = 0; k < 3; ++k)
                worst = std::max(worst, std::abs(y.loc[k].var - x.loc[k].var) / x.loc[k].var);
        }
        o.pass = worst <= 1e-6;
        o.detail = fmt("%zu iterations, worst relative difference of (H, V_H, p, gamma, location variances) %.2e",
                       a.states.size(), worst);
        return o;
    }

    Outcome noiseless_oracles(Context &ctx)
    {
        const SurfaceGeometry geom = ctx.cfg.geometry;
        const QuadratureRule quad(ctx.cfg.quadrature_order);
        std::mt19937_64 rng(99);
        const Position truth = uniform_in(ctx.cfg.prior, rng);
        const CMat H = full_channel(geom, truth, ctx.wave, quad).stacked();
        const CMat S = gen_pilots(geom.N(), ctx.cfg.L, 5).assemble();
        const CMat Y = S * H;

        // (a) least squares without noise.
        const CMat ls = ls_estimate(S, Y);
        const double ls_err = rel_err(ls, H);
        const bool a_ok = ls_err < 1e-12;

        // (b) the linear stage from the (0, 1, 0) start lands on the LS solution and stays there.
        // Unit-power channel so the (0, 1) start and the precision are on the scale of the unknown.
        const double rms = std::sqrt(H.squaredNorm() / static_cast<double>(H.size()));
        const CMat Hn = H / rms;
        const CMat lsn = ls_estimate(S, S * Hn);
        const UnitaryModel u = unitary_transform(S, S * Hn);
        const double gamma = 1e10;
        UampState st = UampState::initial(u.Phi.rows(), u.Phi.cols(), Y.cols(), gamma);
        UampOptions opt;
        opt.update_gamma = false;
        uamp_linear_step(u, st, opt);
        const double first = rel_err(st.Q, lsn);
        UampState fp = UampState::initial(u.Phi.rows(), u.Phi.cols(), Y.cols(), gamma);
        fp.H = lsn;
        double drift = 0.0;
        for (int it = 0; it < 50; ++it)
        {
            opt.iteration = it;
            uamp_linear_step(u, fp, opt);
            fp.H = fp.Q;
            fp.VH = fp.VQ;
            drift = std::max(drift, rel_err(fp.Q, lsn));
        }
        const bool b_ok = first < 1e-6 && drift < 1e-6;

        // (c) estimator started at the truth on model-consistent noiseless data.
        const HybridNet &net = ctx.nets().oracle;
        const CMat Hm = hybrid_full_channel(net, geom, truth, ctx.wave);
        EstimatorConfig cfg = ctx.cfg.estimator;
        cfg.init_position = truth;
        const EstimateResult r = nnhmp_estimate(S, S * Hm, net, geom, ctx.wave, cfg);
        const double dist = (r.p - truth).norm();
        const Combiner F = gen_combiner(20, geom.M(), 3);
        const EstimateResult rh = nnhmp_hybrid_estimate(S, S * combine_channel(F, Hm), F, net, geom, ctx.wave, cfg);
        const double dist_h = (rh.p - truth).norm();
        const bool c_ok = dist < 1e-6 && dist_h < 1e-6;

        Outcome o;
        o.pass = a_ok && b_ok && c_ok;
        o.detail = fmt("(a) LS relative error %.1e; (b) first pass vs LS %.1e, 50-pass drift %.1e; "
                       "(c) distance from truth %.1e m full digital, %.1e m with 20 RF chains",
                       ls_err, first, drift, dist, dist_h);
        return o;
    }

    Outcome derivative_suite(Context &ctx)
    {
        const SurfaceGeometry geom = ctx.cfg.geometry;
        const CoordinateBox box = relative_box(geom, ctx.cfg.prior);
        std::mt19937_64 rng(7);
        double worst1 = 0.0, worst2 = 0.0;
        for (int t = 0; t < 100; ++t)
        {
            const HybridNet net = random_net(5 + t % 50, 1000 + t, box);
            const Position p = uniform_in(box, rng);
            const ChannelSecondDerivs s = channel_second_derivs_relative(net, p, ctx.wave);
            std::array<cd, 18> an1, fd1;
            std::array<cd, 54> an2, fd2;
            const double h1 = 1e-6, h2 = 1e-5;
            for (int a = 0; a < 3; ++a)
            {
                Position hi = p, lo = p;
                hi[a] += h1;
                lo[a] -= h1;
                const PolValues fh = hybrid_channel(net, hi, ctx.wave), fl = hybrid_channel(net, lo, ctx.wave);
                Position hi2 = p, lo2 = p;
                hi2[a] += h2;
                lo2[a] -= h2;
                const ChannelDerivs dh = channel_first_derivs_relative(net, hi2, ctx.wave);
                const ChannelDerivs dl = channel_first_derivs_relative(net, lo2, ctx.wave);
                for (int k = 0; k < num_pol; ++k)
                {
                    an1[a * 6 + k] = s.first.dh[k][a];
                    fd1[a * 6 + k] = (fh[k] - fl[k]) / (2 * h1);
                    for (int b = 0; b < 3; ++b)
                    {
                        an2[(a * 3 + b) * 6 + k] = s.d2h[k][b][a];
                        fd2[(a * 3 + b) * 6 + k] = (dh.dh[k][b] - dl.dh[k][b]) / (2 * h2);
                    }
                }
            }
            worst1 = std::max(worst1, err_ratio(an1, fd1));
            worst2 = std::max(worst2, err_ratio(an2, fd2));
        }

        // Empirical score covariance at a trained-surrogate point.
        const HybridNet &net = ctx.nets().oracle;
        const Position p = uniform_in(ctx.cfg.prior, rng);
        const CMat S = gen_pilots(geom.N(), ctx.cfg.L, 31).assemble();
        const CMat SH = S * hybrid_full_channel(net, geom, p, ctx.wave);
        const double gamma = from_db(8.0) * static_cast<double>(SH.size()) / SH.squaredNorm();
        const FisherInfo fi = fim(p, net, geom, S, gamma, ctx.wave);
        std::normal_distribution<double> g(0.0, std::sqrt(0.5 / gamma));
        const int draws = 1000;
        Eigen::Matrix3d C = Eigen::Matrix3d::Zero();
        for (int t = 0; t < draws; ++t)
        {
            CMat Y = SH;
            for (Eigen::Index i = 0; i < Y.size(); ++i)
                Y(i) += cd(g(rng), g(rng));
            const Eigen::Vector3d sc = score(p, net, geom, S, Y, gamma, ctx.wave);
            C += sc * sc.transpose() / draws;
        }
        const double fim_err = (C - fi.F).norm() / fi.F.norm();

        Outcome o;
        o.pass = worst1 < 1e-4 && worst2 < 1e-3 && fim_err < 0.1;
        o.detail = fmt("100 pairs: worst first-derivative error %.1e, second %.1e; score covariance vs FIM %.1f%% over %d draws",
                       worst1, worst2, 100.0 * fim_err, draws);
        return o;
    }

    Outcome quadrature_convergence(Context &ctx)
    {
        const SurfaceGeometry geom = ctx.cfg.geometry;
        const CoordinateBox box = relative_box(geom, ctx.cfg.prior);
        const QuadratureRule q8(8), q16(16);
        std::mt19937_64 rng(8);
        double conv = 0.0, approx = 0.0;
        bool sym = true;
        for (int t = 0; t < 200; ++t)
        {
            Position rel = uniform_in(box, rng);
            const DyadicBlock a = patch_channel_relative(rel, geom, ctx.wave, q8);
            const DyadicBlock b = patch_channel_relative(rel, geom, ctx.wave, q16);
            conv = std::max(conv, (a - b).norm() / b.norm());
            sym = sym && a == a.transpose() && b == b.transpose();
            rel.z = 25.0;
            const DyadicBlock q = patch_channel_relative(rel, geom, ctx.wave, q8);
            const DyadicBlock c = approx_channel_relative(rel, geom, ctx.wave);
            approx = std::max(approx, (c - q).norm() / q.norm());
        }
        const ChannelTensor full = full_channel(geom, {0.2, -0.3, 25.0}, ctx.wave, q8);
        for (int m = 1; m <= geom.M(); ++m)
            for (int n = 1; n <= geom.N(); ++n)
                sym = sym && full.block(m, n) == full.block(m, n).transpose();
        Outcome o;
        o.pass = conv < 1e-8 && sym && approx < 0.05;
        o.detail = fmt("order 8 vs 16 worst %.1e at z in [%.0f, %.0f] m; blocks symmetric: %s; closed form worst %.2f%% at z = 25 m",
                       conv, box.z_min, box.z_max, sym ? "yes" : "no", 100.0 * approx);
        return o;
    }

    Outcome appmod_floor(Context &ctx)
    {
        const auto &pts = ctx.snr_sweep();
        std::map<double, std::pair<double, double>> curve;
        for (const auto &p : pts)
            curve[p.value] = {row_db(p, EstimatorId::nnhmp), row_db(p, EstimatorId::appmod)};
        std::string line;
        for (const auto &[v, c] : curve)
            line += fmt("%s%.0f dB: NNHMP %.2f / AppMod %.2f", line.empty() ? "" : "; ", v, c.first, c.second);
        Outcome o;
        if (!curve.count(12.0) || !curve.count(16.0) || !curve.count(20.0))
        {
            o.detail = "sweep lacks the 12, 16 and 20 dB points";
            return o;
        }
        // AppMod flat above 12 dB; NNHMP still improving there and ending strictly lower.
        double worst_slope = 0.0;
        for (double v : {16.0, 20.0})
            worst_slope = std::max(worst_slope, std::abs(curve[v].second - curve[v - 4.0].second));
        const double nn_gain = curve[12.0].first - curve[20.0].first;
        const double app_gain = curve[12.0].second - curve[20.0].second;
        o.pass = worst_slope < 0.5 && nn_gain > app_gain + 1.0 && curve[20.0].first < curve[20.0].second;
        o.detail = fmt("AppMod worst 4 dB step above 12 dB %.2f dB; gain 12 -> 20 dB NNHMP %.2f, AppMod %.2f (%s)",
                       worst_slope, nn_gain, app_gain, line.c_str());
        return o;
    }

    Outcome reproducibility(Context &ctx)
    {
        const fs::path dir = ctx.out_dir / "repro";
        fs::create_directories(dir);
        {
            std::ofstream os(dir / "tiny.json");
            os << "{\"trials\": 2, \"sweep\": {\"variable\": \"snr\", \"values\": [4.0, 12.0]},"
                  " \"training\": {\"samples\": 2000, \"holdout_samples\": 500, \"hidden_count\": 6, \"epochs\": 3},"
                  " \"paths\": {\"oracle_net\": \""
               << (dir / "a" / "oracle_net.json").string() << "\", \"appmod_net\": \""
               << (dir / "a" / "appmod_net.json").string() << "\"}}";
        }
        const std::string conf = " --config " + (dir / "tiny.json").string();
        auto run = [&](const std::string &args)
        {
            const std::string cmd = ctx.cli + " " + args + " > /dev/null 2>&1";
            return std::system(cmd.c_str()) == 0;
        };
        std::vector<std::string> failures;
        auto twice = [&](const std::string &name, const std::function<std::string(const std::string &)> &args)
        {
            const bool ok = run(args("1")) && run(args("2"));
            if (!ok || !same_bytes(dir / (name + "_1"), dir / (name + "_2")))
                failures.push_back(name);
        };
        fs::create_directories(dir / "a");
        fs::create_directories(dir / "b");
        const bool trained = run("train" + conf + " --out " + (dir / "a").string()) &&
                             run("train" + conf + " --out " + (dir / "b").string());
        if (!trained || !same_bytes(dir / "a" / "oracle_net.json", dir / "b" / "oracle_net.json") ||
            !same_bytes(dir / "a" / "appmod_net.json", dir / "b" / "appmod_net.json"))
            failures.push_back("train");
        twice("sweep.csv", [&](const std::string &k) { return "sweep" + conf + " --out " + (dir / ("sweep.csv_" + k)).string(); });
        twice("point.csv", [&](const std::string &k) { return "point" + conf + " --value 8 --out " + (dir / ("point.csv_" + k)).string(); });
        twice("crlb.csv", [&](const std::string &k) { return "crlb" + conf + " --out " + (dir / ("crlb.csv_" + k)).string(); });
        twice("field.csv", [&](const std::string &k)
              { return "field-dump" + conf + " --resolution 6 --out " + (dir / ("field.csv_" + k)).string(); });
        // Thread count must not change the numbers either.
        if (!run("sweep" + conf + " --threads 3 --out " + (dir / "sweep.csv_t3").string()) ||
            !same_bytes(dir / "sweep.csv_1", dir / "sweep.csv_t3"))
            failures.push_back("sweep with 3 threads");
        Outcome o;
        o.pass = failures.empty();
        std::string f;
        for (const auto &s : failures)
            f += (f.empty() ? "" : ", ") + s;
        o.detail = o.pass ? "train, sweep, point, crlb and field-dump are byte-identical across runs and thread counts"
                          : "differing or failed: " + f;
        return o;
    }

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Acceptance checks at CI scale"};
    Context ctx;
    std::vector<int> only;
    std::string out_dir = "acceptance";
    ctx.cli = HMIMO_CLI_PATH;
    app.add_option("--only", only, "criteria to run (default: all)")->check(CLI::Range(1, 10));
    app.add_option("--out-dir", out_dir, "directory for CSV and network files");
    app.add_option("--threads", ctx.threads, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--oracle-net", ctx.oracle_path, "use this oracle surrogate instead of training");
    app.add_option("--appmod-net", ctx.appmod_path, "use this closed-form surrogate instead of training");
    app.add_option("--cli", ctx.cli, "path of the hmimo executable");
    CLI11_PARSE(app, argc, argv);
    ctx.out_dir = out_dir;
    fs::create_directories(ctx.out_dir);

    const std::vector<std::pair<const char *, std::function<Outcome(Context &)>>> criteria = {
        {"surrogate fidelity", surrogate_fidelity},
        {"hidden-node sweep shape", hidden_sweep},
        {"estimator ordering at 8 dB", estimator_ordering},
        {"position error against the CRLB", crlb_property},
        {"identity-combiner reduction", degenerate_reduction},
        {"noiseless oracles", noiseless_oracles},
        {"derivatives and Fisher information", derivative_suite},
        {"quadrature convergence and symmetry", quadrature_convergence},
        {"closed-form surrogate error floor", appmod_floor},
        {"byte-identical output", reproducibility},
    };
    const std::set<int> wanted(only.begin(), only.end());
    int failed = 0;
    std::vector<std::string> lines;
    for (std::size_t i = 0; i < criteria.size(); ++i)
    {
        const int id = static_cast<int>(i) + 1;
        if (!wanted.empty() && !wanted.count(id))
            continue;
        const Clock c;
        Outcome o;
        try
        {
            o = criteria[i].second(ctx);
        }
        catch (const std::exception &e)
        {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const std::string line = fmt("criterion %2d %s: %s [%.0f s] %s", id, o.pass ? "PASS" : "FAIL",
                                     criteria[i].first, c.seconds(), o.detail.c_str());
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
        lines.push_back(line);
        failed += o.pass ? 0 : 1;
    }
    std::ofstream summary(ctx.out_dir / "summary.txt");
    for (const auto &l : lines)
        summary << l << '\n';
    std::printf("%d of %zu criteria failed\n", failed, lines.size());
    return failed == 0 ? 0 : 1;
}
