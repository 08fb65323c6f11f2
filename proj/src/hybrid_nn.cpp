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

#include "hmimo/hybrid_nn.hpp"
#include "hmimo/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace hmimo
{
    HybridNet HybridNet::zeros(int hidden_count, double frequency_hz)
    {
        if (hidden_count <= 0)
            throw ConfigError("hidden_count must be positive");
        HybridNet net;
        net.hidden_count = hidden_count;
        net.w1 = RMat::Zero(hidden_count, 3);
        net.b1 = RVec::Zero(hidden_count);
        net.w2 = RMat::Zero(hidden_count, num_outputs);
        net.b2 = RVec::Zero(num_outputs);
        net.output_offset.fill(0.0);
        net.frequency_hz = frequency_hz;
        return net;
    }

    void HybridNet::validate() const
    {
        if (!trained())
            throw ConfigError("surrogate network is untrained");
        if (w1.rows() != hidden_count || w1.cols() != 3 || b1.size() != hidden_count || w2.rows() != hidden_count ||
            w2.cols() != num_outputs || b2.size() != num_outputs)
            throw ConfigError("surrogate network has inconsistent dimensions");
        const bool finite = w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
        bool maps_ok = true;
        for (int a = 0; a < 3; ++a)
            maps_ok = maps_ok && std::isfinite(input_scale[a]) && input_scale[a] != 0.0 && std::isfinite(input_offset[a]);
        for (int j = 0; j < num_outputs; ++j)
            maps_ok = maps_ok && std::isfinite(output_scale[j]) && output_scale[j] >= 0.0 && std::isfinite(output_offset[j]);
        if (!finite || !maps_ok)
            throw ConfigError("surrogate network has non-finite or degenerate parameters");
    }

    namespace
    {
        // Hidden pre-activations for one input in raw coordinates.
        RVec hidden_input(const HybridNet &net, double x, double y, double z)
        {
            const double u0 = net.input_scale[0] * x + net.input_offset[0];
            const double u1 = net.input_scale[1] * y + net.input_offset[1];
            const double u2 = net.input_scale[2] * z + net.input_offset[2];
            return net.w1.col(0) * u0 + net.w1.col(1) * u1 + net.w1.col(2) * u2 + net.b1;
        }

        PolValues assemble(const NetOutput &out)
        {
            PolValues v;
            for (int k = 0; k < num_pol; ++k)
                v[k] = {out[pol_slots[k][0]], out[pol_slots[k][1]]};
            return v;
        }
    } // namespace

    NetOutput HybridNet::forward(double x, double y, double z) const
    {
        NetOutput out{};
        if (hidden_count == 0)
            return out;
        RVec a = hidden_input(*this, x, y, z);
        for (int h = 0; h < hidden_count; ++h)
            a[h] = tansig(a[h]);
        const RVec core = w2.transpose() * a + b2;
        for (int j = 0; j < num_outputs; ++j)
            out[j] = output_scale[j] * core[j] + output_offset[j];
        return out;
    }

    RMat HybridNet::forward_batch(const RMat &X) const
    {
        if (hidden_count == 0)
            return RMat::Zero(num_outputs, X.cols());
        RMat U(3, X.cols());
        for (int a = 0; a < 3; ++a)
            U.row(a) = (X.row(a).array() * input_scale[a] + input_offset[a]).matrix();
        const RMat A = ((w1 * U).colwise() + b1).array().tanh().matrix();
        RMat out = (w2.transpose() * A).colwise() + b2;
        for (int j = 0; j < num_outputs; ++j)
            out.row(j) = (out.row(j).array() * output_scale[j] + output_offset[j]).matrix();
        return out;
    }

    PolValues HybridNet::phi(const Position &p) const { return assemble(forward(p)); }

    PolValues hybrid_channel(const HybridNet &net, const Position &rel, const WaveConfig &wave)
    {
        const double r = rel.norm();
        const cd rot = std::polar(1.0, wave.k0 * r);
        PolValues h = net.phi(rel);
        for (auto &v : h)
            v *= rot;
        return h;
    }

    NetOutput phi_shifted(const HybridNet &net, int m, int n, const SurfaceGeometry &geom, const Position &tx_patch)
    {
        const Position rx = patch_center(m, Side::rx, geom, {});
        if (n < 1 || n > geom.N())
            throw RangeError("transmit patch index out of range");
        return net.forward(tx_patch.x - rx.x, tx_patch.y - rx.y, tx_patch.z);
    }

    namespace
    {
        struct CoreGrad
        {
            NetOutput out{};
            std::array<NetOutput, 3> d{};
            std::array<std::array<NetOutput, 3>, 3> dd{};
        };

        // Raw outputs and their derivatives with respect to raw inputs.
        CoreGrad core_derivatives(const HybridNet &net, const Position &p, bool second)
        {
            CoreGrad g;
            const RVec c = hidden_input(net, p.x, p.y, p.z);
            const int nh = net.hidden_count;
            RVec a(nh), g1(nh), g2(nh);
            for (int h = 0; h < nh; ++h)
            {
                a[h] = tansig(c[h]);
                g1[h] = 1.0 - a[h] * a[h];
                g2[h] = 2.0 * a[h] * (a[h] * a[h] - 1.0);
            }
            const RVec core = net.w2.transpose() * a + net.b2;
            for (int j = 0; j < num_outputs; ++j)
                g.out[j] = net.output_scale[j] * core[j] + net.output_offset[j];

            for (int ax = 0; ax < 3; ++ax)
            {
                const RVec t = g1.cwiseProduct(net.w1.col(ax)) * net.input_scale[ax];
                const RVec dj = net.w2.transpose() * t;
                for (int j = 0; j < num_outputs; ++j)
                    g.d[ax][j] = net.output_scale[j] * dj[j];
            }
            if (!second)
                return g;
            for (int ax = 0; ax < 3; ++ax)
                for (int bx = ax; bx < 3; ++bx)
                {
                    const RVec t = g2.cwiseProduct(net.w1.col(ax).cwiseProduct(net.w1.col(bx))) *
                                   (net.input_scale[ax] * net.input_scale[bx]);
                    const RVec dj = net.w2.transpose() * t;
                    for (int j = 0; j < num_outputs; ++j)
                    {
                        g.dd[ax][bx][j] = net.output_scale[j] * dj[j];
                        g.dd[bx][ax][j] = g.dd[ax][bx][j];
                    }
                }
            return g;
        }

        ChannelSecondDerivs derivs_impl(const HybridNet &net, const Position &rel, const WaveConfig &wave, bool second)
        {
            ChannelSecondDerivs out;
            ChannelDerivs &f = out.first;
            const CoreGrad cg = core_derivatives(net, rel, second);
            const double r = rel.norm();
            if (!(r > 0.0))
                throw SingularityError("zero separation in channel derivative");
            const double k = wave.k0;
            const cd rot = std::polar(1.0, k * r);
            const cd ik(0.0, k);
            const std::array<double, 3> dr{rel.x / r, rel.y / r, rel.z / r};
            f.r = r;

            for (int kap = 0; kap < num_pol; ++kap)
            {
                const int s1 = pol_slots[kap][0];
                const int s2 = pol_slots[kap][1];
                const cd phi(cg.out[s1], cg.out[s2]);
                f.phi[kap] = phi;
                f.h[kap] = phi * rot;
                std::array<cd, 3> dphi;
                for (int ax = 0; ax < 3; ++ax)
                {
                    dphi[ax] = {cg.d[ax][s1], cg.d[ax][s2]};
                    f.dh[kap][ax] = (dphi[ax] + ik * phi * dr[ax]) * rot;
                }
                if (!second)
                    continue;
                for (int ax = 0; ax < 3; ++ax)
                    for (int bx = ax; bx < 3; ++bx)
                    {
                        const cd d2phi(cg.dd[ax][bx][s1], cg.dd[ax][bx][s2]);
                        const double d2r = ((ax == bx ? 1.0 : 0.0) - dr[ax] * dr[bx]) / r;
                        const cd v = (d2phi + ik * (dphi[ax] * dr[bx] + dphi[bx] * dr[ax] + phi * d2r) -
                                      k * k * phi * dr[ax] * dr[bx]) *
                                     rot;
                        out.d2h[kap][ax][bx] = v;
                        out.d2h[kap][bx][ax] = v;
                    }
            }
            return out;
        }

        Position shifted_rel(int m, int n, const SurfaceGeometry &geom, const Position &tx_patch)
        {
            if (n < 1 || n > geom.N())
                throw RangeError("transmit patch index out of range");
            const Position rx = patch_center(m, Side::rx, geom, {});
            return {tx_patch.x - rx.x, tx_patch.y - rx.y, tx_patch.z};
        }
    } // namespace

    ChannelDerivs channel_first_derivs_relative(const HybridNet &net, const Position &rel, const WaveConfig &wave)
    {
        return derivs_impl(net, rel, wave, false).first;
    }

    ChannelSecondDerivs channel_second_derivs_relative(const HybridNet &net, const Position &rel, const WaveConfig &wave)
    {
        return derivs_impl(net, rel, wave, true);
    }

    ChannelDerivs channel_first_derivs(const HybridNet &net, int m, int n, const SurfaceGeometry &geom,
                                       const Position &tx_patch, const WaveConfig &wave)
    {
        return channel_first_derivs_relative(net, shifted_rel(m, n, geom, tx_patch), wave);
    }

    ChannelSecondDerivs channel_second_derivs(const HybridNet &net, int m, int n, const SurfaceGeometry &geom,
                                              const Position &tx_patch, const WaveConfig &wave)
    {
        return channel_second_derivs_relative(net, shifted_rel(m, n, geom, tx_patch), wave);
    }

    CMat hybrid_full_channel(const HybridNet &net, const SurfaceGeometry &geom, const Position &p1, const WaveConfig &wave)
    {
        const int N = geom.N();
        const int M = geom.M();
        RMat X(3, N * M);
        for (int n = 1; n <= N; ++n)
            for (int m = 1; m <= M; ++m)
            {
                const Position rel = relative_coords(m, n, geom, p1);
                const int col = (n - 1) * M + (m - 1);
                X(0, col) = rel.x;
                X(1, col) = rel.y;
                X(2, col) = rel.z;
            }
        const RMat out = net.forward_batch(X);
        CMat h(num_pol * N, M);
        for (int n = 1; n <= N; ++n)
            for (int m = 1; m <= M; ++m)
            {
                const int col = (n - 1) * M + (m - 1);
                const cd rot = std::polar(1.0, wave.k0 * X.col(col).norm());
                for (int k = 0; k < num_pol; ++k)
                    h(k * N + n - 1, m - 1) = cd(out(pol_slots[k][0], col), out(pol_slots[k][1], col)) * rot;
            }
        return h;
    }

    // ---- training ---------------------------------------------------------------------------

    void CoordinateBox::validate() const
    {
        const bool ok = x_max > x_min && y_max > y_min && z_max > z_min;
        const bool finite = std::isfinite(x_min) && std::isfinite(x_max) && std::isfinite(y_min) &&
                            std::isfinite(y_max) && std::isfinite(z_min) && std::isfinite(z_max);
        if (!ok || !finite)
            throw ConfigError("coordinate box has an empty range");
        if (!(z_min > 0.0))
            throw ConfigError("coordinate box must lie in z > 0");
    }

    CoordinateBox relative_box(const SurfaceGeometry &geom, const PriorBox &prior)
    {
        prior.validate();
        CoordinateBox b;
        b.x_min = prior.x_min - geom.rx_span_x();
        b.x_max = prior.x_max + geom.tx_span_x();
        b.y_min = prior.y_min - geom.rx_span_y();
        b.y_max = prior.y_max + geom.tx_span_y();
        b.z_min = prior.z_min;
        b.z_max = prior.z_max;
        return b;
    }

    NetOutput derotated_target(const DyadicBlock &block, const Position &rel, const WaveConfig &wave)
    {
        const cd unrot = std::polar(1.0, -wave.k0 * rel.norm());
        NetOutput t{};
        for (int k = 0; k < num_pol; ++k)
        {
            const cd v = block(pol_entry[k][0], pol_entry[k][1]) * unrot;
            t[pol_slots[k][0]] = v.real();
            t[pol_slots[k][1]] = v.imag();
        }
        return t;
    }

    std::vector<SurrogateSample> generate_training_set(const SurfaceGeometry &geom, const CoordinateBox &box,
                                                       const WaveConfig &wave, const QuadratureRule &quad, int count,
                                                       std::uint64_t seed, ChannelModel model, int threads)
    {
        box.validate();
        geom.validate();
        if (count <= 0)
            throw ConfigError("training set size must be positive");
        std::vector<SurrogateSample> samples(static_cast<std::size_t>(count));
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> ux(box.x_min, box.x_max), uy(box.y_min, box.y_max),
            uz(box.z_min, box.z_max);
        for (auto &s : samples)
        {
            s.input.x = ux(rng);
            s.input.y = uy(rng);
            s.input.z = uz(rng);
        }
        parallel_for(samples.size(), threads,
                     [&](std::size_t i)
                     {
                         SurrogateSample &s = samples[i];
                         const DyadicBlock blk = model == ChannelModel::quadrature
                                                     ? patch_channel_relative(s.input, geom, wave, quad)
                                                     : approx_channel_relative(s.input, geom, wave);
                         s.target = derotated_target(blk, s.input, wave);
                     });
        return samples;
    }

    double surrogate_nmse(const HybridNet &net, const std::vector<SurrogateSample> &samples)
    {
        double err = 0.0, ref = 0.0;
        for (const auto &s : samples)
        {
            const NetOutput o = net.forward(s.input);
            for (int j = 0; j < num_outputs; ++j)
            {
                const double e = o[j] - s.target[j];
                err += e * e;
                ref += s.target[j] * s.target[j];
            }
        }
        return err / ref;
    }

    namespace
    {
        struct AdamSlot
        {
            RMat m, v;
            void init(Eigen::Index r, Eigen::Index c)
            {
                m = RMat::Zero(r, c);
                v = RMat::Zero(r, c);
            }
            template <typename P, typename G>
            void step(P &param, const G &grad, double lr, double c1, double c2)
            {
                constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
                m = b1 * m + (1.0 - b1) * grad;
                v = b2 * v + (1.0 - b2) * grad.cwiseAbs2();
                param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
            }
        };
    } // namespace

    HybridNet train(const std::vector<SurrogateSample> &samples, const TrainConfig &cfg, double frequency_hz,
                    TrainReport *report)
    {
        const int nh = cfg.hidden_count;
        if (nh <= 0)
            throw ConfigError("hidden_count must be positive");
        if (cfg.epochs <= 0 || cfg.batch_size <= 0)
            throw ConfigError("epochs and batch size must be positive");
        if (!(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0))
            throw ConfigError("validation fraction must lie in (0, 1)");
        if (!(cfg.learning_rate > 0.0) || !(cfg.final_learning_rate > 0.0))
            throw ConfigError("learning rates must be positive");
        cfg.box.validate();
        const std::size_t total = samples.size();
        const std::size_t params = 4 * static_cast<std::size_t>(nh) + 12 * (static_cast<std::size_t>(nh) + 1);
        if (total < 10 * params)
            throw ConfigError("training set has " + std::to_string(total) + " samples; at least " +
                              std::to_string(10 * params) + " are needed for " + std::to_string(nh) + " hidden units");
        const std::size_t n_val = static_cast<std::size_t>(std::llround(cfg.validation_fraction * total));
        if (n_val == 0 || n_val >= total)
            throw ConfigError("training set too small for the validation split");
        const std::size_t n_train = total - n_val;

        std::mt19937_64 rng(cfg.seed);
        std::vector<std::size_t> order(total);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<SurrogateSample> train_set, val_set;
        train_set.reserve(n_train);
        val_set.reserve(n_val);
        for (std::size_t i = 0; i < total; ++i)
            (i < n_train ? train_set : val_set).push_back(samples[order[i]]);

        HybridNet net = HybridNet::zeros(nh, frequency_hz);
        const CoordinateBox &box = cfg.box;
        const std::array<double, 3> lo{box.x_min, box.y_min, box.z_min}, hi{box.x_max, box.y_max, box.z_max};
        for (int a = 0; a < 3; ++a)
        {
            net.input_scale[a] = 2.0 / (hi[a] - lo[a]);
            net.input_offset[a] = -(hi[a] + lo[a]) / (hi[a] - lo[a]);
        }

        // Per-slot standardization of the targets.
        for (int j = 0; j < num_outputs; ++j)
        {
            double mean = 0.0;
            for (const auto &s : train_set)
                mean += s.target[j];
            mean /= static_cast<double>(n_train);
            double var = 0.0;
            for (const auto &s : train_set)
                var += (s.target[j] - mean) * (s.target[j] - mean);
            var /= static_cast<double>(n_train);
            net.output_offset[j] = mean;
            // A constant slot (spread at rounding level) is represented exactly by its offset.
            net.output_scale[j] = var > 1e-24 * mean * mean ? std::sqrt(var) : 0.0;
        }
        // Weighting by the slot variance keeps the objective proportional to the raw squared error.
        RVec weight(num_outputs);
        for (int j = 0; j < num_outputs; ++j)
            weight[j] = net.output_scale[j] * net.output_scale[j];
        if (weight.sum() > 0.0)
            weight /= weight.mean();

        RMat U(3, n_train), T(num_outputs, n_train);
        for (std::size_t i = 0; i < n_train; ++i)
        {
            const auto &s = train_set[i];
            for (int a = 0; a < 3; ++a)
                U(a, i) = net.input_scale[a] * s.input[a] + net.input_offset[a];
            for (int j = 0; j < num_outputs; ++j)
                T(j, i) = net.output_scale[j] > 0.0 ? (s.target[j] - net.output_offset[j]) / net.output_scale[j] : 0.0;
        }

        // Hidden units spread over the normalized input cube.
        std::uniform_real_distribution<double> unif(-1.0, 1.0);
        const double mag = 0.7 * std::cbrt(static_cast<double>(nh));
        for (int h = 0; h < nh; ++h)
        {
            Eigen::Vector3d w(unif(rng), unif(rng), unif(rng));
            while (w.norm() < 1e-3)
                w = {unif(rng), unif(rng), unif(rng)};
            net.w1.row(h) = (mag * w.normalized()).transpose();
            net.b1[h] = mag * unif(rng);
        }
        const double w2_range = std::sqrt(6.0 / (nh + num_outputs));
        for (int h = 0; h < nh; ++h)
            for (int j = 0; j < num_outputs; ++j)
                net.w2(h, j) = w2_range * unif(rng);

        AdamSlot s_w1, s_b1, s_w2, s_b2;
        s_w1.init(nh, 3);
        s_b1.init(nh, 1);
        s_w2.init(nh, num_outputs);
        s_b2.init(num_outputs, 1);

        const int batch = static_cast<int>(std::min<std::size_t>(cfg.batch_size, n_train));
        const std::size_t steps_per_epoch = (n_train + batch - 1) / batch;
        const double decay =
            cfg.epochs > 1 ? std::pow(cfg.final_learning_rate / cfg.learning_rate, 1.0 / (cfg.epochs - 1)) : 1.0;

        HybridNet best = net;
        double best_val = std::numeric_limits<double>::infinity();
        int best_epoch = 0;
        int since_best = 0;
        long long t = 0;
        double lr = cfg.learning_rate;
        double last_loss = 0.0;
        std::vector<std::size_t> perm(n_train);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        RMat Ub(3, batch), Tb(num_outputs, batch);
        TrainReport rep;

        int epoch = 0;
        for (epoch = 1; epoch <= cfg.epochs; ++epoch)
        {
            std::shuffle(perm.begin(), perm.end(), rng);
            double loss_sum = 0.0;
            for (std::size_t st = 0; st < steps_per_epoch; ++st)
            {
                const std::size_t begin = st * batch;
                const int b = static_cast<int>(std::min<std::size_t>(batch, n_train - begin));
                Ub.resize(3, b);
                Tb.resize(num_outputs, b);
                for (int i = 0; i < b; ++i)
                {
                    Ub.col(i) = U.col(perm[begin + i]);
                    Tb.col(i) = T.col(perm[begin + i]);
                }
                const RMat A = ((net.w1 * Ub).colwise() + net.b1).array().tanh().matrix();
                const RMat E = ((net.w2.transpose() * A).colwise() + net.b2) - Tb;
                const RMat WE = weight.asDiagonal() * E;
                loss_sum += (E.array() * WE.array()).sum();

                const double scale = 2.0 / b;
                const RMat gw2 = scale * (A * WE.transpose());
                const RVec gb2 = scale * WE.rowwise().sum();
                const RMat dC = ((net.w2 * WE).array() * (1.0 - A.array().square())).matrix();
                const RMat gw1 = scale * (dC * Ub.transpose());
                const RVec gb1 = scale * dC.rowwise().sum();

                ++t;
                const double c1 = 1.0 - std::pow(0.9, static_cast<double>(t));
                const double c2 = 1.0 - std::pow(0.999, static_cast<double>(t));
                s_w1.step(net.w1, gw1, lr, c1, c2);
                s_b1.step(net.b1, gb1, lr, c1, c2);
                s_w2.step(net.w2, gw2, lr, c1, c2);
                s_b2.step(net.b2, gb2, lr, c1, c2);
            }
            last_loss = loss_sum / static_cast<double>(n_train);
            if (!std::isfinite(last_loss))
            {
                std::ostringstream os;
                os << "training diverged at epoch " << epoch << " (learning rate " << lr << ", loss " << last_loss << ")";
                throw TrainingError(os.str());
            }

            const double val = surrogate_nmse(net, val_set);
            rep.validation_history_db.push_back(db(val));
            if (val < best_val)
            {
                best_val = val;
                best = net;
                best_epoch = epoch;
                since_best = 0;
            }
            else if (cfg.patience > 0 && ++since_best >= cfg.patience)
                break;
            lr *= decay;
        }

        rep.validation_nmse_db = db(best_val);
        rep.final_train_loss = last_loss;
        rep.epochs_run = std::min(epoch, cfg.epochs);
        rep.best_epoch = best_epoch;
        if (report)
            *report = std::move(rep);
        return best;
    }

    // ---- serialization ----------------------------------------------------------------------

    namespace
    {
        constexpr int format_version = 1;

        std::string num(double v)
        {
            if (!std::isfinite(v))
                throw IoError("cannot serialize non-finite weight");
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.17g", v);
            return buf;
        }

        template <typename F>
        void write_array(std::ostream &os, const char *name, std::size_t count, F value, bool last = false)
        {
            os << "  \"" << name << "\": [";
            for (std::size_t i = 0; i < count; ++i)
                os << (i ? ", " : "") << num(value(i));
            os << "]" << (last ? "\n" : ",\n");
        }

        std::vector<double> read_array(const nlohmann::json &j, const char *name, std::size_t count)
        {
            if (!j.contains(name) || !j.at(name).is_array())
                throw IoError(std::string("weights file: missing array '") + name + "'");
            const auto &arr = j.at(name);
            if (arr.size() != count)
                throw IoError(std::string("weights file: array '") + name + "' has " + std::to_string(arr.size()) +
                              " entries, expected " + std::to_string(count));
            std::vector<double> out;
            out.reserve(count);
            for (const auto &v : arr)
            {
                if (!v.is_number())
                    throw IoError(std::string("weights file: non-numeric entry in '") + name + "'");
                out.push_back(v.get<double>());
            }
            return out;
        }
    } // namespace

    void save_net(const HybridNet &net, std::ostream &os)
    {
        net.validate();
        const int nh = net.hidden_count;
        os << "{\n  \"version\": " << format_version << ",\n  \"hidden_count\": " << nh << ",\n";
        write_array(os, "w1", static_cast<std::size_t>(nh) * 3, [&](std::size_t i) { return net.w1(i / 3, i % 3); });
        write_array(os, "b1", nh, [&](std::size_t i) { return net.b1[i]; });
        write_array(os, "w2", static_cast<std::size_t>(nh) * num_outputs,
                    [&](std::size_t i) { return net.w2(i / num_outputs, i % num_outputs); });
        write_array(os, "b2", num_outputs, [&](std::size_t i) { return net.b2[i]; });
        write_array(os, "input_scale", 3, [&](std::size_t i) { return net.input_scale[i]; });
        write_array(os, "input_offset", 3, [&](std::size_t i) { return net.input_offset[i]; });
        write_array(os, "output_scale", num_outputs, [&](std::size_t i) { return net.output_scale[i]; });
        write_array(os, "output_offset", num_outputs, [&](std::size_t i) { return net.output_offset[i]; });
        os << "  \"wave\": {\"frequency_hz\": " << num(net.frequency_hz) << "}\n}\n";
        if (!os)
            throw IoError("failed writing weights");
    }

    HybridNet load_net(std::istream &is)
    {
        nlohmann::json j;
        try
        {
            is >> j;
        }
        catch (const nlohmann::json::exception &e)
        {
            throw IoError(std::string("weights file: malformed JSON: ") + e.what());
        }
        if (!j.is_object() || !j.contains("version") || !j.at("version").is_number_integer())
            throw IoError("weights file: missing version");
        if (j.at("version").get<int>() != format_version)
            throw IoError("weights file: unsupported version " + std::to_string(j.at("version").get<int>()));
        if (!j.contains("hidden_count") || !j.at("hidden_count").is_number_integer())
            throw IoError("weights file: missing hidden_count");
        const int nh = j.at("hidden_count").get<int>();
        if (nh <= 0)
            throw ConfigError("weights file: surrogate network is untrained (hidden_count 0)");

        HybridNet net = HybridNet::zeros(nh);
        const auto w1 = read_array(j, "w1", static_cast<std::size_t>(nh) * 3);
        const auto b1 = read_array(j, "b1", nh);
        const auto w2 = read_array(j, "w2", static_cast<std::size_t>(nh) * num_outputs);
        const auto b2 = read_array(j, "b2", num_outputs);
        const auto is_ = read_array(j, "input_scale", 3);
        const auto io = read_array(j, "input_offset", 3);
        const auto os_ = read_array(j, "output_scale", num_outputs);
        const auto oo = read_array(j, "output_offset", num_outputs);
        for (std::size_t i = 0; i < w1.size(); ++i)
            net.w1(i / 3, i % 3) = w1[i];
        for (int i = 0; i < nh; ++i)
            net.b1[i] = b1[i];
        for (std::size_t i = 0; i < w2.size(); ++i)
            net.w2(i / num_outputs, i % num_outputs) = w2[i];
        for (int i = 0; i < num_outputs; ++i)
        {
            net.b2[i] = b2[i];
            net.output_scale[i] = os_[i];
            net.output_offset[i] = oo[i];
        }
        for (int i = 0; i < 3; ++i)
        {
            net.input_scale[i] = is_[i];
            net.input_offset[i] = io[i];
        }
        if (!j.contains("wave") || !j.at("wave").is_object() || !j.at("wave").contains("frequency_hz") ||
            !j.at("wave").at("frequency_hz").is_number())
            throw IoError("weights file: missing wave.frequency_hz");
        net.frequency_hz = j.at("wave").at("frequency_hz").get<double>();
        net.validate();
        return net;
    }

    void save_net_file(const HybridNet &net, const std::string &path)
    {
        std::ofstream f(path);
        if (!f)
            throw IoError("cannot open '" + path + "' for writing");
        save_net(net, f);
    }

    HybridNet load_net_file(const std::string &path)
    {
        std::ifstream f(path);
        if (!f)
            throw IoError("cannot open '" + path + "'");
        return load_net(f);
    }

} // namespace hmimo
