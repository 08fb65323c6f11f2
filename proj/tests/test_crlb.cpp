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

#include "support.hpp"

#include "hmimo/crlb.hpp"

#include <Eigen/Eigenvalues>

using namespace hmimo;
using namespace hmimo::testing;

namespace
{
    const WaveConfig wave = WaveConfig::from_frequency(3e9);

    struct Fixture
    {
        SurfaceGeometry geom = ci_geometry();
        HybridNet net = random_net(6, 31, relative_box(ci_geometry(), default_prior()));
        CMat S = gen_pilots(9, 40, 32).assemble();
        Position p{0.22, 0.37, 31.5};
        double gamma = 1e10;
    };

    double frob(const Eigen::Matrix3d &m) { return m.norm(); }
} // namespace

TEST_CASE("Fisher information structure")
{
    const Fixture f;
    const FisherInfo a = fim(f.p, f.net, f.geom, f.S, f.gamma, wave);
    const FisherInfo b = fim(f.p, f.net, f.geom, f.S, 10.0 * f.gamma, wave);
    CHECK(b.gamma == 10.0 * f.gamma);
    CHECK(frob(b.F - 10.0 * a.F) <= 4e-16 * frob(b.F));
    CHECK(frob(a.F - a.F.transpose()) == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(a.F);
    CHECK(es.eigenvalues().minCoeff() > 0.0);

    // Gram form against the Jacobian assembled here.
    const ChannelJacobian J = channel_jacobian(f.net, f.geom, f.p, wave);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
        {
            const double g = 2.0 * f.gamma * ((f.S * J.d[i]).adjoint() * (f.S * J.d[j])).trace().real();
            CHECK(a.F(i, j) == rel(g, 1e-12));
        }
    CHECK(rel_err(J.h, hybrid_full_channel(f.net, f.geom, f.p, wave)) < 1e-14);

    const Combiner I = gen_combiner(36, 36, 0, true);
    CHECK(frob(fim(f.p, f.net, f.geom, f.S, f.gamma, wave, &I).F - a.F) <= 1e-14 * frob(a.F));

    CHECK_THROWS_AS(fim(f.p, f.net, f.geom, f.S, 0.0, wave), ConfigError);
    CHECK_THROWS_AS(fim(f.p, f.net, f.geom, CMat(f.S.leftCols(50)), f.gamma, wave), RangeError);
}

TEST_CASE("bound from a known information matrix")
{
    FisherInfo fi;
    fi.F = Eigen::Vector3d(1.0, 2.0, 4.0).asDiagonal();
    const Position p{0.0, 3.0, 4.0};
    const CrlbValue v = crlb_position(fi, p);
    CHECK(v.bound == 1.75);
    CHECK(v.normalized == rel(1.75 / 25.0, 1e-15));

    fi.F << 1, 1, 0, 1, 1, 0, 0, 0, 1;
    CHECK_THROWS_AS(crlb_position(fi, p), SingularityError);
    fi.F = Eigen::Matrix3d::Zero();
    CHECK_THROWS_AS(crlb_position(fi, p), SingularityError);
}

TEST_CASE("bound shifts 10 dB per 10 dB of precision")
{
    const Fixture f;
    const CrlbValue a = crlb_position(fim(f.p, f.net, f.geom, f.S, f.gamma, wave), f.p);
    const CrlbValue b = crlb_position(fim(f.p, f.net, f.geom, f.S, 10.0 * f.gamma, wave), f.p);
    CHECK(a.bound / b.bound == rel(10.0, 1e-15));
    CHECK(db(b.normalized) - db(a.normalized) == rel(-10.0, 1e-13));
}

TEST_CASE("score covariance matches the information matrix")
{
    const Fixture f;
    const double gamma = 1.0 / (1e-3 * (f.S * hybrid_full_channel(f.net, f.geom, f.p, wave)).squaredNorm() /
                                (f.S.rows() * f.geom.M()));
    const FisherInfo fi = fim(f.p, f.net, f.geom, f.S, gamma, wave);
    const CMat SH = f.S * hybrid_full_channel(f.net, f.geom, f.p, wave);
    std::mt19937_64 rng(33);
    std::normal_distribution<double> g(0.0, std::sqrt(0.5 / gamma));
    const int draws = 1000;
    Eigen::Matrix3d C = Eigen::Matrix3d::Zero();
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (int t = 0; t < draws; ++t)
    {
        CMat Y = SH;
        for (Eigen::Index i = 0; i < Y.size(); ++i)
            Y(i) += cd(g(rng), g(rng));
        const Eigen::Vector3d s = score(f.p, f.net, f.geom, f.S, Y, gamma, wave);
        C += s * s.transpose();
        mean += s;
    }
    C /= draws;
    mean /= draws;
    CHECK(frob(C - fi.F) < 0.1 * frob(fi.F));
    for (int a = 0; a < 3; ++a)
    {
        CHECK(C(a, a) == doctest::Approx(fi.F(a, a)).epsilon(0.1));
        // Zero-mean score: a few standard errors of the mean at most.
        CHECK(std::abs(mean[a]) < 5.0 * std::sqrt(fi.F(a, a) / draws));
    }
}

TEST_CASE("likelihood Hessian")
{
    const Fixture f;
    const Position off{f.p.x + 3e-3, f.p.y - 2e-3, f.p.z + 1e-2};
    const CMat Y = simulate_rx(f.S, hybrid_full_channel(f.net, f.geom, f.p, wave), 10.0, 34).Y;
    const double gamma = 1.0;
    const Eigen::Matrix3d Hs = log_likelihood_hessian(off, f.net, f.geom, f.S, Y, gamma, wave);

    // Central differences of the log-likelihood.
    const double h = 1e-5;
    auto ll = [&](const Position &q) { return log_likelihood(q, f.net, f.geom, f.S, Y, gamma, wave); };
    Eigen::Matrix3d fd;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
        {
            Position pp = off, pm = off, mp = off, mm = off;
            pp[a] += h, pp[b] += h;
            pm[a] += h, pm[b] -= h;
            mp[a] -= h, mp[b] += h;
            mm[a] -= h, mm[b] -= h;
            fd(a, b) = (ll(pp) - ll(pm) - ll(mp) + ll(mm)) / (4.0 * h * h);
        }
    CHECK(frob(Hs - fd) < 1e-3 * frob(fd));

    // Score against first differences.
    const Eigen::Vector3d s = score(off, f.net, f.geom, f.S, Y, gamma, wave);
    for (int a = 0; a < 3; ++a)
    {
        Position qp = off, qm = off;
        qp[a] += h;
        qm[a] -= h;
        CHECK(s[a] == doctest::Approx((ll(qp) - ll(qm)) / (2.0 * h)).epsilon(1e-4));
    }

    // On noiseless data at the truth the data terms vanish and -Hessian is the information matrix.
    const CMat Y0 = f.S * hybrid_full_channel(f.net, f.geom, f.p, wave);
    const Eigen::Matrix3d H0 = log_likelihood_hessian(f.p, f.net, f.geom, f.S, Y0, gamma, wave);
    const FisherInfo fi = fim(f.p, f.net, f.geom, f.S, gamma, wave);
    CHECK(frob(-H0 - fi.F) < 1e-10 * frob(fi.F));
}

TEST_CASE("second partials against finite differences of the Jacobian")
{
    const Fixture f;
    const auto d2 = channel_hessian(f.net, f.geom, f.p, wave);
    const double h = 1e-5;
    for (int b = 0; b < 3; ++b)
    {
        Position qp = f.p, qm = f.p;
        qp[b] += h;
        qm[b] -= h;
        const ChannelJacobian jp = channel_jacobian(f.net, f.geom, qp, wave);
        const ChannelJacobian jm = channel_jacobian(f.net, f.geom, qm, wave);
        for (int a = 0; a < 3; ++a)
        {
            const CMat fd = (jp.d[a] - jm.d[a]) / (2.0 * h);
            CHECK(rel_err(d2[a][b], fd) < 1e-3);
            CHECK(rel_err(d2[a][b], d2[b][a]) < 1e-14);
        }
    }
}
