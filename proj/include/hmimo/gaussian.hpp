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

#include "hmimo/types.hpp"

#include <algorithm>
#include <span>

namespace hmimo
{
    struct VarianceClamp
    {
        double min = 1e-12;
        double max = 1e12;

        double operator()(double v) const
        {
            if (std::isnan(v))
                return v;
            return std::clamp(v, min, max);
        }
    };

    // Compensated summation; keeps long precision sums independent of the summation order
    // to well below double rounding of the total.
    struct KahanSum
    {
        double sum = 0.0;
        double c = 0.0;

        void add(double v)
        {
            const double y = v - c;
            const double t = sum + y;
            c = (t - sum) - y;
            sum = t;
        }
        double value() const { return sum; }
    };

    template <typename T>
    struct GaussianStat
    {
        T mean{};
        double var = 1.0;
    };

    using RealGaussian = GaussianStat<double>;
    using ComplexGaussian = GaussianStat<cd>;

    // Normalized product of Gaussian densities. Infinite variances contribute nothing;
    // an empty or all-uninformative product returns the clamp's upper variance with mean 0.
    template <typename T>
    GaussianStat<T> gaussian_product(std::span<const GaussianStat<T>> factors, const VarianceClamp &clamp = {})
    {
        KahanSum prec;
        KahanSum mre, mim;
        for (const auto &f : factors)
        {
            if (!(f.var < std::numeric_limits<double>::infinity()))
                continue;
            const double p = 1.0 / f.var;
            prec.add(p);
            if constexpr (std::is_same_v<T, cd>)
            {
                mre.add(f.mean.real() * p);
                mim.add(f.mean.imag() * p);
            }
            else
                mre.add(f.mean * p);
        }
        GaussianStat<T> out;
        if (!(prec.value() > 0.0))
        {
            out.var = clamp.max;
            return out;
        }
        out.var = clamp(1.0 / prec.value());
        if constexpr (std::is_same_v<T, cd>)
            out.mean = cd(mre.value(), mim.value()) / prec.value();
        else
            out.mean = mre.value() / prec.value();
        return out;
    }

    template <typename T>
    GaussianStat<T> gaussian_product(const GaussianStat<T> &a, const GaussianStat<T> &b, const VarianceClamp &clamp = {})
    {
        const GaussianStat<T> f[2] = {a, b};
        return gaussian_product<T>(std::span<const GaussianStat<T>>(f, 2), clamp);
    }

    // belief / incoming: the message that, multiplied with `incoming`, reproduces `belief`.
    // A non-positive precision difference maps to the clamp's upper variance (non-informative).
    template <typename T>
    GaussianStat<T> extrinsic(const GaussianStat<T> &belief, const GaussianStat<T> &incoming, const VarianceClamp &clamp = {})
    {
        const double pb = 1.0 / belief.var;
        const double pi_ = incoming.var < std::numeric_limits<double>::infinity() ? 1.0 / incoming.var : 0.0;
        const double p = pb - pi_;
        GaussianStat<T> out;
        if (!(p > 0.0) || !(1.0 / p < clamp.max))
        {
            out.var = clamp.max;
            out.mean = belief.mean;
            return out;
        }
        const double v = 1.0 / p;
        out.mean = v * (belief.mean * pb - incoming.mean * pi_);
        out.var = clamp(v);
        return out;
    }

} // namespace hmimo
