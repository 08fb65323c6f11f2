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

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace hmimo
{
    using cd = std::complex<double>;
    using CMat = Eigen::MatrixXcd;
    using RMat = Eigen::MatrixXd;
    using CVec = Eigen::VectorXcd;
    using RVec = Eigen::VectorXd;

    inline constexpr double pi = 3.14159265358979323846;
    inline constexpr double speed_of_light = 299792458.0;
    inline constexpr double mu0 = 4.0e-7 * pi;

    // Cartesian point in meters.
    struct Position
    {
        double x = 0.0;
        double y = 0.0;
        double z = 0.0;

        Position operator+(const Position &o) const { return {x + o.x, y + o.y, z + o.z}; }
        Position operator-(const Position &o) const { return {x - o.x, y - o.y, z - o.z}; }
        Position operator*(double s) const { return {x * s, y * s, z * s}; }
        bool operator==(const Position &o) const = default;

        double norm() const { return std::sqrt(x * x + y * y + z * z); }
        double squared_norm() const { return x * x + y * y + z * z; }
        double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
        double &operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }
        bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
    };

    // Error hierarchy. The CLI maps these onto exit codes.
    class Error : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    class RangeError : public Error
    {
    public:
        using Error::Error;
    };

    class ConfigError : public Error
    {
    public:
        using Error::Error;
    };

    class SingularityError : public Error
    {
    public:
        using Error::Error;
    };

    class RankError : public Error
    {
    public:
        using Error::Error;
    };

    class TrainingError : public Error
    {
    public:
        using Error::Error;
    };

    class IoError : public Error
    {
    public:
        using Error::Error;
    };

    class NumericalError : public Error
    {
    public:
        NumericalError(const std::string &what, int iteration)
            : Error(what + " (iteration " + std::to_string(iteration) + ")"), iteration_(iteration) {}
        int iteration() const { return iteration_; }

    private:
        int iteration_;
    };

    // Deterministic 64-bit seed mixing (splitmix64 finalizer).
    inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index)
    {
        std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    inline double db(double linear) { return 10.0 * std::log10(linear); }
    inline double from_db(double decibel) { return std::pow(10.0, decibel / 10.0); }

} // namespace hmimo
