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

#include "hmimo/crlb.hpp"
#include "hmimo/nnhmp.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace hmimo
{
    enum class SweepVar
    {
        snr,
        L,
        M,
        P
    };

    const char *sweep_var_name(SweepVar v);

    struct TrainingBlock
    {
        int samples = 100000;
        int holdout_samples = 10000;
        int hidden_count = 50;
        int epochs = 150;
        int batch_size = 256;
        double learning_rate = 5e-3;
        double final_learning_rate = 1e-5;
        double validation_fraction = 0.1;
        int patience = 0;
    };

    struct ExperimentConfig
    {
        SurfaceGeometry geometry;
        double frequency_hz = 3e9;
        PriorBox prior{-1.0, 1.0, -1.0, 1.0, 20.0, 40.0};
        SweepVar sweep_var = SweepVar::snr;
        std::vector<double> sweep_values;
        double snr_db = 8.0; // values of the variables that are not swept
        int L = 100;
        int P = 0; // RF chains; 0 selects the full-digital receiver
        int trials = 20;
        int quadrature_order = 8;
        EstimatorConfig estimator;
        TrainingBlock training;
        std::uint64_t master_seed = 1;
        std::uint64_t training_seed = 7;
        std::string oracle_net = "oracle_net.json";
        std::string appmod_net = "appmod_net.json";
        std::string output_csv = "sweep.csv";
        bool timing = false; // fill wall_s; off by default so the CSV is reproducible byte for byte

        void validate() const;

        // Geometry, SNR, L and P in effect at one sweep value.
        struct Point
        {
            SurfaceGeometry geometry;
            double snr_db = 0.0;
            int L = 0;
            int P = 0;
        };
        Point point(double value) const;

        // Receive surface with the most patches over the sweep; the surrogates are trained for it.
        SurfaceGeometry largest_geometry() const;
    };

    // Built-in profiles: "ci" (6x6 receiver, 3x3 transmitter) and "paper" (10x10, 5x5).
    ExperimentConfig profile_config(const std::string &name);

    // Reads a key-tree config; keys present override `base`, unknown keys are rejected.
    ExperimentConfig parse_config(const std::string &text, const ExperimentConfig &base);
    ExperimentConfig load_config(const std::string &path, const ExperimentConfig &base);
    std::string config_to_json(const ExperimentConfig &cfg);

    // FNV-1a over the raw bytes of the matrices.
    std::uint64_t realization_hash(std::initializer_list<const CMat *> parts);

    struct SurrogatePair
    {
        HybridNet oracle;
        HybridNet appmod;
    };

    inline constexpr int num_estimators = 4;
    enum class EstimatorId
    {
        bound,  // hybrid model at the true location
        nnhmp,  // surrogate trained on the quadrature oracle
        appmod, // surrogate trained on the closed-form approximation
        ls
    };
    const char *estimator_name(EstimatorId e);

    struct TrialRecord
    {
        int trial = 0;
        std::uint64_t seed = 0;
        std::uint64_t hash = 0;
        Position p;
        std::array<bool, num_estimators> ok{};
        std::array<double, num_estimators> nmse_h{}; // linear
        std::array<double, num_estimators> nmse_p{}; // linear; NaN where undefined
        std::array<double, num_estimators> seconds{};
        std::array<std::string, num_estimators> failure;
        double crlb_normalized = 0.0;
        double squared_error_p = 0.0; // NNHMP, m^2
        double crlb = 0.0;            // m^2
    };

    struct PointSummary
    {
        SweepVar var = SweepVar::snr;
        double value = 0.0;
        EstimatorId estimator = EstimatorId::nnhmp;
        int trials_ok = 0;
        int trials_failed = 0;
        double nmse_h_db = 0.0;
        double nmse_h_stderr_db = 0.0;
        double nmse_p_db = 0.0;
        double nmse_p_stderr_db = 0.0;
        double crlb_db = 0.0;
        double wall_s = 0.0;
    };

    struct PointResult
    {
        double value = 0.0;
        std::vector<TrialRecord> trials;
        std::array<PointSummary, num_estimators> rows;
    };

    // Seed of trial t. It does not depend on the sweep value, so every point sees the same locations,
    // pilots and noise shapes.
    std::uint64_t trial_seed(std::uint64_t master, int trial);

    TrialRecord run_trial(const ExperimentConfig &cfg, const ExperimentConfig::Point &pt, const SurrogatePair &nets,
                          int trial);

    PointResult run_point(const ExperimentConfig &cfg, double value, const SurrogatePair &nets, int threads = 1);

    std::vector<PointResult> sweep(const ExperimentConfig &cfg, const SurrogatePair &nets, int threads = 1);

    // Mean and delta-method standard error, both in dB, of positive linear samples.
    struct DbStat
    {
        double mean_db = 0.0;
        double stderr_db = 0.0;
    };
    DbStat db_stat(const std::vector<double> &linear);

    void write_sweep_csv(std::ostream &os, const std::vector<PointResult> &points);
    void write_trials_csv(std::ostream &os, const PointResult &point);

    struct TrainSummary
    {
        TrainReport oracle_report;
        TrainReport appmod_report;
        double oracle_holdout_db = 0.0;       // against quadrature targets
        double appmod_holdout_db = 0.0;       // against closed-form targets
        double appmod_vs_oracle_db = 0.0;     // closed-form surrogate against quadrature targets
        SurrogatePair nets;
    };

    // Trains both surrogates for the largest geometry of the sweep.
    TrainSummary train_surrogates(const ExperimentConfig &cfg, int threads = 1);

    TrainConfig train_config(const ExperimentConfig &cfg);

    // Normalized CRLB (dB) at each sweep value and trial location, averaged over trials.
    struct CrlbRow
    {
        double value = 0.0;
        double crlb_db = 0.0;
    };
    std::vector<CrlbRow> crlb_sweep(const ExperimentConfig &cfg, const HybridNet &net, int threads = 1);
    void write_crlb_csv(std::ostream &os, SweepVar var, const std::vector<CrlbRow> &rows);

} // namespace hmimo
