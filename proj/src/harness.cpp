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

#include "hmimo/harness.hpp"

#include "hmimo/parallel.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace hmimo
{
    using json = nlohmann::json;
    using ordered_json = nlohmann::ordered_json;

    const char *sweep_var_name(SweepVar v)
    {
        switch (v)
        {
        case SweepVar::snr:
            return "snr";
        case SweepVar::L:
            return "L";
        case SweepVar::M:
            return "M";
        case SweepVar::P:
            return "P";
        }
        return "?";
    }

    const char *estimator_name(EstimatorId e)
    {
        switch (e)
        {
        case EstimatorId::bound:
            return "bound";
        case EstimatorId::nnhmp:
            return "nnhmp";
        case EstimatorId::appmod:
            return "appmod";
        case EstimatorId::ls:
            return "ls";
        }
        return "?";
    }

    namespace
    {
        bool is_integer(double v) { return std::isfinite(v) && v == std::floor(v); }

        int square_side(int M)
        {
            const int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(M))));
            return s * s == M ? s : -1;
        }

        void check_range(double lo, double hi, const char *what)
        {
            if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi))
                throw ConfigError(std::string("degenerate range for ") + what);
        }
    } // namespace

    ExperimentConfig::Point ExperimentConfig::point(double value) const
    {
        Point p;
        p.geometry = geometry;
        p.snr_db = snr_db;
        p.L = L;
        p.P = P;
        switch (sweep_var)
        {
        case SweepVar::snr:
            p.snr_db = value;
            break;
        case SweepVar::L:
            p.L = static_cast<int>(value);
            break;
        case SweepVar::M:
        {
            const int s = square_side(static_cast<int>(value));
            p.geometry.rx_rows = s;
            p.geometry.rx_cols = s;
            break;
        }
        case SweepVar::P:
            p.P = static_cast<int>(value);
            break;
        }
        return p;
    }

    SurfaceGeometry ExperimentConfig::largest_geometry() const
    {
        SurfaceGeometry g = geometry;
        if (sweep_var == SweepVar::M)
            for (double v : sweep_values)
            {
                const SurfaceGeometry c = point(v).geometry;
                if (c.M() > g.M())
                    g = c;
            }
        return g;
    }

    void ExperimentConfig::validate() const
    {
        geometry.validate();
        if (!(frequency_hz > 0.0) || !std::isfinite(frequency_hz))
            throw ConfigError("frequency must be positive");
        check_range(prior.x_min, prior.x_max, "prior x");
        check_range(prior.y_min, prior.y_max, "prior y");
        check_range(prior.z_min, prior.z_max, "prior z");
        if (!(prior.z_min > 0.0))
            throw ConfigError("prior z range must be positive");
        if (sweep_values.empty())
            throw ConfigError("sweep grid is empty");
        if (trials < 1)
            throw ConfigError("trials must be at least 1");
        if (quadrature_order < 2)
            throw ConfigError("quadrature order must be at least 2");
        if (L < 1)
            throw ConfigError("pilot length L must be at least 1");
        if (P < 0)
            throw ConfigError("P must be 0 (full digital) or positive");
        if (!std::isfinite(snr_db))
            throw ConfigError("SNR must be finite");
        for (double v : sweep_values)
        {
            switch (sweep_var)
            {
            case SweepVar::snr:
                if (!std::isfinite(v))
                    throw ConfigError("SNR sweep values must be finite");
                break;
            case SweepVar::L:
                if (!is_integer(v) || v < 1)
                    throw ConfigError("L sweep values must be positive integers");
                break;
            case SweepVar::M:
                if (!is_integer(v) || v < 1 || square_side(static_cast<int>(v)) < 0)
                    throw ConfigError("M sweep values must be perfect squares (square receive surface)");
                break;
            case SweepVar::P:
                if (!is_integer(v) || v < 1)
                    throw ConfigError("P sweep values must be positive integers");
                break;
            }
            const Point pt = point(v);
            pt.geometry.validate();
            if (pt.P > pt.geometry.M())
                throw ConfigError("P = " + std::to_string(pt.P) + " exceeds M = " + std::to_string(pt.geometry.M()));
            if (3 * pt.L < 6 * pt.geometry.N())
                throw ConfigError("L = " + std::to_string(pt.L) + " leaves the pilot matrix rank deficient (need L >= " +
                                  std::to_string(2 * pt.geometry.N()) + ")");
        }
        EstimatorConfig e = estimator;
        e.prior = prior;
        e.validate();
        if (training.samples < 2 || training.holdout_samples < 1 || training.hidden_count < 1 || training.epochs < 1 ||
            training.batch_size < 1)
            throw ConfigError("training sizes must be positive");
        if (!(training.validation_fraction > 0.0 && training.validation_fraction < 1.0))
            throw ConfigError("validation fraction must lie in (0, 1)");
        if (!(training.learning_rate > 0.0) || !(training.final_learning_rate > 0.0))
            throw ConfigError("learning rates must be positive");
    }

    ExperimentConfig profile_config(const std::string &name)
    {
        ExperimentConfig c;
        if (name == "ci")
        {
            c.geometry = {6, 6, 3, 3, 0.05, 0.05, 0.01, 0.01};
            c.sweep_values = {0.0, 4.0, 8.0, 12.0, 16.0, 20.0};
            c.trials = 20;
        }
        else if (name == "paper")
        {
            c.geometry = {10, 10, 5, 5, 0.05, 0.05, 0.01, 0.01};
            c.sweep_values = {0.0, 4.0, 8.0, 12.0, 16.0, 20.0};
            c.L = 200;
            c.trials = 100;
            c.training.samples = 200000;
            c.training.epochs = 200;
        }
        else
            throw ConfigError("unknown profile '" + name + "' (expected ci or paper)");
        return c;
    }

    // ---- config parsing ---------------------------------------------------------------------

    namespace
    {
        // Object reader that rejects keys nobody asked for.
        class Reader
        {
        public:
            Reader(const json &j, std::string path) : j_(j), path_(std::move(path))
            {
                if (!j_.is_object())
                    throw ConfigError("'" + path_ + "' must be an object");
            }

            template <typename T>
            void get(const char *key, T &out)
            {
                seen_.insert(key);
                auto it = j_.find(key);
                if (it == j_.end())
                    return;
                try
                {
                    if constexpr (std::is_same_v<T, int>)
                    {
                        if (!it->is_number_integer())
                            throw ConfigError("");
                        out = it->template get<int>();
                    }
                    else if constexpr (std::is_same_v<T, std::uint64_t>)
                    {
                        if (!it->is_number_unsigned() && !(it->is_number_integer() && it->template get<long long>() >= 0))
                            throw ConfigError("");
                        out = it->template get<std::uint64_t>();
                    }
                    else if constexpr (std::is_same_v<T, double>)
                    {
                        if (!it->is_number())
                            throw ConfigError("");
                        out = it->template get<double>();
                    }
                    else
                        out = it->template get<T>();
                }
                catch (const std::exception &)
                {
                    throw ConfigError("bad value for '" + path_ + "." + key + "'");
                }
            }

            std::optional<Reader> child(const char *key)
            {
                seen_.insert(key);
                auto it = j_.find(key);
                if (it == j_.end())
                    return std::nullopt;
                return Reader(*it, path_ + "." + key);
            }

            const json *raw(const char *key)
            {
                seen_.insert(key);
                auto it = j_.find(key);
                return it == j_.end() ? nullptr : &*it;
            }

            void finish() const
            {
                for (auto it = j_.begin(); it != j_.end(); ++it)
                    if (!seen_.count(it.key()))
                        throw ConfigError("unknown key '" + path_ + "." + it.key() + "'");
            }

        private:
            const json &j_;
            std::string path_;
            std::set<std::string> seen_;
        };
    } // namespace

    ExperimentConfig parse_config(const std::string &text, const ExperimentConfig &base)
    {
        json j;
        try
        {
            j = json::parse(text);
        }
        catch (const json::parse_error &e)
        {
            throw ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
        ExperimentConfig c = base;
        Reader root(j, "config");
        if (auto g = root.child("geometry"))
        {
            g->get("rx_rows", c.geometry.rx_rows);
            g->get("rx_cols", c.geometry.rx_cols);
            g->get("rx_dx", c.geometry.rx_dx);
            g->get("rx_dy", c.geometry.rx_dy);
            g->get("tx_rows", c.geometry.tx_rows);
            g->get("tx_cols", c.geometry.tx_cols);
            g->get("tx_dx", c.geometry.tx_dx);
            g->get("tx_dy", c.geometry.tx_dy);
            g->finish();
        }
        if (auto w = root.child("wave"))
        {
            w->get("frequency_hz", c.frequency_hz);
            w->finish();
        }
        if (auto p = root.child("prior"))
        {
            p->get("x_min", c.prior.x_min);
            p->get("x_max", c.prior.x_max);
            p->get("y_min", c.prior.y_min);
            p->get("y_max", c.prior.y_max);
            p->get("z_min", c.prior.z_min);
            p->get("z_max", c.prior.z_max);
            p->finish();
        }
        if (auto s = root.child("sweep"))
        {
            std::string var = sweep_var_name(c.sweep_var);
            s->get("variable", var);
            if (var == "snr")
                c.sweep_var = SweepVar::snr;
            else if (var == "L")
                c.sweep_var = SweepVar::L;
            else if (var == "M")
                c.sweep_var = SweepVar::M;
            else if (var == "P")
                c.sweep_var = SweepVar::P;
            else
                throw ConfigError("sweep variable must be one of snr, L, M, P (got '" + var + "')");
            s->get("values", c.sweep_values);
            s->finish();
        }
        if (auto f = root.child("fixed"))
        {
            f->get("snr_db", c.snr_db);
            f->get("L", c.L);
            f->get("P", c.P);
            f->finish();
        }
        root.get("trials", c.trials);
        root.get("quadrature_order", c.quadrature_order);
        if (auto e = root.child("estimator"))
        {
            e->get("max_iters", c.estimator.max_iters);
            e->get("tolerance", c.estimator.tolerance);
            e->get("damping", c.estimator.damping);
            e->get("clamp_min", c.estimator.clamp.min);
            e->get("clamp_max", c.estimator.clamp.max);
            e->get("init_grid", c.estimator.init_grid);
            e->get("init_variance", c.estimator.init_variance);
            e->get("warm_start", c.estimator.warm_start);
            std::string mode = c.estimator.stage2 == Stage2Mode::gaussian ? "gaussian" : "uamp";
            e->get("stage2", mode);
            if (mode == "gaussian")
                c.estimator.stage2 = Stage2Mode::gaussian;
            else if (mode == "uamp")
                c.estimator.stage2 = Stage2Mode::uamp;
            else
                throw ConfigError("estimator.stage2 must be gaussian or uamp");
            e->finish();
        }
        if (auto t = root.child("training"))
        {
            t->get("samples", c.training.samples);
            t->get("holdout_samples", c.training.holdout_samples);
            t->get("hidden_count", c.training.hidden_count);
            t->get("epochs", c.training.epochs);
            t->get("batch_size", c.training.batch_size);
            t->get("learning_rate", c.training.learning_rate);
            t->get("final_learning_rate", c.training.final_learning_rate);
            t->get("validation_fraction", c.training.validation_fraction);
            t->get("patience", c.training.patience);
            t->finish();
        }
        if (auto s = root.child("seeds"))
        {
            s->get("master", c.master_seed);
            s->get("training", c.training_seed);
            s->finish();
        }
        if (auto p = root.child("paths"))
        {
            p->get("oracle_net", c.oracle_net);
            p->get("appmod_net", c.appmod_net);
            p->get("output_csv", c.output_csv);
            p->finish();
        }
        root.finish();
        c.validate();
        return c;
    }

    ExperimentConfig load_config(const std::string &path, const ExperimentConfig &base)
    {
        std::ifstream in(path);
        if (!in)
            throw IoError("cannot open config '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        try
        {
            return parse_config(ss.str(), base);
        }
        catch (const ConfigError &e)
        {
            throw ConfigError(path + ": " + e.what());
        }
    }

    std::string config_to_json(const ExperimentConfig &c)
    {
        ordered_json j;
        j["geometry"] = {{"rx_rows", c.geometry.rx_rows}, {"rx_cols", c.geometry.rx_cols},
                         {"rx_dx", c.geometry.rx_dx},     {"rx_dy", c.geometry.rx_dy},
                         {"tx_rows", c.geometry.tx_rows}, {"tx_cols", c.geometry.tx_cols},
                         {"tx_dx", c.geometry.tx_dx},     {"tx_dy", c.geometry.tx_dy}};
        j["wave"] = {{"frequency_hz", c.frequency_hz}};
        j["prior"] = {{"x_min", c.prior.x_min}, {"x_max", c.prior.x_max}, {"y_min", c.prior.y_min},
                      {"y_max", c.prior.y_max}, {"z_min", c.prior.z_min}, {"z_max", c.prior.z_max}};
        j["sweep"] = {{"variable", sweep_var_name(c.sweep_var)}, {"values", c.sweep_values}};
        j["fixed"] = {{"snr_db", c.snr_db}, {"L", c.L}, {"P", c.P}};
        j["trials"] = c.trials;
        j["quadrature_order"] = c.quadrature_order;
        j["estimator"] = {{"max_iters", c.estimator.max_iters},
                          {"tolerance", c.estimator.tolerance},
                          {"damping", c.estimator.damping},
                          {"clamp_min", c.estimator.clamp.min},
                          {"clamp_max", c.estimator.clamp.max},
                          {"init_grid", c.estimator.init_grid},
                          {"init_variance", c.estimator.init_variance},
                          {"warm_start", c.estimator.warm_start},
                          {"stage2", c.estimator.stage2 == Stage2Mode::gaussian ? "gaussian" : "uamp"}};
        j["training"] = {{"samples", c.training.samples},
                         {"holdout_samples", c.training.holdout_samples},
                         {"hidden_count", c.training.hidden_count},
                         {"epochs", c.training.epochs},
                         {"batch_size", c.training.batch_size},
                         {"learning_rate", c.training.learning_rate},
                         {"final_learning_rate", c.training.final_learning_rate},
                         {"validation_fraction", c.training.validation_fraction},
                         {"patience", c.training.patience}};
        j["seeds"] = {{"master", c.master_seed}, {"training", c.training_seed}};
        j["paths"] = {{"oracle_net", c.oracle_net}, {"appmod_net", c.appmod_net}, {"output_csv", c.output_csv}};
        return j.dump(2) + "\n";
    }

    // ---- trials -----------------------------------------------------------------------------

    std::uint64_t realization_hash(std::initializer_list<const CMat *> parts)
    {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const CMat *m : parts)
        {
            if (!m)
                continue;
            const auto *bytes = reinterpret_cast<const unsigned char *>(m->data());
            const std::size_t n = static_cast<std::size_t>(m->size()) * sizeof(cd);
            for (std::size_t i = 0; i < n; ++i)
            {
                h ^= bytes[i];
                h *= 0x100000001b3ULL;
            }
        }
        return h;
    }

    std::uint64_t trial_seed(std::uint64_t master, int trial) { return mix_seed(master, static_cast<std::uint64_t>(trial)); }

    TrialRecord run_trial(const ExperimentConfig &cfg, const ExperimentConfig::Point &pt, const SurrogatePair &nets,
                          int trial)
    {
        using clock = std::chrono::steady_clock;
        const WaveConfig wave = WaveConfig::from_frequency(cfg.frequency_hz);
        const QuadratureRule quad(cfg.quadrature_order);
        const SurfaceGeometry &geom = pt.geometry;

        TrialRecord rec;
        rec.trial = trial;
        rec.seed = trial_seed(cfg.master_seed, trial);
        rec.nmse_p.fill(std::numeric_limits<double>::quiet_NaN());

        std::mt19937_64 rng(mix_seed(rec.seed, 0));
        std::uniform_real_distribution<double> ux(cfg.prior.x_min, cfg.prior.x_max);
        std::uniform_real_distribution<double> uy(cfg.prior.y_min, cfg.prior.y_max);
        std::uniform_real_distribution<double> uz(cfg.prior.z_min, cfg.prior.z_max);
        rec.p.x = ux(rng);
        rec.p.y = uy(rng);
        rec.p.z = uz(rng);

        const CMat H = full_channel(geom, rec.p, wave, quad).stacked();
        const CMat S = gen_pilots(geom.N(), pt.L, mix_seed(rec.seed, 1)).assemble();
        const bool hybrid = pt.P > 0;
        Combiner F;
        if (hybrid)
            F = gen_combiner(pt.P, geom.M(), mix_seed(rec.seed, 3), false);
        const RxSignal rx = hybrid ? simulate_rx_hybrid(F, S, H, pt.snr_db, mix_seed(rec.seed, 2))
                                   : simulate_rx(S, H, pt.snr_db, mix_seed(rec.seed, 2));
        rec.hash = realization_hash({&H, &S, &rx.Y, hybrid ? &F.F : nullptr});

        EstimatorConfig ecfg = cfg.estimator;
        ecfg.prior = cfg.prior;

        auto record = [&](EstimatorId id, auto &&fn)
        {
            const int k = static_cast<int>(id);
            const auto t0 = clock::now();
            try
            {
                fn(k);
                rec.ok[k] = std::isfinite(rec.nmse_h[k]);
                if (!rec.ok[k])
                    rec.failure[k] = "non-finite channel estimate";
            }
            catch (const NumericalError &e)
            {
                rec.failure[k] = e.what();
            }
            catch (const RankError &e)
            {
                rec.failure[k] = e.what();
            }
            catch (const SingularityError &e)
            {
                rec.failure[k] = e.what();
            }
            rec.seconds[k] = std::chrono::duration<double>(clock::now() - t0).count();
        };

        record(EstimatorId::bound,
               [&](int k) { rec.nmse_h[k] = nmse(hybrid_full_channel(nets.oracle, geom, rec.p, wave), H); });

        auto run_nn = [&](const HybridNet &net, int k)
        {
            const EstimateResult r = hybrid ? nnhmp_hybrid_estimate(S, rx.Y, F, net, geom, wave, ecfg)
                                            : nnhmp_estimate(S, rx.Y, net, geom, wave, ecfg);
            rec.nmse_h[k] = nmse(r.H, H);
            rec.nmse_p[k] = (r.p - rec.p).squared_norm() / rec.p.squared_norm();
            if (k == static_cast<int>(EstimatorId::nnhmp))
                rec.squared_error_p = (r.p - rec.p).squared_norm();
        };
        record(EstimatorId::nnhmp, [&](int k) { run_nn(nets.oracle, k); });
        record(EstimatorId::appmod, [&](int k) { run_nn(nets.appmod, k); });
        record(EstimatorId::ls, [&](int k)
               { rec.nmse_h[k] = nmse(hybrid ? ls_estimate_hybrid(S, rx.Y, F) : ls_estimate(S, rx.Y), H); });

        const FisherInfo fi = fim(rec.p, nets.oracle, geom, S, rx.gamma, wave, hybrid ? &F : nullptr);
        const CrlbValue cb = crlb_position(fi, rec.p);
        rec.crlb = cb.bound;
        rec.crlb_normalized = cb.normalized;
        return rec;
    }

    DbStat db_stat(const std::vector<double> &linear)
    {
        DbStat s;
        if (linear.empty())
        {
            s.mean_db = s.stderr_db = std::numeric_limits<double>::quiet_NaN();
            return s;
        }
        double mean = 0.0;
        for (double v : linear)
            mean += v;
        mean /= static_cast<double>(linear.size());
        s.mean_db = db(mean);
        if (linear.size() < 2)
        {
            s.stderr_db = std::numeric_limits<double>::quiet_NaN();
            return s;
        }
        double ss = 0.0;
        for (double v : linear)
            ss += (v - mean) * (v - mean);
        const double se = std::sqrt(ss / static_cast<double>(linear.size() - 1) / static_cast<double>(linear.size()));
        s.stderr_db = 10.0 / std::log(10.0) * se / mean;
        return s;
    }

    PointResult run_point(const ExperimentConfig &cfg, double value, const SurrogatePair &nets, int threads)
    {
        cfg.validate();
        nets.oracle.validate();
        nets.appmod.validate();
        const ExperimentConfig::Point pt = cfg.point(value);
        PointResult out;
        out.value = value;
        out.trials.resize(cfg.trials);
        parallel_for(static_cast<std::size_t>(cfg.trials), threads,
                     [&](std::size_t t) { out.trials[t] = run_trial(cfg, pt, nets, static_cast<int>(t)); });

        std::vector<double> crlb;
        for (const auto &t : out.trials)
            crlb.push_back(t.crlb_normalized);
        const double crlb_db = db_stat(crlb).mean_db;

        for (int k = 0; k < num_estimators; ++k)
        {
            PointSummary &row = out.rows[k];
            row.var = cfg.sweep_var;
            row.value = value;
            row.estimator = static_cast<EstimatorId>(k);
            std::vector<double> h, p;
            double wall = 0.0;
            for (const auto &t : out.trials)
            {
                wall += t.seconds[k];
                if (!t.ok[k])
                {
                    ++row.trials_failed;
                    continue;
                }
                ++row.trials_ok;
                h.push_back(t.nmse_h[k]);
                if (std::isfinite(t.nmse_p[k]))
                    p.push_back(t.nmse_p[k]);
            }
            const DbStat sh = db_stat(h);
            row.nmse_h_db = sh.mean_db;
            row.nmse_h_stderr_db = sh.stderr_db;
            const DbStat sp = db_stat(p);
            row.nmse_p_db = sp.mean_db;
            row.nmse_p_stderr_db = sp.stderr_db;
            row.crlb_db = crlb_db;
            row.wall_s = cfg.timing ? wall : 0.0;
        }
        return out;
    }

    std::vector<PointResult> sweep(const ExperimentConfig &cfg, const SurrogatePair &nets, int threads)
    {
        cfg.validate();
        std::vector<PointResult> out;
        out.reserve(cfg.sweep_values.size());
        for (double v : cfg.sweep_values)
            out.push_back(run_point(cfg, v, nets, threads));
        return out;
    }

    namespace
    {
        std::string fmt(double v)
        {
            if (std::isnan(v))
                return "nan";
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.10g", v);
            return buf;
        }
    } // namespace

    void write_sweep_csv(std::ostream &os, const std::vector<PointResult> &points)
    {
        os << "sweep_var,sweep_value,estimator,trials_ok,trials_failed,nmse_h_db,nmse_h_stderr_db,nmse_p_db,"
              "nmse_p_stderr_db,crlb_db,wall_s\n";
        for (const auto &pt : points)
            for (const auto &r : pt.rows)
                os << sweep_var_name(r.var) << ',' << fmt(r.value) << ',' << estimator_name(r.estimator) << ','
                   << r.trials_ok << ',' << r.trials_failed << ',' << fmt(r.nmse_h_db) << ','
                   << fmt(r.nmse_h_stderr_db) << ',' << fmt(r.nmse_p_db) << ',' << fmt(r.nmse_p_stderr_db) << ','
                   << fmt(r.crlb_db) << ',' << fmt(r.wall_s) << '\n';
        if (!os)
            throw IoError("failed writing sweep CSV");
    }

    void write_trials_csv(std::ostream &os, const PointResult &point)
    {
        os << "trial,seed,hash,x,y,z,estimator,ok,nmse_h_db,nmse_p_db,crlb_db\n";
        for (const auto &t : point.trials)
            for (int k = 0; k < num_estimators; ++k)
            {
                char hash[20];
                std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(t.hash));
                os << t.trial << ',' << t.seed << ',' << hash << ',' << fmt(t.p.x) << ',' << fmt(t.p.y) << ','
                   << fmt(t.p.z) << ',' << estimator_name(static_cast<EstimatorId>(k)) << ',' << (t.ok[k] ? 1 : 0)
                   << ',' << fmt(t.ok[k] ? db(t.nmse_h[k]) : std::nan("")) << ','
                   << fmt(t.ok[k] && std::isfinite(t.nmse_p[k]) ? db(t.nmse_p[k]) : std::nan("")) << ','
                   << fmt(db(t.crlb_normalized)) << '\n';
            }
        if (!os)
            throw IoError("failed writing trial CSV");
    }

    // ---- training ---------------------------------------------------------------------------

    TrainConfig train_config(const ExperimentConfig &cfg)
    {
        TrainConfig t;
        t.hidden_count = cfg.training.hidden_count;
        t.epochs = cfg.training.epochs;
        t.batch_size = cfg.training.batch_size;
        t.learning_rate = cfg.training.learning_rate;
        t.final_learning_rate = cfg.training.final_learning_rate;
        t.validation_fraction = cfg.training.validation_fraction;
        t.patience = cfg.training.patience;
        t.seed = cfg.training_seed;
        t.box = relative_box(cfg.largest_geometry(), cfg.prior);
        return t;
    }

    TrainSummary train_surrogates(const ExperimentConfig &cfg, int threads)
    {
        cfg.validate();
        const SurfaceGeometry geom = cfg.largest_geometry();
        const WaveConfig wave = WaveConfig::from_frequency(cfg.frequency_hz);
        const QuadratureRule quad(cfg.quadrature_order);
        const TrainConfig tc = train_config(cfg);
        const std::uint64_t s_train = mix_seed(cfg.training_seed, 0);
        const std::uint64_t s_hold = mix_seed(cfg.training_seed, 1);

        TrainSummary out;
        {
            const auto oracle = generate_training_set(geom, tc.box, wave, quad, cfg.training.samples, s_train,
                                                      ChannelModel::quadrature, threads);
            out.nets.oracle = train(oracle, tc, cfg.frequency_hz, &out.oracle_report);
        }
        {
            const auto app = generate_training_set(geom, tc.box, wave, quad, cfg.training.samples, s_train,
                                                   ChannelModel::approximate, threads);
            out.nets.appmod = train(app, tc, cfg.frequency_hz, &out.appmod_report);
        }
        const auto hold_q = generate_training_set(geom, tc.box, wave, quad, cfg.training.holdout_samples, s_hold,
                                                  ChannelModel::quadrature, threads);
        const auto hold_a = generate_training_set(geom, tc.box, wave, quad, cfg.training.holdout_samples, s_hold,
                                                  ChannelModel::approximate, threads);
        out.oracle_holdout_db = db(surrogate_nmse(out.nets.oracle, hold_q));
        out.appmod_holdout_db = db(surrogate_nmse(out.nets.appmod, hold_a));
        out.appmod_vs_oracle_db = db(surrogate_nmse(out.nets.appmod, hold_q));
        return out;
    }

    // ---- CRLB sweep -------------------------------------------------------------------------

    std::vector<CrlbRow> crlb_sweep(const ExperimentConfig &cfg, const HybridNet &net, int threads)
    {
        cfg.validate();
        net.validate();
        const WaveConfig wave = WaveConfig::from_frequency(cfg.frequency_hz);
        const QuadratureRule quad(cfg.quadrature_order);
        std::vector<CrlbRow> rows;
        for (double v : cfg.sweep_values)
        {
            const ExperimentConfig::Point pt = cfg.point(v);
            std::vector<double> vals(cfg.trials);
            parallel_for(static_cast<std::size_t>(cfg.trials), threads,
                         [&](std::size_t t)
                         {
                             // Same draws as run_trial, so the numbers line up with the sweep CSV.
                             const std::uint64_t seed = trial_seed(cfg.master_seed, static_cast<int>(t));
                             std::mt19937_64 rng(mix_seed(seed, 0));
                             std::uniform_real_distribution<double> ux(cfg.prior.x_min, cfg.prior.x_max);
                             std::uniform_real_distribution<double> uy(cfg.prior.y_min, cfg.prior.y_max);
                             std::uniform_real_distribution<double> uz(cfg.prior.z_min, cfg.prior.z_max);
                             Position p;
                             p.x = ux(rng);
                             p.y = uy(rng);
                             p.z = uz(rng);
                             const CMat H = full_channel(pt.geometry, p, wave, quad).stacked();
                             const CMat S = gen_pilots(pt.geometry.N(), pt.L, mix_seed(seed, 1)).assemble();
                             Combiner F;
                             const bool hybrid = pt.P > 0;
                             if (hybrid)
                                 F = gen_combiner(pt.P, pt.geometry.M(), mix_seed(seed, 3), false);
                             const CMat G = hybrid ? combine_channel(F, H) : H;
                             const double signal = (S * G).squaredNorm() / static_cast<double>(3 * pt.L * G.cols());
                             const double gamma = from_db(pt.snr_db) / signal;
                             vals[t] = crlb_position(fim(p, net, pt.geometry, S, gamma, wave, hybrid ? &F : nullptr), p)
                                           .normalized;
                         });
            rows.push_back({v, db_stat(vals).mean_db});
        }
        return rows;
    }

    void write_crlb_csv(std::ostream &os, SweepVar var, const std::vector<CrlbRow> &rows)
    {
        os << "sweep_var,sweep_value,crlb_db\n";
        for (const auto &r : rows)
            os << sweep_var_name(var) << ',' << fmt(r.value) << ',' << fmt(r.crlb_db) << '\n';
        if (!os)
            throw IoError("failed writing CRLB CSV");
    }

} // namespace hmimo
