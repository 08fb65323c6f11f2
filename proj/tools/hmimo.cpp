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

// Command-line front end: train, sweep, point, field-dump, crlb, config.

#include "hmimo/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace
{
    using namespace hmimo;

    constexpr int exit_config = 2;
    constexpr int exit_numerical = 3;
    constexpr int exit_io = 4;

    struct Common
    {
        std::string config;
        std::string profile = "ci";
        std::optional<std::uint64_t> seed;
        std::string out;
        int threads = 1;
        bool timing = false;
    };

    void add_common(CLI::App *app, Common &c)
    {
        app->add_option("--config", c.config, "JSON config; keys override the profile");
        app->add_option("--profile", c.profile, "base profile")->check(CLI::IsMember({"ci", "paper"}));
        app->add_option("--seed", c.seed, "master seed (training seed for train)");
        app->add_option("--out", c.out, "output path");
        app->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
    }

    ExperimentConfig resolve(const Common &c)
    {
        ExperimentConfig cfg = profile_config(c.profile);
        if (!c.config.empty())
            cfg = load_config(c.config, cfg);
        cfg.timing = c.timing;
        cfg.validate();
        return cfg;
    }

    // Opens `path` for writing, or returns stdout when it is empty or "-".
    class Output
    {
    public:
        explicit Output(const std::string &path) : path_(path)
        {
            if (!path.empty() && path != "-")
            {
                file_.open(path);
                if (!file_)
                    throw IoError("cannot open '" + path + "' for writing");
            }
        }
        std::ostream &stream() { return file_.is_open() ? static_cast<std::ostream &>(file_) : std::cout; }
        void close()
        {
            if (file_.is_open())
            {
                file_.close();
                if (!file_)
                    throw IoError("failed writing '" + path_ + "'");
            }
        }

    private:
        std::string path_;
        std::ofstream file_;
    };

    SurrogatePair load_nets(const ExperimentConfig &cfg)
    {
        SurrogatePair nets;
        nets.oracle = load_net_file(cfg.oracle_net);
        nets.appmod = load_net_file(cfg.appmod_net);
        return nets;
    }

    bool any_estimator_dead(const std::vector<PointResult> &points)
    {
        for (const auto &p : points)
            for (const auto &r : p.rows)
                if (r.trials_ok == 0)
                {
                    std::fprintf(stderr, "error: %s failed in all %d trials at %s = %g\n", estimator_name(r.estimator),
                                 r.trials_failed, sweep_var_name(r.var), r.value);
                    return true;
                }
        return false;
    }

    int cmd_train(const Common &c)
    {
        ExperimentConfig cfg = resolve(c);
        if (c.seed)
            cfg.training_seed = *c.seed;
        if (!c.out.empty())
        {
            cfg.oracle_net = c.out + "/oracle_net.json";
            cfg.appmod_net = c.out + "/appmod_net.json";
        }
        const TrainSummary s = train_surrogates(cfg, c.threads);
        save_net_file(s.nets.oracle, cfg.oracle_net);
        save_net_file(s.nets.appmod, cfg.appmod_net);
        std::printf("oracle surrogate: hidden %d, validation %.2f dB, held-out %.2f dB (best epoch %d of %d) -> %s\n",
                    s.nets.oracle.hidden_count, s.oracle_report.validation_nmse_db, s.oracle_holdout_db,
                    s.oracle_report.best_epoch, s.oracle_report.epochs_run, cfg.oracle_net.c_str());
        std::printf("appmod surrogate: hidden %d, validation %.2f dB, held-out %.2f dB, vs quadrature %.2f dB -> %s\n",
                    s.nets.appmod.hidden_count, s.appmod_report.validation_nmse_db, s.appmod_holdout_db,
                    s.appmod_vs_oracle_db, cfg.appmod_net.c_str());
        return 0;
    }

    int cmd_sweep(const Common &c)
    {
        ExperimentConfig cfg = resolve(c);
        if (c.seed)
            cfg.master_seed = *c.seed;
        const SurrogatePair nets = load_nets(cfg);
        const auto points = sweep(cfg, nets, c.threads);
        Output out(c.out.empty() ? cfg.output_csv : c.out);
        write_sweep_csv(out.stream(), points);
        out.close();
        return any_estimator_dead(points) ? exit_numerical : 0;
    }

    int cmd_point(const Common &c, std::optional<double> value)
    {
        ExperimentConfig cfg = resolve(c);
        if (c.seed)
            cfg.master_seed = *c.seed;
        const SurrogatePair nets = load_nets(cfg);
        const PointResult r = run_point(cfg, value.value_or(cfg.sweep_values.front()), nets, c.threads);
        Output out(c.out);
        write_trials_csv(out.stream(), r);
        out.close();
        for (const auto &row : r.rows)
            std::fprintf(stderr, "%-7s ok %d failed %d nmse_h %.2f dB nmse_p %.2f dB\n", estimator_name(row.estimator),
                         row.trials_ok, row.trials_failed, row.nmse_h_db, row.nmse_p_db);
        return any_estimator_dead({r}) ? exit_numerical : 0;
    }

    int cmd_field(const Common &c, const std::string &axis, std::optional<double> value, int resolution)
    {
        const ExperimentConfig cfg = resolve(c);
        FieldPlane plane;
        plane.fixed_axis = axis == "x" ? 0 : (axis == "y" ? 1 : 2);
        const double lo[3] = {cfg.prior.x_min, cfg.prior.y_min, cfg.prior.z_min};
        const double hi[3] = {cfg.prior.x_max, cfg.prior.y_max, cfg.prior.z_max};
        plane.fixed_value = value.value_or(0.5 * (lo[plane.fixed_axis] + hi[plane.fixed_axis]));
        const int u = plane.fixed_axis == 0 ? 1 : 0;
        const int v = plane.fixed_axis == 2 ? 1 : 2;
        plane.u_min = lo[u];
        plane.u_max = hi[u];
        plane.v_min = lo[v];
        plane.v_max = hi[v];
        plane.resolution_u = plane.resolution_v = resolution;
        const auto samples = field_dump(plane, cfg.geometry, WaveConfig::from_frequency(cfg.frequency_hz),
                                        QuadratureRule(cfg.quadrature_order));
        Output out(c.out);
        write_field_csv(out.stream(), samples);
        out.close();
        return 0;
    }

    int cmd_crlb(const Common &c)
    {
        ExperimentConfig cfg = resolve(c);
        if (c.seed)
            cfg.master_seed = *c.seed;
        const HybridNet net = load_net_file(cfg.oracle_net);
        const auto rows = crlb_sweep(cfg, net, c.threads);
        Output out(c.out);
        write_crlb_csv(out.stream(), cfg.sweep_var, rows);
        out.close();
        return 0;
    }

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Near-field holographic MIMO channel estimation experiments"};
    app.require_subcommand(1);

    Common train_c, sweep_c, point_c, field_c, crlb_c;
    auto *train = app.add_subcommand("train", "train the oracle and closed-form surrogates");
    add_common(train, train_c);
    auto *sw = app.add_subcommand("sweep", "Monte-Carlo sweep to CSV");
    add_common(sw, sweep_c);
    sw->add_flag("--timing", sweep_c.timing, "fill the wall_s column");
    auto *point = app.add_subcommand("point", "one sweep point, per-trial CSV");
    add_common(point, point_c);
    std::optional<double> point_value;
    point->add_option("--value", point_value, "sweep value (default: first grid value)");
    point->add_flag("--timing", point_c.timing, "record estimator wall time");
    auto *field = app.add_subcommand("field-dump", "h_xx of the first patch pair over a plane of positions");
    add_common(field, field_c);
    std::string axis = "z";
    std::optional<double> field_value;
    int resolution = 41;
    field->add_option("--axis", axis, "fixed axis")->check(CLI::IsMember({"x", "y", "z"}));
    field->add_option("--value", field_value, "fixed coordinate (default: middle of the prior)");
    field->add_option("--resolution", resolution, "grid points per free axis")->check(CLI::Range(2, 100000));
    auto *crlb = app.add_subcommand("crlb", "normalized CRLB over the sweep grid");
    add_common(crlb, crlb_c);
    Common show_c;
    auto *show = app.add_subcommand("config", "print the resolved config as JSON");
    add_common(show, show_c);

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_config;
    }

    try
    {
        if (*train)
            return cmd_train(train_c);
        if (*sw)
            return cmd_sweep(sweep_c);
        if (*point)
            return cmd_point(point_c, point_value);
        if (*field)
            return cmd_field(field_c, axis, field_value, resolution);
        if (*crlb)
            return cmd_crlb(crlb_c);
        if (*show)
        {
            Output out(show_c.out);
            out.stream() << config_to_json(resolve(show_c));
            out.close();
            return 0;
        }
    }
    catch (const ConfigError &e)
    {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return exit_config;
    }
    catch (const IoError &e)
    {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return exit_io;
    }
    catch (const RangeError &e)
    {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return exit_config;
    }
    catch (const Error &e)
    {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return exit_numerical;
    }
    return 0;
}
