// Experiment runner behind the CLI: executes one configured suite (verify,
// sample, disintegrate or checks), writes the output files and returns the
// report plus process exit code. All randomness comes from the configured
// seed through dedicated counter streams, so repeated runs are identical.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "qnd/config.hpp"
#include "qnd/cylinder.hpp"
#include "qnd/disintegration.hpp"
#include "qnd/history.hpp"
#include "qnd/ndm.hpp"
#include "qnd/operators.hpp"
#include "qnd/povm.hpp"
#include "qnd/random_objects.hpp"
#include "qnd/report.hpp"
#include "qnd/rng.hpp"
#include "qnd/stats.hpp"

namespace qnd {

struct RunResult {
    RunReport report;
    int exit_code = 1;
};

namespace detail {

inline CylinderFunction random_cylinder(CounterRng& rng, const Alphabet& ab, int start, int end,
                                        bool nonneg) {
    std::vector<Complex> t(word_count(ab.size(), end - start + 1));
    for (auto& v : t)
        v = nonneg ? Complex(rng.next_double(), 0.0)
                   : Complex(rng.next_double() - 0.5, rng.next_double() - 0.5);
    return CylinderFunction(ab, start, end, std::move(t));
}

inline CylinderFunction random_prefix_indicator(CounterRng& rng, const Alphabet& ab, int max_len) {
    int len = 1 + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(max_len));
    Word w;
    for (int i = 0; i < len; ++i)
        w.push_back(static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(ab.size())));
    return CylinderFunction::indicator(ab, HistoryPrefix(w));
}

inline std::vector<CylinderFunction> random_partition(CounterRng& rng, const Alphabet& ab,
                                                      int depth) {
    std::size_t words = word_count(ab.size(), depth);
    std::size_t groups = 2 + rng.next_u64() % 3;
    if (groups > words) groups = words;
    std::vector<std::vector<Complex>> tables(groups, std::vector<Complex>(words, 0.0));
    for (std::size_t w = 0; w < words; ++w) {
        std::size_t g = w < groups ? w : rng.next_u64() % groups;  // no empty parts
        tables[g][w] = 1.0;
    }
    std::vector<CylinderFunction> parts;
    for (auto& t : tables) parts.emplace_back(ab, 1, depth, std::move(t));
    return parts;
}

inline MeasurementSchedule xz_alternation(int steps) {
    auto involution = [](const Matrix& op) {
        Matrix id = Matrix::Identity(2, 2);
        return Instrument(Alphabet({"-1", "1"}),
                          {Matrix(0.5 * (id - op)), Matrix(0.5 * (id + op))});
    };
    std::vector<Instrument> list;
    for (int t = 1; t <= steps; ++t) list.push_back(involution(t % 2 ? sigma_x() : sigma_z()));
    return MeasurementSchedule::from_steps(std::move(list));
}

template <typename Fn>
void timed(RunReport& report, const std::string& name, Fn&& fn) {
    auto start = std::chrono::steady_clock::now();
    fn();
    auto stop = std::chrono::steady_clock::now();
    report.timings_ms[name] =
        std::chrono::duration<double, std::milli>(stop - start).count();
}

inline int effective_window(const MeasurementSchedule& schedule, int want) {
    int h = schedule.horizon();
    return h == kUnboundedHorizon ? want : std::min(want, h);
}

inline MixtureState random_mixture(CounterRng& rng, int labels) {
    return MixtureState{random_probability_vector(rng, labels), {}};
}

}  // namespace detail

// -------------------------------------------------------------- verify

inline void run_verify(const ExperimentConfig& cfg, RunReport& report) {
    MeasurementSchedule schedule =
        cfg.model ? cfg.model->build().schedule()
                  : (cfg.schedule ? cfg.schedule->build()
                                  : throw ConfigError("verify: needs 'model' or 'schedule'"));
    DensityMatrix state =
        cfg.model ? cfg.model->build().density(cfg.model->mixture())
                  : DensityMatrix(Matrix(Matrix::Identity(schedule.dim(), schedule.dim()) /
                                         static_cast<double>(schedule.dim())));
    const Alphabet& ab = schedule.alphabet();
    CounterRng rng(cfg.seed, kAuxStreamBase + 1);

    detail::timed(report, "consistency", [&] {
        double worst = 0.0;
        int depth = detail::effective_window(schedule, cfg.depth) - 1;
        for (int len = 0; len <= depth; ++len) {
            Word w(static_cast<std::size_t>(len), 0);
            do worst = std::max(worst,
                                check_consistency(schedule, state, HistoryPrefix(w)).residual);
            while (len > 0 && next_word(w, ab.size()));
        }
        report.add_check("kolmogorov_consistency", worst, 1e-10, worst <= 1e-10);
    });

    detail::timed(report, "decoherence", [&] {
        int n = detail::effective_window(schedule, 4);
        auto res = check_decoherence(schedule, 1, n, 1e-10);
        report.add_check("ideal_decoherence", res.residual, 1e-10, res.ok);
    });

    detail::timed(report, "povm_identity", [&] {
        double worst = 0.0;
        for (int d = 1; d <= detail::effective_window(schedule, 3); ++d) {
            Matrix total = phi_cylinder(schedule, CylinderFunction::constant(ab, 1, d, 1.0));
            worst = std::max(worst,
                             max_abs(total - Matrix::Identity(schedule.dim(), schedule.dim())));
        }
        report.add_check("povm_total_mass", worst, 1e-12, worst <= 1e-12);
    });

    detail::timed(report, "povm_duality", [&] {
        double worst = 0.0;
        int end = detail::effective_window(schedule, 3);
        for (int i = 0; i < cfg.pairs; ++i) {
            auto f = detail::random_cylinder(rng, ab, 1, end, false);
            worst = std::max(worst, phi_duality_check(schedule, state, f, 1e-12).residual);
        }
        report.add_check("povm_duality", worst, 1e-12, worst <= 1e-12);
    });

    detail::timed(report, "povm_additivity", [&] {
        double worst = 0.0;
        int depth = detail::effective_window(schedule, 3);
        for (int i = 0; i < cfg.partitions; ++i) {
            auto parts = detail::random_partition(rng, ab, depth);
            worst = std::max(worst, phi_sigma_additivity_check(schedule, parts, 1e-10).residual);
        }
        report.add_check("povm_sigma_additivity", worst, 1e-10, worst <= 1e-10);
    });

    int h = schedule.horizon();
    if (h == kUnboundedHorizon || h >= 3) {
        detail::timed(report, "homomorphism", [&] {
            double worst = 0.0;
            int end = detail::effective_window(schedule, 4);
            for (int i = 0; i < cfg.pairs; ++i) {
                auto delta = detail::random_prefix_indicator(rng, ab, 2);
                auto f = detail::random_cylinder(rng, ab, 3, end, false);
                worst = std::max(worst,
                                 phi_homomorphism_check(schedule, f, delta, 1e-10).product_residual);
            }
            report.add_check("homomorphism", worst, 1e-10, worst <= 1e-10);
        });
    }
}

// -------------------------------------------------------------- sample

inline std::vector<Trajectory> run_sample(const ExperimentConfig& cfg, RunReport& report,
                                          const std::filesystem::path& out) {
    if (!cfg.model) throw ConfigError("sample: needs a 'model'");
    NdmModel model = cfg.model->build();
    MixtureState omega = cfg.model->mixture();

    std::vector<Trajectory> trajectories;
    detail::timed(report, "sampling", [&] {
        trajectories = sample_trajectories(model, omega, cfg.horizon, cfg.trajectories, cfg.seed,
                                           cfg.jobs, cfg.record_path);
    });
    detail::timed(report, "write_trajectories", [&] {
        write_trajectories_jsonl(out / "trajectories.jsonl", trajectories);
    });
    report.outputs.push_back("trajectories.jsonl");

    int correct = 0;
    double posterior_mass = 0.0;
    std::vector<int> label_counts(static_cast<std::size_t>(model.label_count()), 0);
    for (const auto& t : trajectories) {
        correct += t.classified_label == t.true_label;
        posterior_mass += t.final_posterior[static_cast<std::size_t>(t.true_label)];
        ++label_counts[static_cast<std::size_t>(t.true_label)];
    }
    double n = static_cast<double>(trajectories.size());
    report.extra["sample_stats"] = {{"classification_accuracy", correct / n},
                                    {"mean_posterior_on_truth", posterior_mass / n},
                                    {"label_counts", label_counts}};
    report.add_check("posterior_mass_on_truth", 1.0 - posterior_mass / n, 0.05,
                     1.0 - posterior_mass / n <= 0.05, false);

    if (cfg.record_path) {
        double gamma = model.separation_gap();
        for (int t = 1; t <= cfg.horizon; t = t < 8 ? t + 1 : t * 2) {
            double err = 0.0;
            for (const auto& tr : trajectories)
                err += 1.0 - tr.posterior_path[static_cast<std::size_t>(t) - 1]
                                              [static_cast<std::size_t>(tr.true_label)];
            report.series.push_back({t, "posterior_error", err / n,
                                     std::exp(-t * gamma * gamma / 2.0) + 0.02});
        }
        emit_convergence_table(out / "convergence.csv", report);
        report.outputs.push_back("convergence.csv");
    }
    return trajectories;
}

// --------------------------------------------------------- disintegrate

inline void run_disintegrate(const ExperimentConfig& cfg, RunReport& report,
                             const std::filesystem::path& out) {
    if (!cfg.model) throw ConfigError("disintegrate: needs a 'model'");
    NdmModel model = cfg.model->build();
    MixtureState omega = cfg.model->mixture();
    auto schedule = model.schedule();
    auto rho = model.density(omega);

    auto trajectories = run_sample(cfg, report, out);

    Disintegration exact;
    detail::timed(report, "exact_disintegration", [&] {
        exact = disintegrate_exact(model, omega, cfg.depth);
        auto rec = disintegration_reconstruction(exact, schedule, rho, 1e-10);
        report.add_check("reconstruction", rec.residual, 1e-10, rec.ok);
    });

    EmpiricalDisintegration emp;
    detail::timed(report, "empirical_disintegration", [&] {
        emp = disintegrate_empirical(trajectories, cfg.depth, cfg.epsilon_mol);
        auto agree = disintegration_agreement(emp, exact, cfg.trajectories);
        report.add_check("cluster_count",
                         std::abs(static_cast<double>(emp.disintegration.labels.size()) -
                                  static_cast<double>(exact.labels.size())),
                         0.0, agree.label_counts_match);
        if (agree.label_counts_match) {
            report.add_check("empirical_weights_3sigma", agree.weight_deviation,
                             3.0 * std::sqrt(0.25 / cfg.trajectories), agree.weights_within_3sigma);
            report.add_check("empirical_conditional_tv", agree.conditional_tv, 0.05,
                             agree.conditional_tv <= 0.05);
        }
    });

    if (model.label_count() >= 2) {
        detail::timed(report, "mutual_singularity", [&] {
            auto rep = mutual_singularity_check(exact, cfg.tv_depths, cfg.tv_goal);
            double weakest = 1.0;
            std::size_t n = exact.labels.size();
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = a + 1; b < n; ++b)
                    weakest = std::min(weakest, rep.tv.back()[a][b]);
            report.add_check("mutual_singularity_tv", weakest, cfg.tv_goal, rep.ok);
            for (std::size_t d = 0; d < rep.depths.size(); ++d)
                report.series.push_back({rep.depths[d], "pair_tv_shortfall",
                                         1.0 - rep.tv[d][0][1], 1.0 - rep.hellinger_ref[d][0][1]});
        });
    }

    detail::timed(report, "zero_one_law", [&] {
        auto rep = zero_one_law_check(model, cfg.zero_one_interval.first,
                                      cfg.zero_one_interval.second);
        double worst = 0.0;
        for (std::size_t nu = 0; nu < rep.estimates.size(); ++nu) {
            double final = rep.estimates[nu].back();
            worst = std::max(worst, rep.limits[nu] ? 1.0 - final : final);
        }
        report.add_check("zero_one_law", worst, kZeroOneBand, rep.ok);
        report.extra["zero_one"] = {{"horizons", rep.horizons},
                                    {"estimates", rep.estimates},
                                    {"limits", rep.limits}};
    });

    detail::timed(report, "extremality", [&] {
        for (std::size_t nu = 0; nu < exact.labels.size(); ++nu) {
            auto res = extremality_check(exact, nu);
            report.add_check("extremal_conditional_" + std::to_string(exact.labels[nu]),
                             res.residual, kDeltaExt, res.extremal);
        }
        if (exact.labels.size() >= 2) {
            auto mix = mixture_extremality_check(exact);
            report.add_check("mixture_not_extremal", mix.residual, kDeltaExt, !mix.extremal);
        }
    });

    detail::timed(report, "moment_recovery", [&] {
        std::vector<double> p, moments;
        for (int nu = 0; nu <= model.max_label(); ++nu) p.push_back(model.p_one(nu));
        for (int k = 0; k <= model.max_label(); ++k)
            moments.push_back(
                lsw_probability(schedule, rho, HistoryPrefix(Word(static_cast<std::size_t>(k), 1))));
        auto rec = recover_weights_from_moments(p, moments);
        double worst = 0.0;
        for (std::size_t nu = 0; nu < rec.weights.size(); ++nu)
            worst = std::max(worst, std::abs(rec.weights[nu] - omega.weights[nu]));
        report.add_check("moment_recovery", worst, 1e-10, worst <= 1e-10);
        report.extra["moment_condition"] = rec.condition;
    });

    OrderedJson dj;
    dj["labels"] = emp.disintegration.labels;
    dj["weights"] = emp.disintegration.weights;
    dj["depth"] = emp.disintegration.depth;
    OrderedJson conditionals = OrderedJson::array();
    for (std::size_t i = 0; i < emp.disintegration.labels.size(); ++i) {
        OrderedJson measure;
        for (int len = 1; len <= emp.disintegration.depth; ++len) {
            Word w(static_cast<std::size_t>(len), 0);
            do measure[render_word(schedule.alphabet(), w)] =
                emp.disintegration.tables[i][static_cast<std::size_t>(len) - 1][word_index(w, 2)];
            while (next_word(w, 2));
        }
        conditionals.push_back(
            {{"label", emp.disintegration.labels[i]}, {"measure", measure}});
    }
    dj["conditionals"] = conditionals;
    dj["clustering"] = {{"tv_matrix", emp.clustering.tv_matrix},
                        {"cluster_sizes", emp.clustering.cluster_sizes},
                        {"cluster_frequency", emp.clustering.cluster_frequency},
                        {"epsilon_mol", emp.clustering.epsilon}};
    auto os = open_output(out / "disintegration.json");
    os << dj.dump(2) << '\n';
    report.outputs.push_back("disintegration.json");
}

// --------------------------------------------------------------- checks

inline void run_checks(const ExperimentConfig& cfg, RunReport& report,
                       const std::filesystem::path& out) {
    if (!cfg.model) throw ConfigError("checks: needs a 'model'");
    NdmModel model = cfg.model->build();
    MixtureState omega = cfg.model->mixture();
    auto schedule = model.schedule();
    auto rho = model.density(omega);
    const Alphabet& ab = schedule.alphabet();
    CounterRng rng(cfg.seed, kAuxStreamBase + 2);

    detail::timed(report, "random_consistency", [&] {
        double worst = 0.0;
        for (int i = 0; i < cfg.random_schedules; ++i) {
            int dim = 2 + static_cast<int>(rng.next_u64() % 7);
            auto steps = random_commuting_steps(rng, ab, dim, 5);
            auto rand_schedule = MeasurementSchedule::from_steps(std::move(steps));
            DensityMatrix state = random_density(rng, dim);
            for (int len = 0; len <= 4; ++len) {
                Word w(static_cast<std::size_t>(len), 0);
                do worst = std::max(
                       worst, check_consistency(rand_schedule, state, HistoryPrefix(w)).residual);
                while (len > 0 && next_word(w, 2));
            }
        }
        report.add_check("random_schedule_consistency", worst, 1e-10, worst <= 1e-10);
    });

    detail::timed(report, "homomorphism", [&] {
        double worst = 0.0;
        for (int i = 0; i < cfg.pairs; ++i) {
            auto delta = detail::random_prefix_indicator(rng, ab, 2);
            auto f = detail::random_cylinder(rng, ab, 3, 4, false);
            worst = std::max(worst,
                             phi_homomorphism_check(schedule, f, delta, 1e-10).product_residual);
        }
        report.add_check("homomorphism", worst, 1e-10, worst <= 1e-10);

        auto xz = detail::xz_alternation(3);
        auto f = CylinderFunction::indicator(ab, HistoryPrefix(3, Word{1}));
        auto delta = CylinderFunction::indicator(ab, HistoryPrefix(Word{1}));
        auto res = phi_homomorphism_check(xz, f, delta, 1e-10);
        report.add_check("homomorphism_fails_without_decoherence", res.product_residual, 0.1,
                         res.product_residual >= 0.1);
    });

    detail::timed(report, "dual_measure", [&] {
        std::vector<HistoryPrefix> prefixes{HistoryPrefix{}};
        for (int len = 1; len <= 3; ++len) {
            Word w(static_cast<std::size_t>(len), 0);
            do prefixes.emplace_back(w);
            while (next_word(w, 2));
        }
        double worst = 0.0;
        for (int i = 0; i < cfg.pairs; ++i) {
            auto state = model.density(detail::random_mixture(rng, model.label_count()));
            auto f = detail::random_cylinder(rng, ab, 4, 7, true);
            worst = std::max(worst, dual_measure_check(schedule, state, f, prefixes, 1e-9).residual);
        }
        report.add_check("dual_measure_identity", worst, 1e-9, worst <= 1e-9);
    });

    detail::timed(report, "tail_convergence", [&] {
        auto freq = phi_tail(schedule, TailFunctional::frequency_of(1),
                             {{2, 5}, {3, 12}, {4, 40}, {5, 200}});
        report.add_check("tail_frequency_converged", freq.final_delta, 1e-9, freq.converged);
        std::vector<double> f(static_cast<std::size_t>(model.label_count()), 0.0);
        f.back() = 1.0;
        auto ind = phi_tail(schedule, label_functional(model, f),
                            {{1, 40}, {2, 121}, {3, 402}});
        report.add_check("tail_label_indicator_converged", ind.final_delta, 1e-3, ind.converged);
        for (const auto& r : freq.records)
            if (!std::isnan(r.delta))
                report.series.push_back({r.window_end, "phi_tail_frequency", r.delta, 1e-9});
        for (const auto& r : ind.records)
            if (!std::isnan(r.delta))
                report.series.push_back({r.window_end, "phi_tail_label_indicator", r.delta, 1e-3});
    });

    detail::timed(report, "purification_sweep", [&] {
        double gamma = model.separation_gap();
        double worst_gap = 0.0;
        bool all_within = true;
        for (int h : {10, 30, 100, 300, 1000}) {
            auto batch =
                sample_trajectories(model, omega, h, 300,
                                    splitmix_mix(cfg.seed + static_cast<std::uint64_t>(h)), cfg.jobs);
            int errors = 0;
            for (const auto& t : batch) errors += t.classified_label != t.true_label;
            double err = errors / 300.0;
            double bound = std::exp(-h * gamma * gamma / 2.0) + 0.02;
            report.series.push_back({h, "classification_error", err, bound});
            if (err > bound) all_within = false;
            worst_gap = std::max(worst_gap, err - bound);
        }
        report.add_check("purification_envelope", worst_gap, 0.0, all_within);
    });

    emit_convergence_table(out / "convergence.csv", report);
    report.outputs.push_back("convergence.csv");
}

// ------------------------------------------------------------------ run

inline RunResult run(const ExperimentConfig& cfg) {
    RunReport report;
    report.kind = cfg.kind;
    report.seed = cfg.seed;
    report.config_echo = config_to_json(cfg);
    std::filesystem::path out(cfg.out_dir);
    std::filesystem::create_directories(out);

    if (cfg.kind == "verify")
        run_verify(cfg, report);
    else if (cfg.kind == "sample")
        run_sample(cfg, report, out);
    else if (cfg.kind == "disintegrate")
        run_disintegrate(cfg, report, out);
    else if (cfg.kind == "checks")
        run_checks(cfg, report, out);
    else
        throw ConfigError("unknown experiment kind '" + cfg.kind + "'");

    write_summary_csv(out / "summary.csv", report);
    report.outputs.push_back("summary.csv");
    report.outputs.push_back("report.json");
    write_report_json(out / "report.json", report, cfg.strict);
    int code = report.ok(cfg.strict) ? 0 : 1;
    return {std::move(report), code};
}

}  // namespace qnd
