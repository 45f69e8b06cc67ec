// capopt: decoupling capacitor analysis and optimization front end.

#include <CLI11.hpp>

#include "capopt/capopt.hpp"

namespace fs = std::filesystem;
using namespace capopt;

namespace {

struct Options {
    std::string config;
    std::string out;
    std::string assignment;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
};

RunConfig load(const Options& o) {
    RunConfig c = read_config_file(o.config);
    if (o.seed) c.ga.rng_seed = *o.seed;
    if (o.jobs) {
        if (*o.jobs < 1) throw ConfigError("--jobs must be at least 1");
        c.ga.jobs = *o.jobs;
    }
    if (!o.out.empty()) c.output_dir = o.out;
    return c;
}

void write_analysis(const EvaluationContext& ctx, const fs::path& dir) {
    write_text_file(dir / "inductance.txt", format_inductance_report(ctx.inductance));
    write_text_file(dir / "srf.txt", format_srf_table(ctx.catalog));
}

int cmd_analyze(const Options& o) {
    const RunConfig c = load(o);
    const EvaluationContext ctx = prepare_board(load_inputs(c, false));
    fs::create_directories(c.output_dir);
    write_analysis(ctx, c.output_dir);
    std::cout << "ports analyzed: " << ctx.inductance.entries.size() << " (" << ctx.inductance.failures.size()
              << " failed)\n";
    for (const auto& e : ctx.inductance.entries)
        std::cout << "  " << e.label << '\t' << format_sig(e.inductance * 1e9) << " nH\n";
    std::cout << "capacitors:\n";
    for (const auto& e : ctx.catalog.entries)
        std::cout << "  " << e.name << "\tSRF " << format_sig(e.srf / 1e6) << " MHz\n";
    std::cout << "reports written to " << c.output_dir.string() << '\n';
    return 0;
}

/// Optional transient outputs for one Z(f): CSV always, PWL when asked.
void write_transient(const EvaluationContext& ctx, const std::vector<Complex>& z, const fs::path& csv,
                     const fs::path* pwl) {
    try {
        const TransientResult tr = transient_for(ctx, z);
        write_text_file(csv, format_transient_csv(tr.step));
        if (pwl) write_text_file(*pwl, export_pwl(tr.worst));
    } catch (const FitError& e) {
        if (ctx.weights.transient > 0.0) throw;
        warn(std::string("transient plot data skipped: ") + e.what());
    }
}

int cmd_optimize(const Options& o) {
    const RunConfig c = load(o);
    const EvaluationContext ctx = prepare(load_inputs(c));
    const fs::path dir = c.output_dir;
    fs::create_directories(dir);
    fs::remove(dir / "FAILED");
    try {
        write_analysis(ctx, dir);
        const Assignment initial = assignment_for(ctx, ctx.initial);
        write_text_file(dir / "initial_assignment.txt", format_assignment(initial));
        std::cout << "initial guess: " << format_quantities(ctx.initial) << '\n';

        const OptimizationReport rep = run_optimization(ctx, c.ga, [](const GenerationRecord& r) {
            std::cout << "gen " << r.generation << " best " << format_sig(r.best_score) << " mean "
                      << format_sig(r.mean_score) << '\n'
                      << std::flush;
        });

        write_text_file(dir / "assignment.txt", format_assignment(rep.assignment));
        write_text_file(dir / "score.txt", format_score(rep.breakdown));
        write_text_file(dir / "convergence.csv", format_convergence_csv(rep.ga.log));
        const auto z_init = observed_impedance(ctx, initial);
        const auto z_opt = observed_impedance(ctx, rep.assignment);
        write_text_file(dir / "zf_initial.csv", format_impedance_csv(ctx.grid(), z_init, ctx.target));
        write_text_file(dir / "zf_optimized.csv", format_impedance_csv(ctx.grid(), z_opt, ctx.target));
        const fs::path pwl = dir / "worst_case.pwl";
        if (ctx.weights.transient <= 0.0) fs::remove(pwl);
        write_transient(ctx, z_init, dir / "transient_initial.csv", nullptr);
        write_transient(ctx, z_opt, dir / "transient_optimized.csv", ctx.weights.transient > 0.0 ? &pwl : nullptr);

        std::cout << "best quantities: " << format_quantities(rep.ga.best) << '\n';
        std::cout << format_score(rep.breakdown);
        std::cout << "outputs written to " << dir.string() << '\n';
    } catch (const std::exception& e) {
        write_text_file(dir / "FAILED", std::string(e.what()) + '\n');
        throw;
    }
    return 0;
}

int cmd_score(const Options& o) {
    const RunConfig c = load(o);
    const EvaluationContext ctx = prepare(load_inputs(c));
    const Assignment a = read_assignment_file(o.assignment);
    const ScoreBreakdown s = score_assignment(ctx, a);
    const std::string text = format_score(s);
    std::cout << text;
    if (!o.out.empty()) {
        fs::create_directories(o.out);
        write_text_file(fs::path(o.out) / "score.txt", text);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Decoupling capacitor selection and placement for power distribution networks"};
    app.require_subcommand(1);
    Options o;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "Run configuration file")->required();
        sub->add_option("--seed", o.seed, "Random seed (overrides the config)");
        sub->add_option("--jobs", o.jobs, "Parallel scoring threads");
        sub->add_option("--out", o.out, "Output directory (overrides the config)");
    };
    auto* analyze = app.add_subcommand("analyze", "Loop inductance and capacitor SRF reports");
    auto* optimize = app.add_subcommand("optimize", "Run the genetic optimizer");
    auto* score = app.add_subcommand("score", "Score a given assignment");
    common(analyze);
    common(optimize);
    common(score);
    score->add_option("--assignment", o.assignment, "Assignment file to score")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (analyze->parsed()) return cmd_analyze(o);
        if (optimize->parsed()) return cmd_optimize(o);
        return cmd_score(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const OptimizationError& e) {
        std::cerr << "optimization failed: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
