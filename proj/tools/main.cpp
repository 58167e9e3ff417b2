#include <CLI11.hpp>

#include <iostream>

#include "dialoggen/pipeline.hpp"

namespace {

using namespace dialoggen;

int run_generate(const std::string& config_path, int n, const std::string& out_path,
                 std::optional<std::uint64_t> seed, const std::string& backend_kind, int workers,
                 const std::string& transcript_path, const std::string& audit_path) {
    GenerationConfig config = load_config(config_path);
    if (seed) {
        config.seed = *seed;
    }
    if (!backend_kind.empty()) {
        if (backend_kind == "mock") {
            config.backend.kind = BackendKind::Mock;
        } else if (backend_kind == "http") {
            config.backend.kind = BackendKind::Http;
        } else {
            throw ConfigError("--backend must be 'mock' or 'http'");
        }
    }
    if (workers > 0) {
        config.workers = workers;
    }

    Pipeline pipeline(std::move(config));
    if (!transcript_path.empty()) {
        pipeline.backend().open_transcript(transcript_path);
    }
    if (!audit_path.empty()) {
        pipeline.set_audit_path(audit_path);
    }
    const RunStats stats = pipeline.run(n, out_path);
    if (stats.budget_exhausted || stats.passed_verification < n) {
        std::cerr << "run ended early: " << stats.passed_verification << "/" << n
                  << " instances accepted\n";
        return 1;
    }
    return 0;
}

int run_verify(const std::string& in_path, const std::string& config_path,
               const std::string& report_path) {
    GenerationConfig config;
    std::unique_ptr<Backend> backend;
    std::unique_ptr<TemplateSet> templates;
    if (!config_path.empty()) {
        config = load_config(config_path);
        if (config.panel_enabled) {
            backend = make_backend(config);
            std::vector<std::string> extra;
            for (const auto& question : config.panel_questions) {
                extra.push_back(question.id);
            }
            templates = std::make_unique<TemplateSet>(
                TemplateSet::load_from_dir(config.templates_dir, extra));
        }
    } else {
        config.panel_enabled = false;  // rule checks only without a configured backend
    }
    Verifier verifier(templates.get(), config, backend.get());

    const std::vector<Instance> instances = load_instances(in_path);
    ojson reports = ojson::array();
    int failed = 0;
    for (const auto& instance : instances) {
        const VerificationReport report = verifier.verify(instance);
        failed += report.passed ? 0 : 1;
        ojson entry;
        entry["id"] = instance.id;
        entry["verification"] = report_to_json(report);
        reports.push_back(std::move(entry));
        std::cout << instance.id << ": " << (report.passed ? "pass" : "FAIL") << "\n";
    }
    std::cout << instances.size() - failed << "/" << instances.size() << " instances pass\n";
    if (!report_path.empty()) {
        std::ofstream out(report_path, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot open report file: " + report_path);
        }
        for (const auto& entry : reports) {
            out << entry.dump() << '\n';
        }
    }
    return 0;
}

int run_stats(const std::string& in_path) {
    const std::vector<Instance> instances = load_instances(in_path);
    std::map<int, int> histogram;
    std::uint64_t total = 0;
    for (const auto& instance : instances) {
        const int turns = count_assistant_turns(instance);
        histogram[turns] += 1;
        total += static_cast<std::uint64_t>(turns);
    }
    std::cout << "instances: " << instances.size() << "\n";
    std::cout << "assistant turn histogram:\n";
    for (const auto& [turns, frequency] : histogram) {
        std::cout << "  " << turns << ": " << frequency << "\n";
    }
    const double mean =
        instances.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(instances.size());
    std::cout << "mean assistant turns: " << mean << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dialoggen: multi-turn tool-calling dialogue synthesis"};
    app.require_subcommand(1);

    auto* generate = app.add_subcommand("generate", "generate verified instances");
    std::string config_path;
    int n = 1;
    std::string out_path = "out.jsonl";
    std::optional<std::uint64_t> seed;
    std::string backend_kind;
    int workers = 0;
    std::string transcript_path;
    std::string audit_path;
    generate->add_option("--config", config_path, "config file")->required();
    generate->add_option("--n", n, "target number of accepted instances");
    generate->add_option("--out", out_path, "output JSONL path");
    generate->add_option("--seed", seed, "override the config seed");
    generate->add_option("--backend", backend_kind, "override backend kind (mock|http)");
    generate->add_option("--workers", workers, "override worker count");
    generate->add_option("--transcript", transcript_path, "record request transcript JSONL");
    generate->add_option("--audit", audit_path, "record per-instance refinement audit JSONL");

    auto* verify = app.add_subcommand("verify", "verify an instance file");
    std::string verify_in;
    std::string verify_config;
    std::string report_path;
    verify->add_option("--in", verify_in, "instance JSONL to verify")->required();
    verify->add_option("--config", verify_config, "config (enables the model panel)");
    verify->add_option("--out-report", report_path, "write per-instance reports");

    auto* stats = app.add_subcommand("stats", "assistant-turn statistics of an instance file");
    std::string stats_in;
    stats->add_option("--in", stats_in, "instance JSONL to measure")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        app.exit(err);
        return 2;
    }

    try {
        if (generate->parsed()) {
            return run_generate(config_path, n, out_path, seed, backend_kind, workers,
                                transcript_path, audit_path);
        }
        if (verify->parsed()) {
            return run_verify(verify_in, verify_config, report_path);
        }
        if (stats->parsed()) {
            return run_stats(stats_in);
        }
    } catch (const dialoggen::ConfigError& err) {
        std::cerr << "config error: " << err.what() << "\n";
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 2;
}
