#include "tracewrite/controller.hpp"
#include "tracewrite/evaluation.hpp"
#include "tracewrite/runtime.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace tracewrite;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitProvider = 3;
constexpr int kExitPipeline = 4;

struct Flags {
    std::string config_path;
    std::string topic;
    std::string description;
    std::string out;
    std::uint64_t seed = 0;
    bool mock = false;
    bool full_text = false;
    std::vector<int> k_list;
    std::size_t n_candidates = 0;
    std::size_t parallelism = 0;
    std::size_t target_words = 0;
    int reference_year = 0;
    std::string fixture_corpus;
    int crash_after_stage = -1;
};

void add_run_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config_path, "JSON run config; flags override its fields")->check(CLI::ExistingFile);
    cmd->add_option("--topic", f.topic, "Survey topic");
    cmd->add_option("--description", f.description, "What the survey should cover");
    cmd->add_option("--out", f.out, "Output directory");
    cmd->add_option("--seed", f.seed, "Seed for the mock backends");
    cmd->add_flag("--mock", f.mock, "Offline run against the fixture corpus");
    cmd->add_flag("--full-text", f.full_text, "Live mode: extract open-access PDFs as full text");
    cmd->add_option("--k-list", f.k_list, "Recency windows for RR@k")->delimiter(',');
    cmd->add_option("--n-candidates", f.n_candidates, "Drafts per subsection");
    cmd->add_option("--parallelism", f.parallelism, "Concurrent writers per stage");
    cmd->add_option("--target-words", f.target_words, "Survey length in words");
    cmd->add_option("--reference-year", f.reference_year, "Reference year for RR@k (default: current year)");
    cmd->add_option("--fixture-corpus", f.fixture_corpus, "Mock scholarly corpus");
    cmd->add_option("--crash-after-stage", f.crash_after_stage, "Abort after this stage (resume testing)")
        ->group("");
}

RunConfig build_config(const Flags& f, CLI::App* cmd) {
    RunConfig c;
    if (!f.config_path.empty()) c = RunConfig::load(f.config_path);
    auto given = [&](const char* name) { return cmd->count(name) > 0; };
    if (given("--topic")) c.spec.topic = f.topic;
    if (given("--description")) c.spec.description = f.description;
    if (given("--out")) c.out_dir = f.out;
    if (given("--seed")) c.seed = f.seed;
    if (f.mock) c.mock = true;
    if (f.full_text) c.fetch_full_text = true;
    if (given("--k-list")) c.k_list = f.k_list;
    if (given("--n-candidates")) c.n_candidates = f.n_candidates;
    if (given("--parallelism")) c.parallelism = f.parallelism;
    if (given("--target-words")) c.target_words = f.target_words;
    if (given("--reference-year")) c.reference_year = f.reference_year;
    if (given("--fixture-corpus")) c.fixture_corpus = f.fixture_corpus;
    if (given("--crash-after-stage")) c.crash_after_stage = f.crash_after_stage;
    if (c.mock && c.fixture_corpus.empty()) c.fixture_corpus = fs::path(TRACEWRITE_DATA_DIR) / "fixtures" / "corpus.json";
    c.validate();
    return c;
}

int fail(int code, const std::string& kind, const std::string& message, json extra = json::object()) {
    json err{{"kind", kind}, {"message", message}, {"exit_code", code}};
    err.update(extra);
    std::cerr << json{{"error", err}}.dump() << "\n";
    return code;
}

/// Maps an exception escaping a command to an exit code and error JSON.
int report(std::exception_ptr ep) {
    try {
        std::rethrow_exception(ep);
    } catch (const ConfigError& e) {
        return fail(kExitConfig, "config", e.what());
    } catch (const StageError& e) {
        return fail(e.provider_failure() ? kExitProvider : kExitPipeline, e.provider_failure() ? "provider" : "pipeline",
                    e.what(), {{"stage", e.stage()}});
    } catch (const ProviderError& e) {
        return fail(kExitProvider, "provider", e.what());
    } catch (const ParseError& e) {
        return fail(kExitPipeline, "parse", e.what(), {{"location", e.location()}});
    } catch (const std::exception& e) {
        return fail(kExitPipeline, "pipeline", e.what());
    }
}

std::string read_all(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int cmd_generate(const Flags& f, CLI::App* cmd, bool resume) {
    auto config = build_config(f, cmd);
    std::optional<RunState> state;
    if (resume) {
        state = Pipeline::load_checkpoint(config.out_dir);
        if (!state) throw ConfigError("nothing to resume: no checkpoint under " + config.out_dir.string());
    }
    auto set = ProviderSet::create(config);
    fs::create_directories(config.out_dir);
    RunLog log(config.out_dir / "run.jsonl", resume);
    Pipeline pipeline(config, set->providers(), log);
    auto result = pipeline.run(std::move(state));
    std::cout << json{{"out_dir", config.out_dir.string()},
                      {"subsections", result.state.completed.size()},
                      {"cited", result.document.cited().size()},
                      {"metrics", result.metrics.to_json()}}
                     .dump(2)
              << "\n";
    return kExitOk;
}

int cmd_plan(const Flags& f, CLI::App* cmd, bool dry_run) {
    auto config = build_config(f, cmd);
    auto set = ProviderSet::create(config);
    std::unique_ptr<RunLog> log;
    if (dry_run) {
        log = std::make_unique<RunLog>();
    } else {
        fs::create_directories(config.out_dir);
        log = std::make_unique<RunLog>(config.out_dir / "plan_run.jsonl");
    }
    if (dry_run) {
        // Planning alone; nothing is written to disk.
        RunState state;
        state.spec = config.spec;
        survey_level_retrieve(config.spec, config.retrieval, set->providers(), state.store);
        if (state.store.empty()) throw StageError("retrieval", "no papers found for the topic");
        auto planning = plan_survey(state.store, config.spec, set->providers());
        std::cout << json{{"outline", outline_to_json(planning.outline)}, {"plan", plan_to_json(planning.plan)}}.dump(2)
                  << "\n";
        return kExitOk;
    }
    Pipeline pipeline(config, set->providers(), *log);
    auto state = pipeline.initialize();
    pipeline.write_plan_artifacts(state);
    std::cout << json{{"outline", outline_to_json(state.outline)}, {"plan", plan_to_json(state.plan)}}.dump(2) << "\n";
    return kExitOk;
}

int cmd_evaluate(const std::string& document, const std::string& bib, std::vector<int> k_list, int reference_year,
                 const std::string& out, bool csv) {
    if (k_list.empty()) k_list = {1, 3, 5, 7, 10};
    for (int k : k_list) {
        if (k < 1) throw ConfigError("recency windows must be at least 1 year");
    }
    RunConfig year_source;
    year_source.reference_year = reference_year;
    const int year = year_source.effective_reference_year();
    auto parsed = parse_document(read_all(document), bib.empty() ? std::string() : read_all(bib));
    Diagnostics diag;
    auto stats = analyze_document(parsed, diag);
    auto metrics = compute_metrics(stats, k_list, year);
    json report = metrics.to_json();
    report["document"] = document;
    report["warnings"] = json::array();
    for (const auto& w : diag.warnings()) report["warnings"].push_back({{"component", w.component}, {"message", w.message}});
    std::vector<ComparisonRow> rows{{fs::path(document).filename().string(), metrics, std::nullopt}};
    if (!out.empty()) {
        std::ofstream o(out);
        if (!o) throw IoError("cannot write " + out);
        o << report.dump(2) << "\n";
    }
    std::cout << report.dump(2) << "\n\n" << (csv ? render_comparison_csv(rows, k_list) : render_comparison_table(rows, k_list));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tracewrite: staged, citation-traced survey generation"};
    app.require_subcommand(1);

    Flags gen_flags;
    bool resume = false;
    auto* gen = app.add_subcommand("generate", "Retrieve, plan, write and render a survey");
    add_run_flags(gen, gen_flags);
    gen->add_flag("--resume", resume, "Continue from the latest checkpoint in --out");

    Flags plan_flags;
    bool dry_run = false;
    auto* plan = app.add_subcommand("plan", "Retrieve and plan only; emits outline and plan JSON");
    add_run_flags(plan, plan_flags);
    plan->add_flag("--dry-run", dry_run, "Print the plan without writing any files");

    std::string document, bib, eval_out;
    std::vector<int> k_list;
    int reference_year = 0;
    bool csv = false;
    auto* eval = app.add_subcommand("evaluate", "Citation metrics for a Markdown or LaTeX survey");
    eval->add_option("document", document, "Survey file")->required();
    eval->add_option("--bib", bib, "BibTeX file with the bibliography of a LaTeX survey");
    eval->add_option("--k-list", k_list, "Recency windows for RR@k")->delimiter(',');
    eval->add_option("--reference-year", reference_year, "Reference year for RR@k (default: current year)");
    eval->add_option("--out", eval_out, "Write the report JSON here");
    eval->add_flag("--csv", csv, "Render the table as CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail(kExitConfig, "usage", e.what());
    }

    try {
        if (gen->parsed()) return cmd_generate(gen_flags, gen, resume);
        if (plan->parsed()) return cmd_plan(plan_flags, plan, dry_run);
        return cmd_evaluate(document, bib, k_list, reference_year, eval_out, csv);
    } catch (...) {
        return report(std::current_exception());
    }
}
