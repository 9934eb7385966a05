#pragma once

#include "tracewrite/config.hpp"
#include "tracewrite/document.hpp"
#include "tracewrite/evaluation.hpp"
#include "tracewrite/memory.hpp"
#include "tracewrite/planning.hpp"
#include "tracewrite/replanner.hpp"
#include "tracewrite/writer.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tracewrite {

/// JSON-lines event log. Events carry a sequence number instead of a clock
/// so seeded runs log identically.
class RunLog {
public:
    RunLog() = default;
    explicit RunLog(const std::filesystem::path& path, bool append = false);

    void event(const std::string& kind, json payload = json::object());
    std::vector<json> events() const;

private:
    mutable std::mutex mutex_;
    std::ofstream out_;
    std::vector<json> events_;
    std::size_t seq_ = 0;
};

struct RunState {
    TopicSpec spec;
    Outline outline;
    StagedPlan plan;
    StructureMemory memory;
    std::set<std::string> completed;
    int current_stage = -1;  // last finished stage
    PaperStore store;
    std::map<std::string, json> sidecars;      // subsection id -> writer sidecar
    std::map<std::string, std::string> texts;  // subsection id -> current text
    std::vector<json> plan_history;
    json survey_retrieval;

    json to_json() const;
    static RunState from_json(const json& j);
};

struct StageSet {
    int stage = 0;
    std::vector<std::string> ids;  // outline order
};

/// Unfinished subsections with the smallest stage index; nullopt when all
/// are done.
std::optional<StageSet> next_stage(const RunState& state);

struct CiteMerge {
    std::map<std::string, std::string> renamed;  // writer bibkey -> store bibkey
};

/// Folds a writer's private store into `store` (records, tags). Records
/// match by paper id; a bibkey taken by a different paper is renamed.
CiteMerge merge_store(PaperStore& store, const PaperStore& writer_store);

/// Applies bibkey renames to a writer result (text, passages, traced).
void apply_renames(SubsectionResult& result, const std::map<std::string, std::string>& renamed);

struct FinalRefineReport {
    std::vector<std::pair<std::string, std::string>> flagged;  // (id, issue)
    std::vector<std::string> rewritten;
    std::vector<std::string> reverted;

    json to_json() const;
};

/// Global diagnosis over all subsection texts, then a rewrite of the flagged
/// subsections only. A rewrite that drops or invents a citation is reverted
/// with a warning. Provider failure leaves everything unchanged.
FinalRefineReport final_refine(const Outline& outline, std::map<std::string, std::string>& texts,
                               const StructureMemory& memory, LlmClient& llm, Diagnostics& diagnostics);

/// Papers a subsection's table is built from: the non-review papers of its
/// enriched context, base passages first, then traced entries.
std::vector<PaperRecord> table_papers(const json& sidecar, const PaperStore& store);

/// Tables for every completed plan entry with the table flag. Failures and
/// empty paper sets skip the table with a warning.
std::map<std::string, GeneratedTable> dispatch_tables(const RunState& state, Providers& providers,
                                                      const ChunkingOptions& chunking);

SurveyDocument assemble_document(const RunState& state, const std::map<std::string, GeneratedTable>& tables);

struct RunResult {
    RunState state;
    SurveyDocument document;
    std::map<std::string, GeneratedTable> tables;
    std::optional<FinalRefineReport> refine;
    MetricsReport metrics;
    std::optional<JudgeScores> judge;
};

/// Stage-scheduled pipeline over one config and provider set. Artifacts are
/// written under config.out_dir.
class Pipeline {
public:
    Pipeline(RunConfig config, Providers& providers, RunLog& log);

    /// Retrieval and planning; writes a "planning" checkpoint.
    RunState initialize();
    /// Writes one stage in parallel on snapshots and merges in outline order.
    void run_stage(RunState& state, const StageSet& set);
    /// Revision of the unwritten outline after a stage.
    void revise(RunState& state);
    /// Stages until done, then final refinement, tables and rendering.
    RunResult run(std::optional<RunState> resume = std::nullopt);

    /// Latest checkpoint in `out_dir`, or nullopt.
    static std::optional<RunState> load_checkpoint(const std::filesystem::path& out_dir);
    void write_checkpoint(const RunState& state, const std::string& name) const;
    void write_plan_artifacts(const RunState& state) const;

    const RunConfig& config() const { return config_; }

private:
    WriterOptions writer_options(const RunState& state) const;
    void log_calls(const std::string& phase);

    RunConfig config_;
    Providers& providers_;
    RunLog& log_;
    std::map<std::string, std::size_t> last_counts_;
};

}  // namespace tracewrite
