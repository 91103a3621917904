#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxforge/dataset.hpp"
#include "ctxforge/evaluation.hpp"

namespace ctxforge {

struct SweepSpec {
    /// Instances per novel class.
    std::vector<int> instance_counts;
    /// Context images per cell.
    std::vector<int> context_counts;
    Backend backend = Backend::Naive;
    std::uint64_t seed = 0;
    /// Instances of each novel class injected into every context.
    int per_context = 1;
    /// Shell template with {train_dir} and {out_detections} placeholders.
    std::optional<std::string> detector_command;
    /// Ground truth the detector output is scored against.
    std::optional<DatasetManifest> test_set;
    std::filesystem::path output_dir;
    int jobs = 1;
    bool serialize_detector = true;
    /// Passed through to synthesis (backend, seed, items and jobs are set per cell).
    SynthesisPlan plan_template;
};

struct SweepCell {
    int instances = 0;
    int contexts = 0;
    std::filesystem::path dataset;
    std::vector<std::string> instance_ids;
    std::vector<std::string> context_ids;
    std::optional<double> map;
    std::optional<std::string> error;
};

struct SweepResult {
    std::vector<SweepCell> cells;
};

/// Per-cell subsets nested by construction: one seeded ordering of each class's K-shot pool
/// and one of the contexts, each cell taking a prefix.
struct SweepSelection {
    std::map<std::string, std::vector<std::string>> instance_order;
    std::vector<std::string> context_order;

    std::vector<std::string> instances(int per_class) const;
    std::vector<std::string> contexts(int count) const;
};

SweepSelection plan_sweep(const DatasetManifest& manifest, std::span<const std::string> context_pool,
                          const SweepSpec& spec);

/// Materializes every (instances, contexts) cell under output_dir/cell_{i}x{c}/ and, when a
/// detector command is set, runs it and scores its detections.
SweepResult run_sweep(const DatasetManifest& manifest, const SweepSpec& spec);

/// Per fixed axis value, curve_<axis>_<value>.csv and .svg under `dir`. Returns written files.
std::vector<std::filesystem::path> emit_curves(const SweepResult& result, const std::filesystem::path& dir);

nlohmann::json sweep_to_json(const SweepResult& result);

}  // namespace ctxforge
