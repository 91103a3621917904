#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ctxforge/compositing.hpp"

namespace ctxforge {

/// Fully resolved settings for one CLI run. Precedence: flags > TOML file > defaults.
struct RunConfig {
    // dataset
    std::filesystem::path root;
    std::filesystem::path context_root;  // empty: contexts come from `root`
    std::vector<std::string> classes;    // empty: DIOR classes
    std::vector<std::string> novel{"airplane", "baseballfield", "tenniscourt", "trainstation", "windmill"};
    int k = 3;
    std::uint64_t seed = 0;
    std::filesystem::path out;
    int jobs = 0;  // 0: logical cores

    // synthesis
    Backend backend = Backend::Naive;
    int contexts = 40;
    int per_context = 1;
    double scale_min = 0.7;
    double scale_max = 1.3;
    double overlap = 0.1;
    int max_attempts = 50;
    double tolerance = 1e-3;
    int max_iterations = 0;

    // service
    std::string endpoint;
    bool mock = false;
    double timeout_s = 120.0;
    int retries = 2;
    int steps = 50;

    // sweep
    std::vector<int> sweep_instances{3};
    std::vector<int> sweep_contexts{20, 40};
    std::string detector_command;
    std::filesystem::path test_root;

    // eval
    std::filesystem::path detections;
    std::filesystem::path baseline;
    double iou = 0.5;
    bool eleven_point = false;
    std::string method = "Ours";

    // preview
    int samples = 4;

    /// Overlays the keys present in a TOML document. Throws ConfigError on unknown keys or bad types.
    void apply_toml(const std::filesystem::path& file);
    std::string to_toml() const;

    int resolved_jobs() const;
};

}  // namespace ctxforge
