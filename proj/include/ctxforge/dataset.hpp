#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxforge/compositing.hpp"
#include "ctxforge/types.hpp"

namespace ctxforge {

inline constexpr const char* kManifestSchema = "ctxforge-manifest/1";

/// Class name -> split. Every loaded box must name a class in the map.
using ClassMap = std::map<std::string, Split>;

/// The 20 DIOR classes with airplane, baseballfield, tenniscourt, trainstation and windmill novel.
ClassMap dior_classes();

/// Marks the listed names novel and every other name base. Unknown names are added as novel.
ClassMap with_novel(ClassMap classes, std::span<const std::string> novel);

struct ImageRecord {
    std::string id;
    /// File name as written in the annotation.
    std::string file;
    Index width = 0;
    Index height = 0;
    /// Where the pixels live; not part of structural equality.
    std::filesystem::path path;

    friend bool operator==(const ImageRecord& a, const ImageRecord& b) {
        return a.id == b.id && a.file == b.file && a.width == b.width && a.height == b.height;
    }
};

struct Annotation {
    /// "{image_id}#{index within the image}"
    std::string id;
    std::string image_id;
    BBox box;
    ClassLabel label;
    bool difficult = false;

    friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct KShotSelection {
    int k = 0;
    /// Novel class name -> selected annotation ids, sorted.
    std::map<std::string, std::vector<std::string>> selected;

    friend bool operator==(const KShotSelection&, const KShotSelection&) = default;
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<ImageRecord> images;
    std::vector<Annotation> annotations;
    ClassMap splits;
    std::uint64_t seed = 0;
    std::optional<KShotSelection> kshot;

    const ImageRecord* find_image(const std::string& id) const;
    const Annotation* find_annotation(const std::string& id) const;

    /// Throws DataError on dangling references, duplicate ids or an inconsistent K-shot set.
    void validate() const;

    /// Structural equality: ignores root and resolved pixel paths.
    friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
        return a.images == b.images && a.annotations == b.annotations && a.splits == b.splits &&
               a.seed == b.seed && a.kshot == b.kshot;
    }
};

// VOC layout: <root>/Annotations/<id>.xml and <root>/JPEGImages/<filename>.

DatasetManifest load_voc(const std::filesystem::path& root, const ClassMap& classes = dior_classes());

/// Writes one XML per image and copies (or keeps) the image files under `root`.
void save_voc(const DatasetManifest& manifest, const std::filesystem::path& root);

nlohmann::json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& doc);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& file);
DatasetManifest load_manifest(const std::filesystem::path& file);

/// COCO-style export: categories in class-name order with ids from 1, images numbered from 1
/// in manifest order, boxes as [x, y, width, height].
nlohmann::json to_coco(const DatasetManifest& manifest);

/// Exactly K annotation ids per class, seeded uniform sampling without replacement over the
/// sorted ids of non-difficult instances. Independent of record order.
DatasetManifest sample_kshot(const DatasetManifest& manifest, std::span<const std::string> novel_classes,
                             int k, std::uint64_t seed);

/// Only the selected annotations and the images that hold them.
DatasetManifest kshot_subset(const DatasetManifest& manifest);

/// One reference per selected annotation: the box crop, clamped to the image, full mask.
std::vector<ReferenceInstance> extract_references(const DatasetManifest& manifest);

/// Images without any novel instance, as novel-free contexts with their boxes.
std::vector<std::string> novel_free_images(const DatasetManifest& manifest);
ContextScene load_context(const DatasetManifest& manifest, const std::string& image_id);

struct PlanItem {
    std::string context_id;
    /// (novel class, count)
    std::vector<std::pair<std::string, int>> instances;
};

struct SynthesisPlan {
    std::vector<PlanItem> items;
    Backend backend = Backend::Naive;
    double scale_min = 0.7;
    double scale_max = 1.3;
    double overlap_threshold = 0.1;
    int max_attempts = 50;
    std::uint64_t seed = 0;
    bool require_novel_free = true;
    std::vector<AffineOp> affine_family{kAllAffineOps.begin(), kAllAffineOps.end()};
    SolverOptions poisson;
    /// Required for the diffusion backend.
    const IntegrationClient* client = nullptr;
    int jobs = 1;

    /// Throws ConfigError on out-of-range parameters.
    void validate() const;
};

struct SkipRecord {
    std::string image_id;
    std::string class_name;
    int attempts = 0;
    std::string reason;
};

struct SynthesisOutcome {
    DatasetManifest manifest;
    std::vector<SkipRecord> skipped;
    /// Class name -> accepted placements.
    std::map<std::string, int> placed;
    std::vector<SolverStats> solver_stats;
};

/// Injects references into contexts following the plan. Synthetic images are written as PNG to
/// <out_root>/JPEGImages/<context_id>__syn<n>.png and listed in the returned manifest (root = out_root).
/// Throws DataError when nothing could be placed.
SynthesisOutcome synthesize(std::span<const ReferenceInstance> references,
                            std::span<const ContextScene> contexts, const SynthesisPlan& plan,
                            const std::filesystem::path& out_root);

/// Convenience overload: references come from the manifest's K-shot selection.
SynthesisOutcome synthesize(const DatasetManifest& manifest, std::span<const ContextScene> contexts,
                            const SynthesisPlan& plan, const std::filesystem::path& out_root);

/// Union of two manifests; throws DataError on an image or annotation id collision or a
/// conflicting class split.
DatasetManifest merge(const DatasetManifest& fewshot, const DatasetManifest& synthetic);

}  // namespace ctxforge
