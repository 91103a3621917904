#include "ctxforge/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "ctxforge/error.hpp"
#include "ctxforge/rng.hpp"

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace ctxforge {

ClassMap dior_classes() {
    ClassMap classes;
    for (const char* name : {"airport", "basketballcourt", "bridge", "chimney", "dam", "Expressway-Service-area",
                             "Expressway-toll-station", "golffield", "groundtrackfield", "harbor", "overpass", "ship",
                             "stadium", "storagetank", "vehicle"})
        classes[name] = Split::Base;
    for (const char* name : {"airplane", "baseballfield", "tenniscourt", "trainstation", "windmill"})
        classes[name] = Split::Novel;
    return classes;
}

ClassMap with_novel(ClassMap classes, std::span<const std::string> novel) {
    for (auto& [name, split] : classes) split = Split::Base;
    for (const auto& name : novel) classes[name] = Split::Novel;
    return classes;
}

const ImageRecord* DatasetManifest::find_image(const std::string& id) const {
    auto it = std::find_if(images.begin(), images.end(), [&](const ImageRecord& r) { return r.id == id; });
    return it == images.end() ? nullptr : &*it;
}

const Annotation* DatasetManifest::find_annotation(const std::string& id) const {
    auto it = std::find_if(annotations.begin(), annotations.end(), [&](const Annotation& a) { return a.id == id; });
    return it == annotations.end() ? nullptr : &*it;
}

void DatasetManifest::validate() const {
    std::set<std::string> image_ids;
    for (const auto& img : images)
        if (!image_ids.insert(img.id).second) throw DataError("duplicate image id '" + img.id + "'");
    std::unordered_map<std::string, const Annotation*> by_id;
    for (const auto& a : annotations) {
        if (!image_ids.count(a.image_id))
            throw DataError("annotation '" + a.id + "' references unknown image '" + a.image_id + "'");
        if (!by_id.emplace(a.id, &a).second) throw DataError("duplicate annotation id '" + a.id + "'");
        auto split = splits.find(a.label.name);
        if (split != splits.end() && split->second != a.label.split)
            throw DataError("annotation '" + a.id + "' disagrees with the split of '" + a.label.name + "'");
    }
    if (!kshot) return;
    for (const auto& [cls, ids] : kshot->selected) {
        if (int(ids.size()) != kshot->k)
            throw DataError("K-shot selection for '" + cls + "' has " + std::to_string(ids.size()) + " ids, K = " +
                            std::to_string(kshot->k));
        for (const auto& id : ids) {
            auto it = by_id.find(id);
            if (it == by_id.end()) throw DataError("K-shot selection names unknown annotation '" + id + "'");
            if (it->second->label.name != cls)
                throw DataError("K-shot selection for '" + cls + "' holds a '" + it->second->label.name + "' box");
        }
    }
}

namespace {

std::string format_coord(double v) {
    if (v == std::floor(v) && std::abs(v) < 1e15) return std::to_string(static_cast<long long>(v));
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

double parse_coord(const pt::ptree& node, const char* key, const fs::path& file) {
    auto text = node.get_optional<std::string>(key);
    if (!text) throw DataError(file.string() + ": object bndbox lacks <" + key + ">");
    try {
        std::size_t used = 0;
        double v = std::stod(*text, &used);
        return v;
    } catch (const std::exception&) {
        throw DataError(file.string() + ": <" + key + "> is not a number: '" + *text + "'");
    }
}

ImageRecord parse_voc_file(const fs::path& xml, const fs::path& root, const ClassMap& classes,
                           std::vector<Annotation>& annotations) {
    pt::ptree tree;
    try {
        pt::read_xml(xml.string(), tree);
    } catch (const pt::xml_parser_error& e) {
        throw DataError("malformed XML in " + xml.string() + ": " + e.message());
    }
    auto annotation = tree.get_child_optional("annotation");
    if (!annotation) throw DataError("malformed XML in " + xml.string() + ": no <annotation> root");

    ImageRecord rec;
    rec.id = xml.stem().string();
    rec.file = annotation->get<std::string>("filename", rec.id + ".jpg");
    rec.path = root / "JPEGImages" / rec.file;
    if (!fs::exists(rec.path))
        throw DataError("missing image file " + rec.path.string() + " for annotation " + xml.string());
    rec.width = annotation->get<Index>("size.width", 0);
    rec.height = annotation->get<Index>("size.height", 0);
    if (rec.width <= 0 || rec.height <= 0) {
        auto [w, h] = image_size(rec.path);
        rec.width = w;
        rec.height = h;
    }

    int index = 0;
    for (const auto& [tag, node] : *annotation) {
        if (tag != "object") continue;
        const std::string name = node.get<std::string>("name", "");
        auto cls = classes.find(name);
        if (cls == classes.end()) throw DataError(xml.string() + ": unknown class '" + name + "'");
        auto bnd = node.get_child_optional("bndbox");
        if (!bnd) throw DataError(xml.string() + ": object '" + name + "' has no <bndbox>");
        const double x0 = parse_coord(*bnd, "xmin", xml);
        const double y0 = parse_coord(*bnd, "ymin", xml);
        const double x1 = parse_coord(*bnd, "xmax", xml);
        const double y1 = parse_coord(*bnd, "ymax", xml);
        BBox box;
        try {
            box = BBox::make(x0, y0, x1, y1);
        } catch (const DataError& e) {
            throw DataError(xml.string() + ": " + e.what());
        }
        if (!box.inside(double(rec.width), double(rec.height))) {
            std::ostringstream msg;
            msg << xml.string() << ": box (" << x0 << ", " << y0 << ", " << x1 << ", " << y1 << ") outside "
                << rec.width << "x" << rec.height << " image";
            throw DataError(msg.str());
        }
        Annotation a;
        a.id = rec.id + "#" + std::to_string(index++);
        a.image_id = rec.id;
        a.box = box;
        a.label = {name, cls->second};
        a.difficult = node.get<int>("difficult", 0) != 0;
        annotations.push_back(std::move(a));
    }
    return rec;
}

}  // namespace

DatasetManifest load_voc(const fs::path& root, const ClassMap& classes) {
    const fs::path dir = root / "Annotations";
    if (!fs::is_directory(dir)) throw DataError("no Annotations directory under " + root.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".xml") files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    DatasetManifest manifest;
    manifest.root = root;
    manifest.splits = classes;
    for (const auto& file : files) manifest.images.push_back(parse_voc_file(file, root, classes, manifest.annotations));
    manifest.validate();
    return manifest;
}

void save_voc(const DatasetManifest& manifest, const fs::path& root) {
    fs::create_directories(root / "Annotations");
    fs::create_directories(root / "JPEGImages");
    std::unordered_map<std::string, std::vector<const Annotation*>> by_image;
    for (const auto& a : manifest.annotations) by_image[a.image_id].push_back(&a);

    const auto settings = pt::xml_writer_make_settings<std::string>(' ', 2);
    for (const auto& img : manifest.images) {
        const fs::path target = root / "JPEGImages" / img.file;
        if (!img.path.empty() && fs::exists(img.path) &&
            !(fs::exists(target) && fs::equivalent(img.path, target)))
            fs::copy_file(img.path, target, fs::copy_options::overwrite_existing);

        pt::ptree tree;
        pt::ptree& ann = tree.add("annotation", "");
        ann.put("filename", img.file);
        ann.put("size.width", img.width);
        ann.put("size.height", img.height);
        ann.put("size.depth", 3);
        for (const Annotation* a : by_image[img.id]) {
            pt::ptree& obj = ann.add("object", "");
            obj.put("name", a->label.name);
            obj.put("difficult", a->difficult ? 1 : 0);
            obj.put("bndbox.xmin", format_coord(a->box.x_min));
            obj.put("bndbox.ymin", format_coord(a->box.y_min));
            obj.put("bndbox.xmax", format_coord(a->box.x_max));
            obj.put("bndbox.ymax", format_coord(a->box.y_max));
        }
        pt::write_xml((root / "Annotations" / (img.id + ".xml")).string(), tree, std::locale(), settings);
    }
}

nlohmann::json manifest_to_json(const DatasetManifest& manifest) {
    nlohmann::json doc;
    doc["schema"] = kManifestSchema;
    doc["root"] = manifest.root.string();
    doc["seed"] = manifest.seed;
    doc["images"] = nlohmann::json::array();
    for (const auto& img : manifest.images)
        doc["images"].push_back({{"id", img.id},
                                 {"file", img.file},
                                 {"path", img.path.string()},
                                 {"width", img.width},
                                 {"height", img.height}});
    doc["annotations"] = nlohmann::json::array();
    for (const auto& a : manifest.annotations)
        doc["annotations"].push_back({{"id", a.id},
                                      {"image_id", a.image_id},
                                      {"bbox", {a.box.x_min, a.box.y_min, a.box.x_max, a.box.y_max}},
                                      {"label", a.label.name},
                                      {"split", to_string(a.label.split)},
                                      {"difficult", a.difficult}});
    doc["splits"] = nlohmann::json::object();
    for (const auto& [name, split] : manifest.splits) doc["splits"][name] = to_string(split);
    if (manifest.kshot) doc["kshot"] = {{"k", manifest.kshot->k}, {"selected", manifest.kshot->selected}};
    return doc;
}

DatasetManifest manifest_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("schema").get<std::string>() != kManifestSchema)
            throw DataError("unsupported manifest schema '" + doc.at("schema").get<std::string>() + "'");
        DatasetManifest m;
        m.root = doc.at("root").get<std::string>();
        m.seed = doc.at("seed").get<std::uint64_t>();
        for (const auto& j : doc.at("images"))
            m.images.push_back({j.at("id").get<std::string>(), j.at("file").get<std::string>(),
                                j.at("width").get<Index>(), j.at("height").get<Index>(),
                                fs::path(j.value("path", std::string()))});
        for (const auto& j : doc.at("annotations")) {
            const auto& b = j.at("bbox");
            Annotation a;
            a.id = j.at("id").get<std::string>();
            a.image_id = j.at("image_id").get<std::string>();
            a.box = BBox::make(b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                               b.at(3).get<double>());
            a.label = {j.at("label").get<std::string>(), split_from_string(j.at("split").get<std::string>())};
            a.difficult = j.value("difficult", false);
            m.annotations.push_back(std::move(a));
        }
        for (const auto& [name, split] : doc.at("splits").items())
            m.splits[name] = split_from_string(split.get<std::string>());
        if (doc.contains("kshot"))
            m.kshot = KShotSelection{doc["kshot"].at("k").get<int>(),
                                     doc["kshot"].at("selected").get<std::map<std::string, std::vector<std::string>>>()};
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed manifest: ") + e.what());
    }
}

void save_manifest(const DatasetManifest& manifest, const fs::path& file) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ofstream out(file);
    if (!out) throw DataError("cannot write " + file.string());
    out << manifest_to_json(manifest).dump(2) << '\n';
}

DatasetManifest load_manifest(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot read " + file.string());
    try {
        return manifest_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(file.string() + ": " + e.what());
    }
}

nlohmann::json to_coco(const DatasetManifest& manifest) {
    nlohmann::json doc{{"images", nlohmann::json::array()},
                       {"annotations", nlohmann::json::array()},
                       {"categories", nlohmann::json::array()}};
    std::map<std::string, int> category;
    for (const auto& [name, split] : manifest.splits) {
        const int id = int(category.size()) + 1;
        category[name] = id;
        doc["categories"].push_back({{"id", id}, {"name", name}, {"supercategory", to_string(split)}});
    }
    std::map<std::string, int> image_index;
    for (const auto& img : manifest.images) {
        const int id = int(image_index.size()) + 1;
        image_index[img.id] = id;
        doc["images"].push_back({{"id", id}, {"file_name", img.file}, {"width", img.width}, {"height", img.height}});
    }
    int next = 1;
    for (const auto& a : manifest.annotations) {
        auto cat = category.find(a.label.name);
        if (cat == category.end()) throw DataError("class '" + a.label.name + "' missing from the class map");
        doc["annotations"].push_back({{"id", next++},
                                      {"image_id", image_index.at(a.image_id)},
                                      {"category_id", cat->second},
                                      {"bbox", {a.box.x_min, a.box.y_min, a.box.width(), a.box.height()}},
                                      {"area", a.box.area()},
                                      {"iscrowd", 0},
                                      {"ignore", a.difficult ? 1 : 0}});
    }
    return doc;
}

DatasetManifest sample_kshot(const DatasetManifest& manifest, std::span<const std::string> novel_classes, int k,
                             std::uint64_t seed) {
    if (k < 1) throw ConfigError("K must be >= 1");
    std::set<std::string> classes(novel_classes.begin(), novel_classes.end());
    KShotSelection selection{k, {}};
    for (const auto& cls : classes) {
        auto split = manifest.splits.find(cls);
        if (split == manifest.splits.end() || split->second != Split::Novel)
            throw DataError("'" + cls + "' is not a novel class of this dataset");
        std::vector<std::string> pool;
        for (const auto& a : manifest.annotations)
            if (a.label.name == cls && !a.difficult) pool.push_back(a.id);
        std::sort(pool.begin(), pool.end());
        if (int(pool.size()) < k)
            throw DataError("class '" + cls + "' has " + std::to_string(pool.size()) + " instances, K = " +
                            std::to_string(k));
        Rng rng(derive_seed(seed, "kshot/" + cls));
        for (int i = 0; i < k; ++i) std::swap(pool[std::size_t(i)], pool[i + rng.index(pool.size() - i)]);
        pool.resize(std::size_t(k));
        std::sort(pool.begin(), pool.end());
        selection.selected[cls] = std::move(pool);
    }
    DatasetManifest out = manifest;
    out.seed = seed;
    out.kshot = std::move(selection);
    return out;
}

DatasetManifest kshot_subset(const DatasetManifest& manifest) {
    if (!manifest.kshot) throw DataError("manifest has no K-shot selection");
    std::set<std::string> chosen;
    for (const auto& [cls, ids] : manifest.kshot->selected) chosen.insert(ids.begin(), ids.end());
    DatasetManifest out;
    out.root = manifest.root;
    out.splits = manifest.splits;
    out.seed = manifest.seed;
    out.kshot = manifest.kshot;
    std::set<std::string> used;
    for (const auto& a : manifest.annotations) {
        if (!chosen.count(a.id)) continue;
        out.annotations.push_back(a);
        used.insert(a.image_id);
    }
    for (const auto& img : manifest.images)
        if (used.count(img.id)) out.images.push_back(img);
    return out;
}

std::vector<ReferenceInstance> extract_references(const DatasetManifest& manifest) {
    if (!manifest.kshot) throw DataError("manifest has no K-shot selection");
    std::map<std::string, RgbImage> cache;
    std::vector<ReferenceInstance> refs;
    for (const auto& [cls, ids] : manifest.kshot->selected) {
        for (const auto& id : ids) {
            const Annotation* a = manifest.find_annotation(id);
            if (!a) throw DataError("K-shot selection names unknown annotation '" + id + "'");
            const ImageRecord* img = manifest.find_image(a->image_id);
            auto it = cache.find(img->id);
            if (it == cache.end()) it = cache.emplace(img->id, read_rgb(img->path)).first;
            const RgbImage& pixels = it->second;

            const Index x0 = std::max<Index>(0, Index(std::floor(a->box.x_min)));
            const Index y0 = std::max<Index>(0, Index(std::floor(a->box.y_min)));
            const Index x1 = std::min<Index>(pixels.cols(), Index(std::ceil(a->box.x_max)));
            const Index y1 = std::min<Index>(pixels.rows(), Index(std::ceil(a->box.y_max)));
            if (x1 - x0 < 1 || y1 - y0 < 1) throw DataError("annotation '" + id + "' is empty after clamping");

            RgbImage crop = map_channels(pixels, [&](const Plane<std::uint8_t>& p) {
                return Plane<std::uint8_t>(p.block(y0, x0, y1 - y0, x1 - x0));
            });
            refs.emplace_back(std::move(crop), Mask::Ones(y1 - y0, x1 - x0), a->label, img->id, a->box);
        }
    }
    return refs;
}

std::vector<std::string> novel_free_images(const DatasetManifest& manifest) {
    std::set<std::string> dirty;
    for (const auto& a : manifest.annotations)
        if (a.label.split == Split::Novel) dirty.insert(a.image_id);
    std::vector<std::string> out;
    for (const auto& img : manifest.images)
        if (!dirty.count(img.id)) out.push_back(img.id);
    return out;
}

ContextScene load_context(const DatasetManifest& manifest, const std::string& image_id) {
    const ImageRecord* img = manifest.find_image(image_id);
    if (!img) throw DataError("unknown context image '" + image_id + "'");
    ContextScene scene{img->id, read_rgb(img->path), {}, true};
    for (const auto& a : manifest.annotations) {
        if (a.image_id != image_id) continue;
        scene.existing_boxes.push_back({a.box, a.label});
        if (a.label.split == Split::Novel) scene.novel_free = false;
    }
    return scene;
}

void SynthesisPlan::validate() const {
    if (!(overlap_threshold >= 0.0 && overlap_threshold < 1.0)) throw ConfigError("overlap threshold must be in [0, 1)");
    if (!(scale_min > 0.0 && scale_min <= scale_max)) throw ConfigError("scale range must satisfy 0 < min <= max");
    if (max_attempts < 1) throw ConfigError("max attempts must be >= 1");
    if (affine_family.empty()) throw ConfigError("affine family is empty");
    if (backend == Backend::Diffusion && client == nullptr)
        throw ConfigError("diffusion backend needs an integration client");
    for (const auto& item : items)
        for (const auto& [cls, count] : item.instances)
            if (count < 1) throw ConfigError("planned count for '" + cls + "' must be >= 1");
}

namespace {

struct ItemOutput {
    std::optional<ImageRecord> image;
    std::vector<Annotation> annotations;
    std::vector<SkipRecord> skipped;
    std::vector<SolverStats> stats;
};

ItemOutput synthesize_item(const PlanItem& item, std::size_t item_index, const std::string& image_id,
                           const ContextScene& context,
                           const std::map<std::string, std::vector<const ReferenceInstance*>>& refs_by_class,
                           const SynthesisPlan& plan, const fs::path& out_root) {
    ItemOutput out;
    Rng rng(derive_seed(plan.seed, context.id, item_index));
    const Index width = context.pixels.cols();
    const Index height = context.pixels.rows();
    // The Poisson solve needs a one-pixel frame of context around the instance and a mask interior.
    const Index margin = plan.backend == Backend::Poisson ? 1 : 0;
    const Index min_side = plan.backend == Backend::Poisson ? 3 : 1;

    ContextScene scene = context;
    std::vector<BBox> occupied;
    for (const auto& lb : context.existing_boxes) occupied.push_back(lb.box);

    for (const auto& [cls, count] : item.instances) {
        auto refs = refs_by_class.find(cls);
        if (refs == refs_by_class.end() || refs->second.empty())
            throw DataError("no reference instance of class '" + cls + "'");
        for (int n = 0; n < count; ++n) {
            bool placed = false;
            int attempt = 0;
            while (!placed && attempt < plan.max_attempts) {
                ++attempt;
                const ReferenceInstance& ref = *refs->second[rng.index(refs->second.size())];
                const double area = ref.source_box().area() * rng.uniform(plan.scale_min, plan.scale_max);
                double ratio = ref.aspect_ratio();
                if (rng.coin()) ratio = 1.0 / ratio;
                const Index w = std::max<Index>(1, Index(std::lround(std::sqrt(area * ratio))));
                const Index h = std::max<Index>(1, Index(std::lround(std::sqrt(area / ratio))));
                if (w < min_side || h < min_side || w > width - 2 * margin || h > height - 2 * margin) continue;
                const Index x0 = margin + Index(rng.index(std::uint64_t(width - 2 * margin - w + 1)));
                const Index y0 = margin + Index(rng.index(std::uint64_t(height - 2 * margin - h + 1)));
                const std::uint64_t compose_seed = rng.next();
                const BBox box{double(x0), double(y0), double(x0 + w), double(y0 + h)};
                const bool overlaps = std::any_of(occupied.begin(), occupied.end(), [&](const BBox& other) {
                    return iou(box, other) > plan.overlap_threshold;
                });
                if (overlaps) continue;

                PlacementSpec placement(box, width, height);
                Alignment aligned = orient_align(ref, placement);
                CompositeResult result;
                switch (plan.backend) {
                    case Backend::Naive: result = compose_naive(scene, aligned.reference, placement); break;
                    case Backend::Poisson:
                        result = compose_poisson(scene, aligned.reference, placement, plan.poisson);
                        out.stats.push_back(*result.solver_stats);
                        break;
                    case Backend::Diffusion: {
                        ConditioningBundle bundle = make_bundle(scene, aligned.reference, placement,
                                                                derive_seed(compose_seed, "affine"));
                        result = compose_diffusion(*plan.client, bundle, placement, compose_seed);
                        break;
                    }
                }
                scene.pixels = std::move(result.pixels);
                occupied.push_back(box);
                Annotation a;
                a.id = image_id + "#" + std::to_string(out.annotations.size());
                a.image_id = image_id;
                a.box = result.new_box;
                a.label = ref.label();
                out.annotations.push_back(std::move(a));
                placed = true;
            }
            if (!placed)
                out.skipped.push_back({image_id, cls, attempt, "no placement within bounds and overlap threshold"});
        }
    }
    if (!out.annotations.empty()) {
        ImageRecord rec{image_id, image_id + ".png", width, height, out_root / "JPEGImages" / (image_id + ".png")};
        write_rgb(rec.path, scene.pixels);
        out.image = std::move(rec);
    }
    return out;
}

}  // namespace

SynthesisOutcome synthesize(std::span<const ReferenceInstance> references, std::span<const ContextScene> contexts,
                            const SynthesisPlan& plan, const fs::path& out_root) {
    plan.validate();
    std::map<std::string, std::vector<const ReferenceInstance*>> refs_by_class;
    ClassMap splits;
    for (const auto& ref : references) {
        refs_by_class[ref.label().name].push_back(&ref);
        splits[ref.label().name] = ref.label().split;
    }
    std::map<std::string, const ContextScene*> context_by_id;
    for (const auto& c : contexts) {
        if (plan.require_novel_free && !c.novel_free)
            throw DataError("context '" + c.id + "' is not novel-free");
        c.validate();
        context_by_id[c.id] = &c;
    }

    std::vector<std::string> image_ids;
    std::map<std::string, int> per_context;
    for (const auto& item : plan.items) {
        if (!context_by_id.count(item.context_id)) throw DataError("plan names unknown context '" + item.context_id + "'");
        image_ids.push_back(item.context_id + "__syn" + std::to_string(per_context[item.context_id]++));
    }

    std::vector<ItemOutput> outputs(plan.items.size());
    std::vector<std::exception_ptr> errors(plan.items.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < plan.items.size(); i = next++) {
            try {
                outputs[i] = synthesize_item(plan.items[i], i, image_ids[i], *context_by_id[plan.items[i].context_id],
                                             refs_by_class, plan, out_root);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int jobs = std::max(1, std::min<int>(plan.jobs, int(plan.items.size())));
    std::vector<std::thread> threads;
    for (int t = 1; t < jobs; ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    SynthesisOutcome outcome;
    outcome.manifest.root = out_root;
    outcome.manifest.seed = plan.seed;
    outcome.manifest.splits = splits;
    for (auto& out : outputs) {
        if (out.image) outcome.manifest.images.push_back(std::move(*out.image));
        for (auto& a : out.annotations) {
            ++outcome.placed[a.label.name];
            outcome.manifest.annotations.push_back(std::move(a));
        }
        for (auto& s : out.skipped) outcome.skipped.push_back(std::move(s));
        for (auto& s : out.stats) outcome.solver_stats.push_back(s);
    }
    if (outcome.manifest.annotations.empty())
        throw DataError("synthesis placed no instance (" + std::to_string(outcome.skipped.size()) +
                        " items skipped); check the plan's overlap threshold and scale range");
    return outcome;
}

SynthesisOutcome synthesize(const DatasetManifest& manifest, std::span<const ContextScene> contexts,
                            const SynthesisPlan& plan, const fs::path& out_root) {
    std::vector<ReferenceInstance> refs = extract_references(manifest);
    return synthesize(refs, contexts, plan, out_root);
}

DatasetManifest merge(const DatasetManifest& fewshot, const DatasetManifest& synthetic) {
    DatasetManifest out = fewshot;
    std::set<std::string> images;
    std::set<std::string> annotations;
    for (const auto& img : fewshot.images) images.insert(img.id);
    for (const auto& a : fewshot.annotations) annotations.insert(a.id);
    for (const auto& img : synthetic.images) {
        if (!images.insert(img.id).second) throw DataError("image id collision on merge: '" + img.id + "'");
        out.images.push_back(img);
    }
    for (const auto& a : synthetic.annotations) {
        if (!annotations.insert(a.id).second) throw DataError("annotation id collision on merge: '" + a.id + "'");
        out.annotations.push_back(a);
    }
    for (const auto& [name, split] : synthetic.splits) {
        auto [it, inserted] = out.splits.emplace(name, split);
        if (!inserted && it->second != split) throw DataError("class '" + name + "' has conflicting splits on merge");
    }
    return out;
}

}  // namespace ctxforge
