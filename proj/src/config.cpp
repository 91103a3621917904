#include "ctxforge/config.hpp"

#include <set>
#include <sstream>
#include <thread>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "ctxforge/error.hpp"

namespace ctxforge {

namespace {

template <typename T>
T scalar(const toml::node& node, const std::string& key) {
    auto v = node.value<T>();
    if (!v) throw ConfigError("config key '" + key + "' has the wrong type");
    return *v;
}

template <typename T>
std::vector<T> array_of(const toml::node& node, const std::string& key) {
    const toml::array* arr = node.as_array();
    if (!arr) throw ConfigError("config key '" + key + "' must be an array");
    std::vector<T> out;
    for (const auto& el : *arr) out.push_back(scalar<T>(el, key));
    return out;
}

template <typename T>
toml::array to_array(const std::vector<T>& values) {
    toml::array arr;
    for (const auto& v : values) {
        if constexpr (std::is_same_v<T, int>)
            arr.push_back(std::int64_t(v));
        else
            arr.push_back(v);
    }
    return arr;
}

}  // namespace

void RunConfig::apply_toml(const std::filesystem::path& file) {
    toml::table doc;
    try {
        doc = toml::parse_file(file.string());
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << file.string() << ": " << e.description() << " at line " << e.source().begin.line;
        throw ConfigError(msg.str());
    }

    for (const auto& [section_key, section_node] : doc) {
        const std::string section(section_key.str());
        const toml::table* table = section_node.as_table();
        if (!table) throw ConfigError("config: top-level key '" + section + "' must be a table");
        for (const auto& [name, node] : *table) {
            const std::string key = section + "." + std::string(name.str());
            if (key == "dataset.root") root = scalar<std::string>(node, key);
            else if (key == "dataset.context_root") context_root = scalar<std::string>(node, key);
            else if (key == "dataset.classes") classes = array_of<std::string>(node, key);
            else if (key == "dataset.novel") novel = array_of<std::string>(node, key);
            else if (key == "dataset.k") k = int(scalar<std::int64_t>(node, key));
            else if (key == "run.seed") seed = std::uint64_t(scalar<std::int64_t>(node, key));
            else if (key == "run.out") out = scalar<std::string>(node, key);
            else if (key == "run.jobs") jobs = int(scalar<std::int64_t>(node, key));
            else if (key == "synthesis.backend") backend = backend_from_string(scalar<std::string>(node, key));
            else if (key == "synthesis.contexts") contexts = int(scalar<std::int64_t>(node, key));
            else if (key == "synthesis.per_context") per_context = int(scalar<std::int64_t>(node, key));
            else if (key == "synthesis.scale_min") scale_min = scalar<double>(node, key);
            else if (key == "synthesis.scale_max") scale_max = scalar<double>(node, key);
            else if (key == "synthesis.overlap") overlap = scalar<double>(node, key);
            else if (key == "synthesis.max_attempts") max_attempts = int(scalar<std::int64_t>(node, key));
            else if (key == "synthesis.tolerance") tolerance = scalar<double>(node, key);
            else if (key == "synthesis.max_iterations") max_iterations = int(scalar<std::int64_t>(node, key));
            else if (key == "service.endpoint") endpoint = scalar<std::string>(node, key);
            else if (key == "service.mock") mock = scalar<bool>(node, key);
            else if (key == "service.timeout_s") timeout_s = scalar<double>(node, key);
            else if (key == "service.retries") retries = int(scalar<std::int64_t>(node, key));
            else if (key == "service.steps") steps = int(scalar<std::int64_t>(node, key));
            else if (key == "sweep.instances") sweep_instances = array_of<int>(node, key);
            else if (key == "sweep.contexts") sweep_contexts = array_of<int>(node, key);
            else if (key == "sweep.detector_command") detector_command = scalar<std::string>(node, key);
            else if (key == "sweep.test_root") test_root = scalar<std::string>(node, key);
            else if (key == "eval.detections") detections = scalar<std::string>(node, key);
            else if (key == "eval.baseline") baseline = scalar<std::string>(node, key);
            else if (key == "eval.iou") iou = scalar<double>(node, key);
            else if (key == "eval.eleven_point") eleven_point = scalar<bool>(node, key);
            else if (key == "eval.method") method = scalar<std::string>(node, key);
            else if (key == "preview.samples") samples = int(scalar<std::int64_t>(node, key));
            else throw ConfigError("config: unknown key '" + key + "'");
        }
    }
}

std::string RunConfig::to_toml() const {
    toml::table doc{
        {"dataset", toml::table{{"root", root.string()},
                                {"context_root", context_root.string()},
                                {"classes", to_array(classes)},
                                {"novel", to_array(novel)},
                                {"k", k}}},
        {"run", toml::table{{"seed", std::int64_t(seed)}, {"out", out.string()}, {"jobs", resolved_jobs()}}},
        {"synthesis", toml::table{{"backend", to_string(backend)},
                                  {"contexts", contexts},
                                  {"per_context", per_context},
                                  {"scale_min", scale_min},
                                  {"scale_max", scale_max},
                                  {"overlap", overlap},
                                  {"max_attempts", max_attempts},
                                  {"tolerance", tolerance},
                                  {"max_iterations", max_iterations}}},
        {"service", toml::table{{"endpoint", endpoint},
                                {"mock", mock},
                                {"timeout_s", timeout_s},
                                {"retries", retries},
                                {"steps", steps}}},
        {"sweep", toml::table{{"instances", to_array(sweep_instances)},
                              {"contexts", to_array(sweep_contexts)},
                              {"detector_command", detector_command},
                              {"test_root", test_root.string()}}},
        {"eval", toml::table{{"detections", detections.string()},
                             {"baseline", baseline.string()},
                             {"iou", iou},
                             {"eleven_point", eleven_point},
                             {"method", method}}},
        {"preview", toml::table{{"samples", samples}}},
    };
    std::ostringstream out;
    out << doc << '\n';
    return out.str();
}

int RunConfig::resolved_jobs() const {
    if (jobs > 0) return jobs;
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace ctxforge
