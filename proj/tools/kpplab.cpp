// kpplab command-line front end: one subcommand per experiment kind plus report.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kpplab/errors.hpp"
#include "kpplab/harness.hpp"

namespace {

using nlohmann::json;

constexpr int kPass = 0;
constexpr int kFail = 1;
constexpr int kConfig = 2;

struct RunFlags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    bool print_config = false;
};

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw kpplab::ConfigError("cannot open config file '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw kpplab::ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
}

int run_kind(const std::string& kind, const RunFlags& f) {
    json j = load_config(f.config);
    if (!j.is_object()) throw kpplab::ConfigError("config must be a JSON object");
    // a manifest re-runs its resolved config
    if (j.contains("run_hash") && j.contains("config")) j = json(j["config"]);
    if (j.contains("kind") && j["kind"] != kind)
        throw kpplab::ConfigError("config kind '" + j["kind"].dump() + "' does not match subcommand '" + kind + "'");
    j["kind"] = kind;
    if (!f.out.empty()) j["out"] = f.out;
    if (f.seed) j["seed"] = *f.seed;
    if (f.threads) j["threads"] = *f.threads;
    const auto cfg = kpplab::RunConfig::from_json(j);
    if (f.print_config) {
        std::cout << cfg.to_json().dump(2) << "\n";
        return kPass;
    }
    const auto r = kpplab::run(cfg);
    std::cout << kind << ": " << (r.pass ? "PASS" : "FAIL") << "  " << r.dir.string() << "\n";
    for (const auto& [k, v] : r.manifest["verdicts"].items()) std::cout << "  " << k << " = " << v.dump() << "\n";
    for (const auto& [k, v] : r.manifest["summary"].items()) std::cout << "  " << k << " = " << v.dump() << "\n";
    if (r.manifest.contains("error")) std::cout << "  error: " << r.manifest["error"].get<std::string>() << "\n";
    return r.pass ? kPass : kFail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kpplab: fronts, entire solutions and wave stability for KPP media"};
    app.set_version_flag("--version", std::string(KPPLAB_VERSION));
    app.require_subcommand(1);

    RunFlags flags;
    for (const auto& kind : kpplab::experiment_kinds()) {
        auto* sub = app.add_subcommand(kind, "run a " + kind + " experiment");
        sub->add_option("--config", flags.config, "JSON run config")->check(CLI::ExistingFile);
        sub->add_option("--out", flags.out, "output directory (relative paths sit under $KPPLAB_OUT)");
        sub->add_option("--seed", flags.seed, "override the config seed");
        sub->add_option("--threads", flags.threads, "worker threads for independent sub-tasks")
            ->check(CLI::PositiveNumber);
        sub->add_flag("--print-config", flags.print_config, "print the resolved config and exit");
    }

    std::vector<std::string> dirs;
    std::string json_out;
    auto* rep = app.add_subcommand("report", "aggregate finished runs into one table");
    rep->add_option("dirs", dirs, "run directories");
    rep->add_option("--json", json_out, "also write the table as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kPass : kConfig;
    }

    try {
        if (rep->parsed()) {
            std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
            const auto t = kpplab::report(paths);
            std::cout << t.markdown();
            if (!json_out.empty()) {
                std::ofstream out(json_out);
                out << t.to_json().dump(2) << "\n";
            }
            return t.all_pass ? kPass : kFail;
        }
        for (auto* sub : app.get_subcommands())
            if (sub->parsed()) return run_kind(sub->get_name(), flags);
    } catch (const kpplab::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFail;
    }
    return kFail;
}
