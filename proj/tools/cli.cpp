#include "cli.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <thread>

#include <CLI11.hpp>

#include "isoopt/properties.hpp"
#include "isoopt/report.hpp"

namespace isoopt::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string normalize_key(std::string key) {
    for (char& c : key) c = c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return key;
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= value.size()) {
        const std::size_t comma = value.find(',', start);
        const std::string item =
            trim(std::string_view(value).substr(start, comma == std::string::npos ? std::string::npos
                                                                                  : comma - start));
        if (!item.empty()) out.push_back(item);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

double parse_real(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || res.ec != std::errc{} || res.ptr != v.data() + v.size())
        throw ConfigError(key + ": expected a number, got '" + value + "'");
    return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || res.ec != std::errc{} || res.ptr != v.data() + v.size())
        throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
    return out;
}

std::size_t parse_count(const std::string& key, const std::string& value) {
    return static_cast<std::size_t>(parse_uint(key, value));
}

std::vector<OptimizerKind> parse_optimizer_list(const std::string& key, const std::string& value) {
    std::vector<OptimizerKind> out;
    for (const std::string& name : split_list(value)) {
        const auto kind = parse_optimizer(name);
        if (!kind) throw ConfigError(key + ": unknown optimizer '" + name + "'");
        out.push_back(*kind);
    }
    if (out.empty()) throw ConfigError(key + ": optimizer list is empty");
    return out;
}

template <class T, class F>
std::vector<T> parse_list(const std::string& key, const std::string& value, F parse_one) {
    std::vector<T> out;
    for (const std::string& item : split_list(value)) out.push_back(parse_one(key, item));
    if (out.empty()) throw ConfigError(key + ": list is empty");
    return out;
}

using Setter = std::function<void(SweepConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table{
        {"optimizer", [](SweepConfig& c, const std::string& k, const std::string& v) {
             c.optimizers = parse_optimizer_list(k, v);
         }},
        {"seeds", [](SweepConfig& c, const std::string& k, const std::string& v) {
             c.seeds = parse_list<std::uint64_t>(k, v, parse_uint);
         }},
        {"workers", [](SweepConfig& c, const std::string& k, const std::string& v) {
             c.workers = std::max<std::size_t>(1, parse_count(k, v));
         }},
        {"lr_min", [](SweepConfig& c, const std::string& k, const std::string& v) { c.lr_min = parse_real(k, v); }},
        {"lr_max", [](SweepConfig& c, const std::string& k, const std::string& v) { c.lr_max = parse_real(k, v); }},
        {"lr_count", [](SweepConfig& c, const std::string& k, const std::string& v) { c.lr_count = parse_count(k, v); }},
        {"depth", [](SweepConfig& c, const std::string& k, const std::string& v) { c.depth = parse_count(k, v); }},
        {"dim", [](SweepConfig& c, const std::string& k, const std::string& v) { c.n = parse_count(k, v); }},
        {"batch", [](SweepConfig& c, const std::string& k, const std::string& v) { c.batch_size = parse_count(k, v); }},
        {"max_iters", [](SweepConfig& c, const std::string& k, const std::string& v) { c.max_iters = parse_count(k, v); }},
        {"beta1", [](SweepConfig& c, const std::string& k, const std::string& v) { c.beta1 = parse_real(k, v); }},
        {"beta2", [](SweepConfig& c, const std::string& k, const std::string& v) { c.beta2 = parse_real(k, v); }},
        {"epsilon", [](SweepConfig& c, const std::string& k, const std::string& v) { c.epsilon = parse_real(k, v); }},
        {"eval_interval", [](SweepConfig& c, const std::string& k, const std::string& v) {
             c.eval.eval_interval = parse_count(k, v);
         }},
        {"eval_batch", [](SweepConfig& c, const std::string& k, const std::string& v) {
             c.eval.eval_batch = parse_count(k, v);
         }},
        {"convergence_threshold", [](SweepConfig& c, const std::string& k, const std::string& v) {
             c.eval.convergence_threshold = parse_real(k, v);
         }},
        {"base_seed", [](SweepConfig& c, const std::string& k, const std::string& v) { c.base_seed = parse_uint(k, v); }},
        {"problem", [](SweepConfig& c, const std::string& k, const std::string& v) {
             const auto p = parse_problem(trim(v));
             if (!p) throw ConfigError(k + ": unknown problem '" + v + "'");
             c.problem = *p;
         }},
        {"mode", [](SweepConfig& c, const std::string& k, const std::string& v) {
             const std::string m = trim(v);
             if (m == "iterations") {
                 c.mode = SweepMode::IterationsToConvergence;
                 c.eval.stop_on_convergence = true;
             } else if (m == "final_loss") {
                 c.mode = SweepMode::FinalLoss;
                 c.eval.stop_on_convergence = false;
             } else {
                 throw ConfigError(k + ": expected 'iterations' or 'final_loss', got '" + v + "'");
             }
         }},
    };
    return table;
}

void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

template <class F>
void write_file(const fs::path& path, F&& body) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    body(f);
    f.flush();
    if (!f) throw IoError("write to '" + path.string() + "' failed");
}

// Flags whose values flow through the same setters as config-file keys.
struct FlagSpec {
    const char* flag;
    const char* key;
    const char* help;
};

constexpr FlagSpec kSweepFlags[] = {
    {"--optimizer", "optimizer", "Comma-separated optimizers (sgd, sign, adam, iso, isoadam, shampoo)"},
    {"--seeds", "seeds", "Comma-separated seeds"},
    {"--workers", "workers", "Worker threads (default: ISO_OPT_WORKERS or hardware threads)"},
    {"--lr-min", "lr_min", "Smallest learning rate"},
    {"--lr-max", "lr_max", "Largest learning rate"},
    {"--lr-count", "lr_count", "Number of log-spaced learning rates"},
    {"--depth", "depth", "Number of layers"},
    {"--dim", "dim", "Layer width n"},
    {"--batch", "batch", "Training batch size"},
    {"--max-iters", "max_iters", "Iteration budget per run"},
    {"--problem", "problem", "deep_regression or sigma_regression"},
    {"--beta1", "beta1", "First-moment decay"},
    {"--beta2", "beta2", "Second-moment decay"},
    {"--epsilon", "epsilon", "Adam-style epsilon"},
    {"--eval-interval", "eval_interval", "Iterations between evaluations"},
    {"--eval-batch", "eval_batch", "Evaluation batch size"},
    {"--base-seed", "base_seed", "Seed mixed into every run"},
    {"--mode", "mode", "iterations or final_loss"},
};

int sweep_command(const std::string& preset, const std::string& config_path, const std::string& out_dir,
                  bool progress, const std::vector<std::pair<std::string, std::string>>& flags,
                  std::ostream& out, std::ostream& err) {
    std::map<std::string, std::string> file_settings;
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) throw IoError("cannot read config file '" + config_path + "'");
        file_settings = parse_key_values(f);
    }
    const SweepConfig config = resolve_sweep_config(preset, file_settings, flags);
    config.validate();
    ensure_directory(out_dir);

    SweepProgress report;
    if (progress) {
        report = [&err](std::size_t done, std::size_t total) {
            err << "\r" << done << "/" << total << std::flush;
            if (done == total) err << "\n";
        };
    }
    const std::vector<RunRecord> records = run_sweep(config, report);
    const std::vector<OptimizerSummary> summary = best_per_optimizer(records, config.mode);

    nlohmann::json j = sweep_json(config, records);
    j["summary"] = summary_json(summary);
    write_file(fs::path(out_dir) / "sweep.csv", [&](std::ostream& f) { write_sweep_csv(f, records); });
    write_file(fs::path(out_dir) / "sweep.json", [&](std::ostream& f) { f << j.dump(1) << '\n'; });

    out << "optimizer,best_lr,metric,converged_runs\n";
    for (const OptimizerSummary& s : summary) {
        out << to_string(s.optimizer) << ',' << (s.best_lr ? format_real(*s.best_lr) : "none") << ','
            << format_real(s.metric) << ',' << s.converged_runs << '\n';
    }
    return kOk;
}

struct PureNoiseArgs {
    std::string depths = "2";
    std::size_t dim = 32;
    std::string alphas = "0.1,0.01,0.001";
    std::size_t steps = 2000;
    std::string optimizers = "sgd,iso";
    std::uint64_t seed = 0;
    std::size_t batch = 1;
    double beta1 = 0.9;
    std::string out_dir = ".";
};

int purenoise_command(const PureNoiseArgs& a, std::ostream& out) {
    const auto depths = parse_list<std::size_t>("depth", a.depths, parse_count);
    const auto alphas = parse_list<double>("alpha", a.alphas, parse_real);
    const auto kinds = parse_optimizer_list("optimizer", a.optimizers);
    for (std::size_t d : depths)
        if (d == 0) throw ConfigError("depth: must be >= 1");
    if (a.dim == 0 || a.batch == 0) throw ConfigError("dim and batch must be >= 1");
    ensure_directory(a.out_dir);

    std::vector<PureNoiseRow> rows;
    for (OptimizerKind kind : kinds)
        for (std::size_t depth : depths)
            for (double alpha : alphas) {
                PureNoiseSpec spec;
                spec.depth = depth;
                spec.n = a.dim;
                spec.batch_size = a.batch;
                spec.steps = a.steps;
                spec.seed = a.seed;
                spec.optimizer.kind = kind;
                spec.optimizer.alpha = alpha;
                spec.optimizer.beta1 = a.beta1;
                rows.push_back({kind, alpha, depth, run_pure_noise(spec)});
            }

    write_file(fs::path(a.out_dir) / "purenoise.csv",
               [&](std::ostream& f) { write_pure_noise_csv(f, rows); });
    write_file(fs::path(a.out_dir) / "purenoise_series.csv",
               [&](std::ostream& f) { write_pure_noise_series_csv(f, rows); });
    write_pure_noise_csv(out, rows);
    return kOk;
}

struct FirstStepArgs {
    std::size_t dim = 32;
    std::size_t batch = 65536;
    std::uint64_t seed = 1;
    double condition = 10.0;
    bool identity = false;
    std::string out_dir;
};

int firststep_command(const FirstStepArgs& a, std::ostream& out) {
    if (a.dim == 0 || a.batch == 0) throw ConfigError("dim and batch must be >= 1");
    if (!(a.condition >= 1.0)) throw ConfigError("condition: must be >= 1");
    const FirstStepReport r =
        a.identity ? first_step_report(DenseMatrix::identity(a.dim), DenseMatrix::identity(a.dim),
                                       a.batch, a.seed)
                   : first_step_report(a.dim, a.batch, a.seed, a.condition);
    const std::string text = to_json(r).dump(2);
    if (!a.out_dir.empty()) {
        ensure_directory(a.out_dir);
        write_file(fs::path(a.out_dir) / "firststep.json", [&](std::ostream& f) { f << text << '\n'; });
    }
    out << text << '\n';
    return kOk;
}

int check_command(std::ostream& out) {
    bool all = true;
    for (const PropertyResult& r : run_all_checks()) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
        all = all && r.passed;
    }
    return all ? kOk : kPropertyFailure;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(std::istream& in) {
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::string body = trim(line.substr(0, line.find('#')));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
        const std::string key = normalize_key(trim(body.substr(0, eq)));
        if (key.empty()) throw ConfigError("config line " + std::to_string(number) + ": empty key");
        out[key] = trim(body.substr(eq + 1));
    }
    return out;
}

void apply_setting(SweepConfig& config, const std::string& key, const std::string& value) {
    std::string k = normalize_key(key);
    if (k == "optimizers") k = "optimizer";
    const auto& table = setters();
    const auto it = table.find(k);
    if (it == table.end()) throw ConfigError("unknown setting '" + key + "'");
    it->second(config, k, value);
}

SweepConfig preset_by_name(const std::string& name) {
    if (name == "fig3") return fig3_preset();
    if (name == "fig4") return fig4_preset();
    throw ConfigError("unknown preset '" + name + "' (expected fig3 or fig4)");
}

SweepConfig resolve_sweep_config(const std::string& preset,
                                 const std::map<std::string, std::string>& file_settings,
                                 const std::vector<std::pair<std::string, std::string>>& flag_settings) {
    std::string name = preset;
    if (name.empty()) {
        const auto it = file_settings.find("preset");
        name = it == file_settings.end() ? "fig3" : trim(it->second);
    }
    SweepConfig config = preset_by_name(name);
    config.workers = default_workers();
    for (const auto& [key, value] : file_settings)
        if (key != "preset") apply_setting(config, key, value);
    for (const auto& [key, value] : flag_settings) apply_setting(config, key, value);
    return config;
}

std::size_t default_workers() {
    if (const char* env = std::getenv("ISO_OPT_WORKERS"); env != nullptr && *env != '\0') {
        try {
            return std::max<std::size_t>(1, parse_count("ISO_OPT_WORKERS", env));
        } catch (const ConfigError&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Iso / IsoAdam optimizer experiments on deep linear networks"};
    app.require_subcommand(1);

    auto* sweep = app.add_subcommand("sweep", "Learning-rate sweep; writes sweep.csv and sweep.json");
    std::string preset, config_path, sweep_out = ".";
    bool progress = false;
    sweep->add_option("--preset", preset, "fig3 (5 layers) or fig4 (40 layers)");
    sweep->add_option("--config", config_path, "key=value settings file");
    sweep->add_option("--out", sweep_out, "Output directory");
    sweep->add_flag("--progress", progress, "Print progress to stderr");
    std::map<std::string, std::string> sweep_values;
    std::vector<std::pair<CLI::Option*, std::string>> sweep_options;
    for (const FlagSpec& f : kSweepFlags)
        sweep_options.emplace_back(sweep->add_option(f.flag, sweep_values[f.key], f.help), f.key);

    auto* noise = app.add_subcommand("purenoise", "Pure-noise weight-norm growth");
    PureNoiseArgs pn;
    noise->add_option("--depth", pn.depths, "Comma-separated depths")->capture_default_str();
    noise->add_option("--dim", pn.dim, "Layer width n")->capture_default_str();
    noise->add_option("--alpha", pn.alphas, "Comma-separated step sizes")->capture_default_str();
    noise->add_option("--steps", pn.steps, "Steps per run")->capture_default_str();
    noise->add_option("--optimizer", pn.optimizers, "Comma-separated optimizers")->capture_default_str();
    noise->add_option("--seed", pn.seed, "Seed")->capture_default_str();
    noise->add_option("--batch", pn.batch, "Batch size")->capture_default_str();
    noise->add_option("--beta1", pn.beta1, "Moment decay")->capture_default_str();
    noise->add_option("--out", pn.out_dir, "Output directory")->capture_default_str();

    auto* first = app.add_subcommand("firststep", "First-step closed-form comparison (JSON)");
    FirstStepArgs fs_args;
    first->add_option("--dim", fs_args.dim, "Dimension n")->capture_default_str();
    first->add_option("--batch", fs_args.batch, "Batch size")->capture_default_str();
    first->add_option("--seed", fs_args.seed, "Seed")->capture_default_str();
    first->add_option("--condition", fs_args.condition, "Condition number of Sigma")->capture_default_str();
    first->add_flag("--identity", fs_args.identity, "Use Sigma = A = I");
    first->add_option("--out", fs_args.out_dir, "Also write firststep.json here");

    auto* check = app.add_subcommand("check", "Run the invariant suite");

    std::vector<const char*> argv;
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (sweep->parsed()) {
            std::vector<std::pair<std::string, std::string>> flags;
            for (const auto& [opt, key] : sweep_options)
                if (opt->count() > 0) flags.emplace_back(key, sweep_values[key]);
            return sweep_command(preset, config_path, sweep_out, progress, flags, out, err);
        }
        if (noise->parsed()) return purenoise_command(pn, out);
        if (first->parsed()) return firststep_command(fs_args, out);
        if (check->parsed()) return check_command(out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const ContractError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << '\n';
        return kIoError;
    }
    return kConfigError;
}

}  // namespace isoopt::cli
