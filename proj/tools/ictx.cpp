// Command-line harness around the in-context dynamics library:
// simulate trajectories, extract hierarchical PDFs, evaluate loss curves,
// run baselines, fit scaling laws, and render report plots.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ictx/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitBackend = 3;
constexpr int kExitPartial = 4;

struct CommonOpts {
    std::string config_path;
    std::string seed_range;  // "a..b"
    std::string backend;     // override: oracle|ngram|remote
    std::string out;
};

std::optional<std::pair<std::uint64_t, std::uint64_t>> parse_seed_range(const std::string& s) {
    if (s.empty()) return std::nullopt;
    const auto pos = s.find("..");
    if (pos == std::string::npos)
        throw ictx::param_error("--seed-range must look like a..b");
    try {
        const std::uint64_t a = std::stoull(s.substr(0, pos));
        const std::uint64_t b = std::stoull(s.substr(pos + 2));
        if (b < a) throw ictx::param_error("--seed-range: empty range");
        return std::make_pair(a, b);
    } catch (const std::logic_error&) {
        throw ictx::param_error("--seed-range must hold two integers");
    }
}

ictx::ExperimentConfig load(const CommonOpts& opts) {
    if (opts.config_path.empty()) throw ictx::param_error("--config is required");
    ictx::ExperimentConfig cfg = ictx::load_config(opts.config_path);
    if (!opts.backend.empty()) {
        if (opts.backend == "oracle") cfg.backend.kind = ictx::BackendSpec::Kind::Oracle;
        else if (opts.backend == "ngram") cfg.backend.kind = ictx::BackendSpec::Kind::Ngram;
        else if (opts.backend == "remote") cfg.backend.kind = ictx::BackendSpec::Kind::Remote;
        else throw ictx::param_error("--backend must be oracle, ngram, or remote");
    }
    if (!opts.out.empty()) cfg.out_dir = opts.out;
    return cfg;
}

int cmd_simulate(const CommonOpts& opts) {
    const auto cfg = load(opts);
    const auto range = parse_seed_range(opts.seed_range)
                           .value_or(ictx::default_seed_range(cfg));
    std::filesystem::create_directories(cfg.out_dir);
    for (std::uint64_t seed = range.first; seed <= range.second; ++seed) {
        ictx::SystemSpec spec = cfg.system;
        if (spec.kind == ictx::SystemKind::Markov && spec.matrix.rows.empty())
            spec.matrix = ictx::sample_markov_matrix(spec.matrix.n, seed);
        const ictx::Trajectory traj = ictx::simulate(spec, cfg.steps, seed);
        std::ofstream out(std::filesystem::path(cfg.out_dir) /
                          ("trajectory_seed_" + std::to_string(seed) + ".csv"));
        out << "system,seed,t,value\n";
        for (std::size_t t = 0; t < traj.values.size(); ++t)
            out << spec.tag() << "," << seed << "," << t << ","
                << ictx::format_double(traj.values[t]) << "\n";
    }
    std::cout << "wrote trajectories to " << cfg.out_dir << "\n";
    return kExitOk;
}

int cmd_extract(const CommonOpts& opts) {
    ictx::ExperimentConfig cfg = load(opts);
    cfg.emit_pdfs = true;
    const auto range = parse_seed_range(opts.seed_range)
                           .value_or(std::make_pair<std::uint64_t, std::uint64_t>(1, 1));
    std::filesystem::create_directories(cfg.out_dir);
    bool any_failed = false, any_ok = false;
    std::ofstream out(std::filesystem::path(cfg.out_dir) / "pdfs.jsonl");
    for (std::uint64_t seed = range.first; seed <= range.second; ++seed) {
        const ictx::SeedResult r = ictx::run_seed(cfg, seed);
        if (!r.ok) {
            std::cerr << "seed " << seed << " failed: " << r.error_message << "\n";
            any_failed = true;
            continue;
        }
        any_ok = true;
        for (const auto& pdf : r.pdfs) out << ictx::pdf_to_json(pdf).dump() << "\n";
    }
    if (!any_ok) return kExitBackend;
    return any_failed ? kExitPartial : kExitOk;
}

int cmd_evaluate(const CommonOpts& opts) {
    const auto cfg = load(opts);
    const auto summary = ictx::run_experiment(cfg, parse_seed_range(opts.seed_range));
    std::cout << ictx::summary_to_json(summary).dump(2) << "\n";
    if (summary.failed() == static_cast<int>(summary.seeds.size())) return kExitBackend;
    return summary.failed() > 0 ? kExitPartial : kExitOk;
}

int cmd_baseline(const CommonOpts& opts, const std::string& kind) {
    const auto cfg = load(opts);
    const auto range = parse_seed_range(opts.seed_range)
                           .value_or(ictx::default_seed_range(cfg));
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream out(std::filesystem::path(cfg.out_dir) / ("baseline_" + kind + ".csv"));
    out << ictx::loss_csv_header() << "\n";
    for (std::uint64_t seed = range.first; seed <= range.second; ++seed) {
        ictx::SystemSpec spec = cfg.system;
        if (spec.kind == ictx::SystemKind::Markov && spec.matrix.rows.empty())
            spec.matrix = ictx::sample_markov_matrix(spec.matrix.n, seed);
        const ictx::Trajectory traj = ictx::simulate(spec, cfg.steps, seed);
        ictx::LossCurve curve;
        if (kind == "unigram" || kind == "bigram") {
            if (!spec.discrete())
                throw ictx::param_error("n-gram baselines need a discrete chain");
            curve = kind == "bigram" ? ictx::bigram_loss_curve(traj, spec.matrix)
                                     : ictx::unigram_loss_curve(traj, spec.matrix);
        } else {
            if (spec.discrete())
                throw ictx::param_error("AR1 baselines need a continuous system");
            std::vector<int> grid;
            for (int t : ictx::default_context_grid())
                if (t < static_cast<int>(traj.values.size())) grid.push_back(t);
            curve = ictx::ar1_loss_curve(
                traj, spec, kind == "ar1-net" ? ictx::Ar1Kind::Net : ictx::Ar1Kind::Linear,
                ictx::Ar1NetConfig{}, grid, seed);
        }
        for (std::size_t i = 0; i < curve.size(); ++i)
            out << spec.tag() << "," << seed << "," << curve.context_lens[i] << ","
                << ictx::metric_name(curve.metric) << ","
                << ictx::format_double(curve.values[i]) << "\n";
    }
    std::cout << "wrote baseline_" << kind << ".csv to " << cfg.out_dir << "\n";
    return kExitOk;
}

std::map<std::string, ictx::LossCurve> read_grouped_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ictx::io_error("cannot read " + path);
    std::string line;
    std::getline(in, line);
    // (system/metric, seed) -> curve
    std::map<std::string, std::map<std::string, ictx::LossCurve>> grouped;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string system, seed, t, metric, value;
        std::getline(ss, system, ',');
        std::getline(ss, seed, ',');
        std::getline(ss, t, ',');
        std::getline(ss, metric, ',');
        std::getline(ss, value, ',');
        auto& curve = grouped[system + "/" + metric][seed];
        curve.metric = ictx::metric_from_name(metric);
        curve.context_lens.push_back(std::stoi(t));
        curve.values.push_back(std::stod(value));
    }
    std::map<std::string, ictx::LossCurve> averaged;
    for (auto& [key, per_seed] : grouped) {
        std::vector<ictx::LossCurve> curves;
        for (auto& [_, c] : per_seed) curves.push_back(std::move(c));
        averaged[key] = ictx::average_curves(curves);
    }
    return averaged;
}

int cmd_fit_scaling(const std::string& in_path, const std::string& out_path, int t_min) {
    nlohmann::json result = nlohmann::json::object();
    for (const auto& [key, curve] : read_grouped_csv(in_path)) {
        nlohmann::json entry;
        try {
            const auto fit = ictx::fit_power_law(curve, t_min);
            entry["alpha"] = fit.alpha;
            entry["d_c"] = fit.d_c;
            entry["r_squared"] = fit.r_squared;
            entry["window"] = {fit.t_min, fit.t_max};
        } catch (const ictx::error& e) {
            entry["error"] = e.what();
        }
        try {
            const auto plateau = ictx::detect_plateau(curve);
            entry["plateau_onset"] = plateau ? nlohmann::json(*plateau) : nlohmann::json(nullptr);
        } catch (const ictx::error&) {
            entry["plateau_onset"] = nullptr;
        }
        result[key] = entry;
    }
    if (out_path.empty()) {
        std::cout << result.dump(2) << "\n";
    } else {
        std::ofstream out(out_path);
        if (!out) throw ictx::io_error("cannot write " + out_path);
        out << result.dump(2) << "\n";
    }
    return kExitOk;
}

int cmd_report(const std::string& in_path, const std::string& out_dir, int t_min) {
    std::filesystem::create_directories(out_dir);
    for (const auto& [key, curve] : read_grouped_csv(in_path)) {
        std::optional<ictx::PowerLawFit> fit;
        try {
            fit = ictx::fit_power_law(curve, t_min);
        } catch (const ictx::error&) {
        }
        std::string name = key;
        for (char& c : name)
            if (c == '/') c = '_';
        std::ofstream out(std::filesystem::path(out_dir) / (name + ".svg"));
        out << ictx::render_loss_svg(curve, fit, key);
    }
    std::cout << "wrote plots to " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"in-context dynamics learning harness"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string baseline_kind = "bigram";
    std::string in_path, out_path;
    int t_min = 10;

    auto add_common = [&](CLI::App* sub, bool needs_config = true) {
        auto* c = sub->add_option("--config", opts.config_path, "experiment config JSON");
        if (needs_config) c->required();
        sub->add_option("--seed-range", opts.seed_range, "inclusive seed range a..b");
        sub->add_option("--backend", opts.backend, "oracle | ngram | remote");
        sub->add_option("--out", opts.out, "output directory");
    };

    auto* sim = app.add_subcommand("simulate", "simulate trajectories to CSV");
    add_common(sim);
    auto* ext = app.add_subcommand("extract", "extract hierarchical PDFs to JSONL");
    add_common(ext);
    auto* eval = app.add_subcommand("evaluate", "run the seeded loss-curve experiment");
    add_common(eval);
    auto* base = app.add_subcommand("baseline", "run a reference baseline");
    add_common(base);
    base->add_option("--kind", baseline_kind, "unigram | bigram | ar1-linear | ar1-net");
    auto* fits = app.add_subcommand("fit-scaling", "fit power laws to a loss CSV");
    fits->add_option("--in", in_path, "loss CSV")->required();
    fits->add_option("--out", out_path, "summary JSON (stdout if omitted)");
    fits->add_option("--t-min", t_min, "fit window lower edge");
    auto* rep = app.add_subcommand("report", "render SVG plots from a loss CSV");
    rep->add_option("--in", in_path, "loss CSV")->required();
    rep->add_option("--out", out_path, "output directory")->required();
    rep->add_option("--t-min", t_min, "fit window lower edge");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return cmd_simulate(opts);
        if (ext->parsed()) return cmd_extract(opts);
        if (eval->parsed()) return cmd_evaluate(opts);
        if (base->parsed()) return cmd_baseline(opts, baseline_kind);
        if (fits->parsed()) return cmd_fit_scaling(in_path, out_path, t_min);
        if (rep->parsed()) return cmd_report(in_path, out_path, t_min);
    } catch (const ictx::transport_error& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const ictx::protocol_error& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const ictx::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}
