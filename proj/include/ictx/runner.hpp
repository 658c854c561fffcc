#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ictx/baselines.hpp"
#include "ictx/codec.hpp"
#include "ictx/errors.hpp"
#include "ictx/hpdf.hpp"
#include "ictx/metrics.hpp"
#include "ictx/models.hpp"
#include "ictx/remote.hpp"
#include "ictx/scaling.hpp"
#include "ictx/systems.hpp"

namespace ictx {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct BackendSpec {
    enum class Kind { Oracle, Ngram, Remote };
    Kind kind = Kind::Oracle;
    std::string url;             // remote
    std::string vocab_map_path;  // remote; empty = identity map
    int ngram_order = 2;
};

struct ExperimentConfig {
    SystemSpec system;
    int n_digits = 3;
    int steps = 1000;
    int seeds = 10;
    BackendSpec backend;
    double temperature = 1.0;
    RefinePolicy refine = RefinePolicy::full(3);
    std::optional<Metric> metric_override;
    std::string out_dir = "out";
    bool emit_pdfs = false;
    int jobs = 0;  // 0 = hardware concurrency
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                                const std::string& where) {
    if (!j.is_object()) throw param_error("config: " + where + " must be an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key))
            throw param_error("config: unknown key \"" + key + "\" in " + where);
}

}  // namespace detail

inline SystemSpec parse_system(const nlohmann::json& j) {
    detail::reject_unknown_keys(j,
                                {"kind", "n", "matrix", "start", "r", "noise_sigma", "x0", "mu",
                                 "sigma", "dt", "rho", "beta", "stride", "init"},
                                "system");
    if (!j.contains("kind")) throw param_error("config: system.kind is required");
    const std::string kind = j.at("kind").get<std::string>();
    SystemSpec spec;
    if (kind == "markov") {
        spec.kind = SystemKind::Markov;
        if (j.contains("matrix")) {
            spec.matrix.rows = j.at("matrix").get<std::vector<std::vector<double>>>();
            spec.matrix.n = static_cast<int>(spec.matrix.rows.size());
            spec.matrix.validate();
        } else {
            spec.matrix.n = j.value("n", 4);  // sampled per seed by the runner
        }
        spec.markov_start = j.value("start", 0);
    } else if (kind == "logistic") {
        spec.kind = SystemKind::Logistic;
        spec.map.r = j.value("r", 3.9);
        spec.map.noise_sigma = j.value("noise_sigma", 0.01);
        spec.map.x0 = j.value("x0", 0.5);
        spec.map.validate();
    } else if (kind == "bm" || kind == "gbm") {
        spec.kind = kind == "bm" ? SystemKind::BrownianMotion
                                 : SystemKind::GeometricBrownianMotion;
        const bool bm = kind == "bm";
        spec.sde.mu = j.value("mu", bm ? 0.1 : 0.05);
        spec.sde.sigma = j.value("sigma", bm ? 0.5 : 0.2);
        spec.sde.dt = j.value("dt", bm ? 0.04 : 0.01);
        spec.sde.x0 = j.value("x0", bm ? 0.0 : 1.0);
        spec.sde.validate();
    } else if (kind == "lorenz") {
        spec.kind = SystemKind::Lorenz;
        spec.lorenz.sigma = j.value("sigma", 10.0);
        spec.lorenz.rho = j.value("rho", 28.0);
        spec.lorenz.beta = j.value("beta", 8.0 / 3.0);
        spec.lorenz.dt = j.value("dt", 0.01);
        spec.lorenz.stride = j.value("stride", 5);
        if (j.contains("init")) {
            auto v = j.at("init").get<std::vector<double>>();
            if (v.size() != 3) throw param_error("config: lorenz init needs 3 components");
            spec.lorenz.init = {v[0], v[1], v[2]};
        }
        spec.lorenz.validate();
    } else {
        throw param_error("config: unknown system kind \"" + kind + "\"");
    }
    return spec;
}

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    detail::reject_unknown_keys(j,
                                {"system", "n_digits", "steps", "seeds", "backend", "temperature",
                                 "refine", "metric", "out", "emit_pdfs", "jobs"},
                                "config");
    ExperimentConfig cfg;
    if (!j.contains("system")) throw param_error("config: system is required");
    cfg.system = parse_system(j.at("system"));
    cfg.n_digits = j.value("n_digits", 3);
    if (cfg.n_digits < 1 || cfg.n_digits > 6) throw param_error("config: n_digits out of range");
    cfg.steps = j.value("steps", 1000);
    if (cfg.steps < 2) throw param_error("config: steps must be >= 2");
    cfg.seeds = j.value("seeds", 10);
    if (cfg.seeds < 1) throw param_error("config: seeds must be >= 1");
    cfg.temperature = j.value("temperature", 1.0);
    if (!(cfg.temperature > 0.0)) throw param_error("config: temperature must be positive");
    cfg.out_dir = j.value("out", std::string("out"));
    cfg.emit_pdfs = j.value("emit_pdfs", false);
    cfg.jobs = j.value("jobs", 0);

    if (j.contains("backend")) {
        const auto& b = j.at("backend");
        detail::reject_unknown_keys(b, {"kind", "url", "vocab_map", "order"}, "backend");
        const std::string kind = b.value("kind", std::string("oracle"));
        if (kind == "oracle") cfg.backend.kind = BackendSpec::Kind::Oracle;
        else if (kind == "ngram") cfg.backend.kind = BackendSpec::Kind::Ngram;
        else if (kind == "remote") cfg.backend.kind = BackendSpec::Kind::Remote;
        else throw param_error("config: unknown backend kind \"" + kind + "\"");
        cfg.backend.url = b.value("url", std::string());
        cfg.backend.vocab_map_path = b.value("vocab_map", std::string());
        cfg.backend.ngram_order = b.value("order", 2);
    }

    const int effective_digits = cfg.system.discrete() ? 1 : cfg.n_digits;
    cfg.refine = cfg.system.deterministic() || cfg.backend.kind == BackendSpec::Kind::Oracle
                     ? RefinePolicy::full(effective_digits)
                     : RefinePolicy::top_k(effective_digits, 2);
    if (j.contains("refine")) {
        const auto& r = j.at("refine");
        detail::reject_unknown_keys(r, {"mode", "k", "target_depth"}, "refine");
        const std::string mode = r.value("mode", std::string("full"));
        const int depth = r.value("target_depth", effective_digits);
        if (mode == "full") cfg.refine = RefinePolicy::full(depth);
        else if (mode == "top_k") cfg.refine = RefinePolicy::top_k(depth, r.value("k", 2));
        else throw param_error("config: unknown refine mode \"" + mode + "\"");
    }
    if (j.contains("metric"))
        cfg.metric_override = metric_from_name(j.at("metric").get<std::string>());
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw param_error(std::string("config: invalid JSON: ") + e.what());
    }
    return parse_config(j);
}

// ---------------------------------------------------------------------------
// Serialization helpers
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline nlohmann::json pdf_to_json(const HierarchyPdf& pdf) {
    nlohmann::json bins = nlohmann::json::array();
    for (const auto& b : pdf.bins)
        bins.push_back(nlohmann::json::array({b.lo, b.hi, b.mass, b.depth}));
    return nlohmann::json{{"state", pdf.state_index}, {"bins", bins}};
}

inline HierarchyPdf pdf_from_json(const nlohmann::json& j) {
    HierarchyPdf pdf;
    pdf.state_index = j.at("state").get<int>();
    for (const auto& b : j.at("bins")) {
        PdfBin bin;
        bin.lo = b.at(0).get<double>();
        bin.hi = b.at(1).get<double>();
        bin.mass = b.at(2).get<double>();
        bin.depth = b.at(3).get<int>();
        bin.code = std::lround(bin.lo / bin_width(bin.depth));
        pdf.bins.push_back(bin);
        pdf.n_digits = std::max(pdf.n_digits, bin.depth);
    }
    pdf.sort_bins();
    return pdf;
}

// ---------------------------------------------------------------------------
// Experiment execution
// ---------------------------------------------------------------------------

struct SeedResult {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error_message;
    LossCurve curve;
    CallLedger ledger;
    std::vector<HierarchyPdf> pdfs;  // only when emit_pdfs is set
};

struct ExperimentSummary {
    std::string system_tag;
    Metric metric = Metric::Bhattacharyya;
    std::vector<SeedResult> seeds;
    LossCurve averaged;
    std::optional<PowerLawFit> fit;
    std::optional<int> plateau_onset;

    int failed() const {
        int f = 0;
        for (const auto& s : seeds)
            if (!s.ok) ++f;
        return f;
    }
};

inline Metric default_metric(const SystemSpec& spec) {
    return spec.deterministic() ? Metric::Sdm : Metric::Bhattacharyya;
}

inline std::unique_ptr<ModelBackend> make_backend(const ExperimentConfig& cfg,
                                                  const std::vector<TransitionKernel>& rescaled,
                                                  bool separators) {
    switch (cfg.backend.kind) {
        case BackendSpec::Kind::Oracle: {
            const int n = cfg.system.discrete() ? 1 : cfg.n_digits;
            return std::make_unique<OracleBackend>(rescaled, n, separators);
        }
        case BackendSpec::Kind::Ngram: {
            std::vector<Token> alphabet;
            if (cfg.system.discrete()) {
                for (int i = 1; i <= cfg.system.matrix.n; ++i) alphabet.push_back(i);
            } else {
                for (int i = 0; i < kVocabSize; ++i) alphabet.push_back(i);
            }
            return std::make_unique<NgramBackend>(cfg.backend.ngram_order, alphabet);
        }
        case BackendSpec::Kind::Remote: {
            std::string url = cfg.backend.url;
            if (url.empty()) {
                const char* env = std::getenv("ICTX_REMOTE_URL");
                if (!env) throw param_error("remote backend: no url and ICTX_REMOTE_URL unset");
                url = env;
            }
            VocabMap vocab = VocabMap::identity();
            if (!cfg.backend.vocab_map_path.empty()) {
                std::ifstream in(cfg.backend.vocab_map_path);
                if (!in) throw io_error("cannot open vocab map " + cfg.backend.vocab_map_path);
                nlohmann::json j;
                in >> j;
                vocab = VocabMap::from_json(j);
            }
            return std::make_unique<RemoteBackend>(url, vocab);
        }
    }
    throw param_error("make_backend: unknown backend kind");
}

// Full pipeline for one seed: simulate, serialize, extract, score.
inline SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    SeedResult result;
    result.seed = seed;
    try {
        SystemSpec spec = cfg.system;
        if (spec.kind == SystemKind::Markov && spec.matrix.rows.empty())
            spec.matrix = sample_markov_matrix(spec.matrix.n, seed);

        const Trajectory traj = simulate(spec, cfg.steps, seed);
        const auto kernels = state_kernels(spec, traj);

        RescaleMap map = RescaleMap::identity();
        TokenSeq seq;
        if (spec.discrete()) {
            seq = serialize_chain(traj);
        } else {
            map = fit_rescale(traj);
            seq = serialize_trajectory(traj, map, cfg.n_digits);
        }

        std::vector<TransitionKernel> rescaled;
        rescaled.reserve(kernels.size());
        for (const auto& k : kernels) rescaled.push_back(rescale_kernel(k, map));

        auto backend = make_backend(cfg, rescaled, seq.separators);
        ExtractionRun run = initial_pass(*backend, seq, cfg.temperature);
        result.ledger += run.ledger;

        const Metric metric = cfg.metric_override.value_or(default_metric(spec));
        result.curve.metric = metric;
        for (int s = 1; s < seq.states(); ++s) {
            result.ledger += recursive_refiner(run.states[s], cfg.refine, *backend,
                                               cfg.temperature);
            const HierarchyPdf& pdf = run.states[s].pdf;
            const TransitionKernel& truth = rescaled[s];
            const double x_true = map.forward(traj.values[s]);
            double value = 0.0;
            switch (metric) {
                case Metric::Bhattacharyya:
                    value = truth.stochastic() ? bhattacharyya(truth, pdf)
                                               : bhattacharyya_collapsed_dirac(x_true, pdf);
                    break;
                case Metric::Sdm: value = sdm(x_true, pdf); break;
                case Metric::Kl: value = kl_divergence(truth, pdf); break;
                case Metric::Nll: value = nll(x_true, pdf); break;
            }
            result.curve.context_lens.push_back(s);
            result.curve.values.push_back(value);
            if (cfg.emit_pdfs) result.pdfs.push_back(pdf);
        }
        result.ok = true;
    } catch (const error& e) {
        result.error_message = e.what();
    }
    return result;
}

inline std::pair<std::uint64_t, std::uint64_t> default_seed_range(const ExperimentConfig& cfg) {
    return {1, static_cast<std::uint64_t>(cfg.seeds)};
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline std::string loss_csv_header() { return "system,seed,context_len,metric,value"; }

inline void write_seed_csv(const std::string& path, const std::string& system_tag,
                           const SeedResult& result) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path);
    out << loss_csv_header() << "\n";
    for (std::size_t i = 0; i < result.curve.size(); ++i)
        out << system_tag << "," << result.seed << "," << result.curve.context_lens[i] << ","
            << metric_name(result.curve.metric) << "," << format_double(result.curve.values[i])
            << "\n";
}

inline LossCurve read_seed_csv(const std::string& path, std::uint64_t expected_seed) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read " + path);
    std::string line;
    std::getline(in, line);  // header
    LossCurve curve;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string system, seed, t, metric, value;
        std::getline(ss, system, ',');
        std::getline(ss, seed, ',');
        std::getline(ss, t, ',');
        std::getline(ss, metric, ',');
        std::getline(ss, value, ',');
        if (std::stoull(seed) != expected_seed)
            throw io_error("seed CSV " + path + " holds a different seed");
        curve.metric = metric_from_name(metric);
        curve.context_lens.push_back(std::stoi(t));
        curve.values.push_back(std::stod(value));
    }
    return curve;
}

// Minimal native SVG: log-log loss curve with standard-error whiskers and
// the fitted power law overlaid.
inline std::string render_loss_svg(const LossCurve& curve, const std::optional<PowerLawFit>& fit,
                                   const std::string& title) {
    const double width = 640, height = 480;
    const double ml = 70, mr = 20, mt = 40, mb = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (std::size_t i = 0; i < curve.size(); ++i) {
        if (!(curve.values[i] > 0.0)) continue;
        xmin = std::min(xmin, std::log10(static_cast<double>(curve.context_lens[i])));
        xmax = std::max(xmax, std::log10(static_cast<double>(curve.context_lens[i])));
        ymin = std::min(ymin, std::log10(curve.values[i]));
        ymax = std::max(ymax, std::log10(curve.values[i]));
    }
    if (xmax <= xmin) xmax = xmin + 1.0;
    if (ymax <= ymin) ymax = ymin + 1.0;
    ymin -= 0.2;
    ymax += 0.2;
    auto px = [&](double lx) { return ml + (lx - xmin) / (xmax - xmin) * (width - ml - mr); };
    auto py = [&](double ly) { return height - mb - (ly - ymin) / (ymax - ymin) * (height - mt - mb); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
        << title << "</text>\n";
    // axes
    svg << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr
        << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
        << height - mb << "\" stroke=\"black\"/>\n";
    for (int d = static_cast<int>(std::floor(xmin)); d <= static_cast<int>(std::ceil(xmax)); ++d) {
        if (d < xmin - 1e-9 || d > xmax + 1e-9) continue;
        svg << "<line x1=\"" << px(d) << "\" y1=\"" << height - mb << "\" x2=\"" << px(d)
            << "\" y2=\"" << height - mb + 6 << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << px(d) << "\" y=\"" << height - mb + 22
            << "\" text-anchor=\"middle\" font-size=\"12\">1e" << d << "</text>\n";
    }
    for (int d = static_cast<int>(std::floor(ymin)); d <= static_cast<int>(std::ceil(ymax)); ++d) {
        if (d < ymin - 1e-9 || d > ymax + 1e-9) continue;
        svg << "<line x1=\"" << ml - 6 << "\" y1=\"" << py(d) << "\" x2=\"" << ml << "\" y2=\""
            << py(d) << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << ml - 10 << "\" y=\"" << py(d) + 4
            << "\" text-anchor=\"end\" font-size=\"12\">1e" << d << "</text>\n";
    }
    // mean curve with standard-error whiskers
    svg << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < curve.size(); ++i) {
        if (!(curve.values[i] > 0.0)) continue;
        svg << px(std::log10(static_cast<double>(curve.context_lens[i]))) << ","
            << py(std::log10(curve.values[i])) << " ";
    }
    svg << "\"/>\n";
    if (!curve.std_errors.empty()) {
        for (std::size_t i = 0; i < curve.size(); ++i) {
            if (!(curve.values[i] > 0.0) || !(curve.std_errors[i] > 0.0)) continue;
            const double lx = std::log10(static_cast<double>(curve.context_lens[i]));
            const double lo = curve.values[i] - curve.std_errors[i];
            const double hi = curve.values[i] + curve.std_errors[i];
            if (!(lo > 0.0)) continue;
            svg << "<line x1=\"" << px(lx) << "\" y1=\"" << py(std::log10(lo)) << "\" x2=\""
                << px(lx) << "\" y2=\"" << py(std::log10(hi))
                << "\" stroke=\"steelblue\" stroke-width=\"1\"/>\n";
        }
    }
    if (fit) {
        const double la = std::log10(static_cast<double>(std::max(fit->t_min, 1)));
        const double lb = xmax;
        auto model = [&](double lx) {
            const double t = std::pow(10.0, lx);
            return std::log10(std::pow(t / fit->d_c, fit->alpha));
        };
        svg << "<line x1=\"" << px(la) << "\" y1=\"" << py(model(la)) << "\" x2=\"" << px(lb)
            << "\" y2=\"" << py(model(lb))
            << "\" stroke=\"crimson\" stroke-dasharray=\"6,4\"/>\n";
        svg << "<text x=\"" << width - mr - 8 << "\" y=\"" << mt + 16
            << "\" text-anchor=\"end\" font-size=\"13\" fill=\"crimson\">alpha = "
            << fit->alpha << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

inline nlohmann::json summary_to_json(const ExperimentSummary& summary) {
    nlohmann::json j;
    j["system"] = summary.system_tag;
    j["metric"] = metric_name(summary.metric);
    j["seeds_total"] = summary.seeds.size();
    j["seeds_failed"] = summary.failed();
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& s : summary.seeds)
        if (!s.ok) failures.push_back({{"seed", s.seed}, {"error", s.error_message}});
    j["failures"] = failures;
    if (summary.fit) {
        j["fit"] = {{"alpha", summary.fit->alpha},
                    {"d_c", summary.fit->d_c},
                    {"r_squared", summary.fit->r_squared},
                    {"window", {summary.fit->t_min, summary.fit->t_max}}};
    }
    j["plateau_onset"] =
        summary.plateau_onset ? nlohmann::json(*summary.plateau_onset) : nlohmann::json(nullptr);
    return j;
}

// Runs the seeded sweep (resuming from existing per-seed CSVs), averages,
// fits, and writes loss.csv / summary.json / loss.svg (+ pdfs.jsonl).
inline ExperimentSummary run_experiment(const ExperimentConfig& cfg,
                                        std::optional<std::pair<std::uint64_t, std::uint64_t>>
                                            seed_range = std::nullopt) {
    namespace fs = std::filesystem;
    const auto [seed_lo, seed_hi] = seed_range.value_or(default_seed_range(cfg));
    if (seed_hi < seed_lo) throw param_error("run_experiment: empty seed range");
    fs::create_directories(cfg.out_dir);

    ExperimentSummary summary;
    summary.system_tag = cfg.system.tag();
    summary.metric = cfg.metric_override.value_or(default_metric(cfg.system));

    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = seed_lo; s <= seed_hi; ++s) seeds.push_back(s);

    const int jobs = cfg.jobs > 0
                         ? cfg.jobs
                         : std::max(1u, std::thread::hardware_concurrency());
    std::vector<SeedResult> results(seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= seeds.size()) return;
            const std::uint64_t seed = seeds[i];
            const std::string path =
                (fs::path(cfg.out_dir) / ("loss_seed_" + std::to_string(seed) + ".csv")).string();
            if (fs::exists(path)) {
                SeedResult r;
                r.seed = seed;
                r.curve = read_seed_csv(path, seed);
                r.ok = true;
                results[i] = std::move(r);
                continue;
            }
            SeedResult r = run_seed(cfg, seed);
            if (r.ok) write_seed_csv(path, cfg.system.tag(), r);
            results[i] = std::move(r);
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min<int>(jobs, static_cast<int>(seeds.size())); ++t)
        pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    summary.seeds = std::move(results);

    std::vector<LossCurve> ok_curves;
    for (const auto& r : summary.seeds)
        if (r.ok) ok_curves.push_back(r.curve);
    if (!ok_curves.empty()) {
        summary.averaged = average_curves(ok_curves);
        try {
            summary.fit = fit_power_law(summary.averaged, 10);
        } catch (const error&) {
        }
        try {
            summary.plateau_onset = detect_plateau(summary.averaged);
        } catch (const error&) {
        }
    }

    // combined outputs
    {
        std::ofstream out((fs::path(cfg.out_dir) / "loss.csv").string());
        out << loss_csv_header() << "\n";
        for (const auto& r : summary.seeds) {
            if (!r.ok) continue;
            for (std::size_t i = 0; i < r.curve.size(); ++i)
                out << summary.system_tag << "," << r.seed << "," << r.curve.context_lens[i]
                    << "," << metric_name(r.curve.metric) << ","
                    << format_double(r.curve.values[i]) << "\n";
        }
    }
    if (cfg.emit_pdfs) {
        std::ofstream out((fs::path(cfg.out_dir) / "pdfs.jsonl").string());
        for (const auto& r : summary.seeds)
            for (const auto& pdf : r.pdfs) out << pdf_to_json(pdf).dump() << "\n";
    }
    {
        std::ofstream out((fs::path(cfg.out_dir) / "summary.json").string());
        out << summary_to_json(summary).dump(2) << "\n";
    }
    if (!ok_curves.empty()) {
        std::ofstream out((fs::path(cfg.out_dir) / (summary.system_tag + "_loss.svg")).string());
        out << render_loss_svg(summary.averaged, summary.fit,
                               summary.system_tag + " in-context loss (" +
                                   metric_name(summary.metric) + ")");
    }
    return summary;
}

}  // namespace ictx
