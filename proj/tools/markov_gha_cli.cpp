// markov-gha: command-line front end.
//
//   simulate    random walk on a chain (file or built-in fixture)
//   factorize   streaming factorization of a trajectory
//   partition   cluster the learned representations, or run seeded
//               simulate → factorize → partition trials on the fixture
//   boost       geometric-median selection over k runs on stream segments
//   ingest      trip CSV → state stream
//   diagnose    ensemble convergence traces and plateau-vs-η report
//
// Every command writes manifest.json holding the fully resolved
// configuration; `markov-gha <cmd> --config manifest.json` replays it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "markov_gha/markov_gha.hpp"

namespace fs = std::filesystem;
using namespace markov_gha;
using io::json;

namespace {

// -----------------------------------------------------------------------------
// Configuration plumbing
// -----------------------------------------------------------------------------

struct Globals {
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    std::string config;
};

bool is_flag(const CLI::Option* opt) { return opt->get_type_size() == 0; }

bool skip_in_config(const CLI::Option* opt) {
    const auto& name = opt->get_single_name();
    return name.empty() || name == "help" || name == "config";
}

/// Typed JSON value for a CLI string: integers, then doubles, else string.
json typed(const std::string& s) {
    if (s == "true") return true;
    if (s == "false") return false;
    try {
        std::size_t pos = 0;
        if (!s.empty() && s[0] != '-') {
            const auto u = std::stoull(s, &pos);
            if (pos == s.size()) return u;
        }
        const auto i = std::stoll(s, &pos);
        if (pos == s.size()) return i;
    } catch (const std::exception&) {
    }
    try {
        std::size_t pos = 0;
        const double d = std::stod(s, &pos);
        if (pos == s.size()) return d;
    } catch (const std::exception&) {
    }
    return s;
}

std::string untyped(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
}

/// Fills options the command line left unset from the config file.
void apply_config(const json& config, const std::vector<CLI::App*>& apps) {
    for (auto* app : apps) {
        for (auto* opt : app->get_options()) {
            if (skip_in_config(opt) || opt->count() > 0) continue;
            const auto it = config.find(opt->get_single_name());
            if (it == config.end()) continue;
            if (it->is_array()) {
                for (const auto& v : *it) opt->add_result(untyped(v));
            } else {
                opt->add_result(untyped(*it));
            }
            opt->run_callback();
        }
    }
}

/// Every option's effective value (given, from config, or default).
json resolved_config(const std::vector<CLI::App*>& apps) {
    json out = json::object();
    for (auto* app : apps) {
        for (auto* opt : app->get_options()) {
            if (skip_in_config(opt)) continue;
            const auto& name = opt->get_single_name();
            if (is_flag(opt)) {
                out[name] = opt->count() > 0 && opt->as<bool>();
                continue;
            }
            std::vector<std::string> values = opt->results();
            if (values.empty()) {
                const auto def = opt->get_default_str();
                if (def.empty()) continue;
                if (opt->get_expected_max() > 1 && def.front() == '[') {
                    values = CLI::detail::split(def.substr(1, def.size() - 2), ',');
                } else {
                    values = {def};
                }
            }
            if (opt->get_expected_max() > 1) {
                json arr = json::array();
                for (const auto& v : values) arr.push_back(typed(std::string(io::trim(v))));
                out[name] = std::move(arr);
            } else {
                out[name] = typed(values.back());
            }
        }
    }
    return out;
}

/// Pre-scan for --config so its values can be loaded before dispatch.
std::optional<std::string> find_config_path(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) return std::string(argv[i + 1]);
        if (a.rfind("--config=", 0) == 0) return a.substr(9);
    }
    return std::nullopt;
}

json load_config(const std::string& path) {
    json j = io::read_json(path);
    // A manifest carries its configuration under "config".
    if (j.contains("config") && j.contains("command")) j = j.at("config");
    if (!j.is_object()) throw Error(ErrorKind::io, "'" + path + "': config must be a JSON object");
    return j;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config, json outputs) {
    io::write_json(dir / "manifest.json",
                   {{"command", command}, {"config", config}, {"outputs", std::move(outputs)}});
}

// -----------------------------------------------------------------------------
// Shared helpers
// -----------------------------------------------------------------------------

struct ChainSource {
    std::string fixture;
    std::string p_path;

    bool given() const { return !fixture.empty() || !p_path.empty(); }

    markov::TransitionMatrix load() const {
        require(fixture.empty() || p_path.empty(), "give either --fixture or --p, not both");
        if (!fixture.empty()) {
            require(fixture == "pex", "unknown fixture '" + fixture + "' (available: pex)");
            return fixture::fixture_pex().p;
        }
        require(!p_path.empty(), "a chain is required: --fixture pex or --p FILE");
        return io::read_chain(p_path);
    }
};

void add_chain_options(CLI::App* sub, ChainSource& chain) {
    sub->add_option("--fixture", chain.fixture, "Built-in chain (pex)");
    sub->add_option("--p", chain.p_path, "Transition matrix file (CSV, or JSON wrapper)");
}

struct ScheduleOptions {
    std::string kind = "fixed";
    double eta = 0.005;
    double k0 = 1000.0;

    factorizer::LearningRate rate() const {
        if (kind == "fixed") return factorizer::LearningRate::fixed(eta);
        require(kind == "diminishing", "--schedule must be fixed or diminishing");
        return factorizer::LearningRate::diminishing(eta, k0);
    }
};

void add_schedule_options(CLI::App* sub, ScheduleOptions& s) {
    sub->add_option("--eta", s.eta, "Learning rate (initial rate when diminishing)");
    sub->add_option("--schedule", s.kind, "fixed | diminishing (eta/(1+k/k0))");
    sub->add_option("--k0", s.k0, "Decay horizon of the diminishing schedule");
}

int infer_m(std::span<const markov::State> stream, int given) {
    int m = given;
    for (auto s : stream) {
        if (given > 0) require(s < given, "stream state " + std::to_string(s + 1) + " exceeds --m");
        else m = std::max(m, s + 1);
    }
    require(m > 0, "cannot infer m from an empty stream; pass --m");
    return m;
}

oracle::SpectralFactorization exact_reference(const markov::TransitionMatrix& p, int r) {
    const auto mu = markov::stationary_distribution(p);
    return oracle::batch_factorize(oracle::exact_dp(p, mu.mu), r);
}

json embedding_error_json(const factorizer::Embedding& e, const oracle::SpectralFactorization& f) {
    const double eu = subspace_distance(e.u_hat, f.u);
    const double ev = subspace_distance(e.v_hat, f.v);
    return {{"sin2_u", eu}, {"sin2_v", ev}, {"sin2_total", eu + ev}};
}

fs::path prepare_out(const Globals& g) {
    const fs::path dir(g.out_dir);
    fs::create_directories(dir);
    return dir;
}

// -----------------------------------------------------------------------------
// simulate
// -----------------------------------------------------------------------------

struct SimulateOptions {
    ChainSource chain;
    std::int64_t n = 10'000;
    int start = 1;
    bool pairs = false;
};

void cmd_simulate(const Globals& g, const SimulateOptions& o, const json& config) {
    require(o.n >= 0, "--n must be nonnegative");
    const auto p = o.chain.load();
    markov::require_irreducible(p);
    require(o.start >= 1 && o.start <= p.size(), "--start must lie in [1, m]");
    const auto walk = markov::simulate_walk(p, o.start - 1, static_cast<std::size_t>(o.n), g.seed);
    const auto dir = prepare_out(g);
    io::write_trajectory(dir / "trajectory.txt", walk);
    json outputs{{"trajectory", "trajectory.txt"}, {"m", p.size()}, {"states", walk.size()}};
    if (o.pairs) {
        io::write_pairs(dir / "pairs.csv", io::transitions(walk));
        outputs["pairs"] = "pairs.csv";
    }
    write_manifest(dir, "simulate", config, outputs);
}

// -----------------------------------------------------------------------------
// factorize
// -----------------------------------------------------------------------------

struct FactorizeOptions {
    std::string stream;
    std::string pairs;
    ChainSource chain;
    int m = 0;
    int r = 0;
    ScheduleOptions schedule;
    int tau = 0;
    double phi = 0.0;
    double mu_max = 0.0;
    double mu_min = 0.0;
    std::int64_t n_blocks = -1;
    std::int64_t reorth_period = 0;
    std::string oracle = "none";
    bool trace = false;
    std::int64_t trace_stride = 100;
    bool checkpoint = false;
    std::string resume;
};

void cmd_factorize(const Globals& g, FactorizeOptions o, const json& config) {
    require(o.stream.empty() != o.pairs.empty(), "give exactly one of --stream or --pairs");
    require(o.r > 0, "--r is required and must be positive");
    const bool use_pairs = !o.pairs.empty();
    markov::Trajectory stream;
    std::vector<factorizer::BlockSample> pairs;
    if (use_pairs) {
        pairs = io::read_pairs(o.pairs);
        for (const auto& s : pairs) stream.push_back(s.from_state), stream.push_back(s.to_state);
    } else {
        stream = io::read_trajectory(o.stream);
    }
    std::optional<markov::TransitionMatrix> chain;
    if (o.chain.given()) chain = o.chain.load();
    const int m = infer_m(stream, o.m > 0 ? o.m : (chain ? chain->size() : 0));
    if (chain) require(chain->size() == m, "chain size differs from the stream's state count");

    std::optional<io::Checkpoint> resume;
    if (!o.resume.empty()) {
        resume = io::read_checkpoint(o.resume);
        require(resume->state.m() == m && resume->state.r() == o.r, "checkpoint shape differs from --m/--r");
    }

    // Block length: explicit, from the conductance formula, or the minimum.
    std::optional<double> mu_max, mu_min;
    int tau = o.tau;
    if (resume) {
        require(tau == 0 || tau == resume->tau, "--tau differs from the checkpoint's block length");
        tau = resume->tau;
    } else if (tau == 0 && o.phi > 0.0) {
        if (o.mu_max > 0.0 && o.mu_min > 0.0) {
            mu_max = o.mu_max;
            mu_min = o.mu_min;
        } else if (chain) {
            const auto mu = markov::stationary_distribution(*chain);
            mu_max = mu.max();
            mu_min = mu.min();
        } else {
            const auto mu = partition::empirical_stationary(stream, m);
            mu_max = mu.mu_hat.maxCoeff();
            mu_min = mu.mu_hat.minCoeff();
        }
        tau = markov::block_length(o.phi, *mu_max, *mu_min, o.schedule.eta);
    } else if (tau == 0) {
        tau = 2;
    }
    require(!use_pairs || o.tau == 0 || o.tau == 2, "--pairs bypasses down-sampling; --tau does not apply");

    // Reference subspace for traces and final errors.
    std::string oracle_kind = o.oracle;
    if (o.trace && oracle_kind == "none") oracle_kind = "empirical";
    std::optional<oracle::SpectralFactorization> ref;
    if (oracle_kind == "exact") {
        require(chain.has_value(), "--oracle exact needs --fixture or --p");
        ref = exact_reference(*chain, o.r);
    } else if (oracle_kind == "empirical") {
        Matrix dp = Matrix::Zero(m, m);
        if (use_pairs) {
            for (const auto& s : pairs) dp(s.from_state, s.to_state) += 1.0;
            dp /= static_cast<double>(std::max<std::size_t>(1, pairs.size()));
        } else {
            dp = oracle::empirical_dp(stream, m);
        }
        ref = oracle::batch_factorize(dp, o.r);
    } else {
        require(oracle_kind == "none", "--oracle must be none, exact or empirical");
    }

    factorizer::RunParams params;
    params.r = o.r;
    params.schedule = resume ? resume->state.schedule() : o.schedule.rate();
    params.tau = tau;
    if (o.n_blocks >= 0) params.n_blocks = o.n_blocks;
    params.seed = resume ? resume->seed : g.seed;
    params.reorth_period = o.reorth_period;
    factorizer::TraceOptions trace;
    if (o.trace) trace.reference = factorizer::dilation_basis(ref->u, ref->v), trace.stride = o.trace_stride;

    factorizer::Factorizer f = resume ? factorizer::Factorizer(resume->state, params, trace)
                                      : factorizer::Factorizer(m, params, trace);
    std::uint64_t offset = resume ? resume->stream_offset : 0;
    const std::size_t input_size = use_pairs ? pairs.size() : stream.size();
    require(offset <= input_size, "checkpoint offset lies beyond the input");
    while (offset < input_size && !f.done()) {
        if (use_pairs) f.push_sample(pairs[offset++]);
        else f.push(stream[offset++]);
    }
    if (o.n_blocks >= 0 && f.blocks_applied() < o.n_blocks)
        throw Error(ErrorKind::validation,
                    "input holds " + std::to_string(f.blocks_applied()) + " blocks; --n-blocks " +
                        std::to_string(o.n_blocks) + " needs " +
                        std::to_string(use_pairs ? o.n_blocks : o.n_blocks * tau) +
                        (use_pairs ? " pairs" : " states"));

    const auto dir = prepare_out(g);
    const auto emb = f.embedding();
    io::write_matrix_csv(dir / "U_hat.csv", emb.u_hat);
    io::write_matrix_csv(dir / "V_hat.csv", emb.v_hat);
    json outputs{{"u_hat", "U_hat.csv"},
                 {"v_hat", "V_hat.csv"},
                 {"m", m},
                 {"r", o.r},
                 {"tau", tau},
                 {"schedule", io::schedule_to_json(params.schedule)},
                 {"seed", params.seed},
                 {"n_blocks", f.blocks_applied()},
                 {"k", f.state().k()},
                 {"orthonormality_drift", f.state().orthonormality_drift()}};
    if (mu_max) outputs["tau_inputs"] = {{"phi", o.phi}, {"mu_max", *mu_max}, {"mu_min", *mu_min}};
    if (ref) {
        outputs["oracle"] = oracle_kind;
        outputs["error"] = embedding_error_json(emb, *ref);
    }
    if (o.trace) {
        io::write_text(dir / "trace.csv", io::trace_to_csv(f.take_trace()));
        outputs["trace"] = "trace.csv";
    }
    if (o.checkpoint) {
        io::write_checkpoint(dir / "checkpoint", {f.state(), tau, params.seed, offset});
        outputs["checkpoint"] = "checkpoint";
    }
    write_manifest(dir, "factorize", config, outputs);
}

// -----------------------------------------------------------------------------
// partition
// -----------------------------------------------------------------------------

struct PartitionOptions {
    std::string embedding;
    std::string v;
    std::string stream;
    std::string truth;
    int r = 0;
    int restarts = 10;
    // Trials mode.
    std::string fixture;
    int trials = 0;
    std::int64_t samples = 10'000;
    ScheduleOptions schedule;
    int tau = 2;
    bool faithful = false;
    int threads = 0;
};

std::vector<int> read_labels(const fs::path& path, int m) {
    auto in = io::open_in(path);
    std::vector<int> labels(m, -1);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (io::trim(line).empty()) continue;
        const auto f = io::split_csv(line);
        if (lineno == 1 && !f.empty() && f[0] == "state") continue;
        if (f.size() != 2) throw Error(ErrorKind::io, path.string() + ":" + std::to_string(lineno) + ": expected state,label");
        const auto s = io::parse_int(f[0], path.string());
        const auto l = io::parse_int(f[1], path.string());
        if (s < 1 || s > m || l < 1) throw Error(ErrorKind::io, path.string() + ":" + std::to_string(lineno) + ": out of range");
        labels[s - 1] = static_cast<int>(l - 1);
    }
    for (int s = 0; s < m; ++s)
        if (labels[s] < 0) throw Error(ErrorKind::io, path.string() + ": no label for state " + std::to_string(s + 1));
    return labels;
}

void partition_trials(const Globals& g, const PartitionOptions& o, const json& config) {
    require(o.fixture == "pex", "trials mode runs on the built-in fixture: --fixture pex");
    const auto fx = fixture::fixture_pex();
    const auto mu = markov::stationary_distribution(fx.p);
    experiments::RecoveryParams params;
    params.r = o.r > 0 ? o.r : 3;
    params.schedule = o.schedule.rate();
    params.samples = o.samples;
    params.restarts = o.restarts;
    params.tau = o.faithful ? markov::block_length(fx.phi, fx.mu.max(), fx.mu.min(), o.schedule.eta) : o.tau;
    const auto ref = oracle::batch_factorize(oracle::exact_dp(fx.p, mu.mu), params.r);

    std::vector<experiments::RecoveryTrial> results(static_cast<std::size_t>(o.trials));
    experiments::parallel_for(
        results.size(),
        [&](std::size_t t) {
            results[t] = experiments::recovery_trial(fx.p, mu.mu, fx.labels, params, derive_seed(g.seed, t),
                                                     &ref.u, &ref.v);
        },
        static_cast<unsigned>(std::max(0, o.threads)));

    int exact = 0;
    json agreements = json::array(), errors = json::array();
    for (const auto& r : results) {
        exact += r.agreement == 1.0;
        agreements.push_back(r.agreement);
        errors.push_back(r.embedding_error);
    }
    const auto dir = prepare_out(g);
    const json summary{{"trials", o.trials},
                       {"exact_recoveries", exact},
                       {"recovery_rate", static_cast<double>(exact) / o.trials},
                       {"tau", params.tau},
                       {"samples", params.samples},
                       {"stream_states_per_trial", params.samples * params.tau},
                       {"agreement", agreements},
                       {"sin2_total", errors}};
    io::write_json(dir / "recovery.json", summary);
    write_manifest(dir, "partition", config,
                   {{"recovery", "recovery.json"}, {"exact_recoveries", exact}, {"tau", params.tau}});
}

void cmd_partition(const Globals& g, const PartitionOptions& o, const json& config) {
    if (o.trials > 0) return partition_trials(g, o, config);
    require(o.embedding.empty() != o.v.empty(), "give exactly one of --embedding DIR or --v FILE");
    require(!o.stream.empty(), "--stream is required to estimate the stationary distribution");
    const Matrix v = io::read_matrix_csv(o.v.empty() ? fs::path(o.embedding) / "V_hat.csv" : fs::path(o.v));
    const int m = static_cast<int>(v.rows());
    const int r = o.r > 0 ? o.r : static_cast<int>(v.cols());
    const auto stream = io::read_trajectory(o.stream);
    const auto mu_hat = partition::empirical_stationary(stream, m);
    const Matrix rep = partition::representation(mu_hat, v);
    const auto part = partition::kmeans(rep, r, g.seed, {o.restarts});

    const auto dir = prepare_out(g);
    io::write_text(dir / "partition.csv", io::partition_to_csv(part.assignment));
    io::write_matrix_csv(dir / "representation.csv", rep);
    json outputs{{"partition", "partition.csv"},
                 {"representation", "representation.csv"},
                 {"r", r},
                 {"inertia", part.inertia},
                 {"seed", g.seed},
                 {"restarts", o.restarts}};
    if (!o.truth.empty())
        outputs["agreement"] = partition::partition_agreement(part.assignment, read_labels(o.truth, m));
    write_manifest(dir, "partition", config, outputs);
}

// -----------------------------------------------------------------------------
// boost
// -----------------------------------------------------------------------------

struct BoostOptions {
    std::string stream;
    ChainSource chain;
    int m = 0;
    int r = 0;
    int k = 0;
    double delta = 0.05;
    ScheduleOptions schedule;
    int tau = 2;
    std::int64_t n_blocks = -1;
};

void cmd_boost(const Globals& g, const BoostOptions& o, const json& config) {
    require(!o.stream.empty(), "--stream is required");
    require(o.r > 0, "--r is required and must be positive");
    const auto stream = io::read_trajectory(o.stream);
    std::optional<markov::TransitionMatrix> chain;
    if (o.chain.given()) chain = o.chain.load();
    const int m = infer_m(stream, o.m > 0 ? o.m : (chain ? chain->size() : 0));
    const int k = o.k > 0 ? o.k : boost::runs_for_confidence(o.delta);

    factorizer::RunParams params;
    params.r = o.r;
    params.schedule = o.schedule.rate();
    params.tau = o.tau;
    if (o.n_blocks >= 0) params.n_blocks = o.n_blocks;
    params.seed = g.seed;
    const auto res = boost::boosted_factorize(stream, m, params, k);

    const auto dir = prepare_out(g);
    io::write_matrix_csv(dir / "U_hat.csv", res.embedding.u_hat);
    io::write_matrix_csv(dir / "V_hat.csv", res.embedding.v_hat);
    json runs = json::array();
    std::optional<oracle::SpectralFactorization> ref;
    if (chain) ref = exact_reference(*chain, o.r);
    for (std::size_t i = 0; i < res.runs.size(); ++i) {
        json run{{"seed", derive_seed(g.seed, i)},
                 {"u_median_distance", res.u_selection.distances[i]},
                 {"v_median_distance", res.v_selection.distances[i]}};
        if (ref) run["error"] = embedding_error_json(res.runs[i], *ref);
        runs.push_back(std::move(run));
    }
    json report{{"k", k},
                {"segment_states", stream.size() / static_cast<std::size_t>(k)},
                {"selected_u", res.u_selection.index},
                {"selected_v", res.v_selection.index},
                {"runs", runs}};
    if (ref) report["error"] = embedding_error_json(res.embedding, *ref);
    io::write_json(dir / "boost_report.json", report);
    write_manifest(dir, "boost", config,
                   {{"u_hat", "U_hat.csv"}, {"v_hat", "V_hat.csv"}, {"report", "boost_report.json"}, {"k", k}});
}

// -----------------------------------------------------------------------------
// ingest
// -----------------------------------------------------------------------------

struct IngestCliOptions {
    std::string trips;
    ingest::GridSpec grid{0, 0, 0, 0, 10.0};
    std::int64_t min_visits = 100;
    bool no_chain = false;
    io::TripColumns columns;
};

void cmd_ingest(const Globals& g, const IngestCliOptions& o, const json& config) {
    require(!o.trips.empty(), "--trips is required");
    const auto trips = io::read_trips_csv(o.trips, o.columns);
    const auto res = ingest::build_stream(trips, o.grid, {o.min_visits, !o.no_chain});

    const auto dir = prepare_out(g);
    io::write_trajectory(dir / "stream.txt", res.stream);
    io::write_pairs(dir / "pairs.csv", res.pairs);
    json cells = json::array();
    for (std::size_t s = 0; s < res.cell_of_state.size(); ++s) {
        const auto cell = res.cell_of_state[s];
        cells.push_back({{"state", s + 1},
                         {"cell", cell},
                         {"row", cell / o.grid.columns()},
                         {"col", cell % o.grid.columns()}});
    }
    io::write_json(dir / "cell_map.json", {{"rows", o.grid.rows()},
                                           {"columns", o.grid.columns()},
                                           {"cell_size_m", o.grid.cell_size_m},
                                           {"cells", cells}});
    const auto& rep = res.report;
    io::write_json(dir / "report.json", {{"trips_total", rep.trips_total},
                                         {"trips_out_of_bbox", rep.trips_out_of_bbox},
                                         {"trips_rare_cell", rep.trips_rare_cell},
                                         {"trips_kept", rep.trips_kept},
                                         {"cells_seen", rep.cells_seen},
                                         {"cells_kept", rep.cells_kept},
                                         {"chained_runs", rep.chained_runs},
                                         {"stream_length", res.stream.size()}});
    write_manifest(dir, "ingest", config,
                   {{"stream", "stream.txt"},
                    {"pairs", "pairs.csv"},
                    {"cell_map", "cell_map.json"},
                    {"report", "report.json"},
                    {"m", res.state_count()}});
}

// -----------------------------------------------------------------------------
// diagnose
// -----------------------------------------------------------------------------

struct DiagnoseOptions {
    ChainSource chain;
    int r = 3;
    std::vector<double> etas{0.02, 0.01, 0.005};
    int trials = 100;
    int tau = 2;
    double horizon = 800.0;
    int points = 200;
    bool diminishing = false;
    double k0 = 10000.0;
    double band = 1.6;
    int threads = 0;
};

json fit_json(const factorizer::AngleTrace& trace) {
    try {
        const auto fit = factorizer::convergence_rate_fit(trace);
        return {{"slope", fit.slope}, {"r_squared", fit.r_squared}, {"points", fit.points}, {"decay_end", fit.decay_end}};
    } catch (const Error& e) {
        return {{"error", e.what()}};
    }
}

void cmd_diagnose(const Globals& g, DiagnoseOptions o, const json& config) {
    require(!o.etas.empty(), "--etas needs at least one rate");
    require(o.trials > 0 && o.points > 0 && o.horizon > 0.0, "--trials, --points and --horizon must be positive");
    const auto p = o.chain.load();
    const auto mu = markov::stationary_distribution(p);
    const auto ref = oracle::batch_factorize(oracle::exact_dp(p, mu.mu), o.r);
    const Matrix basis = factorizer::dilation_basis(ref.u, ref.v);
    const auto dir = prepare_out(g);
    const auto threads = static_cast<unsigned>(std::max(0, o.threads));

    auto ensemble = [&](factorizer::LearningRate rate, std::int64_t blocks, std::uint64_t seed) {
        experiments::EnsembleParams params;
        params.r = o.r;
        params.schedule = rate;
        params.tau = o.tau;
        params.n_blocks = blocks;
        params.stride = std::max<std::int64_t>(1, blocks / o.points);
        params.trials = o.trials;
        return experiments::ensemble_mean_trace(p, mu.mu, basis, params, seed, threads);
    };

    json per_eta = json::array();
    std::vector<double> plateaus;
    for (std::size_t i = 0; i < o.etas.size(); ++i) {
        const double eta = o.etas[i];
        const auto blocks = static_cast<std::int64_t>(std::ceil(o.horizon / eta));
        const auto trace = ensemble(factorizer::LearningRate::fixed(eta), blocks, derive_seed(g.seed, i));
        const auto name = "mean_trace_eta_" + std::to_string(i + 1) + ".csv";
        io::write_text(dir / name, io::trace_to_csv(trace));
        plateaus.push_back(experiments::plateau_level(trace));
        per_eta.push_back({{"eta", eta},
                           {"blocks", blocks},
                           {"trace", name},
                           {"plateau", plateaus.back()},
                           {"initial", trace.sin2_theta.front()},
                           {"fit", fit_json(trace)}});
    }
    json ratios = json::array();
    for (std::size_t i = 1; i < o.etas.size(); ++i) {
        const double eta_ratio = o.etas[i - 1] / o.etas[i];
        const double plateau_ratio = plateaus[i - 1] / plateaus[i];
        const double off = std::max(plateau_ratio / eta_ratio, eta_ratio / plateau_ratio);
        ratios.push_back({{"eta_ratio", eta_ratio},
                          {"plateau_ratio", plateau_ratio},
                          {"within_band", off <= o.band}});
    }
    json report{{"trials", o.trials}, {"tau", o.tau}, {"r", o.r}, {"fixed", per_eta}, {"plateau_ratios", ratios}};
    if (o.diminishing) {
        const double eta0 = *std::max_element(o.etas.begin(), o.etas.end());
        const double eta_min = *std::min_element(o.etas.begin(), o.etas.end());
        const auto blocks = static_cast<std::int64_t>(std::ceil(o.horizon / eta_min));
        const auto seed = derive_seed(g.seed, o.etas.size());
        const auto fixed = ensemble(factorizer::LearningRate::fixed(eta0), blocks, seed);
        const auto dim = ensemble(factorizer::LearningRate::diminishing(eta0, o.k0), blocks, seed);
        io::write_text(dir / "mean_trace_fixed_long.csv", io::trace_to_csv(fixed));
        io::write_text(dir / "mean_trace_diminishing.csv", io::trace_to_csv(dim));
        report["diminishing"] = {{"eta0", eta0},
                                 {"k0", o.k0},
                                 {"blocks", blocks},
                                 {"fixed_final", experiments::plateau_level(fixed, 0.05)},
                                 {"diminishing_final", experiments::plateau_level(dim, 0.05)}};
    }
    io::write_json(dir / "diagnose.json", report);
    write_manifest(dir, "diagnose", config, {{"report", "diagnose.json"}});
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Streaming factorization and partition recovery for Markov chains", "markov-gha"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);

    Globals g;
    app.add_option("--seed", g.seed, "Master seed");
    app.add_option("--out-dir", g.out_dir, "Output directory");
    app.add_option("--config", g.config, "JSON config file (or a previous manifest.json)");

    SimulateOptions sim;
    auto* simulate = app.add_subcommand("simulate", "Simulate a random walk");
    add_chain_options(simulate, sim.chain);
    simulate->add_option("--n", sim.n, "Number of states to generate (the start state is not written)");
    simulate->add_option("--start", sim.start, "Start state (1-based)");
    simulate->add_flag("--pairs", sim.pairs, "Also write the transitions as from,to pairs");

    FactorizeOptions fac;
    auto* factorize = app.add_subcommand("factorize", "Streaming factorization of a trajectory");
    factorize->add_option("--stream", fac.stream, "Trajectory file (one 1-based state per line)");
    factorize->add_option("--pairs", fac.pairs, "Transition pairs CSV; each pair is one sample");
    add_chain_options(factorize, fac.chain);
    factorize->add_option("--m", fac.m, "State count (0: infer from the input)");
    factorize->add_option("--r", fac.r, "Rank");
    add_schedule_options(factorize, fac.schedule);
    factorize->add_option("--tau", fac.tau, "Block length (0: from --phi, else 2)");
    factorize->add_option("--phi", fac.phi, "Merging conductance used to derive tau");
    factorize->add_option("--mu-max", fac.mu_max, "Largest stationary probability for tau (0: estimate)");
    factorize->add_option("--mu-min", fac.mu_min, "Smallest stationary probability for tau (0: estimate)");
    factorize->add_option("--n-blocks", fac.n_blocks, "Number of updates (-1: consume the input)");
    factorize->add_option("--reorth-period", fac.reorth_period, "Re-orthonormalize W every this many steps (0: never)");
    factorize->add_option("--oracle", fac.oracle, "none | exact | empirical reference for errors and traces");
    factorize->add_flag("--trace", fac.trace, "Write trace.csv of sin^2 Theta against the oracle");
    factorize->add_option("--trace-stride", fac.trace_stride, "Updates between trace points");
    factorize->add_flag("--checkpoint", fac.checkpoint, "Write a resumable checkpoint");
    factorize->add_option("--resume", fac.resume, "Resume from a checkpoint directory");

    PartitionOptions part;
    auto* partition = app.add_subcommand("partition", "Recover the state partition");
    partition->add_option("--embedding", part.embedding, "Directory holding V_hat.csv");
    partition->add_option("--v", part.v, "V_hat CSV file");
    partition->add_option("--stream", part.stream, "Trajectory used for the empirical stationary distribution");
    partition->add_option("--truth", part.truth, "Reference partition CSV (state,label) to score against");
    partition->add_option("--r", part.r, "Cluster count (0: columns of V_hat; 3 in trials mode)");
    partition->add_option("--restarts", part.restarts, "k-means restarts");
    partition->add_option("--fixture", part.fixture, "Trials mode: built-in chain (pex)");
    partition->add_option("--trials", part.trials, "Trials mode: number of seeded simulate/factorize/partition runs");
    partition->add_option("--samples", part.samples, "Trials mode: block samples (updates) per trial");
    add_schedule_options(partition, part.schedule);
    partition->add_option("--tau", part.tau, "Trials mode: block length");
    partition->add_flag("--faithful", part.faithful, "Trials mode: tau from the conductance formula");
    partition->add_option("--threads", part.threads, "Worker threads (0: hardware concurrency)");

    BoostOptions bst;
    auto* boost = app.add_subcommand("boost", "Geometric-median boosting over k runs");
    boost->add_option("--stream", bst.stream, "Trajectory file");
    add_chain_options(boost, bst.chain);
    boost->add_option("--m", bst.m, "State count (0: infer)");
    boost->add_option("--r", bst.r, "Rank");
    boost->add_option("--k", bst.k, "Number of runs (0: ceil(24 ln(1/delta)))");
    boost->add_option("--delta", bst.delta, "Target failure probability when --k is 0");
    add_schedule_options(boost, bst.schedule);
    boost->add_option("--tau", bst.tau, "Block length");
    boost->add_option("--n-blocks", bst.n_blocks, "Updates per run (-1: whole segment)");

    IngestCliOptions ing;
    auto* ingest = app.add_subcommand("ingest", "Trip CSV to state stream");
    ingest->add_option("--trips", ing.trips, "Trip CSV with a header row");
    ingest->add_option("--lat-min", ing.grid.lat_min, "Bounding box");
    ingest->add_option("--lat-max", ing.grid.lat_max, "Bounding box");
    ingest->add_option("--lon-min", ing.grid.lon_min, "Bounding box");
    ingest->add_option("--lon-max", ing.grid.lon_max, "Bounding box");
    ingest->add_option("--cell-size", ing.grid.cell_size_m, "Grid cell edge in meters");
    ingest->add_option("--min-visits", ing.min_visits, "Cells visited fewer times are removed");
    ingest->add_flag("--no-chain", ing.no_chain, "Treat trips as independent pairs");
    ingest->add_option("--col-pickup-lat", ing.columns.pickup_lat, "Column name");
    ingest->add_option("--col-pickup-lon", ing.columns.pickup_lon, "Column name");
    ingest->add_option("--col-dropoff-lat", ing.columns.dropoff_lat, "Column name");
    ingest->add_option("--col-dropoff-lon", ing.columns.dropoff_lon, "Column name");

    DiagnoseOptions dia;
    auto* diagnose = app.add_subcommand("diagnose", "Ensemble convergence diagnostics");
    add_chain_options(diagnose, dia.chain);
    diagnose->add_option("--r", dia.r, "Rank");
    diagnose->add_option("--etas", dia.etas, "Fixed learning rates to compare")->delimiter(',');
    diagnose->add_option("--trials", dia.trials, "Runs per ensemble");
    diagnose->add_option("--tau", dia.tau, "Block length");
    diagnose->add_option("--horizon", dia.horizon, "Run length in units of eta * updates");
    diagnose->add_option("--points", dia.points, "Trace points per run");
    diagnose->add_flag("--diminishing", dia.diminishing, "Also compare a diminishing schedule");
    diagnose->add_option("--k0", dia.k0, "Decay horizon of the diminishing schedule");
    diagnose->add_option("--band", dia.band, "Allowed factor between plateau and eta ratios");
    diagnose->add_option("--threads", dia.threads, "Worker threads (0: hardware concurrency)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: validation: " << e.what() << "\n";
        return 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::vector<CLI::App*> apps{&app, sub};
    try {
        if (auto path = find_config_path(argc, argv)) apply_config(load_config(*path), apps);
        const json config = resolved_config(apps);
        const std::string name = sub->get_name();
        if (name == "simulate") cmd_simulate(g, sim, config);
        else if (name == "factorize") cmd_factorize(g, fac, config);
        else if (name == "partition") cmd_partition(g, part, config);
        else if (name == "boost") cmd_boost(g, bst, config);
        else if (name == "ingest") cmd_ingest(g, ing, config);
        else if (name == "diagnose") cmd_diagnose(g, dia, config);
    } catch (const Error& e) {
        std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
        return 2;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: validation: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "error: io: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: io: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
