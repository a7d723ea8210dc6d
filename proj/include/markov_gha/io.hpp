#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "markov_gha/error.hpp"
#include "markov_gha/ingest.hpp"
#include "markov_gha/linalg.hpp"
#include "markov_gha/markov_core.hpp"
#include "markov_gha/stream_factorizer.hpp"

// =============================================================================
// File formats. States and labels are 1-based on disk.
//
//   matrix CSV      m rows of comma-separated decimals
//   chain JSON      {"m": m, "label": "...", "p": [[...], ...]}
//   trajectory      one state index per line
//   pairs CSV       header "from,to", one transition per line
//   trace CSV       header "iteration,sin2_theta"
//   partition CSV   header "state,label"
// =============================================================================

namespace markov_gha::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

// -----------------------------------------------------------------------------
// Primitives
// -----------------------------------------------------------------------------

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

/// Split one CSV line on commas; double-quoted fields may contain commas.
inline std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') quoted = !quoted;
        else if (c == ',' && !quoted) {
            fields.emplace_back(trim(cur));
            cur.clear();
        } else cur.push_back(c);
    }
    fields.emplace_back(trim(cur));
    return fields;
}

inline double parse_double(std::string_view s, const std::string& where) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw Error(ErrorKind::io, where + ": cannot parse number '" + std::string(s) + "'");
    return v;
}

inline long long parse_int(std::string_view s, const std::string& where) {
    s = trim(s);
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw Error(ErrorKind::io, where + ": cannot parse integer '" + std::string(s) + "'");
    return v;
}

inline std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open '" + path.string() + "' for reading");
    return in;
}

inline std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
    return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
    auto out = open_out(path);
    out << text;
    if (!out) throw Error(ErrorKind::io, "failed writing '" + path.string() + "'");
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline json read_json(const fs::path& path) {
    auto in = open_in(path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::io, "'" + path.string() + "': " + e.what());
    }
}

// -----------------------------------------------------------------------------
// Matrices
// -----------------------------------------------------------------------------

inline std::string matrix_to_csv(const Matrix& a) {
    std::string s;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            if (j) s += ',';
            s += format_double(a(i, j));
        }
        s += '\n';
    }
    return s;
}

inline Matrix matrix_from_csv(std::istream& in, const std::string& where) {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto fields = split_csv(line);
        std::vector<double> row;
        for (const auto& f : fields) row.push_back(parse_double(f, where + ":" + std::to_string(lineno)));
        if (!rows.empty() && row.size() != rows.front().size())
            throw Error(ErrorKind::io, where + ":" + std::to_string(lineno) + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) return Matrix(0, 0);
    Matrix a(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) a(i, j) = rows[i][j];
    return a;
}

inline void write_matrix_csv(const fs::path& path, const Matrix& a) { write_text(path, matrix_to_csv(a)); }

inline Matrix read_matrix_csv(const fs::path& path) {
    auto in = open_in(path);
    return matrix_from_csv(in, path.string());
}

inline json chain_to_json(const markov::TransitionMatrix& p, const std::string& label) {
    json rows = json::array();
    for (int i = 0; i < p.size(); ++i) {
        json row = json::array();
        for (int j = 0; j < p.size(); ++j) row.push_back(p(i, j));
        rows.push_back(std::move(row));
    }
    return {{"m", p.size()}, {"label", label}, {"p", std::move(rows)}};
}

inline markov::TransitionMatrix chain_from_json(const json& j) {
    try {
        const int m = j.at("m").get<int>();
        const auto& rows = j.at("p");
        require(static_cast<int>(rows.size()) == m, "chain JSON: row count differs from m");
        Matrix p(m, m);
        for (int i = 0; i < m; ++i) {
            require(static_cast<int>(rows[i].size()) == m, "chain JSON: row length differs from m");
            for (int k = 0; k < m; ++k) p(i, k) = rows[i][k].get<double>();
        }
        return markov::TransitionMatrix(std::move(p));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::io, std::string("chain JSON: ") + e.what());
    }
}

/// Reads a chain from CSV, or from the JSON wrapper when the extension is .json.
inline markov::TransitionMatrix read_chain(const fs::path& path) {
    if (path.extension() == ".json") return chain_from_json(read_json(path));
    return markov::TransitionMatrix(read_matrix_csv(path));
}

inline void write_chain(const fs::path& path, const markov::TransitionMatrix& p,
                        const std::string& label = "") {
    if (path.extension() == ".json") write_json(path, chain_to_json(p, label));
    else write_matrix_csv(path, p.matrix());
}

// -----------------------------------------------------------------------------
// Trajectories
// -----------------------------------------------------------------------------

inline std::string trajectory_to_text(std::span<const markov::State> states) {
    std::string s;
    s.reserve(states.size() * 3);
    for (auto v : states) {
        s += std::to_string(v + 1);
        s += '\n';
    }
    return s;
}

inline markov::Trajectory trajectory_from_text(std::istream& in, const std::string& where) {
    markov::Trajectory out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto v = parse_int(line, where + ":" + std::to_string(lineno));
        if (v < 1) throw Error(ErrorKind::io, where + ":" + std::to_string(lineno) + ": state must be >= 1");
        out.push_back(static_cast<markov::State>(v - 1));
    }
    return out;
}

inline void write_trajectory(const fs::path& path, std::span<const markov::State> states) {
    write_text(path, trajectory_to_text(states));
}

inline markov::Trajectory read_trajectory(const fs::path& path) {
    auto in = open_in(path);
    return trajectory_from_text(in, path.string());
}

inline std::string pairs_to_csv(std::span<const factorizer::BlockSample> pairs) {
    std::string s = "from,to\n";
    for (const auto& p : pairs) s += std::to_string(p.from_state + 1) + "," + std::to_string(p.to_state + 1) + "\n";
    return s;
}

/// "from,to" pairs; the header line is optional.
inline std::vector<factorizer::BlockSample> pairs_from_csv(std::istream& in, const std::string& where) {
    std::vector<factorizer::BlockSample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto f = split_csv(line);
        if (lineno == 1 && f.size() == 2 && f[0] == "from") continue;
        if (f.size() != 2) throw Error(ErrorKind::io, where + ":" + std::to_string(lineno) + ": expected from,to");
        const auto a = parse_int(f[0], where);
        const auto b = parse_int(f[1], where);
        if (a < 1 || b < 1) throw Error(ErrorKind::io, where + ":" + std::to_string(lineno) + ": state must be >= 1");
        out.push_back({static_cast<markov::State>(a - 1), static_cast<markov::State>(b - 1)});
    }
    return out;
}

inline void write_pairs(const fs::path& path, std::span<const factorizer::BlockSample> pairs) {
    write_text(path, pairs_to_csv(pairs));
}

inline std::vector<factorizer::BlockSample> read_pairs(const fs::path& path) {
    auto in = open_in(path);
    return pairs_from_csv(in, path.string());
}

/// Transitions implied by a trajectory, as "from,to" pairs.
inline std::vector<factorizer::BlockSample> transitions(std::span<const markov::State> states) {
    std::vector<factorizer::BlockSample> out;
    for (std::size_t t = 0; t + 1 < states.size(); ++t) out.push_back({states[t], states[t + 1]});
    return out;
}

// -----------------------------------------------------------------------------
// Factorizer artifacts
// -----------------------------------------------------------------------------

inline std::string trace_to_csv(const factorizer::AngleTrace& trace) {
    std::string s = "iteration,sin2_theta\n";
    for (std::size_t i = 0; i < trace.size(); ++i)
        s += std::to_string(trace.times[i]) + "," + format_double(trace.sin2_theta[i]) + "\n";
    return s;
}

inline json schedule_to_json(const factorizer::LearningRate& rate) {
    if (rate.kind == factorizer::LearningRate::Kind::fixed) return {{"kind", "fixed"}, {"eta", rate.eta0}};
    return {{"kind", "diminishing"}, {"eta0", rate.eta0}, {"k0", rate.k0}};
}

inline factorizer::LearningRate schedule_from_json(const json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "fixed") return factorizer::LearningRate::fixed(j.at("eta").get<double>());
    if (kind == "diminishing")
        return factorizer::LearningRate::diminishing(j.at("eta0").get<double>(), j.at("k0").get<double>());
    throw Error(ErrorKind::io, "unknown learning-rate kind '" + kind + "'");
}

struct Checkpoint {
    factorizer::FactorizerState state;
    int tau;
    std::uint64_t seed;
    std::uint64_t stream_offset; ///< states of the input stream already consumed
};

inline void write_checkpoint(const fs::path& dir, const Checkpoint& cp) {
    write_matrix_csv(dir / "W.csv", cp.state.w());
    write_json(dir / "checkpoint.json", {{"m", cp.state.m()},
                                         {"r", cp.state.r()},
                                         {"k", cp.state.k()},
                                         {"tau", cp.tau},
                                         {"seed", cp.seed},
                                         {"stream_offset", cp.stream_offset},
                                         {"schedule", schedule_to_json(cp.state.schedule())}});
}

inline Checkpoint read_checkpoint(const fs::path& dir) {
    const json j = read_json(dir / "checkpoint.json");
    Matrix w = read_matrix_csv(dir / "W.csv");
    try {
        const int m = j.at("m").get<int>();
        const int r = j.at("r").get<int>();
        require(w.rows() == 2 * m && w.cols() == r, "checkpoint: W.csv shape does not match manifest");
        factorizer::FactorizerState state(std::move(w), schedule_from_json(j.at("schedule")),
                                          j.at("k").get<std::int64_t>());
        return {std::move(state), j.at("tau").get<int>(), j.at("seed").get<std::uint64_t>(),
                j.at("stream_offset").get<std::uint64_t>()};
    } catch (const json::exception& e) {
        throw Error(ErrorKind::io, std::string("checkpoint: ") + e.what());
    }
}

// -----------------------------------------------------------------------------
// Partitions
// -----------------------------------------------------------------------------

inline std::string partition_to_csv(const std::vector<int>& labels) {
    std::string s = "state,label\n";
    for (std::size_t i = 0; i < labels.size(); ++i)
        s += std::to_string(i + 1) + "," + std::to_string(labels[i] + 1) + "\n";
    return s;
}

// -----------------------------------------------------------------------------
// Trip CSV
// -----------------------------------------------------------------------------

/// Names of the coordinate columns; defaults follow the public TLC yellow-cab
/// schema.
struct TripColumns {
    std::string pickup_lat = "pickup_latitude";
    std::string pickup_lon = "pickup_longitude";
    std::string dropoff_lat = "dropoff_latitude";
    std::string dropoff_lon = "dropoff_longitude";
    std::string timestamp; ///< empty: not read
};

/// Rows with unparsable coordinates become non-finite points, which the
/// ingest pass counts as out of the bounding box.
inline std::vector<ingest::TripRecord> read_trips_csv(std::istream& in, const TripColumns& cols,
                                                      const std::string& where) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::io, where + ": missing header");
    const auto header = split_csv(line);
    auto find = [&](const std::string& name) -> std::ptrdiff_t {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<std::ptrdiff_t>(i);
        return -1;
    };
    const auto plat = find(cols.pickup_lat), plon = find(cols.pickup_lon);
    const auto dlat = find(cols.dropoff_lat), dlon = find(cols.dropoff_lon);
    for (const auto& [idx, name] : {std::pair{plat, cols.pickup_lat}, {plon, cols.pickup_lon},
                                    {dlat, cols.dropoff_lat}, {dlon, cols.dropoff_lon}})
        if (idx < 0) throw Error(ErrorKind::io, where + ": missing column '" + name + "'");
    const auto ts = cols.timestamp.empty() ? -1 : find(cols.timestamp);

    auto coord = [](const std::vector<std::string>& f, std::ptrdiff_t i) {
        if (static_cast<std::size_t>(i) >= f.size()) return std::numeric_limits<double>::quiet_NaN();
        try {
            return parse_double(f[static_cast<std::size_t>(i)], "");
        } catch (const Error&) {
            return std::numeric_limits<double>::quiet_NaN();
        }
    };
    std::vector<ingest::TripRecord> trips;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto f = split_csv(line);
        ingest::TripRecord t{{coord(f, plat), coord(f, plon)}, {coord(f, dlat), coord(f, dlon)}, std::nullopt};
        if (ts >= 0 && static_cast<std::size_t>(ts) < f.size()) t.timestamp = f[static_cast<std::size_t>(ts)];
        trips.push_back(std::move(t));
    }
    return trips;
}

inline std::vector<ingest::TripRecord> read_trips_csv(const fs::path& path, const TripColumns& cols = {}) {
    auto in = open_in(path);
    return read_trips_csv(in, cols, path.string());
}

} // namespace markov_gha::io
