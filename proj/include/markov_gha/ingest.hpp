#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "markov_gha/error.hpp"
#include "markov_gha/markov_core.hpp"
#include "markov_gha/stream_factorizer.hpp"

// =============================================================================
// Trip records → state-transition stream.
//
// Coordinates are mapped to a square grid (equirectangular projection at the
// bounding box's mid-latitude); rarely visited cells are removed and the
// survivors renumbered densely in ascending cell-id order.
// =============================================================================

namespace markov_gha::ingest {

inline constexpr double kEarthRadiusMeters = 6'371'008.8;

struct LatLon {
    double lat = 0.0;
    double lon = 0.0;
};

struct GridSpec {
    double lat_min = 0.0;
    double lat_max = 0.0;
    double lon_min = 0.0;
    double lon_max = 0.0;
    double cell_size_m = 10.0;

    void validate() const {
        require(std::isfinite(lat_min) && std::isfinite(lat_max) && std::isfinite(lon_min) &&
                    std::isfinite(lon_max),
                "grid: bounding box must be finite");
        require(lat_max > lat_min && lon_max > lon_min, "grid: bounding box is empty");
        require(cell_size_m > 0.0, "grid: cell size must be positive");
    }

    double meters_per_degree_lat() const { return kEarthRadiusMeters * std::numbers::pi / 180.0; }

    double meters_per_degree_lon() const {
        const double mid = 0.5 * (lat_min + lat_max) * std::numbers::pi / 180.0;
        return meters_per_degree_lat() * std::cos(mid);
    }

    std::int64_t columns() const {
        const double width = (lon_max - lon_min) * meters_per_degree_lon();
        return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(width / cell_size_m)));
    }

    std::int64_t rows() const {
        const double height = (lat_max - lat_min) * meters_per_degree_lat();
        return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(height / cell_size_m)));
    }
};

using CellId = std::int64_t;

/// Row-major cell index, or nullopt for points outside the box (or non-finite).
/// Points on the upper edges fall into the last row/column.
inline std::optional<CellId> grid_index(const GridSpec& spec, LatLon point) {
    if (!std::isfinite(point.lat) || !std::isfinite(point.lon)) return std::nullopt;
    if (point.lat < spec.lat_min || point.lat > spec.lat_max || point.lon < spec.lon_min ||
        point.lon > spec.lon_max)
        return std::nullopt;
    const double x = (point.lon - spec.lon_min) * spec.meters_per_degree_lon();
    const double y = (point.lat - spec.lat_min) * spec.meters_per_degree_lat();
    const auto cols = spec.columns();
    const auto rows = spec.rows();
    const auto col = std::min(cols - 1, static_cast<std::int64_t>(std::floor(x / spec.cell_size_m)));
    const auto row = std::min(rows - 1, static_cast<std::int64_t>(std::floor(y / spec.cell_size_m)));
    return row * cols + col;
}

struct TripRecord {
    LatLon pickup;
    LatLon dropoff;
    std::optional<std::string> timestamp;
};

struct IngestOptions {
    std::int64_t min_visits = 100;
    bool chain = true;
};

struct IngestReport {
    std::int64_t trips_total = 0;
    std::int64_t trips_out_of_bbox = 0;
    std::int64_t trips_rare_cell = 0;
    std::int64_t trips_kept = 0;
    std::int64_t cells_seen = 0;
    std::int64_t cells_kept = 0;
    std::int64_t chained_runs = 0;
};

struct IngestResult {
    /// Chained mode: the state path. Unchained mode: pickup, dropoff, pickup, ...
    markov::Trajectory stream;
    /// One (pickup, dropoff) sample per surviving trip.
    std::vector<factorizer::BlockSample> pairs;
    /// cell_of_state[s] is the grid cell renumbered to state s.
    std::vector<CellId> cell_of_state;
    IngestReport report;

    int state_count() const { return static_cast<int>(cell_of_state.size()); }
};

/// Two passes: count visits per cell, then emit transitions over surviving
/// cells. With chaining, a trip whose pickup cell equals the previous kept
/// trip's dropoff cell extends the current run, so the stream length is
/// (kept trips) + (runs). Without chaining the stream is 2·(kept trips).
inline IngestResult build_stream(std::span<const TripRecord> trips, const GridSpec& spec,
                                 const IngestOptions& opts = {}) {
    spec.validate();
    require(!trips.empty(), "ingest: no trips");
    require(opts.min_visits >= 0, "ingest: min_visits must be nonnegative");

    IngestResult out;
    out.report.trips_total = static_cast<std::int64_t>(trips.size());

    struct Located {
        CellId from;
        CellId to;
    };
    std::vector<std::optional<Located>> located;
    located.reserve(trips.size());
    std::map<CellId, std::int64_t> visits;
    for (const auto& trip : trips) {
        const auto a = grid_index(spec, trip.pickup);
        const auto b = grid_index(spec, trip.dropoff);
        if (!a || !b) {
            ++out.report.trips_out_of_bbox;
            located.emplace_back();
            continue;
        }
        ++visits[*a];
        ++visits[*b];
        located.push_back(Located{*a, *b});
    }
    out.report.cells_seen = static_cast<std::int64_t>(visits.size());

    std::map<CellId, markov::State> state_of;
    for (const auto& [cell, count] : visits) {
        if (count >= opts.min_visits) {
            state_of.emplace(cell, static_cast<markov::State>(out.cell_of_state.size()));
            out.cell_of_state.push_back(cell);
        }
    }
    out.report.cells_kept = static_cast<std::int64_t>(out.cell_of_state.size());
    if (out.cell_of_state.empty())
        throw Error(ErrorKind::validation, "ingest: no cell has at least " +
                                               std::to_string(opts.min_visits) + " visits");

    std::optional<markov::State> last_dropoff;
    for (const auto& loc : located) {
        if (!loc) continue;
        const auto a = state_of.find(loc->from);
        const auto b = state_of.find(loc->to);
        if (a == state_of.end() || b == state_of.end()) {
            ++out.report.trips_rare_cell;
            continue;
        }
        ++out.report.trips_kept;
        out.pairs.push_back({a->second, b->second});
        if (opts.chain) {
            if (!last_dropoff || *last_dropoff != a->second) {
                out.stream.push_back(a->second);
                ++out.report.chained_runs;
            }
            out.stream.push_back(b->second);
            last_dropoff = b->second;
        } else {
            out.stream.push_back(a->second);
            out.stream.push_back(b->second);
        }
    }
    return out;
}

} // namespace markov_gha::ingest
