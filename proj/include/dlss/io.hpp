/// @file io.hpp
/// @brief Plain-CSV serialisation of traces, snapshots and study tables.
/// Reals are written with 17 significant digits so that they read back exactly.

#pragma once

#include "dlss/errors.hpp"
#include "dlss/grid.hpp"
#include "dlss/lab.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace dlss::io {

inline std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Shortest decimal form that reads back as t, e.g. 3.2e-05 -> "3.2e-05".
inline std::string shortest(double t) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, t);
    return std::string(buf, res.ptr);
}

inline std::string snapshot_filename(double t) { return "snapshot_" + shortest(t) + ".csv"; }

inline double parse_real(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t')) s.remove_suffix(1);
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw InvalidArgument("not a number: '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::vector<double> parse_real_list(std::string_view s) {
    std::vector<double> out;
    if (s.empty()) return out;
    for (auto part : split(s)) out.push_back(parse_real(part));
    return out;
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

inline void write_trace(std::ostream& os, const RunTrace& trace) {
    os << "step,t,mass,min_u,energy,slack,newton_iters\n";
    for (const auto& r : trace.rows)
        os << r.step << ',' << format_real(r.t) << ',' << format_real(r.mass) << ','
           << format_real(r.min_u) << ',' << format_real(r.energy) << ',' << format_real(r.slack)
           << ',' << r.newton_iters << '\n';
}

/// 1D: i,x,u   2D: i,j,x,y,u
inline void write_snapshot(std::ostream& os, const CellField& u) {
    const GridSpec& g = u.grid();
    const int n = g.n();
    if (g.dim() == 1) {
        os << "i,x,u\n";
        for (int i = 0; i < n; ++i)
            os << i << ',' << format_real(g.coord(i)) << ',' << format_real(u.at(i)) << '\n';
    } else {
        os << "i,j,x,y,u\n";
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                os << i << ',' << j << ',' << format_real(g.coord(i)) << ',' << format_real(g.coord(j))
                   << ',' << format_real(u.at(i, j)) << '\n';
    }
}

inline void write_convergence(std::ostream& os, const std::vector<ConvergenceRow>& rows) {
    os << "N,h,l2_error,order\n";
    for (const auto& r : rows)
        os << r.n << ',' << format_real(r.h) << ',' << format_real(r.l2_error) << ','
           << (r.order ? format_real(*r.order) : std::string()) << '\n';
}

inline void write_consistency(std::ostream& os, const std::vector<ConsistencyRow>& rows) {
    os << "N,h,dt,tau_inf,ratio\n";
    for (const auto& r : rows)
        os << r.n << ',' << format_real(r.h) << ',' << format_real(r.dt) << ','
           << format_real(r.tau_inf) << ',' << (r.ratio ? format_real(*r.ratio) : std::string())
           << '\n';
}

// ---------------------------------------------------------------------------
// Readers
// ---------------------------------------------------------------------------

/// Reads a snapshot written by write_snapshot. The grid is recovered from the file:
/// the dimension from the header, N from the row count and L from the last cell
/// coordinate (cell N-1 sits at x = L).
inline CellField read_snapshot(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw InvalidArgument("snapshot: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    int dim = 0;
    if (line == "i,x,u") dim = 1;
    else if (line == "i,j,x,y,u") dim = 2;
    else throw InvalidArgument("snapshot: unexpected header '" + line + "'");

    std::vector<double> values;
    std::vector<double> coords;
    long row = 0;
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        const auto cols = split(line);
        if (int(cols.size()) != 2 * dim + 1)
            throw InvalidArgument("snapshot: row " + std::to_string(row + 1) + " has the wrong column count");
        coords.push_back(parse_real(cols[std::size_t(dim)]));
        values.push_back(parse_real(cols.back()));
        ++row;
    }
    long n = row;
    if (dim == 2) {
        n = std::lround(std::sqrt(double(row)));
        if (n * n != row) throw InvalidArgument("snapshot: 2D row count is not a square");
    }
    if (n < 3) throw InvalidArgument("snapshot: too few rows");
    // n * (L/n) can miss L by an ulp or two, and neighbouring lengths can share every
    // coordinate. Among nearby lengths that reproduce the file, take the one with the
    // shortest decimal form.
    auto reproduces = [&](double len) {
        const GridSpec g(dim, int(n), len);
        for (long r = 0; r < row; ++r)
            if (g.coord(r % n) != coords[std::size_t(r)]) return false;
        return true;
    };
    double length = coords.back();
    std::size_t best = std::string::npos;
    double probe = coords.back();
    for (int k = 0; k < 8; ++k) probe = std::nextafter(probe, 0.0);
    for (int k = 0; k <= 16; ++k, probe = std::nextafter(probe, 2.0 * probe)) {
        if (!(probe > 0.0) || !reproduces(probe)) continue;
        const std::size_t digits = shortest(probe).size();
        if (digits < best) {
            best = digits;
            length = probe;
        }
    }
    return CellField(GridSpec(dim, int(n), length), std::move(values));
}

struct TraceTable {
    std::vector<TraceRow> rows;
};

inline TraceTable read_trace(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw InvalidArgument("trace: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "step,t,mass,min_u,energy,slack,newton_iters")
        throw InvalidArgument("trace: unexpected header '" + line + "'");
    TraceTable out;
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        const auto c = split(line);
        if (c.size() != 7) throw InvalidArgument("trace: wrong column count");
        TraceRow r;
        r.step = long(parse_real(c[0]));
        r.t = parse_real(c[1]);
        r.mass = parse_real(c[2]);
        r.min_u = parse_real(c[3]);
        r.energy = parse_real(c[4]);
        r.slack = parse_real(c[5]);
        r.newton_iters = int(parse_real(c[6]));
        out.rows.push_back(r);
    }
    return out;
}

}  // namespace dlss::io
