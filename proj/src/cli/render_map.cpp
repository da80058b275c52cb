#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "climreg/cli.hpp"
#include "climreg/csv_table.hpp"
#include "climreg/errors.hpp"
#include "climreg/grid_store.hpp"

namespace climreg::cli {

namespace {

constexpr double kPixelsPerDegree = 20.0;
constexpr double kMargin = 20.0;
constexpr double kLegendWidth = 200.0;

struct Rgb {
    double r, g, b;
};

std::string hex(const Rgb& c) {
    auto byte = [](double v) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", byte(c.r), byte(c.g), byte(c.b));
    return buf;
}

Rgb hsl(double h, double s, double l) {
    auto f = [&](double n) {
        const double k = std::fmod(n + h / 30.0, 12.0);
        const double a = s * std::min(l, 1.0 - l);
        return l - a * std::max(-1.0, std::min({k - 3.0, 9.0 - k, 1.0}));
    };
    return {f(0), f(8), f(4)};
}

std::string categorical_color(std::size_t i) {
    static constexpr std::array<const char*, 10> kBase = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    if (i < kBase.size()) return kBase[i];
    return hex(hsl(std::fmod(static_cast<double>(i) * 137.508, 360.0), 0.65, 0.5));
}

// Viridis approximated by linear interpolation between five anchors.
std::string sequential_color(double t) {
    static constexpr std::array<Rgb, 5> kStops = {
        Rgb{0.267, 0.005, 0.329}, Rgb{0.229, 0.322, 0.546}, Rgb{0.128, 0.567, 0.551},
        Rgb{0.369, 0.789, 0.383}, Rgb{0.993, 0.906, 0.144}};
    t = std::clamp(t, 0.0, 1.0) * static_cast<double>(kStops.size() - 1);
    const auto lo = std::min<std::size_t>(static_cast<std::size_t>(t), kStops.size() - 2);
    const double f = t - static_cast<double>(lo);
    const auto& a = kStops[lo];
    const auto& b = kStops[lo + 1];
    return hex({a.r + f * (b.r - a.r), a.g + f * (b.g - a.g), a.b + f * (b.b - a.b)});
}

std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

double infer_resolution(const std::set<double>& coords) {
    double best = 0.0;
    double prev = 0.0;
    bool first = true;
    for (double c : coords) {
        if (!first) {
            const double d = c - prev;
            if (d > 1e-9 && (best == 0.0 || d < best)) best = d;
        }
        prev = c;
        first = false;
    }
    return best;
}

}  // namespace

std::string render_map_svg(std::istream& values_csv, const RenderOptions& options) {
    const auto table = read_csv_table(values_csv);
    const auto lat_col = table.require_column("lat");
    const auto lon_col = table.require_column("lon");
    const auto field_col = table.require_column(options.field);
    const auto year_col = table.column("year");
    const bool categorical = options.field == "region_id";

    struct Cell {
        double lat, lon, value;
    };
    std::vector<Cell> cells;
    std::set<std::pair<double, double>> seen;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const auto line = table.lines[i];
        if (options.year) {
            if (!year_col) fail(Errc::MissingField, "missing column 'year'");
            if (parse_int_field(row[*year_col], line, "year") != *options.year) continue;
        }
        Cell c{parse_double_field(row[lat_col], line, "lat"), parse_double_field(row[lon_col], line, "lon"),
               categorical ? static_cast<double>(parse_int_field(row[field_col], line, options.field))
                           : parse_double_field(row[field_col], line, options.field)};
        if (!seen.insert({c.lat, c.lon}).second) {
            fail(Errc::DuplicateRecord, "line " + std::to_string(line) +
                                            ": cell appears more than once; select one year with --year");
        }
        cells.push_back(c);
    }
    if (cells.empty()) fail(Errc::EmptyInput, "no rows to render");

    std::set<double> lats;
    std::set<double> lons;
    for (const auto& c : cells) {
        lats.insert(c.lat);
        lons.insert(c.lon);
    }
    double res = options.resolution.value_or(0.0);
    if (res <= 0.0) {
        const double a = infer_resolution(lats);
        const double b = infer_resolution(lons);
        res = (a > 0.0 && b > 0.0) ? std::min(a, b) : std::max({a, b, 0.0});
        if (res <= 0.0) res = kDefaultResolution;
    }
    const double lat_max = *lats.rbegin();
    const double lon_min = *lons.begin();
    const double map_w = (*lons.rbegin() - lon_min + res) * kPixelsPerDegree;
    const double map_h = (lat_max - *lats.begin() + res) * kPixelsPerDegree;

    std::map<int, std::size_t> categories;
    double vmin = cells.front().value;
    double vmax = cells.front().value;
    for (const auto& c : cells) {
        vmin = std::min(vmin, c.value);
        vmax = std::max(vmax, c.value);
        if (categorical) categories.emplace(static_cast<int>(c.value), 0);
    }
    std::size_t idx = 0;
    for (auto& [id, slot] : categories) slot = idx++;

    const double legend_h = categorical ? 30.0 + 20.0 * static_cast<double>(categories.size()) : 90.0;
    const double width = map_w + 3 * kMargin + kLegendWidth;
    const double height = std::max(map_h, legend_h) + 2 * kMargin + 20.0;

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << num(width) << "\" height=\""
        << num(height) << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height) << "\">\n";
    const std::string title = options.title.empty() ? options.field : options.title;
    svg << "  <title>" << esc(title) << "</title>\n";
    svg << "  <text x=\"" << num(kMargin) << "\" y=\"" << num(kMargin) << "\" font-family=\"sans-serif\" "
        << "font-size=\"14\">" << esc(title) << "</text>\n";
    svg << "  <g id=\"cells\">\n";
    for (const auto& c : cells) {
        const double x = kMargin + (c.lon - lon_min) * kPixelsPerDegree;
        const double y = kMargin + 20.0 + (lat_max - c.lat) * kPixelsPerDegree;
        const std::string color =
            categorical ? categorical_color(categories.at(static_cast<int>(c.value)))
                        : sequential_color(vmax > vmin ? (c.value - vmin) / (vmax - vmin) : 0.0);
        svg << "    <rect class=\"cell\" x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\""
            << num(res * kPixelsPerDegree) << "\" height=\"" << num(res * kPixelsPerDegree) << "\" fill=\""
            << color << "\"><title>lat " << format_double(c.lat) << ", lon " << format_double(c.lon) << ": "
            << format_double(c.value) << "</title></rect>\n";
    }
    svg << "  </g>\n";

    const double lx = 2 * kMargin + map_w;
    const double ly = kMargin + 20.0;
    svg << "  <g id=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n";
    if (categorical) {
        double y = ly;
        for (const auto& [id, slot] : categories) {
            svg << "    <rect class=\"legend-swatch\" x=\"" << num(lx) << "\" y=\"" << num(y)
                << "\" width=\"14\" height=\"14\" fill=\"" << categorical_color(slot) << "\"/>\n";
            svg << "    <text class=\"legend-label\" x=\"" << num(lx + 20) << "\" y=\"" << num(y + 12)
                << "\">Region " << id << "</text>\n";
            y += 20.0;
        }
    } else {
        svg << "    <defs><linearGradient id=\"ramp\" x1=\"0\" y1=\"0\" x2=\"1\" y2=\"0\">\n";
        for (int s = 0; s <= 4; ++s) {
            svg << "      <stop offset=\"" << s * 25 << "%\" stop-color=\"" << sequential_color(s / 4.0)
                << "\"/>\n";
        }
        svg << "    </linearGradient></defs>\n";
        svg << "    <rect class=\"legend-ramp\" x=\"" << num(lx) << "\" y=\"" << num(ly)
            << "\" width=\"160\" height=\"14\" fill=\"" << (vmax > vmin ? "url(#ramp)" : sequential_color(0.0))
            << "\"/>\n";
        svg << "    <text class=\"legend-min\" x=\"" << num(lx) << "\" y=\"" << num(ly + 32) << "\">min "
            << format_double(vmin) << "</text>\n";
        svg << "    <text class=\"legend-max\" x=\"" << num(lx) << "\" y=\"" << num(ly + 50) << "\">max "
            << format_double(vmax) << "</text>\n";
    }
    svg << "  </g>\n</svg>\n";
    return svg.str();
}

}  // namespace climreg::cli
