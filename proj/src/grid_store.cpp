#include "climreg/grid_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "climreg/errors.hpp"

namespace climreg {

namespace {

constexpr std::array<std::string_view, kNumVariables> kVariableNames = {
    "air_temperature",    "precipitable_water", "precipitation", "relative_humidity",
    "sea_level_pressure", "zonal_wind",         "meridional_wind",
};

std::string where(std::size_t line) {
    return line == 0 ? std::string("record") : "line " + std::to_string(line);
}

std::string cell_label(double lat, double lon) {
    return "cell (lat " + format_double(lat) + ", lon " + format_double(lon) + ")";
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool parse_number(std::string_view text, double& out) {
    text = trim(text);
    if (text.empty()) return false;
    if (text.front() == '+') text.remove_prefix(1);
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, out);
    return ec == std::errc() && ptr == end;
}

bool parse_int(std::string_view text, int& out) {
    text = trim(text);
    if (text.empty()) return false;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, out);
    return ec == std::errc() && ptr == end;
}

// Snaps a coordinate to the lattice; nullopt when it is off-lattice.
std::optional<double> snap(double value, double resolution) {
    const double q = value / resolution;
    const double r = std::round(q);
    if (std::abs(q - r) > 1e-9 * std::max(1.0, std::abs(q))) return std::nullopt;
    return r * resolution;
}

}  // namespace

std::string_view variable_name(ClimateVariable v) noexcept { return kVariableNames[index_of(v)]; }

std::optional<ClimateVariable> parse_variable(std::string_view name) noexcept {
    for (std::size_t i = 0; i < kNumVariables; ++i) {
        if (kVariableNames[i] == name) return kAllVariables[i];
    }
    return std::nullopt;
}

std::string format_double(double value) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    (void)ec;
    return std::string(buf.data(), ptr);
}

Dataset Dataset::from_records(std::span<const RawRecord> rows, double resolution) {
    if (!(resolution > 0.0) || !std::isfinite(resolution)) {
        fail(Errc::InvalidArgument, "grid resolution must be positive");
    }
    if (rows.empty()) fail(Errc::EmptyInput, "no data rows");

    struct Keyed {
        double lat, lon;
        int year;
        std::size_t row;
    };
    std::vector<Keyed> keyed;
    keyed.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (!std::isfinite(r.lat) || !std::isfinite(r.lon)) {
            fail(Errc::NonFiniteValue, where(r.line) + ": non-finite coordinate");
        }
        for (std::size_t v = 0; v < kNumVariables; ++v) {
            if (!std::isfinite(r.values[v])) {
                fail(Errc::NonFiniteValue, where(r.line) + ": non-finite value for " +
                                               std::string(kVariableNames[v]));
            }
        }
        if (r.lat < -90.0 || r.lat > 90.0) {
            fail(Errc::OffGrid, where(r.line) + ": latitude " + format_double(r.lat) +
                                    " outside [-90, 90]");
        }
        double lon = std::fmod(r.lon, 360.0);
        if (lon < 0.0) lon += 360.0;
        const auto lat_s = snap(r.lat, resolution);
        auto lon_s = snap(lon, resolution);
        if (!lat_s || !lon_s) {
            fail(Errc::OffGrid, where(r.line) + ": " + cell_label(r.lat, r.lon) +
                                    " is not on the " + format_double(resolution) +
                                    " degree lattice");
        }
        if (*lon_s >= 360.0) *lon_s = 0.0;
        keyed.push_back({*lat_s == 0.0 ? 0.0 : *lat_s, *lon_s, r.year, i});
    }

    std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
        if (a.lat != b.lat) return a.lat < b.lat;
        if (a.lon != b.lon) return a.lon < b.lon;
        return a.year < b.year;
    });

    Dataset ds;
    ds.resolution_ = resolution;
    ds.first_year_ = keyed.front().year;
    ds.last_year_ = keyed.front().year;
    for (std::size_t i = 0; i < keyed.size(); ++i) {
        const auto& k = keyed[i];
        ds.first_year_ = std::min(ds.first_year_, k.year);
        ds.last_year_ = std::max(ds.last_year_, k.year);
        if (i > 0) {
            const auto& p = keyed[i - 1];
            if (p.lat == k.lat && p.lon == k.lon && p.year == k.year) {
                const auto first = std::min(rows[p.row].line, rows[k.row].line);
                const auto second = std::max(rows[p.row].line, rows[k.row].line);
                fail(Errc::DuplicateRecord, where(second) + ": " + cell_label(k.lat, k.lon) +
                                                " year " + std::to_string(k.year) +
                                                " repeats " + where(first));
            }
        }
    }
    for (const auto& k : keyed) {
        if (ds.cells_.empty() || ds.cells_.back().lat != k.lat || ds.cells_.back().lon != k.lon) {
            ds.cells_.push_back(
                {CellId{static_cast<std::uint32_t>(ds.cells_.size())}, k.lat, k.lon});
        }
    }

    const std::size_t years = ds.year_count();
    ds.values_.resize(ds.cells_.size() * years);
    std::size_t pos = 0;
    for (const auto& cell : ds.cells_) {
        for (std::size_t y = 0; y < years; ++y) {
            const int year = ds.first_year_ + static_cast<int>(y);
            if (pos >= keyed.size() || keyed[pos].lat != cell.lat || keyed[pos].lon != cell.lon ||
                keyed[pos].year != year) {
                fail(Errc::RaggedPanel, cell_label(cell.lat, cell.lon) + " has no record for year " +
                                            std::to_string(year));
            }
            ds.values_[cell.id.value * years + y] = rows[keyed[pos].row].values;
            ++pos;
        }
    }
    return ds;
}

std::vector<int> Dataset::years() const {
    std::vector<int> out;
    for (int y = first_year_; y <= last_year_; ++y) out.push_back(y);
    return out;
}

const ClimateVector& Dataset::values(CellId id, int year) const {
    if (id.value >= cells_.size() || year < first_year_ || year > last_year_) {
        fail(Errc::MissingTestRecord, "no record for cell " + std::to_string(id.value) +
                                          " year " + std::to_string(year));
    }
    return values_[id.value * year_count() + static_cast<std::size_t>(year - first_year_)];
}

std::vector<AnnualRecord> Dataset::records() const {
    std::vector<AnnualRecord> out;
    out.reserve(values_.size());
    for (const auto& cell : cells_) {
        for (int y = first_year_; y <= last_year_; ++y) out.push_back({cell.id, y, values(cell.id, y)});
    }
    return out;
}

std::optional<CellId> Dataset::find_cell(double lat, double lon) const {
    const auto lat_s = snap(lat, resolution_);
    double l = std::fmod(lon, 360.0);
    if (l < 0.0) l += 360.0;
    auto lon_s = snap(l, resolution_);
    if (!lat_s || !lon_s) return std::nullopt;
    if (*lon_s >= 360.0) *lon_s = 0.0;
    auto it = std::lower_bound(cells_.begin(), cells_.end(), std::pair{*lat_s, *lon_s},
                               [](const GridCell& c, const std::pair<double, double>& key) {
                                   return std::pair{c.lat, c.lon} < key;
                               });
    if (it == cells_.end() || it->lat != *lat_s || it->lon != *lon_s) return std::nullopt;
    return it->id;
}

void Dataset::write_csv(std::ostream& out) const {
    out << kCsvHeader << '\n';
    for (const auto& cell : cells_) {
        for (int y = first_year_; y <= last_year_; ++y) {
            out << format_double(cell.lat) << ',' << format_double(cell.lon) << ',' << y;
            for (double v : values(cell.id, y)) out << ',' << format_double(v);
            out << '\n';
        }
    }
}

std::vector<std::size_t> RegionAssignment::region_sizes() const {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(std::max(region_count, 0)), 0);
    for (int r : region_of) {
        if (r >= 0 && r < region_count) ++sizes[static_cast<std::size_t>(r)];
    }
    return sizes;
}

Dataset ingest_csv(std::istream& source, double resolution) {
    std::string line;
    if (!std::getline(source, line)) fail(Errc::EmptyInput, "line 1: empty input, expected header");
    std::string_view header = line;
    if (header.starts_with("\xEF\xBB\xBF")) header.remove_prefix(3);
    if (!header.empty() && header.back() == '\r') header.remove_suffix(1);
    if (header.empty() && source.peek() == std::char_traits<char>::eof()) {
        fail(Errc::EmptyInput, "line 1: empty input, expected header");
    }
    if (header != kCsvHeader) {
        fail(Errc::MalformedRow, "line 1: header mismatch, expected '" + std::string(kCsvHeader) + "'");
    }

    std::vector<RawRecord> rows;
    std::size_t line_no = 1;
    while (std::getline(source, line)) {
        ++line_no;
        std::string_view text = line;
        if (!text.empty() && text.back() == '\r') text.remove_suffix(1);
        if (trim(text).empty()) continue;
        const auto fields = split_commas(text);
        if (fields.size() != 3 + kNumVariables) {
            fail(Errc::MalformedRow, "line " + std::to_string(line_no) + ": expected " +
                                         std::to_string(3 + kNumVariables) + " columns, found " +
                                         std::to_string(fields.size()));
        }
        RawRecord r;
        r.line = line_no;
        if (!parse_number(fields[0], r.lat) || !parse_number(fields[1], r.lon)) {
            fail(Errc::MalformedRow, "line " + std::to_string(line_no) + ": unparseable coordinate");
        }
        if (!parse_int(fields[2], r.year)) {
            fail(Errc::MalformedRow, "line " + std::to_string(line_no) + ": unparseable year '" +
                                         std::string(trim(fields[2])) + "'");
        }
        for (std::size_t v = 0; v < kNumVariables; ++v) {
            if (!parse_number(fields[3 + v], r.values[v])) {
                fail(Errc::MalformedRow, "line " + std::to_string(line_no) + ": unparseable " +
                                             std::string(kVariableNames[v]) + " value '" +
                                             std::string(trim(fields[3 + v])) + "'");
            }
        }
        rows.push_back(r);
    }
    if (rows.empty()) fail(Errc::EmptyInput, "no data rows after header");
    return Dataset::from_records(rows, resolution);
}

Dataset ingest_csv_file(const std::string& path, double resolution) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::EmptyInput, "cannot open '" + path + "'");
    return ingest_csv(in, resolution);
}

namespace {

void check_years(const Dataset& ds, std::span<const int> years) {
    if (years.empty()) fail(Errc::EmptyYearSet, "year set is empty");
    for (int y : years) {
        if (y < ds.first_year() || y > ds.last_year()) {
            fail(Errc::YearOutOfRange, "year " + std::to_string(y) + " outside dataset range " +
                                           std::to_string(ds.first_year()) + "-" +
                                           std::to_string(ds.last_year()));
        }
    }
}

}  // namespace

std::vector<ClimatologyVector> long_term_means(const Dataset& ds, std::span<const int> years) {
    check_years(ds, years);
    std::vector<ClimatologyVector> out;
    out.reserve(ds.cell_count());
    const double count = static_cast<double>(years.size());
    for (const auto& cell : ds.cells()) {
        ClimatologyVector c{cell.id, {}};
        for (int y : years) {
            const auto& v = ds.values(cell.id, y);
            for (std::size_t i = 0; i < kNumVariables; ++i) c.means[i] += v[i];
        }
        for (auto& m : c.means) m /= count;
        out.push_back(c);
    }
    return out;
}

YearSplit split_years(const Dataset& ds, int prediction_years) {
    const int j = static_cast<int>(ds.year_count());
    if (prediction_years < 1 || prediction_years > j - 2) {
        fail(Errc::InvalidHorizon, "prediction horizon p=" + std::to_string(prediction_years) +
                                       " must lie in [1, " + std::to_string(j - 2) + "] for " +
                                       std::to_string(j) + " years");
    }
    YearSplit split;
    for (int y = ds.first_year(); y <= ds.last_year(); ++y) {
        (y <= ds.last_year() - prediction_years ? split.train : split.test).push_back(y);
    }
    return split;
}

std::map<RegionYear, ClimateVector> regional_annual_means(const Dataset& ds,
                                                          const RegionAssignment& assignment,
                                                          std::span<const int> years) {
    check_years(ds, years);
    if (assignment.region_of.size() != ds.cell_count()) {
        fail(Errc::UnassignedCell, "assignment covers " + std::to_string(assignment.region_of.size()) +
                                       " cells, dataset has " + std::to_string(ds.cell_count()));
    }
    for (std::size_t c = 0; c < assignment.region_of.size(); ++c) {
        const int r = assignment.region_of[c];
        if (r < 0 || r >= assignment.region_count) {
            fail(Errc::UnassignedCell, cell_label(ds.cells()[c].lat, ds.cells()[c].lon) +
                                           " has no valid region");
        }
    }
    const auto sizes = assignment.region_sizes();
    for (std::size_t r = 0; r < sizes.size(); ++r) {
        if (sizes[r] == 0) fail(Errc::EmptyRegion, "region " + std::to_string(r) + " has no cells");
    }

    std::map<RegionYear, ClimateVector> out;
    for (int y : years) {
        std::vector<ClimateVector> sums(sizes.size(), ClimateVector{});
        for (const auto& cell : ds.cells()) {
            const auto& v = ds.values(cell.id, y);
            auto& s = sums[static_cast<std::size_t>(assignment.region(cell.id))];
            for (std::size_t i = 0; i < kNumVariables; ++i) s[i] += v[i];
        }
        for (std::size_t r = 0; r < sizes.size(); ++r) {
            for (auto& s : sums[r]) s /= static_cast<double>(sizes[r]);
            out[{static_cast<int>(r), y}] = sums[r];
        }
    }
    return out;
}

void write_climatology_csv(std::ostream& out, const Dataset& ds,
                           std::span<const ClimatologyVector> climatology) {
    out << "lat,lon";
    for (auto name : kVariableNames) out << ',' << name;
    out << '\n';
    for (const auto& c : climatology) {
        const auto& cell = ds.cell(c.cell);
        out << format_double(cell.lat) << ',' << format_double(cell.lon);
        for (double m : c.means) out << ',' << format_double(m);
        out << '\n';
    }
}

}  // namespace climreg
