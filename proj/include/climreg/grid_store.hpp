#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace climreg {

// Canonical ordering of the climate variables; every 7-vector uses it.
enum class ClimateVariable : std::uint8_t {
    AirTemperature,     // degC
    PrecipitableWater,  // kg/m^2
    Precipitation,      // mm/day
    RelativeHumidity,   // %
    SeaLevelPressure,   // hPa
    ZonalWind,          // m/s
    MeridionalWind,     // m/s
};

inline constexpr std::size_t kNumVariables = 7;

using ClimateVector = std::array<double, kNumVariables>;

inline constexpr std::array<ClimateVariable, kNumVariables> kAllVariables = {
    ClimateVariable::AirTemperature,   ClimateVariable::PrecipitableWater,
    ClimateVariable::Precipitation,    ClimateVariable::RelativeHumidity,
    ClimateVariable::SeaLevelPressure, ClimateVariable::ZonalWind,
    ClimateVariable::MeridionalWind,
};

constexpr std::size_t index_of(ClimateVariable v) noexcept { return static_cast<std::size_t>(v); }

std::string_view variable_name(ClimateVariable v) noexcept;
std::optional<ClimateVariable> parse_variable(std::string_view name) noexcept;

// Header of the gridded CSV format, without line terminator.
inline constexpr std::string_view kCsvHeader =
    "lat,lon,year,air_temperature,precipitable_water,precipitation,relative_humidity,"
    "sea_level_pressure,zonal_wind,meridional_wind";

inline constexpr double kDefaultResolution = 2.5;

// Index of a cell inside its Dataset. Cells are kept in (lat, lon) order so
// the id is stable under any permutation of the input rows.
struct CellId {
    std::uint32_t value = 0;
    friend constexpr auto operator<=>(CellId, CellId) = default;
};

struct GridCell {
    CellId id;
    double lat = 0.0;  // degrees north, [-90, 90]
    double lon = 0.0;  // degrees east, [0, 360)
};

struct AnnualRecord {
    CellId cell;
    int year = 0;
    ClimateVector values{};
};

struct ClimatologyVector {
    CellId cell;
    ClimateVector means{};
};

// Raw row before panel validation. Used by ingestion and by generators.
struct RawRecord {
    double lat = 0.0;
    double lon = 0.0;
    int year = 0;
    ClimateVector values{};
    std::size_t line = 0;  // 1-based source line, 0 if not from a file
};

// Immutable rectangular panel: every cell has a record for every year.
class Dataset {
public:
    static Dataset from_records(std::span<const RawRecord> rows,
                                double resolution = kDefaultResolution);

    std::span<const GridCell> cells() const noexcept { return cells_; }
    std::size_t cell_count() const noexcept { return cells_.size(); }
    const GridCell& cell(CellId id) const { return cells_.at(id.value); }

    int first_year() const noexcept { return first_year_; }
    int last_year() const noexcept { return last_year_; }
    std::size_t year_count() const noexcept {
        return static_cast<std::size_t>(last_year_ - first_year_ + 1);
    }
    std::vector<int> years() const;
    double resolution() const noexcept { return resolution_; }

    const ClimateVector& values(CellId id, int year) const;
    std::size_t record_count() const noexcept { return values_.size(); }
    std::vector<AnnualRecord> records() const;

    std::optional<CellId> find_cell(double lat, double lon) const;

    // Canonical CSV export (cells in id order, years ascending).
    void write_csv(std::ostream& out) const;

private:
    Dataset() = default;

    std::vector<GridCell> cells_;
    std::vector<ClimateVector> values_;  // [cell * year_count + year_offset]
    int first_year_ = 0;
    int last_year_ = 0;
    double resolution_ = kDefaultResolution;
};

// Hard partition of a dataset's cells into regions [0, region_count).
struct RegionAssignment {
    std::vector<int> region_of;  // indexed by CellId::value
    int region_count = 0;

    int region(CellId id) const { return region_of.at(id.value); }
    std::vector<std::size_t> region_sizes() const;
};

using YearSet = std::vector<int>;

struct YearSplit {
    YearSet train;
    YearSet test;
};

Dataset ingest_csv(std::istream& source, double resolution = kDefaultResolution);
Dataset ingest_csv_file(const std::string& path, double resolution = kDefaultResolution);

std::vector<ClimatologyVector> long_term_means(const Dataset& ds, std::span<const int> years);

YearSplit split_years(const Dataset& ds, int prediction_years);

using RegionYear = std::pair<int, int>;
std::map<RegionYear, ClimateVector> regional_annual_means(const Dataset& ds,
                                                          const RegionAssignment& assignment,
                                                          std::span<const int> years);

void write_climatology_csv(std::ostream& out, const Dataset& ds,
                           std::span<const ClimatologyVector> climatology);

// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double value);

}  // namespace climreg
