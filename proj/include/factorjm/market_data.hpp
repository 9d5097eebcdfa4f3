#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace factorjm {

/// Trading days per year; returns scale by this, volatilities by its root.
inline constexpr double kTradingDays = 252.0;

using Date = std::chrono::sys_days;

/// Parses an ISO-8601 calendar date (YYYY-MM-DD). Throws std::invalid_argument.
Date parse_date(std::string_view text);
std::string format_date(Date d);

/// Months since year 0, used for calendar bucketing.
int month_ordinal(Date d);
/// Quarter ordinal (4 per year).
int quarter_ordinal(Date d);
Date add_months(Date d, int months);

/// Error raised for malformed or inconsistent market data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dated daily simple returns. Dates strictly increase; values exceed -1.
class ReturnSeries {
public:
    ReturnSeries() = default;
    ReturnSeries(std::vector<Date> dates, std::vector<double> values);

    const std::vector<Date>& dates() const noexcept { return dates_; }
    const std::vector<double>& values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }
    double operator[](std::size_t i) const { return values_[i]; }

    /// Rows with first <= date < last.
    ReturnSeries slice(Date first, Date last) const;
    ReturnSeries slice_index(std::size_t begin, std::size_t end) const;

private:
    std::vector<Date> dates_;
    std::vector<double> values_;
};

/// Cumulative index levels; level[0] is 1.0 and precedes the first return date.
struct PriceIndex {
    std::vector<Date> dates;   // one per return; level i+1 is the close of dates[i]
    std::vector<double> levels;
};

/// Columns that share one calendar. Column names are unique.
class AlignedPanel {
public:
    AlignedPanel() = default;
    explicit AlignedPanel(std::vector<Date> dates);

    void add_column(const std::string& name, std::vector<double> values);

    const std::vector<Date>& dates() const noexcept { return dates_; }
    std::size_t rows() const noexcept { return dates_.size(); }
    const std::vector<std::string>& names() const noexcept { return names_; }
    bool has(const std::string& name) const { return columns_.count(name) > 0; }
    const std::vector<double>& column(const std::string& name) const;
    /// Column as a ReturnSeries; validates the return invariants.
    ReturnSeries series(const std::string& name) const;

    /// Inner join on dates; column names must not collide.
    static AlignedPanel join(const AlignedPanel& a, const AlignedPanel& b);
    AlignedPanel select_rows(std::size_t begin, std::size_t end) const;

private:
    std::vector<Date> dates_;
    std::vector<std::string> names_;
    std::map<std::string, std::vector<double>> columns_;
};

enum class MissingPolicy {
    drop_row,      // rows with a missing required value are removed
    forward_fill,  // missing values repeat the last observation
};

struct LoadReport {
    std::size_t rows_read = 0;
    std::size_t rows_dropped = 0;
    std::size_t cells_filled = 0;
};

/// Reads a CSV with a `date` column. `schema` maps panel column names to CSV
/// header names. Lines starting with '#' are skipped. Rows are sorted by date.
AlignedPanel load_panel(const std::string& path,
                        const std::map<std::string, std::string>& schema,
                        MissingPolicy policy = MissingPolicy::drop_row,
                        LoadReport* report = nullptr);

/// Parses CSV text already in memory (same contract as load_panel).
AlignedPanel parse_panel(std::string_view text,
                         const std::map<std::string, std::string>& schema,
                         MissingPolicy policy = MissingPolicy::drop_row,
                         LoadReport* report = nullptr);

/// Converts total-return levels to daily simple returns; drops the first row.
AlignedPanel levels_to_returns(const AlignedPanel& levels, const std::vector<std::string>& columns);

void write_panel_csv(const AlignedPanel& panel, const std::string& path,
                     const std::string& header_comment = {});

ReturnSeries active_returns(const ReturnSeries& factor, const ReturnSeries& market);

/// r[t] - rf[t] / 252 where rf holds annualized yields in decimals.
ReturnSeries excess_returns(const ReturnSeries& r, const ReturnSeries& rf);

PriceIndex cumulative_index(const ReturnSeries& r);

}  // namespace factorjm
