#include "factorjm/market_data.hpp"

#include "factorjm/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

namespace factorjm {

using namespace std::chrono;

Date parse_date(std::string_view text) {
    text = io::trim(text);
    int y = 0;
    unsigned m = 0, d = 0;
    auto bad = [&] { return std::invalid_argument("unparseable date '" + std::string(text) + "'"); };
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw bad();
    auto parse_part = [&](std::size_t pos, std::size_t len, auto& out) {
        auto [p, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
        if (ec != std::errc{} || p != text.data() + pos + len) throw bad();
    };
    parse_part(0, 4, y);
    parse_part(5, 2, m);
    parse_part(8, 2, d);
    const year_month_day ymd{year{y}, month{m}, day{d}};
    if (!ymd.ok()) throw bad();
    return sys_days{ymd};
}

std::string format_date(Date d) {
    const year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

int month_ordinal(Date d) {
    const year_month_day ymd{d};
    return static_cast<int>(ymd.year()) * 12 + static_cast<int>(static_cast<unsigned>(ymd.month())) - 1;
}

int quarter_ordinal(Date d) {
    return month_ordinal(d) / 3;
}

Date add_months(Date d, int n) {
    const year_month_day ymd{d};
    auto shifted = ymd.year() / ymd.month() / day{1};
    shifted += months{n};
    const auto last = year_month_day_last{shifted.year(), month_day_last{shifted.month()}};
    const auto dd = std::min(ymd.day(), last.day());
    return sys_days{shifted.year() / shifted.month() / dd};
}

// ---------------------------------------------------------------------------

ReturnSeries::ReturnSeries(std::vector<Date> dates, std::vector<double> values)
    : dates_(std::move(dates)), values_(std::move(values)) {
    if (dates_.size() != values_.size())
        throw DataError("ReturnSeries: dates and values differ in length");
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (i > 0 && !(dates_[i - 1] < dates_[i]))
            throw DataError("ReturnSeries: dates not strictly increasing at " + format_date(dates_[i]));
        if (!std::isfinite(values_[i]) || values_[i] <= -1.0)
            throw DataError("ReturnSeries: invalid return at " + format_date(dates_[i]));
    }
}

ReturnSeries ReturnSeries::slice(Date first, Date last) const {
    const auto b = std::lower_bound(dates_.begin(), dates_.end(), first) - dates_.begin();
    const auto e = std::lower_bound(dates_.begin(), dates_.end(), last) - dates_.begin();
    return slice_index(static_cast<std::size_t>(b), static_cast<std::size_t>(std::max(b, e)));
}

ReturnSeries ReturnSeries::slice_index(std::size_t begin, std::size_t end) const {
    end = std::min(end, size());
    begin = std::min(begin, end);
    return ReturnSeries({dates_.begin() + begin, dates_.begin() + end},
                        {values_.begin() + begin, values_.begin() + end});
}

// ---------------------------------------------------------------------------

AlignedPanel::AlignedPanel(std::vector<Date> dates) : dates_(std::move(dates)) {
    for (std::size_t i = 1; i < dates_.size(); ++i)
        if (!(dates_[i - 1] < dates_[i]))
            throw DataError("AlignedPanel: dates not strictly increasing at " + format_date(dates_[i]));
}

void AlignedPanel::add_column(const std::string& name, std::vector<double> values) {
    if (values.size() != dates_.size())
        throw DataError("AlignedPanel: column '" + name + "' length does not match calendar");
    if (has(name)) throw DataError("AlignedPanel: duplicate column '" + name + "'");
    names_.push_back(name);
    columns_.emplace(name, std::move(values));
}

const std::vector<double>& AlignedPanel::column(const std::string& name) const {
    auto it = columns_.find(name);
    if (it == columns_.end()) throw DataError("AlignedPanel: missing column '" + name + "'");
    return it->second;
}

ReturnSeries AlignedPanel::series(const std::string& name) const {
    return ReturnSeries(dates_, column(name));
}

AlignedPanel AlignedPanel::join(const AlignedPanel& a, const AlignedPanel& b) {
    std::vector<std::size_t> ia, ib;
    std::vector<Date> common;
    std::size_t i = 0, j = 0;
    while (i < a.rows() && j < b.rows()) {
        if (a.dates_[i] < b.dates_[j]) {
            ++i;
        } else if (b.dates_[j] < a.dates_[i]) {
            ++j;
        } else {
            common.push_back(a.dates_[i]);
            ia.push_back(i++);
            ib.push_back(j++);
        }
    }
    if (common.empty()) throw DataError("join: calendars have no dates in common");
    AlignedPanel out(common);
    auto copy_cols = [&out](const AlignedPanel& src, const std::vector<std::size_t>& idx) {
        for (const auto& name : src.names_) {
            const auto& col = src.column(name);
            std::vector<double> v(idx.size());
            for (std::size_t k = 0; k < idx.size(); ++k) v[k] = col[idx[k]];
            out.add_column(name, std::move(v));
        }
    };
    copy_cols(a, ia);
    copy_cols(b, ib);
    return out;
}

AlignedPanel AlignedPanel::select_rows(std::size_t begin, std::size_t end) const {
    end = std::min(end, rows());
    begin = std::min(begin, end);
    AlignedPanel out({dates_.begin() + begin, dates_.begin() + end});
    for (const auto& name : names_) {
        const auto& col = column(name);
        out.add_column(name, {col.begin() + begin, col.begin() + end});
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

bool is_missing_token(std::string_view s) {
    return s.empty() || s == "." || s == "NA" || s == "N/A" || s == "nan" || s == "NaN" || s == "null";
}

double parse_number(std::string_view s, std::size_t row, const std::string& column) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) {
        throw DataError("row " + std::to_string(row) + ": non-numeric value '" + std::string(s) +
                        "' in column '" + column + "'");
    }
    return v;
}

}  // namespace

AlignedPanel parse_panel(std::string_view text, const std::map<std::string, std::string>& schema,
                         MissingPolicy policy, LoadReport* report) {
    std::vector<std::string> header;
    struct Row {
        Date date;
        std::size_t line;
        std::vector<std::optional<double>> cells;
    };
    std::vector<Row> rows;
    std::vector<std::size_t> col_index;  // schema order -> csv column
    std::vector<std::string> out_names;
    std::size_t date_col = 0;
    std::size_t data_row = 0;

    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
        line = io::trim(line);
        if (line.empty() || line.front() == '#') continue;
        auto cells = io::split_csv_line(line);
        if (header.empty()) {
            header = std::move(cells);
            auto find = [&](const std::string& h) -> std::size_t {
                auto it = std::find(header.begin(), header.end(), h);
                if (it == header.end()) throw DataError("missing required column '" + h + "'");
                return static_cast<std::size_t>(it - header.begin());
            };
            date_col = find("date");
            for (const auto& [name, csv_name] : schema) {
                out_names.push_back(name);
                col_index.push_back(find(csv_name));
            }
            continue;
        }
        if (cells.size() != header.size())
            throw DataError("row " + std::to_string(data_row) + ": expected " + std::to_string(header.size()) +
                            " cells, got " + std::to_string(cells.size()));
        Row r;
        r.line = data_row;
        try {
            r.date = parse_date(cells[date_col]);
        } catch (const std::invalid_argument& e) {
            throw DataError("row " + std::to_string(data_row) + ": " + e.what());
        }
        for (std::size_t c = 0; c < col_index.size(); ++c) {
            const auto& s = cells[col_index[c]];
            if (is_missing_token(s)) {
                r.cells.emplace_back(std::nullopt);
            } else {
                r.cells.emplace_back(parse_number(s, data_row, schema.at(out_names[c])));
            }
        }
        rows.push_back(std::move(r));
        ++data_row;
    }
    if (header.empty()) throw DataError("empty CSV input");

    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].date == rows[i - 1].date)
            throw DataError("row " + std::to_string(rows[i].line) + ": duplicate date " + format_date(rows[i].date));

    LoadReport rep;
    rep.rows_read = rows.size();
    std::vector<Date> dates;
    std::vector<std::vector<double>> cols(out_names.size());
    std::vector<std::optional<double>> last(out_names.size());
    for (const auto& r : rows) {
        bool complete = true;
        for (std::size_t c = 0; c < r.cells.size(); ++c)
            if (!r.cells[c] && !(policy == MissingPolicy::forward_fill && last[c])) complete = false;
        if (policy == MissingPolicy::forward_fill) {
            for (std::size_t c = 0; c < r.cells.size(); ++c)
                if (r.cells[c]) last[c] = r.cells[c];
        }
        if (!complete) {
            ++rep.rows_dropped;
            continue;
        }
        dates.push_back(r.date);
        for (std::size_t c = 0; c < r.cells.size(); ++c) {
            if (r.cells[c]) {
                cols[c].push_back(*r.cells[c]);
            } else {
                cols[c].push_back(*last[c]);
                ++rep.cells_filled;
            }
        }
    }
    if (dates.empty()) throw DataError("no complete rows after alignment");
    AlignedPanel panel(std::move(dates));
    for (std::size_t c = 0; c < out_names.size(); ++c) panel.add_column(out_names[c], std::move(cols[c]));
    if (report) *report = rep;
    return panel;
}

AlignedPanel load_panel(const std::string& path, const std::map<std::string, std::string>& schema,
                        MissingPolicy policy, LoadReport* report) {
    std::string text;
    try {
        text = io::read_text_file(path);
    } catch (const std::runtime_error& e) {
        throw DataError(e.what());
    }
    try {
        return parse_panel(text, schema, policy, report);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

AlignedPanel levels_to_returns(const AlignedPanel& levels, const std::vector<std::string>& columns) {
    if (levels.rows() < 2) throw DataError("levels_to_returns: need at least two rows");
    AlignedPanel out({levels.dates().begin() + 1, levels.dates().end()});
    for (const auto& name : levels.names()) {
        const auto& col = levels.column(name);
        const bool convert = std::find(columns.begin(), columns.end(), name) != columns.end();
        std::vector<double> v(col.size() - 1);
        for (std::size_t i = 1; i < col.size(); ++i) {
            if (convert) {
                if (!(col[i - 1] > 0.0) || !(col[i] > 0.0))
                    throw DataError("levels_to_returns: non-positive level in '" + name + "' at " +
                                    format_date(levels.dates()[i]));
                v[i - 1] = col[i] / col[i - 1] - 1.0;
            } else {
                v[i - 1] = col[i];
            }
        }
        out.add_column(name, std::move(v));
    }
    return out;
}

void write_panel_csv(const AlignedPanel& panel, const std::string& path, const std::string& header_comment) {
    std::ostringstream os;
    if (!header_comment.empty()) os << "# " << header_comment << '\n';
    os << "date";
    for (const auto& n : panel.names()) os << ',' << n;
    os << '\n';
    for (std::size_t i = 0; i < panel.rows(); ++i) {
        os << format_date(panel.dates()[i]);
        for (const auto& n : panel.names()) os << ',' << io::format_number(panel.column(n)[i]);
        os << '\n';
    }
    io::write_text_file(path, os.str());
}

namespace {
void require_same_calendar(const ReturnSeries& a, const ReturnSeries& b, const char* what) {
    if (a.dates() != b.dates()) throw DataError(std::string(what) + ": calendar mismatch");
}
}  // namespace

ReturnSeries active_returns(const ReturnSeries& factor, const ReturnSeries& market) {
    require_same_calendar(factor, market, "active_returns");
    std::vector<double> v(factor.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = factor[i] - market[i];
    return ReturnSeries(factor.dates(), std::move(v));
}

ReturnSeries excess_returns(const ReturnSeries& r, const ReturnSeries& rf) {
    require_same_calendar(r, rf, "excess_returns");
    std::vector<double> v(r.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = r[i] - rf[i] / kTradingDays;
    return ReturnSeries(r.dates(), std::move(v));
}

PriceIndex cumulative_index(const ReturnSeries& r) {
    PriceIndex p;
    p.dates = r.dates();
    p.levels.reserve(r.size() + 1);
    double level = 1.0;
    p.levels.push_back(level);
    for (double x : r.values()) {
        if (!(x > -1.0)) throw DataError("cumulative_index: return <= -1");
        level *= 1.0 + x;
        p.levels.push_back(level);
    }
    return p;
}

}  // namespace factorjm
