#pragma once

// Trade, quote and bar records with their CSV schemas. Readers never abort on
// a bad row: malformed or invalid rows are skipped and counted per reason.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "spreadvol/coupled_wave.hpp"
#include "spreadvol/csv.hpp"
#include "spreadvol/error.hpp"

namespace spreadvol {

struct TradeRecord {
    std::int64_t timestamp_ms = 0;
    double price = 0.0;
    double size = 0.0;
};

struct QuoteRecord {
    std::int64_t timestamp_ms = 0;
    double bid = 0.0;
    double ask = 0.0;
    std::optional<double> volume;  ///< volume rate at the quote, when known
};

struct BarRecord {
    std::int64_t timestamp_ms = 0;
    double open = 0.0;
    double high = 0.0;
    double low = 0.0;
    double close = 0.0;
    double volume = 0.0;  ///< shares traded within the bar
};

/// Accepted/rejected counts of one ingested file.
struct IngestReport {
    std::size_t accepted = 0;
    std::map<std::string, std::size_t> rejected;  ///< reason -> rows

    std::size_t rejected_total() const {
        std::size_t n = 0;
        for (const auto& [_, c] : rejected) n += c;
        return n;
    }
    void reject(const std::string& reason) { ++rejected[reason]; }
};

template <class Record>
struct Ingested {
    std::vector<Record> records;
    IngestReport report;
};

enum class TimestampFormat { EpochMillis, Iso8601 };

namespace detail {

inline std::optional<int> parse_fixed_int(std::string_view s) {
    int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::optional<std::int64_t> parse_epoch_ms(std::string_view s) {
    std::int64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

// YYYY-MM-DD[T| ]HH:MM:SS[.fff][Z|+HH:MM|-HH:MM]
inline std::optional<std::int64_t> parse_iso8601_ms(std::string_view s) {
    using namespace std::chrono;
    if (s.size() < 19 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') || s[13] != ':' ||
        s[16] != ':')
        return std::nullopt;
    const auto Y = parse_fixed_int(s.substr(0, 4));
    const auto M = parse_fixed_int(s.substr(5, 2));
    const auto D = parse_fixed_int(s.substr(8, 2));
    const auto hh = parse_fixed_int(s.substr(11, 2));
    const auto mm = parse_fixed_int(s.substr(14, 2));
    const auto ss = parse_fixed_int(s.substr(17, 2));
    if (!Y || !M || !D || !hh || !mm || !ss) return std::nullopt;
    const year_month_day ymd{year{*Y}, month{static_cast<unsigned>(*M)}, day{static_cast<unsigned>(*D)}};
    if (!ymd.ok() || *hh > 23 || *mm > 59 || *ss > 60) return std::nullopt;

    std::size_t pos = 19;
    std::int64_t millis = 0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        int digits = 0;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
            if (digits < 3) millis = millis * 10 + (s[pos] - '0');
            ++digits;
            ++pos;
        }
        if (digits == 0) return std::nullopt;
        for (int d = std::min(digits, 3); d < 3; ++d) millis *= 10;
    }
    std::int64_t offset_min = 0;
    if (pos < s.size()) {
        if (s[pos] == 'Z' && pos + 1 == s.size()) {
            ++pos;
        } else if ((s[pos] == '+' || s[pos] == '-') && s.size() - pos == 6 && s[pos + 3] == ':') {
            const auto oh = parse_fixed_int(s.substr(pos + 1, 2));
            const auto om = parse_fixed_int(s.substr(pos + 4, 2));
            if (!oh || !om) return std::nullopt;
            offset_min = (s[pos] == '-' ? -1 : 1) * (*oh * 60 + *om);
            pos = s.size();
        } else {
            return std::nullopt;
        }
    }
    const auto days = sys_days{ymd}.time_since_epoch().count();
    const std::int64_t secs = static_cast<std::int64_t>(days) * 86400 + *hh * 3600 + *mm * 60 + *ss - offset_min * 60;
    return secs * 1000 + millis;
}

inline std::optional<std::int64_t> parse_timestamp(std::string_view s, TimestampFormat fmt) {
    return fmt == TimestampFormat::EpochMillis ? parse_epoch_ms(s) : parse_iso8601_ms(s);
}

/// Format of a file is decided by its first data row.
inline std::optional<TimestampFormat> detect_timestamp_format(const csv::Table& table, std::size_t column) {
    for (const auto& row : table.rows()) {
        const auto fields = csv::split(row);
        if (column >= fields.size()) continue;
        if (parse_epoch_ms(fields[column])) return TimestampFormat::EpochMillis;
        if (parse_iso8601_ms(fields[column])) return TimestampFormat::Iso8601;
        return std::nullopt;
    }
    return std::nullopt;
}

// Shared row loop: splits, checks the field count, parses the timestamp and
// enforces non-decreasing time. `build` parses the remaining fields and
// returns a rejection reason or an empty string.
template <class Record, class Build>
Ingested<Record> ingest(std::istream& in, const std::vector<std::string_view>& required, Build&& build) {
    const auto table = csv::Table::read(in);
    std::vector<std::size_t> cols;
    for (auto name : required) cols.push_back(table.require(name));
    const auto fmt = detect_timestamp_format(table, cols[0]);

    Ingested<Record> out;
    std::optional<std::int64_t> last_ts;
    for (const auto& row : table.rows()) {
        const auto fields = csv::split(row);
        if (fields.size() != table.header().size()) {
            out.report.reject("field count");
            continue;
        }
        const auto ts = fmt ? parse_timestamp(fields[cols[0]], *fmt) : std::nullopt;
        if (!ts) {
            out.report.reject("timestamp");
            continue;
        }
        if (last_ts && *ts < *last_ts) {
            out.report.reject("out of order");
            continue;
        }
        Record rec;
        rec.timestamp_ms = *ts;
        const std::string reason = build(rec, fields, cols, table);
        if (!reason.empty()) {
            out.report.reject(reason);
            continue;
        }
        last_ts = *ts;
        out.records.push_back(rec);
        ++out.report.accepted;
    }
    return out;
}

}  // namespace detail

/// Trades CSV: `timestamp,price,size`.
inline Ingested<TradeRecord> read_trades(std::istream& in) {
    return detail::ingest<TradeRecord>(
        in, {"timestamp", "price", "size"},
        [](TradeRecord& r, const auto& f, const auto& c, const csv::Table&) -> std::string {
            const auto price = csv::parse_double(f[c[1]]);
            const auto size = csv::parse_double(f[c[2]]);
            if (!price || !size) return "malformed number";
            if (!(*price > 0.0) || !(*size > 0.0)) return "non-positive value";
            r.price = *price;
            r.size = *size;
            return {};
        });
}

/// Quotes CSV: `timestamp,bid,ask`, with an optional `volume` column holding
/// the volume rate at each quote.
inline Ingested<QuoteRecord> read_quotes(std::istream& in) {
    return detail::ingest<QuoteRecord>(
        in, {"timestamp", "bid", "ask"},
        [](QuoteRecord& r, const auto& f, const auto& c, const csv::Table& t) -> std::string {
            const auto bid = csv::parse_double(f[c[1]]);
            const auto ask = csv::parse_double(f[c[2]]);
            if (!bid || !ask) return "malformed number";
            if (!(*bid > 0.0) || !(*ask > 0.0)) return "non-positive value";
            if (*ask < *bid) return "crossed quote";
            r.bid = *bid;
            r.ask = *ask;
            if (const auto vc = t.find("volume")) {
                const auto v = csv::parse_double(f[*vc]);
                if (!v) return "malformed number";
                if (!(*v >= 0.0)) return "negative volume";
                r.volume = *v;
            }
            return {};
        });
}

/// Bars CSV: `timestamp,open,high,low,close,volume`.
inline Ingested<BarRecord> read_bars(std::istream& in) {
    return detail::ingest<BarRecord>(
        in, {"timestamp", "open", "high", "low", "close", "volume"},
        [](BarRecord& r, const auto& f, const auto& c, const csv::Table&) -> std::string {
            double v[5];
            for (int i = 0; i < 5; ++i) {
                const auto x = csv::parse_double(f[c[static_cast<std::size_t>(i) + 1]]);
                if (!x) return "malformed number";
                v[i] = *x;
            }
            r.open = v[0];
            r.high = v[1];
            r.low = v[2];
            r.close = v[3];
            r.volume = v[4];
            if (!(r.low > 0.0)) return "non-positive value";
            if (!(r.volume >= 0.0)) return "negative volume";
            if (!(r.low <= std::min(r.open, r.close) && std::max(r.open, r.close) <= r.high)) return "bar range";
            return {};
        });
}

inline void write_trades_csv(std::ostream& out, const std::vector<TradeRecord>& trades) {
    out << "timestamp,price,size\n";
    for (const auto& t : trades)
        csv::write_row(out, {std::to_string(t.timestamp_ms), csv::format_double(t.price), csv::format_double(t.size)});
}

inline void write_quotes_csv(std::ostream& out, const std::vector<QuoteRecord>& quotes) {
    const bool with_volume = std::any_of(quotes.begin(), quotes.end(), [](const auto& q) { return q.volume.has_value(); });
    out << (with_volume ? "timestamp,bid,ask,volume\n" : "timestamp,bid,ask\n");
    for (const auto& q : quotes) {
        std::vector<std::string> row{std::to_string(q.timestamp_ms), csv::format_double(q.bid), csv::format_double(q.ask)};
        if (with_volume) row.push_back(csv::format_double(q.volume.value_or(0.0)));
        csv::write_row(out, row);
    }
}

inline void write_bars_csv(std::ostream& out, const std::vector<BarRecord>& bars) {
    out << "timestamp,open,high,low,close,volume\n";
    for (const auto& b : bars)
        csv::write_row(out, {std::to_string(b.timestamp_ms), csv::format_double(b.open), csv::format_double(b.high),
                             csv::format_double(b.low), csv::format_double(b.close), csv::format_double(b.volume)});
}

/// Timestamp of step i (1-based end of step) of a simulated series.
inline std::int64_t step_timestamp(std::int64_t t0_ms, double unit_ms, double dt, std::size_t i) {
    return t0_ms + static_cast<std::int64_t>(std::llround(static_cast<double>(i + 1) * dt * unit_ms));
}

/// Simulated bars in the bars schema: open is the bar's mid, close its last
/// price, volume the driving rate times the step length.
inline std::vector<BarRecord> bars_from_series(const BarSeries& series, std::int64_t t0_ms, double unit_ms) {
    std::vector<BarRecord> out;
    out.reserve(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& b = series.bars[i];
        out.push_back({step_timestamp(t0_ms, unit_ms, series.dt, i), b.s_mid, b.s_high, b.s_low, b.s_last,
                       b.volume * series.dt});
    }
    return out;
}

/// Treats each simulated bar as a quote interval: bid = low, ask = high.
inline std::vector<QuoteRecord> quotes_from_series(const BarSeries& series, std::int64_t t0_ms, double unit_ms) {
    std::vector<QuoteRecord> out;
    out.reserve(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& b = series.bars[i];
        out.push_back({step_timestamp(t0_ms, unit_ms, series.dt, i), b.s_low, b.s_high, b.volume});
    }
    return out;
}

/// One trade of fixed size at each step's last price.
inline std::vector<TradeRecord> trades_from_series(const BarSeries& series, std::int64_t t0_ms, double unit_ms,
                                                   double trade_size) {
    detail::require_positive(trade_size, "trade_size");
    std::vector<TradeRecord> out;
    out.reserve(series.size());
    for (std::size_t i = 0; i < series.size(); ++i)
        out.push_back({step_timestamp(t0_ms, unit_ms, series.dt, i), series.bars[i].s_last, trade_size});
    return out;
}

/// Assigns each quote the traded volume rate over the trailing `window`
/// (reference units): sum of sizes with timestamp in (t - window, t] / window.
inline void attach_trade_volume(std::vector<QuoteRecord>& quotes, const std::vector<TradeRecord>& trades, double window,
                                double unit_ms) {
    detail::require_positive(window, "window");
    detail::require_positive(unit_ms, "unit_ms");
    const double window_ms = window * unit_ms;
    std::size_t lo = 0;
    std::size_t hi = 0;
    double sum = 0.0;
    for (auto& q : quotes) {
        while (hi < trades.size() && trades[hi].timestamp_ms <= q.timestamp_ms) sum += trades[hi++].size;
        while (lo < hi && static_cast<double>(trades[lo].timestamp_ms) <= static_cast<double>(q.timestamp_ms) - window_ms)
            sum -= trades[lo++].size;
        q.volume = std::max(sum, 0.0) / window;
    }
}

}  // namespace spreadvol
