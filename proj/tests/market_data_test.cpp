#include <gtest/gtest.h>

#include <sstream>

#include "spreadvol/coupled_wave.hpp"
#include "spreadvol/market_data.hpp"

using namespace spreadvol;

TEST(Timestamps, Iso8601AndEpoch) {
    EXPECT_EQ(*detail::parse_iso8601_ms("2016-03-01T14:30:00Z"), 1456842600000);
    EXPECT_EQ(*detail::parse_iso8601_ms("2016-03-01 14:30:00"), 1456842600000);
    EXPECT_EQ(*detail::parse_iso8601_ms("2016-03-01T14:30:00.25-05:00"), 1456860600250);
    EXPECT_FALSE(detail::parse_iso8601_ms("2016-02-30T00:00:00Z"));
    EXPECT_FALSE(detail::parse_iso8601_ms("2016-03-01T14:30"));
    EXPECT_EQ(*detail::parse_epoch_ms("1456842600000"), 1456842600000);
}

TEST(Trades, AutoDetectAndRejectCounts) {
    std::istringstream in(
        "timestamp,price,size\n"
        "2016-03-01T14:30:00Z,100.5,200\n"
        "2016-03-01T14:30:01Z,100.6,-5\n"
        "2016-03-01T14:29:59Z,100.6,10\n"
        "1456842602000,100.7,10\n"
        "2016-03-01T14:30:02Z,abc,10\n"
        "2016-03-01T14:30:03Z,100.8\n"
        "2016-03-01T14:30:04Z,100.9,300\n");
    const auto got = read_trades(in);
    ASSERT_EQ(got.records.size(), 2u);
    EXPECT_EQ(got.report.accepted, 2u);
    EXPECT_EQ(got.report.rejected_total(), 5u);
    EXPECT_EQ(got.report.rejected.at("non-positive value"), 1u);
    EXPECT_EQ(got.report.rejected.at("out of order"), 1u);
    EXPECT_EQ(got.report.rejected.at("timestamp"), 1u);
    EXPECT_EQ(got.report.rejected.at("malformed number"), 1u);
    EXPECT_EQ(got.report.rejected.at("field count"), 1u);
    EXPECT_EQ(got.records[1].size, 300.0);
}

TEST(Quotes, CrossedQuotesAreCounted) {
    std::istringstream in("timestamp,bid,ask\n1000,10,10.5\n2000,10.6,10.5\n3000,10.1,10.1\n");
    const auto got = read_quotes(in);
    EXPECT_EQ(got.records.size(), 2u);
    EXPECT_EQ(got.report.rejected.at("crossed quote"), 1u);
    EXPECT_FALSE(got.records[0].volume);
}

TEST(Quotes, MissingColumnNamesIt) {
    std::istringstream in("timestamp,bid\n1000,10\n");
    try {
        read_quotes(in);
        FAIL();
    } catch (const InvalidInputError& e) {
        EXPECT_NE(std::string(e.what()).find("'ask'"), std::string::npos);
    }
}

TEST(Bars, RangeInvariant) {
    std::istringstream in(
        "timestamp,open,high,low,close,volume\n"
        "0,10,11,9,10.5,100\n"
        "1,10,10.2,9,10.5,100\n"
        "2,10,11,9,10.5,-1\n");
    const auto got = read_bars(in);
    EXPECT_EQ(got.records.size(), 1u);
    EXPECT_EQ(got.report.rejected.at("bar range"), 1u);
    EXPECT_EQ(got.report.rejected.at("negative volume"), 1u);
}

TEST(Series, CsvRoundTripIsExact) {
    CoupledWaveParams p;
    p.sigma_step = 0.01;
    p.xi_std = 0.1;
    p.kappa_std = 0.1;
    p.seed = 3;
    const auto series = simulate_path(p, 100.0, 50);
    const auto bars = bars_from_series(series, 0, 1000.0);
    std::stringstream io;
    write_bars_csv(io, bars);
    const auto back = read_bars(io);
    ASSERT_EQ(back.records.size(), bars.size());
    for (std::size_t i = 0; i < bars.size(); ++i) {
        EXPECT_EQ(back.records[i].high, bars[i].high);
        EXPECT_EQ(back.records[i].timestamp_ms, static_cast<std::int64_t>(1000 * (i + 1)));
    }

    const auto quotes = quotes_from_series(series, 0, 1000.0);
    std::stringstream qio;
    write_quotes_csv(qio, quotes);
    const auto qback = read_quotes(qio);
    ASSERT_EQ(qback.records.size(), quotes.size());
    EXPECT_TRUE(qback.records[0].volume.has_value());
}

TEST(Series, TrailingVolumeWindow) {
    std::vector<TradeRecord> trades{{1000, 10, 100}, {2000, 10, 200}, {3000, 10, 300}, {4000, 10, 400}};
    std::vector<QuoteRecord> quotes{{2000, 9, 11, {}}, {4000, 9, 11, {}}};
    attach_trade_volume(quotes, trades, 2.0, 1000.0);
    EXPECT_DOUBLE_EQ(*quotes[0].volume, 150.0);
    EXPECT_DOUBLE_EQ(*quotes[1].volume, 350.0);
}
