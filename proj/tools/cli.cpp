#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <numbers>
#include <sstream>

#include "spreadvol/spreadvol.hpp"

namespace spreadvol::cli {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Configuration schema

enum class Kind { Int, Double, String, Bool, Duration, DoubleList };

struct Key {
    std::string name;
    Kind kind;
    Json def;
    std::string help;
};

const std::vector<std::string> kCommands{"simulate", "curve", "calibrate", "scale", "optimize"};

const std::vector<Key>& global_keys() {
    static const std::vector<Key> keys{
        {"seed", Kind::Int, 42, "random seed"},
        {"out", Kind::String, ".", "output directory"},
        {"quantile", Kind::Double, 0.9, "spread quantile level"},
        {"horizon", Kind::Duration, "1", "bar horizon T (e.g. 60s, 1m, 1d; bare numbers are reference units)"},
        {"unit_ms", Kind::Double, 1000.0, "milliseconds per reference time unit"},
    };
    return keys;
}

const std::vector<Key>& command_keys(const std::string& cmd) {
    static const std::map<std::string, std::vector<Key>> keys{
        {"simulate",
         {
             {"steps", Kind::Int, 1000, "number of steps"},
             {"s0", Kind::Double, 100.0, "initial price"},
             {"sigma", Kind::Double, 0.001, "mid-price volatility per sqrt(reference unit)"},
             {"dt", Kind::Double, 1.0, "step length in reference units"},
             {"xi_mean", Kind::Double, 0.0, "mean of the diagonal split xi"},
             {"xi_std", Kind::Double, 0.05, "standard deviation of xi"},
             {"kappa_mean", Kind::Double, 0.0, "mean of the coupling kappa"},
             {"kappa_std", Kind::Double, 0.05, "standard deviation of kappa"},
             {"tau0", Kind::Double, 1.0, "time constant tau0"},
             {"rule", Kind::String, "uniform", "last-price rule: uniform | normal"},
             {"drive", Kind::String, "none", "volume drive: none | bid_ask | bar"},
             {"volume_median", Kind::Double, 1000.0, "median volume rate of the drive"},
             {"volume_log_std", Kind::Double, 1.0, "log-volume standard deviation of the drive"},
             {"lambda", Kind::Double, 2.0, "drive risk multiplier lambda"},
             {"rho", Kind::Double, 1.0, "drive impact multiplier rho"},
             {"n", Kind::Double, 100.0, "average trade size n"},
             {"trade_size", Kind::Double, 100.0, "trade size written to trades.csv"},
             {"write_quotes", Kind::Bool, false, "also write quotes.csv"},
             {"write_trades", Kind::Bool, false, "also write trades.csv"},
             {"t0_ms", Kind::Int, 0, "timestamp of the path start, epoch ms"},
         }},
        {"curve",
         {
             {"input", Kind::String, "", "quotes or bars CSV"},
             {"source", Kind::String, "quotes", "input kind: quotes | bars"},
             {"trades", Kind::String, "", "trades CSV supplying quote volume rates"},
             {"volume_window", Kind::Duration, "60", "trailing window for trade volume rates"},
             {"buckets", Kind::Int, 25, "number of volume buckets"},
             {"bucket_mode", Kind::String, "log_percentile", "log_percentile | log | linear"},
             {"p_lo", Kind::Double, 0.01, "lower volume percentile"},
             {"p_hi", Kind::Double, 0.99, "upper volume percentile"},
             {"v_lo", Kind::Double, 0.0, "lower volume edge for log/linear buckets"},
             {"v_hi", Kind::Double, 0.0, "upper volume edge for log/linear buckets"},
             {"min_count", Kind::Int, 20, "buckets below this count are flagged"},
             {"relative", Kind::Bool, true, "divide spreads by the mid price"},
         }},
        {"calibrate",
         {
             {"curve", Kind::String, "", "curve CSV"},
             {"law", Kind::String, "bid_ask", "bid_ask | bar"},
             {"trades", Kind::String, "", "trades CSV for n and sigma"},
             {"flow_window", Kind::Duration, "0", "window for flow statistics; 0 uses the whole file"},
             {"n", Kind::Double, 0.0, "average trade size (overrides trades)"},
             {"sigma", Kind::Double, 0.0, "volatility per sqrt(reference unit) (overrides trades)"},
             {"tau0", Kind::Double, 1.0, "fixed time constant tau0"},
             {"price", Kind::Double, 0.0, "price scale of a money curve; 0 for relative curves"},
             {"strict_product", Kind::Bool, false, "report rho * tau0 as the fitted quantity"},
             {"include_flagged", Kind::Bool, false, "fit low-count buckets too"},
             {"min_count", Kind::Int, 20, "buckets below this count are flagged"},
             {"max_iterations", Kind::Int, 500, "iteration limit"},
         }},
        {"scale",
         {
             {"surface", Kind::Bool, false, "write the (T, V) bar surface instead"},
             {"base_spread", Kind::Double, 0.0, "spread at the base horizon"},
             {"eta", Kind::Double, 0.0, "last-price volatility at the base horizon"},
             {"lambda", Kind::Double, 1.0, "risk multiplier lambda"},
             {"horizons", Kind::DoubleList, Json::array(), "target horizons (reference units)"},
             {"t_max", Kind::Double, 0.0, "largest target horizon when no list is given"},
             {"t_points", Kind::Int, 20, "number of horizons"},
             {"t_min", Kind::Double, 0.0, "smallest surface horizon"},
             {"rho", Kind::Double, 1.0, "impact multiplier rho (surface)"},
             {"sigma", Kind::Double, 0.01, "volatility per sqrt(reference unit) (surface)"},
             {"n", Kind::Double, 100.0, "average trade size (surface)"},
             {"tau0", Kind::Double, 1.0, "time constant tau0 (surface)"},
             {"price", Kind::Double, 1.0, "price s (surface)"},
             {"v_min", Kind::Double, 1.0, "smallest surface volume"},
             {"v_max", Kind::Double, 1e4, "largest surface volume"},
             {"v_points", Kind::Int, 50, "number of surface volumes"},
         }},
        {"optimize",
         {
             {"calibration", Kind::String, "", "calibration JSON from the calibrate command"},
             {"mode", Kind::String, "auto", "auto | bid_ask | bar"},
             {"a", Kind::Double, 10.0, "bid-ask coefficient a when no calibration is given"},
             {"floor", Kind::Double, 0.0, "bar floor lambda sigma_T when no calibration is given"},
             {"cubic", Kind::Double, 0.0, "bar cubic coefficient when no calibration is given"},
             {"commission", Kind::Double, 0.0, "commission per round trip, spread units"},
             {"lambda0", Kind::Double, 1.0, "execution scale lambda0"},
             {"lambda_ref", Kind::Double, 0.0, "lambda of the reference curve; 0 picks the calibrated value or 1"},
             {"lambda_max", Kind::Double, 0.0, "search bound; 0 picks max(10 lambda0, 2 lambda_ref)"},
             {"v_min", Kind::Double, 0.1, "smallest dimensionless volume"},
             {"v_max", Kind::Double, 10.0, "largest dimensionless volume"},
             {"v_points", Kind::Int, 100, "number of volume points"},
             {"v_spacing", Kind::String, "linear", "linear | log"},
         }},
    };
    return keys.at(cmd);
}

std::string dashed(std::string s) {
    std::replace(s.begin(), s.end(), '_', '-');
    return s;
}

std::string env_name(const std::string& key) {
    std::string s = "SPREADVOL_" + key;
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

double parse_number(const std::string& text, const std::string& what) {
    const auto v = csv::parse_double(text);
    if (!v || !std::isfinite(*v)) throw InvalidInputError(what + ": expected a number, got '" + text + "'");
    return *v;
}

Json from_text(const Key& key, const std::string& text, const std::string& origin) {
    const std::string what = origin + " '" + key.name + "'";
    switch (key.kind) {
        case Kind::Int: {
            std::int64_t v = 0;
            const auto t = csv::trim(text);
            const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
            if (res.ec != std::errc() || res.ptr != t.data() + t.size())
                throw InvalidInputError(what + ": expected an integer, got '" + text + "'");
            return v;
        }
        case Kind::Double:
            return parse_number(text, what);
        case Kind::String:
            return text;
        case Kind::Bool: {
            std::string t(csv::trim(text));
            for (auto& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
            if (t == "false" || t == "0" || t == "no" || t == "off") return false;
            throw InvalidInputError(what + ": expected a boolean, got '" + text + "'");
        }
        case Kind::Duration:
            return text;
        case Kind::DoubleList: {
            Json arr = Json::array();
            if (csv::trim(text).empty()) return arr;
            for (auto f : csv::split(text)) arr.push_back(parse_number(std::string(f), what));
            return arr;
        }
    }
    return nullptr;
}

Json from_json(const Key& key, const Json& v, const std::string& origin) {
    const std::string what = origin + " '" + key.name + "'";
    switch (key.kind) {
        case Kind::Int:
            if (!v.is_number_integer()) throw InvalidInputError(what + ": expected an integer");
            return v;
        case Kind::Double:
            if (!v.is_number()) throw InvalidInputError(what + ": expected a number");
            return v.get<double>();
        case Kind::String:
            if (!v.is_string()) throw InvalidInputError(what + ": expected a string");
            return v;
        case Kind::Bool:
            if (!v.is_boolean()) throw InvalidInputError(what + ": expected a boolean");
            return v;
        case Kind::Duration:
            if (v.is_number()) return csv::format_double(v.get<double>());
            if (!v.is_string()) throw InvalidInputError(what + ": expected a duration");
            return v;
        case Kind::DoubleList: {
            if (v.is_string()) return from_text(key, v.get<std::string>(), origin);
            if (!v.is_array()) throw InvalidInputError(what + ": expected a list of numbers");
            Json arr = Json::array();
            for (const auto& x : v) {
                if (!x.is_number()) throw InvalidInputError(what + ": expected a list of numbers");
                arr.push_back(x.get<double>());
            }
            return arr;
        }
    }
    return nullptr;
}

const Key* find_key(const std::vector<Key>& keys, const std::string& name) {
    for (const auto& k : keys)
        if (k.name == name) return &k;
    return nullptr;
}

// Flag values collected by the parser, keyed by config key.
struct FlagValues {
    std::map<std::string, std::string> text;
    std::map<std::string, bool> flags;
    std::map<std::string, CLI::Option*> options;

    std::optional<std::string> get(const Key& key) const {
        const auto it = options.find(key.name);
        if (it == options.end() || it->second->count() == 0) return std::nullopt;
        if (key.kind == Kind::Bool) return flags.at(key.name) ? "true" : "false";
        return text.at(key.name);
    }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("cannot read '" + path + "'");
    return ss.str();
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
        throw Error("SHA-256 computation failed");
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

/// Resolved configuration of one command: defaults < file < environment < flags.
class Config {
public:
    Config(const std::string& cmd, const FlagValues& global_flags, const FlagValues& cmd_flags, const EnvLookup& env) {
        const auto& gkeys = global_keys();
        const auto& ckeys = command_keys(cmd);
        for (const auto& k : gkeys) values_[k.name] = k.def;
        for (const auto& k : ckeys) values_[k.name] = k.def;

        std::optional<std::string> config_path = global_flags.get({"config", Kind::String, "", ""});
        if (!config_path) config_path = env(env_name("config"));
        if (config_path && !config_path->empty()) {
            config_path_ = *config_path;
            apply_file(cmd, *config_path);
        }
        for (const auto* keys : {&gkeys, &ckeys})
            for (const auto& k : *keys)
                if (auto v = env(env_name(k.name))) values_[k.name] = from_text(k, *v, "environment variable " + env_name(k.name));
        for (const auto& k : gkeys)
            if (auto v = global_flags.get(k)) values_[k.name] = from_text(k, *v, "flag");
        for (const auto& k : ckeys)
            if (auto v = cmd_flags.get(k)) values_[k.name] = from_text(k, *v, "flag");

        const double unit_ms = number("unit_ms");
        if (!(unit_ms > 0.0)) throw InvalidInputError("unit_ms must be positive");
        for (const auto* keys : {&gkeys, &ckeys})
            for (const auto& k : *keys)
                if (k.kind == Kind::Duration) values_[k.name] = parse_duration(values_[k.name].get<std::string>(), unit_ms);
        if (integer("seed") < 0) throw InvalidInputError("seed must be non-negative");
        const double q = number("quantile");
        if (!(q > 0.0 && q <= 1.0)) throw InvalidInputError("quantile must lie in (0, 1]");
    }

    double number(const std::string& k) const { return values_.at(k).get<double>(); }
    std::int64_t integer(const std::string& k) const { return values_.at(k).get<std::int64_t>(); }
    std::string string(const std::string& k) const { return values_.at(k).get<std::string>(); }
    bool flag(const std::string& k) const { return values_.at(k).get<bool>(); }
    std::vector<double> list(const std::string& k) const { return values_.at(k).get<std::vector<double>>(); }
    const Json& json() const { return values_; }
    const std::optional<std::string>& config_path() const { return config_path_; }

    double positive(const std::string& k) const {
        const double v = number(k);
        if (!(v > 0.0)) throw InvalidInputError("'" + k + "' must be positive");
        return v;
    }
    double non_negative(const std::string& k) const {
        const double v = number(k);
        if (!(v >= 0.0)) throw InvalidInputError("'" + k + "' must be non-negative");
        return v;
    }
    std::size_t count(const std::string& k, std::int64_t min) const {
        const auto v = integer(k);
        if (v < min) throw InvalidInputError("'" + k + "' must be at least " + std::to_string(min));
        return static_cast<std::size_t>(v);
    }
    std::string choice(const std::string& k, std::initializer_list<const char*> allowed) const {
        const std::string v = string(k);
        for (const char* a : allowed)
            if (v == a) return v;
        std::string list;
        for (const char* a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
        throw InvalidInputError("'" + k + "' must be one of: " + list + " (got '" + v + "')");
    }
    std::string required_path(const std::string& k) const {
        const std::string v = string(k);
        if (v.empty()) throw InvalidInputError("'" + k + "' is required");
        return v;
    }

private:
    void apply_file(const std::string& cmd, const std::string& path) {
        Json doc;
        try {
            doc = Json::parse(read_file(path));
        } catch (const Json::parse_error& e) {
            throw InvalidInputError("config file '" + path + "' is not valid JSON: " + e.what());
        }
        if (!doc.is_object()) throw InvalidInputError("config file must hold a JSON object");
        for (const auto& [name, value] : doc.items()) {
            if (const Key* k = find_key(global_keys(), name)) {
                values_[name] = from_json(*k, value, "config key");
                continue;
            }
            if (std::find(kCommands.begin(), kCommands.end(), name) == kCommands.end())
                throw InvalidInputError("unknown config key '" + name + "'");
            if (!value.is_object()) throw InvalidInputError("config section '" + name + "' must be an object");
            for (const auto& [sub, v] : value.items()) {
                const Key* k = find_key(command_keys(name), sub);
                if (!k) throw InvalidInputError("unknown config key '" + name + "." + sub + "'");
                const Json converted = from_json(*k, v, "config key");
                if (name == cmd) values_[sub] = converted;
            }
        }
    }

    Json values_ = Json::object();
    std::optional<std::string> config_path_;
};

// ---------------------------------------------------------------------------
// Command plumbing

struct Context {
    const Config& cfg;
    std::string command;
    fs::path out_dir;
    std::ostream& out;
    Json inputs = Json::object();

    std::string read_input(const std::string& path) {
        std::string bytes = read_file(path);
        inputs[path] = sha256_hex(bytes);
        return bytes;
    }

    Json report(Json result) const {
        Json j;
        j["command"] = command;
        j["version"] = kVersion;
        j["config"] = cfg.json();
        j["inputs"] = inputs;
        j["result"] = std::move(result);
        return j;
    }

    void write(const std::string& name, const std::string& content) const {
        const fs::path path = out_dir / name;
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write '" + path.string() + "'");
        f << content;
        f.close();
        if (!f) throw IoError("cannot write '" + path.string() + "'");
        out << "wrote " << path.string() << '\n';
    }

    void write_json(const std::string& name, const Json& j) const { write(name, j.dump(2) + "\n"); }
};

Json ingest_json(const IngestReport& r) {
    Json j;
    j["accepted"] = r.accepted;
    j["rejected_total"] = r.rejected_total();
    Json reasons = Json::object();
    for (const auto& [reason, n] : r.rejected) reasons[reason] = n;
    j["rejected"] = reasons;
    return j;
}

LastPriceRule parse_rule(const Config& cfg) {
    return cfg.choice("rule", {"uniform", "normal"}) == "uniform" ? LastPriceRule::UniformInBar
                                                                    : LastPriceRule::NormalHalfBar;
}

int cmd_simulate(Context& ctx) {
    const Config& cfg = ctx.cfg;
    CoupledWaveParams p;
    const double dt = cfg.positive("dt");
    p.sigma_step = CoupledWaveParams::sigma_step_for(cfg.non_negative("sigma"), dt);
    p.xi_mean = cfg.number("xi_mean");
    p.xi_std = cfg.non_negative("xi_std");
    p.kappa_mean = cfg.number("kappa_mean");
    p.kappa_std = cfg.non_negative("kappa_std");
    p.tau0 = cfg.positive("tau0");
    p.last_price_rule = parse_rule(cfg);
    p.seed = static_cast<std::uint64_t>(cfg.integer("seed"));
    const std::size_t steps = cfg.count("steps", 1);
    const double s0 = cfg.positive("s0");
    const std::string drive_mode = cfg.choice("drive", {"none", "bid_ask", "bar"});

    BarSeries series;
    if (drive_mode == "none") {
        series = simulate_path(p, s0, steps, dt);
    } else {
        VolumeDrive drive;
        drive.volume_median = cfg.positive("volume_median");
        drive.volume_log_std = cfg.non_negative("volume_log_std");
        drive.law = drive_mode == "bid_ask" ? VolumeDrive::Law::BidAsk : VolumeDrive::Law::Bar;
        drive.spread = {s0, cfg.positive("sigma"), cfg.positive("lambda"), cfg.non_negative("rho"), cfg.positive("n"),
                        p.tau0};
        drive.horizon_T = cfg.positive("horizon");
        drive.quantile_level = cfg.number("quantile");
        if (!(drive.quantile_level < 1.0)) throw InvalidInputError("a volume drive needs quantile < 1");
        series = simulate_path(p, drive, s0, steps, dt);
    }

    const double unit_ms = cfg.number("unit_ms");
    const std::int64_t t0 = cfg.integer("t0_ms");
    std::ostringstream bars;
    write_bars_csv(bars, bars_from_series(series, t0, unit_ms));
    ctx.write("bars.csv", bars.str());
    if (cfg.flag("write_quotes")) {
        std::ostringstream q;
        write_quotes_csv(q, quotes_from_series(series, t0, unit_ms));
        ctx.write("quotes.csv", q.str());
    }
    if (cfg.flag("write_trades")) {
        std::ostringstream t;
        write_trades_csv(t, trades_from_series(series, t0, unit_ms, cfg.positive("trade_size")));
        ctx.write("trades.csv", t.str());
    }

    std::vector<double> heights;
    heights.reserve(series.size());
    for (const auto& b : series.bars) heights.push_back(b.h);
    const double mean_h2 = stats::mean_square(heights);
    const double predicted = predicted_volatility(p.sigma_step, s0, mean_h2, p.last_price_rule);

    Json r;
    r["steps"] = series.size();
    r["mean_bar_height"] = stats::mean(heights);
    r["mean_square_bar_height"] = mean_h2;
    r["rayleigh_scale"] = stats::rayleigh_scale_mle(heights);
    r["rayleigh_mode"] = stats::rayleigh_scale_mle(heights) / std::numbers::sqrt2;
    r["predicted_volatility"] = predicted;
    if (series.size() >= kMinVolatilitySamples) {
        const double empirical = path_volatility(series);
        r["empirical_volatility"] = empirical;
        r["volatility_ratio"] = empirical / predicted;
    } else {
        r["empirical_volatility"] = nullptr;
        r["volatility_ratio"] = nullptr;
    }
    r["placement_alpha"] = placement_alpha(p.last_price_rule);
    r["redraws"] = series.redraws;
    r["redraw_rate"] = series.redraw_rate();
    r["redraw_warning"] = series.redraw_warning();
    r["units"] = {{"volatility", "money per step"}, {"bar_height", "money"}};
    ctx.write_json("summary.json", ctx.report(r));
    if (series.redraw_warning()) ctx.out << "warning: redraw rate " << series.redraw_rate() << " exceeds 0.1%\n";
    return kExitOk;
}

int cmd_curve(Context& ctx) {
    const Config& cfg = ctx.cfg;
    const std::string input = cfg.required_path("input");
    const std::string source = cfg.choice("source", {"quotes", "bars"});
    const bool relative = cfg.flag("relative");
    const double unit_ms = cfg.number("unit_ms");

    BucketSpec spec;
    spec.count = cfg.count("buckets", 1);
    spec.min_count = cfg.count("min_count", 0);
    spec.p_lo = cfg.number("p_lo");
    spec.p_hi = cfg.number("p_hi");
    if (!(spec.p_lo >= 0.0 && spec.p_lo < spec.p_hi && spec.p_hi <= 1.0))
        throw InvalidInputError("volume percentiles must satisfy 0 <= p_lo < p_hi <= 1");
    const std::string mode = cfg.choice("bucket_mode", {"log_percentile", "log", "linear"});
    if (mode != "log_percentile") {
        spec.kind = mode == "log" ? BucketSpec::Kind::Log : BucketSpec::Kind::Linear;
        spec.lo = cfg.number("v_lo");
        spec.hi = cfg.number("v_hi");
        if (!(spec.hi > spec.lo) || !(spec.lo >= 0.0) || (mode == "log" && !(spec.lo > 0.0)))
            throw InvalidInputError("'v_lo' and 'v_hi' must bound a non-empty volume range");
    }

    Json r;
    std::vector<SpreadObservation> obs;
    SpreadSource src = SpreadSource::BidAsk;
    std::istringstream in(ctx.read_input(input));
    if (source == "quotes") {
        auto quotes = read_quotes(in);
        r["ingest"] = ingest_json(quotes.report);
        const std::string trades_path = cfg.string("trades");
        if (!trades_path.empty()) {
            std::istringstream tin(ctx.read_input(trades_path));
            const auto trades = read_trades(tin);
            r["trades_ingest"] = ingest_json(trades.report);
            attach_trade_volume(quotes.records, trades.records, cfg.positive("volume_window"), unit_ms);
        }
        std::size_t skipped = 0;
        obs = observations_from_quotes(quotes.records, relative, &skipped);
        r["quotes_without_volume"] = skipped;
        if (obs.empty() && skipped > 0)
            throw InvalidInputError("quotes carry no volume column; supply a trades file");
    } else {
        src = SpreadSource::Bar;
        const auto bars = read_bars(in);
        r["ingest"] = ingest_json(bars.report);
        obs = observations_from_bars(bars.records, cfg.positive("horizon"), relative);
    }
    if (obs.empty()) throw InsufficientDataError("no usable rows in '" + input + "'");

    const auto curve = build_spread_volume_curve(obs, spec, cfg.number("quantile"), src, relative);
    std::ostringstream c, h;
    write_curve_csv(c, curve);
    write_histogram_csv(h, curve);
    ctx.write("curve.csv", c.str());
    ctx.write("histogram.csv", h.str());

    std::size_t flagged = 0;
    for (const auto& b : curve.buckets) flagged += b.flagged;
    r["buckets"] = curve.buckets.size();
    r["flagged_buckets"] = flagged;
    r["observations"] = curve.total_count();
    r["source"] = source == "quotes" ? "bid_ask" : "bar";
    r["units"] = {{"spread_q", relative ? "fraction of mid price" : "money"}, {"volume", "shares per reference unit"}};
    ctx.write_json("curve.json", ctx.report(r));
    return kExitOk;
}

void write_overlay(const Context& ctx, const SpreadVolumeCurve& curve, const CalibrationResult& r, double price_ref) {
    std::ostringstream o;
    o << "v_lo,v_hi,v_mid,spread_q,model,count,flagged\n";
    for (const auto& b : curve.buckets) {
        double model = std::numeric_limits<double>::quiet_NaN();
        if (b.v_mid > 0.0 || (r.law == CalibrationResult::Law::Bar && b.v_mid >= 0.0)) model = r.model(b.v_mid, price_ref);
        csv::write_row(o, {csv::format_double(b.v_lo), csv::format_double(b.v_hi), csv::format_double(b.v_mid),
                           csv::format_double(b.spread_quantile), csv::format_double(model),
                           std::to_string(b.trade_count), b.flagged ? "1" : "0"});
    }
    ctx.write("overlay.csv", o.str());
}

int cmd_calibrate(Context& ctx) {
    const Config& cfg = ctx.cfg;
    const std::string curve_path = cfg.required_path("curve");
    const std::string law = cfg.choice("law", {"bid_ask", "bar"});
    std::istringstream in(ctx.read_input(curve_path));
    auto curve = read_curve_csv(in, cfg.count("min_count", 0));

    Json flow = Json::object();
    double n = cfg.non_negative("n");
    double sigma = cfg.non_negative("sigma");
    const std::string trades_path = cfg.string("trades");
    if (!trades_path.empty()) {
        std::istringstream tin(ctx.read_input(trades_path));
        const auto trades = read_trades(tin);
        if (trades.records.empty()) throw InsufficientDataError("no usable trades in '" + trades_path + "'");
        double window = cfg.non_negative("flow_window");
        if (window == 0.0)
            window = static_cast<double>(trades.records.back().timestamp_ms - trades.records.front().timestamp_ms) /
                     cfg.number("unit_ms");
        const auto fs = measure_flow_stats(trades.records, window, cfg.number("unit_ms"));
        flow = {{"n", fs.n}, {"volume", fs.volume}, {"sigma", fs.sigma}, {"trades", fs.trades}};
        if (n == 0.0) n = fs.n;
        if (sigma == 0.0) sigma = fs.sigma;
    }
    if (!(n > 0.0) || !(sigma > 0.0))
        throw InvalidInputError("'n' and 'sigma' must be positive; give them directly or through a trades file");

    FitOptions opt;
    opt.tau0 = cfg.positive("tau0");
    opt.strict_product = cfg.flag("strict_product");
    opt.include_flagged = cfg.flag("include_flagged");
    opt.max_iterations = cfg.count("max_iterations", 1);
    const double price = cfg.non_negative("price");
    curve.relative = price == 0.0;
    opt.price_ref = curve.relative ? 1.0 : price;

    const auto emit = [&](const CalibrationResult& res) {
        Json r = to_json(res);
        r["flow"] = flow;
        ctx.write_json("calibration.json", ctx.report(r));
        write_overlay(ctx, curve, res, opt.price_ref);
    };
    try {
        const CalibrationResult res = law == "bid_ask" ? fit_bid_ask_curve(curve, n, sigma, opt)
                                                        : fit_bar_curve(curve, cfg.positive("horizon"), n,
                                                                        sigma * std::sqrt(cfg.positive("horizon")), opt);
        emit(res);
        ctx.out << "lambda " << res.lambda_hat << "  rho " << res.rho_hat << "  residual " << res.residual_norm << '\n';
        return kExitOk;
    } catch (const ConvergenceError<CalibrationResult>& e) {
        emit(e.best());
        throw;
    }
}

int cmd_scale(Context& ctx) {
    const Config& cfg = ctx.cfg;
    const double T1 = cfg.positive("horizon");
    if (cfg.flag("surface")) {
        SpreadSurfaceParams p;
        p.lambda_risk = cfg.non_negative("lambda");
        p.rho_risk = cfg.non_negative("rho");
        p.sigma = cfg.non_negative("sigma");
        p.n = cfg.positive("n");
        p.tau0 = cfg.positive("tau0");
        const double t_min = cfg.number("t_min") > 0.0 ? cfg.number("t_min") : T1;
        const double t_max = cfg.number("t_max") > 0.0 ? cfg.number("t_max") : 1e3 * t_min;
        if (!(t_max >= t_min)) throw InvalidInputError("'t_max' must not be below the smallest horizon");
        const double v_min = cfg.positive("v_min");
        const double v_max = cfg.positive("v_max");
        if (!(v_max >= v_min)) throw InvalidInputError("'v_max' must not be below 'v_min'");
        const auto surface = spread_surface(p, cfg.positive("price"), log_space(v_min, v_max, cfg.count("v_points", 1)),
                                            log_space(t_min, t_max, cfg.count("t_points", 1)));
        std::ostringstream o;
        write_surface_csv(o, surface);
        ctx.write("surface.csv", o.str());
        Json r{{"cells", surface.values.size()}, {"units", {{"delta", "money"}, {"T", "reference units"}}}};
        ctx.write_json("scale.json", ctx.report(r));
        return kExitOk;
    }

    const double base = cfg.positive("base_spread");
    const double eta = cfg.non_negative("eta");
    const double lambda = cfg.non_negative("lambda");
    std::vector<double> horizons = cfg.list("horizons");
    if (horizons.empty()) {
        const double t_max = cfg.number("t_max") > 0.0 ? cfg.number("t_max") : 1e6 * T1;
        if (t_max < T1) throw InvalidInputError("'t_max' lies below the base horizon");
        horizons = log_space(T1, t_max, cfg.count("t_points", 1));
    }
    for (double T : horizons)
        if (!(T >= T1)) throw InvalidInputError("horizon " + csv::format_double(T) + " lies below the base horizon");

    std::ostringstream o;
    o << "T,delta_quantum,delta_classical\n";
    for (double T : horizons)
        csv::write_row(o, {csv::format_double(T), csv::format_double(scale_spread_time(base, eta, lambda, T1, T)),
                           csv::format_double(classical_scale(base, T1, T))});
    ctx.write("scale.csv", o.str());
    Json r{{"rows", horizons.size()}, {"units", {{"delta", "input spread units"}, {"T", "reference units"}}}};
    ctx.write_json("scale.json", ctx.report(r));
    return kExitOk;
}

int cmd_optimize(Context& ctx) {
    const Config& cfg = ctx.cfg;
    std::optional<CalibrationResult> cal;
    const std::string cal_path = cfg.string("calibration");
    if (!cal_path.empty()) {
        Json doc;
        try {
            doc = Json::parse(ctx.read_input(cal_path));
        } catch (const Json::parse_error& e) {
            throw InvalidInputError("calibration file '" + cal_path + "' is not valid JSON: " + e.what());
        }
        cal = calibration_from_json(doc.contains("result") ? doc.at("result") : doc);
        if (!(cal->lambda_hat > 0.0) || !(cal->rho_hat > 0.0) || !(cal->tau0_hat > 0.0))
            throw InvalidInputError("calibration must have positive lambda, rho and tau0");
    }

    std::string mode = cfg.choice("mode", {"auto", "bid_ask", "bar"});
    if (mode == "auto") mode = cal && cal->law == CalibrationResult::Law::Bar ? "bar" : "bid_ask";
    if (cal && (mode == "bar") != (cal->law == CalibrationResult::Law::Bar))
        throw InvalidInputError("quoting mode does not match the calibrated law");

    const double pi = std::numbers::pi;
    std::function<double(double)> reference;
    Json ref;
    if (mode == "bid_ask") {
        const double a = cal ? std::numbers::sqrt2 * cal->rho_hat * cal->lambda_hat * cal->lambda_hat *
                                   cal->sigma_used * cal->sigma_used * pi * cal->tau0_hat
                             : cfg.positive("a");
        reference = BidAskReference{a};
        ref = {{"a", a}};
    } else {
        const double floor = cal ? cal->lambda_hat * cal->sigma_used : cfg.non_negative("floor");
        const double cubic = cal ? cal->horizon_T / (2.0 * std::numbers::sqrt2 * cal->rho_hat * pi * cal->tau0_hat)
                                 : cfg.non_negative("cubic");
        reference = BarReference{floor, cubic};
        ref = {{"floor", floor}, {"cubic", cubic}};
    }
    double lambda_ref = cfg.non_negative("lambda_ref");
    if (lambda_ref == 0.0) lambda_ref = cal ? cal->lambda_hat : 1.0;

    const double v_min = cfg.positive("v_min");
    const double v_max = cfg.positive("v_max");
    const std::size_t points = cfg.count("v_points", 1);
    if (!(v_max > v_min) && points > 1) throw InvalidInputError("'v_max' must exceed 'v_min'");
    const bool log_grid = cfg.choice("v_spacing", {"linear", "log"}) == "log";
    std::vector<double> volumes(points);
    if (log_grid) {
        volumes = log_space(v_min, v_max, points);
    } else {
        for (std::size_t i = 0; i < points; ++i)
            volumes[i] = points == 1 ? v_min : v_min + (v_max - v_min) * static_cast<double>(i) / static_cast<double>(points - 1);
    }

    const ExecutionModel model{cfg.positive("lambda0")};
    const auto policy = policy_curve(volumes, reference, mode == "bid_ask" ? QuotingMode::BidAsk : QuotingMode::Bar,
                                     cfg.non_negative("commission"), model, lambda_ref, cfg.non_negative("lambda_max"));
    std::ostringstream o;
    write_policy_csv(o, policy);
    ctx.write("policy.csv", o.str());
    Json r = to_json(policy);
    r["reference"] = ref;
    std::size_t halted = 0;
    for (const auto& pt : policy.points) halted += pt.halt;
    r["halted_points"] = halted;
    ctx.write_json("policy.json", ctx.report(r));
    if (policy.gaps() > 0) ctx.out << "warning: " << policy.gaps() << " volume points failed\n";
    return kExitOk;
}

void register_keys(CLI::App& app, const std::vector<Key>& keys, FlagValues& values) {
    for (const auto& k : keys) {
        const std::string flag = "--" + dashed(k.name);
        std::string help = k.help + " [env " + env_name(k.name) + "]";
        if (k.kind == Kind::Bool) {
            values.flags[k.name] = false;
            values.options[k.name] = app.add_flag(flag, values.flags[k.name], help);
        } else {
            values.text[k.name];
            values.options[k.name] = app.add_option(flag, values.text[k.name], help);
        }
    }
}

}  // namespace

double parse_duration(const std::string& text, double unit_ms) {
    const std::string t(csv::trim(text));
    static const std::vector<std::pair<std::string, double>> suffixes{
        {"ms", 1.0}, {"s", 1e3}, {"m", 6e4}, {"h", 3.6e6}, {"d", 8.64e7}};
    for (const auto& [suffix, ms] : suffixes) {
        if (t.size() > suffix.size() && t.compare(t.size() - suffix.size(), suffix.size(), suffix) == 0) {
            const std::string num = t.substr(0, t.size() - suffix.size());
            if (!csv::parse_double(num)) continue;
            const double v = *csv::parse_double(num);
            if (!(v >= 0.0)) break;
            return v * ms / unit_ms;
        }
    }
    const auto v = csv::parse_double(t);
    if (!v || !(*v >= 0.0) || !std::isfinite(*v)) throw InvalidInputError("invalid duration '" + text + "'");
    return *v;
}

std::string sha256_file(const std::string& path) { return sha256_hex(read_file(path)); }

EnvLookup process_environment() {
    return [](const std::string& name) -> std::optional<std::string> {
        if (const char* v = std::getenv(name.c_str())) return std::string(v);
        return std::nullopt;
    };
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
    CLI::App app{"Spread-volume modelling toolkit", "spreadvol"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    FlagValues global;
    global.text["config"];
    global.options["config"] = app.add_option("--config", global.text["config"], "JSON config file [env SPREADVOL_CONFIG]");
    register_keys(app, global_keys(), global);

    std::map<std::string, FlagValues> per_command;
    std::map<std::string, CLI::App*> subs;
    const std::map<std::string, std::string> descriptions{
        {"simulate", "simulate a coupled-wave price path (bars.csv, summary.json)"},
        {"curve", "build a spread-volume curve from quotes or bars (curve.csv, histogram.csv)"},
        {"calibrate", "fit the bid-ask or bar spread law to a curve (calibration.json, overlay.csv)"},
        {"scale", "horizon scaling table or (T, V) surface (scale.csv or surface.csv)"},
        {"optimize", "optimal operating-spread policy (policy.csv, policy.json)"},
    };
    for (const auto& cmd : kCommands) {
        CLI::App* sub = app.add_subcommand(cmd, descriptions.at(cmd));
        sub->fallthrough();
        register_keys(*sub, command_keys(cmd), per_command[cmd]);
        subs[cmd] = sub;
    }

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitInvalidInput;
    }

    std::string cmd;
    for (const auto& [name, sub] : subs)
        if (sub->parsed()) cmd = name;

    try {
        const Config cfg(cmd, global, per_command.at(cmd), env);
        Context ctx{cfg, cmd, fs::path(cfg.string("out")), out};
        std::error_code ec;
        fs::create_directories(ctx.out_dir, ec);
        if (ec || !fs::is_directory(ctx.out_dir)) throw IoError("cannot create output directory '" + ctx.out_dir.string() + "'");
        if (cfg.config_path()) ctx.read_input(*cfg.config_path());

        if (cmd == "simulate") return cmd_simulate(ctx);
        if (cmd == "curve") return cmd_curve(ctx);
        if (cmd == "calibrate") return cmd_calibrate(ctx);
        if (cmd == "scale") return cmd_scale(ctx);
        return cmd_optimize(ctx);
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const ConvergenceError<CalibrationResult>& e) {
        err << "error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const ConvergenceError<SpreadOptimum>& e) {
        err << "error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitInvalidInput;
    } catch (const Json::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitInvalidInput;
    }
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace spreadvol::cli
