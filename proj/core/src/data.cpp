#include "ltvforge/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "ltvforge/errors.hpp"
#include "ltvforge/log.hpp"
#include "ltvforge/nn.hpp"
#include "ltvforge/rng.hpp"

namespace ltvforge {

void GeneratorConfig::validate() const {
    if (n_samples == 0) throw InputError("generator: n_samples must be positive");
    if (zero_ratio <= 0.0 || zero_ratio >= 1.0) throw InputError("generator: zero_ratio must be in (0,1)");
    if (tail_prob < 0.0 || tail_prob >= 1.0) throw InputError("generator: tail_prob must be in [0,1)");
    if (pareto_alpha <= 1.0) throw InputError("generator: pareto_alpha must exceed 1");
    if (signal_corr < 0.0 || signal_corr > 1.0) throw InputError("generator: signal_corr must be in [0,1]");
    if (sigma <= 0.0) throw InputError("generator: sigma must be positive");
    if (noise_std < 0.0) throw InputError("generator: noise_std must be non-negative");
    if (n_categorical > 0 && cat_cardinality < 2) {
        throw InputError("generator: cat_cardinality must be at least 2");
    }
}

void Dataset::recompute_cardinalities() {
    schema.categorical_cardinality.assign(n_categorical(), 1);
    for (std::size_t r = 0; r < size(); ++r) {
        for (std::size_t c = 0; c < n_categorical(); ++c) {
            schema.categorical_cardinality[c] =
                std::max(schema.categorical_cardinality[c], cat(r, c) + 1);
        }
    }
}

void Dataset::validate() const {
    for (double y : labels) {
        if (!std::isfinite(y)) throw InputError("dataset: non-finite label");
        if (y < 0.0) throw InputError("dataset: negative label");
    }
    if (!numeric.all_finite()) throw InputError("dataset: non-finite numeric feature");
    for (std::int32_t code : categorical) {
        if (code < 0) throw InputError("dataset: negative categorical code");
    }
}

Batch gather(const Dataset& ds, std::span<const std::size_t> rows) {
    Batch b;
    b.numeric = Matrix(rows.size(), ds.n_numeric());
    b.categorical.resize(rows.size() * ds.n_categorical());
    b.labels.resize(rows.size());
    b.row_ids.assign(rows.begin(), rows.end());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t r = rows[i];
        for (std::size_t c = 0; c < ds.n_numeric(); ++c) b.numeric(i, c) = ds.numeric(r, c);
        for (std::size_t c = 0; c < ds.n_categorical(); ++c) {
            b.categorical[i * ds.n_categorical() + c] = ds.cat(r, c);
        }
        b.labels[i] = ds.labels[r];
    }
    return b;
}

// Expected zero fraction E_u[sigmoid(a - b*u)] under u ~ N(0,1), via composite
// Simpson on [-10, 10]. The calibration below root-finds `a` so the marginal
// hits the configured zero ratio.
static double expected_zero_fraction(double a, double b) {
    constexpr int kIntervals = 4000;  // even
    constexpr double kLo = -10.0, kHi = 10.0;
    const double h = (kHi - kLo) / kIntervals;
    auto f = [&](double u) {
        const double phi = std::exp(-0.5 * u * u) / 2.5066282746310005024;
        return sigmoid_strict(a - b * u) * phi;
    };
    double acc = f(kLo) + f(kHi);
    for (int i = 1; i < kIntervals; ++i) {
        acc += f(kLo + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    }
    return acc * h / 3.0;
}

static double calibrate_zero_intercept(double target, double slope) {
    double lo = -80.0, hi = 80.0;
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (expected_zero_fraction(mid, slope) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

Dataset generate(const GeneratorConfig& cfg, std::size_t threads) {
    cfg.validate();
    const std::size_t n = cfg.n_samples;

    Dataset ds;
    for (std::size_t j = 0; j < cfg.n_numeric; ++j) ds.schema.numeric_names.push_back("num_" + std::to_string(j));
    for (std::size_t j = 0; j < cfg.n_categorical; ++j) {
        ds.schema.categorical_names.push_back("cat_" + std::to_string(j));
    }
    ds.numeric = Matrix(n, cfg.n_numeric);
    ds.categorical.resize(n * cfg.n_categorical);
    ds.labels.resize(n);

    const double rho = cfg.signal_corr;
    const double zero_slope = 2.0 * rho;
    const double zero_intercept = calibrate_zero_intercept(cfg.zero_ratio, zero_slope);
    const double resid = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    const double cat_spread = std::sqrt(1.0 + cfg.noise_std * cfg.noise_std);
    const double cat_width = 8.0 * cat_spread / static_cast<double>(std::max<std::size_t>(cfg.cat_cardinality, 1));

    auto fill_rows = [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            RngStream rng(mix_key(cfg.seed, r));
            const double u = rng.normal();
            const bool is_zero = rng.uniform01() < sigmoid_strict(zero_intercept - zero_slope * u);
            const double value_eps = rng.normal();
            const bool whale = rng.uniform01() < cfg.tail_prob;
            const double pareto_u = rng.uniform01();

            double value = std::exp(cfg.mu + cfg.sigma * (rho * u + resid * value_eps));
            if (whale) value *= std::pow(1.0 - pareto_u, -1.0 / cfg.pareto_alpha);
            ds.labels[r] = is_zero ? 0.0 : value;

            for (std::size_t j = 0; j < cfg.n_numeric; ++j) {
                ds.numeric(r, j) = u + cfg.noise_std * rng.normal();
            }
            for (std::size_t j = 0; j < cfg.n_categorical; ++j) {
                const double x = u + cfg.noise_std * rng.normal();
                auto code = static_cast<std::int64_t>(std::floor((x + 4.0 * cat_spread) / cat_width));
                code = std::clamp<std::int64_t>(code, 0, static_cast<std::int64_t>(cfg.cat_cardinality) - 1);
                ds.categorical[r * cfg.n_categorical + j] = static_cast<std::int32_t>(code);
            }
        }
    };

    if (threads <= 1 || n < 4096) {
        fill_rows(0, n);
    } else {
        const std::size_t workers = std::min<std::size_t>(threads, 16);
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(n, begin + chunk);
            if (begin >= end) break;
            pool.emplace_back(fill_rows, begin, end);
        }
        for (auto& t : pool) t.join();
    }

    ds.recompute_cardinalities();
    return ds;
}

static void append_double(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw InputError("cannot open for write: " + path);
    std::string line;
    for (const auto& name : ds.schema.numeric_names) {
        line += name;
        line += ',';
    }
    for (const auto& name : ds.schema.categorical_names) {
        line += name;
        line += ',';
    }
    line += "label\n";
    file << line;

    for (std::size_t r = 0; r < ds.size(); ++r) {
        line.clear();
        for (std::size_t c = 0; c < ds.n_numeric(); ++c) {
            append_double(line, ds.numeric(r, c));
            line += ',';
        }
        for (std::size_t c = 0; c < ds.n_categorical(); ++c) {
            line += std::to_string(ds.cat(r, c));
            line += ',';
        }
        append_double(line, ds.labels[r]);
        line += '\n';
        file << line;
    }
    if (!file) throw InputError("write failed: " + path);
}

static std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

static double parse_double(const std::string& s, std::size_t line_no) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw InputError("csv line " + std::to_string(line_no) + ": bad numeric field '" + s + "'");
    }
    return v;
}

static std::int32_t parse_code(const std::string& s, std::size_t line_no) {
    std::int64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw InputError("csv line " + std::to_string(line_no) + ": categorical field '" + s +
                         "' is not an integer");
    }
    if (v < 0) throw InputError("csv line " + std::to_string(line_no) + ": negative categorical code");
    if (v > 0x7fffffff) throw InputError("csv line " + std::to_string(line_no) + ": categorical code too large");
    return static_cast<std::int32_t>(v);
}

Dataset load_csv(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw InputError("cannot open: " + path);

    std::string header;
    if (!std::getline(file, header)) throw InputError("empty csv: " + path);
    if (!header.empty() && header.back() == '\r') header.pop_back();

    // column kind per position: 0 numeric, 1 categorical, 2 label
    std::vector<int> kinds;
    Dataset ds;
    int label_col = -1;
    const auto names = split_fields(header);
    for (std::size_t i = 0; i < names.size(); ++i) {
        const std::string& name = names[i];
        if (name.rfind("num_", 0) == 0) {
            kinds.push_back(0);
            ds.schema.numeric_names.push_back(name);
        } else if (name.rfind("cat_", 0) == 0) {
            kinds.push_back(1);
            ds.schema.categorical_names.push_back(name);
        } else if (name == "label") {
            if (label_col >= 0) throw ConfigError("csv: duplicate label column");
            kinds.push_back(2);
            label_col = static_cast<int>(i);
        } else {
            throw ConfigError("csv: unknown column prefix for '" + name + "'");
        }
    }
    if (label_col < 0) throw ConfigError("csv: missing label column");

    std::vector<double> numeric_flat;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(file, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != kinds.size()) {
            throw InputError("csv line " + std::to_string(line_no) + ": expected " +
                             std::to_string(kinds.size()) + " fields, got " +
                             std::to_string(fields.size()));
        }
        for (std::size_t i = 0; i < fields.size(); ++i) {
            switch (kinds[i]) {
                case 0: numeric_flat.push_back(parse_double(fields[i], line_no)); break;
                case 1: ds.categorical.push_back(parse_code(fields[i], line_no)); break;
                default: {
                    const double y = parse_double(fields[i], line_no);
                    if (!std::isfinite(y) || y < 0.0) {
                        throw InputError("csv line " + std::to_string(line_no) + ": label must be a non-negative real");
                    }
                    ds.labels.push_back(y);
                }
            }
        }
    }

    const std::size_t n = ds.labels.size();
    const std::size_t width = ds.schema.numeric_names.size();
    ds.numeric = Matrix(n, width);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < width; ++c) ds.numeric(r, c) = numeric_flat[r * width + c];
    }
    ds.recompute_cardinalities();
    return ds;
}

double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw InputError("quantile of empty data");
    const double n = static_cast<double>(sorted.size());
    const double idx = (n + 1.0) * p - 1.0;
    if (idx <= 0.0) return sorted.front();
    if (idx >= n - 1.0) return sorted.back();
    const auto lo = static_cast<std::size_t>(idx);
    const double frac = idx - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

BucketSpec fit_bucket_spec(std::span<const double> train_labels, int k) {
    if (k < 2) throw InputError("fit_bucket_spec: K must be at least 2");
    std::vector<double> nonzero;
    nonzero.reserve(train_labels.size());
    for (double y : train_labels) {
        if (y < 0.0) throw InputError("fit_bucket_spec: negative label");
        if (y > kZeroBoundary) nonzero.push_back(y);
    }
    if (nonzero.empty()) throw InputError("fit_bucket_spec: all labels are zero");
    std::sort(nonzero.begin(), nonzero.end());

    BucketSpec spec;
    spec.k = k;
    spec.thresholds.push_back(kZeroBoundary);
    // Successive tail halving: 50th, 75th, 87.5th, ... of the non-zero mass.
    for (int i = 1; i <= k - 2; ++i) {
        const double level = 1.0 - std::pow(2.0, -i);
        spec.thresholds.push_back(quantile_sorted(nonzero, level));
    }
    for (std::size_t i = 1; i < spec.thresholds.size(); ++i) {
        if (!(spec.thresholds[i] > spec.thresholds[i - 1])) {
            throw InputError("fit_bucket_spec: cannot place strictly ascending thresholds");
        }
    }
    spec.top_cap = quantile_sorted(nonzero, 0.995);

    spec.centers.resize(k);
    spec.half_ranges.resize(k);
    spec.centers[0] = 0.0;
    spec.half_ranges[0] = 1.0;
    for (int b = 2; b <= k; ++b) {
        const double lo = spec.thresholds[b - 2];
        const double hi = (b < k) ? spec.thresholds[b - 1] : spec.top_cap;
        const double half = 0.5 * (hi - lo);
        spec.centers[b - 1] = 0.5 * (hi + lo);
        spec.half_ranges[b - 1] = half > 0.0 ? half : 1.0;
    }
    return spec;
}

int assign_bucket(double y, const BucketSpec& spec) {
    for (int b = 1; b < spec.k; ++b) {
        if (y <= spec.thresholds[b - 1]) return b;
    }
    return spec.k;
}

double normalize_label(double y, const BucketSpec& spec, int bucket) {
    const double c = spec.centers[bucket - 1];
    const double r = spec.half_ranges[bucket - 1];
    return std::clamp((y - c) / r, -1.0, 1.0);
}

static Dataset slice(const Dataset& ds, std::size_t begin, std::size_t end) {
    Dataset out;
    out.schema = ds.schema;
    const std::size_t n = end - begin;
    out.numeric = Matrix(n, ds.n_numeric());
    out.categorical.resize(n * ds.n_categorical());
    out.labels.assign(ds.labels.begin() + begin, ds.labels.begin() + end);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < ds.n_numeric(); ++c) out.numeric(r, c) = ds.numeric(begin + r, c);
        for (std::size_t c = 0; c < ds.n_categorical(); ++c) {
            out.categorical[r * ds.n_categorical() + c] = ds.cat(begin + r, c);
        }
    }
    return out;
}

Split chronological_split(const Dataset& ds, double test_frac, double val_frac) {
    if (test_frac <= 0.0) throw InputError("chronological_split: test split required");
    if (val_frac < 0.0) throw InputError("chronological_split: negative val fraction");
    if (test_frac + val_frac >= 1.0) throw InputError("chronological_split: fractions must sum below 1");
    const std::size_t n = ds.size();
    const auto n_test = static_cast<std::size_t>(std::floor(test_frac * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(n)));
    if (n_test + n_val >= n) throw InputError("chronological_split: empty train split");
    const std::size_t n_train = n - n_test - n_val;
    if (n_test == 0 || n_val == 0) throw InputError("chronological_split: empty split");

    Split out;
    out.train = slice(ds, 0, n_train);
    out.val = slice(ds, n_train, n_train + n_val);
    out.test = slice(ds, n_train + n_val, n);
    return out;
}

double top_value_share(std::span<const double> labels, double frac) {
    if (labels.empty()) throw InputError("top_value_share: empty labels");
    std::vector<double> sorted(labels.begin(), labels.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double total = 0.0;
    for (double v : sorted) total += v;
    if (total <= 0.0) return 0.0;
    const auto k = static_cast<std::size_t>(
        std::ceil(frac * static_cast<double>(sorted.size())));
    double top = 0.0;
    for (std::size_t i = 0; i < std::min(k, sorted.size()); ++i) top += sorted[i];
    return top / total;
}

}  // namespace ltvforge
