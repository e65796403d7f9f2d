#pragma once

// Labeled bit datasets, planted-parity generators, file ingestion and the
// classical encodings (one-hot, threshold binarization, PCA) used upstream of
// the parity pipelines.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qparity/core.hpp"

namespace qparity {

// ============================================================== bit datasets

struct LabeledBitDataset {
    std::size_t n = 0;
    std::vector<BitVector> samples;
    std::vector<int> labels;
    int num_classes = 2;

    [[nodiscard]] std::size_t size() const { return samples.size(); }

    void validate() const {
        if (num_classes < 2) {
            throw SchemaError("dataset must declare at least 2 classes");
        }
        require_same_size(samples.size(), labels.size(), "dataset samples/labels");
        for (const auto& s : samples) {
            require_same_size(s.size(), n, "dataset sample width");
        }
        for (int y : labels) {
            if (y < 0 || y >= num_classes) {
                throw SchemaError("label " + std::to_string(y) + " outside 0.." +
                                  std::to_string(num_classes - 1));
            }
        }
    }

    [[nodiscard]] LabeledBitDataset subset(std::span<const std::size_t> idx) const {
        LabeledBitDataset out{n, {}, {}, num_classes};
        out.samples.reserve(idx.size());
        out.labels.reserve(idx.size());
        for (auto i : idx) {
            out.samples.push_back(samples[i]);
            out.labels.push_back(labels[i]);
        }
        return out;
    }
};

enum class Sampling { Exhaustive, Uniform };

struct PlantedParitySpec {
    std::size_t n = 0;
    std::vector<std::size_t> planted; // 0-indexed positions S*
    Sampling sampling = Sampling::Exhaustive;
    std::size_t sample_count = 0; // used by Uniform
    double label_noise = 0.0;

    void validate() const {
        if (n == 0) {
            throw ConfigError("planted parity: n must be positive");
        }
        if (planted.empty()) {
            throw ConfigError("planted parity: planted subset must be nonempty");
        }
        for (auto i : planted) {
            if (i >= n) {
                throw ConfigError("planted parity: position " + std::to_string(i) +
                                  " outside 0.." + std::to_string(n - 1));
            }
        }
        if (!(label_noise >= 0.0 && label_noise < 1.0)) {
            throw ConfigError("planted parity: label_noise must be in [0,1)");
        }
        if (sampling == Sampling::Exhaustive && n > 20) {
            throw CapacityError("planted parity: exhaustive sampling needs n <= 20, got n=" +
                                std::to_string(n));
        }
        if (sampling == Sampling::Uniform && sample_count == 0) {
            throw ConfigError("planted parity: uniform sampling needs sample_count > 0");
        }
    }
};

inline int planted_label(std::span<const std::uint8_t> b, std::span<const std::size_t> planted) {
    int y = 0;
    for (auto i : planted) {
        y ^= b[i];
    }
    return y;
}

inline LabeledBitDataset generate_planted_parity(const PlantedParitySpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng = make_rng(seed, 0x9e3779b9);
    LabeledBitDataset ds;
    ds.n = spec.n;
    ds.num_classes = 2;
    const std::size_t count =
        spec.sampling == Sampling::Exhaustive ? (std::size_t{1} << spec.n) : spec.sample_count;
    ds.samples.reserve(count);
    ds.labels.reserve(count);
    for (std::size_t j = 0; j < count; ++j) {
        BitVector b;
        if (spec.sampling == Sampling::Exhaustive) {
            b = index_to_bits(j, spec.n);
        } else {
            b.resize(spec.n);
            for (auto& bit : b) {
                bit = static_cast<std::uint8_t>(rng() >> 63);
            }
        }
        int y = planted_label(b, spec.planted);
        if (spec.label_noise > 0.0 && uniform01(rng) < spec.label_noise) {
            y ^= 1;
        }
        ds.samples.push_back(std::move(b));
        ds.labels.push_back(y);
    }
    return ds;
}

/// Full 5-bit parity over all 32 strings.
inline PlantedParitySpec parity5_spec() { return {5, {0, 1, 2, 3, 4}, Sampling::Exhaustive, 0, 0.0}; }

/// 10-bit strings labeled by the order-5 parity over {1,2,3,5,7}.
inline PlantedParitySpec parity5_5_spec() {
    return {10, {1, 2, 3, 5, 7}, Sampling::Exhaustive, 0, 0.0};
}

/// 10-bit strings labeled by a chain of three XOR gates (four planted bits),
/// positions drawn by a seeded shuffle.
inline PlantedParitySpec synthetic_3xor_spec(std::uint64_t data_seed, std::size_t n = 10,
                                             std::size_t order = 4) {
    if (order == 0 || order > n) {
        throw ConfigError("synthetic_3xor: order must be in 1..n");
    }
    std::vector<std::size_t> pos(n);
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    Rng rng = make_rng(data_seed, 0x3a3a);
    shuffle(pos, rng);
    pos.resize(order);
    std::sort(pos.begin(), pos.end());
    return {n, pos, Sampling::Exhaustive, 0, 0.0};
}

// ============================================================== splitting

namespace detail {

inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_indices(std::span<const int> labels, int num_classes, double test_fraction, std::uint64_t seed,
              bool stratified) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("split: test fraction must be in (0,1)");
    }
    Rng rng = make_rng(seed, 0x51);
    std::vector<std::size_t> train, test;
    auto take = [&](std::vector<std::size_t> idx) {
        shuffle(idx, rng);
        auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
        n_test = std::min(n_test, idx.size());
        test.insert(test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
        train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    };
    if (stratified) {
        std::vector<std::vector<std::size_t>> per_class(static_cast<std::size_t>(num_classes));
        for (std::size_t i = 0; i < labels.size(); ++i) {
            per_class[static_cast<std::size_t>(labels[i])].push_back(i);
        }
        for (int c = 0; c < num_classes; ++c) {
            const auto& idx = per_class[static_cast<std::size_t>(c)];
            if (idx.empty()) {
                continue;
            }
            if (idx.size() < 2) {
                throw ConfigError("split: class " + std::to_string(c) +
                                  " has fewer than 2 samples for stratification");
            }
            take(idx);
        }
    } else {
        std::vector<std::size_t> idx(labels.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        take(std::move(idx));
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {std::move(train), std::move(test)};
}

} // namespace detail

template <class Dataset>
std::pair<Dataset, Dataset> split(const Dataset& ds, double test_fraction, std::uint64_t seed,
                                  bool stratified = true) {
    auto [tr, te] = detail::split_indices(ds.labels, ds.num_classes, test_fraction, seed, stratified);
    return {ds.subset(tr), ds.subset(te)};
}

// ============================================================== CSV tables

/// Raw string table parsed from a delimited text file.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers; // 1-based source line of each row
};

namespace detail {

inline std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    auto e = s.find_last_not_of(" \t\r\n");
    std::string out(s.substr(b, e - b + 1));
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
        out = out.substr(1, out.size() - 2);
    }
    return out;
}

inline std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(delim, start);
        cells.push_back(trim(std::string_view(line).substr(start, pos - start)));
        if (pos == std::string::npos) {
            break;
        }
        start = pos + 1;
    }
    return cells;
}

inline std::optional<double> parse_real(const std::string& s) {
    if (s.empty()) {
        return std::nullopt;
    }
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) {
        return std::nullopt;
    }
    return v;
}

} // namespace detail

/// Reads a header + rows table; comma-delimited unless the header has tabs and no commas.
inline Table read_table(std::istream& in) {
    Table t;
    std::string line;
    std::size_t lineno = 0;
    char delim = ',';
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) {
            continue;
        }
        if (t.header.empty()) {
            if (line.find('\t') != std::string::npos && line.find(',') == std::string::npos) {
                delim = '\t';
            }
            t.header = detail::split_line(line, delim);
            continue;
        }
        auto cells = detail::split_line(line, delim);
        if (cells.size() != t.header.size()) {
            throw SchemaError("line " + std::to_string(lineno) + ": expected " +
                              std::to_string(t.header.size()) + " cells, found " +
                              std::to_string(cells.size()));
        }
        t.rows.push_back(std::move(cells));
        t.line_numbers.push_back(lineno);
    }
    if (t.header.empty()) {
        throw ParseError("empty table: no header row");
    }
    return t;
}

inline Table read_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open " + path.string());
    }
    return read_table(in);
}

/// Maps label strings to dense class ids; numeric labels sort numerically.
struct LabelMap {
    std::vector<std::string> names;

    static LabelMap fit(std::span<const std::string> values) {
        std::vector<std::string> uniq(values.begin(), values.end());
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        const bool numeric = std::all_of(uniq.begin(), uniq.end(),
                                         [](const auto& s) { return detail::parse_real(s).has_value(); });
        if (numeric) {
            std::sort(uniq.begin(), uniq.end(), [](const auto& a, const auto& b) {
                return *detail::parse_real(a) < *detail::parse_real(b);
            });
        }
        return {uniq};
    }

    [[nodiscard]] int id(const std::string& v) const {
        auto it = std::find(names.begin(), names.end(), v);
        if (it == names.end()) {
            throw SchemaError("unknown label value \"" + v + "\"");
        }
        return static_cast<int>(it - names.begin());
    }

    [[nodiscard]] int num_classes() const { return std::max<int>(2, static_cast<int>(names.size())); }
};

struct ColumnSchema {
    std::string label_column = "label";
    bool one_hot = false; // one-hot encode non-binary columns instead of rejecting them
};

/// Categorical feature table with its label column split off.
struct CategoricalTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    std::vector<int> labels;
    int num_classes = 2;
    LabelMap label_map;

    [[nodiscard]] CategoricalTable subset(std::span<const std::size_t> idx) const {
        CategoricalTable out{columns, {}, {}, num_classes, label_map};
        for (auto i : idx) {
            out.rows.push_back(rows[i]);
            out.labels.push_back(labels[i]);
        }
        return out;
    }
};

inline CategoricalTable to_categorical(const Table& t, const std::string& label_column) {
    auto it = std::find(t.header.begin(), t.header.end(), label_column);
    if (it == t.header.end()) {
        throw SchemaError("label column \"" + label_column + "\" not found");
    }
    const auto li = static_cast<std::size_t>(it - t.header.begin());
    CategoricalTable out;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        if (c != li) {
            out.columns.push_back(t.header[c]);
        }
    }
    std::vector<std::string> raw_labels;
    for (const auto& row : t.rows) {
        raw_labels.push_back(row[li]);
        std::vector<std::string> feats;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c != li) {
                feats.push_back(row[c]);
            }
        }
        out.rows.push_back(std::move(feats));
    }
    out.label_map = LabelMap::fit(raw_labels);
    out.num_classes = out.label_map.num_classes();
    for (const auto& v : raw_labels) {
        out.labels.push_back(out.label_map.id(v));
    }
    return out;
}

// ============================================================== one-hot

/// Per-column category vocabularies; unseen values encode to an all-zero block.
class OneHotEncoder {
public:
    static OneHotEncoder fit(const CategoricalTable& train) {
        OneHotEncoder enc;
        enc.vocab_.resize(train.columns.size());
        for (const auto& row : train.rows) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                enc.vocab_[c].push_back(row[c]);
            }
        }
        for (std::size_t c = 0; c < enc.vocab_.size(); ++c) {
            auto& v = enc.vocab_[c];
            std::sort(v.begin(), v.end());
            v.erase(std::unique(v.begin(), v.end()), v.end());
            if (v.empty()) {
                throw FitError("one-hot: empty vocabulary for column \"" + train.columns[c] + "\"");
            }
        }
        if (enc.vocab_.empty()) {
            throw FitError("one-hot: no feature columns");
        }
        return enc;
    }

    [[nodiscard]] std::size_t width() const {
        std::size_t w = 0;
        for (const auto& v : vocab_) {
            w += v.size();
        }
        return w;
    }

    [[nodiscard]] const std::vector<std::vector<std::string>>& vocabularies() const { return vocab_; }

    [[nodiscard]] BitVector transform_row(std::span<const std::string> row) const {
        require_same_size(row.size(), vocab_.size(), "one-hot row");
        BitVector out(width(), 0);
        std::size_t offset = 0;
        for (std::size_t c = 0; c < vocab_.size(); ++c) {
            const auto& v = vocab_[c];
            auto it = std::lower_bound(v.begin(), v.end(), row[c]);
            if (it != v.end() && *it == row[c]) {
                out[offset + static_cast<std::size_t>(it - v.begin())] = 1;
            }
            offset += v.size();
        }
        return out;
    }

    [[nodiscard]] LabeledBitDataset transform(const CategoricalTable& t) const {
        LabeledBitDataset ds{width(), {}, t.labels, t.num_classes};
        for (const auto& row : t.rows) {
            ds.samples.push_back(transform_row(row));
        }
        return ds;
    }

private:
    std::vector<std::vector<std::string>> vocab_;
};

inline LabeledBitDataset one_hot_encode(const CategoricalTable& t) {
    return OneHotEncoder::fit(t).transform(t);
}

/// Parses a table whose feature cells are 0/1 (or one-hot encodes them when asked).
inline LabeledBitDataset to_bit_dataset(const Table& t, const ColumnSchema& schema) {
    auto cat = to_categorical(t, schema.label_column);
    if (schema.one_hot) {
        return one_hot_encode(cat);
    }
    LabeledBitDataset ds;
    ds.n = cat.columns.size();
    ds.num_classes = cat.num_classes;
    ds.labels = cat.labels;
    for (std::size_t r = 0; r < cat.rows.size(); ++r) {
        BitVector b(ds.n);
        for (std::size_t c = 0; c < ds.n; ++c) {
            const auto& cell = cat.rows[r][c];
            if (cell == "0") {
                b[c] = 0;
            } else if (cell == "1") {
                b[c] = 1;
            } else {
                throw ParseError("line " + std::to_string(t.line_numbers[r]) + ": non-binary value \"" +
                                 cell + "\" in column \"" + cat.columns[c] + "\"");
            }
        }
        ds.samples.push_back(std::move(b));
    }
    ds.validate();
    return ds;
}

inline LabeledBitDataset load_bit_dataset(const std::filesystem::path& path, const ColumnSchema& schema) {
    return to_bit_dataset(read_table(path), schema);
}

inline void write_bit_dataset_csv(const LabeledBitDataset& ds, std::ostream& out) {
    for (std::size_t i = 0; i < ds.n; ++i) {
        out << 'b' << i << ',';
    }
    out << "label\n";
    for (std::size_t j = 0; j < ds.size(); ++j) {
        for (auto bit : ds.samples[j]) {
            out << static_cast<int>(bit) << ',';
        }
        out << ds.labels[j] << '\n';
    }
}

// ============================================================== continuous data

struct ContinuousDataset {
    std::size_t d = 0;
    Matrix samples; // rows are examples
    std::vector<int> labels;
    int num_classes = 2;

    [[nodiscard]] std::size_t size() const { return samples.rows(); }

    void validate() const {
        require_same_size(samples.rows(), labels.size(), "continuous samples/labels");
        require_same_size(samples.cols(), d, "continuous feature width");
        for (double v : samples.data()) {
            if (!std::isfinite(v)) {
                throw SchemaError("continuous dataset contains a non-finite entry");
            }
        }
        for (int y : labels) {
            if (y < 0 || y >= num_classes) {
                throw SchemaError("label outside class range");
            }
        }
    }

    [[nodiscard]] ContinuousDataset subset(std::span<const std::size_t> idx) const {
        ContinuousDataset out{d, Matrix(idx.size(), d), {}, num_classes};
        for (std::size_t r = 0; r < idx.size(); ++r) {
            std::copy_n(samples.row(idx[r]).begin(), d, out.samples.row(r).begin());
            out.labels.push_back(labels[idx[r]]);
        }
        return out;
    }
};

/// Binary labels carried by one low-variance direction of a random rotation.
/// The remaining d-1 directions are wide label-free noise, so the top principal
/// components (and their signs) carry no label information.
inline ContinuousDataset generate_hidden_direction(std::size_t rows, std::size_t d, std::uint64_t seed,
                                                   double noise_std = 3.0, double signal_std = 0.3) {
    if (d < 2 || rows == 0) {
        throw ConfigError("hidden_direction needs d >= 2 and rows > 0");
    }
    Rng rng = make_rng(seed, 0x41dd);
    // random orthogonal basis by Gram-Schmidt
    Matrix q(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        auto row = q.row(i);
        for (auto& v : row) {
            v = normal(rng);
        }
        for (std::size_t j = 0; j < i; ++j) {
            const auto prev = q.row(j);
            const double dot = std::inner_product(row.begin(), row.end(), prev.begin(), 0.0);
            for (std::size_t c = 0; c < d; ++c) {
                row[c] -= dot * prev[c];
            }
        }
        const double norm = std::sqrt(std::inner_product(row.begin(), row.end(), row.begin(), 0.0));
        for (auto& v : row) {
            v /= norm;
        }
    }
    ContinuousDataset out{d, Matrix(rows, d), {}, 2};
    RealVector z(d);
    for (std::size_t r = 0; r < rows; ++r) {
        const int y = static_cast<int>(r % 2);
        z[0] = (y == 1 ? 1.0 : -1.0) + normal(rng, 0.0, signal_std);
        for (std::size_t i = 1; i < d; ++i) {
            z[i] = normal(rng, 0.0, noise_std);
        }
        auto x = out.samples.row(r);
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t c = 0; c < d; ++c) {
                x[c] += z[i] * q(i, c);
            }
        }
        out.labels.push_back(y);
    }
    return out;
}

inline ContinuousDataset to_continuous(const Table& t, const std::string& label_column) {
    auto cat = to_categorical(t, label_column);
    ContinuousDataset ds{cat.columns.size(), Matrix(cat.rows.size(), cat.columns.size()), cat.labels,
                         cat.num_classes};
    for (std::size_t r = 0; r < cat.rows.size(); ++r) {
        for (std::size_t c = 0; c < ds.d; ++c) {
            auto v = detail::parse_real(cat.rows[r][c]);
            if (!v) {
                throw ParseError("line " + std::to_string(t.line_numbers[r]) + ": non-numeric value \"" +
                                 cat.rows[r][c] + "\"");
            }
            ds.samples(r, c) = *v;
        }
    }
    ds.validate();
    return ds;
}

/// Raw little-endian float32 matrix plus a `key = value` sidecar naming rows,
/// cols and a labels file (one integer class id per line).
inline ContinuousDataset load_f32_embeddings(const std::filesystem::path& sidecar) {
    std::ifstream in(sidecar);
    if (!in) {
        throw ParseError("cannot open " + sidecar.string());
    }
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = detail::trim(line);
        if (t.empty() || t[0] == '#') {
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ParseError(sidecar.string() + ":" + std::to_string(lineno) + ": expected key = value");
        }
        kv[detail::trim(t.substr(0, eq))] = detail::trim(t.substr(eq + 1));
    }
    for (const char* key : {"rows", "cols", "data", "labels"}) {
        if (!kv.count(key)) {
            throw SchemaError(sidecar.string() + ": missing key \"" + key + "\"");
        }
    }
    const auto base = sidecar.parent_path();
    const auto rows = static_cast<std::size_t>(std::stoull(kv["rows"]));
    const auto cols = static_cast<std::size_t>(std::stoull(kv["cols"]));
    std::ifstream data(base / kv["data"], std::ios::binary);
    if (!data) {
        throw ParseError("cannot open " + (base / kv["data"]).string());
    }
    std::vector<float> buf(rows * cols);
    data.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (static_cast<std::size_t>(data.gcount()) != buf.size() * sizeof(float)) {
        throw SchemaError("embedding file shorter than rows*cols float32 values");
    }
    ContinuousDataset ds{cols, Matrix(rows, cols), {}, 2};
    std::transform(buf.begin(), buf.end(), ds.samples.data().begin(),
                   [](float v) { return static_cast<double>(v); });
    std::ifstream lab(base / kv["labels"]);
    if (!lab) {
        throw ParseError("cannot open " + (base / kv["labels"]).string());
    }
    int y = 0;
    int max_label = 0;
    while (lab >> y) {
        ds.labels.push_back(y);
        max_label = std::max(max_label, y);
    }
    ds.num_classes = std::max(2, max_label + 1);
    ds.validate();
    return ds;
}

// ============================================================== binarization

enum class BinarizeMode { Sign, Median };

struct BinarizationModel {
    BinarizeMode mode = BinarizeMode::Sign;
    std::size_t bits_per_feature = 1;
    /// Per feature, 2^M - 1 ascending cut points (one threshold when M = 1).
    std::vector<std::vector<double>> cuts;

    [[nodiscard]] std::size_t input_dim() const { return cuts.size(); }
    [[nodiscard]] std::size_t output_width() const { return cuts.size() * bits_per_feature; }
};

namespace detail {

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

} // namespace detail

inline BinarizationModel fit_binarizer(const Matrix& train, BinarizeMode mode, std::size_t bits_per_feature = 1) {
    if (train.rows() == 0) {
        throw FitError("binarizer: empty training data");
    }
    if (bits_per_feature < 1 || bits_per_feature > 16) {
        throw ConfigError("binarizer: bits per feature must be in 1..16");
    }
    BinarizationModel m{mode, bits_per_feature, {}};
    const std::size_t bins = std::size_t{1} << bits_per_feature;
    std::vector<double> col(train.rows());
    for (std::size_t f = 0; f < train.cols(); ++f) {
        if (bits_per_feature == 1 && mode == BinarizeMode::Sign) {
            m.cuts.push_back({0.0});
            continue;
        }
        for (std::size_t r = 0; r < train.rows(); ++r) {
            col[r] = train(r, f);
        }
        std::sort(col.begin(), col.end());
        std::vector<double> cuts;
        for (std::size_t j = 1; j < bins; ++j) {
            cuts.push_back(detail::quantile_sorted(col, static_cast<double>(j) / static_cast<double>(bins)));
        }
        m.cuts.push_back(std::move(cuts));
    }
    return m;
}

/// Bin index = number of cuts strictly below x; written MSB-first in M bits.
inline BitVector apply_binarizer(const BinarizationModel& m, std::span<const double> x) {
    require_same_size(x.size(), m.input_dim(), "binarizer input");
    BitVector out;
    out.reserve(m.output_width());
    for (std::size_t f = 0; f < x.size(); ++f) {
        std::size_t bin = 0;
        for (double c : m.cuts[f]) {
            bin += x[f] > c;
        }
        for (std::size_t b = m.bits_per_feature; b-- > 0;) {
            out.push_back(static_cast<std::uint8_t>((bin >> b) & 1U));
        }
    }
    return out;
}

inline LabeledBitDataset binarize(const BinarizationModel& m, const ContinuousDataset& ds) {
    LabeledBitDataset out{m.output_width(), {}, ds.labels, ds.num_classes};
    for (std::size_t r = 0; r < ds.size(); ++r) {
        out.samples.push_back(apply_binarizer(m, ds.samples.row(r)));
    }
    return out;
}

// ============================================================== PCA

struct PcaModel {
    RealVector mean;
    Matrix components; // k x d, orthonormal rows
    RealVector explained_variance;

    [[nodiscard]] std::size_t k() const { return components.rows(); }
    [[nodiscard]] std::size_t d() const { return components.cols(); }
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns eigenvalues
/// and eigenvectors (as columns of `vectors`), unsorted.
inline void jacobi_eigen(Matrix a, RealVector& values, Matrix& vectors, std::size_t max_sweeps = 100) {
    const std::size_t d = a.rows();
    vectors = Matrix(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        vectors(i, i) = 1.0;
    }
    double total = 0.0;
    for (double v : a.data()) {
        total += v * v;
    }
    const double tol = 1e-30 * std::max(total, 1e-300);
    std::size_t sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                off += a(p, q) * a(p, q);
            }
        }
        if (off <= tol) {
            break;
        }
        for (std::size_t p = 0; p + 1 < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) < 1e-300) {
                    continue;
                }
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t r = 0; r < d; ++r) {
                    const double arp = a(r, p);
                    const double arq = a(r, q);
                    a(r, p) = c * arp - s * arq;
                    a(r, q) = s * arp + c * arq;
                }
                for (std::size_t r = 0; r < d; ++r) {
                    const double apr = a(p, r);
                    const double aqr = a(q, r);
                    a(p, r) = c * apr - s * aqr;
                    a(q, r) = s * apr + c * aqr;
                }
                for (std::size_t r = 0; r < d; ++r) {
                    const double vrp = vectors(r, p);
                    const double vrq = vectors(r, q);
                    vectors(r, p) = c * vrp - s * vrq;
                    vectors(r, q) = s * vrp + c * vrq;
                }
            }
        }
    }
    if (sweep == max_sweeps) {
        throw NumericalError("Jacobi eigensolve did not converge after " + std::to_string(max_sweeps) +
                             " sweeps");
    }
    values.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        values[i] = a(i, i);
    }
}

inline PcaModel fit_pca(const Matrix& train, std::size_t k) {
    const std::size_t rows = train.rows();
    const std::size_t d = train.cols();
    if (rows < 2) {
        throw FitError("PCA needs at least 2 samples");
    }
    if (k == 0 || k > d) {
        throw ConfigError("PCA: k must be in 1..d");
    }
    PcaModel m;
    m.mean.assign(d, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            m.mean[c] += train(r, c);
        }
    }
    for (auto& v : m.mean) {
        v /= static_cast<double>(rows);
    }
    Matrix cov(d, d);
    std::vector<double> centered(d);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            centered[c] = train(r, c) - m.mean[c];
        }
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = i; j < d; ++j) {
                cov(i, j) += centered[i] * centered[j];
            }
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            cov(i, j) /= static_cast<double>(rows - 1);
            cov(j, i) = cov(i, j);
        }
    }
    RealVector values;
    Matrix vectors;
    jacobi_eigen(cov, values, vectors);
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] > values[b]; });
    m.components = Matrix(k, d);
    for (std::size_t i = 0; i < k; ++i) {
        const auto col = order[i];
        // Sign convention: largest-magnitude entry positive.
        std::size_t arg = 0;
        for (std::size_t r = 1; r < d; ++r) {
            if (std::abs(vectors(r, col)) > std::abs(vectors(arg, col))) {
                arg = r;
            }
        }
        const double sgn = vectors(arg, col) < 0 ? -1.0 : 1.0;
        for (std::size_t r = 0; r < d; ++r) {
            m.components(i, r) = sgn * vectors(r, col);
        }
        m.explained_variance.push_back(values[col]);
    }
    return m;
}

inline RealVector apply_pca(const PcaModel& m, std::span<const double> x) {
    require_same_size(x.size(), m.d(), "PCA input");
    RealVector out(m.k(), 0.0);
    for (std::size_t i = 0; i < m.k(); ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < m.d(); ++c) {
            acc += m.components(i, c) * (x[c] - m.mean[c]);
        }
        out[i] = acc;
    }
    return out;
}

inline RealVector inverse_pca(const PcaModel& m, std::span<const double> z) {
    require_same_size(z.size(), m.k(), "PCA coefficients");
    RealVector out = m.mean;
    for (std::size_t i = 0; i < m.k(); ++i) {
        for (std::size_t c = 0; c < m.d(); ++c) {
            out[c] += z[i] * m.components(i, c);
        }
    }
    return out;
}

inline ContinuousDataset apply_pca(const PcaModel& m, const ContinuousDataset& ds) {
    ContinuousDataset out{m.k(), Matrix(ds.size(), m.k()), ds.labels, ds.num_classes};
    for (std::size_t r = 0; r < ds.size(); ++r) {
        auto z = apply_pca(m, ds.samples.row(r));
        std::copy(z.begin(), z.end(), out.samples.row(r).begin());
    }
    return out;
}

} // namespace qparity
