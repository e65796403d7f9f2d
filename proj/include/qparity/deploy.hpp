#pragma once

// The deployable parity classifier: hard words plus a linear head. Evaluation
// uses only bit operations, popcounts and a K-term dot product; this header
// deliberately depends on nothing but core and parity.

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qparity/core.hpp"
#include "qparity/parity.hpp"

namespace qparity {

/// C x K weights and C biases. For C = 2 the readout is the sign of
/// (logit_1 - logit_0) with sign(0) -> class 1; for C > 2 it is argmax with
/// ties going to the lowest index.
struct LinearHead {
    Matrix weights;
    RealVector bias;

    LinearHead() = default;
    LinearHead(std::size_t classes, std::size_t features) : weights(classes, features), bias(classes, 0.0) {}

    [[nodiscard]] std::size_t num_classes() const { return weights.rows(); }
    [[nodiscard]] std::size_t num_features() const { return weights.cols(); }

    [[nodiscard]] RealVector logits(std::span<const double> f) const {
        require_same_size(f.size(), num_features(), "linear head features");
        RealVector out(bias);
        for (std::size_t c = 0; c < num_classes(); ++c) {
            auto w = weights.row(c);
            double acc = 0.0;
            for (std::size_t k = 0; k < f.size(); ++k) {
                acc += w[k] * f[k];
            }
            out[c] += acc;
        }
        return out;
    }

    [[nodiscard]] int predict(std::span<const double> f) const { return readout(logits(f)); }

    [[nodiscard]] static int readout(std::span<const double> logits) {
        if (logits.size() == 2) {
            return logits[1] - logits[0] >= 0.0 ? 1 : 0;
        }
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.size(); ++c) {
            if (logits[c] > logits[best]) {
                best = c;
            }
        }
        return static_cast<int>(best);
    }

    [[nodiscard]] static std::vector<int> readout_all(const Matrix& logits) {
        std::vector<int> out(logits.rows());
        for (std::size_t j = 0; j < logits.rows(); ++j) {
            out[j] = readout(logits.row(j));
        }
        return out;
    }

    [[nodiscard]] std::vector<int> predict_all(const Matrix& features) const {
        std::vector<int> out(features.rows());
        for (std::size_t j = 0; j < features.rows(); ++j) {
            out[j] = predict(features.row(j));
        }
        return out;
    }

    /// Binary-form weight of feature k: w_{1,k} - w_{0,k} (C = 2), else the
    /// largest |w_{c,k}|.
    [[nodiscard]] double feature_magnitude(std::size_t k) const {
        if (num_classes() == 2) {
            return std::abs(weights(1, k) - weights(0, k));
        }
        double m = 0.0;
        for (std::size_t c = 0; c < num_classes(); ++c) {
            m = std::max(m, std::abs(weights(c, k)));
        }
        return m;
    }

    void validate() const {
        require_same_size(bias.size(), weights.rows(), "linear head bias");
        for (double v : weights.data()) {
            if (!std::isfinite(v)) {
                throw NumericalError("linear head: non-finite weight");
            }
        }
    }
};

inline double accuracy(std::span<const int> predicted, std::span<const int> labels) {
    require_same_size(predicted.size(), labels.size(), "accuracy");
    if (labels.empty()) {
        return 0.0;
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        hits += predicted[i] == labels[i];
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

/// Parity features on real-valued inputs, prod_{i in s} cos(pi x_i); equal to
/// the hard parity whenever x lies on {0,1}^n.
inline RealVector parity_features_real(std::span<const ParityWord> words, std::span<const double> x) {
    RealVector f(words.size());
    for (std::size_t k = 0; k < words.size(); ++k) {
        require_same_size(words[k].size(), x.size(), "parity word width");
        double v = 1.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (words[k].bits[i] && x[i] != 0.0) {
                v *= std::cos(kPi * x[i]);
            }
        }
        f[k] = v;
    }
    return f;
}

inline constexpr std::string_view kDeployedFormatVersion = "v1";

struct DeployedParityClassifier {
    std::size_t n = 0;
    std::vector<ParityWord> words;
    LinearHead head;
    std::optional<double> grid_step; // rounding defense applied by predict_real

    void validate() const {
        for (const auto& w : words) {
            require_same_size(w.size(), n, "deployed word width");
        }
        require_same_size(head.num_features(), words.size(), "deployed head/word count");
        head.validate();
    }

    [[nodiscard]] RealVector features(std::span<const std::uint8_t> b) const {
        require_same_size(b.size(), n, "deployed classifier input");
        RealVector f(words.size());
        for (std::size_t k = 0; k < words.size(); ++k) {
            f[k] = hard_parity(words[k], b);
        }
        return f;
    }

    [[nodiscard]] int predict(std::span<const std::uint8_t> b) const { return head.predict(features(b)); }

    /// Real-valued input: rounds to the grid first when a grid step is set
    /// (clamped to {0,1} for step 1), otherwise evaluates the cosine extension.
    [[nodiscard]] int predict_real(std::span<const double> x) const {
        require_same_size(x.size(), n, "deployed classifier input");
        if (grid_step) {
            BitVector b(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double r = std::floor(x[i] / *grid_step + 0.5) * *grid_step;
                b[i] = r >= 0.5;
            }
            return predict(b);
        }
        return head.predict(parity_features_real(words, x));
    }

    [[nodiscard]] std::vector<int> predict_all(const std::vector<BitVector>& samples) const {
        std::vector<int> out;
        out.reserve(samples.size());
        for (const auto& b : samples) {
            out.push_back(predict(b));
        }
        return out;
    }

    /// Text format: `parity-clf v1 n=<n> K=<K> C=<C>`, K lines of
    /// `<word> <w_0> ... <w_{C-1}>`, then `bias <b_0> ... <b_{C-1}>`.
    void save(std::ostream& out) const {
        validate();
        const auto C = head.num_classes();
        out << "parity-clf " << kDeployedFormatVersion << " n=" << n << " K=" << words.size() << " C=" << C << '\n';
        out << std::setprecision(std::numeric_limits<double>::max_digits10);
        for (std::size_t k = 0; k < words.size(); ++k) {
            out << words[k].str();
            for (std::size_t c = 0; c < C; ++c) {
                out << ' ' << head.weights(c, k);
            }
            out << '\n';
        }
        out << "bias";
        for (double b : head.bias) {
            out << ' ' << b;
        }
        out << '\n';
    }

    static DeployedParityClassifier load(std::istream& in) {
        std::string line;
        if (!std::getline(in, line)) {
            throw ParseError("deployed classifier: empty input");
        }
        std::istringstream hdr(line);
        std::string magic, version, nf, kf, cf;
        hdr >> magic >> version >> nf >> kf >> cf;
        if (magic != "parity-clf" || version != kDeployedFormatVersion) {
            throw ParseError("deployed classifier: unsupported header \"" + line + "\"");
        }
        auto field = [&](const std::string& tok, const char* key) -> std::size_t {
            const std::string prefix = std::string(key) + "=";
            if (tok.rfind(prefix, 0) != 0) {
                throw ParseError("deployed classifier: expected " + prefix + " in header");
            }
            return static_cast<std::size_t>(std::stoull(tok.substr(prefix.size())));
        };
        DeployedParityClassifier clf;
        clf.n = field(nf, "n");
        const auto K = field(kf, "K");
        const auto C = field(cf, "C");
        clf.head = LinearHead(C, K);
        for (std::size_t k = 0; k < K; ++k) {
            if (!std::getline(in, line)) {
                throw ParseError("deployed classifier: expected " + std::to_string(K) + " word lines");
            }
            std::istringstream row(line);
            std::string word;
            row >> word;
            clf.words.push_back(ParityWord::from_string(word));
            for (std::size_t c = 0; c < C; ++c) {
                if (!(row >> clf.head.weights(c, k))) {
                    throw ParseError("deployed classifier: short weight row " + std::to_string(k + 2));
                }
            }
        }
        if (!std::getline(in, line)) {
            throw ParseError("deployed classifier: missing bias line");
        }
        std::istringstream row(line);
        std::string tag;
        row >> tag;
        if (tag != "bias") {
            throw ParseError("deployed classifier: expected bias line");
        }
        for (std::size_t c = 0; c < C; ++c) {
            if (!(row >> clf.head.bias[c])) {
                throw ParseError("deployed classifier: short bias line");
            }
        }
        clf.validate();
        return clf;
    }
};

} // namespace qparity
