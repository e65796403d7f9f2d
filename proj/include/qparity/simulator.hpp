#pragma once

// Dense state-vector simulation of the layered RY/RZ + CNOT-ring ansatz.
//
// Convention: bit i of a data vector <-> qubit i <-> basis-index weight 2^i
// (little-endian). Gates act in place with stride-2^q sweeps.

#include <algorithm>
#include <complex>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <vector>

#include "qparity/core.hpp"
#include "qparity/parity.hpp"

#define QPARITY_HAS_SIMULATOR 1

namespace qparity {

inline constexpr std::size_t kMaxQubits = 20;

using Complex = std::complex<double>;

class StateVector {
public:
    StateVector() = default;

    /// |0...0> on n qubits.
    explicit StateVector(std::size_t n_qubits) : n_(n_qubits) {
        if (n_qubits > kMaxQubits) {
            throw CapacityError("state vector: " + std::to_string(n_qubits) + " qubits exceeds the limit of " +
                                std::to_string(kMaxQubits));
        }
        amps_.assign(std::size_t{1} << n_qubits, Complex{0.0, 0.0});
        amps_[0] = 1.0;
    }

    [[nodiscard]] std::size_t num_qubits() const { return n_; }
    [[nodiscard]] std::size_t dim() const { return amps_.size(); }
    std::vector<Complex>& amplitudes() { return amps_; }
    [[nodiscard]] const std::vector<Complex>& amplitudes() const { return amps_; }
    Complex& operator[](std::size_t i) { return amps_[i]; }
    Complex operator[](std::size_t i) const { return amps_[i]; }

    [[nodiscard]] double norm_squared() const {
        double s = 0.0;
        for (const auto& a : amps_) {
            s += std::norm(a);
        }
        return s;
    }

    void dump(std::ostream& out) const {
        out.precision(17);
        for (std::size_t i = 0; i < amps_.size(); ++i) {
            out << i << ' ' << amps_[i].real() << ' ' << amps_[i].imag() << '\n';
        }
    }

private:
    std::size_t n_ = 0;
    std::vector<Complex> amps_;
};

// ============================================================== state prep

inline StateVector basis_state(std::span<const std::uint8_t> b) {
    StateVector s(b.size());
    s[0] = 0.0;
    s[bits_to_index(b)] = 1.0;
    return s;
}

/// Zero-pads x to 2^n entries and normalizes.
inline StateVector amplitude_encode(std::span<const double> x, std::size_t n_qubits) {
    StateVector s(n_qubits);
    if (x.size() > s.dim()) {
        throw DimensionError("amplitude_encode: input length " + std::to_string(x.size()) + " exceeds 2^" +
                             std::to_string(n_qubits));
    }
    double nrm = 0.0;
    for (double v : x) {
        nrm += v * v;
    }
    if (!(nrm > 0.0)) {
        throw Error("amplitude_encode: cannot encode an all-zero vector");
    }
    nrm = std::sqrt(nrm);
    s[0] = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        s[i] = x[i] / nrm;
    }
    return s;
}

// ============================================================== gate kernels

namespace gates {

template <class Fn>
inline void for_each_pair(std::vector<Complex>& a, std::size_t q, Fn&& fn) {
    const std::size_t stride = std::size_t{1} << q;
    const std::size_t dim = a.size();
    for (std::size_t base = 0; base < dim; base += 2 * stride) {
        for (std::size_t i = base; i < base + stride; ++i) {
            fn(a[i], a[i + stride]);
        }
    }
}

inline void ry(StateVector& s, std::size_t q, double theta) {
    const double c = std::cos(theta / 2);
    const double sn = std::sin(theta / 2);
    for_each_pair(s.amplitudes(), q, [c, sn](Complex& a0, Complex& a1) {
        const Complex x0 = a0;
        const Complex x1 = a1;
        a0 = c * x0 - sn * x1;
        a1 = sn * x0 + c * x1;
    });
}

inline void rz(StateVector& s, std::size_t q, double theta) {
    const Complex p0 = std::polar(1.0, -theta / 2);
    const Complex p1 = std::polar(1.0, theta / 2);
    for_each_pair(s.amplitudes(), q, [p0, p1](Complex& a0, Complex& a1) {
        a0 *= p0;
        a1 *= p1;
    });
}

inline void cnot(StateVector& s, std::size_t control, std::size_t target) {
    const std::size_t cmask = std::size_t{1} << control;
    const std::size_t tmask = std::size_t{1} << target;
    auto& a = s.amplitudes();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if ((i & cmask) && !(i & tmask)) {
            std::swap(a[i], a[i | tmask]);
        }
    }
}

/// Pauli-Y on qubit q (used as a rotation generator).
inline void pauli_y(StateVector& s, std::size_t q) {
    for_each_pair(s.amplitudes(), q, [](Complex& a0, Complex& a1) {
        const Complex x0 = a0;
        a0 = Complex(0, -1) * a1;
        a1 = Complex(0, 1) * x0;
    });
}

inline void pauli_z(StateVector& s, std::size_t q) {
    for_each_pair(s.amplitudes(), q, [](Complex&, Complex& a1) { a1 = -a1; });
}

} // namespace gates

// ============================================================== ansatz

enum class GateKind { RY, RZ, CNOT };

struct Gate {
    GateKind kind;
    std::size_t q0; // target for rotations, control for CNOT
    std::size_t q1; // CNOT target
    std::size_t param; // rotation parameter index
};

/// Hardware-efficient ansatz: per layer RY on every qubit, RZ on every qubit,
/// then CNOT(i -> i+1 mod n) for each i. 2*n*L parameters.
class Ansatz {
public:
    Ansatz() = default;
    Ansatz(std::size_t n_qubits, std::size_t layers) : n_(n_qubits), layers_(layers) {
        if (n_qubits > kMaxQubits) {
            throw CapacityError("ansatz: too many qubits");
        }
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t off = 2 * n_ * l;
            for (std::size_t q = 0; q < n_; ++q) {
                plan_.push_back({GateKind::RY, q, 0, off + q});
            }
            for (std::size_t q = 0; q < n_; ++q) {
                plan_.push_back({GateKind::RZ, q, 0, off + n_ + q});
            }
            if (n_ > 1) {
                for (std::size_t q = 0; q < n_; ++q) {
                    plan_.push_back({GateKind::CNOT, q, (q + 1) % n_, 0});
                }
            }
        }
    }

    [[nodiscard]] std::size_t num_qubits() const { return n_; }
    [[nodiscard]] std::size_t layers() const { return layers_; }
    [[nodiscard]] std::size_t num_params() const { return 2 * n_ * layers_; }
    [[nodiscard]] const std::vector<Gate>& plan() const { return plan_; }

    void check(std::span<const double> theta) const {
        if (theta.size() != num_params()) {
            throw DimensionError("ansatz expects " + std::to_string(num_params()) + " parameters, got " +
                                 std::to_string(theta.size()));
        }
    }

private:
    std::size_t n_ = 0;
    std::size_t layers_ = 0;
    std::vector<Gate> plan_;
};

inline void apply_gate(StateVector& s, const Gate& g, std::span<const double> theta, bool inverse = false) {
    switch (g.kind) {
    case GateKind::RY:
        gates::ry(s, g.q0, inverse ? -theta[g.param] : theta[g.param]);
        break;
    case GateKind::RZ:
        gates::rz(s, g.q0, inverse ? -theta[g.param] : theta[g.param]);
        break;
    case GateKind::CNOT:
        gates::cnot(s, g.q0, g.q1);
        break;
    }
}

inline void apply_ansatz_inplace(StateVector& s, const Ansatz& ansatz, std::span<const double> theta) {
    ansatz.check(theta);
    require_same_size(s.num_qubits(), ansatz.num_qubits(), "ansatz/state qubits");
    for (const auto& g : ansatz.plan()) {
        apply_gate(s, g, theta);
    }
}

inline StateVector apply_ansatz(StateVector s, const Ansatz& ansatz, std::span<const double> theta) {
    apply_ansatz_inplace(s, ansatz, theta);
    return s;
}

// ============================================================== observables

/// Product-form diagonal observable: qubit i contributes value0[i] at bit 0
/// and value1[i] at bit 1.
struct DiagonalObservable {
    RealVector value0;
    RealVector value1;

    [[nodiscard]] std::size_t num_qubits() const { return value0.size(); }

    static DiagonalObservable hard(const ParityWord& w) {
        DiagonalObservable o{RealVector(w.size(), 1.0), RealVector(w.size(), 1.0)};
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (w.bits[i]) {
                o.value1[i] = -1.0;
            }
        }
        return o;
    }

    /// cos(pi * sigmoid(tau*l)) at bit 1; `linear` uses 1 - 2*sigmoid instead.
    static DiagonalObservable soft(std::span<const double> logit_row, double tau, bool linear = false) {
        DiagonalObservable o{RealVector(logit_row.size(), 1.0), RealVector(logit_row.size(), 1.0)};
        for (std::size_t i = 0; i < logit_row.size(); ++i) {
            const double p = sigmoid(tau * logit_row[i]);
            o.value1[i] = linear ? 1.0 - 2.0 * p : std::cos(kPi * p);
        }
        return o;
    }

    /// Dense diagonal over all 2^n basis states.
    [[nodiscard]] RealVector diagonal() const {
        RealVector v{1.0};
        for (std::size_t i = 0; i < num_qubits(); ++i) {
            const std::size_t half = v.size();
            v.resize(2 * half);
            for (std::size_t j = 0; j < half; ++j) {
                v[j + half] = v[j] * value1[i];
                v[j] *= value0[i];
            }
        }
        return v;
    }
};

inline RealVector born_probabilities(const StateVector& s) {
    RealVector p(s.dim());
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::norm(s[i]);
    }
    return p;
}

/// sum_b probs_b * prod_i entry_i(b_i), contracted qubit by qubit.
inline double expect_diagonal(std::span<const double> probs, const DiagonalObservable& obs) {
    const std::size_t n = obs.num_qubits();
    require_same_size(probs.size(), std::size_t{1} << n, "expect_diagonal");
    RealVector t(probs.begin(), probs.end());
    std::size_t size = t.size();
    for (std::size_t i = 0; i < n; ++i) {
        size /= 2;
        for (std::size_t j = 0; j < size; ++j) {
            t[j] = obs.value0[i] * t[2 * j] + obs.value1[i] * t[2 * j + 1];
        }
    }
    return t[0];
}

inline double expect_diagonal(const StateVector& s, const DiagonalObservable& obs) {
    require_same_size(s.num_qubits(), obs.num_qubits(), "expect_diagonal qubits");
    return expect_diagonal(born_probabilities(s), obs);
}

/// Expectation plus d/d value1[i] for every qubit, in O(2^n).
inline double expect_diagonal_grad(std::span<const double> probs, const DiagonalObservable& obs,
                                   std::span<double> d_value1) {
    const std::size_t n = obs.num_qubits();
    require_same_size(probs.size(), std::size_t{1} << n, "expect_diagonal_grad");
    require_same_size(d_value1.size(), n, "expect_diagonal_grad output");
    RealVector t(probs.begin(), probs.end());
    RealVector scratch(probs.size() / 2 + 1);
    std::size_t size = t.size();
    for (std::size_t i = 0; i < n; ++i) {
        // odd entries of the current partial tensor, contracted over qubits i+1..n-1
        const std::size_t half = size / 2;
        for (std::size_t j = 0; j < half; ++j) {
            scratch[j] = t[2 * j + 1];
        }
        std::size_t sz = half;
        for (std::size_t r = i + 1; r < n; ++r) {
            sz /= 2;
            for (std::size_t j = 0; j < sz; ++j) {
                scratch[j] = obs.value0[r] * scratch[2 * j] + obs.value1[r] * scratch[2 * j + 1];
            }
        }
        d_value1[i] = scratch[0];
        for (std::size_t j = 0; j < half; ++j) {
            t[j] = obs.value0[i] * t[2 * j] + obs.value1[i] * t[2 * j + 1];
        }
        size = half;
    }
    return t[0];
}

// ============================================================== sampling

inline std::vector<BitVector> sample_bitstrings(const StateVector& s, std::size_t m, std::uint64_t seed) {
    const auto p = born_probabilities(s);
    RealVector cdf(p.size());
    std::partial_sum(p.begin(), p.end(), cdf.begin());
    Rng rng = make_rng(seed, 0xb0);
    std::vector<BitVector> out;
    out.reserve(m);
    for (std::size_t k = 0; k < m; ++k) {
        const double u = uniform01(rng) * cdf.back();
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        auto idx = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(),
                                                                    static_cast<std::ptrdiff_t>(cdf.size()) - 1));
        out.push_back(index_to_bits(idx, s.num_qubits()));
    }
    return out;
}

// ============================================================== gradients

using ThetaFunction = std::function<double(std::span<const double>)>;

/// Two-term shift rule for objectives linear in circuit expectations:
/// g_j = [f(theta + pi/2 e_j) - f(theta - pi/2 e_j)] / 2.
inline RealVector param_shift_grad(const ThetaFunction& objective, std::span<const double> theta) {
    RealVector shifted(theta.begin(), theta.end());
    RealVector grad(theta.size());
    for (std::size_t j = 0; j < theta.size(); ++j) {
        shifted[j] = theta[j] + kPi / 2;
        const double plus = objective(shifted);
        shifted[j] = theta[j] - kPi / 2;
        const double minus = objective(shifted);
        shifted[j] = theta[j];
        grad[j] = 0.5 * (plus - minus);
    }
    return grad;
}

/// Chain rule for a loss over Born probabilities: given dL/dp at theta,
/// returns dL/dtheta via shifted probability vectors.
inline RealVector param_shift_grad_probs(const StateVector& initial, const Ansatz& ansatz,
                                         std::span<const double> theta, std::span<const double> dloss_dprobs) {
    require_same_size(dloss_dprobs.size(), initial.dim(), "dL/dp");
    auto linearized = [&](std::span<const double> th) {
        const auto p = born_probabilities(apply_ansatz(initial, ansatz, th));
        double acc = 0.0;
        for (std::size_t b = 0; b < p.size(); ++b) {
            acc += dloss_dprobs[b] * p[b];
        }
        return acc;
    };
    return param_shift_grad(linearized, theta);
}

/// Reverse-mode (adjoint) gradient of <phi|O|phi> with phi = U(theta)|initial>
/// and O diagonal. Returns the expectation; fills grad.
inline double adjoint_expectation_grad(const StateVector& initial, const Ansatz& ansatz,
                                       std::span<const double> theta, std::span<const double> diag,
                                       std::span<double> grad, StateVector* final_state = nullptr) {
    ansatz.check(theta);
    require_same_size(diag.size(), initial.dim(), "adjoint observable");
    require_same_size(grad.size(), theta.size(), "adjoint gradient");
    StateVector phi = apply_ansatz(initial, ansatz, theta);
    if (final_state) {
        *final_state = phi;
    }
    StateVector lambda = phi;
    double value = 0.0;
    for (std::size_t b = 0; b < phi.dim(); ++b) {
        value += diag[b] * std::norm(phi[b]);
        lambda[b] *= diag[b];
    }
    StateVector mu(phi.num_qubits());
    const auto& plan = ansatz.plan();
    for (std::size_t g = plan.size(); g-- > 0;) {
        const Gate& gate = plan[g];
        if (gate.kind != GateKind::CNOT) {
            mu = phi;
            if (gate.kind == GateKind::RY) {
                gates::pauli_y(mu, gate.q0);
            } else {
                gates::pauli_z(mu, gate.q0);
            }
            Complex inner{0.0, 0.0};
            for (std::size_t b = 0; b < mu.dim(); ++b) {
                inner += std::conj(lambda[b]) * mu[b];
            }
            // d/dtheta = 2 Re<lambda| (-i/2) G phi> = Im<lambda|G phi>
            grad[gate.param] = inner.imag();
        }
        apply_gate(phi, gate, theta, true);
        apply_gate(lambda, gate, theta, true);
    }
    return value;
}

} // namespace qparity
