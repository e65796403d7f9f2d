#pragma once

// Independent reference computations. Nothing here calls into the library's
// numeric kernels: circuits are built as dense Kronecker-product unitaries,
// kernels as explicit Gram matrices, features by direct formula.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using cd = std::complex<double>;

inline const double pi = std::acos(-1.0);

inline CMat ry(double t) {
    CMat m(2, 2);
    m << std::cos(t / 2), -std::sin(t / 2), std::sin(t / 2), std::cos(t / 2);
    return m;
}

inline CMat rz(double t) {
    CMat m = CMat::Zero(2, 2);
    m(0, 0) = std::exp(cd(0, -t / 2));
    m(1, 1) = std::exp(cd(0, t / 2));
    return m;
}

inline CMat kron(const CMat& a, const CMat& b) {
    CMat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

// single-qubit gate g on qubit q of n; qubit i carries index weight 2^i, so
// the full operator is I x .. x g x .. x I with qubit 0 rightmost
inline CMat lift(const CMat& g, std::size_t q, std::size_t n) {
    CMat out = CMat::Identity(1, 1);
    for (std::size_t i = n; i-- > 0;) {
        out = kron(out, i == q ? g : CMat::Identity(2, 2));
    }
    return out;
}

inline CMat cnot(std::size_t c, std::size_t t, std::size_t n) {
    const std::size_t dim = std::size_t{1} << n;
    CMat m = CMat::Zero(dim, dim);
    for (std::size_t b = 0; b < dim; ++b) {
        const std::size_t out = ((b >> c) & 1) ? b ^ (std::size_t{1} << t) : b;
        m(out, b) = 1.0;
    }
    return m;
}

inline CMat ansatz_unitary(std::size_t n, std::size_t layers, const std::vector<double>& theta) {
    const std::size_t dim = std::size_t{1} << n;
    CMat u = CMat::Identity(dim, dim);
    for (std::size_t l = 0; l < layers; ++l) {
        for (std::size_t q = 0; q < n; ++q) {
            u = lift(ry(theta[2 * n * l + q]), q, n) * u;
        }
        for (std::size_t q = 0; q < n; ++q) {
            u = lift(rz(theta[2 * n * l + n + q]), q, n) * u;
        }
        if (n > 1) {
            for (std::size_t q = 0; q < n; ++q) {
                u = cnot(q, (q + 1) % n, n) * u;
            }
        }
    }
    return u;
}

inline std::vector<double> born(const CVec& psi) {
    std::vector<double> p(static_cast<std::size_t>(psi.size()));
    for (Eigen::Index i = 0; i < psi.size(); ++i) {
        p[static_cast<std::size_t>(i)] = std::norm(psi(i));
    }
    return p;
}

inline CVec basis(std::size_t index, std::size_t n) {
    CVec v = CVec::Zero(static_cast<Eigen::Index>(std::size_t{1} << n));
    v(static_cast<Eigen::Index>(index)) = 1.0;
    return v;
}

inline int popcount_and(const std::vector<std::uint8_t>& s, const std::vector<std::uint8_t>& b) {
    int c = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        c += s[i] & b[i];
    }
    return c;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double soft_parity(const std::vector<double>& l, double tau, const std::vector<std::uint8_t>& b) {
    double v = 1.0;
    for (std::size_t i = 0; i < l.size(); ++i) {
        v *= std::cos(pi * sigmoid(tau * l[i]) * b[i]);
    }
    return v;
}

// explicit Gram matrix, k(a,b) = exp(-hamming(a,b)/h)
inline double mmd(const std::vector<double>& p, const std::vector<double>& q, std::size_t n, double h) {
    const std::size_t dim = std::size_t{1} << n;
    Eigen::MatrixXd k(dim, dim);
    for (std::size_t a = 0; a < dim; ++a) {
        for (std::size_t b = 0; b < dim; ++b) {
            k(a, b) = std::exp(-static_cast<double>(__builtin_popcountll(a ^ b)) / h);
        }
    }
    Eigen::VectorXd d(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        d(i) = p[i] - q[i];
    }
    return d.dot(k * d);
}

inline double log_softmax_nll(const std::vector<double>& logits, int y) {
    double z = 0.0;
    for (double v : logits) {
        z += std::exp(v);
    }
    return -(logits[y] - std::log(z));
}

// central differences, one coordinate at a time
inline std::vector<double> fd_grad(const std::function<double(const std::vector<double>&)>& f,
                                   std::vector<double> x, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double fp = f(x);
        x[i] = keep - h;
        const double fm = f(x);
        x[i] = keep;
        g[i] = (fp - fm) / (2 * h);
    }
    return g;
}

// norm-wise relative error, with an absolute floor for vanishing gradients
inline double rel_err(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-3) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), floor);
}

} // namespace oracle
