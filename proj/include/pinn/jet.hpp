#pragma once

// Truncated-Taylor scalars ("jets"): value plus derivatives up to a fixed
// order along one chosen direction. Arithmetic follows the usual power-series
// recurrences, so composing supported primitives yields directional
// derivatives exact to floating-point rounding. Jets nest: Jet<Jet<double,1>,1>
// carries one mixed second derivative.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "pinn/common.hpp"

namespace pinn {

inline constexpr double kDivGuard = 1e-300;

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log(sigmoid(x)) without underflow for large |x|.
inline double log_sigmoid(double x) {
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

inline double recip(double x) {
    if (std::abs(x) < kDivGuard) throw DomainError("division by value below machine guard");
    return 1.0 / x;
}

inline double leading(double x) { return x; }

// Dispatch helpers so the series recurrences can bottom out on double.
inline double sigmoid_of(double x) { return sigmoid(x); }
inline double log_sigmoid_of(double x) { return log_sigmoid(x); }

// Piecewise primitives use the left-branch convention at ties: max keeps its
// first argument, clip keeps the pass-through branch on the boundary.
inline double jmax(double a, double b) { return a >= b ? a : b; }
inline double clip(double x, double lo, double hi) {
    if (x < lo) return lo;
    if (x > hi) return hi;
    return x;
}

template <typename T, int K>
struct Jet {
    static_assert(K >= 1 && K <= 8);
    // c[k] is the k-th Taylor coefficient: f^(k) / k!.
    std::array<T, K + 1> c{};

    Jet() = default;
    Jet(double v) { c[0] = T(v); }  // NOLINT: implicit promotion of constants
    static Jet seeded(double v, double d1 = 1.0) {
        Jet j;
        j.c[0] = T(v);
        j.c[1] = T(d1);
        return j;
    }

    // Raw k-th derivative (Taylor coefficient times k!).
    T derivative(int k) const {
        double fact = 1.0;
        for (int i = 2; i <= k; ++i) fact *= i;
        return c[static_cast<std::size_t>(k)] * fact;
    }
};

template <typename T, int K>
double leading(const Jet<T, K>& j) {
    return leading(j.c[0]);
}

template <typename T, int K>
Jet<T, K> operator+(const Jet<T, K>& a, const Jet<T, K>& b) {
    Jet<T, K> z;
    for (int k = 0; k <= K; ++k) z.c[k] = a.c[k] + b.c[k];
    return z;
}

template <typename T, int K>
Jet<T, K> operator-(const Jet<T, K>& a, const Jet<T, K>& b) {
    Jet<T, K> z;
    for (int k = 0; k <= K; ++k) z.c[k] = a.c[k] - b.c[k];
    return z;
}

template <typename T, int K>
Jet<T, K> operator-(const Jet<T, K>& a) {
    Jet<T, K> z;
    for (int k = 0; k <= K; ++k) z.c[k] = -a.c[k];
    return z;
}

template <typename T, int K>
Jet<T, K> operator*(const Jet<T, K>& a, const Jet<T, K>& b) {
    Jet<T, K> z;
    for (int k = 0; k <= K; ++k) {
        T acc = a.c[0] * b.c[k];
        for (int j = 1; j <= k; ++j) acc = acc + a.c[j] * b.c[k - j];
        z.c[k] = acc;
    }
    return z;
}

template <typename T, int K>
Jet<T, K> operator*(const Jet<T, K>& a, double s) {
    Jet<T, K> z;
    for (int k = 0; k <= K; ++k) z.c[k] = a.c[k] * s;
    return z;
}
template <typename T, int K>
Jet<T, K> operator*(double s, const Jet<T, K>& a) {
    return a * s;
}
template <typename T, int K>
Jet<T, K> operator+(const Jet<T, K>& a, double s) {
    Jet<T, K> z = a;
    z.c[0] = z.c[0] + T(s);
    return z;
}
template <typename T, int K>
Jet<T, K> operator+(double s, const Jet<T, K>& a) {
    return a + s;
}
template <typename T, int K>
Jet<T, K> operator-(const Jet<T, K>& a, double s) {
    return a + (-s);
}
template <typename T, int K>
Jet<T, K> operator-(double s, const Jet<T, K>& a) {
    return (-a) + s;
}

template <typename T, int K>
Jet<T, K> recip(const Jet<T, K>& a) {
    if (std::abs(leading(a)) < kDivGuard) throw DomainError("division by value below machine guard");
    Jet<T, K> r;
    r.c[0] = recip(a.c[0]);
    for (int k = 1; k <= K; ++k) {
        T acc = a.c[1] * r.c[k - 1];
        for (int j = 2; j <= k; ++j) acc = acc + a.c[j] * r.c[k - j];
        r.c[k] = -(r.c[0] * acc);
    }
    return r;
}

template <typename T, int K>
Jet<T, K> operator/(const Jet<T, K>& a, const Jet<T, K>& b) {
    return a * recip(b);
}
template <typename T, int K>
Jet<T, K> operator/(const Jet<T, K>& a, double s) {
    return a * recip(s);
}
template <typename T, int K>
Jet<T, K> operator/(double s, const Jet<T, K>& a) {
    return recip(a) * s;
}

template <typename T, int K>
Jet<T, K> exp(const Jet<T, K>& a) {
    using std::exp;
    Jet<T, K> y;
    y.c[0] = exp(a.c[0]);
    for (int k = 1; k <= K; ++k) {
        T acc = (a.c[1] * 1.0) * y.c[k - 1];
        for (int j = 2; j <= k; ++j) acc = acc + (a.c[j] * static_cast<double>(j)) * y.c[k - j];
        y.c[k] = acc * (1.0 / k);
    }
    return y;
}

template <typename T, int K>
Jet<T, K> log(const Jet<T, K>& a) {
    using std::log;
    if (leading(a) < kDivGuard) throw DomainError("log of non-positive value");
    Jet<T, K> y;
    y.c[0] = log(a.c[0]);
    const T inv0 = recip(a.c[0]);
    for (int k = 1; k <= K; ++k) {
        T acc = a.c[k] * static_cast<double>(k);
        for (int j = 1; j < k; ++j) acc = acc - (y.c[j] * static_cast<double>(j)) * a.c[k - j];
        y.c[k] = inv0 * acc * (1.0 / k);
    }
    return y;
}

template <typename T, int K>
Jet<T, K> tanh(const Jet<T, K>& a) {
    using std::tanh;
    Jet<T, K> t;
    std::array<T, K + 1> s;  // sech^2 series: 1 - t^2
    t.c[0] = tanh(a.c[0]);
    s[0] = 1.0 - t.c[0] * t.c[0];
    for (int k = 1; k <= K; ++k) {
        T acc = (a.c[1] * 1.0) * s[k - 1];
        for (int j = 2; j <= k; ++j) acc = acc + (a.c[j] * static_cast<double>(j)) * s[k - j];
        t.c[k] = acc * (1.0 / k);
        T sq = t.c[0] * t.c[k];  // (t*t)_k, then s_k = -(t*t)_k
        for (int j = 1; j <= k; ++j) sq = sq + t.c[j] * t.c[k - j];
        s[k] = -sq;
    }
    return t;
}

template <typename T, int K>
Jet<T, K> sigmoid(const Jet<T, K>& a) {
    Jet<T, K> y;
    std::array<T, K + 1> w;  // y * (1 - y) series
    y.c[0] = sigmoid_of(a.c[0]);
    w[0] = y.c[0] * (1.0 - y.c[0]);
    for (int k = 1; k <= K; ++k) {
        T acc = (a.c[1] * 1.0) * w[k - 1];
        for (int j = 2; j <= k; ++j) acc = acc + (a.c[j] * static_cast<double>(j)) * w[k - j];
        y.c[k] = acc * (1.0 / k);
        T sq = y.c[0] * y.c[k] + y.c[k] * y.c[0];
        for (int j = 1; j < k; ++j) sq = sq + y.c[j] * y.c[k - j];
        w[k] = y.c[k] - sq;
    }
    return y;
}

template <typename T, int K>
Jet<T, K> log_sigmoid(const Jet<T, K>& a) {
    Jet<T, K> y;
    const Jet<T, K> s = sigmoid(-a);  // (log sigmoid)' = sigmoid(-x)
    y.c[0] = log_sigmoid_of(a.c[0]);
    for (int k = 1; k <= K; ++k) {
        T acc = (a.c[1] * 1.0) * s.c[k - 1];
        for (int j = 2; j <= k; ++j) acc = acc + (a.c[j] * static_cast<double>(j)) * s.c[k - j];
        y.c[k] = acc * (1.0 / k);
    }
    return y;
}

template <typename T, int K>
Jet<T, K> sqrt(const Jet<T, K>& a) {
    using std::sqrt;
    if (leading(a) <= 0.0) throw DomainError("sqrt of non-positive jet");
    Jet<T, K> y;
    y.c[0] = sqrt(a.c[0]);
    const T half_inv = recip(y.c[0] + y.c[0]);
    for (int k = 1; k <= K; ++k) {
        T acc = a.c[k];
        for (int j = 1; j < k; ++j) acc = acc - y.c[j] * y.c[k - j];
        y.c[k] = half_inv * acc;
    }
    return y;
}

template <typename T, int K>
void sincos_jet(const Jet<T, K>& a, Jet<T, K>& s, Jet<T, K>& c) {
    using std::cos;
    using std::sin;
    s.c[0] = sin(a.c[0]);
    c.c[0] = cos(a.c[0]);
    for (int k = 1; k <= K; ++k) {
        T accs = (a.c[1] * 1.0) * c.c[k - 1];
        T accc = (a.c[1] * 1.0) * s.c[k - 1];
        for (int j = 2; j <= k; ++j) {
            accs = accs + (a.c[j] * static_cast<double>(j)) * c.c[k - j];
            accc = accc + (a.c[j] * static_cast<double>(j)) * s.c[k - j];
        }
        s.c[k] = accs * (1.0 / k);
        c.c[k] = -accc * (1.0 / k);
    }
}

template <typename T, int K>
Jet<T, K> sin(const Jet<T, K>& a) {
    Jet<T, K> s, c;
    sincos_jet(a, s, c);
    return s;
}

template <typename T, int K>
Jet<T, K> cos(const Jet<T, K>& a) {
    Jet<T, K> s, c;
    sincos_jet(a, s, c);
    return c;
}

template <typename T, int K>
Jet<T, K> jmax(const Jet<T, K>& a, const Jet<T, K>& b) {
    return leading(a) >= leading(b) ? a : b;
}

template <typename T, int K>
Jet<T, K> clip(const Jet<T, K>& a, double lo, double hi) {
    const double v = leading(a);
    if (v < lo) return Jet<T, K>(lo);
    if (v > hi) return Jet<T, K>(hi);
    return a;
}

template <typename T, int K>
Jet<T, K> sigmoid_of(const Jet<T, K>& a) {
    return sigmoid(a);
}
template <typename T, int K>
Jet<T, K> log_sigmoid_of(const Jet<T, K>& a) {
    return log_sigmoid(a);
}

using Jet1 = Jet<double, 1>;
using Jet2 = Jet<double, 2>;
using Jet4 = Jet<double, 4>;

// Spec carrier: function value plus raw directional derivatives up to order 4.
struct JetValue {
    double value = 0.0;
    std::array<double, 4> deriv{};  // deriv[k-1] = d^k f / d t^k

    double d(int k) const { return deriv[static_cast<std::size_t>(k - 1)]; }
};

template <int K>
JetValue to_jet_value(const Jet<double, K>& j) {
    JetValue v;
    v.value = j.c[0];
    double fact = 1.0;
    for (int k = 1; k <= 4; ++k) {
        fact *= k;
        v.deriv[k - 1] = (k <= K) ? j.c[k] * fact : 0.0;
    }
    return v;
}

// Directional derivatives of a field along one coordinate axis. The field is
// any functor callable as T f(std::span<const T>) for jet scalar types.
template <typename F>
JetValue jet_eval(F&& f, std::span<const double> point, int direction, int order) {
    if (order < 1 || order > 4) throw StructuralError("jet order must be in 1..4");
    if (direction < 0 || direction >= static_cast<int>(point.size()))
        throw StructuralError("direction index out of range");
    std::vector<Jet4> coords(point.size());
    for (std::size_t i = 0; i < point.size(); ++i)
        coords[i] = (static_cast<int>(i) == direction) ? Jet4::seeded(point[i]) : Jet4(point[i]);
    Jet4 out = f(std::span<const Jet4>(coords));
    return to_jet_value(out);
}

// Taylor coefficients (value + c1..cK) along one axis; K chosen at compile time.
template <int K, typename F>
std::array<double, K + 1> jet_coeffs(F&& f, std::span<const double> point, int direction) {
    std::vector<Jet<double, K>> coords(point.size());
    for (std::size_t i = 0; i < point.size(); ++i)
        coords[i] = (static_cast<int>(i) == direction) ? Jet<double, K>::seeded(point[i])
                                                       : Jet<double, K>(point[i]);
    Jet<double, K> out = f(std::span<const Jet<double, K>>(coords));
    std::array<double, K + 1> c{};
    for (int k = 0; k <= K; ++k) c[k] = out.c[k];
    return c;
}

// Mixed / single directional derivative: one direction gives d f / d x_d,
// two directions give the mixed second derivative via nested jets.
template <typename F>
double mixed_jet(F&& f, std::span<const double> point, std::span<const int> directions) {
    if (directions.empty() || directions.size() > 2)
        throw StructuralError("mixed_jet supports 1 or 2 directions");
    if (directions.size() == 1) {
        std::vector<Jet1> coords(point.size());
        for (std::size_t i = 0; i < point.size(); ++i)
            coords[i] = (static_cast<int>(i) == directions[0]) ? Jet1::seeded(point[i])
                                                               : Jet1(point[i]);
        return f(std::span<const Jet1>(coords)).c[1];
    }
    using J2 = Jet<Jet1, 1>;
    std::vector<J2> coords(point.size());
    for (std::size_t i = 0; i < point.size(); ++i) {
        J2 j;
        j.c[0] = (static_cast<int>(i) == directions[1]) ? Jet1::seeded(point[i]) : Jet1(point[i]);
        j.c[1] = (static_cast<int>(i) == directions[0]) ? Jet1(1.0) : Jet1(0.0);
        coords[i] = j;
    }
    return f(std::span<const J2>(coords)).c[1].c[1];
}

}  // namespace pinn
