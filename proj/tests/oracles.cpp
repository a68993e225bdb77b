#include "oracles.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

namespace oracle {

double round_to_bits(double x, int exp_bits, int mant_bits) {
    const uint64_t bits = std::bit_cast<uint64_t>(x);
    const uint64_t sign = bits >> 63;
    const int64_t eraw = static_cast<int64_t>((bits >> 52) & 0x7FFull);
    const uint64_t frac = bits & 0xFFFFFFFFFFFFFull;

    if (eraw == 0x7FF) return x;  // inf / NaN pass through

    const int bias_t = (1 << (exp_bits - 1)) - 1;
    const int emax_t = bias_t;
    const int emin_t = 1 - bias_t;

    // Normalize to value = sig * 2^(E - 52) with bit 52 of sig set.
    uint64_t sig;
    int E;
    if (eraw == 0) {
        if (frac == 0) return x;  // signed zero
        int hb = 63 - std::countl_zero(frac);
        const int up = 52 - hb;
        sig = frac << up;
        E = -1022 - up;
    } else {
        sig = (1ull << 52) | frac;
        E = static_cast<int>(eraw) - 1023;
    }

    int shift = 52 - mant_bits;
    if (E < emin_t) shift += emin_t - E;
    if (shift > 63) return sign ? -0.0 : 0.0;  // far below half the min subnormal

    uint64_t kept = sig >> shift;
    if (shift > 0) {
        const uint64_t rem = sig & ((1ull << shift) - 1);
        const uint64_t half = 1ull << (shift - 1);
        if (rem > half || (rem == half && (kept & 1ull))) kept += 1;
    }

    int e_out = E < emin_t ? emin_t : E;
    if (kept >= (2ull << mant_bits)) {  // rounding carried into the next binade
        kept >>= 1;
        e_out += 1;
    }
    if (kept == 0) return sign ? -0.0 : 0.0;
    if (e_out > emax_t) {
        return sign ? -std::numeric_limits<double>::infinity()
                    : std::numeric_limits<double>::infinity();
    }
    const double mag = std::ldexp(static_cast<double>(kept), e_out - mant_bits);
    return sign ? -mag : mag;
}

double round_to(double x, mgua::PrecisionLevel level) {
    switch (level) {
        case mgua::PrecisionLevel::FP64: return x;
        case mgua::PrecisionLevel::FP32: return round_to_bits(x, 8, 23);
        case mgua::PrecisionLevel::BF16: return round_to_bits(x, 8, 7);
        case mgua::PrecisionLevel::FP16: return round_to_bits(x, 5, 10);
    }
    return x;
}

std::vector<double> hestenes_svd(const std::vector<double>& a, int rows, int cols) {
    std::vector<double> u = a;  // column-rotated copy, row-major rows x cols
    auto at = [&](int r, int c) -> double& { return u[static_cast<size_t>(r * cols + c)]; };

    for (int sweep = 0; sweep < 60; ++sweep) {
        bool converged = true;
        for (int i = 0; i < cols - 1; ++i) {
            for (int j = i + 1; j < cols; ++j) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (int r = 0; r < rows; ++r) {
                    alpha += at(r, i) * at(r, i);
                    beta += at(r, j) * at(r, j);
                    gamma += at(r, i) * at(r, j);
                }
                if (std::fabs(gamma) <= 1e-300 ||
                    std::fabs(gamma) <= 1e-16 * std::sqrt(alpha * beta)) {
                    continue;
                }
                converged = false;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int r = 0; r < rows; ++r) {
                    const double vi = at(r, i);
                    const double vj = at(r, j);
                    at(r, i) = c * vi - s * vj;
                    at(r, j) = s * vi + c * vj;
                }
            }
        }
        if (converged) break;
    }

    std::vector<double> sigma(static_cast<size_t>(cols));
    for (int c = 0; c < cols; ++c) {
        double norm2 = 0.0;
        for (int r = 0; r < rows; ++r) norm2 += at(r, c) * at(r, c);
        sigma[static_cast<size_t>(c)] = std::sqrt(norm2);
    }
    std::sort(sigma.rbegin(), sigma.rend());
    return sigma;
}

std::array<double, 9> p1_stiffness_tri3(const std::array<std::array<double, 2>, 3>& p,
                                        double coeff) {
    // b_i = y_j - y_k, c_i = x_k - x_j (cyclic); A_ij = coeff (b_i b_j + c_i c_j) / (4 area).
    double b[3], c[3];
    for (int i = 0; i < 3; ++i) {
        const int j = (i + 1) % 3;
        const int k = (i + 2) % 3;
        b[i] = p[static_cast<size_t>(j)][1] - p[static_cast<size_t>(k)][1];
        c[i] = p[static_cast<size_t>(k)][0] - p[static_cast<size_t>(j)][0];
    }
    const double twice_area = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) -
                              (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    std::array<double, 9> a{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            a[static_cast<size_t>(i * 3 + j)] =
                coeff * (b[i] * b[j] + c[i] * c[j]) / (2.0 * twice_area);
        }
    }
    return a;
}

std::array<double, 16> p1_stiffness_tet4(const std::array<std::array<double, 3>, 4>& p,
                                         double coeff) {
    // Gradients of the barycentric basis via the inverse of [p1-p0 p2-p0 p3-p0].
    double m[9];
    for (int c = 0; c < 3; ++c) {
        for (int r = 0; r < 3; ++r) {
            m[r * 3 + c] = p[static_cast<size_t>(c + 1)][static_cast<size_t>(r)] -
                           p[0][static_cast<size_t>(r)];
        }
    }
    const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) -
                       m[1] * (m[3] * m[8] - m[5] * m[6]) +
                       m[2] * (m[3] * m[7] - m[4] * m[6]);
    double inv[9];
    adjugate_inverse(m, 3, inv);

    // grad N_i (i=1..3) = row i-1 of inv; grad N_0 = -(sum of the others).
    double g[4][3];
    for (int i = 1; i < 4; ++i) {
        for (int d = 0; d < 3; ++d) g[i][d] = inv[(i - 1) * 3 + d];
    }
    for (int d = 0; d < 3; ++d) g[0][d] = -(g[1][d] + g[2][d] + g[3][d]);

    const double volume = det / 6.0;
    std::array<double, 16> a{};
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            double dot = 0.0;
            for (int d = 0; d < 3; ++d) dot += g[i][d] * g[j][d];
            a[static_cast<size_t>(i * 4 + j)] = coeff * volume * dot;
        }
    }
    return a;
}

void adjugate_inverse(const double* m, int dim, double* out) {
    if (dim == 2) {
        const double det = m[0] * m[3] - m[1] * m[2];
        out[0] = m[3] / det;
        out[1] = -m[1] / det;
        out[2] = -m[2] / det;
        out[3] = m[0] / det;
        return;
    }
    const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) -
                       m[1] * (m[3] * m[8] - m[5] * m[6]) +
                       m[2] * (m[3] * m[7] - m[4] * m[6]);
    out[0] = (m[4] * m[8] - m[5] * m[7]) / det;
    out[1] = (m[2] * m[7] - m[1] * m[8]) / det;
    out[2] = (m[1] * m[5] - m[2] * m[4]) / det;
    out[3] = (m[5] * m[6] - m[3] * m[8]) / det;
    out[4] = (m[0] * m[8] - m[2] * m[6]) / det;
    out[5] = (m[2] * m[3] - m[0] * m[5]) / det;
    out[6] = (m[3] * m[7] - m[4] * m[6]) / det;
    out[7] = (m[1] * m[6] - m[0] * m[7]) / det;
    out[8] = (m[0] * m[4] - m[1] * m[3]) / det;
}

std::vector<int64_t> matmul_int(std::span<const int64_t> a, std::span<const int64_t> b,
                                int64_t rows, int64_t inner, int64_t cols) {
    std::vector<int64_t> c(static_cast<size_t>(rows * cols), 0);
    for (int64_t i = 0; i < rows; ++i) {
        for (int64_t k = 0; k < inner; ++k) {
            const int64_t av = a[static_cast<size_t>(i * inner + k)];
            for (int64_t j = 0; j < cols; ++j) {
                c[static_cast<size_t>(i * cols + j)] += av * b[static_cast<size_t>(k * cols + j)];
            }
        }
    }
    return c;
}

std::vector<double> matmul_real(std::span<const double> a, std::span<const double> b,
                                int64_t rows, int64_t inner, int64_t cols) {
    std::vector<double> c(static_cast<size_t>(rows * cols), 0.0);
    for (int64_t i = 0; i < rows; ++i) {
        for (int64_t k = 0; k < inner; ++k) {
            const double av = a[static_cast<size_t>(i * inner + k)];
            for (int64_t j = 0; j < cols; ++j) {
                c[static_cast<size_t>(i * cols + j)] += av * b[static_cast<size_t>(k * cols + j)];
            }
        }
    }
    return c;
}

int64_t* ReferenceLru::get(int64_t key) {
    for (size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].first == key) {
            const auto entry = entries_[i];
            entries_.erase(entries_.begin() + static_cast<int64_t>(i));
            entries_.insert(entries_.begin(), entry);
            return &entries_.front().second;
        }
    }
    return nullptr;
}

void ReferenceLru::put(int64_t key, int64_t value) {
    for (size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].first == key) {
            entries_.erase(entries_.begin() + static_cast<int64_t>(i));
            break;
        }
    }
    if (entries_.size() >= capacity_ && capacity_ > 0) entries_.pop_back();
    entries_.insert(entries_.begin(), {key, value});
}

std::vector<int64_t> ReferenceLru::keys() const {
    std::vector<int64_t> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double rank = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (size_t k = i; k <= j; ++k) r[order[k]] = rank;
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace oracle
