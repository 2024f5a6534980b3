// Copyright (C) 2026 MOTOR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

/// \file ot_solver.hpp
/// \brief Entropic optimal transport between two discrete distributions.
///
/// Solves  min_P <P, C> + gamma * sum_ij P_ij log P_ij  subject to P 1 = u and
/// P^T 1 = v  by Sinkhorn-Knopp scaling of the Gibbs kernel K = exp(-C/gamma):
///
///   a <- u / (K b),   b <- v / (K^T a),   P = diag(a) K diag(b)
///
/// starting from b = 1. The log-domain variant runs the identical recurrence on
/// the dual potentials f = gamma log a, g = gamma log b with log-sum-exp
/// reductions, so both variants produce the same iterates up to rounding but
/// the log-domain one survives kernels that underflow (small gamma).
///
/// The reported cost is the transport term <P, C> of the final plan; the
/// entropy term is not included.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "motor/core.hpp"
#include "motor/errors.hpp"
#include "motor/log.hpp"
#include "motor/matrix.hpp"

namespace motor {

/// Finite, non-empty transport cost matrix.
class CostMatrix {
public:
    explicit CostMatrix(Matrix entries) : entries_(std::move(entries)) {
        if (entries_.rows() == 0 || entries_.cols() == 0) {
            throw Error(ErrorKind::kDimensionMismatch,
                        fmt::format("cost matrix must be non-empty (got {}x{})", entries_.rows(), entries_.cols()));
        }
        for (double c : entries_.values()) {
            if (!std::isfinite(c)) {
                throw Error(ErrorKind::kNonFiniteInput, "cost matrix has a non-finite entry");
            }
        }
    }

    std::size_t rows() const noexcept { return entries_.rows(); }
    std::size_t cols() const noexcept { return entries_.cols(); }
    double operator()(std::size_t i, std::size_t j) const { return entries_(i, j); }
    const Matrix& matrix() const noexcept { return entries_; }

    double min() const { return *std::min_element(entries_.values().begin(), entries_.values().end()); }
    double max() const { return *std::max_element(entries_.values().begin(), entries_.values().end()); }

    /// Same matrix with `offset` added to every entry.
    CostMatrix shifted(double offset) const {
        Matrix out = entries_;
        for (double& c : out.values()) {
            c += offset;
        }
        return CostMatrix(std::move(out));
    }

private:
    Matrix entries_;
};

/// C = 1 - F for a similarity matrix F.
inline CostMatrix build_cost_matrix(const Matrix& similarity) {
    Matrix cost(similarity.rows(), similarity.cols());
    for (std::size_t i = 0; i < similarity.rows(); ++i) {
        for (std::size_t j = 0; j < similarity.cols(); ++j) {
            const double f = similarity(i, j);
            if (!std::isfinite(f)) {
                throw Error(ErrorKind::kNonFiniteInput, fmt::format("similarity ({}, {}) is not finite", i, j));
            }
            cost(i, j) = 1.0 - f;
        }
    }
    return CostMatrix(std::move(cost));
}

struct TransportPlan {
    Matrix plan;
    std::vector<double> row_marginal;
    std::vector<double> col_marginal;
    double cost = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    // max(max_i |sum_j P_ij - u_i|, max_j |sum_i P_ij - v_j|) of the returned plan
    double marginal_error = std::numeric_limits<double>::infinity();
    SinkhornMode mode_used = SinkhornMode::kPlain;
};

struct SinkhornOptions {
    double gamma = 1.0;
    std::size_t max_iters = 1000;
    double tol = 1e-6;
    SinkhornMode mode = SinkhornMode::kAuto;
};

inline std::vector<double> uniform_marginal(std::size_t n) {
    return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

inline double transport_cost(const Matrix& plan, const CostMatrix& cost) {
    double total = 0.0;
    for (std::size_t i = 0; i < plan.rows(); ++i) {
        for (std::size_t j = 0; j < plan.cols(); ++j) {
            total += plan(i, j) * cost(i, j);
        }
    }
    return total;
}

inline double max_marginal_violation(const Matrix& plan, std::span<const double> u, std::span<const double> v) {
    double err = 0.0;
    std::vector<double> col(plan.cols(), 0.0);
    for (std::size_t i = 0; i < plan.rows(); ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < plan.cols(); ++j) {
            row += plan(i, j);
            col[j] += plan(i, j);
        }
        err = std::max(err, std::abs(row - u[i]));
    }
    for (std::size_t j = 0; j < plan.cols(); ++j) {
        err = std::max(err, std::abs(col[j] - v[j]));
    }
    return err;
}

namespace detail {

inline void check_marginal(std::span<const double> m, std::size_t expected, const char* name) {
    if (m.size() != expected) {
        throw Error(ErrorKind::kInvalidMarginals,
                    fmt::format("{} has {} entries, cost matrix needs {}", name, m.size(), expected));
    }
    double sum = 0.0;
    for (double x : m) {
        if (!std::isfinite(x) || x <= 0.0) {
            throw Error(ErrorKind::kInvalidMarginals, fmt::format("{} has a nonpositive entry {}", name, x));
        }
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw Error(ErrorKind::kInvalidMarginals, fmt::format("{} sums to {}, expected 1", name, sum));
    }
}

inline double log_sum_exp(std::span<const double> xs) {
    const double peak = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(peak)) {
        return peak;
    }
    double acc = 0.0;
    for (double x : xs) {
        acc += std::exp(x - peak);
    }
    return peak + std::log(acc);
}

template <typename Step, typename Assemble>
TransportPlan iterate(const CostMatrix& cost, std::span<const double> u, std::span<const double> v,
                      const SinkhornOptions& opts, SinkhornMode mode, Step&& step, Assemble&& assemble) {
    TransportPlan best;
    best.row_marginal.assign(u.begin(), u.end());
    best.col_marginal.assign(v.begin(), v.end());
    best.mode_used = mode;
    Matrix plan(cost.rows(), cost.cols());
    for (std::size_t it = 1; it <= opts.max_iters; ++it) {
        step();
        assemble(plan);
        const double err = max_marginal_violation(plan, u, v);
        if (!std::isfinite(err)) {
            throw Error(ErrorKind::kNumericalUnderflow,
                        fmt::format("non-finite transport plan at iteration {} (gamma={})", it, opts.gamma));
        }
        if (err < best.marginal_error) {
            best.plan = plan;
            best.marginal_error = err;
            best.iterations = it;
        }
        if (err <= opts.tol) {
            best.converged = true;
            break;
        }
    }
    if (!best.converged) {
        best.iterations = opts.max_iters;
    }
    best.cost = transport_cost(best.plan, cost);
    return best;
}

inline TransportPlan sinkhorn_plain(const CostMatrix& cost, std::span<const double> u, std::span<const double> v,
                                    const SinkhornOptions& opts) {
    const std::size_t n = cost.rows();
    const std::size_t m = cost.cols();
    Matrix kernel(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            kernel(i, j) = std::exp(-cost(i, j) / opts.gamma);
        }
    }
    std::vector<double> a(n, 1.0);
    std::vector<double> b(m, 1.0);
    auto underflow = [&](const char* axis, std::size_t idx) {
        throw Error(ErrorKind::kNumericalUnderflow,
                    fmt::format("kernel {} {} collapsed to zero at gamma={}; use log-domain mode", axis, idx,
                                opts.gamma));
    };
    auto step = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            double kb = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                kb += kernel(i, j) * b[j];
            }
            if (!(kb > 0.0) || !std::isfinite(kb)) {
                underflow("row", i);
            }
            a[i] = u[i] / kb;
        }
        for (std::size_t j = 0; j < m; ++j) {
            double ka = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                ka += kernel(i, j) * a[i];
            }
            if (!(ka > 0.0) || !std::isfinite(ka)) {
                underflow("column", j);
            }
            b[j] = v[j] / ka;
        }
    };
    auto assemble = [&](Matrix& plan) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                plan(i, j) = a[i] * kernel(i, j) * b[j];
            }
        }
    };
    return iterate(cost, u, v, opts, SinkhornMode::kPlain, step, assemble);
}

inline TransportPlan sinkhorn_log(const CostMatrix& cost, std::span<const double> u, std::span<const double> v,
                                  const SinkhornOptions& opts) {
    const std::size_t n = cost.rows();
    const std::size_t m = cost.cols();
    const double gamma = opts.gamma;
    std::vector<double> f(n, 0.0);
    std::vector<double> g(m, 0.0);
    std::vector<double> scratch(std::max(n, m));
    auto step = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                scratch[j] = (g[j] - cost(i, j)) / gamma;
            }
            f[i] = gamma * std::log(u[i]) - gamma * log_sum_exp(std::span<const double>(scratch.data(), m));
        }
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t i = 0; i < n; ++i) {
                scratch[i] = (f[i] - cost(i, j)) / gamma;
            }
            g[j] = gamma * std::log(v[j]) - gamma * log_sum_exp(std::span<const double>(scratch.data(), n));
        }
    };
    auto assemble = [&](Matrix& plan) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                plan(i, j) = std::exp((f[i] + g[j] - cost(i, j)) / gamma);
            }
        }
    };
    return iterate(cost, u, v, opts, SinkhornMode::kLogDomain, step, assemble);
}

}  // namespace detail

/// Entropic OT plan between marginals u (rows) and v (columns).
///
/// When max_iters is reached without the marginal violation dropping to tol,
/// the iterate with the smallest violation is returned with converged = false.
/// Plain mode throws NumericalUnderflow when the kernel collapses; kAuto picks
/// plain scaling for gamma >= 0.05, log-domain below, and falls back to
/// log-domain if plain scaling underflows anyway.
inline TransportPlan sinkhorn(const CostMatrix& cost, std::span<const double> u, std::span<const double> v,
                              const SinkhornOptions& opts = {}) {
    detail::check_marginal(u, cost.rows(), "row marginal");
    detail::check_marginal(v, cost.cols(), "column marginal");
    if (!std::isfinite(opts.gamma) || opts.gamma <= 0.0) {
        throw Error(ErrorKind::kInvalidConfig, fmt::format("gamma must be positive (got {})", opts.gamma));
    }
    if (opts.max_iters == 0 || !(opts.tol > 0.0)) {
        throw Error(ErrorKind::kInvalidConfig, "sinkhorn needs max_iters >= 1 and tol > 0");
    }
    switch (opts.mode) {
        case SinkhornMode::kPlain:
            return detail::sinkhorn_plain(cost, u, v, opts);
        case SinkhornMode::kLogDomain:
            return detail::sinkhorn_log(cost, u, v, opts);
        case SinkhornMode::kAuto:
            break;
    }
    if (opts.gamma < kLogDomainGammaThreshold) {
        return detail::sinkhorn_log(cost, u, v, opts);
    }
    try {
        return detail::sinkhorn_plain(cost, u, v, opts);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::kNumericalUnderflow) {
            throw;
        }
        logger()->debug("plain sinkhorn underflowed ({}); retrying in log domain", e.detail());
        return detail::sinkhorn_log(cost, u, v, opts);
    }
}

/// Largest square problem the permutation oracle accepts.
inline constexpr std::size_t kOracleMaxSize = 6;

/// Exact unregularized OT cost for uniform marginals on a square problem:
/// the minimum over all n! permutations of (1/n) sum_i C(i, sigma(i)).
/// By Birkhoff-von Neumann the optimum of the transport LP is attained at a
/// permutation matrix, so enumeration is exact. Test oracle only.
inline double exact_ot_bruteforce(const CostMatrix& cost, std::span<const double> u, std::span<const double> v) {
    const std::size_t n = cost.rows();
    if (cost.cols() != n) {
        throw Error(ErrorKind::kOracleScopeExceeded, fmt::format("non-square problem {}x{}", n, cost.cols()));
    }
    if (n > kOracleMaxSize) {
        throw Error(ErrorKind::kOracleScopeExceeded, fmt::format("n = {} exceeds {}", n, kOracleMaxSize));
    }
    const double share = 1.0 / static_cast<double>(n);
    auto uniform = [&](std::span<const double> m) {
        return m.size() == n && std::all_of(m.begin(), m.end(), [&](double x) { return std::abs(x - share) <= 1e-12; });
    };
    if (!uniform(u) || !uniform(v)) {
        throw Error(ErrorKind::kOracleScopeExceeded, "marginals must be uniform");
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            total += cost(i, perm[i]);
        }
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best * share;
}

}  // namespace motor
