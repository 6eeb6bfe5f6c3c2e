// Copyright 2026 The superrad Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <sstream>
#include <utility>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/MatrixFunctions>

#include "superrad/errors.hpp"

namespace superrad {

struct OdeOptions {
    double reltol = 1e-8;
    double abstol = 1e-10;
    std::size_t max_steps = 50'000'000;
    /// Zero lets the integrator choose.
    double initial_step = 0.0;
    double max_step = std::numeric_limits<double>::infinity();
};

struct OdeStats {
    std::size_t steps = 0;
    std::size_t rejected = 0;
    std::size_t rhs_evaluations = 0;
};

/// Explicit Runge-Kutta 5(4) pair of Dormand and Prince with FSAL and
/// standard step-size control. `Vec` is any Eigen column vector.
template <class Vec>
class DormandPrince5 {
  public:
    using Rhs = std::function<void(double, const Vec&, Vec&)>;

    DormandPrince5(Rhs rhs, OdeOptions opts = {}) : rhs_(std::move(rhs)), opts_(opts) {}

    /// Advances y from t0 to t1 (t1 >= t0). The last accepted step size is
    /// remembered, so consecutive calls on a grid do not restart from scratch.
    void integrate(Vec& y, double t0, double t1) {
        if (!(t1 >= t0)) throw SolverError("DormandPrince5: t1 must not precede t0");
        if (t1 == t0) return;
        const auto n = y.size();
        k1_.resize(n);
        rhs_(t0, y, k1_);
        ++stats_.rhs_evaluations;
        double t = t0;
        if (!(h_ > 0.0)) h_ = opts_.initial_step > 0.0 ? opts_.initial_step : initial_step(y, t0);
        std::size_t steps_here = 0;
        while (t < t1) {
            if (++steps_here > opts_.max_steps) {
                std::ostringstream msg;
                msg << "DormandPrince5: tolerance not achieved within " << opts_.max_steps
                    << " steps (t=" << t << " of " << t1 << ")";
                throw SolverError(msg.str());
            }
            double h = std::min({h_, opts_.max_step, t1 - t});
            const bool last = h >= t1 - t;
            if (h <= 16.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t), 1e-300)) {
                std::ostringstream msg;
                msg << "DormandPrince5: step size underflow at t=" << t << " (h=" << h
                    << "); the problem is likely stiff, try the krylov integrator";
                throw SolverError(msg.str());
            }
            const double err = attempt(y, t, h);
            if (err <= 1.0) {
                t = last ? t1 : t + h;
                y.swap(ynew_);
                k1_.swap(k7_);
                ++stats_.steps;
                const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
                // Do not let a short final step shrink the remembered step size.
                h_ = last ? std::max(h_, h * fac) : h * fac;
            } else {
                ++stats_.rejected;
                h_ = h * std::clamp(0.9 * std::pow(err, -0.2), 0.1, 1.0);
            }
        }
    }

    const OdeStats& stats() const noexcept { return stats_; }
    double step_size() const noexcept { return h_; }

  private:
    double error_norm(const Vec& err, const Vec& y0, const Vec& y1) const {
        const auto scale =
            opts_.abstol + opts_.reltol * y0.array().abs().max(y1.array().abs());
        return std::sqrt((err.array().abs() / scale).square().mean());
    }

    double initial_step(const Vec& y, double t0) {
        const auto scale = opts_.abstol + opts_.reltol * y.array().abs();
        const double d0 = std::sqrt((y.array().abs() / scale).square().mean());
        const double d1 = std::sqrt((k1_.array().abs() / scale).square().mean());
        double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        Vec y1 = y + h0 * k1_;
        Vec f1(y.size());
        rhs_(t0 + h0, y1, f1);
        ++stats_.rhs_evaluations;
        const double d2 = std::sqrt(((f1 - k1_).array().abs() / scale).square().mean()) / h0;
        const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                                   : std::pow(0.01 / std::max(d1, d2), 0.2);
        return std::min(100.0 * h0, h1);
    }

    /// One trial step; leaves the 5th-order solution in ynew_ and its slope in k7_.
    double attempt(const Vec& y, double t, double h) {
        static constexpr double a21 = 1.0 / 5.0;
        static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
        static constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
        static constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                                a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
        static constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0,
                                a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                                a65 = -5103.0 / 18656.0;
        static constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                                b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
        static constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                                e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
        const auto n = y.size();
        k2_.resize(n), k3_.resize(n), k4_.resize(n), k5_.resize(n), k6_.resize(n), k7_.resize(n);
        tmp_ = y + h * a21 * k1_;
        rhs_(t + h / 5.0, tmp_, k2_);
        tmp_ = y + h * (a31 * k1_ + a32 * k2_);
        rhs_(t + 3.0 * h / 10.0, tmp_, k3_);
        tmp_ = y + h * (a41 * k1_ + a42 * k2_ + a43 * k3_);
        rhs_(t + 4.0 * h / 5.0, tmp_, k4_);
        tmp_ = y + h * (a51 * k1_ + a52 * k2_ + a53 * k3_ + a54 * k4_);
        rhs_(t + 8.0 * h / 9.0, tmp_, k5_);
        tmp_ = y + h * (a61 * k1_ + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
        rhs_(t + h, tmp_, k6_);
        ynew_ = y + h * (b1 * k1_ + b3 * k3_ + b4 * k4_ + b5 * k5_ + b6 * k6_);
        rhs_(t + h, ynew_, k7_);
        stats_.rhs_evaluations += 6;
        tmp_ = h * (e1 * k1_ + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k7_);
        const double err = error_norm(tmp_, y, ynew_);
        return std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
    }

    Rhs rhs_;
    OdeOptions opts_;
    OdeStats stats_;
    double h_ = 0.0;
    Vec k1_, k2_, k3_, k4_, k5_, k6_, k7_, ynew_, tmp_;
};

struct KrylovOptions {
    int subspace_dim = 30;
    double reltol = 1e-8;
    double abstol = 1e-10;
    int max_rejections = 20;
};

/// Action of exp(t A) on a vector for a fixed sparse A, by restarted Arnoldi
/// with the a-posteriori local error estimate of Sidje's expv.
class KrylovPropagator {
  public:
    using cplx = std::complex<double>;
    using Matrix = Eigen::SparseMatrix<cplx>;

    explicit KrylovPropagator(const Matrix& a, KrylovOptions opts = {}) : a_(a), opts_(opts) {
        // Infinity norm (max row sum).
        Eigen::VectorXd rows = Eigen::VectorXd::Zero(a.rows());
        for (Eigen::Index k = 0; k < a.outerSize(); ++k)
            for (Matrix::InnerIterator it(a, k); it; ++it) rows[it.row()] += std::abs(it.value());
        anorm_ = rows.size() ? rows.maxCoeff() : 0.0;
    }

    void advance(Eigen::VectorXcd& w, double dt) {
        if (dt < 0.0) throw SolverError("KrylovPropagator: negative time step");
        if (dt == 0.0 || anorm_ == 0.0) return;
        const int m = std::max(2, std::min<int>(opts_.subspace_dim, static_cast<int>(w.size())));
        const double gamma = 0.9;
        const double delta = 1.2;
        const double breakdown_tol = 1e-12 * anorm_;
        double beta = w.norm();
        if (beta == 0.0) return;
        double t_now = 0.0;
        double t_new = t_hint_;
        if (!(t_new > 0.0)) {
            const double tol = opts_.reltol;
            const double fact =
                std::pow((m + 1) / std::exp(1.0), m + 1) * std::sqrt(2.0 * M_PI * (m + 1));
            t_new = (1.0 / anorm_) * std::pow(fact * tol / (4.0 * anorm_), 1.0 / m);
        }
        Eigen::MatrixXcd v(w.size(), m + 1);
        Eigen::MatrixXcd h(m + 2, m + 2);
        while (t_now < dt) {
            double t_step = std::min(dt - t_now, t_new);
            v.setZero();
            h.setZero();
            v.col(0) = w / beta;
            int mb = m;
            int k1 = 2;
            for (int j = 0; j < m; ++j) {
                Eigen::VectorXcd p = a_ * v.col(j);
                for (int i = 0; i <= j; ++i) {
                    h(i, j) = v.col(i).dot(p);
                    p -= h(i, j) * v.col(i);
                }
                const double s = p.norm();
                if (s < breakdown_tol) {
                    k1 = 0;
                    mb = j + 1;
                    t_step = dt - t_now;
                    break;
                }
                h(j + 1, j) = s;
                v.col(j + 1) = p / s;
            }
            double avnorm = 0.0;
            if (k1 != 0) {
                h(m + 1, m) = 1.0;
                avnorm = (a_ * v.col(m)).norm();
            }
            double err_loc = 0.0;
            double xm = 1.0 / m;
            Eigen::MatrixXcd f;
            const double tol = opts_.reltol * beta + opts_.abstol;
            for (int rejections = 0;; ++rejections) {
                const int mx = mb + k1;
                f = (t_step * h.topLeftCorner(mx, mx)).exp();
                if (k1 == 0) {
                    err_loc = 0.0;
                    break;
                }
                const double phi1 = std::abs(beta * f(m, 0));
                const double phi2 = std::abs(beta * f(m + 1, 0) * avnorm);
                if (phi1 > 10.0 * phi2) {
                    err_loc = phi2;
                    xm = 1.0 / m;
                } else if (phi1 > phi2) {
                    err_loc = phi1 * phi2 / (phi1 - phi2);
                    xm = 1.0 / m;
                } else {
                    err_loc = phi1;
                    xm = 1.0 / (m - 1);
                }
                if (err_loc <= delta * tol) break;
                if (rejections >= opts_.max_rejections)
                    throw SolverError("KrylovPropagator: requested tolerance not achievable");
                t_step = gamma * t_step * std::pow(tol / err_loc, xm);
            }
            const int mx = mb + std::max(0, k1 - 1);
            w = v.leftCols(mx) * (beta * f.col(0).head(mx));
            beta = w.norm();
            t_now += t_step;
            if (err_loc > 0.0)
                t_new = gamma * t_step * std::pow(tol / err_loc, xm);
            else
                t_new = 2.0 * t_step;
            if (beta == 0.0) break;
            ++steps_;
        }
        t_hint_ = t_new;
    }

    std::size_t steps() const noexcept { return steps_; }

  private:
    Matrix a_;
    KrylovOptions opts_;
    double anorm_ = 0.0;
    double t_hint_ = 0.0;
    std::size_t steps_ = 0;
};

}  // namespace superrad
