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

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "superrad/dynamics.hpp"
#include "superrad/liouvillian.hpp"
#include "superrad/oracle.hpp"
#include "test_support.hpp"

using namespace superrad;
using oracle::DenseMatrix;
using testing_support::random_params;

namespace {

/// Full-space image of a coefficient vector.
DenseMatrix lift(const SectorBasis& b, const Eigen::VectorXcd& c) { return oracle::lift_coefficients(b, c); }

/// Index of the Hermitian-conjugate element e^dag = (n-, n+, nz, n_a, n_adag).
BasisElement dagger(const BasisElement& e) { return {e.n_minus, e.n_plus, e.n_z, e.n_a, e.n_adag}; }

Eigen::VectorXcd conjugate_map(const SectorBasis& from, const SectorBasis& to, const Eigen::VectorXcd& c) {
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(to.size()));
    for (std::size_t k = 0; k < from.size(); ++k)
        out[static_cast<Eigen::Index>(*to.index_of(dagger(from[k])))] = std::conj(c[static_cast<Eigen::Index>(k)]);
    return out;
}

ModelParams only(double g, double kappa, double w, double gamma, double gd, int n = 2, int m = 1) {
    ModelParams p;
    p.n_atoms = n;
    p.photon_cutoff = m;
    p.coupling = g;
    p.cavity_decay = kappa;
    p.pump = w;
    p.spont_emission = gamma;
    p.dephasing = gd;
    return p;
}

}  // namespace

class OracleEquivalence : public ::testing::TestWithParam<std::tuple<int, int, int>> {};

TEST_P(OracleEquivalence, LiftedActionMatchesFullMasterEquation) {
    const auto [n, m, dn] = GetParam();
    std::mt19937_64 rng(1000 + 100 * n + 10 * m + dn);
    for (int draw = 0; draw < 3; ++draw) {
        const auto p = random_params(rng, n, m);
        const auto l = build_liouvillian(p, dn);
        const auto terms = oracle::master_equation_terms(p);
        const DenseMatrix dense = DenseMatrix(l.matrix);
        for (std::size_t k = 0; k < l.dimension(); ++k) {
            const DenseMatrix rho = oracle::lift_element((*l.sector)[k], n, m);
            const DenseMatrix expected = oracle::apply_master_equation(terms, rho);
            const DenseMatrix got = lift(*l.sector, dense.col(static_cast<Eigen::Index>(k)));
            const double scale = std::max(1.0, expected.cwiseAbs().maxCoeff());
            ASSERT_LT((got - expected).cwiseAbs().maxCoeff(), 1e-12 * scale)
                << "element " << (*l.sector)[k] << " draw " << draw;
        }
    }
}

INSTANTIATE_TEST_SUITE_P(SmallSystems, OracleEquivalence,
                         ::testing::Combine(::testing::Values(1, 2, 3, 4), ::testing::Values(1, 2),
                                            ::testing::Values(-1, 0, 1)));

TEST(Liouvillian, ProjectionOfFullMatrix) {
    // Columns of B are vec(lift(e_k)); L_full B = B L_sym on the invariant subspace.
    std::mt19937_64 rng(77);
    const auto p = random_params(rng, 2, 1);
    const auto l = build_liouvillian(p, 0);
    ASSERT_EQ(l.dimension(), 12u);
    const DenseMatrix full = DenseMatrix(oracle::build_full_liouvillian(p));
    ASSERT_EQ(full.rows(), 64);
    DenseMatrix b(64, 12);
    for (std::size_t k = 0; k < 12; ++k)
        b.col(static_cast<Eigen::Index>(k)) = oracle::vectorize(oracle::lift_element((*l.sector)[k], 2, 1));
    const DenseMatrix projected = b.completeOrthogonalDecomposition().solve(full * b);
    EXPECT_LT((projected - DenseMatrix(l.matrix)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((full * b - b * projected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Liouvillian, ZeroCouplingHasNoHamiltonianPart) {
    const auto sector = std::make_shared<const SectorBasis>(3, 2, 0);
    EXPECT_EQ(build_hamiltonian_action(only(0.0, 1.0, 1.0, 1.0, 1.0, 3, 2), *sector).nonZeros(), 0);
    EXPECT_EQ(build_liouvillian(only(0, 0, 0, 0, 0, 3, 2), sector).matrix.nonZeros(), 0);
}

TEST(Liouvillian, DephasingIsDiagonal) {
    const double gd = 0.7;
    const auto sector = std::make_shared<const SectorBasis>(4, 1, 0);
    const auto parts = build_dissipators(only(0, 0, 0, 0, gd, 4, 1), *sector);
    const DenseMatrix deph(parts.deph);
    for (std::size_t k = 0; k < sector->size(); ++k) {
        const auto& e = (*sector)[k];
        const auto i = static_cast<Eigen::Index>(k);
        EXPECT_NEAR(std::abs(deph(i, i) - cplx(-0.5 * gd * (e.n_plus + e.n_minus))), 0.0, 1e-15);
    }
    EXPECT_EQ(parts.deph.nonZeros(), static_cast<Eigen::Index>(std::count_if(
        sector->begin(), sector->end(), [](const BasisElement& e) { return e.n_plus + e.n_minus > 0; })));
}

TEST(Liouvillian, SingleModeDecay) {
    // One atom, kappa only: the cavity factor decays as a damped two-level system.
    const auto p = only(0, 2.0, 0, 0, 0, 1, 1);
    const auto l = build_liouvillian(p, 0);
    const auto full = oracle::build_full_liouvillian(p);
    const auto terms = oracle::master_equation_terms(p);
    for (std::size_t k = 0; k < l.dimension(); ++k) {
        const auto rho = oracle::lift_element((*l.sector)[k], 1, 1);
        const DenseMatrix got = lift(*l.sector, DenseMatrix(l.matrix).col(static_cast<Eigen::Index>(k)));
        EXPECT_LT((got - oracle::apply_master_equation(terms, rho)).cwiseAbs().maxCoeff(), 1e-14);
    }
    EXPECT_EQ(full.rows(), 16);
}

TEST(Liouvillian, TraceAnnihilatesEveryPart) {
    std::mt19937_64 rng(8);
    for (int n : {3, 20}) {
        for (int m : {1, 3}) {
            const auto p = random_params(rng, n, m);
            AssemblyOptions opts;
            opts.keep_parts = true;
            const auto l = build_liouvillian(p, 0, opts);
            const auto t = trace_functional(*l.sector).weights;
            ASSERT_TRUE(l.parts.has_value());
            const auto scale = coefficient_scale(*l.sector);
            for (const SparseMatrix* part : {&l.parts->hamiltonian, &l.parts->cavity_decay, &l.parts->pump,
                                             &l.parts->spont, &l.parts->deph, &l.matrix}) {
                // Rescaled so that all columns are comparable in size.
                const SparseMatrix r = rescale(*part, scale);
                const Eigen::RowVectorXcd row = (t.cwiseProduct(scale)).cast<cplx>().transpose() * r;
                double colmax = 0.0;
                for (Eigen::Index k = 0; k < r.outerSize(); ++k)
                    for (SparseMatrix::InnerIterator it(r, k); it; ++it) colmax = std::max(colmax, std::abs(it.value()));
                EXPECT_LE(row.cwiseAbs().maxCoeff(), 1e-12 * std::max(colmax, 1.0)) << "N=" << n << " M=" << m;
            }
        }
    }
}

TEST(Liouvillian, SpectrumInLeftHalfPlane) {
    std::mt19937_64 rng(12);
    for (int n = 1; n <= 4; ++n)
        for (int m : {1, 2}) {
            const auto l = build_liouvillian(random_params(rng, n, m), 0);
            const Eigen::VectorXcd ev = Eigen::ComplexEigenSolver<DenseMatrix>(DenseMatrix(l.matrix)).eigenvalues();
            EXPECT_LE(ev.real().maxCoeff(), 1e-10) << "N=" << n << " M=" << m;
        }
}

TEST(Liouvillian, HermitianConjugationCommutesWithGenerator) {
    std::mt19937_64 rng(13);
    const auto p = random_params(rng, 5, 2);
    for (int dn : {0, 1}) {
        const auto l = build_liouvillian(p, dn);
        const auto lc = build_liouvillian(p, -dn);
        Eigen::VectorXcd c = Eigen::VectorXcd::Random(static_cast<Eigen::Index>(l.dimension()));
        const Eigen::VectorXcd lhs = conjugate_map(*l.sector, *lc.sector, l.matrix * c);
        const Eigen::VectorXcd rhs = lc.matrix * conjugate_map(*l.sector, *lc.sector, c);
        EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, lhs.cwiseAbs().maxCoeff()));
    }
}

TEST(Liouvillian, EvolutionPreservesHermitianSymmetry) {
    std::mt19937_64 rng(14);
    const auto p = random_params(rng, 4, 2);
    const auto l = build_liouvillian(p, 0);
    const auto s = evolve(l, initial_ground_state(l.sector), 3.0);
    const Eigen::VectorXcd mirrored = conjugate_map(*l.sector, *l.sector, s.coeffs);
    const auto scale = coefficient_scale(*l.sector).cast<cplx>();
    EXPECT_LT((mirrored - s.coeffs).cwiseQuotient(scale).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(TraceFunctional, PhotonWeights) {
    EXPECT_EQ(photon_trace_weight(1, 0), 2.0);
    EXPECT_EQ(photon_trace_weight(1, 1), 1.0);
    EXPECT_EQ(photon_trace_weight(2, 0), 3.0);
    EXPECT_EQ(photon_trace_weight(2, 1), 3.0);
    EXPECT_EQ(photon_trace_weight(2, 2), 2.0);
    for (int m = 1; m <= 6; ++m) {
        EXPECT_EQ(photon_trace_weight(m, 0), m + 1.0);
        for (int k = 0; k <= m; ++k) EXPECT_GT(photon_trace_weight(m, k), 0.0);
    }
}

TEST(TraceFunctional, SupportAndShiftedSectors) {
    const SectorBasis b(2, 1, 0);
    const auto t = trace_functional(b);
    EXPECT_EQ((t.weights.array() != 0.0).count(), 2);
    EXPECT_EQ(t.weights[static_cast<Eigen::Index>(*b.index_of(BasisElement{0, 0, 0, 0, 0}))], 2.0);
    EXPECT_EQ(t.weights[static_cast<Eigen::Index>(*b.index_of(BasisElement{0, 0, 0, 1, 1}))], 1.0);
    const auto shifted = trace_functional(SectorBasis(2, 1, 1));
    EXPECT_EQ(shifted.weights.cwiseAbs().sum(), 0.0);
}

TEST(TraceFunctional, MatchesLiftedTrace) {
    const SectorBasis b(3, 2, 0);
    const auto t = trace_functional(b);
    for (std::size_t k = 0; k < b.size(); ++k)
        EXPECT_NEAR(t.weights[static_cast<Eigen::Index>(k)], oracle::lift_element(b[k], 3, 2).trace().real(), 1e-13);
}

TEST(Assembly, ThreadedMatchesSerial) {
    std::mt19937_64 rng(15);
    const auto p = random_params(rng, 30, 2);
    AssemblyOptions serial, threaded;
    threaded.threads = 3;
    const auto a = build_liouvillian(p, 0, serial);
    const auto b = build_liouvillian(p, 0, threaded);
    EXPECT_EQ(a.matrix.nonZeros(), b.matrix.nonZeros());
    EXPECT_EQ(SparseMatrix(a.matrix - b.matrix).norm(), 0.0);
}

TEST(Assembly, SectorMustMatchParameters) {
    const auto sector = std::make_shared<const SectorBasis>(3, 1, 0);
    EXPECT_THROW(build_liouvillian(only(1, 1, 1, 0, 0, 4, 1), sector), ConfigError);
}

TEST(Assembly, CoordinateDump) {
    SparseMatrix m(2, 2);
    m.insert(1, 0) = cplx(0.5, -2.0);
    std::ostringstream os;
    write_coordinate_dump(os, m);
    EXPECT_EQ(os.str(), "1 0 0.5 -2\n");
}

TEST(Assembly, CacheReturnsSameObject) {
    LiouvillianCache cache;
    const auto p = only(1, 1, 0.5, 0, 0, 3, 1);
    const auto a = cache.get(p, 0);
    const auto b = cache.get(p, 0);
    const auto c = cache.get(p, -1);
    EXPECT_EQ(a.get(), b.get());
    EXPECT_NE(a.get(), c.get());
    EXPECT_EQ(cache.size(), 2u);
}

TEST(Assembly, SparsityScalesLinearly) {
    // Each column couples to a bounded number of neighbours.
    const auto l = build_liouvillian(only(0.1, 1, 0.01, 0.001, 0.001, 60, 1), 0);
    EXPECT_LT(static_cast<double>(l.matrix.nonZeros()) / static_cast<double>(l.dimension()), 20.0);
}
