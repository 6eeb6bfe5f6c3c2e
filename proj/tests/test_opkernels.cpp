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

#include <vector>

#include "superrad/opkernels.hpp"
#include "superrad/oracle.hpp"

using namespace superrad;
using oracle::DenseMatrix;
using oracle::FullSpace;
using oracle::lift_element;

namespace {

std::vector<BasisElement> all_legal(int n, int m) {
    std::vector<BasisElement> out;
    for (int np = 0; np <= n; ++np)
        for (int nm = 0; np + nm <= n; ++nm)
            for (int nz = 0; np + nm + nz <= n; ++nz)
                for (int p = 0; p <= m; ++p)
                    for (int q = 0; q <= m; ++q) out.push_back({np, nm, nz, p, q});
    return out;
}

DenseMatrix lift(const WeightedElements& we, int n, int m) {
    const FullSpace space(n, m);
    DenseMatrix out = DenseMatrix::Zero(space.dim(), space.dim());
    for (const auto& [el, w] : we) out += w * lift_element(el, n, m);
    return out;
}

DenseMatrix collective(const FullSpace& space, char which) {
    DenseMatrix s = DenseMatrix::Zero(space.dim(), space.dim());
    for (int j = 0; j < space.n_atoms(); ++j) s += space.site(which, j);
    return s;
}

struct Sizes {
    int n;
    int m;
};

class KernelOracle : public ::testing::TestWithParam<Sizes> {};

TEST_P(KernelOracle, CavityKernelsMatchExplicitProducts) {
    const auto [n, m] = GetParam();
    const FullSpace space(n, m);
    const DenseMatrix a = space.a();
    const DenseMatrix ad = space.adag();
    for (const auto& e : all_legal(n, m)) {
        const DenseMatrix r = lift_element(e, n, m);
        EXPECT_LT((lift(apply_cavity(CavityOp::a_right, e, m), n, m) - r * a).norm(), 1e-12) << e;
        EXPECT_LT((lift(apply_cavity(CavityOp::adag_left, e, m), n, m) - ad * r).norm(), 1e-12) << e;
        EXPECT_LT((lift(apply_cavity(CavityOp::adag_right, e, m), n, m) - r * ad).norm(), 1e-12) << e;
        EXPECT_LT((lift(apply_cavity(CavityOp::a_left, e, m), n, m) - a * r).norm(), 1e-12) << e;
    }
}

TEST_P(KernelOracle, CollectiveAtomicKernelsMatchExplicitProducts) {
    const auto [n, m] = GetParam();
    const FullSpace space(n, m);
    const DenseMatrix sp = collective(space, '+');
    const DenseMatrix sm = collective(space, '-');
    const DenseMatrix sz = collective(space, 'z');
    for (const auto& e : all_legal(n, m)) {
        const DenseMatrix r = lift_element(e, n, m);
        auto check = [&](AtomicOp op, const DenseMatrix& expected) {
            EXPECT_LT((lift(apply_collective_atomic(op, e, n), n, m) - expected).norm(), 1e-12)
                << e << " op " << static_cast<int>(op);
        };
        check(AtomicOp::sp_left, sp * r);
        check(AtomicOp::sp_right, r * sp);
        check(AtomicOp::sm_left, sm * r);
        check(AtomicOp::sm_right, r * sm);
        check(AtomicOp::sz_left, sz * r);
        check(AtomicOp::sz_right, r * sz);
    }
}

TEST_P(KernelOracle, RecyclingAndDephasingMatchExplicitSandwiches) {
    const auto [n, m] = GetParam();
    const FullSpace space(n, m);
    for (const auto& e : all_legal(n, m)) {
        const DenseMatrix r = lift_element(e, n, m);
        DenseMatrix emit = DenseMatrix::Zero(space.dim(), space.dim());
        DenseMatrix pump = emit;
        DenseMatrix deph = emit;
        for (int j = 0; j < n; ++j) {
            emit += 2.0 * space.site('-', j) * r * space.site('+', j);
            pump += 2.0 * space.site('+', j) * r * space.site('-', j);
            deph += r - space.site('z', j) * r * space.site('z', j);
        }
        EXPECT_LT((lift(apply_recycling(RecyclingOp::emission_sandwich, e, n), n, m) - emit).norm(),
                  1e-12) << e;
        EXPECT_LT((lift(apply_recycling(RecyclingOp::pump_sandwich, e, n), n, m) - pump).norm(),
                  1e-12) << e;
        EXPECT_LT((2.0 * apply_dephasing_diag(e) * r - deph).norm(), 1e-12) << e;
    }
}

INSTANTIATE_TEST_SUITE_P(SmallSystems, KernelOracle,
                         ::testing::Values(Sizes{1, 1}, Sizes{2, 1}, Sizes{1, 2}, Sizes{2, 2},
                                           Sizes{3, 1}, Sizes{3, 2}));

}  // namespace

TEST(CavityKernels, RightAnnihilationRaisesNa) {
    const auto out = apply_cavity(CavityOp::a_right, {0, 0, 0, 0, 0}, 1);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_DOUBLE_EQ(out.coefficient({0, 0, 0, 0, 1}), 1.0);
}

TEST(CavityKernels, BlockadedCommutatorFromTheRight) {
    // a a^dag = |0><0| = I - a^dag a for a two-level mode.
    const auto out = apply_cavity(CavityOp::adag_right, {0, 0, 0, 0, 1}, 1);
    EXPECT_EQ(out.size(), 2u);
    EXPECT_DOUBLE_EQ(out.coefficient({0, 0, 0, 0, 0}), 1.0);
    EXPECT_DOUBLE_EQ(out.coefficient({0, 0, 0, 1, 1}), -1.0);
}

TEST(CavityKernels, BlockadedCommutatorFromTheLeft) {
    const auto out = apply_cavity(CavityOp::a_left, {0, 0, 0, 1, 0}, 1);
    EXPECT_EQ(out.size(), 2u);
    EXPECT_DOUBLE_EQ(out.coefficient({0, 0, 0, 0, 0}), 1.0);
    EXPECT_DOUBLE_EQ(out.coefficient({0, 0, 0, 1, 1}), -1.0);
}

TEST(CavityKernels, LargeCutoffApproachesBosonicRules) {
    // rho a^dag -> (p+1, q) + q (p, q-1); the boundary term only touches n_a = M.
    const int m = 10;
    const auto out = apply_cavity(CavityOp::adag_right, {0, 0, 0, 1, 2}, m);
    EXPECT_DOUBLE_EQ(out.coefficient({0, 0, 0, 2, 2}), 1.0);
    EXPECT_DOUBLE_EQ(out.coefficient({0, 0, 0, 1, 1}), 2.0);
    const double boundary = out.coefficient({0, 0, 0, m + 1 + 1 - 2, m});
    EXPECT_LT(std::abs(boundary), 1e-4);
}

TEST(AtomicKernels, CollectiveSzOnIdentityForTwoAtoms) {
    const auto out = apply_collective_atomic(AtomicOp::sz_left, {0, 0, 0, 0, 0}, 2);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_DOUBLE_EQ(out.coefficient({0, 0, 1, 0, 0}), 2.0);
}

TEST(AtomicKernels, SzTimesSigmaPlusSingleAtom) {
    const auto out = apply_collective_atomic(AtomicOp::sz_left, {1, 0, 0, 0, 0}, 1);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_DOUBLE_EQ(out.coefficient({1, 0, 0, 0, 0}), 1.0);
}

TEST(AtomicKernels, SigmaPlusOnIdentitySingleAtom) {
    const auto out = apply_collective_atomic(AtomicOp::sp_left, {0, 0, 0, 0, 0}, 1);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_DOUBLE_EQ(out.coefficient({1, 0, 0, 0, 0}), 1.0);
}

TEST(RecyclingKernels, PumpSandwichOnIdentity) {
    const auto out = apply_recycling(RecyclingOp::pump_sandwich, {0, 0, 0, 0, 0}, 1);
    EXPECT_DOUBLE_EQ(out.coefficient({0, 0, 0, 0, 0}), 1.0);
    EXPECT_DOUBLE_EQ(out.coefficient({0, 0, 1, 0, 0}), 1.0);
}

TEST(RecyclingKernels, EmissionSandwichOnSz) {
    // (N_I - n_z) = -1 on e and +1 on the lowered element.
    const auto out = apply_recycling(RecyclingOp::emission_sandwich, {0, 0, 1, 0, 0}, 1);
    EXPECT_DOUBLE_EQ(out.coefficient({0, 0, 1, 0, 0}), -1.0);
    EXPECT_DOUBLE_EQ(out.coefficient({0, 0, 0, 0, 0}), 1.0);
}

TEST(RecyclingKernels, NoRaisedTermWhenAtomsAreSaturated) {
    for (auto op : {RecyclingOp::emission_sandwich, RecyclingOp::pump_sandwich}) {
        const auto out = apply_recycling(op, {1, 1, 1, 0, 0}, 3);
        for (const auto& [el, w] : out) EXPECT_LE(el.n_z, 1);
    }
}

TEST(DephasingKernel, CountsSigmaPlusMinusFactors) {
    EXPECT_EQ(apply_dephasing_diag({0, 0, 3, 1, 1}), 0.0);
    EXPECT_EQ(apply_dephasing_diag({1, 0, 0, 0, 0}), 1.0);
    EXPECT_EQ(apply_dephasing_diag({1, 1, 0, 0, 0}), 2.0);
}

TEST(Kernels, SandwichPairsPreserveCharge) {
    for (const auto& e : all_legal(3, 2)) {
        WeightedElements out;
        accumulate(out, apply_collective_atomic(AtomicOp::sp_left, e, 3), 1.0, 3, 2,
                   [](const BasisElement& x) { return apply_collective_atomic(AtomicOp::sm_right, x, 3); });
        accumulate(out, apply_cavity(CavityOp::a_left, e, 2), 1.0, 3, 2,
                   [](const BasisElement& x) { return apply_cavity(CavityOp::adag_right, x, 2); });
        accumulate(out, apply_cavity(CavityOp::a_left, e, 2), 1.0, 3, 2,
                   [](const BasisElement& x) { return apply_collective_atomic(AtomicOp::sp_left, x, 3); });
        for (const auto& [el, w] : out) EXPECT_EQ(el.delta_n(), e.delta_n());
    }
}
