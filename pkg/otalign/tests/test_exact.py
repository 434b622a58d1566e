import numpy as np

from otalign.constraints import ConstraintSpec
from otalign.exact import (
    Permutation,
    brute_force_assignment,
    brute_force_constrained,
    support_permutation,
    birkhoff_decompose,
    perturb_costs,
    verify_perturbation,
    check_sparsity_bound,
    round_to_vertex,
    solve_lp,
)
from otalign.exceptions import (
    InvalidParameter,
    ShapeError,
    SizeError,
    BoundError,
    DecompositionError,
)
from otalign.transport import CostMatrix, Marginals, TransportPlan, transport_cost
from otalign.tests.testing_utilities import AlignTests


class PermutationTests(AlignTests):
    def test_valid(self):
        perm = Permutation([2, 0, 1])
        self.assertEqual(len(perm), 3)
        self.assertEqual(list(perm), [2, 0, 1])

    def test_not_bijection(self):
        with self.assertRaises(InvalidParameter):
            Permutation([0, 0, 1])

    def test_out_of_range(self):
        with self.assertRaises(InvalidParameter):
            Permutation([1, 2])

    def test_matrix(self):
        M = Permutation([1, 0]).to_matrix()
        self.assertTrue(np.array_equal(M, [[0.0, 1.0], [1.0, 0.0]]))

    def test_cost(self):
        C = [[4.0, 1.0], [2.0, 0.0]]
        self.assertEqual(Permutation([1, 0]).cost(C), 3.0)


class BruteForceAssignmentTests(AlignTests):
    def test_three_by_three(self):
        c = CostMatrix([[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])
        perm, cost = brute_force_assignment(c)
        self.assertEqual(perm, Permutation([1, 0, 2]))
        self.assertEqual(cost, 5.0)

    def test_ties_lexicographic(self):
        perm, cost = brute_force_assignment(np.zeros((3, 3)))
        self.assertEqual(perm, Permutation([0, 1, 2]))
        self.assertEqual(cost, 0.0)

    def test_single(self):
        perm, cost = brute_force_assignment([[7.0]])
        self.assertEqual(perm, Permutation([0]))
        self.assertEqual(cost, 7.0)

    def test_not_square(self):
        with self.assertRaises(ShapeError):
            brute_force_assignment(np.zeros((2, 3)))

    def test_too_large(self):
        with self.assertRaises(SizeError):
            brute_force_assignment(np.zeros((10, 10)))


class BruteForceConstrainedTests(AlignTests):
    C = [[0.1, 0.9, 0.8], [0.7, 0.2, 0.6]]

    def test_exact_k1(self):
        support, cost = brute_force_constrained(CostMatrix(self.C), ConstraintSpec("exact-k", 1))
        self.assertEqual(support, [(0, 0)])
        self.assertAlmostEqual(cost, 0.1)

    def test_exact_k2(self):
        support, cost = brute_force_constrained(CostMatrix(self.C), ConstraintSpec("exact-k", 2))
        self.assertEqual(support, [(0, 0), (1, 1)])
        self.assertAlmostEqual(cost, 0.3)

    def test_exact_k_transposed(self):
        c = CostMatrix(np.array(self.C).T)
        support, _ = brute_force_constrained(c, ConstraintSpec("exact-k", 2))
        self.assertEqual(support, [(0, 0), (1, 1)])

    def test_exact_k_transposed_asymmetric(self):
        c = CostMatrix([[0.9, 0.8], [0.1, 0.9], [0.9, 0.9]])
        support, cost = brute_force_constrained(c, ConstraintSpec("exact-k", 1))
        self.assertEqual(support, [(1, 0)])
        self.assertAlmostEqual(cost, 0.1)

    def test_one_to_k(self):
        c = CostMatrix([[0.1, 0.2, 0.9, 0.9], [0.9, 0.9, 0.3, 0.1]])
        support, cost = brute_force_constrained(c, ConstraintSpec("one-to-k", 2))
        self.assertEqual(support, [(0, 0), (0, 1), (1, 2), (1, 3)])
        self.assertAlmostEqual(cost, 0.7)

    def test_one_to_k_competition(self):
        # Both rows prefer column 0; the cheaper total wins
        c = CostMatrix([[0.1, 0.5], [0.2, 0.9]])
        support, cost = brute_force_constrained(c, ConstraintSpec("one-to-k", 1))
        self.assertEqual(support, [(0, 1), (1, 0)])
        self.assertAlmostEqual(cost, 0.7)

    def test_relaxed(self):
        c = CostMatrix([[-0.5, 0.3, 0.2], [0.4, -0.1, 0.6]])
        support, cost = brute_force_constrained(c, ConstraintSpec("relaxed", 1))
        self.assertEqual(support, [(0, 0), (1, 1)])
        self.assertAlmostEqual(cost, -0.6)

    def test_relaxed_all_positive(self):
        c = CostMatrix([[0.5, 0.3], [0.4, 0.1]])
        support, cost = brute_force_constrained(c, ConstraintSpec("relaxed", 1))
        self.assertEqual(support, [])
        self.assertEqual(cost, 0.0)

    def test_vanilla(self):
        with self.assertRaises(InvalidParameter):
            brute_force_constrained(CostMatrix(self.C), ConstraintSpec("vanilla"))

    def test_too_large(self):
        with self.assertRaises(SizeError):
            brute_force_constrained(self.random_cost(5, 5), ConstraintSpec("exact-k", 1))

    def test_k_too_large(self):
        with self.assertRaises(BoundError):
            brute_force_constrained(CostMatrix(self.C), ConstraintSpec("one-to-k", 2))


class SupportPermutationTests(AlignTests):
    def test_diagonal(self):
        perm = support_permutation(TransportPlan([[0.5, 0.0], [0.0, 0.5]]))
        self.assertEqual(perm, Permutation([0, 1]))

    def test_anti_diagonal(self):
        perm = support_permutation(TransportPlan([[0.0, 0.5], [0.5, 0.0]]))
        self.assertEqual(perm, Permutation([1, 0]))

    def test_bottleneck(self):
        P = np.array([[0.3, 0.2], [0.2, 0.3]]) / 1.0
        self.assertEqual(support_permutation(P), Permutation([0, 1]))

    def test_bottleneck_prefers_larger_minimum(self):
        P = np.array([[0.1, 0.4, 0.0], [0.4, 0.1, 0.0], [0.0, 0.0, 0.5]]) / 1.5
        self.assertEqual(support_permutation(P), Permutation([1, 0, 2]))

    def test_no_matching(self):
        with self.assertRaises(DecompositionError):
            support_permutation(TransportPlan([[0.5, 0.5], [0.0, 0.0]]))

    def test_not_square(self):
        with self.assertRaises(ShapeError):
            support_permutation(np.full((2, 3), 1 / 6))


class BirkhoffTests(AlignTests):
    def test_permutation_plan(self):
        p = TransportPlan.from_permutation([2, 0, 1])
        decomposition = birkhoff_decompose(p)
        self.assertEqual(len(decomposition), 1)
        self.assertAlmostEqual(decomposition.weights[0], 1.0)
        self.assertEqual(decomposition.permutations[0], Permutation([2, 0, 1]))

    def test_uniform(self):
        p = TransportPlan(np.full((3, 3), 1 / 9))
        decomposition = birkhoff_decompose(p)
        self.assertAlmostEqual(sum(decomposition.weights), 1.0)
        self.assertLessEqual(len(decomposition), 9)
        self.assertTrue(np.allclose(decomposition.reconstruct(), p.values, atol=1e-12))
        self.assertLess(decomposition.residual_norm, 1e-12)

    def test_known_combination(self):
        identity = Permutation([0, 1, 2]).to_matrix()
        shift = Permutation([1, 2, 0]).to_matrix()
        P = (0.7 * identity + 0.3 * shift) / 3
        decomposition = birkhoff_decompose(P)
        self.assertEqual(len(decomposition), 2)
        self.assertAlmostEqual(decomposition.weights[0], 0.7)
        self.assertEqual(decomposition.permutations[0], Permutation([0, 1, 2]))
        self.assertAlmostEqual(decomposition.weights[1], 0.3)

    def test_not_doubly_stochastic(self):
        with self.assertRaises(DecompositionError):
            birkhoff_decompose(np.array([[0.5, 0.0], [0.25, 0.25]]))

    def test_random_combinations(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            N = int(rng.integers(2, 7))
            r = int(rng.integers(1, 5))
            weights = rng.dirichlet(np.ones(r))
            P = sum(
                w * Permutation(rng.permutation(N)).to_matrix() for w in weights
            ) / N
            decomposition = birkhoff_decompose(P)
            self.assertLess(np.max(np.abs(decomposition.reconstruct() - P)), 1e-8)
            self.assertAlmostEqual(sum(decomposition.weights), 1.0, delta=1e-8)


class PerturbationTests(AlignTests):
    def test_range(self):
        c = CostMatrix(np.zeros((4, 4)))
        E = perturb_costs(c, 0.01, seed=3).values
        self.assertTrue(np.all(E >= 0))
        self.assertTrue(np.all(E <= 0.01))

    def test_seeded(self):
        c = self.random_cost(3, 3)
        self.assertEqual(perturb_costs(c, 0.1, seed=4), perturb_costs(c, 0.1, seed=4))
        self.assertNotEqual(perturb_costs(c, 0.1, seed=4), perturb_costs(c, 0.1, seed=5))

    def test_nonpositive_epsilon(self):
        with self.assertRaises(InvalidParameter):
            perturb_costs(self.random_cost(2, 2), 0.0)

    def test_perturbation_random(self):
        for seed in range(20):
            report = verify_perturbation(self.random_cost(5, 5, seed=seed), 1e-2, seed=seed)
            self.assertTrue(report["holds"])
            self.assertTrue(report["unique"])
            self.assertTrue(report["is_permutation"])
            self.assertGreaterEqual(report["gap"], 0.0)

    def test_perturbation_ties(self):
        report = verify_perturbation(np.zeros((3, 3)), 1e-3, seed=0)
        self.assertEqual(report["gap"], 0.0)
        self.assertTrue(report["holds"])

    def test_perturbation_too_large(self):
        with self.assertRaises(SizeError):
            verify_perturbation(np.zeros((8, 8)), 1e-3)


class SparsityBoundTests(AlignTests):
    def test_vertex(self):
        p = TransportPlan([[0.25, 0.25, 0.0], [0.0, 0.25, 0.25]])
        report = check_sparsity_bound(p)
        self.assertEqual(report["count"], 4)
        self.assertEqual(report["bound"], 4)
        self.assertTrue(report["passed"])

    def test_dense(self):
        p = TransportPlan(np.full((3, 3), 1 / 9))
        report = check_sparsity_bound(p)
        self.assertEqual(report["count"], 9)
        self.assertFalse(report["passed"])


class RoundToVertexTests(AlignTests):
    def test_product_plan(self):
        a, b = Marginals.uniform(2), Marginals.uniform(3)
        p = TransportPlan(np.outer(a.weights, b.weights), a, b)
        q = round_to_vertex(p)
        self.assertFeasible(q, a, b)
        self.assertLessEqual(np.count_nonzero(q.values > 1e-12), 4)

    def test_square_uniform(self):
        P = (0.8 * Permutation([0, 2, 1]).to_matrix() + 0.2 * np.full((3, 3), 1 / 3)) / 3
        q = round_to_vertex(TransportPlan(P, Marginals.uniform(3), Marginals.uniform(3)))
        self.assertPermutationPlan(q)
        self.assertAlmostEqual(q.values[1, 2], 1 / 3)


class SolveLpTests(AlignTests):
    def test_matches_assignment(self):
        c = self.random_cost(4, 4, seed=8)
        plan, cost = solve_lp(c, Marginals.uniform(4), Marginals.uniform(4))
        _, optimum = brute_force_assignment(c)
        self.assertAlmostEqual(cost, optimum / 4, places=8)
        self.assertAlmostEqual(transport_cost(c, plan), cost, places=8)

    def test_rectangular(self):
        c = self.random_cost(3, 5, seed=9)
        a, b = Marginals.uniform(3), Marginals.uniform(5)
        plan, _ = solve_lp(c, a, b)
        self.assertFeasible(plan, a, b)

    def test_shape(self):
        with self.assertRaises(ShapeError):
            solve_lp(self.random_cost(2, 3), Marginals.uniform(3), Marginals.uniform(3))
