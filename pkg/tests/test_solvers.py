import numpy as np
import pytest
import scipy.sparse.linalg

from sgwinv.errors import ConfigError
from sgwinv.forward import WhitenedProblem
from sgwinv.frame import build_frame, design_scales, frame_from_multipliers
from sgwinv.mesh import build_graph, eigendecompose, generate_icosphere, graph_from_edges
from sgwinv.solvers import (
    SolverConfig,
    SourceEstimate,
    estimate_snr,
    l1_kkt_residual,
    lambda_from_snr,
    resolve_lambda,
    resolve_mu,
    soft_threshold,
    solve_mce,
    solve_mne,
    solve_sgw_mce,
    solve_sgw_mne,
    solve_svbsccd,
    spectral_norm_sq,
)

# ------------------------------------------------------------------ oracles


def cg_ridge_oracle(G, Z, lam):
    """Column-wise conjugate-gradient solve of (GᵀG + 2λI)S = GᵀZ."""
    n = G.shape[1]
    normal = G.T @ G + 2.0 * lam * np.eye(n)
    rhs = G.T @ Z
    cols = []
    for k in range(rhs.shape[1]):
        x, info = scipy.sparse.linalg.cg(normal, rhs[:, k], rtol=1e-12, maxiter=5000)
        assert info == 0
        cols.append(x)
    return np.stack(cols, axis=1)


def coordinate_descent_l1_oracle(A, z, lam, sweeps=20000, tol=1e-15):
    """Cyclic coordinate descent for ½‖z − Ax‖² + λ‖x‖₁ (single column)."""
    n = A.shape[1]
    x = np.zeros(n)
    col_sq = np.sum(A**2, axis=0)
    resid = z.copy()
    for _ in range(sweeps):
        delta = 0.0
        for k in range(n):
            old = x[k]
            rho = A[:, k] @ resid + col_sq[k] * old
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[k]
            if new != old:
                resid -= A[:, k] * (new - old)
                x[k] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            break
    return x


def grid_search_2var_oracle(G, z, graph_edge_sign, lam, mu, span=3.0):
    """Nested grid minimization of ½‖z − Gs‖² + λ|s₀ − s₁| + μ‖s‖₁."""

    def objective(s0, s1):
        r0 = z[0] - G[0, 0] * s0 - G[0, 1] * s1
        r1 = z[1] - G[1, 0] * s0 - G[1, 1] * s1
        return (
            0.5 * (r0**2 + r1**2)
            + lam * np.abs(s0 - s1)
            + mu * (np.abs(s0) + np.abs(s1))
        )

    c0, c1, h = 0.0, 0.0, span
    for _ in range(8):
        g0 = np.linspace(c0 - h, c0 + h, 241)
        g1 = np.linspace(c1 - h, c1 + h, 241)
        vals = objective(g0[:, None], g1[None, :])
        i, j = np.unravel_index(np.argmin(vals), vals.shape)
        c0, c1 = g0[i], g1[j]
        h = 2 * h / 240 * 3  # keep a few cells of slack around the argmin
    return np.array([c0, c1])


# ----------------------------------------------------------------- fixtures


@pytest.fixture(scope="module")
def small_problem():
    """Whitened problem on icosphere-42 with a random well-scaled leadfield."""
    mesh = generate_icosphere(1, 0.1)
    spectrum = eigendecompose(build_graph(mesh))
    frame = build_frame(spectrum, design_scales(spectrum.lambda_max))
    rng = np.random.default_rng(5)
    g = rng.standard_normal((12, 42)) / np.sqrt(42)
    z = rng.standard_normal((12, 4))
    return WhitenedProblem(g, z, g @ frame.W.T, frame)


def identity_problem(n, Z):
    spectrum = eigendecompose(graph_from_edges(n, [(k, k + 1) for k in range(n - 1)]))
    frame = build_frame(spectrum, design_scales(spectrum.lambda_max, K=4.0, N_s=2))
    g = np.eye(n)
    return WhitenedProblem(g, Z, g @ frame.W.T, frame)


# -------------------------------------------------------------------- tests


class TestLambdaHeuristics:
    def test_snr_inversion(self):
        g = np.full((4, 25), 1.0)  # ‖G‖_F² = 100
        assert lambda_from_snr(3.0, g, 10.0) == pytest.approx(1.25, abs=1e-15)

    def test_no_noise_limit(self):
        g = np.ones((2, 2))
        assert lambda_from_snr(1e9, g, 1.0) < 1e-14

    def test_zero_leadfield(self):
        assert lambda_from_snr(2.0, np.zeros((3, 3)), 1.0) == 0.0

    def test_rho_must_exceed_one(self):
        with pytest.raises(ConfigError):
            lambda_from_snr(1.0, np.ones((2, 2)), 1.0)

    def test_resolution_priority(self):
        a = np.eye(2)
        z = np.array([[2.0], [0.0]])
        assert resolve_lambda(a, z, SolverConfig(lambda_=0.7, rho=3.0)) == 0.7
        # rho rule with Tr Σ_B = J = 2: λ = 2/(8·2) = 0.125
        assert resolve_lambda(a, z, SolverConfig(rho=3.0)) == pytest.approx(0.125)
        assert resolve_lambda(a, z, SolverConfig(lambda_scale=0.1)) == pytest.approx(0.2)
        # no rule set: SNR estimated from the data, ρ̂² = mean Z² = 2,
        # so λ = ‖A‖_F²/((ρ̂²−1)·J) = 2/(1·2) = 1
        assert resolve_lambda(a, z, SolverConfig()) == pytest.approx(1.0)
        assert resolve_mu(a, z, SolverConfig(mu=0.3)) == 0.3
        assert resolve_mu(a, z, SolverConfig(mu_scale=0.05)) == pytest.approx(0.1)

    def test_data_rule_floors_all_noise_records(self):
        # mean Z² ≤ 1 would make the SNR excess nonpositive; the floor turns
        # that into heavy shrinkage instead of a division error
        a = np.eye(2)
        quiet = np.full((2, 4), 0.1)
        lam = resolve_lambda(a, quiet, SolverConfig())
        assert lam == pytest.approx(2.0 / (1e-6 * 2))
        assert estimate_snr(quiet) == pytest.approx(0.1)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            SolverConfig(max_iters=0)
        with pytest.raises(ConfigError):
            SolverConfig(tol_rel=0.0)
        with pytest.raises(ConfigError):
            SolverConfig(rho=0.5)
        with pytest.raises(ConfigError):
            SolverConfig(lambda_=-1.0)


def test_spectral_norm_matches_svd(rng):
    for shape in [(7, 11), (11, 7), (1, 5)]:
        a = rng.standard_normal(shape)
        exact = np.linalg.norm(a, 2) ** 2
        assert spectral_norm_sq(a) == pytest.approx(exact, rel=1e-4)


def test_soft_threshold():
    v = np.array([3.0, -0.5, 0.2, -4.0])
    assert np.allclose(soft_threshold(v, 1.0), [2.0, 0.0, 0.0, -3.0])


class TestMNE:
    def test_zero_data(self, small_problem):
        est = solve_mne(small_problem.with_data(np.zeros((12, 2))), 0.4)
        assert np.all(est.S == 0)
        assert est.converged

    def test_identity_leadfield_shrinkage(self):
        z = np.array([[3.0], [1.0]])
        prob = identity_problem(2, z)
        est = solve_mne(prob, 0.5)
        assert np.allclose(est.S, z / 2.0, atol=1e-12)

    def test_first_order_optimality(self, small_problem):
        lam = 0.3
        est = solve_mne(small_problem, lam)
        grad = small_problem.G.T @ (small_problem.G @ est.S - small_problem.Z)
        grad += 2 * lam * est.S
        scale = np.linalg.norm(small_problem.G.T @ small_problem.Z)
        assert np.linalg.norm(grad) <= 1e-8 * scale

    def test_matches_cg_oracle(self, rng):
        g = rng.standard_normal((5, 8))
        z = rng.standard_normal((5, 3))
        frame_n = identity_problem(8, np.zeros((8, 1))).frame
        prob = WhitenedProblem(g, z, g @ frame_n.W.T, frame_n)
        est = solve_mne(prob, 0.25)
        oracle = cg_ridge_oracle(g, z, 0.25)
        assert np.max(np.abs(est.S - oracle)) < 1e-6

    def test_linearity(self, small_problem, rng):
        z1 = rng.standard_normal((12, 3))
        z2 = rng.standard_normal((12, 3))
        s1 = solve_mne(small_problem.with_data(z1), 0.2).S
        s2 = solve_mne(small_problem.with_data(z2), 0.2).S
        s12 = solve_mne(small_problem.with_data(z1 + z2), 0.2).S
        assert np.max(np.abs(s12 - (s1 + s2))) < 1e-10


class TestSgwMNE:
    def test_zero_data(self, small_problem):
        est = solve_sgw_mne(small_problem.with_data(np.zeros((12, 2))), 0.4)
        assert np.all(est.S == 0)
        assert np.all(est.X == 0)

    def test_coefficient_space_optimality(self, small_problem):
        lam = 0.3
        est = solve_sgw_mne(small_problem, lam)
        gw = small_problem.G_W
        grad = gw.T @ (gw @ est.X - small_problem.Z) + 2 * lam * est.X
        assert np.linalg.norm(grad) <= 1e-8 * np.linalg.norm(gw.T @ small_problem.Z)

    def test_synthesis_consistency(self, small_problem):
        est = solve_sgw_mne(small_problem, 0.3)
        assert np.max(np.abs(est.S - small_problem.frame.W.T @ est.X)) < 1e-10

    def test_tight_frame_reduces_to_mne(self, rng):
        # Parseval multipliers: two constant rows with squares summing to 1
        spectrum = eigendecompose(graph_from_edges(6, [(k, k + 1) for k in range(5)]))
        m = np.full((2, 6), np.sqrt(0.5))
        frame = frame_from_multipliers(spectrum, m)
        g = rng.standard_normal((4, 6))
        z = rng.standard_normal((4, 2))
        prob = WhitenedProblem(g, z, g @ frame.W.T, frame)
        s_mne = solve_mne(prob, 0.35).S
        s_sgw = solve_sgw_mne(prob, 0.35).S
        assert np.max(np.abs(s_mne - s_sgw)) < 1e-8


class TestMCE:
    def test_kill_condition(self, small_problem):
        lam = 1.01 * np.max(np.abs(small_problem.G.T @ small_problem.Z))
        est = solve_mce(small_problem, lam, SolverConfig(max_iters=50))
        assert np.all(est.S == 0)
        assert est.converged

    def test_identity_soft_threshold(self):
        z = np.array([[3.0], [0.4]])
        prob = identity_problem(2, z)
        est = solve_mce(prob, 1.0, SolverConfig(max_iters=2000, tol_abs=1e-12))
        assert np.allclose(est.S, [[2.0], [0.0]], atol=1e-10)

    def test_kkt_residual_at_convergence(self, small_problem):
        lam = 0.1 * np.max(np.abs(small_problem.G.T @ small_problem.Z))
        config = SolverConfig(max_iters=5000, tol_abs=1e-8)
        est = solve_mce(small_problem, lam, config)
        assert est.converged
        r = l1_kkt_residual(small_problem.G, small_problem.Z, est.S, lam)
        assert r <= 1e-8

    def test_matches_coordinate_descent_oracle(self):
        rng = np.random.default_rng(17)
        a = rng.standard_normal((4, 6))
        z = rng.standard_normal((4, 1))
        lam = 0.15 * np.max(np.abs(a.T @ z))
        frame_n = identity_problem(6, np.zeros((6, 1))).frame
        prob = WhitenedProblem(a, z, a @ frame_n.W.T, frame_n)
        est = solve_mce(prob, lam, SolverConfig(max_iters=20000, tol_abs=1e-12))
        x_cd = coordinate_descent_l1_oracle(a, z[:, 0], lam)

        def objective(x):
            return 0.5 * np.sum((z[:, 0] - a @ x) ** 2) + lam * np.sum(np.abs(x))

        assert objective(est.S[:, 0]) == pytest.approx(objective(x_cd), abs=1e-8)

    def test_objective_trace_monotone(self, small_problem):
        lam = 0.05 * np.max(np.abs(small_problem.G.T @ small_problem.Z))
        est = solve_mce(small_problem, lam, SolverConfig(max_iters=300, tol_abs=1e-14))
        assert np.all(np.diff(est.objective_trace) <= 1e-12)

    def test_beats_mne_under_l1_penalty(self, small_problem):
        lam = 0.1 * np.max(np.abs(small_problem.G.T @ small_problem.Z))
        est = solve_mce(small_problem, lam, SolverConfig(max_iters=3000, tol_abs=1e-8))
        s_mne = solve_mne(small_problem, lam).S

        def penalized(s):
            data = 0.5 * np.sum((small_problem.Z - small_problem.G @ s) ** 2)
            return data + lam * np.sum(np.abs(s))

        assert est.objective <= penalized(s_mne) + 1e-12
        assert est.objective <= penalized(np.zeros_like(est.S)) + 1e-12

    def test_sgw_variant_synthesis(self, small_problem):
        lam = 0.2 * np.max(np.abs(small_problem.G_W.T @ small_problem.Z))
        est = solve_sgw_mce(small_problem, lam, SolverConfig(max_iters=500, tol_abs=1e-6))
        assert est.X is not None
        assert np.max(np.abs(est.S - small_problem.frame.W.T @ est.X)) < 1e-10

    def test_rejects_nonpositive_lambda(self, small_problem):
        with pytest.raises(ConfigError):
            solve_mce(small_problem, 0.0, SolverConfig())


class TestSVBSCCD:
    def test_lambda_zero_reduces_to_mce(self):
        rng = np.random.default_rng(23)
        n = 6
        a = rng.standard_normal((4, n))
        z = rng.standard_normal((4, 1))
        graph = graph_from_edges(n, [(k, k + 1) for k in range(n - 1)])
        frame_n = identity_problem(n, np.zeros((n, 1))).frame
        prob = WhitenedProblem(a, z, a @ frame_n.W.T, frame_n)
        mu = 0.2 * np.max(np.abs(a.T @ z))
        est_pd = solve_svbsccd(prob, graph, 0.0, mu, SolverConfig(max_iters=50000, tol_rel=1e-12))
        est_mce = solve_mce(prob, mu, SolverConfig(max_iters=20000, tol_abs=1e-12))
        assert np.max(np.abs(est_pd.S - est_mce.S)) < 1e-6

    def test_mu_zero_recovers_constant(self):
        rng = np.random.default_rng(29)
        n = 3
        g = rng.standard_normal((3, 3)) + 3 * np.eye(3)
        s_true = np.full((3, 1), 2.0)
        z = g @ s_true
        graph = graph_from_edges(n, [(0, 1), (1, 2)])
        frame_n = identity_problem(n, np.zeros((n, 1))).frame
        prob = WhitenedProblem(g, z, g @ frame_n.W.T, frame_n)
        est = solve_svbsccd(prob, graph, 0.5, 0.0, SolverConfig(max_iters=30000, tol_rel=1e-12))
        assert np.max(np.abs(est.S - 2.0)) < 1e-4

    def test_two_variable_grid_oracle(self):
        g = np.eye(2)
        z = np.array([[1.7], [-0.4]])
        lam, mu = 0.3, 0.25
        graph = graph_from_edges(2, [(0, 1)])
        frame_n = identity_problem(2, np.zeros((2, 1))).frame
        prob = WhitenedProblem(g, z, g @ frame_n.W.T, frame_n)
        est = solve_svbsccd(prob, graph, lam, mu, SolverConfig(max_iters=50000, tol_rel=1e-13))
        oracle = grid_search_2var_oracle(g, z[:, 0], graph, lam, mu)
        assert np.max(np.abs(est.S[:, 0] - oracle)) < 1e-4

    def test_best_objective_trace_monotone(self, small_problem):
        graph = build_graph(generate_icosphere(1, 0.1))
        est = solve_svbsccd(small_problem, graph, 0.05, 0.05, SolverConfig(max_iters=200))
        assert np.all(np.diff(est.objective_trace) <= 0)

    def test_beats_mne_under_same_penalty(self, small_problem):
        graph = build_graph(generate_icosphere(1, 0.1))
        lam, mu = 0.02, 0.02
        est = solve_svbsccd(small_problem, graph, lam, mu, SolverConfig(max_iters=3000, tol_rel=1e-9))
        s_mne = solve_mne(small_problem, lam).S
        grad_op = graph.gradient

        def penalized(s):
            data = 0.5 * np.sum((small_problem.Z - small_problem.G @ s) ** 2)
            return data + lam * np.abs(grad_op @ s).sum() + mu * np.abs(s).sum()

        assert est.objective <= penalized(s_mne) + 1e-12
        assert est.objective <= penalized(np.zeros_like(est.S)) + 1e-12

    def test_rejects_both_zero(self, small_problem):
        graph = build_graph(generate_icosphere(1, 0.1))
        with pytest.raises(ConfigError):
            solve_svbsccd(small_problem, graph, 0.0, 0.0, SolverConfig())


def test_source_estimate_rejects_nonfinite():
    with pytest.raises(Exception):
        SourceEstimate(np.array([[np.nan]]), None, "x", 1, 0.0, True)
