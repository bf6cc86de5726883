"""Monte Carlo patch benchmark: scenario generation and solver sweeps.

A scenario is a connected vertex patch carrying constant amplitude beta
over an active time window, observed through the leadfield under
correlated baseline noise.  beta is calibrated so the sensor-domain
peak-signal-to-noise-std ratio hits a target PSNR.  Sweeps run every
configured solver on every scenario and score the estimates; all
randomness derives from one master seed.
"""

from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .errors import ConfigError, NumericsError
from .forward import (
    DEFAULT_TAU,
    Leadfield,
    NoiseModel,
    Whitener,
    WhitenedProblem,
    build_whitener,
    helmet_sensors,
    synth_baseline_covariance,
    synth_leadfield,
    whiten,
)
from .frame import WaveletFrame, build_frame, design_scales
from .mesh import (
    CorticalGraph,
    LaplacianSpectrum,
    TriangleMesh,
    build_graph,
    eigendecompose,
    vertex_distances,
)
from .metrics import score_estimate
from .sbl import solve_sbl, solve_sgw_sbl
from .solvers import (
    SolverConfig,
    SourceEstimate,
    resolve_lambda,
    resolve_mu,
    solve_mce,
    solve_mne,
    solve_sgw_mce,
    solve_sgw_mne,
    solve_svbsccd,
)

__all__ = [
    "PatchScenario",
    "ScenarioConfig",
    "SolverSpec",
    "StudySetup",
    "SweepConfig",
    "SOLVER_REGISTRY",
    "calibrate_beta",
    "default_window",
    "evaluate_scenario",
    "grow_patch",
    "prepare_study",
    "run_solver",
    "run_sweep",
    "scenario_seed",
    "simulate_scenario",
]


def grow_patch(
    graph: CorticalGraph, seed_vertex: int, size: int, rng: np.random.Generator
) -> np.ndarray:
    """Connected patch of `size` vertices grown around seed_vertex.

    Randomized breadth-first accretion: at each step one vertex is drawn
    uniformly from the current frontier (neighbors of the patch not yet
    in it) and absorbed.
    """
    n = graph.N
    if not 0 <= seed_vertex < n:
        raise ConfigError(f"seed vertex {seed_vertex} outside 0..{n - 1}")
    if not 1 <= size <= n:
        raise ConfigError(f"patch size {size} outside 1..{n}")
    adj = graph.adjacency
    # 0 = untouched, 1 = frontier, 2 = in patch
    state = np.zeros(n, np.int8)
    state[seed_vertex] = 2
    patch = [seed_vertex]
    frontier: list[int] = []

    def absorb(v: int) -> None:
        for u in adj.indices[adj.indptr[v] : adj.indptr[v + 1]]:
            if state[u] == 0:
                state[u] = 1
                frontier.append(int(u))

    absorb(seed_vertex)
    while len(patch) < size:
        if not frontier:
            raise ConfigError(
                f"component of vertex {seed_vertex} has only {len(patch)} "
                f"vertices, cannot grow a patch of {size}"
            )
        k = int(rng.integers(len(frontier)))
        v = frontier[k]
        frontier[k] = frontier[-1]
        frontier.pop()
        state[v] = 2
        patch.append(v)
        absorb(v)
    return np.sort(np.asarray(patch, dtype=np.int64))


def calibrate_beta(
    G0: Leadfield, patch: np.ndarray, noise: NoiseModel, psnr: float, waveform
) -> float:
    """Source amplitude hitting the target sensor-domain PSNR.

    With unit-amplitude sources (patch indicator times the waveform) the
    sensor peak is p = max_{j,l} |G0 S_unit|; the noise std is the RMS of
    the diagonal of Sigma_B averaged over sensors.  beta = psnr * sigma / p.
    """
    if not psnr > 0:
        raise ConfigError(f"psnr must be positive, got {psnr}")
    w = np.asarray(waveform, float)
    summed = G0.G0[:, np.asarray(patch, int)] @ np.ones(len(patch))
    # |summed_j * w_l| factorizes, so the max over (j, l) is the product
    p = float(np.max(np.abs(summed)) * np.max(np.abs(w)))
    if p == 0:
        raise NumericsError("patch is invisible to every sensor (unit peak 0)")
    sigma = float(np.sqrt(np.mean(np.diag(noise.Sigma_B))))
    return psnr * sigma / p


def default_window(L: int) -> tuple[int, int]:
    """Active window covering the second half of the record."""
    return (L // 2, L - 1)


@dataclass(frozen=True)
class ScenarioConfig:
    """One patch scenario: vertex count, target PSNR, record length, window."""

    size: int
    psnr: float
    L: int = 100
    active_window: tuple[int, int] | None = None
    size_label: str = ""

    def __post_init__(self):
        if self.size < 1:
            raise ConfigError(f"patch size must be >= 1, got {self.size}")
        if self.L < 1:
            raise ConfigError(f"record length must be >= 1, got {self.L}")
        if not self.psnr > 0:
            raise ConfigError(f"psnr must be positive, got {self.psnr}")
        window = self.active_window or default_window(self.L)
        l0, l1 = int(window[0]), int(window[1])
        if not 0 <= l0 <= l1 < self.L:
            raise ConfigError(f"active window {window} outside 0..{self.L - 1}")
        object.__setattr__(self, "active_window", (l0, l1))
        if not self.size_label:
            object.__setattr__(self, "size_label", str(self.size))


@dataclass(frozen=True)
class PatchScenario:
    """Simulated ground truth plus the sensor record it generated."""

    patch_vertices: np.ndarray
    size_label: str
    beta: float
    S_sim: np.ndarray
    Z_sim: np.ndarray
    seed: int
    psnr: float
    active_window: tuple[int, int]
    index: int = 0

    def __post_init__(self):
        patch = np.asarray(self.patch_vertices, np.int64)
        s = np.asarray(self.S_sim, float)
        z = np.asarray(self.Z_sim, float)
        if s.shape[1] != z.shape[1]:
            raise ConfigError("source and sensor records disagree in length")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(z))):
            raise NumericsError("non-finite scenario data")
        l0, l1 = self.active_window
        mask = np.zeros(s.shape[0], bool)
        mask[patch] = True
        if np.any(s[~mask] != 0):
            raise NumericsError("simulated sources leak outside the patch")
        active = s[np.ix_(mask, np.arange(l0, l1 + 1))]
        if np.any(active != self.beta):
            raise NumericsError("patch rows deviate from beta on the window")
        off = np.concatenate([s[mask, :l0].ravel(), s[mask, l1 + 1 :].ravel()])
        if off.size and np.any(off != 0):
            raise NumericsError("patch rows active outside the window")
        object.__setattr__(self, "patch_vertices", patch)
        for name, arr in (("S_sim", s), ("Z_sim", z)):
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_vertices(self) -> int:
        return int(self.patch_vertices.size)

    @property
    def L(self) -> int:
        return int(self.S_sim.shape[1])


def _noise_factor(noise: NoiseModel) -> np.ndarray:
    """Symmetric square root of Sigma_B (tolerates PSD rank deficiency)."""
    evals, evecs = scipy.linalg.eigh(noise.Sigma_B)
    return (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.T


def simulate_scenario(
    graph: CorticalGraph,
    leadfield: Leadfield,
    noise: NoiseModel,
    config: ScenarioConfig,
    seed: int,
) -> PatchScenario:
    """Draw one scenario: random patch location, calibrated beta, iid noise.

    Deterministic given `seed`.  psnr = inf is the noise-free limit: no
    noise is drawn and beta is set to give unit sensor-domain peak.
    """
    if graph.N != leadfield.N:
        raise ConfigError("graph and leadfield disagree on vertex count")
    rng = np.random.default_rng(seed)
    l0, l1 = config.active_window
    seed_vertex = int(rng.integers(graph.N))
    patch = grow_patch(graph, seed_vertex, config.size, rng)
    w = np.zeros(config.L)
    w[l0 : l1 + 1] = 1.0
    if np.isinf(config.psnr):
        summed = leadfield.G0[:, patch] @ np.ones(len(patch))
        peak = float(np.max(np.abs(summed)))
        if peak == 0:
            raise NumericsError("patch is invisible to every sensor")
        beta = 1.0 / peak
        noise_block = np.zeros((leadfield.J0, config.L))
    else:
        beta = calibrate_beta(leadfield, patch, noise, config.psnr, w)
        noise_block = _noise_factor(noise) @ rng.standard_normal(
            (leadfield.J0, config.L)
        )
    s_sim = np.zeros((graph.N, config.L))
    s_sim[np.ix_(patch, np.arange(l0, l1 + 1))] = beta
    clean = leadfield.G0 @ s_sim
    if np.isfinite(config.psnr):
        sigma = float(np.sqrt(np.mean(np.diag(noise.Sigma_B))))
        achieved = float(np.max(np.abs(clean))) / sigma
        if abs(achieved - config.psnr) > 1e-9 * config.psnr:
            raise NumericsError(
                f"calibration drift: achieved PSNR {achieved!r}, "
                f"target {config.psnr!r}"
            )
    return PatchScenario(
        patch_vertices=patch,
        size_label=config.size_label,
        beta=float(beta),
        S_sim=s_sim,
        Z_sim=clean + noise_block,
        seed=int(seed),
        psnr=float(config.psnr),
        active_window=(l0, l1),
    )


# ------------------------------------------------------------------- sweep


@dataclass(frozen=True)
class StudySetup:
    """Everything a sweep needs that does not depend on the scenario."""

    mesh: TriangleMesh
    graph: CorticalGraph
    spectrum: LaplacianSpectrum
    frame: WaveletFrame
    leadfield: Leadfield
    noise: NoiseModel
    whitener: Whitener
    distances: np.ndarray

    def base_problem(self) -> WhitenedProblem:
        """Whitened operators with an empty data block (rebind per scenario)."""
        z0 = np.zeros((self.leadfield.J0, 1))
        return whiten(self.whitener, z0, self.leadfield, self.frame)


def prepare_study(
    mesh: TriangleMesh,
    n_sensors: int = 60,
    K: float = 16.0,
    N_s: int = 3,
    radius_factor: float = 1.5,
    offset_factor: float = 0.35,
    noise_condition: float = 10.0,
    noise_seed: int = 0,
    tau: float = DEFAULT_TAU,
) -> StudySetup:
    """Assemble graph, spectrum, frame, forward model, and whitener."""
    graph = build_graph(mesh)
    spectrum = eigendecompose(graph)
    frame = build_frame(spectrum, design_scales(spectrum.lambda_max, K, N_s))
    sensors = helmet_sensors(mesh, n_sensors, radius_factor, offset_factor)
    leadfield = synth_leadfield(mesh, sensors)
    noise = synth_baseline_covariance(n_sensors, noise_condition, noise_seed)
    whitener = build_whitener(noise, tau)
    return StudySetup(
        mesh=mesh,
        graph=graph,
        spectrum=spectrum,
        frame=frame,
        leadfield=leadfield,
        noise=noise,
        whitener=whitener,
        distances=vertex_distances(mesh),
    )


@dataclass(frozen=True)
class SolverSpec:
    """A registry solver plus its configuration, labeled for reporting."""

    name: str
    config: SolverConfig = SolverConfig()

    def __post_init__(self):
        if self.name not in SOLVER_REGISTRY:
            known = ", ".join(sorted(SOLVER_REGISTRY))
            raise ConfigError(f"unknown solver {self.name!r} (known: {known})")


def _run_mne(problem, graph, config):
    return solve_mne(problem, resolve_lambda(problem.G, problem.Z, config))


def _run_sgw_mne(problem, graph, config):
    return solve_sgw_mne(problem, resolve_lambda(problem.G_W, problem.Z, config))


def _run_mce(problem, graph, config):
    return solve_mce(problem, resolve_lambda(problem.G, problem.Z, config), config)


def _run_sgw_mce(problem, graph, config):
    return solve_sgw_mce(
        problem, resolve_lambda(problem.G_W, problem.Z, config), config
    )


def _run_svbsccd(problem, graph, config):
    lam = resolve_lambda(problem.G, problem.Z, config)
    if config.mu is None and config.mu_scale is None:
        mu = 0.3 * lam  # sparsity term kept below the TV weight by default
    else:
        mu = resolve_mu(problem.G, problem.Z, config)
    return solve_svbsccd(problem, graph, lam, mu, config)


def _sbl_runner(algorithm: str, spatial: bool) -> Callable:
    def run(problem, graph, config):
        if spatial:
            return solve_sbl(problem, config, algorithm)
        return solve_sgw_sbl(problem, config, algorithm)

    return run


SOLVER_REGISTRY: dict[str, Callable] = {
    "mne": _run_mne,
    "sgw-mne": _run_sgw_mne,
    "mce": _run_mce,
    "sgw-mce": _run_sgw_mce,
    "svbsccd": _run_svbsccd,
    "sbl-em": _sbl_runner("em", spatial=True),
    "sbl-champagne": _sbl_runner("champagne", spatial=True),
    "sgw-sbl-em": _sbl_runner("em", spatial=False),
    "sgw-sbl-champagne": _sbl_runner("champagne", spatial=False),
}


# an l1 weight at or above ||A^T Z||_max zeroes the estimate outright, so
# the SNR-derived ridge weight is a poor default for the sparse solvers;
# they default to a fraction of that kill threshold instead.  The TV
# solver sees roughly vertex-degree copies of its weight per vertex and
# needs a correspondingly smaller fraction.
DEFAULT_L1_SCALE = 0.3
DEFAULT_TV_SCALE = 0.03
_DEFAULT_SCALES = {
    "mce": DEFAULT_L1_SCALE,
    "sgw-mce": DEFAULT_L1_SCALE,
    "svbsccd": DEFAULT_TV_SCALE,
}


def _default_config(name: str, config: SolverConfig) -> SolverConfig:
    """Fill in a lambda rule for the sparse family when none is set.

    Quadratic solvers need no filling: with no rule set they fall through
    to the data-driven SNR rule inside resolve_lambda.
    """
    has_rule = (
        config.lambda_ is not None
        or config.rho is not None
        or config.lambda_scale is not None
    )
    if not has_rule and name in _DEFAULT_SCALES:
        return replace(config, lambda_scale=_DEFAULT_SCALES[name])
    return config


def run_solver(
    spec: SolverSpec, problem: WhitenedProblem, graph: CorticalGraph
) -> SourceEstimate:
    """Run one registry solver on a whitened problem."""
    config = _default_config(spec.name, spec.config)
    return SOLVER_REGISTRY[spec.name](problem, graph, config)


@dataclass(frozen=True)
class SweepConfig:
    """Patch sizes, repetition count, PSNR, record shape, and solver list."""

    sizes: tuple[tuple[str, int], ...]
    n_patches: int
    psnr: float
    L: int = 100
    active_window: tuple[int, int] | None = None
    solvers: tuple[SolverSpec, ...] = ()

    def __post_init__(self):
        if self.n_patches < 1:
            raise ConfigError(f"n_patches must be >= 1, got {self.n_patches}")
        if not self.sizes:
            raise ConfigError("at least one patch size is required")
        labels = [label for label, _ in self.sizes]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate size labels in {labels}")
        object.__setattr__(
            self, "sizes", tuple((str(a), int(b)) for a, b in self.sizes)
        )
        object.__setattr__(self, "solvers", tuple(self.solvers))

    def scenario_config(self, label: str, size: int) -> ScenarioConfig:
        return ScenarioConfig(
            size=size,
            psnr=self.psnr,
            L=self.L,
            active_window=self.active_window,
            size_label=label,
        )


def scenario_seed(master_seed: int, size: int, index: int) -> int:
    """Stable per-scenario seed derived from (master seed, size, index)."""
    ss = np.random.SeedSequence([int(master_seed), int(size), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def evaluate_scenario(
    setup: StudySetup,
    base: WhitenedProblem,
    scenario: PatchScenario,
    solvers,
    estimate_sink=None,
) -> list[dict]:
    """Run and score each solver on one scenario, one record per solver.

    A solver failure lands in the record's `error` field; scoring then
    continues with the next solver.
    """
    problem = base.with_data(setup.whitener.Upsilon @ scenario.Z_sim)
    records = []
    for spec in solvers:
        record = {
            "solver": spec.name,
            "size": scenario.size_label,
            "index": scenario.index,
            "seed": scenario.seed,
            "patch_size": scenario.n_vertices,
        }
        try:
            estimate = run_solver(spec, problem, setup.graph)
            record.update(
                score_estimate(
                    estimate.S,
                    scenario.S_sim,
                    problem.Z,
                    setup.distances,
                    scenario.active_window,
                )
            )
            record.update(
                iterations=estimate.iterations,
                converged=estimate.converged,
                error="",
            )
            if estimate_sink is not None:
                estimate_sink(scenario, spec.name, estimate)
        except NumericsError as exc:
            record.update(iterations=0, converged=False, error=str(exc))
        records.append(record)
    return records


def _sweep_one(
    setup: StudySetup,
    config: SweepConfig,
    base: WhitenedProblem,
    label: str,
    size: int,
    index: int,
    master_seed: int,
    estimate_sink,
    scenario_sink,
) -> list[dict]:
    seed = scenario_seed(master_seed, size, index)
    scenario = simulate_scenario(
        setup.graph,
        setup.leadfield,
        setup.noise,
        config.scenario_config(label, size),
        seed,
    )
    scenario = replace(scenario, index=index)
    if scenario_sink is not None:
        scenario_sink(scenario)
    return evaluate_scenario(setup, base, scenario, config.solvers, estimate_sink)


def run_sweep(
    setup: StudySetup,
    config: SweepConfig,
    master_seed: int,
    estimate_sink=None,
    scenario_sink=None,
    threads: int = 1,
) -> list[dict]:
    """Score every configured solver on every scenario.

    Returns one record per scenario x solver in deterministic order
    (sizes in config order, then index, then solver).  A solver failure
    is recorded in the `error` field and the sweep continues.  Sinks
    receive scenarios and estimates as they are produced; with
    threads > 1 scenarios run on a thread pool and sink calls may
    interleave, but record order and scenario content do not change.
    """
    if not config.solvers:
        raise ConfigError("sweep needs at least one solver")
    base = setup.base_problem()
    jobs = [
        (label, size, index)
        for label, size in config.sizes
        for index in range(config.n_patches)
    ]

    def work(job):
        label, size, index = job
        return _sweep_one(
            setup,
            config,
            base,
            label,
            size,
            index,
            master_seed,
            estimate_sink,
            scenario_sink,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(work, jobs))
    else:
        chunks = [work(job) for job in jobs]
    return [record for chunk in chunks for record in chunk]
