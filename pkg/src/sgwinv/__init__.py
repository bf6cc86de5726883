"""Sparse linear inverse problems on triangulated surfaces via graph wavelets."""

__version__ = "0.1.0"

# __version__ must be bound before the submodule imports below; runio and
# cli read it back through `from . import __version__`.

from .errors import ConfigError, DataIOError, MeshError, NumericsError
from .forward import (
    Leadfield,
    NoiseModel,
    WhitenedProblem,
    Whitener,
    build_whitener,
    helmet_sensors,
    synth_baseline_covariance,
    synth_leadfield,
    whiten,
)
from .frame import (
    KernelSpec,
    WaveletFrame,
    analyze,
    build_frame,
    design_scales,
    dual_frame,
    synthesize,
)
from .matio import read_matrix, write_matrix
from .mesh import (
    CorticalGraph,
    LaplacianSpectrum,
    TriangleMesh,
    build_graph,
    eigendecompose,
    generate_icosphere,
    graph_from_edges,
    load_mesh,
    save_mesh,
    vertex_distances,
)
from .metrics import (
    MetricsReport,
    energy_map,
    format_metric_tables,
    l2_ratio,
    peak_time,
    score_estimate,
    spatial_dispersion,
    summarize,
    wasserstein1,
)
from .sbl import sbl_fit, solve_sbl, solve_sgw_sbl
from .simulate import (
    SOLVER_REGISTRY,
    PatchScenario,
    ScenarioConfig,
    SolverSpec,
    StudySetup,
    SweepConfig,
    calibrate_beta,
    evaluate_scenario,
    grow_patch,
    prepare_study,
    run_solver,
    run_sweep,
    scenario_seed,
    simulate_scenario,
)
from .solvers import (
    SolverConfig,
    SourceEstimate,
    estimate_snr,
    solve_mce,
    solve_mne,
    solve_sgw_mce,
    solve_sgw_mne,
    solve_svbsccd,
)

__all__ = [
    "__version__",
    "ConfigError",
    "CorticalGraph",
    "DataIOError",
    "KernelSpec",
    "LaplacianSpectrum",
    "Leadfield",
    "MeshError",
    "MetricsReport",
    "NoiseModel",
    "NumericsError",
    "PatchScenario",
    "ScenarioConfig",
    "SolverConfig",
    "SolverSpec",
    "SourceEstimate",
    "StudySetup",
    "SweepConfig",
    "SOLVER_REGISTRY",
    "TriangleMesh",
    "WaveletFrame",
    "WhitenedProblem",
    "Whitener",
    "analyze",
    "build_frame",
    "build_graph",
    "build_whitener",
    "calibrate_beta",
    "design_scales",
    "dual_frame",
    "eigendecompose",
    "energy_map",
    "evaluate_scenario",
    "format_metric_tables",
    "generate_icosphere",
    "graph_from_edges",
    "estimate_snr",
    "grow_patch",
    "helmet_sensors",
    "l2_ratio",
    "load_mesh",
    "peak_time",
    "prepare_study",
    "read_matrix",
    "run_solver",
    "run_sweep",
    "save_mesh",
    "sbl_fit",
    "scenario_seed",
    "score_estimate",
    "simulate_scenario",
    "solve_mce",
    "solve_mne",
    "solve_sbl",
    "solve_sgw_mce",
    "solve_sgw_mne",
    "solve_sgw_sbl",
    "solve_svbsccd",
    "spatial_dispersion",
    "summarize",
    "synth_baseline_covariance",
    "synth_leadfield",
    "synthesize",
    "vertex_distances",
    "wasserstein1",
    "whiten",
    "write_matrix",
]
