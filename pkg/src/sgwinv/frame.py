"""Spectral graph wavelet frame: kernels, scales, frame operators, diagnostics.

The frame stacks one scaling-function block and N_s wavelet blocks, each
an N×N spectral multiplier operator; row n of block b is the impulse
response of the block's kernel at vertex n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, NumericsError
from .mesh import LaplacianSpectrum, _freeze

# arg-max of the band-pass kernel (root of 3x^2 - 12x + 11 inside [1, 2])
KERNEL_PEAK_X = 2.0 - 1.0 / np.sqrt(3.0)


def kernel_g(x):
    """Band-pass kernel: x² below 1, a cubic bump on [1, 2], (2/x)² beyond.

    Continuous, g(0) = 0, decays like x⁻², peaks at x = 2 − 1/√3.
    """
    x = np.asarray(x, dtype=float)
    return np.piecewise(
        x,
        [x < 1.0, (x >= 1.0) & (x <= 2.0), x > 2.0],
        [
            lambda t: t**2,
            lambda t: -5.0 + 11.0 * t - 6.0 * t**2 + t**3,
            lambda t: (2.0 / t) ** 2,
        ],
    )


KERNEL_G_MAX = float(kernel_g(KERNEL_PEAK_X))


def kernel_h(x, lambda_min: float):
    """Low-pass kernel C·exp(−(x/(0.6·λ_min))⁴), C matching max g.

    Quartic-exponential profile: essentially flat below λ_min, below
    1e-12 of its peak past ~3.3·λ_min.
    """
    if lambda_min <= 0:
        raise ConfigError(f"lambda_min must be positive, got {lambda_min}")
    x = np.asarray(x, dtype=float)
    return KERNEL_G_MAX * np.exp(-((x / (0.6 * lambda_min)) ** 4))


@dataclass(frozen=True)
class KernelSpec:
    """Hyper-parameters of the wavelet design.

    scales are log-spaced so the dilated band-pass kernels g(s_j·) peak
    on a geometric grid from lambda_max down to lambda_min = lambda_max/K;
    quality_factor is the half-power Q of g.
    """

    K: float
    N_s: int
    lambda_max: float
    lambda_min: float
    scales: np.ndarray
    quality_factor: float

    def __post_init__(self):
        object.__setattr__(self, "scales", _freeze(np.asarray(self.scales, float)))
        if self.K <= 1:
            raise ConfigError(f"K must be > 1, got {self.K}")
        if self.N_s < 1:
            raise ConfigError(f"N_s must be >= 1, got {self.N_s}")
        if abs(self.lambda_min - self.lambda_max / self.K) > 0:
            raise ConfigError("lambda_min must equal lambda_max / K")


def kernel_quality_factor() -> float:
    """Half-power Q of g: arg-max divided by the −3 dB bandwidth."""
    half = KERNEL_G_MAX / np.sqrt(2.0)
    lo = brentq(lambda t: kernel_g(t) - half, 1e-12, KERNEL_PEAK_X)
    hi = brentq(lambda t: kernel_g(t) - half, KERNEL_PEAK_X, 100.0)
    return KERNEL_PEAK_X / (hi - lo)


def design_scales(lambda_max: float, K: float = 16.0, N_s: int = 3) -> KernelSpec:
    """Choose wavelet scales tiling [lambda_max/K, lambda_max].

    Scale s_j places the peak of g(s_j·) at the j-th point of a geometric
    grid from lambda_max down to lambda_min (at the geometric midpoint
    when N_s = 1).
    """
    if lambda_max <= 0:
        raise ConfigError(f"lambda_max must be positive, got {lambda_max}")
    if K <= 1:
        raise ConfigError(f"K must be > 1, got {K}")
    if N_s < 1:
        raise ConfigError(f"N_s must be >= 1, got {N_s}")
    lambda_min = lambda_max / K
    if N_s == 1:
        peaks = np.array([np.sqrt(lambda_max * lambda_min)])
    else:
        peaks = np.geomspace(lambda_max, lambda_min, N_s)
    scales = KERNEL_PEAK_X / peaks
    return KernelSpec(
        K=float(K),
        N_s=int(N_s),
        lambda_max=float(lambda_max),
        lambda_min=lambda_min,
        scales=scales,
        quality_factor=kernel_quality_factor(),
    )


def spectral_multipliers(spectrum: LaplacianSpectrum, spec: KernelSpec) -> np.ndarray:
    """Kernel values on the discrete spectrum, shape (N_s + 1, N).

    Row 0 is h(λ_l), row j is g(s_j·λ_l).
    """
    lam = spectrum.eigenvalues
    rows = [kernel_h(lam, spec.lambda_min)]
    rows += [kernel_g(s * lam) for s in spec.scales]
    return np.vstack(rows)


@dataclass(frozen=True)
class WaveletFrame:
    """Analysis frame W of shape (N·(n_blocks), N) with spectral structure.

    Block b of W equals χ·diag(multipliers[b])·χᵀ where χ are Laplacian
    eigenvectors; multipliers row 0 is the scaling (low-pass) kernel.
    frame_bounds = (A, B) = extrema of Σ_b multipliers[b]² over the
    spectrum.
    """

    W: np.ndarray
    spectrum: LaplacianSpectrum
    multipliers: np.ndarray
    frame_bounds: tuple[float, float]
    kernel: KernelSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "W", _freeze(self.W))
        object.__setattr__(self, "multipliers", _freeze(self.multipliers))

    @property
    def N(self) -> int:
        return self.W.shape[1]

    @property
    def N_W(self) -> int:
        return self.W.shape[0]

    @property
    def n_blocks(self) -> int:
        return self.multipliers.shape[0]


def frame_from_multipliers(
    spectrum: LaplacianSpectrum, multipliers, kernel: KernelSpec | None = None
) -> WaveletFrame:
    """Assemble a frame from explicit per-eigenvalue multiplier rows."""
    m = np.atleast_2d(np.asarray(multipliers, dtype=float))
    if m.shape[1] != spectrum.N:
        raise ConfigError(
            f"multiplier rows have length {m.shape[1]}, spectrum has N={spectrum.N}"
        )
    if not np.all(np.isfinite(m)):
        raise ConfigError("non-finite kernel multiplier")
    chi = spectrum.eigenvectors
    blocks = [(chi * row) @ chi.T for row in m]
    g_of_lambda = np.sum(m**2, axis=0)
    bounds = (float(g_of_lambda.min()), float(g_of_lambda.max()))
    return WaveletFrame(np.vstack(blocks), spectrum, m, bounds, kernel)


def build_frame(spectrum: LaplacianSpectrum, spec: KernelSpec) -> WaveletFrame:
    """Frame with one scaling block and N_s wavelet blocks, N_W = N(N_s+1)."""
    frame = frame_from_multipliers(spectrum, spectral_multipliers(spectrum, spec), spec)
    a, _ = frame.frame_bounds
    if a <= 0:
        raise NumericsError(
            "frame lower bound is zero: some eigenvalue is covered by no "
            "kernel; increase N_s or decrease K"
        )
    return frame


def frame_bounds(spectrum: LaplacianSpectrum, spec: KernelSpec) -> tuple[float, float]:
    """(A, B): min and max over the spectrum of h(λ)² + Σ_j g(s_jλ)²."""
    m = spectral_multipliers(spectrum, spec)
    g_of_lambda = np.sum(m**2, axis=0)
    a = float(g_of_lambda.min())
    if a <= 0:
        raise NumericsError(
            "frame lower bound is zero: some eigenvalue is covered by no "
            "kernel; increase N_s or decrease K"
        )
    return a, float(g_of_lambda.max())


def analyze(frame: WaveletFrame, f: np.ndarray) -> np.ndarray:
    """Frame coefficients W·f (accepts N-vectors or N×L matrices)."""
    return frame.W @ f


def synthesize(frame: WaveletFrame, coeffs: np.ndarray) -> np.ndarray:
    """Adjoint map Wᵀ·X back to vertex space."""
    return frame.W.T @ coeffs


def dual_frame(frame: WaveletFrame) -> np.ndarray:
    """Canonical dual W(WᵀW)⁻¹, so that dualᵀ·W·f reconstructs f.

    Uses the spectral factorization WᵀW = χ·diag(G(λ))·χᵀ rather than a
    generic inverse.
    """
    g_of_lambda = np.sum(frame.multipliers**2, axis=0)
    a = g_of_lambda.min()
    if a <= 1e-14 * max(g_of_lambda.max(), 1.0):
        raise NumericsError("frame operator is singular (lower bound ~ 0)")
    chi = frame.spectrum.eigenvectors
    inv_gram = (chi / g_of_lambda) @ chi.T
    return frame.W @ inv_gram


def kernel_curves(spec: KernelSpec, lambdas) -> np.ndarray:
    """Table (λ, h(λ), g(s₁λ), …, g(s_{N_s}λ)) for plotting, one row per λ."""
    lam = np.asarray(lambdas, dtype=float)
    cols = [lam, kernel_h(lam, spec.lambda_min)]
    cols += [kernel_g(s * lam) for s in spec.scales]
    return np.column_stack(cols)
