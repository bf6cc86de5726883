"""Synthetic magnetometer leadfields, baseline noise, and whitening.

The leadfield is free-space current-dipole physics: sources sit at mesh
vertices, oriented along outward surface normals; point magnetometers on
a sphere around the mesh record the field component along their radial
axis.  The sensor sphere is deliberately offset from the mesh centroid:
for concentric spheres with radial sources and radial sensors the triple
product (r̂ × p)·v̂ cancels identically and the leadfield is zero.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .errors import ConfigError, NumericsError
from .frame import WaveletFrame
from .mesh import TriangleMesh, _freeze

DEFAULT_TAU = 1e-8


def dipole_field(position, orientation, sensor) -> np.ndarray:
    """Free-space magnetic field of a current dipole, up to constants.

    B ∝ p × r / |r|³ with r the vector from the dipole to the sensor.
    """
    r = np.asarray(sensor, float) - np.asarray(position, float)
    rn = np.linalg.norm(r)
    if rn == 0:
        raise ConfigError("sensor coincides with the dipole")
    return np.cross(np.asarray(orientation, float), r) / rn**3


def surface_normals(mesh: TriangleMesh) -> np.ndarray:
    """Outward unit normals per vertex (area-weighted face-normal average)."""
    v, t = mesh.vertices, mesh.triangles
    face_n = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    normals = np.zeros_like(v)
    for k in range(3):
        np.add.at(normals, t[:, k], face_n)
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    if np.any(lengths == 0):
        raise NumericsError("vertex with vanishing normal (degenerate star)")
    normals = normals / lengths
    # orient away from the centroid
    outward = np.sign(np.sum(normals * (v - v.mean(axis=0)), axis=1))
    outward[outward == 0] = 1.0
    return normals * outward[:, None]


def fibonacci_sensors(n: int, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """n points quasi-uniform on a sphere (golden-angle spiral), (n, 3)."""
    if n < 1:
        raise ConfigError("need at least one sensor")
    i = np.arange(n)
    z = 1.0 - 2.0 * (i + 0.5) / n
    rho = np.sqrt(1.0 - z**2)
    theta = np.pi * (1.0 + np.sqrt(5.0)) * i
    pts = np.column_stack([rho * np.cos(theta), rho * np.sin(theta), z])
    return radius * pts + np.asarray(center, float)


def helmet_sensors(
    mesh: TriangleMesh, n: int, radius_factor: float = 1.5, offset_factor: float = 0.35
) -> np.ndarray:
    """Sensor sphere around the mesh, offset along +z like a helmet.

    The offset breaks the concentric-sphere degeneracy (see module
    docstring); radius_factor − offset_factor must exceed 1 so every
    sensor clears the mesh bounding sphere.
    """
    if radius_factor - offset_factor <= 1.0:
        raise ConfigError("sensor sphere intersects the mesh bounding sphere")
    centroid = mesh.vertices.mean(axis=0)
    bounding = np.max(np.linalg.norm(mesh.vertices - centroid, axis=1))
    center = centroid + np.array([0.0, 0.0, offset_factor * bounding])
    return fibonacci_sensors(n, radius_factor * bounding, center)


@dataclass(frozen=True)
class Leadfield:
    """Gain matrix G0 (J0, N) with its sensor and source geometry."""

    G0: np.ndarray
    sensor_positions: np.ndarray
    source_orientations: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "G0", _freeze(self.G0))
        object.__setattr__(self, "sensor_positions", _freeze(self.sensor_positions))
        object.__setattr__(
            self, "source_orientations", _freeze(self.source_orientations)
        )
        if not np.all(np.isfinite(self.G0)):
            raise NumericsError("non-finite leadfield entry")
        col_peak = np.max(np.abs(self.G0), axis=0)
        if np.any(col_peak < 1e-14 * np.max(col_peak, initial=0.0)):
            dead = int(np.argmin(col_peak))
            raise NumericsError(
                f"leadfield column {dead} is numerically zero; source {dead} "
                "is invisible to every sensor (degenerate geometry)"
            )

    @property
    def J0(self) -> int:
        return self.G0.shape[0]

    @property
    def N(self) -> int:
        return self.G0.shape[1]


def synth_leadfield(
    mesh: TriangleMesh,
    sensors: np.ndarray,
    model: str = "magnetic-dipole",
    array_center=None,
) -> Leadfield:
    """Leadfield column n = dipole field at vertex n projected on sensor axes.

    Sensor axes are radial with respect to array_center (default: the
    sensor centroid).  Sensors must sit strictly outside the mesh's
    bounding sphere.
    """
    if model != "magnetic-dipole":
        raise ConfigError(f"unsupported forward model {model!r}")
    sensors = np.atleast_2d(np.asarray(sensors, float))
    centroid = mesh.vertices.mean(axis=0)
    bounding = np.max(np.linalg.norm(mesh.vertices - centroid, axis=1))
    dist = np.linalg.norm(sensors - centroid, axis=1)
    if np.min(dist) <= bounding:
        j = int(np.argmin(dist))
        raise ConfigError(
            f"sensor {j} lies inside the mesh bounding sphere "
            f"({dist[j]:.4g} <= {bounding:.4g})"
        )
    center = sensors.mean(axis=0) if array_center is None else np.asarray(array_center, float)
    axes = sensors - center
    norms = np.linalg.norm(axes, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ConfigError("sensor coincides with the array center (no radial axis)")
    axes = axes / norms
    orientations = surface_normals(mesh)
    # r[j, n] = sensor_j - vertex_n
    r = sensors[:, None, :] - mesh.vertices[None, :, :]
    r3 = np.linalg.norm(r, axis=2) ** 3
    field = np.cross(orientations[None, :, :], r) / r3[:, :, None]
    g0 = np.einsum("jnc,jc->jn", field, axes)
    # the projection must retain a nontrivial share of the field magnitude;
    # a concentric radial geometry cancels it analytically, leaving rounding noise
    field_scale = np.max(np.linalg.norm(field, axis=2))
    if np.max(np.abs(g0)) < 1e-10 * field_scale:
        raise NumericsError(
            "leadfield is numerically zero: sensor axes are orthogonal to the "
            "dipole fields (degenerate, e.g. concentric radial geometry)"
        )
    return Leadfield(g0, sensors, orientations)


@dataclass(frozen=True)
class NoiseModel:
    """Baseline sensor covariance Sigma_B, symmetric PSD."""

    Sigma_B: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.Sigma_B, float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ConfigError(f"covariance must be square, got {s.shape}")
        if np.max(np.abs(s - s.T)) > 1e-12 * max(np.max(np.abs(s)), 1.0):
            raise NumericsError("covariance is not symmetric")
        evals = scipy.linalg.eigvalsh(s)
        if evals[0] < -1e-12 * max(evals[-1], 0.0):
            raise NumericsError(f"covariance has negative eigenvalue {evals[0]:.3g}")
        object.__setattr__(self, "Sigma_B", _freeze(s))

    @property
    def J0(self) -> int:
        return self.Sigma_B.shape[0]


def synth_baseline_covariance(
    J0: int, condition: float = 10.0, seed=0, scale: float = 1.0
) -> NoiseModel:
    """Random SPD covariance with prescribed condition number.

    Eigenvalues are geometrically spaced in [scale/condition, scale];
    the eigenbasis is a seeded random orthogonal matrix, so the result
    is bit-reproducible for a given seed.
    """
    if condition < 1.0:
        raise ConfigError(f"condition must be >= 1, got {condition}")
    if J0 < 1:
        raise ConfigError("J0 must be positive")
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((J0, J0)))
    q = q * np.sign(np.diag(r))  # fix the QR sign ambiguity
    evals = np.geomspace(scale, scale / condition, J0)
    return NoiseModel((q * evals) @ q.T)


@dataclass(frozen=True)
class Whitener:
    """Spectral whitener Upsilon (J, J0) with J eigen-directions retained."""

    Upsilon: np.ndarray
    tau: float

    def __post_init__(self):
        object.__setattr__(self, "Upsilon", _freeze(self.Upsilon))

    @property
    def J(self) -> int:
        return self.Upsilon.shape[0]

    @property
    def J0(self) -> int:
        return self.Upsilon.shape[1]


def build_whitener(noise: NoiseModel, tau: float = DEFAULT_TAU) -> Whitener:
    """Υ = Λ_r^{−1/2} U_rᵀ over eigenvalues λ ≥ τ·λ_max of Sigma_B."""
    if tau <= 0:
        raise ConfigError("tau must be positive")
    evals, evecs = scipy.linalg.eigh(noise.Sigma_B)
    # descending, so retained channels come out ordered by significance
    evals, evecs = evals[::-1], evecs[:, ::-1]
    if evals[0] <= 0:
        raise NumericsError("covariance has no positive eigenvalue")
    keep = evals >= tau * evals[0]
    if not np.any(keep):
        raise NumericsError("all covariance eigenvalues below threshold")
    evals, evecs = evals[keep], evecs[:, keep]
    return Whitener(evecs.T / np.sqrt(evals)[:, None], float(tau))


@dataclass(frozen=True)
class WhitenedProblem:
    """Whitened inverse problem: G (J, N), Z (J, L), G_W = G·Wᵀ (J, N_W).

    Carries the frame so wavelet-domain estimates can be synthesized
    back to vertex space.
    """

    G: np.ndarray
    Z: np.ndarray
    G_W: np.ndarray
    frame: WaveletFrame

    def __post_init__(self):
        object.__setattr__(self, "G", _freeze(self.G))
        object.__setattr__(self, "Z", _freeze(np.atleast_2d(self.Z)))
        object.__setattr__(self, "G_W", _freeze(self.G_W))

    @property
    def J(self) -> int:
        return self.G.shape[0]

    @property
    def N(self) -> int:
        return self.G.shape[1]

    @property
    def L(self) -> int:
        return self.Z.shape[1]

    def with_data(self, Z: np.ndarray) -> "WhitenedProblem":
        """Same operators, new data block (cheap per-scenario rebind)."""
        return replace(self, Z=Z)


def whiten(
    whitener: Whitener, Z0: np.ndarray, G0: Leadfield, frame: WaveletFrame
) -> WhitenedProblem:
    """Apply Υ to data and leadfield and precompute the wavelet leadfield."""
    g = whitener.Upsilon @ G0.G0
    z = whitener.Upsilon @ np.atleast_2d(Z0)
    return WhitenedProblem(g, z, g @ frame.W.T, frame)
