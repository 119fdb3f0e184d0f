"""
Radial mesh for radially symmetric functions on R^4.

Fields are plain numpy arrays sampled at the interior nodes r_i = i*h,
i = 1..n, h = r_max/(n+1). Node i owns the spherical shell between the
faces r_{i-1/2} and r_{i+1/2} (the first shell starts at the origin), so
the quadrature weight of a node is the 4-D volume of its shell,

    w_i = 2*pi^2 * (r_{i+1/2}^4 - r_{i-1/2}^4) / 4  =  2*pi^2 * (r_i^3 h + r_i h^3 / 4),

i.e. the midpoint weight 2*pi^2 r_i^3 h plus an O(h^2) correction.

The Laplacian is the finite-volume divergence of face fluxes r_f^3 * df/dr.
No flux crosses the origin (even reflection). Beyond r_max the field is
either zero ("dirichlet") or continued by its harmonic tail
f_n * (r_n / r)^2 ("harmonic"). In both cases laplacian() and grad_sq()
are an exact summation-by-parts pair:

    grad_sq(f) == -Re integrate(conj(f) * laplacian(f))

to rounding, and the Laplacian is self-adjoint for the quadrature weights.
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np
from numpy.typing import NDArray
from scipy import sparse

from ..exceptions import GridTooSmallError, InvalidDilationError

SURFACE_S3 = 2.0 * np.pi**2  # area of the unit sphere in R^4
OUTER_CLOSURES = ("harmonic", "dirichlet")


@dataclass(frozen=True)
class RadialGrid:
    """Uniform radial mesh on [0, r_max] with 4-D shell quadrature."""

    r_max: float
    n: int
    outer: str = "harmonic"

    def __post_init__(self):
        if self.n < 3:
            raise GridTooSmallError(f"Radial grid needs at least 3 nodes, got n={self.n}")
        if not self.r_max > 0:
            raise ValueError(f"r_max must be positive, got {self.r_max}")
        if self.outer not in OUTER_CLOSURES:
            raise ValueError(f"outer closure must be one of {OUTER_CLOSURES}, got {self.outer!r}")

    @classmethod
    def from_config(cls, config) -> "RadialGrid":
        return cls(r_max=config.r_max, n=config.n, outer=config.outer)

    # --- geometry -------------------------------------------------------

    @cached_property
    def h(self) -> float:
        return self.r_max / (self.n + 1)

    @cached_property
    def r(self) -> NDArray[np.float64]:
        return self.h * np.arange(1, self.n + 1, dtype=float)

    @cached_property
    def faces(self) -> NDArray[np.float64]:
        # faces[k] = r_{k+1/2} in 1-based node numbering; faces[-1] is the outer face
        return self.h * (np.arange(1, self.n + 1, dtype=float) + 0.5)

    @cached_property
    def weights(self) -> NDArray[np.float64]:
        edges = np.concatenate(([0.0], self.faces))
        return SURFACE_S3 * np.diff(edges**4) / 4.0

    @cached_property
    def _flux(self) -> NDArray[np.float64]:
        return self.faces**3 / self.h

    @cached_property
    def _outer_coefficient(self) -> float:
        # energy charged to |f_n|^2 by the closure (before the 2*pi^2 factor)
        if self.outer == "dirichlet":
            return float(self._flux[-1])
        return 2.0 * float(self.r[-1]) ** 2

    # --- quadrature -----------------------------------------------------

    def integrate(self, f: NDArray) -> float:
        """Sum of w_i f_i, i.e. 2*pi^2 * int f(r) r^3 dr."""
        return float(np.sum(self.weights * np.asarray(f, dtype=float)))

    def l2_norm(self, f: NDArray) -> float:
        return float(np.sqrt(self.integrate(np.abs(f) ** 2)))

    # --- differential operators -----------------------------------------

    @cached_property
    def laplacian_bands(self) -> Tuple[NDArray, NDArray, NDArray]:
        """(lower, diag, upper) of the tridiagonal Laplacian; lower[0] and upper[-1] are unused."""
        volume = self.weights / SURFACE_S3
        flux = self._flux
        lower = np.zeros(self.n)
        upper = np.zeros(self.n)
        diag = np.zeros(self.n)
        upper[:-1] = flux[:-1] / volume[:-1]
        lower[1:] = flux[:-1] / volume[1:]
        diag[:-1] = -flux[:-1]
        diag[1:] -= flux[:-1]
        diag[-1] -= self._outer_coefficient
        diag /= volume
        return lower, diag, upper

    def laplacian(self, f: NDArray) -> NDArray:
        """f'' + (3/r) f' in flux form; origin by even reflection, outer node by the closure."""
        lower, diag, upper = self.laplacian_bands
        f = np.asarray(f)
        out = diag * f
        out[:-1] += upper[:-1] * f[1:]
        out[1:] += lower[1:] * f[:-1]
        return out

    def laplacian_matrix(self) -> sparse.csc_matrix:
        lower, diag, upper = self.laplacian_bands
        return sparse.diags([lower[1:], diag, upper[:-1]], offsets=[-1, 0, 1], format="csc")

    def grad_sq(self, f: NDArray) -> float:
        """2*pi^2 * int |f'(r)|^2 r^3 dr, including the exterior tail charged by the closure."""
        f = np.asarray(f)
        jumps = np.abs(np.diff(f)) ** 2
        interior = float(np.sum(self._flux[:-1] * jumps))
        return SURFACE_S3 * (interior + self._outer_coefficient * float(np.abs(f[-1]) ** 2))

    def outer_ghost(self, f: NDArray):
        """Value the closure assigns to the node just beyond r_max."""
        if self.outer == "dirichlet":
            return 0.0 * f[-1]
        return f[-1] * (self.r[-1] / (self.r[-1] + self.h)) ** 2

    def origin_value(self, f: NDArray):
        """Even extrapolation f(0) from the first two nodes (exact for a + b r^2)."""
        return (4.0 * f[0] - f[1]) / 3.0

    def radial_derivative(self, f: NDArray) -> NDArray:
        """Centered df/dr at every node; even reflection at the origin, closure ghost at r_max."""
        f = np.asarray(f)
        padded = np.concatenate(([self.origin_value(f)], f, [self.outer_ghost(f)]))
        out = (padded[2:] - padded[:-2]) / (2.0 * self.h)
        # the origin neighbour sits at distance h, not 2h
        out[0] = 2.0 * (f[1] - f[0]) / (3.0 * self.h)
        return out

    # --- symmetry -------------------------------------------------------

    def dilate(self, f: NDArray, R: float) -> NDArray:
        """Energy-critical dilation g(r) = f(r/R)/R, linearly interpolated on this grid."""
        if not R > 0:
            raise InvalidDilationError(f"Dilation factor must be positive, got {R}")
        f = np.asarray(f)
        if R == 1.0:
            return f.copy()
        rho = self.r / R
        if np.iscomplexobj(f):
            return (self._sample(f.real, rho) + 1j * self._sample(f.imag, rho)) / R
        return self._sample(f, rho) / R

    def _sample(self, f: NDArray, rho: NDArray) -> NDArray:
        xp = np.concatenate(([0.0], self.r))
        fp = np.concatenate(([self.origin_value(f)], f))
        values = np.interp(rho, xp, fp)
        beyond = rho > self.r[-1]
        if np.any(beyond):
            if self.outer == "dirichlet":
                values[beyond] = 0.0
            else:
                values[beyond] = f[-1] * (self.r[-1] / rho[beyond]) ** 2
        return values
