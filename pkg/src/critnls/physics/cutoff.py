"""
Localized virial weight χ_R(r) = R² χ(r/R).

    χ(s) = s²                                      0 <= s <= 1
    χ(s) = s² - (1/m0) ∫_1^{s²} ∫_1^t ζ(v) dv dt     1 < s <= 3
    χ(s) = 9 - m1                                   s >= 3

with the bump ζ(v) = exp(-1/((v-1)(3-v))) on (1, 3). Writing F(t) = ∫_1^t ζ and
H(t) = ∫_1^t vζ(v), the double integral is t F(t) - H(t). Since ζ vanishes
for v >= 3 the middle branch already equals 9 - m1 once s² >= 3, i.e. for
r >= √3 R.

Derivatives are closed form in s (chain rule on t = s²); only F and H are
tabulated, by adaptive quadrature between knots and cubic Hermite
interpolation with the exact derivatives ζ and vζ.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline

from ..discretization.radial_grid import RadialGrid
from ..exceptions import InvalidRadiusError

logger = logging.getLogger(__name__)

QUAD_TOL = 1e-12
TABLE_KNOTS = 4001


def zeta(s):
    """Bump exp(-1/((s-1)(3-s))) on (1, 3), zero elsewhere."""
    s_arr = np.asarray(s, dtype=float)
    out = np.zeros_like(s_arr)
    inside = (s_arr > 1.0) & (s_arr < 3.0)
    q = (s_arr[inside] - 1.0) * (3.0 - s_arr[inside])
    out[inside] = np.exp(-1.0 / q)
    return out if out.ndim else float(out)


def _zeta_derivatives(t: NDArray) -> Tuple[NDArray, NDArray, NDArray]:
    """ζ, ζ', ζ'' at t (zero outside the support)."""
    z = np.zeros_like(t)
    dz = np.zeros_like(t)
    d2z = np.zeros_like(t)
    inside = (t > 1.0) & (t < 3.0)
    ti = t[inside]
    q = (ti - 1.0) * (3.0 - ti)
    dq = 4.0 - 2.0 * ti
    zi = np.exp(-1.0 / q)
    z[inside] = zi
    dz[inside] = zi * dq / q**2
    d2z[inside] = zi * (dq**2 / q**4 - 2.0 / q**2 - 2.0 * dq**2 / q**3)
    return z, dz, d2z


@lru_cache(maxsize=1)
def _primitives() -> Tuple[CubicHermiteSpline, CubicHermiteSpline, float, float]:
    knots = np.linspace(1.0, 3.0, TABLE_KNOTS)
    F = np.zeros_like(knots)
    Hs = np.zeros_like(knots)
    for k in range(1, knots.size):
        a, b = knots[k - 1], knots[k]
        F[k] = F[k - 1] + quad(zeta, a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL)[0]
        Hs[k] = Hs[k - 1] + quad(lambda v: v * zeta(v), a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL)[0]
    z = zeta(knots)
    F_spline = CubicHermiteSpline(knots, F, z)
    H_spline = CubicHermiteSpline(knots, Hs, knots * z)
    logger.debug(f"Tabulated cutoff primitives on {TABLE_KNOTS} knots: F(3)={F[-1]:.15g}, H(3)={Hs[-1]:.15g}")
    return F_spline, H_spline, float(F[-1]), float(Hs[-1])


@lru_cache(maxsize=1)
def normalizers() -> Tuple[float, float]:
    """(m0, m1) by adaptive quadrature over the support of ζ."""
    m0 = quad(zeta, 1.0, 3.0, epsabs=QUAD_TOL, epsrel=QUAD_TOL)[0]
    m1 = quad(lambda v: (9.0 - v) * zeta(v), 1.0, 3.0, epsabs=QUAD_TOL, epsrel=QUAD_TOL)[0] / m0
    return m0, m1


def chi_derivatives(s: NDArray) -> Dict[str, NDArray]:
    """χ and its first four derivatives at scaled radii s >= 0, plus χ'/s."""
    s = np.asarray(s, dtype=float)
    m0, m1 = normalizers()
    F_spline, H_spline, _, _ = _primitives()

    chi = np.full_like(s, 9.0 - m1)
    d1 = np.zeros_like(s)
    d2 = np.zeros_like(s)
    d3 = np.zeros_like(s)
    d4 = np.zeros_like(s)
    d1_over_s = np.zeros_like(s)

    inner = s <= 1.0
    chi[inner] = s[inner] ** 2
    d1[inner] = 2.0 * s[inner]
    d2[inner] = 2.0
    d1_over_s[inner] = 2.0

    t = s * s
    middle = (~inner) & (t < 3.0)
    sm = s[middle]
    tm = t[middle]
    F = np.clip(F_spline(tm), 0.0, m0)
    Hm = H_spline(tm)
    z, dz, d2z = _zeta_derivatives(tm)
    ratio = 1.0 - F / m0
    chi[middle] = tm - (tm * F - Hm) / m0
    d1_over_s[middle] = 2.0 * ratio
    d1[middle] = 2.0 * sm * ratio
    d2[middle] = 2.0 * ratio - 4.0 * tm * z / m0
    d3[middle] = -(12.0 * sm * z + 8.0 * sm**3 * dz) / m0
    d4[middle] = -(12.0 * z + 48.0 * tm * dz + 16.0 * tm**2 * d2z) / m0

    return {"chi": chi, "d1": d1, "d2": d2, "d3": d3, "d4": d4, "d1_over_s": d1_over_s}


def radial_laplacian(d1: NDArray, d2: NDArray, r: NDArray) -> NDArray:
    """Δf = f'' + (3/r) f' for radial f on R^4."""
    return d2 + 3.0 * d1 / r


def radial_bilaplacian(d1: NDArray, d2: NDArray, d3: NDArray, d4: NDArray, r: NDArray) -> NDArray:
    """Δ²f = f'''' + (6/r) f''' + (3/r²) f'' - (3/r³) f' for radial f on R^4."""
    return d4 + 6.0 * d3 / r + 3.0 * d2 / r**2 - 3.0 * d1 / r**3


@dataclass(frozen=True, eq=False)
class CutoffProfile:
    """χ_R and its radial derivatives tabulated at the nodes of a grid."""

    R: float
    m0: float
    m1: float
    r: NDArray
    chi: NDArray
    d1: NDArray
    d2: NDArray
    d3: NDArray
    d4: NDArray
    d1_over_r: NDArray

    @property
    def plateau(self) -> float:
        return self.R**2 * (9.0 - self.m1)


def _scaled_table(R: float, r: NDArray) -> Dict[str, NDArray]:
    if not R > 0:
        raise InvalidRadiusError(f"Cutoff radius must be positive, got {R}")
    d = chi_derivatives(r / R)
    return {
        "chi": R**2 * d["chi"],
        "d1": R * d["d1"],
        "d2": d["d2"],
        "d3": d["d3"] / R,
        "d4": d["d4"] / R**2,
        "d1_over_r": d["d1_over_s"],
        "s": r / R,
        "raw": d,
    }


def build_profile(R: float, grid: RadialGrid) -> CutoffProfile:
    table = _scaled_table(R, grid.r)
    m0, m1 = normalizers()
    return CutoffProfile(
        R=float(R),
        m0=m0,
        m1=m1,
        r=grid.r,
        chi=table["chi"],
        d1=table["d1"],
        d2=table["d2"],
        d3=table["d3"],
        d4=table["d4"],
        d1_over_r=table["d1_over_r"],
    )


def _laplacians_from(s: NDArray, raw: Dict[str, NDArray], R: float) -> Tuple[NDArray, NDArray]:
    # χ'/s is carried exactly so both operators vanish identically on the inner branch
    lap = raw["d2"] + 3.0 * raw["d1_over_s"]
    bilap = (raw["d4"] + 6.0 * raw["d3"] / s + 3.0 * (raw["d2"] - raw["d1_over_s"]) / s**2) / R**2
    return lap, bilap


def radial_laplacians(profile: CutoffProfile) -> Tuple[NDArray, NDArray]:
    """(Δχ_R, Δ²χ_R) at the profile's nodes."""
    s = profile.r / profile.R
    raw = {
        "d2": profile.d2,
        "d1_over_s": profile.d1_over_r,
        "d3": profile.d3 * profile.R,
        "d4": profile.d4 * profile.R**2,
    }
    return _laplacians_from(s, raw, profile.R)


@dataclass(frozen=True)
class CutoffCheck:
    R: float
    laplacian_exact_inside: bool
    chi2_bounded: bool
    chi1_bounded: bool
    constant_outside: bool
    max_laplacian: float
    sup_bilaplacian: float

    @property
    def passed(self) -> bool:
        return self.laplacian_exact_inside and self.chi2_bounded and self.chi1_bounded and self.constant_outside


def check_profile(R: float, samples: int = 10_000) -> CutoffCheck:
    """Samples every branch of χ_R densely and checks the structural bounds."""
    if not R > 0:
        raise InvalidRadiusError(f"Cutoff radius must be positive, got {R}")
    s = np.concatenate(
        (
            np.linspace(1.0 / samples, 1.0, samples),
            np.linspace(1.0, np.sqrt(3.0), samples + 1)[1:],
            np.linspace(np.sqrt(3.0), 3.0, samples + 1)[1:],
        )
    )
    r = R * s
    table = _scaled_table(R, r)
    lap, bilap = _laplacians_from(s, table["raw"], R)
    inner = s <= 1.0
    outer = s > np.sqrt(3.0)
    return CutoffCheck(
        R=float(R),
        laplacian_exact_inside=bool(np.all(lap[inner] == 8.0) and np.all(bilap[inner] == 0.0)),
        chi2_bounded=bool(np.all(table["d2"] <= 2.0)),
        chi1_bounded=bool(np.all(table["d1"] >= 0.0) and np.all(table["d1"] <= 2.0 * r)),
        constant_outside=bool(np.all(table["d1"][outer] == 0.0) and np.all(lap[outer] == 0.0)),
        max_laplacian=float(np.max(lap)),
        sup_bilaplacian=float(np.max(np.abs(bilap))),
    )


def decay_table(radii: Sequence[float], samples: int = 10_000) -> List[Dict[str, float]]:
    """sup|Δ²χ_R| per radius, the measured constant R²·sup and the ratio to the previous radius."""
    rows: List[Dict[str, float]] = []
    previous = None
    for R in radii:
        check = check_profile(R, samples)
        row = {
            "R": check.R,
            "sup_bilaplacian": check.sup_bilaplacian,
            "C": check.sup_bilaplacian * check.R**2,
            "ratio": check.sup_bilaplacian / previous if previous else float("nan"),
        }
        rows.append(row)
        previous = check.sup_bilaplacian
    return rows
