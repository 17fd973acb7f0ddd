"""Band-limited magnitude bounds for trigonometric polynomials.

A polynomial ``Q(f) = sum_n q_n exp(j 2 pi f n)`` satisfies ``|Q(f)| <= W`` on a
frequency interval exactly when there are Hermitian Gram matrices ``G1`` (L x L)
and ``G2`` ((L-1) x (L-1)), both PSD, with

    psi(w)^H G1 psi(w) + D(w) psi'(w)^H G2 psi'(w) = 1        for all w,
    [[G1, v], [v^H, 1]] >= 0,        v = conj(q) / W,

where ``D(w) = d1 exp(-jw) + d0 + conj(d1) exp(jw)`` is nonnegative precisely on
the band.  Matching coefficients of the identity gives the trace equalities
``delta_k = tr(Theta_k G1) + tr((d1 Theta_{k-1} + d0 Theta_k + conj(d1) Theta_{k+1}) G2)``.

This module builds the band coefficients, the trace functional, a symbolic
constraint bundle per band and the lowering of that bundle into a
:class:`~ofdm_wanm.conic_core.ProgramBuilder`.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .conic_core import ProgramBuilder, Status, embed_vector, solve

__all__ = [
    "BandCoefficients",
    "BandLmiBundle",
    "GramPair",
    "SingularBandError",
    "band_coefficients",
    "band_lmi_constraints",
    "band_sup_squared",
    "elementary_toeplitz",
    "lower_bundle",
    "split_band",
    "trace_functional",
]

SINGULAR_TOLERANCE = 1e-9
SPLIT_OFFSET = 1e-6


class SingularBandError(ValueError):
    """A band endpoint sits at f = 0.5, where tan(w/2) blows up."""


@dataclasses.dataclass(frozen=True)
class BandCoefficients:
    omega_low: float
    omega_high: float
    alpha: float
    beta: float
    d0: float
    d1: complex

    def weight_function(self, omega):
        """``D(w)``; nonnegative on ``[omega_low, omega_high]`` and zero at both ends."""
        omega = np.asarray(omega, dtype=float)
        return self.d0 + 2.0 * (self.d1.real * np.cos(omega) + self.d1.imag * np.sin(omega))


@dataclasses.dataclass
class GramPair:
    g1: np.ndarray
    g2: np.ndarray | None


def _omega(f: float) -> float:
    return 2.0 * math.pi * f if f <= 0.5 else 2.0 * math.pi * (f - 1.0)


def band_coefficients(f_low: float, f_high: float) -> BandCoefficients:
    """Coefficients of the band indicator polynomial ``D`` for ``[f_low, f_high]``.

    Frequencies above one half are mapped to negative angles, so a band that
    does not contain 0.5 becomes an ordinary interval of ``(-pi, pi)``.

    Raises
    ------
    SingularBandError
        If either endpoint lies within 1e-9 of 0.5.
    ValueError
        If the interval is not a proper sub-interval of [0, 1).
    """
    if not (0.0 <= f_low < f_high < 1.0):
        raise ValueError(f"need 0 <= f_low < f_high < 1, got ({f_low}, {f_high})")
    for f in (f_low, f_high):
        if abs(f - 0.5) < SINGULAR_TOLERANCE:
            raise SingularBandError(f"band endpoint {f} is at the f = 0.5 singularity")
    if f_low < 0.5 < f_high:
        raise SingularBandError(f"band ({f_low}, {f_high}) straddles f = 0.5; split it first")
    wl, wh = _omega(f_low), _omega(f_high)
    a, b = math.tan(wl / 2.0), math.tan(wh / 2.0)
    d0 = -(a * b + 1.0) / 2.0
    d1 = complex((1.0 - a * b) / 4.0, (a + b) / 4.0)
    return BandCoefficients(wl, wh, a, b, d0, d1)


def split_band(f_low: float, f_high: float) -> list[tuple[float, float]]:
    """Pieces of ``[f_low, f_high]`` that avoid the f = 0.5 singularity."""
    if f_low < 0.5 < f_high:
        return [(f_low, 0.5 - SPLIT_OFFSET), (0.5 + SPLIT_OFFSET, f_high)]
    if abs(f_high - 0.5) < SINGULAR_TOLERANCE:
        return [(f_low, 0.5 - SPLIT_OFFSET)]
    if abs(f_low - 0.5) < SINGULAR_TOLERANCE:
        return [(0.5 + SPLIT_OFFSET, f_high)]
    return [(f_low, f_high)]


def elementary_toeplitz(order: int, k: int) -> np.ndarray:
    """``Theta_k``: ones where column minus row equals ``k``.  Zero if ``|k| >= order``."""
    return np.eye(order, k=k)


def trace_functional(k: int, band: BandCoefficients | None, pair: GramPair) -> complex:
    """Value of the ``k``-th trace functional on a Gram pair.

    With ``band=None`` (the full circle) only the ``G1`` term is present.
    """
    g1 = np.asarray(pair.g1)
    n = g1.shape[0]
    if g1.shape != (n, n):
        raise ValueError(f"G1 must be square, got {g1.shape}")
    value = complex(np.trace(elementary_toeplitz(n, k) @ g1))
    if band is None or pair.g2 is None:
        return value
    g2 = np.asarray(pair.g2)
    if g2.shape != (n - 1, n - 1):
        raise ValueError(f"G2 must be {(n - 1, n - 1)}, got {g2.shape}")
    m = n - 1
    mix = (
        band.d1 * elementary_toeplitz(m, k - 1)
        + band.d0 * elementary_toeplitz(m, k)
        + np.conj(band.d1) * elementary_toeplitz(m, k + 1)
    )
    return value + complex(np.trace(mix @ g2))


# --------------------------------------------------------------------------
# symbolic bundle


@dataclasses.dataclass(frozen=True)
class TraceEquality:
    k: int
    rhs: float


@dataclasses.dataclass(frozen=True)
class PsdConstraint:
    name: str
    order: int


@dataclasses.dataclass(frozen=True)
class BandLmiBundle:
    """Constraints certifying ``|Q| <= weight`` on one band.

    ``coefficients`` is None for the full circle, in which case there is no
    ``G2`` and the identity reduces to ``delta_k = tr(Theta_k G1)``.
    """

    f_low: float
    f_high: float
    weight: float
    grid_size: int
    coefficients: BandCoefficients | None
    trace_equalities: tuple[TraceEquality, ...]
    psd_constraints: tuple[PsdConstraint, ...]

    @property
    def full_circle(self) -> bool:
        return self.coefficients is None


def band_lmi_constraints(band: tuple[float, float, float], grid_size: int) -> BandLmiBundle:
    """Symbolic constraint bundle for one ``(f_low, f_high, weight)`` band.

    The request ``(0, 1)`` means the whole circle and yields the classical
    bounded-real condition with no second Gram matrix.
    """
    f_low, f_high, weight = (float(v) for v in band)
    L = int(grid_size)
    if L < 2:
        raise ValueError("grid size must be at least 2")
    if weight <= 0:
        raise ValueError("band weight must be positive")
    trace = tuple(TraceEquality(k, 1.0 if k == 0 else 0.0) for k in range(L))
    if f_low <= 0.0 and f_high >= 1.0:
        return BandLmiBundle(0.0, 1.0, weight, L, None, trace, (PsdConstraint("schur", L + 1),))
    coeffs = band_coefficients(f_low, f_high)
    psd = (PsdConstraint("g2", L - 1), PsdConstraint("schur", L + 1))
    return BandLmiBundle(f_low, f_high, weight, L, coeffs, trace, psd)


# --------------------------------------------------------------------------
# lowering


def _sample_points(L: int) -> np.ndarray:
    count = 2 * L - 1
    return 2.0 * np.pi * np.arange(count) / count


def lower_bundle(
    builder: ProgramBuilder,
    bundle: BandLmiBundle,
    label: str,
    q_columns: slice | None = None,
    q_values=None,
    corner_column: int | None = None,
) -> dict:
    """Add one bundle's variables and rows to ``builder``.

    The Schur block ``[[G1, v], [v^H, c]]`` is a single Hermitian PSD variable
    of order ``L + 1`` embedded as a real block of order ``2(L + 1)``.  The
    linear identity is imposed at ``2L - 1`` equispaced angles: a real
    trigonometric polynomial of degree ``L - 1`` that vanishes there vanishes
    identically, so this is the same constraint set as the ``L`` complex trace
    equalities, with much cheaper rank-one rows.

    The link ``v = conj(q) / weight`` uses either free columns
    ``q_columns`` (``[Re q, Im q]``, length ``2L``) or fixed ``q_values``.
    The corner ``c`` is 1 unless ``corner_column`` names a free variable.

    Returns
    -------
    dict
        ``schur`` and (for proper bands) ``g2`` PSD block indices plus the
        index arrays of the rows added, keyed by role.
    """
    L = bundle.grid_size
    W = bundle.weight
    n = L + 1
    omegas = _sample_points(L)
    rows: dict[str, np.ndarray] = {}

    schur = builder.add_psd(2 * n, name=f"{label}:schur")
    out: dict = {"schur": schur}

    # identity rows: psi^H G1 psi + D psi'^H G2 psi' = 1
    ident = builder.add_rows(np.ones(omegas.size), f"{label}:identity")
    rows["identity"] = ident
    psi = np.zeros((n, omegas.size), dtype=complex)
    psi[:L] = np.exp(1j * np.outer(np.arange(L), omegas))
    a, b = embed_vector(psi)
    builder.psd_rank_one(schur, ident, 0.5, a)
    builder.psd_rank_one(schur, ident, 0.5, b)
    if not bundle.full_circle:
        g2 = builder.add_psd(2 * (L - 1), name=f"{label}:g2")
        out["g2"] = g2
        coeffs = bundle.coefficients
        # D only matters up to a positive factor, which G2 absorbs; normalizing
        # keeps bands near f = 0.5 (where tan grows without bound) well scaled
        dvals = coeffs.weight_function(omegas) / (abs(coeffs.d0) + 2.0 * abs(coeffs.d1))
        psi2 = np.exp(1j * np.outer(np.arange(L - 1), omegas))
        a2, b2 = embed_vector(psi2)
        builder.psd_rank_one(g2, ident, 0.5 * dvals, a2)
        builder.psd_rank_one(g2, ident, 0.5 * dvals, b2)

    # corner
    corner = builder.add_rows([0.0 if corner_column is not None else 1.0], f"{label}:corner")
    rows["corner"] = corner
    builder.psd_entries(schur, corner[0], [L, 2 * L + 1], [L, 2 * L + 1], 0.5)
    if corner_column is not None:
        builder.free_terms(corner[0], corner_column, -1.0)

    # link: W * C[m, L] = conj(q_m)
    idx = np.arange(L)
    if q_columns is not None:
        link = builder.add_rows(np.zeros(2 * L), f"{label}:link")
        re_cols = np.arange(q_columns.start, q_columns.start + L)
        im_cols = re_cols + L
        builder.free_terms(link[:L], re_cols, -1.0)
        builder.free_terms(link[L:], im_cols, 1.0)
    else:
        q = np.asarray(q_values, dtype=complex)
        link = builder.add_rows(np.concatenate([q.real, -q.imag]), f"{label}:link")
    rows["link"] = link
    # Re C[m, L] = (X[m, L] + X[m+n, L+n]) / 2
    builder.psd_entries(schur, link[:L], idx, L, 0.5 * W)
    builder.psd_entries(schur, link[:L], idx + n, L + n, 0.5 * W)
    # Im C[m, L] = (X[m+n, L] - X[m, L+n]) / 2
    builder.psd_entries(schur, link[L:], idx + n, L, 0.5 * W)
    builder.psd_entries(schur, link[L:], idx, L + n, -0.5 * W)
    out["rows"] = rows
    return out


def band_sup_squared(q, bundle: BandLmiBundle, tolerance: float = 1e-8) -> float:
    """``sup |Q|^2 / weight^2`` over the band, computed by the Gram-pair SDP.

    Minimizes the Schur corner ``c`` with ``q`` fixed; by the bounded-real
    representation the optimum is exactly the squared band supremum of
    ``|Q| / weight``.
    """
    q = np.asarray(q, dtype=complex)
    # normalize by a sampled estimate so the corner optimum is of order one
    f = np.linspace(bundle.f_low, bundle.f_high, 4096)
    grid_max = float(np.max(np.abs(np.exp(2j * np.pi * np.outer(f, np.arange(q.size))) @ q)))
    if grid_max == 0.0:
        return 0.0
    b = ProgramBuilder()
    t = b.add_free(1, "corner", objective=[1.0])
    lower_bundle(b, bundle, "band", q_values=q / grid_max, corner_column=t.start)
    sol = solve(b.build(), tolerance=tolerance)
    if sol.status is not Status.OPTIMAL:
        raise RuntimeError(f"margin program ended with status {sol.status.value}")
    return float(sol.free[0]) * grid_max**2
