"""Small dense conic programs together with their interior-point solver.

Programs are held in standard form::

    minimize    c'x
    subject to  A x = b
                x = (x_free, x_soc..., X_psd...),  x_soc in Q,  X_psd >= 0

and the solver works on the homogeneous self-dual embedding of this pair,
using Nesterov-Todd scaling and a Mehrotra predictor-corrector.  Everything
inside the solver is real; complex Hermitian blocks enter only through
:func:`hermitian_embed` (and the matching :func:`embed_vector` factors).

PSD coefficients are stored as signed sums of rank-one terms
``sum_r w_r u_r u_r'`` per equality row.  Every symmetric matrix can be written
that way, but the programs built by this package are naturally low rank
(sampled trigonometric identities, single entries), which keeps the Schur
complement cheap: ``tr(A_i V A_j V) = sum w_r w_s (u_r' V u_s)^2``.
"""

from __future__ import annotations

import dataclasses
import enum
import math
import time

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

__all__ = [
    "ConicProgram",
    "ConicSolution",
    "ProgramBuilder",
    "PsdBlock",
    "SocGroup",
    "Status",
    "complexify",
    "embed_vector",
    "hermitian_embed",
    "solve",
]

DEFAULT_TOLERANCE = 1e-7
DEFAULT_MAX_ITERATIONS = 200
TARGET_EXTRA_ITERATIONS = 10
BACKTRACK_STEPS = 30
REGULARIZATION = (1e-14, 1e-10)


class NotHermitianError(ValueError):
    """Raised when a matrix handed to :func:`hermitian_embed` is not Hermitian."""


class ProgramError(ValueError):
    """Raised for dimensionally inconsistent programs."""


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITERATIONS = "max_iterations"
    NUMERICAL_FAILURE = "numerical_failure"


def hermitian_embed(h, tol: float = 1e-12) -> np.ndarray:
    """Real symmetric embedding ``[[Re h, -Im h], [Im h, Re h]]`` of a Hermitian matrix.

    Each eigenvalue of ``h`` shows up twice in the embedding, so the result is
    PSD exactly when ``h`` is.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise NotHermitianError(f"expected a square matrix, got shape {h.shape}")
    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0
    if h.size and np.max(np.abs(h - h.conj().T)) > tol * scale:
        raise NotHermitianError("matrix is not Hermitian within tolerance")
    re, im = h.real, h.imag
    return np.block([[re, -im], [im, re]])


def embed_vector(u) -> tuple[np.ndarray, np.ndarray]:
    """Real factors with ``hermitian_embed(u u^H) = a a' + b b'``."""
    u = np.asarray(u, dtype=complex)
    a = np.concatenate([u.real, u.imag], axis=0)
    b = np.concatenate([-u.imag, u.real], axis=0)
    return a, b


def complexify(x: np.ndarray) -> np.ndarray:
    """Hermitian matrix whose embedding is the structured part of ``x``."""
    n = x.shape[0] // 2
    x11, x12 = x[:n, :n], x[:n, n:]
    x21, x22 = x[n:, :n], x[n:, n:]
    return 0.5 * (x11 + x22) + 0.5j * (x21 - x12)


# --------------------------------------------------------------------------
# program container


@dataclasses.dataclass
class PsdBlock:
    """Symmetric PSD variable of order ``order`` with rank-one row coefficients."""

    order: int
    objective: np.ndarray
    rows: np.ndarray
    weights: np.ndarray
    factors: np.ndarray
    name: str = ""


@dataclasses.dataclass
class SocGroup:
    """``count`` second-order cones of equal dimension, ``x[0] >= ||x[1:]||``."""

    dim: int
    count: int
    objective: np.ndarray
    matrix: sp.csr_matrix
    name: str = ""


@dataclasses.dataclass
class ConicProgram:
    """Standard-form conic program; see the module docstring."""

    rhs: np.ndarray
    free_objective: np.ndarray
    free_matrix: np.ndarray
    psd_blocks: list[PsdBlock]
    soc_groups: list[SocGroup]
    row_groups: dict[str, slice] = dataclasses.field(default_factory=dict)
    free_groups: dict[str, slice] = dataclasses.field(default_factory=dict)

    @property
    def n_constraints(self) -> int:
        return int(self.rhs.shape[0])

    @property
    def n_free(self) -> int:
        return int(self.free_objective.shape[0])

    @property
    def variable_count(self) -> int:
        n = self.n_free
        n += sum(g.dim * g.count for g in self.soc_groups)
        n += sum(b.order * (b.order + 1) // 2 for b in self.psd_blocks)
        return n

    def validate(self) -> None:
        m = self.n_constraints
        if self.variable_count < 1:
            raise ProgramError("program has no variables")
        if self.free_matrix.shape != (m, self.n_free):
            raise ProgramError(
                f"free matrix has shape {self.free_matrix.shape}, expected {(m, self.n_free)}"
            )
        for blk in self.psd_blocks:
            n = blk.order
            if blk.objective.shape != (n, n):
                raise ProgramError(f"PSD block {blk.name!r}: objective shape mismatch")
            if blk.factors.shape != (n, blk.rows.shape[0]) or blk.weights.shape != blk.rows.shape:
                raise ProgramError(f"PSD block {blk.name!r}: factor arrays disagree")
            if blk.rows.size and (blk.rows.min() < 0 or blk.rows.max() >= m):
                raise ProgramError(f"PSD block {blk.name!r}: row index out of range")
        for grp in self.soc_groups:
            if grp.matrix.shape != (m, grp.dim * grp.count):
                raise ProgramError(f"SOC group {grp.name!r}: matrix shape mismatch")
            if grp.objective.shape != (grp.count, grp.dim) or grp.dim < 1:
                raise ProgramError(f"SOC group {grp.name!r}: objective shape mismatch")

    def scaled_objective(self, factor: float) -> "ConicProgram":
        """Copy of the program with the objective multiplied by ``factor``."""
        return dataclasses.replace(
            self,
            free_objective=factor * self.free_objective,
            psd_blocks=[dataclasses.replace(b, objective=factor * b.objective) for b in self.psd_blocks],
            soc_groups=[dataclasses.replace(g, objective=factor * g.objective) for g in self.soc_groups],
        )


class ProgramBuilder:
    """Incremental construction of a :class:`ConicProgram`.

    Rows are allocated in named groups; coefficients are accumulated in COO
    form (free and SOC variables) or as rank-one terms (PSD blocks).
    """

    def __init__(self) -> None:
        self._rhs: list[np.ndarray] = []
        self._n_rows = 0
        self._n_free = 0
        self._free_obj: list[np.ndarray] = []
        self._free_coo: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        self._psd: list[dict] = []
        self._soc: list[dict] = []
        self.row_groups: dict[str, slice] = {}
        self.free_groups: dict[str, slice] = {}

    # variables ------------------------------------------------------------
    def add_free(self, n: int, name: str, objective=None) -> slice:
        sl = slice(self._n_free, self._n_free + n)
        self._n_free += n
        self._free_obj.append(np.zeros(n) if objective is None else np.asarray(objective, float))
        self.free_groups[name] = sl
        return sl

    def add_psd(self, order: int, name: str = "", objective=None) -> int:
        obj = np.zeros((order, order)) if objective is None else np.asarray(objective, float)
        self._psd.append(dict(order=order, name=name, objective=obj, rows=[], weights=[], factors=[]))
        return len(self._psd) - 1

    def add_soc(self, dim: int, count: int = 1, name: str = "", objective=None) -> int:
        obj = np.zeros((count, dim)) if objective is None else np.asarray(objective, float).reshape(count, dim)
        self._soc.append(dict(dim=dim, count=count, name=name, objective=obj, coo=[]))
        return len(self._soc) - 1

    def set_psd_objective(self, block: int, objective) -> None:
        self._psd[block]["objective"] = np.asarray(objective, float)

    # rows -----------------------------------------------------------------
    def add_rows(self, rhs, group: str) -> np.ndarray:
        rhs = np.atleast_1d(np.asarray(rhs, float))
        idx = np.arange(self._n_rows, self._n_rows + rhs.size)
        self._rhs.append(rhs)
        self._n_rows += rhs.size
        self.row_groups[group] = slice(int(idx[0]) if idx.size else self._n_rows, self._n_rows)
        return idx

    # coefficients ---------------------------------------------------------
    def free_terms(self, rows, cols, values) -> None:
        rows, cols, values = np.broadcast_arrays(
            np.asarray(rows, int), np.asarray(cols, int), np.asarray(values, float)
        )
        self._free_coo.append((rows.ravel(), cols.ravel(), values.ravel()))

    def soc_terms(self, group: int, rows, cone, component, values) -> None:
        g = self._soc[group]
        rows, cone, component, values = np.broadcast_arrays(
            np.asarray(rows, int), np.asarray(cone, int), np.asarray(component, int), np.asarray(values, float)
        )
        cols = cone.ravel() * g["dim"] + component.ravel()
        g["coo"].append((rows.ravel(), cols, values.ravel()))

    def psd_rank_one(self, block: int, rows, weights, vectors) -> None:
        """Add ``w * u'Xu`` to each listed row; ``vectors`` has one column per term."""
        vectors = np.asarray(vectors, float)
        if vectors.ndim == 1:
            vectors = vectors[:, None]
        rows, weights = np.broadcast_arrays(np.asarray(rows, int), np.asarray(weights, float))
        b = self._psd[block]
        b["rows"].append(rows.ravel())
        b["weights"].append(weights.ravel())
        b["factors"].append(vectors)

    def psd_entries(self, block: int, rows, i, j, values) -> None:
        """Add ``v * X[i, j]`` to each listed row (symmetric entry access)."""
        rows, i, j, values = np.broadcast_arrays(
            np.asarray(rows, int), np.asarray(i, int), np.asarray(j, int), np.asarray(values, float)
        )
        rows, i, j, values = rows.ravel(), i.ravel(), j.ravel(), values.ravel()
        n = self._psd[block]["order"]
        diag = i == j
        if diag.any():
            u = np.zeros((n, int(diag.sum())))
            u[i[diag], np.arange(u.shape[1])] = 1.0
            self.psd_rank_one(block, rows[diag], values[diag], u)
        off = ~diag
        if off.any():
            k = int(off.sum())
            cols = np.arange(k)
            plus = np.zeros((n, k))
            minus = np.zeros((n, k))
            plus[i[off], cols] = 1.0
            plus[j[off], cols] = 1.0
            minus[i[off], cols] = 1.0
            minus[j[off], cols] = -1.0
            # X[i,j] = ((e_i+e_j)'X(e_i+e_j) - (e_i-e_j)'X(e_i-e_j)) / 4
            self.psd_rank_one(block, rows[off], 0.25 * values[off], plus)
            self.psd_rank_one(block, rows[off], -0.25 * values[off], minus)

    # output ---------------------------------------------------------------
    def build(self) -> ConicProgram:
        m = self._n_rows
        rhs = np.concatenate(self._rhs) if self._rhs else np.zeros(0)
        f = self._n_free
        free_matrix = np.zeros((m, f))
        for r, c, v in self._free_coo:
            np.add.at(free_matrix, (r, c), v)
        free_obj = np.concatenate(self._free_obj) if self._free_obj else np.zeros(0)
        psd = []
        for b in self._psd:
            n = b["order"]
            if b["rows"]:
                rows = np.concatenate(b["rows"])
                weights = np.concatenate(b["weights"])
                factors = np.concatenate(b["factors"], axis=1)
            else:
                rows, weights, factors = np.zeros(0, int), np.zeros(0), np.zeros((n, 0))
            obj = 0.5 * (b["objective"] + b["objective"].T)
            psd.append(PsdBlock(n, obj, rows, weights, factors, b["name"]))
        soc = []
        for g in self._soc:
            ncol = g["dim"] * g["count"]
            if g["coo"]:
                r = np.concatenate([t[0] for t in g["coo"]])
                c = np.concatenate([t[1] for t in g["coo"]])
                v = np.concatenate([t[2] for t in g["coo"]])
            else:
                r = c = np.zeros(0, int)
                v = np.zeros(0)
            mat = sp.csr_matrix((v, (r, c)), shape=(m, ncol))
            soc.append(SocGroup(g["dim"], g["count"], g["objective"], mat, g["name"]))
        prog = ConicProgram(rhs, free_obj, free_matrix, psd, soc, dict(self.row_groups), dict(self.free_groups))
        prog.validate()
        return prog


# --------------------------------------------------------------------------
# cones


class _PsdCone:
    def __init__(self, blk: PsdBlock, m: int):
        self.n = blk.order
        self.C = blk.objective
        self.U = blk.factors
        self.w = blk.weights
        self.rows = blk.rows
        self.S = sp.csr_matrix((blk.weights, (blk.rows, np.arange(blk.rows.size))), shape=(m, blk.rows.size))
        self.degree = self.n

    def identity(self):
        return np.eye(self.n)

    def apply(self, X):
        vals = np.einsum("ir,ir->r", self.U, X @ self.U)
        return self.S @ vals

    def adjoint(self, y):
        coeff = self.S.T @ y
        return (self.U * coeff) @ self.U.T

    @staticmethod
    def inner(a, b):
        return float(np.vdot(a, b))

    @staticmethod
    def interior(X) -> bool:
        try:
            np.linalg.cholesky(X)
        except np.linalg.LinAlgError:
            return False
        return True

    def scaling(self, X, Z):
        Lx = np.linalg.cholesky(X)
        Lz = np.linalg.cholesky(Z)
        u, lam, vt = np.linalg.svd(Lz.T @ Lx)
        r = (Lx @ vt.T) / np.sqrt(lam)
        rinv = (np.sqrt(lam)[:, None] * vt) @ sla.solve_triangular(Lx, np.eye(self.n), lower=True)
        return dict(R=r, Rinv=rinv, lam=lam, V=r @ r.T, Lx=Lx, Lz=Lz)

    def schur(self, sc):
        if self.U.shape[1] == 0:
            return None
        M = self.U.T @ (sc["V"] @ self.U)
        K = M * M
        SK = self.S @ K
        return (self.S @ SK.T).T

    # scaled-space maps
    @staticmethod
    def to_primal(sc, u):
        return sc["R"] @ u @ sc["R"].T

    @staticmethod
    def primal_to_scaled(sc, dx):
        return sc["Rinv"] @ dx @ sc["Rinv"].T

    @staticmethod
    def dual_to_scaled(sc, dz):
        return sc["R"].T @ dz @ sc["R"]

    @staticmethod
    def w2(sc, dz):
        V = sc["V"]
        return V @ dz @ V

    @staticmethod
    def lam_sq(sc):
        return np.diag(sc["lam"] ** 2)

    def lam_identity(self, sc):
        return np.eye(self.n)

    @staticmethod
    def jprod(u, v):
        p = u @ v
        return 0.5 * (p + p.T)

    @staticmethod
    def lam_solve(sc, w):
        lam = sc["lam"]
        return 2.0 * w / (lam[:, None] + lam[None, :])

    @staticmethod
    def max_step(L, d):
        t = sla.solve_triangular(L, d, lower=True)
        t = sla.solve_triangular(L, t.T, lower=True)
        ev = np.linalg.eigvalsh(0.5 * (t + t.T))[0]
        return math.inf if ev >= 0 else -1.0 / ev

    def max_step_primal(self, sc, dx):
        return self.max_step(sc["Lx"], dx)

    def max_step_dual(self, sc, dz):
        return self.max_step(sc["Lz"], dz)

    @staticmethod
    def sym(a):
        return 0.5 * (a + a.T)


class _SocGroup:
    def __init__(self, grp: SocGroup, m: int):
        self.d = grp.dim
        self.k = grp.count
        self.C = grp.objective
        self.A = grp.matrix.tocsr()
        self.AT = self.A.T.tocsr()
        self.degree = self.k

    def identity(self):
        e = np.zeros((self.k, self.d))
        e[:, 0] = 1.0
        return e

    def apply(self, x):
        return self.A @ x.ravel()

    def adjoint(self, y):
        return (self.AT @ y).reshape(self.k, self.d)

    @staticmethod
    def inner(a, b):
        return float(np.vdot(a, b))

    @staticmethod
    def _jdot(a, b):
        return a[:, 0] * b[:, 0] - np.einsum("ij,ij->i", a[:, 1:], b[:, 1:])

    def interior(self, x) -> bool:
        return bool(np.all(x[:, 0] > 0) and np.all(self._jdot(x, x) > 0))

    def scaling(self, x, z):
        jx, jz = self._jdot(x, x), self._jdot(z, z)
        if not (np.all(jx > 0) and np.all(jz > 0)):
            # an iterate reached the cone boundary in floating point
            raise np.linalg.LinAlgError("second-order cone iterate is not interior")
        aa = np.sqrt(jx)
        bb = np.sqrt(jz)
        beta = np.sqrt(aa / bb)
        cc = np.sqrt((np.einsum("ij,ij->i", x, z) / aa / bb + 1.0) / 2.0)
        v = -z / bb[:, None]
        v[:, 0] *= -1.0
        v += x / aa[:, None]
        v /= (2.0 * cc)[:, None]
        v[:, 0] += 1.0
        v /= np.sqrt(2.0 * v[:, 0])[:, None]
        J = np.diag(np.r_[1.0, -np.ones(self.d - 1)])
        vv = np.einsum("ki,kj->kij", v, v)
        W = beta[:, None, None] * (2.0 * vv - J)
        Jv = v * np.diag(J)
        Winv = (1.0 / beta)[:, None, None] * (2.0 * np.einsum("ki,kj->kij", Jv, Jv) - J)
        lam = np.einsum("kij,kj->ki", W, z)
        return dict(W=W, Winv=Winv, lam=lam, W2=np.einsum("kij,kjl->kil", W, W))

    def schur(self, sc):
        if self.A.nnz == 0:
            return None
        blocks = sp.block_diag(list(sc["W2"]), format="csr") if self.k > 1 else sp.csr_matrix(sc["W2"][0])
        return (self.A @ blocks @ self.AT).toarray()

    @staticmethod
    def to_primal(sc, u):
        return np.einsum("kij,kj->ki", sc["W"], u)

    @staticmethod
    def primal_to_scaled(sc, dx):
        return np.einsum("kij,kj->ki", sc["Winv"], dx)

    @staticmethod
    def dual_to_scaled(sc, dz):
        return np.einsum("kij,kj->ki", sc["W"], dz)

    @staticmethod
    def w2(sc, dz):
        return np.einsum("kij,kj->ki", sc["W2"], dz)

    @classmethod
    def lam_sq(cls, sc):
        return cls.jprod(sc["lam"], sc["lam"])

    def lam_identity(self, sc):
        return self.identity()

    @staticmethod
    def jprod(u, v):
        out = np.empty_like(u)
        out[:, 0] = np.einsum("ij,ij->i", u, v)
        out[:, 1:] = u[:, :1] * v[:, 1:] + v[:, :1] * u[:, 1:]
        return out

    @classmethod
    def lam_solve(cls, sc, w):
        lam = sc["lam"]
        l0 = lam[:, 0]
        l1 = lam[:, 1:]
        det = cls._jdot(lam, lam)
        u0 = (l0 * w[:, 0] - np.einsum("ij,ij->i", l1, w[:, 1:])) / det
        out = np.empty_like(w)
        out[:, 0] = u0
        out[:, 1:] = (w[:, 1:] - u0[:, None] * l1) / l0[:, None]
        return out

    def _max_step(self, u, d):
        # largest alpha with u + alpha d in Q, for u in the interior
        a = self._jdot(d, d)
        b = self._jdot(u, d)
        c = self._jdot(u, u)
        alpha = np.full(self.k, np.inf)
        with np.errstate(divide="ignore", invalid="ignore"):
            disc = b * b - a * c
            real = disc >= 0
            sq = np.sqrt(np.where(real, disc, 0.0))
            qq = -(b + np.where(b >= 0, sq, -sq))
            r1 = np.where(a != 0, qq / a, np.inf)
            r2 = np.where(qq != 0, c / qq, np.inf)
        for r in (r1, r2):
            ok = real & np.isfinite(r) & (r > 0) & (u[:, 0] + r * d[:, 0] >= -1e-300)
            alpha = np.where(ok, np.minimum(alpha, r), alpha)
        # direction leaving through the apex half-space
        lin = d[:, 0] < 0
        alpha = np.where(lin, np.minimum(alpha, -u[:, 0] / np.where(lin, d[:, 0], -1.0)), alpha)
        return float(alpha.min()) if self.k else math.inf

    def max_step_primal(self, sc, dx):
        return self._max_step(self._x, dx)

    def max_step_dual(self, sc, dz):
        return self._max_step(self._z, dz)

    @staticmethod
    def sym(a):
        return a


# --------------------------------------------------------------------------
# solution


@dataclasses.dataclass
class ConicSolution:
    """Solver output.  ``free``/``soc``/``psd`` are primal values; ``y`` the
    equality multipliers and ``z_soc``/``z_psd`` the dual slacks."""

    status: Status
    objective_value: float
    dual_objective_value: float
    kkt_residuals: tuple[float, float, float]
    iterations: int
    free: np.ndarray
    soc: list[np.ndarray]
    psd: list[np.ndarray]
    y: np.ndarray
    z_soc: list[np.ndarray]
    z_psd: list[np.ndarray]
    history: list[dict]
    solve_seconds: float = 0.0

    @property
    def primal_values(self) -> np.ndarray:
        parts = [self.free]
        parts += [s.ravel() for s in self.soc]
        parts += [X[np.triu_indices(X.shape[0])] for X in self.psd]
        return np.concatenate(parts) if parts else np.zeros(0)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def _norm(parts) -> float:
    return math.sqrt(sum(float(np.vdot(p, p)) for p in parts))


def solve(
    program: ConicProgram,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    target: float | None = None,
) -> ConicSolution:
    """Solve ``program`` with a homogeneous self-dual interior-point method.

    Parameters
    ----------
    program : ConicProgram
        Standard-form program.
    tolerance : float
        Bound on every relative KKT residual (primal and dual feasibility plus
        the duality gap) required for ``Status.OPTIMAL``; also the certificate tolerance for
        infeasibility and unboundedness.
    max_iterations : int
        Iteration cap.  When hit, the last iterate is returned with
        ``Status.MAX_ITERATIONS``.
    target : float, optional
        Tighter tolerance to aim for once ``tolerance`` is met.  If the
        iteration stops short of it, the last iterate that met ``tolerance`` is
        returned as optimal.

    Returns
    -------
    ConicSolution
    """
    t_start = time.perf_counter()
    program.validate()
    m = program.n_constraints
    b = program.rhs
    cf = program.free_objective
    Af = program.free_matrix
    nf = cf.shape[0]
    cones = [_SocGroup(g, m) for g in program.soc_groups] + [_PsdCone(blk, m) for blk in program.psd_blocks]
    n_soc = len(program.soc_groups)
    C = [cone.C for cone in cones]
    nu = sum(cone.degree for cone in cones)

    xf = np.zeros(nf)
    X = [cone.identity() for cone in cones]
    Z = [cone.identity() for cone in cones]
    y = np.zeros(m)
    tau = kappa = 1.0

    bnorm = max(1.0, float(np.linalg.norm(b)))
    cnorm = max(1.0, _norm([cf] + C))
    history: list[dict] = []
    status = Status.MAX_ITERATIONS
    residuals = (math.inf, math.inf, math.inf)
    accepted = None
    first_accepted = 0
    iterations = 0

    def apply_A(xf_, Xs):
        out = Af @ xf_ if nf else np.zeros(m)
        for cone, Xc in zip(cones, Xs):
            out = out + cone.apply(Xc)
        return out

    def adjoint_K(y_):
        return [cone.adjoint(y_) for cone in cones]

    def inner_K(a, b_):
        return sum(float(np.vdot(p, q)) for p, q in zip(a, b_))

    for it in range(max_iterations + 1):
        iterations = it
        Ax = apply_A(xf, X)
        ATy = adjoint_K(y)
        rp = tau * b - Ax
        rdf = tau * cf - Af.T @ y if nf else np.zeros(0)
        rdK = [tau * Cc - a - Zc for Cc, a, Zc in zip(C, ATy, Z)]
        cx = float(cf @ xf) + inner_K(C, X)
        by = float(b @ y)
        rg = kappa + cx - by
        gap = inner_K(X, Z)
        mu = (gap + tau * kappa) / (nu + 1)

        pobj, dobj = cx / tau, by / tau
        pres = float(np.linalg.norm(rp)) / tau / bnorm
        dres = _norm([rdf] + rdK) / tau / cnorm
        gres = max(gap / tau**2, abs(pobj - dobj)) / (1.0 + abs(pobj) + abs(dobj))
        residuals = (pres, dres, gres)
        history.append(
            dict(iteration=it, primal_objective=pobj, dual_objective=dobj, primal_residual=pres,
                 dual_residual=dres, gap=gap / tau**2, tau=tau, kappa=kappa, mu=mu,
                 primal_norm=_norm([xf] + X) / tau, dual_norm=float(np.linalg.norm(y)) / tau,
                 scales=(bnorm, cnorm))
        )

        if pres <= tolerance and dres <= tolerance and gres <= tolerance:
            if target is None or max(residuals) <= target:
                status = Status.OPTIMAL
                break
            if accepted is None:
                first_accepted = it
            accepted = (it, xf.copy(), [a.copy() for a in X], y.copy(), [a.copy() for a in Z], tau, kappa,
                        residuals, len(history) - 1)
        if by > 0:
            cert = _norm([Af.T @ y if nf else np.zeros(0)] + [a + Zc for a, Zc in zip(ATy, Z)])
            if cert / by <= tolerance * cnorm:
                status = Status.INFEASIBLE
                break
        if cx < 0:
            cert = float(np.linalg.norm(Ax))
            if cert / -cx <= tolerance * bnorm:
                status = Status.UNBOUNDED
                break
        if it == max_iterations or (accepted is not None and it - first_accepted >= TARGET_EXTRA_ITERATIONS):
            status = Status.MAX_ITERATIONS
            break

        try:
            scal = [cone.scaling(Xc, Zc) for cone, Xc, Zc in zip(cones, X, Z)]
        except np.linalg.LinAlgError:
            status = Status.NUMERICAL_FAILURE
            break
        for cone, Xc, Zc in zip(cones[:n_soc], X[:n_soc], Z[:n_soc]):
            cone._x, cone._z = Xc, Zc

        H = np.zeros((m, m))
        for cone, sc in zip(cones, scal):
            contrib = cone.schur(sc)
            if contrib is not None:
                H += contrib
        H = 0.5 * (H + H.T)
        KKT = np.zeros((m + nf, m + nf))
        KKT[:m, :m] = H
        if nf:
            KKT[:m, m:] = Af
            KKT[m:, :m] = Af.T
        # symmetric Ruiz equilibration keeps the LU accurate as W^2 degenerates
        dscale = np.ones(m + nf)
        Ks = KKT
        for _ in range(3):
            rmax = np.sqrt(np.max(np.abs(Ks), axis=1))
            rmax[rmax == 0] = 1.0
            dscale /= rmax
            Ks = KKT * np.outer(dscale, dscale)
        def kkt_apply(v):
            # the reduced operator evaluated through the cone maps, not through H
            dy, dxf = v[:m], v[m:]
            top = Af @ dxf if nf else np.zeros(m)
            for cone, sc, a in zip(cones, scal, adjoint_K(dy)):
                top = top + cone.apply(cone.w2(sc, a))
            return np.concatenate([top, Af.T @ dy if nf else np.zeros(0)])

        def kkt_solve(r):
            sol = sla.lu_solve(lu, r * dscale, check_finite=False) * dscale
            res = r - kkt_apply(sol)
            res_norm = np.linalg.norm(res)
            floor = 1e-14 * (1.0 + np.linalg.norm(r))
            for _ in range(4):
                if res_norm <= floor:
                    break
                trial = sol + sla.lu_solve(lu, res * dscale, check_finite=False) * dscale
                trial_res = r - kkt_apply(trial)
                trial_norm = np.linalg.norm(trial_res)
                if trial_norm >= res_norm:
                    break
                sol, res, res_norm = trial, trial_res, trial_norm
            return sol

        def newton(Ra, Rb, Rc, Rd, Re, Rf):
            # Linearized system, with dx = (dxf, dX):
            #   A dx - b dtau = Ra            Af^T dy - cf dtau = Rb
            #   A^T dy + dZ - C dtau = Rc     dX + W^2 dZ = Rd
            #   kappa dtau + tau dkappa = Re  dkappa + c^T dx - b^T dy = Rf
            tK = [rd - cone.w2(sc, rc) for cone, sc, rd, rc in zip(cones, scal, Rd, Rc)]
            top = Ra - sum((cone.apply(t) for cone, t in zip(cones, tK)), np.zeros(m))
            sol1 = kkt_solve(np.concatenate([top, Rb]))
            dy1, dxf1 = sol1[:m], sol1[m:]
            q1 = [t + cone.w2(sc, a) for cone, sc, t, a in zip(cones, scal, tK, adjoint_K(dy1))]
            num = Re / tau + float(cf @ dxf1) + inner_K(C, q1) - float(b @ dy1) - Rf
            den = kappa / tau - float(cf @ dxf2) - inner_K(C, q2) + float(b @ dy2)
            dtau = num / den
            dy = dy1 + dtau * dy2
            dxf = dxf1 + dtau * dxf2
            dX = [cone.sym(a + dtau * c) for cone, a, c in zip(cones, q1, q2)]
            dkappa = (Re - kappa * dtau) / tau
            dZ = [cone.sym(rc - a + dtau * Cc) for cone, rc, a, Cc in zip(cones, Rc, adjoint_K(dy), C)]
            return dxf, dX, dy, dZ, dtau, dkappa

        def newton_residual(rhs, d):
            Ra, Rb, Rc, Rd, Re, Rf = rhs
            dxf, dX, dy, dZ, dtau, dkappa = d
            ea = Ra - apply_A(dxf, dX) + b * dtau
            eb = Rb - (Af.T @ dy if nf else np.zeros(0)) + cf * dtau
            ec = [rc - a - dz + Cc * dtau for rc, a, dz, Cc in zip(Rc, adjoint_K(dy), dZ, C)]
            ed = [rd - dx - cone.w2(sc, dz) for cone, sc, rd, dx, dz in zip(cones, scal, Rd, dX, dZ)]
            ee = Re - kappa * dtau - tau * dkappa
            ef = Rf - dkappa - float(cf @ dxf) - inner_K(C, dX) + float(b @ dy)
            return ea, eb, ec, ed, ee, ef

        def direction(eta, rs, tk_rhs):
            rhs = (eta * rp, eta * rdf, [eta * r for r in rdK],
                   [cone.to_primal(sc, r) for cone, sc, r in zip(cones, scal, rs)], tk_rhs, -eta * rg)
            d = newton(*rhs)
            # one step of refinement on the full system recovers the accuracy
            # lost to cancellation in the reduced right-hand side
            corr = newton(*newton_residual(rhs, d))
            return (d[0] + corr[0], [a + c for a, c in zip(d[1], corr[1])], d[2] + corr[2],
                    [a + c for a, c in zip(d[3], corr[3])], d[4] + corr[4], d[5] + corr[5])

        def step_bound(dX, dZ, dtau, dkappa):
            a = math.inf
            for cone, sc, dx, dz in zip(cones, scal, dX, dZ):
                a = min(a, cone.max_step_primal(sc, dx), cone.max_step_dual(sc, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # a direction that admits no step at all usually comes from a nearly
        # singular factorization; retry it with a stronger regularization
        alpha = math.nan
        for reg in REGULARIZATION:
            Kreg = Ks.copy()
            Kreg[np.diag_indices(m)] += reg
            Kreg[m + np.arange(nf), m + np.arange(nf)] -= reg
            try:
                lu = sla.lu_factor(Kreg, check_finite=False)
                W2C = [cone.w2(sc, Cc) for cone, sc, Cc in zip(cones, scal, C)]
                rhs2 = np.concatenate([b + sum((cone.apply(w) for cone, w in zip(cones, W2C)), np.zeros(m)), cf])
                sol2 = kkt_solve(rhs2)
                dy2, dxf2 = sol2[:m], sol2[m:]
                q2 = [-w + cone.w2(sc, a) for cone, sc, w, a in zip(cones, scal, W2C, adjoint_K(dy2))]
                # predictor
                rs_aff = [-cone.lam_solve(sc, cone.lam_sq(sc)) for cone, sc in zip(cones, scal)]
                aff = direction(1.0, rs_aff, -tau * kappa)
                alpha_aff = min(1.0, step_bound(aff[1], aff[3], aff[4], aff[5]))
                sigma = min(1.0, max(0.0, 1.0 - alpha_aff)) ** 3
                # corrector
                rs = []
                for cone, sc, dx, dz in zip(cones, scal, aff[1], aff[3]):
                    corr = cone.jprod(cone.primal_to_scaled(sc, dx), cone.dual_to_scaled(sc, dz))
                    rhs_c = sigma * mu * cone.lam_identity(sc) - cone.lam_sq(sc) - corr
                    rs.append(cone.lam_solve(sc, rhs_c))
                tk = sigma * mu - tau * kappa - aff[4] * aff[5]
                dxf, dX, dy, dZ, dtau, dkappa = direction(1.0 - sigma, rs, tk)
                alpha = min(1.0, 0.99 * step_bound(dX, dZ, dtau, dkappa))
            except (ValueError, np.linalg.LinAlgError):
                continue
            if np.isfinite(alpha) and alpha > 1e-12:
                break
        if not np.isfinite(alpha) or alpha <= 1e-12:
            status = Status.NUMERICAL_FAILURE
            break

        # the step bound is exact only in exact arithmetic; back off until the
        # rounded iterate is strictly interior
        for _ in range(BACKTRACK_STEPS):
            X_new = [cone.sym(Xc + alpha * d) for cone, Xc, d in zip(cones, X, dX)]
            Z_new = [cone.sym(Zc + alpha * d) for cone, Zc, d in zip(cones, Z, dZ)]
            if all(cone.interior(a) and cone.interior(c) for cone, a, c in zip(cones, X_new, Z_new)):
                break
            alpha *= 0.5
        else:
            status = Status.NUMERICAL_FAILURE
            break

        xf = xf + alpha * dxf
        X = X_new
        y = y + alpha * dy
        Z = Z_new
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa
        history[-1]["step"] = alpha
        history[-1]["sigma"] = sigma

    final = len(history) - 1
    if status is not Status.OPTIMAL and accepted is not None:
        iterations, xf, X, y, Z, tau, kappa, residuals, final = accepted
        status = Status.OPTIMAL
    if status is Status.INFEASIBLE:
        xscale = 0.0
        yscale = 1.0 / float(b @ y)
    elif status is Status.UNBOUNDED:
        xscale = -1.0 / (float(cf @ xf) + inner_K(C, X))
        yscale = 0.0
    else:
        xscale = yscale = 1.0 / tau
    xs = [Xc * xscale for Xc in X]
    zs = [Zc * yscale for Zc in Z]
    if status is Status.INFEASIBLE:
        pval, dval = math.inf, math.inf
    elif status is Status.UNBOUNDED:
        pval, dval = -math.inf, -math.inf
    else:
        pval = history[final]["primal_objective"]
        dval = history[final]["dual_objective"]
    return ConicSolution(
        status=status,
        objective_value=pval,
        dual_objective_value=dval,
        kkt_residuals=residuals,
        iterations=iterations,
        free=xf * xscale,
        soc=xs[:n_soc],
        psd=xs[n_soc:],
        y=y * yscale,
        z_soc=zs[:n_soc],
        z_psd=zs[n_soc:],
        history=history,
        solve_seconds=time.perf_counter() - t_start,
    )
