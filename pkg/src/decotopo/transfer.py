"""Exact row-to-row transfer operators on width-``Lx`` periodic cylinders.

The transfer operator of row ``y`` is ``M = D_H V``: ``D_H`` is diagonal with
the product of the horizontal weights of the row and ``V[a, b] =
prod_x W(a_x, b_x)`` joins row ``y`` to row ``y + 1``.  The torus partition
function is ``tr M^Ly``.  For symmetric nonnegative tables the eigenproblem is
solved on ``S = sqrt(D_H) V sqrt(D_H)`` (similar to ``M``), which is real
symmetric.  With ``u`` the normalised dominant eigenvector of ``S``, the right
and left eigenvectors of ``M`` are ``R = sqrt(D_H) u`` and ``L = V R / lam``, so
that ``L . R = 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs, eigsh

from .models import StatMechModel, flip_table, parity

MAX_DIM = 2**24
DENSE_MAX = 4096
DEGENERACY_TOL = 1e-8
PLATEAU_SLOPE = 1e-3


class CapExceeded(ValueError):
    pass


def row_digits(d: int, Lx: int) -> np.ndarray:
    """``(d**Lx, Lx)`` local states of every row state (site 0 most significant)."""
    idx = np.arange(d**Lx)
    return np.stack(np.unravel_index(idx, (d,) * Lx), axis=1)


def _row_diag(tables: list, d: int, Lx: int) -> np.ndarray:
    """Product over ``x`` of ``tables[x][a_x, a_{x+1}]`` as a flat vector."""
    shape = (d,) * Lx
    out = np.ones(shape)
    if Lx == 1:
        return out.reshape(-1)  # a self-bond counts as weight one
    for x in range(Lx):
        x2 = (x + 1) % Lx
        bshape = [1] * Lx
        w = tables[x]
        if x2 > x:
            bshape[x], bshape[x2] = d, d
            out = out * w.reshape(bshape)
        else:
            bshape[x2], bshape[x] = d, d
            out = out * w.T.reshape(bshape)
    return out.reshape(-1)


def _apply_columns(tables: list, v: np.ndarray, d: int, Lx: int) -> np.ndarray:
    """``(V v)[a] = sum_b prod_x tables[x][a_x, b_x] v[b]``; extra trailing axes allowed."""
    extra = v.shape[1:]
    t = v.reshape((d,) * Lx + extra)
    for x in range(Lx):
        t = np.tensordot(tables[x], t, axes=([1], [x]))
        t = np.moveaxis(t, 0, x)
    return t.reshape((d**Lx,) + extra)


@dataclass(eq=False)
class TransferOperator:
    """Row transfer operator ``M = D_H V`` of ``model`` on a width-``Lx`` cylinder.

    ``rep`` is ``"dense"`` (materialised matrix), ``"matrix-free"`` (column by
    column application) or ``"auto"`` (dense below :data:`DENSE_MAX`).
    """

    model: StatMechModel
    Lx: int
    rep: str = "auto"
    dim: int = field(init=False)
    dh: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = self.model.d
        if self.Lx < 1:
            raise ValueError("Lx must be positive")
        if self.Lx * math.log2(d) > 24:
            raise CapExceeded(f"state space {d}^{self.Lx} exceeds 2^24")
        self.dim = d**self.Lx
        if self.rep == "auto":
            self.rep = "dense" if self.dim < DENSE_MAX else "matrix-free"
        if self.rep not in ("dense", "matrix-free"):
            raise ValueError(f"unknown representation {self.rep!r}")
        w = self.model.weight
        self.dh = _row_diag([w] * self.Lx, d, self.Lx)
        self._wv = [w] * self.Lx
        self._dense = None
        self._vdense = None
        self.symmetric = bool(np.allclose(w, w.T, rtol=0, atol=0)) and bool(np.all(self.dh >= 0))
        self.nonnegative = not self.model.sign_indefinite

    @property
    def d(self) -> int:
        return self.model.d

    # ----------------------------------------------------------- applications
    def apply_v(self, v, tables=None):
        return _apply_columns(tables or self._wv, v, self.d, self.Lx)

    def apply(self, v):
        """``M v``."""
        if self.rep == "dense":
            return self.matrix() @ v
        out = self.apply_v(v)
        return self.dh.reshape((-1,) + (1,) * (out.ndim - 1)) * out

    def apply_t(self, v):
        """``M^T v``."""
        if self.rep == "dense":
            return self.matrix().T @ v
        dv = self.dh.reshape((-1,) + (1,) * (v.ndim - 1)) * v
        return _apply_columns([w.T for w in self._wv], dv, self.d, self.Lx)

    def apply_sym(self, v):
        """``sqrt(D_H) V sqrt(D_H) v`` (only for symmetric nonnegative rows)."""
        sq = np.sqrt(self.dh).reshape((-1,) + (1,) * (v.ndim - 1))
        return sq * self.apply_v(sq * v)

    def vmatrix(self) -> np.ndarray:
        """Materialised vertical factor ``V``."""
        if self._vdense is None:
            if self.dim > 4 * DENSE_MAX:
                raise CapExceeded(f"refusing to materialise a {self.dim}-dimensional matrix")
            self._vdense = _apply_columns(self._wv, np.eye(self.dim), self.d, self.Lx)
        return self._vdense

    def matrix(self) -> np.ndarray:
        """Materialised ``M = D_H V``."""
        if self._dense is None:
            self._dense = self.dh[:, None] * self.vmatrix()
        return self._dense

    def row_partition_sum(self) -> float:
        """``1^T M 1``: one row of horizontal bonds plus one layer of vertical bonds."""
        return float(np.sum(self.apply(np.ones(self.dim))))

    # -------------------------------------------------------------- defects
    def defect_row(self, y: int, eta: dict):
        """Row factor ``(dh_y, vertical tables_y)`` with the edge sign flips of row ``y``."""
        w = self.model.weight
        hs = [flip_table(w, eta.get(("h", x, y), 0)) for x in range(self.Lx)]
        vs = [flip_table(w, eta.get(("v", x, y), 0)) for x in range(self.Lx)]
        if all(m is w for m in hs):
            dh = self.dh
        else:
            dh = _row_diag(hs, self.d, self.Lx)
        return dh, vs


def build_transfer(m: StatMechModel, Lx: int | None = None, rep: str = "auto") -> TransferOperator:
    """Row transfer operator of ``m`` on a width-``Lx`` periodic cylinder."""
    Lx = Lx if Lx is not None else m.Lx
    if Lx is None:
        raise ValueError("width Lx required")
    return TransferOperator(m, Lx, rep)


@dataclass
class SpectrumResult:
    """Leading eigenvalues ordered by decreasing magnitude."""

    eigenvalues: np.ndarray
    degenerate: bool
    right: np.ndarray | None = None
    left: np.ndarray | None = None
    residual: float = 0.0
    converged: bool = True

    @property
    def lam0(self) -> float:
        return float(np.real(self.eigenvalues[0]))


def _start_vector(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return 1.0 + 0.1 * rng.random(n)


def _sort_mag(vals, vecs=None):
    order = np.lexsort((np.arange(len(vals)), -np.abs(vals)))
    vals = vals[order]
    if vecs is not None:
        vecs = vecs[:, order]
    return vals, vecs


def dominant_spectrum(t: TransferOperator, k: int = 2, seed: int = 0,
                      tol: float = 1e-13) -> SpectrumResult:
    """Top-``k`` eigenvalues by magnitude plus the dominant left/right eigenvectors.

    Dense solves below the cap, ARPACK otherwise; the starting vector comes from
    a seeded generator so results are reproducible.
    """
    if not 1 <= k <= 8:
        raise ValueError("k must be in [1, 8]")
    n = t.dim
    k = min(k, n)
    converged = True
    if t.symmetric:
        if t.rep == "dense" or n <= k + 2:
            sq = np.sqrt(t.dh)
            S = sq[:, None] * t.vmatrix() * sq[None, :]
            S = 0.5 * (S + S.T)
            vals, vecs = np.linalg.eigh(S)
        else:
            op = LinearOperator((n, n), matvec=t.apply_sym, dtype=float)
            try:
                vals, vecs = eigsh(op, k=max(k, 2), which="LM", v0=_start_vector(n, seed), tol=tol,
                                   ncv=min(n, max(20, 4 * k + 1)))
            except ArpackNoConvergence as exc:
                vals, vecs = exc.eigenvalues, exc.eigenvectors
                converged = False
        vals, vecs = _sort_mag(vals, vecs)
        u = vecs[:, 0]
        if np.sum(u) < 0:
            u = -u
        R = np.sqrt(t.dh) * u
        lam = vals[0]
        L = t.apply_v(R) / lam
        res = float(np.linalg.norm(t.apply_sym(u) - lam * u))
    else:
        if t.rep == "dense" or n <= k + 2:
            vals, vr = np.linalg.eig(t.matrix())
            vals, vr = _sort_mag(vals, vr)
            lvals, vl = np.linalg.eig(t.matrix().T)
            lvals, vl = _sort_mag(lvals, vl)
        else:
            op = LinearOperator((n, n), matvec=t.apply, dtype=float)
            opt = LinearOperator((n, n), matvec=t.apply_t, dtype=float)
            kk = max(k, 2)
            try:
                vals, vr = eigs(op, k=kk, which="LM", v0=_start_vector(n, seed), tol=tol)
                lvals, vl = eigs(opt, k=1, which="LM", v0=_start_vector(n, seed + 1), tol=tol)
            except ArpackNoConvergence as exc:
                raise RuntimeError(f"eigensolver did not converge: {exc}") from exc
            vals, vr = _sort_mag(vals, vr)
        lam = vals[0]
        R = vr[:, 0]
        L = vl[:, 0]
        if abs(np.imag(lam)) < 1e-12 * abs(lam):
            lam = np.real(lam)
            R = np.real(R * np.exp(-1j * np.angle(R[np.argmax(np.abs(R))])))
            L = np.real(L * np.exp(-1j * np.angle(L[np.argmax(np.abs(L))])))
        L = L / np.dot(L, R)
        res = float(np.linalg.norm(t.apply(R) - lam * R) / np.linalg.norm(R))
    vals = vals[:k] if len(vals) >= k else vals
    if len(vals) > 1:
        degenerate = bool(abs(abs(vals[0]) - abs(vals[1])) <= DEGENERACY_TOL * abs(vals[0]))
    else:
        degenerate = False
    return SpectrumResult(np.asarray(vals), degenerate, R, L, res, converged)


def correlation_length(t: TransferOperator, spec: SpectrumResult | None = None) -> float:
    """``1 / ln(lam0 / |lam1|)``; ``inf`` for a degenerate top pair, ``0`` if ``lam1 = 0``."""
    spec = spec or dominant_spectrum(t, 2)
    if len(spec.eigenvalues) < 2:
        return 0.0
    l0, l1 = abs(spec.eigenvalues[0]), abs(spec.eigenvalues[1])
    if l1 <= 1e-14 * l0:
        return 0.0
    if spec.degenerate:
        return math.inf
    return 1.0 / math.log(l0 / l1)


def flip_permutation(t: TransferOperator, mask: int) -> np.ndarray:
    """Index map of the global flip of ``mask`` on every column."""
    if not 0 < mask < t.d:
        raise ValueError(f"flip mask {mask} out of range")
    full = 0
    for x in range(t.Lx):
        full |= mask << (x * t.model.n_flavors)
    return np.arange(t.dim) ^ full


def _project(v, flips, parities):
    for f, par in zip(flips, parities):
        v = 0.5 * (v + par * v[f])
    return v


def sector_eigenvalues(t: TransferOperator, masks, parity=1, k: int = 2,
                       seed: int = 0, tol: float = 1e-13) -> np.ndarray:
    """Top-``k`` eigenvalues (by magnitude) in one global-flip parity sector.

    The row operator commutes with flipping any flavor subset on every column.
    ``masks`` is one flip mask or a sequence of them and ``parity`` the
    matching eigenvalue(s) of the flips; the projected operator has the sector
    spectrum plus zeros.
    """
    masks = [int(masks)] if isinstance(masks, (int, np.integer)) else [int(m) for m in masks]
    parities = [parity] * len(masks) if isinstance(parity, (int, np.integer)) else list(parity)
    if any(par not in (1, -1) for par in parities) or len(parities) != len(masks):
        raise ValueError("parities must be +1 or -1, one per mask")
    flips = [flip_permutation(t, m) for m in masks]
    n = t.dim
    if t.symmetric:
        def base(v):
            return t.apply_sym(v)
    else:
        def base(v):
            return t.apply(v)
    if t.rep == "dense" or n <= k + 2:
        if t.symmetric:
            sq = np.sqrt(t.dh)
            M = sq[:, None] * t.vmatrix() * sq[None, :]
        else:
            M = t.matrix()
        A = _project(M.T, flips, parities).T
        vals = np.linalg.eigvalsh(0.5 * (A + A.T)) if t.symmetric else np.linalg.eigvals(A)
    else:
        def mv(v):
            return base(_project(v, flips, parities))

        op = LinearOperator((n, n), matvec=mv, dtype=float)
        v0 = _project(_start_vector(n, seed), flips, parities)
        if t.symmetric:
            vals = eigsh(op, k=k, which="LM", v0=v0, tol=tol, ncv=min(n, max(20, 4 * k + 1)),
                         return_eigenvectors=False)
        else:
            vals = eigs(op, k=k, which="LM", v0=v0, tol=tol, return_eigenvectors=False)
    vals, _ = _sort_mag(np.asarray(vals))
    return vals[:k]


def default_sector_masks(m) -> tuple:
    """Flips of the ket-side flavors: ``s`` for two flavors, ``z`` and ``zb`` for four.

    Other flavor counts flip each flavor separately.
    """
    if m.n_flavors == 2:
        return (1,)
    if m.n_flavors == 4:
        return (1, 4)
    return tuple(1 << k for k in range(m.n_flavors))


def sector_correlation_length(t: TransferOperator, masks=None) -> float:
    """``xi`` from the top two eigenvalues of the sector even under the flips ``masks``.

    In phases that break a global flip the full spectrum has a tunnelling
    partner of ``lam0`` whose gap closes exponentially in the width; the even
    sector removes it and leaves the decay of connected correlations.  The
    default is :func:`default_sector_masks`.
    """
    if masks is None:
        masks = default_sector_masks(t.model)
    vals = np.abs(sector_eigenvalues(t, masks, 1, 2))
    if len(vals) < 2 or vals[1] <= 1e-14 * vals[0]:
        return 0.0
    if abs(vals[0] - vals[1]) <= DEGENERACY_TOL * vals[0]:
        return math.inf
    return 1.0 / math.log(vals[0] / vals[1])


def expectation(t: TransferOperator, insertions: dict | None = None, eta: dict | None = None,
                spec: SpectrumResult | None = None) -> float:
    """Ratio ``Z[insertions, eta] / Z`` on the infinite cylinder.

    ``insertions`` maps sites ``(x, y)`` to flavor masks whose spin product is
    inserted; ``eta`` maps edges to flavor masks whose bond terms flip sign.
    Only the finite window of rows touched by either is contracted:
    ``L^T prod_y (O_y M_y) R / lam^rows``.
    """
    insertions = {((x % t.Lx), y): m for (x, y), m in (insertions or {}).items() if m}
    eta = {(k, x % t.Lx, y): m for (k, x, y), m in (eta or {}).items() if m}
    if not insertions and not eta:
        return 1.0
    spec = spec or dominant_spectrum(t, 2)
    lam = spec.eigenvalues[0]
    rows = [y for (_, y) in insertions] + [y for (_, _, y) in eta]
    y0, y1 = min(rows), max(rows)
    digits = None
    if insertions:
        digits = row_digits(t.d, t.Lx)
    v = spec.right.astype(float if np.isrealobj(spec.right) else complex)
    for y in range(y1, y0 - 1, -1):
        dh, vs = t.defect_row(y, eta)
        v = dh * t.apply_v(v, vs) / lam
        for x in range(t.Lx):
            m = insertions.get((x, y), 0)
            if m:
                v = v * parity(m, digits[:, x])
    val = np.dot(spec.left, v)
    return float(np.real(val))


def two_point_order(t: TransferOperator, mask: int, r: int, direction: str = "column",
                    x0: int = 0, spec: SpectrumResult | None = None) -> float:
    """``<O_i O_j>`` with ``O`` the product of the masked flavors, ``|i - j| = r``.

    ``direction="column"`` separates the sites along the transfer direction,
    ``"row"`` around the cylinder.
    """
    if not 0 <= r <= 64:
        raise ValueError("r must be in [0, 64]")
    if mask == 0:
        raise ValueError("empty order mask")
    if r == 0:
        return 1.0
    if direction == "column":
        ins = {(x0, 0): mask, (x0, r): mask}
    elif direction == "row":
        if r >= t.Lx:
            raise ValueError("row separation must be below the width")
        ins = {(x0, 0): mask, (x0 + r, 0): mask}
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return expectation(t, ins, None, spec)


def disorder_parameter(t: TransferOperator, path, mask: int,
                       spec: SpectrumResult | None = None) -> float:
    """``Z_defect / Z`` for bond signs of ``mask`` flipped along the dual ``path``."""
    eta: dict = {}
    for e in path:
        eta[e] = eta.get(e, 0) ^ mask
    return expectation(t, None, eta, spec)


def mixed_correlator(t: TransferOperator, order_mask: int, disorder_mask: int, path,
                     sites, spec: SpectrumResult | None = None) -> float:
    """Order insertions at ``sites`` combined with a disorder line along ``path``."""
    eta: dict = {}
    for e in path:
        eta[e] = eta.get(e, 0) ^ disorder_mask
    ins: dict = {}
    for s in sites:
        ins[s] = ins.get(s, 0) ^ order_mask
    return expectation(t, ins, eta, spec)


def free_energy_density(t: TransferOperator, spec: SpectrumResult | None = None) -> float:
    """``ln(lam0) / Lx`` per site (the sign convention is ``-beta f``)."""
    spec = spec or dominant_spectrum(t, 1)
    return math.log(abs(spec.eigenvalues[0])) / t.Lx


def log_partition_torus(t: TransferOperator, Ly: int) -> tuple[float, float]:
    """``(ln|Z|, sign Z)`` with ``Z = tr M^Ly`` computed by repeated squaring."""
    if Ly < 1:
        raise ValueError("Ly must be positive")
    if t.dim <= 4 * DENSE_MAX:
        M = t.matrix()
        logscale = 0.0
        result = None
        res_scale = 0.0
        base = M.copy()
        n = Ly
        while n:
            if n & 1:
                if result is None:
                    result, res_scale = base.copy(), logscale
                else:
                    result = result @ base
                    res_scale += logscale
                    s = np.max(np.abs(result))
                    result /= s
                    res_scale += math.log(s)
            n >>= 1
            if n:
                base = base @ base
                logscale *= 2
                s = np.max(np.abs(base))
                base /= s
                logscale += math.log(s)
        tr = float(np.trace(result))
        return math.log(abs(tr)) + res_scale, math.copysign(1.0, tr)
    raise CapExceeded("torus trace needs a materialisable transfer matrix")


def torus_two_point(t: TransferOperator, Ly: int, mask: int, rs, x0: int = 0,
                    block: int = 512) -> dict:
    """Exact ``<O(x0, 0) O(x0, r)>`` on the ``Lx x Ly`` torus for each ``r`` in ``rs``.

    Uses ``tr(S^(Ly-r) O S^r O) / tr(S^Ly)`` with the symmetric row operator
    ``S``, evaluated column block by column block so only ``dim x block``
    arrays are held.  Each trace is written as
    ``sum_b <S^q1 O S^p2 e_b, S^q2 O S^p1 e_b>`` to share matrix powers.
    """
    if not t.symmetric:
        raise ValueError("torus correlators need a symmetric nonnegative row operator")
    rs = [int(r) % Ly for r in rs]
    digits = row_digits(t.d, t.Lx)
    o = parity(mask, digits[:, x0 % t.Lx]).astype(float)
    spec = dominant_spectrum(t, 1)
    lam = abs(spec.eigenvalues[0])

    def S(v):
        return t.apply_sym(v) / lam

    plans = []
    need = Ly // 2 + Ly % 2
    for r in rs:
        p1, q1 = (Ly - r) // 2, r // 2
        p2, q2 = Ly - r - p1, r - q1
        plans.append((r, p1, p2, q1, q2))
        need = max(need, p1, p2)
    z = 0.0
    acc = np.zeros(len(rs))
    for start in range(0, t.dim, block):
        stop = min(t.dim, start + block)
        E = np.zeros((t.dim, stop - start))
        E[np.arange(start, stop), np.arange(stop - start)] = 1.0
        powers = [E]
        for _ in range(need):
            powers.append(S(powers[-1]))
        z += float(np.sum(powers[Ly // 2] * powers[Ly - Ly // 2]))
        for k, (r, p1, p2, q1, q2) in enumerate(plans):
            a = o[:, None] * powers[p2]
            for _ in range(q1):
                a = S(a)
            if p1 == p2 and q1 == q2:
                acc[k] += float(np.sum(a * a))
                continue
            b = o[:, None] * powers[p1]
            for _ in range(q2):
                b = S(b)
            acc[k] += float(np.sum(a * b))
    return {r: acc[k] / z for k, r in enumerate(rs)}


@dataclass
class DecayFit:
    slope: float
    intercept: float
    rate: float
    plateau: bool


def fit_decay(rs, values, threshold: float = PLATEAU_SLOPE) -> DecayFit:
    """Log-linear fit of ``|values|`` over the upper half ``r in [r_max/2, r_max]``."""
    rs = np.asarray(rs, float)
    vals = np.abs(np.asarray(values, float))
    rmax = rs.max()
    sel = rs >= rmax / 2
    if sel.sum() < 2:
        raise ValueError("need at least two points in the fit window")
    with np.errstate(divide="ignore"):
        y = np.log(np.maximum(vals[sel], 1e-300))
    slope, intercept = np.polyfit(rs[sel], y, 1)
    rate = -slope
    return DecayFit(float(slope), float(intercept), float(rate), bool(abs(slope) < threshold))


def correlator_profile(t: TransferOperator, fn, r_max: int, spec=None):
    """Evaluate ``fn(t, r, spec)`` for ``r = 1..r_max``."""
    spec = spec or dominant_spectrum(t, 2)
    rs = np.arange(1, r_max + 1)
    return rs, np.array([fn(t, int(r), spec) for r in rs])
