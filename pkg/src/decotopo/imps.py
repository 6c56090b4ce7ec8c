"""Uniform MPS fixed points of the infinite-width row transfer operator.

The row operator ``T = D_H V`` is written as an MPO.  Each horizontal bond
weight is split as ``W(a, a') = sum_k F_k(a) G_k(a')`` and the site tensor is
``O[l, r, a, b] = sum_c P[c, a] G_l(c) F_r(c) K[c, b]`` with ``a`` the output
(row ``y``) spin and ``b`` the input (row ``y+1``) spin.  The spin-basis form
``P = 1, K = W`` reproduces ``T`` entry by entry; the symmetric form
``P = K = W^(1/2)`` is the similar operator ``V^(1/2) D_H V^(1/2)``.  Since
``O`` is diagonal in ``c`` between two single-site matrices, every
contraction below factorises and costs ``O(d chi^3)``.

The dominant eigenvector is found with the variational uniform MPS algorithm
(VUMPS): alternately solve for the left/right environments and the centre
tensors ``A_C``, ``C``, and re-gauge ``A_L``/``A_R`` by polar decompositions.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, LinearOperator, eigs

from .models import StatMechModel

log = logging.getLogger(__name__)

RANK_TOL = 1e-13
CHI_LADDER = (8, 12, 16, 24, 32, 48)


@dataclass
class RowMPO:
    """Row transfer MPO ``O[l, r, a, b] = sum_c P[c, a] G[c, l] F[c, r] K[c, b]``.

    In the spin-basis form ``P = 1`` and ``K = W`` so the ring of ``L`` tensors
    is exactly ``D_H V``.  The symmetric form uses ``P = K = W^(1/2)`` and
    represents the similar operator ``V^(1/2) D_H V^(1/2)``.
    """

    W: np.ndarray
    F: np.ndarray
    G: np.ndarray
    P: np.ndarray
    K: np.ndarray
    form: str
    singular_values: np.ndarray = field(repr=False, default=None)

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def D(self) -> int:
        return self.F.shape[1]

    @property
    def rank(self) -> int:
        return self.D

    @property
    def dtype(self):
        return np.result_type(self.P, self.K, self.F, self.G)

    def tensor(self) -> np.ndarray:
        return np.einsum("ca,cl,cr,cb->lrab", self.P, self.G, self.F, self.K)

    def ring(self, L: int) -> np.ndarray:
        """Dense operator of a closed ring of ``L`` sites."""
        O = self.tensor()
        d, D = self.d, self.D
        t = O
        for _ in range(1, L):
            t = np.einsum("xlAB,lrab->xrAaBb", t, O)
            n = t.shape[2] * d
            t = t.reshape(D, D, n, n)
        return np.einsum("llab->ab", t)


def build_row_mpo(m: StatMechModel, form: str = "symmetric") -> RowMPO:
    """Factorise the horizontal bond weight by SVD and assemble the row MPO.

    ``form="spin"`` gives ``D_H V`` itself.  ``form="symmetric"`` (default)
    gives ``V^(1/2) D_H V^(1/2)``: the same spectrum, but real symmetric for
    positive semidefinite ``W`` (complex symmetric otherwise), which makes the
    fixed-point problem variational and its entanglement that of the
    symmetric transfer eigenvector.
    """
    w = m.weight
    u, s, vt = np.linalg.svd(w)
    keep = s > RANK_TOL * max(s[0], 1e-300)
    if not np.any(keep):
        raise ValueError("weight table is zero")
    sq = np.sqrt(s[keep])
    F = u[:, keep] * sq
    G = vt[keep].T * sq
    d = w.shape[0]
    if form == "spin":
        P, K = np.eye(d), w.copy()
    elif form == "symmetric":
        ev, vec = np.linalg.eigh(w)
        if ev.min() >= -1e-12 * abs(ev).max():
            Q = (vec * np.sqrt(np.clip(ev, 0, None))) @ vec.T
        else:
            Q = (vec * np.sqrt(ev.astype(complex))) @ vec.T
        P = K = Q
    else:
        raise ValueError(f"unknown MPO form {form!r}")
    return RowMPO(w.copy(), F, G, P, K, form, s)


@dataclass
class UniformMPS:
    """Mixed-gauge uniform MPS ``(A_L, A_R, A_C, C)`` with tensors ``(chi, d, chi)``."""

    AL: np.ndarray
    AR: np.ndarray
    AC: np.ndarray
    C: np.ndarray
    schmidt: np.ndarray
    eigenvalue: float = float("nan")
    free_energy: float = float("nan")
    error: float = float("nan")
    iterations: int = 0
    converged: bool = False
    complex_flag: bool = False
    FL: np.ndarray | None = field(default=None, repr=False)
    FR: np.ndarray | None = field(default=None, repr=False)

    @property
    def chi(self) -> int:
        return self.AL.shape[0]

    def canonical_residual(self) -> float:
        chi = self.chi
        eye = np.eye(chi)
        l = np.einsum("asb,asc->bc", self.AL.conj(), self.AL)
        r = np.einsum("bsa,csa->bc", self.AR, self.AR.conj())
        mix = np.einsum("asb,bc->asc", self.AL, self.C) - self.AC
        return float(max(np.abs(l - eye).max(), np.abs(r - eye).max(), np.abs(mix).max()))


# ------------------------------------------------------------- contractions

def _phys(Mop, A):
    """``sum_b M[c, b] A[x, b, y]`` -> ``(c, x, y)``."""
    return np.einsum("cb,xby->cxy", Mop, A)


def left_map(FL, AL, mpo: RowMPO):
    """One layer of the left environment channel ``FL[bra, l, ket]``."""
    X = np.einsum("xly,cl->cxy", FL, mpo.G)
    bra = _phys(mpo.P, np.conj(AL)).transpose(0, 2, 1)  # (c, alpha, x)
    ket = _phys(mpo.K, AL)                              # (c, y, beta)
    Z = np.matmul(np.matmul(bra, X), ket)               # (c, alpha, beta)
    return np.einsum("cr,cxy->xry", mpo.F, Z)


def right_map(FR, AR, mpo: RowMPO):
    """One layer of the right environment channel ``FR[ket, l, bra]``."""
    X = np.einsum("yrx,cr->cyx", FR, mpo.F)
    bra = _phys(mpo.P, np.conj(AR)).transpose(0, 2, 1)  # (c, alpha', alpha)
    ket = _phys(mpo.K, AR)                              # (c, beta, beta')
    Z = np.matmul(np.matmul(ket, X), bra)               # (c, beta, alpha)
    return np.einsum("cl,cyx->ylx", mpo.G, Z)


def _dominant(matvec, n, v0, dtype, tol=1e-12, which="LM"):
    """Dominant eigenpair of a linear map (ARPACK with a dense fallback for tiny sizes)."""
    if n <= 24:
        M = np.column_stack([matvec(e) for e in np.eye(n, dtype=dtype)])
        vals, vecs = np.linalg.eig(M)
    else:
        op = LinearOperator((n, n), matvec=matvec, dtype=dtype)
        ncv = min(n, 24)
        if v0 is None:
            # ARPACK's own random start is not reproducible
            v0 = np.random.default_rng(n).standard_normal(n).astype(dtype)
        try:
            vals, vecs = eigs(op, k=1, which=which, v0=v0, tol=tol, ncv=ncv, maxiter=2000)
        except ArpackNoConvergence as exc:
            if len(exc.eigenvalues) == 0:
                raise
            vals, vecs = exc.eigenvalues, exc.eigenvectors
        except ArpackError:
            M = np.column_stack([matvec(e) for e in np.eye(n, dtype=dtype)])
            vals, vecs = np.linalg.eig(M)
    if which == "LR":
        i = int(np.argmax(vals.real))
    else:
        i = int(np.argmax(np.abs(vals)))
    lam, v = vals[i], vecs[:, i]
    # fix the arbitrary complex phase so that real problems stay real
    j = int(np.argmax(np.abs(v)))
    v = v * np.exp(-1j * np.angle(v[j]))
    return lam, v


def _realify(lam, v, dtype):
    if dtype == float:
        return float(np.real(lam)), np.real(v)
    return lam, v


def left_environment(AL, C, mpo: RowMPO, FL0=None, tol=1e-12):
    chi, D = AL.shape[0], mpo.D
    dtype = AL.dtype
    n = chi * D * chi
    v0 = None if FL0 is None else FL0.reshape(-1).astype(dtype)

    def mv(v):
        return left_map(v.reshape(chi, D, chi), AL, mpo).reshape(-1)

    lam, v = _dominant(mv, n, v0, dtype, tol)
    lam, v = _realify(lam, v, dtype)
    return lam, v.reshape(chi, D, chi)


def right_environment(AR, C, mpo: RowMPO, FR0=None, tol=1e-12):
    chi, D = AR.shape[0], mpo.D
    dtype = AR.dtype
    n = chi * D * chi
    v0 = None if FR0 is None else FR0.reshape(-1).astype(dtype)

    def mv(v):
        return right_map(v.reshape(chi, D, chi), AR, mpo).reshape(-1)

    lam, v = _dominant(mv, n, v0, dtype, tol)
    lam, v = _realify(lam, v, dtype)
    return lam, v.reshape(chi, D, chi)


def apply_hac(AC, FLG, FRF, mpo: RowMPO):
    """Effective centre-site map; ``FLG``/``FRF`` carry ``G``/``F`` absorbed."""
    out = np.matmul(np.matmul(FLG, _phys(mpo.K, AC)), FRF)  # (c, x, y)
    return np.einsum("ca,cxy->xay", mpo.P, out)


def apply_hc(C, FL, FR):
    left = FL.transpose(1, 0, 2)    # (l, x, y)
    right = FR.transpose(1, 0, 2)   # (l, z, w)
    return np.matmul(np.matmul(left, C), right).sum(axis=0)


def _polar_left(M):
    u, _, vh = np.linalg.svd(M, full_matrices=False)
    return u @ vh


def regauge(AC, C):
    """``A_L``, ``A_R`` from ``A_C``, ``C`` through polar decompositions."""
    chi, d, _ = AC.shape
    UAC_l = _polar_left(AC.reshape(chi * d, chi))
    UC_l = _polar_left(C)
    AL = (UAC_l @ UC_l.conj().T).reshape(chi, d, chi)
    UAC_r = _polar_left(AC.reshape(chi, d * chi).T).T  # right polar: AC = P U
    UC_r = _polar_left(C.T).T
    AR = (UC_r.conj().T @ UAC_r).reshape(chi, d, chi)
    return AL, AR


def mixed_canonical(A):
    """Bring a uniform tensor ``A`` to mixed gauge via fixed points of its transfer map."""
    chi, d, _ = A.shape
    # left fixed point l: sum A^* l A = eta l
    def lmv(v):
        l = v.reshape(chi, chi)
        return np.einsum("asb,ac,csd->bd", A.conj(), l, A).reshape(-1)

    def rmv(v):
        r = v.reshape(chi, chi)
        return np.einsum("asb,bd,csd->ac", A, r, A.conj()).reshape(-1)

    dtype = A.dtype
    eta, l = _dominant(lmv, chi * chi, None, complex if dtype == complex else float)
    _, r = _dominant(rmv, chi * chi, None, complex if dtype == complex else float)
    A = A / np.sqrt(abs(eta))
    l = l.reshape(chi, chi)
    r = r.reshape(chi, chi)
    l = 0.5 * (l + l.conj().T)
    r = 0.5 * (r + r.conj().T)
    l = l / np.trace(l)
    r = r / np.trace(r)
    if np.isrealobj(A):
        l, r = l.real, r.real
    wl, vl = np.linalg.eigh(l)
    wr, vr = np.linalg.eigh(r)
    wl = np.clip(wl, 1e-14, None)
    wr = np.clip(wr, 1e-14, None)
    Lh = (vl * np.sqrt(wl)) @ vl.conj().T  # l = Lh^+ Lh
    Rh = (vr * np.sqrt(wr)) @ vr.conj().T  # r = Rh Rh^+
    Lhi = (vl / np.sqrt(wl)) @ vl.conj().T
    Rhi = (vr / np.sqrt(wr)) @ vr.conj().T
    C = Lh @ Rh
    u, s, vh = np.linalg.svd(C)
    C = np.diag(s / np.linalg.norm(s))
    AL = np.einsum("ab,bsc,cd,de->ase", u.conj().T @ Lh, A, Lhi, u)
    AC = np.einsum("asb,bc->asc", AL, C)
    AL, AR = regauge(AC, C)
    return AL, AR, AC, C


def _symmetrise_start(A, d):
    """Average over single-flavor global flips applied to the physical index."""
    out = A.copy()
    k = 1
    idx = np.arange(d)
    while k < d:
        out = out + out[:, idx ^ k, :]
        k <<= 1
    return out


def random_mps(chi: int, d: int, seed: int = 0, dtype=float):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((chi, d, chi))
    A = _symmetrise_start(A, d) + 0.05 * rng.standard_normal((chi, d, chi))
    return mixed_canonical(A.astype(dtype))


def expand_mps(psi: "UniformMPS", chi: int, seed: int = 0):
    """Pad a converged MPS to a larger bond dimension (warm start for the next chi)."""
    old = psi.chi
    if chi < old:
        raise ValueError("cannot shrink through expand_mps")
    d = psi.AL.shape[1]
    rng = np.random.default_rng(seed)
    A = np.zeros((chi, d, chi), dtype=psi.AC.dtype)
    # use the symmetric gauge A = C^{1/2}-free form: A_L C works as a uniform tensor
    A[:old, :, :old] = psi.AL
    noise = 1e-3 * rng.standard_normal((chi, d, chi))
    A = A + noise.astype(A.dtype)
    return mixed_canonical(A)


def fixed_point_mps(mpo: RowMPO, chi: int, tol: float = 1e-10, max_iters: int = 5000,
                    seed: int = 0, init: tuple | None = None, min_iters: int = 3) -> UniformMPS:
    """Dominant uniform-MPS eigenvector of the row MPO by VUMPS.

    Parameters
    ----------
    mpo
        Row operator from :func:`build_row_mpo`.
    chi
        Bond dimension.
    tol
        Convergence threshold on ``max(|A_C - A_L C|, |A_C - C A_R|)``.
    init
        Optional ``(AL, AR, AC, C)`` warm start of the same ``chi``.

    Returns
    -------
    UniformMPS
        Converged (or best) fixed point with ``eigenvalue`` the per-site
        eigenvalue ``lambda_AC / lambda_C`` and ``free_energy = ln`` of it.
    """
    if chi < 1:
        raise ValueError("chi must be >= 1")
    d = mpo.d
    dtype = complex if np.iscomplexobj(mpo.P) or np.iscomplexobj(mpo.K) else float
    if init is None:
        AL, AR, AC, C = random_mps(chi, d, seed, dtype)
    else:
        AL, AR, AC, C = (np.asarray(x, dtype=dtype) for x in init)
    FL = FR = None
    err = np.inf
    lam_site = np.nan
    converged = False
    complex_flag = False
    it = 0
    eig_tol = 1e-3
    for it in range(1, max_iters + 1):
        lamL, FL = left_environment(AL, C, mpo, FL, tol=eig_tol)
        lamR, FR = right_environment(AR, C, mpo, FR, tol=eig_tol)
        # normalise so that the environments contract to one around C
        nrm = np.vdot(C, apply_hc(C, FL, FR))
        FR = FR / nrm
        FLG = np.einsum("xly,cl->cxy", FL, mpo.G)
        FRF = np.einsum("cr,yrx->cyx", mpo.F, FR)

        def hac(v):
            return apply_hac(v.reshape(chi, d, chi), FLG, FRF, mpo).reshape(-1)

        def hc(v):
            return apply_hc(v.reshape(chi, chi), FL, FR).reshape(-1)

        lac, vac = _dominant(hac, chi * d * chi, AC.reshape(-1), dtype, eig_tol, which="LR")
        lc, vc = _dominant(hc, chi * chi, C.reshape(-1), dtype, eig_tol, which="LR")
        if abs(np.imag(lac)) > 1e-10 * abs(lac) or abs(np.imag(lc)) > 1e-10 * abs(lc):
            complex_flag = True
        lac, vac = _realify(lac, vac, dtype)
        lc, vc = _realify(lc, vc, dtype)
        AC = vac.reshape(chi, d, chi)
        C = vc.reshape(chi, chi)
        AC = AC / np.linalg.norm(AC)
        C = C / np.linalg.norm(C)
        AL, AR = regauge(AC, C)
        errL = np.linalg.norm(AC - np.einsum("asb,bc->asc", AL, C))
        errR = np.linalg.norm(AC - np.einsum("ab,bsc->asc", C, AR))
        err = float(max(errL, errR))
        lam_site = lac / lc
        eig_tol = max(min(1e-3, err * 1e-2), 1e-14)
        if err < tol and it >= min_iters:
            converged = True
            break
    # final consistent environments and diagonal gauge
    s = np.linalg.svd(C, compute_uv=False)
    s = s / np.linalg.norm(s)
    if abs(np.imag(lam_site)) > 1e-10 * abs(lam_site):
        complex_flag = True
    lam = float(np.real(lam_site))
    fe = math.log(abs(lam)) if lam != 0 else -math.inf
    if lam < 0:
        complex_flag = True
    return UniformMPS(AL, AR, AC, C, s, lam, fe, err, it, converged, complex_flag, FL, FR)


def entanglement_entropy(psi: UniformMPS | np.ndarray) -> float:
    """``-sum lambda^2 ln lambda^2`` over the bond Schmidt spectrum."""
    s = psi.schmidt if isinstance(psi, UniformMPS) else np.asarray(psi, float)
    p = s**2
    p = p[p > 1e-300]
    p = p / p.sum()
    return float(-np.sum(p * np.log(p)))


def transfer_spectrum(psi: UniformMPS, k: int = 3) -> np.ndarray:
    """Leading eigenvalues (by magnitude) of the ``A_L`` transfer map."""
    AL = psi.AL
    chi = AL.shape[0]
    if chi == 1:
        val = np.einsum("asb,asb->", AL.conj(), AL)
        return np.array([val])

    def mv(v):
        x = v.reshape(chi, chi)
        return np.einsum("asb,ac,csd->bd", AL.conj(), x, AL).reshape(-1)

    n = chi * chi
    if n <= 64:
        M = np.column_stack([mv(e) for e in np.eye(n)])
        vals = np.linalg.eigvals(M)
    else:
        op = LinearOperator((n, n), matvec=mv, dtype=AL.dtype)
        vals = eigs(op, k=min(k, n - 2), which="LM", return_eigenvectors=False, tol=1e-12,
                    ncv=min(n, 40), v0=np.eye(chi).reshape(-1).astype(AL.dtype))
    order = np.argsort(-np.abs(vals), kind="stable")
    return vals[order][:k]


def mps_correlation_length(psi: UniformMPS, degeneracy_tol: float = 1e-10) -> float:
    """``-1 / ln|mu2 / mu1|`` from the MPS transfer map (``0`` for product states)."""
    vals = transfer_spectrum(psi, 3)
    if len(vals) < 2 or psi.chi == 1:
        return 0.0
    r = abs(vals[1]) / abs(vals[0])
    if r < 1e-300:
        return 0.0
    if 1 - r < degeneracy_tol:
        return math.inf
    return -1.0 / math.log(r)


def kappa(c: float) -> float:
    """Finite-entanglement exponent ``6 / (sqrt(12 c) + c)``."""
    return 6.0 / (math.sqrt(12.0 * c) + c)


@dataclass
class FESFit:
    """Finite-entanglement-scaling fit of ``S = (c/6) ln xi + const``."""

    chis: np.ndarray
    xis: np.ndarray
    entropies: np.ndarray
    c: float
    intercept: float
    residual: float
    c_from_chi: float
    kappa_pred: float
    kappa_fit: float
    window: tuple


def fit_central_charge(samples, window: tuple | None = None) -> FESFit:
    """Least-squares FES fit from ``(chi, xi, S)`` samples.

    The primary estimate is ``c = 6 * slope(S vs ln xi)``.  The secondary
    consistency check fits ``S vs ln chi``; its slope should equal
    ``c kappa(c) / 6``.  ``window`` selects a ``(chi_min, chi_max)`` range.
    """
    arr = sorted((float(c), float(x), float(s)) for c, x, s in samples)
    chis = np.array([a[0] for a in arr])
    xis = np.array([a[1] for a in arr])
    ss = np.array([a[2] for a in arr])
    if len(samples) != len(set(chis)):
        raise ValueError("chi values must be distinct")
    if list(chis) != [float(c) for c, _, _ in samples]:
        raise ValueError("samples must have strictly increasing chi")
    if window is not None:
        sel = (chis >= window[0]) & (chis <= window[1])
        chis, xis, ss = chis[sel], xis[sel], ss[sel]
    if len(chis) < 4:
        raise ValueError("need at least 4 samples")
    if not np.all(np.isfinite(xis)) or np.any(xis <= 0):
        raise ValueError("correlation lengths must be finite and positive")
    A = np.vstack([np.log(xis), np.ones_like(xis)]).T
    (slope, icpt), res, *_ = np.linalg.lstsq(A, ss, rcond=None)
    resid = float(np.sqrt(np.mean((A @ np.array([slope, icpt]) - ss) ** 2)))
    c = 6.0 * slope
    B = np.vstack([np.log(chis), np.ones_like(chis)]).T
    (slope_chi, _), *_ = np.linalg.lstsq(B, ss, rcond=None)
    kp = kappa(c) if c > 0 else float("nan")
    kf = 6.0 * slope_chi / c if c != 0 else float("nan")
    return FESFit(chis, xis, ss, float(c), float(icpt), resid, float(6 * slope_chi),
                  float(kp), float(kf), tuple(window) if window else (chis[0], chis[-1]))


@dataclass
class LadderRow:
    chi: int
    xi: float
    S: float
    free_energy: float
    iters: int
    converged: bool
    error: float


def chi_ladder(mpo: RowMPO, chis=CHI_LADDER, tol: float = 1e-10, max_iters: int = 5000,
               seed: int = 0, warm_start: bool = True, init=None):
    """Run the fixed-point solver along a chi ladder with optional warm starts."""
    rows = []
    states = []
    prev = init
    for chi in chis:
        start = None
        if warm_start and prev is not None:
            if prev.chi == chi:
                start = (prev.AL, prev.AR, prev.AC, prev.C)
            elif prev.chi < chi:
                start = expand_mps(prev, chi, seed)
        psi = fixed_point_mps(mpo, chi, tol, max_iters, seed, start)
        rows.append(LadderRow(chi, mps_correlation_length(psi), entanglement_entropy(psi),
                              psi.free_energy, psi.iterations, psi.converged, psi.error))
        states.append(psi)
        prev = psi
    return rows, states


def onsager_free_energy(J: float) -> float:
    """``ln Z / N`` of the square-lattice Ising model ``exp(J s s')``."""
    from scipy.integrate import quad

    k = 2 * math.sinh(2 * J) / math.cosh(2 * J) ** 2

    def f(th):
        return math.log(0.5 * (1 + math.sqrt(max(0.0, 1 - (k * math.sin(th)) ** 2))))

    val, _ = quad(f, 0, math.pi, limit=400, epsabs=1e-14, epsrel=1e-14)
    return math.log(2 * math.cosh(2 * J)) + val / (2 * math.pi)
