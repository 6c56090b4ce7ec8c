"""Dense checks of the channel algebra on a few qubits.

Doubled operators act on ``H (x) Hb`` with the ``n`` ket qubits first and the
``n`` conjugate qubits second.  Toric-code states are built in the ``Z`` basis
as ``|Psi0> ~ sum_g g|0...0>`` over products ``g`` of plaquette ``X`` loops, so
``A_v = prod Z`` and ``B_p = prod X`` both equal ``+1``; the classical spins of
the loop representation live on plaquettes.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .couplings import lambda_of_p
from .lattice import TorusLattice
from .models import omega

I2 = np.eye(2)
X = np.array([[0.0, 1.0], [1.0, 0.0]])
Y = np.array([[0.0, -1j], [1j, 0.0]])
Z = np.array([[1.0, 0.0], [0.0, -1.0]])

MAX_CHANNEL_EDGES = 4
MAX_STATE_EDGES = 8
RESIDUAL_TOL = 1e-12


def sigma(theta: float) -> np.ndarray:
    """``cos(theta) Z + sin(theta) X``."""
    return math.cos(theta) * Z + math.sin(theta) * X


@dataclass
class DoubledOperator:
    """Dense operator on ``H (x) Hb`` for ``n_edges`` qubits per copy."""

    matrix: np.ndarray
    n_edges: int
    hermitian: bool | None = None

    def __post_init__(self):
        dim = 4**self.n_edges
        if self.matrix.shape != (dim, dim):
            raise ValueError(f"expected a {dim}x{dim} matrix")
        if self.hermitian:
            if np.linalg.norm(self.matrix - self.matrix.conj().T) > 1e-12 * max(
                1.0, np.linalg.norm(self.matrix)
            ):
                raise ValueError("operator flagged Hermitian is not")

    def __matmul__(self, other: "DoubledOperator") -> "DoubledOperator":
        return DoubledOperator(self.matrix @ other.matrix, self.n_edges)

    def dagger(self) -> "DoubledOperator":
        return DoubledOperator(self.matrix.conj().T, self.n_edges)


def _embed(single: list, n: int) -> np.ndarray:
    out = np.ones((1, 1))
    for m in single:
        out = np.kron(out, m)
    return out


def build_edge_channel(p: float, theta: float = math.pi / 4, n_edges: int = 1,
                       kraus: np.ndarray | None = None) -> DoubledOperator:
    """``prod_e [(1-p) I + p s_e (x) conj(s_e)]`` with ``s = cos(theta) Z + sin(theta) X``.

    ``kraus`` overrides ``s`` with an arbitrary single-qubit operator.
    """
    if n_edges > MAX_CHANNEL_EDGES:
        raise ValueError(f"dense channel limited to {MAX_CHANNEL_EDGES} edges")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p out of [0, 1]")
    s = sigma(theta) if kraus is None else np.asarray(kraus)
    n = n_edges
    total = np.eye(4**n, dtype=complex)
    for e in range(n):
        ket = [I2] * n
        bra = [I2] * n
        ket[e] = s
        bra[e] = s.conj()
        term = np.kron(_embed(ket, n), _embed(bra, n))
        total = total @ ((1 - p) * np.eye(4**n) + p * term)
    if np.all(np.abs(total.imag) < 1e-15):
        total = total.real
    return DoubledOperator(total, n)


def compose_check(p: float, theta: float = math.pi / 4) -> float:
    """Frobenius norm of ``E(p)^+ E(p) - E(2p(1-p))`` on one edge."""
    e = build_edge_channel(p, theta, 1)
    e2 = build_edge_channel(2 * p * (1 - p), theta, 1)
    return float(np.linalg.norm((e.dagger() @ e).matrix - e2.matrix))


def partial_transpose(op: DoubledOperator, factor: str = "H") -> np.ndarray:
    """Transpose on the ket (``"H"``) or conjugate (``"Hb"``) factor in the computational basis."""
    D = 2**op.n_edges
    t = op.matrix.reshape(D, D, D, D)  # (h, hb, h', hb')
    if factor == "H":
        t = t.transpose(2, 1, 0, 3)
    elif factor == "Hb":
        t = t.transpose(0, 3, 2, 1)
    else:
        raise ValueError("factor must be 'H' or 'Hb'")
    return t.reshape(D * D, D * D)


def partial_transpose_check(op: DoubledOperator) -> float:
    """``max(||op^{T_H} - op||, ||op^{T_Hb} - op||)`` in Frobenius norm."""
    return float(max(
        np.linalg.norm(partial_transpose(op, "H") - op.matrix),
        np.linalg.norm(partial_transpose(op, "Hb") - op.matrix),
    ))


def kraus_set(p: float, theta: float, n_edges: int) -> list[np.ndarray]:
    single = [math.sqrt(1 - p) * I2, math.sqrt(p) * sigma(theta)]
    return [_embed(list(c), n_edges) for c in itertools.product(single, repeat=n_edges)]


def kraus_permutation_check(p: float, theta: float = math.pi / 4, n_edges: int = 2) -> bool:
    """Conjugating the Kraus set by ``prod_e s_e`` permutes it up to phases."""
    ks = kraus_set(p, theta, n_edges)
    u = _embed([sigma(theta)] * n_edges, n_edges)
    used = set()
    for k in ks:
        img = u @ k @ u.conj().T
        hit = None
        for j, k2 in enumerate(ks):
            if j in used:
                continue
            ov = np.vdot(k2, img)
            if abs(abs(ov) - np.linalg.norm(k2) * np.linalg.norm(img)) < 1e-12 and \
                    abs(np.linalg.norm(k2) - np.linalg.norm(img)) < 1e-12:
                hit = j
                break
        if hit is None:
            return False
        used.add(hit)
    return True


# ------------------------------------------------------------ dense states

def apply_single(state: np.ndarray, op: np.ndarray, e: int, n: int) -> np.ndarray:
    t = state.reshape((2,) * n)
    t = np.tensordot(op, t, axes=([1], [e]))
    return np.moveaxis(t, 0, e).reshape(-1)


def loop_group_states(lat: TorusLattice) -> np.ndarray:
    """Distinct ``Z``-basis bit patterns ``g|0>`` for ``g`` in the plaquette-loop group."""
    n = lat.n_edges
    P = lat.n_plaquettes
    plaq_masks = []
    for y in range(lat.Ly):
        for x in range(lat.Lx):
            m = 0
            for e in lat.plaquette_edges(x, y):
                m ^= 1 << (n - 1 - e)
            plaq_masks.append(m)
    states = set()
    for bits in range(2**P):
        m = 0
        for k in range(P):
            if (bits >> k) & 1:
                m ^= plaq_masks[k]
        states.add(m)
    return np.array(sorted(states))


def toric_code_state(lat: TorusLattice) -> np.ndarray:
    """Normalised ``sum_g g|0>`` as a dense vector (edge 0 is the leading qubit)."""
    n = lat.n_edges
    if n > MAX_STATE_EDGES:
        raise ValueError(f"dense states limited to {MAX_STATE_EDGES} edges")
    psi = np.zeros(2**n)
    psi[loop_group_states(lat)] = 1.0
    return psi / np.linalg.norm(psi)


def apply_channel_to_rho(rho: np.ndarray, p: float, op: np.ndarray, n: int) -> np.ndarray:
    """``prod_e [(1-p) rho + p op_e rho op_e^+]``."""
    dim = 2**n
    for e in range(n):
        full = _embed([op if k == e else I2 for k in range(n)], n)
        rho = (1 - p) * rho + p * full @ rho @ full.conj().T
    return rho.reshape(dim, dim)


def plaquette_bonds(lat: TorusLattice) -> list[tuple[int, int]]:
    return [lat.edge_plaquettes(e) for e in range(lat.n_edges)]


def ising_rep_sum(lat: TorusLattice, g) -> float:
    """``sum_{z,t} prod_e omega(z_p z_p', t_p t_p'; g_e)`` with spins on plaquettes."""
    P = lat.n_plaquettes
    bonds = plaquette_bonds(lat)
    g = np.broadcast_to(np.asarray(g, float), (lat.n_edges,))
    cfg = np.array(list(itertools.product((1, -1), repeat=2 * P)), float)
    zs, ts = cfg[:, :P], cfg[:, P:]
    w = np.ones(len(cfg))
    for e, (a, b) in enumerate(bonds):
        w *= omega(zs[:, a] * zs[:, b], ts[:, a] * ts[:, b], g[e])
    return float(w.sum())


@dataclass
class ConvexDecomposition:
    probabilities: np.ndarray  # P_m indexed by sign patterns (bit e set => m_e = -1)
    formula_probabilities: np.ndarray
    overlaps: np.ndarray
    classical_renyi2: float  # -ln sum P_m^2
    purity: float  # tr rho^2 from applying the channel to rho

    @property
    def total(self) -> float:
        return float(self.probabilities.sum())

    @property
    def sum_p2(self) -> float:
        return float(np.sum(self.probabilities**2))

    @property
    def off_diagonal(self) -> float:
        g = self.overlaps - np.diag(np.diag(self.overlaps))
        return float(np.max(np.abs(g)))

    @property
    def formula_residual(self) -> float:
        return float(np.max(np.abs(self.probabilities - self.formula_probabilities)))


def convex_decomposition(p: float, lat: TorusLattice, theta: float = math.pi / 4) -> ConvexDecomposition:
    """Kraus re-decomposition ``K_{e,+-} = (sqrt(1-p) I +- sqrt(p) s_e)/sqrt2`` of the channel.

    Returns ``P_m = <psi_m|psi_m>`` for all sign patterns, the same
    probabilities from the loop/spin representation
    ``P_m = 2^-N Z[omega(m mu)] / Z[omega(0)]`` with ``mu = 2 sqrt(p(1-p))``,
    the overlap matrix ``<psi_m'|psi_m>`` and ``tr rho^2`` of the decohered state.
    """
    n = lat.n_edges
    if n > MAX_STATE_EDGES:
        raise ValueError(f"dense states limited to {MAX_STATE_EDGES} edges")
    s = sigma(theta)
    psi0 = toric_code_state(lat)
    kp = (math.sqrt(1 - p) * I2 + math.sqrt(p) * s) / math.sqrt(2)
    km = (math.sqrt(1 - p) * I2 - math.sqrt(p) * s) / math.sqrt(2)
    n_pat = 2**n
    # psi_m for every pattern: apply K_{+} or K_{-} edge by edge on a stacked array
    stack = psi0.reshape((1,) + (2,) * n)
    for e in range(n):
        a = np.moveaxis(np.tensordot(kp, stack, axes=([1], [e + 1])), 0, e + 1)
        b = np.moveaxis(np.tensordot(km, stack, axes=([1], [e + 1])), 0, e + 1)
        stack = np.stack([a, b], axis=1).reshape((-1,) + (2,) * n)
    psis = stack.reshape(n_pat, -1)
    # pattern index built with edge 0 as the most significant bit; reorder to bit e
    order = np.array([int(format(k, f"0{n}b")[::-1], 2) for k in range(n_pat)])
    psis = psis[np.argsort(order)]
    probs = np.einsum("ij,ij->i", psis.conj(), psis).real
    overlaps = psis.conj() @ psis.T
    mu = 2 * math.sqrt(p * (1 - p))
    z0 = ising_rep_sum(lat, 0.0)
    formula = np.empty(n_pat)
    for m in range(n_pat):
        signs = np.array([-1.0 if (m >> e) & 1 else 1.0 for e in range(n)])
        formula[m] = ising_rep_sum(lat, signs * mu) / z0 / 2**n
    rho = np.outer(psi0, psi0.conj())
    rho = apply_channel_to_rho(rho, p, s, n)
    purity = float(np.real(np.trace(rho @ rho)))
    sp2 = float(np.sum(probs**2))
    return ConvexDecomposition(probs, formula, overlaps, -math.log(sp2), purity)


def chamon_state(lat: TorusLattice, h: float) -> np.ndarray:
    """Normalised ``prod_e (1 + h Z_e) |Psi0>``."""
    n = lat.n_edges
    psi = toric_code_state(lat)
    diag = np.ones(1)
    for _ in range(n):
        diag = np.kron(diag, np.array([1 + h, 1 - h]))
    psi = diag * psi
    return psi / np.linalg.norm(psi)


def chamon_purity(lat: TorusLattice, h: float, p: float) -> float:
    """``tr rho^2`` for the phase-flipped perturbed state, by dense evolution."""
    psi = chamon_state(lat, h)
    rho = apply_channel_to_rho(np.outer(psi, psi), p, Z, lat.n_edges)
    return float(np.real(np.trace(rho @ rho)))


def channel_report(p_values=None, theta: float = math.pi / 4) -> list[dict]:
    """JSON-ready ``{check_name, residual, pass}`` rows for the channel algebra."""
    from .pauli import emd_identities  # local import keeps module import light

    p_values = list(p_values) if p_values is not None else list(np.linspace(0.0, 0.5, 20))
    rows = []
    for p in p_values:
        r = compose_check(p, theta)
        rows.append({"check_name": f"compose p={p:.6g}", "residual": r, "pass": r < RESIDUAL_TOL})
        e = build_edge_channel(p, theta, 2)
        r = partial_transpose_check(e.dagger() @ e)
        rows.append({"check_name": f"partial_transpose p={p:.6g}", "residual": r,
                     "pass": r < RESIDUAL_TOL})
    ey = build_edge_channel(0.3, kraus=Y, n_edges=1)
    r = partial_transpose_check(ey.dagger() @ ey)
    rows.append({"check_name": "partial_transpose Y-kraus (must break)", "residual": r,
                 "pass": r > 1e-3})
    lat = TorusLattice(4, 4)
    path = lat.lattice_path([(0, 0), (1, 0), (2, 0), (2, 1)])
    ident = emd_identities(lat, path)
    for k, v in ident.items():
        rows.append({"check_name": f"emd {k}", "residual": 0.0 if v else 1.0, "pass": bool(v)})
    cd = convex_decomposition(0.5, TorusLattice(2, 2))
    rows.append({"check_name": "convex sum P_m", "residual": abs(cd.total - 1),
                 "pass": abs(cd.total - 1) < 1e-12})
    rows.append({"check_name": "convex purity", "residual": abs(cd.purity - cd.sum_p2),
                 "pass": abs(cd.purity - cd.sum_p2) < 1e-10})
    rows.append({"check_name": "convex orthogonality", "residual": cd.off_diagonal,
                 "pass": cd.off_diagonal < 1e-10})
    return rows


def lambda_check(p: float) -> float:
    """``E(p)^+E(p)`` rescaled: ``1 + lam s (x) s`` with ``lam = p'/(1-p')``."""
    pp = 2 * p * (1 - p)
    return abs(pp / (1 - pp) - lambda_of_p(p))
