"""Classical spin models obtained from the decohered toric code.

Every model is a square-lattice model of ``n`` Ising flavors per site with a
single nearest-neighbour edge weight ``W[a, b]``.  Local states are integers
``a`` in ``[0, 2**n)``; bit ``k`` of ``a`` set means flavor ``k`` is ``-1``.
All weights here depend on the two sites only through the bond products
``s_k s_k'``, i.e. ``W[a, b] = W[0, a ^ b]``, which is the statement that each
flavor can be flipped globally on its own.

Lattice conventions: site ``(x, y)`` with ``x`` around the cylinder (width
``Lx``) and ``y`` along the transfer direction.  Edge ``("h", x, y)`` joins
``(x, y)``-``(x+1, y)`` and edge ``("v", x, y)`` joins ``(x, y)``-``(x, y+1)``.
Dual sites (plaquettes) ``(x, y)`` have lower-left corner ``(x, y)``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .couplings import (
    ATCouplings,
    chamon_couplings,
    general_rhs,
    perturbed_params,
)

Edge = tuple  # ("h" | "v", x, y)

SQRT2 = math.sqrt(2.0)


def spin_table(n: int) -> np.ndarray:
    """``(2**n, n)`` array of +-1 spins for every local state."""
    a = np.arange(2**n)[:, None]
    bits = (a >> np.arange(n)[None, :]) & 1
    return (1 - 2 * bits).astype(float)


def bond_products(n: int) -> np.ndarray:
    """``(2**n, 2**n, n)`` array of ``s_k s_k'`` for every pair of local states."""
    s = spin_table(n)
    return s[:, None, :] * s[None, :, :]


def parity(mask: int, states: np.ndarray) -> np.ndarray:
    """``prod_{k in mask} s_k`` for an array of local states."""
    m = np.bitwise_and(states, mask)
    out = np.ones(m.shape)
    for k in range(int(mask).bit_length()):
        out = np.where((m >> k) & 1, -out, out)
    return out


@dataclass(frozen=True, eq=False)
class StatMechModel:
    """Square-lattice model defined by a nearest-neighbour weight table.

    Parameters
    ----------
    n_flavors
        Ising flavors per site; the local state space has ``2**n_flavors``
        entries.
    weight
        ``(d, d)`` edge weight table ``W[a, b]``.
    Lx, Ly
        Width around the cylinder and length along the transfer direction;
        ``None`` means not fixed (set by the engine).
    eta
        Sorted tuple of ``(edge, mask)``: on those edges the masked flavor bond
        terms change sign, ``W_e[a, b] = W[a, b ^ mask]``.
    """

    n_flavors: int
    weight: np.ndarray
    family: str = "custom"
    params: dict = field(default_factory=dict)
    Lx: int | None = None
    Ly: int | None = None
    eta: tuple = ()
    flavor_names: tuple = ()

    def __post_init__(self):
        w = np.array(self.weight, dtype=float)
        d = 2**self.n_flavors
        if w.shape != (d, d):
            raise ValueError(f"weight must be {d}x{d}, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weight", w)
        if not self.flavor_names:
            object.__setattr__(self, "flavor_names", tuple(f"s{k}" for k in range(self.n_flavors)))

    @property
    def d(self) -> int:
        return 2**self.n_flavors

    @property
    def sign_indefinite(self) -> bool:
        return bool(np.any(self.weight < 0))

    @property
    def has_zero_weights(self) -> bool:
        return bool(np.any(self.weight == 0))

    def with_size(self, Lx: int | None = None, Ly: int | None = None) -> "StatMechModel":
        return replace(self, Lx=Lx, Ly=Ly)

    def edge_mask(self, edge: Edge) -> int:
        for e, m in self.eta:
            if e == edge:
                return m
        return 0

    def edge_weight(self, edge: Edge) -> np.ndarray:
        return flip_table(self.weight, self.edge_mask(edge))

    def flavor_mask(self, names) -> int:
        mask = 0
        for nm in names:
            if isinstance(nm, (int, np.integer)):
                k = int(nm)
            else:
                k = self.flavor_names.index(nm)
            if not 0 <= k < self.n_flavors:
                raise ValueError(f"flavor {nm!r} absent from a {self.n_flavors}-flavor model")
            mask |= 1 << k
        return mask

    def describe(self) -> dict:
        return {
            "family": self.family,
            "flavors": self.n_flavors,
            "flavor_names": list(self.flavor_names),
            "couplings": {k: _jsonable(v) for k, v in self.params.items()},
            "eta_edges": [[list(e), m] for e, m in self.eta],
            "lattice": {"Lx": self.Lx, "Ly": self.Ly},
        }

    def to_json(self) -> str:
        return json.dumps(self.describe(), sort_keys=True)


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def flip_table(w: np.ndarray, mask: int) -> np.ndarray:
    """``W[a, b ^ mask]``: reverse the sign of the masked bond terms."""
    if mask == 0:
        return w
    d = w.shape[0]
    if mask >= d:
        raise ValueError(f"mask {mask} references absent flavors")
    return w[:, np.arange(d) ^ mask]


def flip_invariance_residual(w: np.ndarray) -> float:
    """Largest change of the table under any single-flavor global flip."""
    d = w.shape[0]
    idx = np.arange(d)
    res = 0.0
    k = 1
    while k < d:
        res = max(res, float(np.max(np.abs(w[np.ix_(idx ^ k, idx ^ k)] - w))))
        k <<= 1
    return res


def ising_model(J: float, Lx=None, Ly=None) -> StatMechModel:
    """Single-flavor Ising model ``exp(J s s')``."""
    u = bond_products(1)[..., 0]
    return StatMechModel(1, np.exp(J * u), "ising", {"J": J}, Lx, Ly, flavor_names=("s",))


def onsager_critical_coupling() -> float:
    return 0.5 * math.log1p(math.sqrt(2.0))


def at_weight(c: ATCouplings) -> np.ndarray:
    """AT table ``exp[K(ss'+tt') + K4 ss'tt']`` with flagged infinities as constraints.

    An infinite coupling locks the corresponding bond product to ``+1``; the
    divergent constant ``exp(K4)`` (or ``exp(2K + K4)``) is dropped.
    """
    bp = bond_products(2)
    u, v = bp[..., 0], bp[..., 1]
    uv = u * v
    if c.K_infinite:
        return ((u > 0) & (v > 0)).astype(float)
    if c.K4_infinite:
        return np.where(uv > 0, np.exp(c.K * (u + v)), 0.0)
    return np.exp(c.K * (u + v) + c.K4 * uv)


def at_model(c: ATCouplings, Lx=None, Ly=None) -> StatMechModel:
    """Isotropic Ashkin-Teller model with flavors ``(s, tau)``."""
    return StatMechModel(
        2, at_weight(c), "at", {"K": c.K, "K4": c.K4}, Lx, Ly, flavor_names=("s", "tau")
    )


def omega(u, v, g: float):
    """Single-copy weight ``sqrt2 + g + g(u + v) + (sqrt2 - g) u v`` of the bond products."""
    return SQRT2 + g + g * (u + v) + (SQRT2 - g) * u * v


def coupled_weight(h: float, p: float) -> np.ndarray:
    pp = perturbed_params(h, p)
    hp = pp.h_prime
    bp = bond_products(4)
    z, t, zb, tb = (bp[..., k] for k in range(4))
    w = omega(z, t, hp) * omega(zb, tb, hp)
    if pp.f != 0.0:
        w = w + pp.f * omega(z, t, 1.0 / hp) * omega(zb, tb, 1.0 / hp)
    return w


def coupled_model(h: float, p: float, Lx=None, Ly=None) -> StatMechModel:
    """Four-flavor model ``(z, t, zb, tb)`` of the perturbed, decohered toric code.

    Edge weight ``w(h') wb(h') + f w(1/h') wb(1/h')`` with
    ``w(g) = sqrt2 + g + g(zz' + tt') + (sqrt2 - g) zz'tt'``.
    """
    if h <= 0.0:
        raise ValueError("coupled_model needs h > 0; use at_model for h = 0")
    pp = perturbed_params(h, p)
    return StatMechModel(
        4,
        coupled_weight(h, p),
        "coupled",
        {"h": h, "p": p, "h_prime": pp.h_prime, "f": pp.f},
        Lx,
        Ly,
        flavor_names=("z", "t", "zb", "tb"),
    )


def nflavor_weight(K: float, K4: float, n: int) -> np.ndarray:
    """``exp sum_s [K u_s + (K4/2) u_s u_{s+1}]`` on the bond products ``u_s``."""
    bp = bond_products(n)
    expo = np.zeros(bp.shape[:2])
    locked = np.zeros(bp.shape[:2], dtype=bool)
    for s in range(n):
        us = bp[..., s]
        un = bp[..., (s + 1) % n]
        if math.isinf(K):
            locked |= us < 0
        else:
            expo += K * us
        if math.isinf(K4):
            locked |= us * un < 0
        else:
            expo += 0.5 * K4 * us * un
    return np.where(locked, 0.0, np.exp(expo))


def nflavor_model(h: float, p: float, n: int, Lx=None, Ly=None) -> StatMechModel:
    """``n``-flavor Ising model for ``tr rho^n`` of the phase-flipped perturbed state.

    Each flavor is the domain-wall description of one replica's loop gas;
    a loop of length ``|g|`` weighs ``exp(-2K|g|)`` and two neighbouring
    replicas differing on ``|g g'|`` edges weigh ``exp(-K4 |g g'|)``.  With
    ``|g| = sum_e (1 - u)/2`` this is two-spin strength ``K`` and four-spin
    strength ``K4/2`` per neighbouring pair; for ``n = 2`` both pair terms
    coincide and the model is the AT model at ``(K, K4)``.
    """
    if n < 2:
        raise ValueError("nflavor_model needs n >= 2")
    K, K4 = chamon_couplings(h, p)
    return StatMechModel(
        n,
        nflavor_weight(K, K4, n),
        "nflavor",
        {"h": h, "p": p, "n": n, "K": K, "K4": K4},
        Lx,
        Ly,
        flavor_names=tuple(f"sigma{k + 1}" for k in range(n)),
    )


def fixed_point_weight(p: float, theta: float) -> np.ndarray:
    """Four-flavor table of the fixed-point toric code under the angle-``theta`` channel.

    Terms odd in the ``X Zb`` cross products of the channel drop out of the
    partition function and are omitted.  The table vanishes unless
    ``zz' tt' zbzb' tbtb' = +1``.
    """
    A, B = general_rhs(p, theta)
    bp = bond_products(4)
    z, t, zb, tb = (bp[..., k] for k in range(4))
    return (
        1.0
        + z * t * zb * tb
        + B * (t * z + tb * zb)
        + A * (t * tb + z * zb + t * zb + tb * z)
    )


def fixed_point_model(p: float, theta: float, Lx=None, Ly=None) -> StatMechModel:
    return StatMechModel(
        4,
        fixed_point_weight(p, theta),
        "fixed-point",
        {"p": p, "theta": theta},
        Lx,
        Ly,
        flavor_names=("z", "t", "zb", "tb"),
    )


# reduced variables s = z zb, tau = t zb; tb is fixed by the edge constraint
_Z, _T, _ZB, _TB = 1, 2, 4, 8


def reduce_to_at(m: StatMechModel, tol: float = 1e-12) -> StatMechModel:
    """Eliminate ``tb`` from a four-flavor table obeying ``zz'tt'zbzb'tbtb' = 1``.

    Returns the two-flavor ``(s, tau)`` model whose partition function is
    ``Z_4 = 2 * 2**N * Z_2`` on a lattice of ``N`` sites.  Raises if the table
    violates the constraint or depends on more than ``(ss', tau tau')``.
    """
    if m.n_flavors != 4:
        raise ValueError("reduce_to_at needs a four-flavor model")
    w = m.weight[0]  # W[0, b] as a function of the bond state b
    bp = bond_products(4)[0]
    prod = np.prod(bp, axis=1)
    scale = float(np.max(np.abs(w)))
    if np.any(np.abs(w[prod < 0]) > tol * scale):
        raise ValueError("table violates the zz'tt'zbzb'tbtb' = 1 constraint")
    red = np.full(4, np.nan)
    for b in range(16):
        if prod[b] < 0:
            continue
        u, v, ub = bp[b, 0], bp[b, 1], bp[b, 2]
        ss, tt = u * ub, v * ub
        r = (0 if ss > 0 else 1) | (0 if tt > 0 else 2)
        if np.isnan(red[r]):
            red[r] = w[b]
        elif abs(red[r] - w[b]) > tol * scale:
            raise ValueError("table depends on more than the reduced bond products")
    idx = np.arange(4)
    w2 = red[np.bitwise_xor.outer(idx, idx)]
    eta = tuple((e, reduce_disorder_mask(mask)) for e, mask in m.eta)
    return StatMechModel(
        2, w2, m.family + "-reduced", dict(m.params), m.Lx, m.Ly, eta, ("s", "tau")
    )


def reduce_order_mask(mask4: int) -> int:
    """Four-flavor order insertion ``z^a t^b zb^c tb^e`` in reduced variables.

    ``tb`` equals ``z t zb`` up to a global sign that cancels in two-point
    functions, and ``s^al tau^be = z^al t^be zb^(al+be)``.
    """
    a = bool(mask4 & _Z) ^ bool(mask4 & _TB)
    b = bool(mask4 & _T) ^ bool(mask4 & _TB)
    c = bool(mask4 & _ZB) ^ bool(mask4 & _TB)
    if c != (a ^ b):
        raise ValueError(f"order mask {mask4:#x} is not expressible through s, tau")
    return int(a) | (int(b) << 1)


def reduce_disorder_mask(mask4: int) -> int:
    """Four-flavor bond-sign flip in reduced variables (even masks only)."""
    if bin(mask4).count("1") % 2:
        raise ValueError(f"disorder mask {mask4:#x} breaks the edge constraint")
    # the reduced table only sees ss' = zz' zbzb' and tau tau' = tt' zbzb'
    dz, dt, dzb = bool(mask4 & _Z), bool(mask4 & _T), bool(mask4 & _ZB)
    return int(dz ^ dzb) | (int(dt ^ dzb) << 1)


# ---------------------------------------------------------------- dual paths

def dual_edge_ends(edge: Edge, Lx: int, Ly: int | None):
    """The two plaquettes separated by ``edge``."""
    kind, x, y = edge
    wrap_y = (lambda q: q % Ly) if Ly else (lambda q: q)
    if kind == "h":
        return (x % Lx, wrap_y(y - 1)), (x % Lx, wrap_y(y))
    if kind == "v":
        return ((x - 1) % Lx, wrap_y(y)), (x % Lx, wrap_y(y))
    raise ValueError(f"bad edge {edge!r}")


def path_endpoints(path, Lx: int, Ly: int | None = None):
    """Odd-degree plaquettes of a crossed-edge set; raises if not a connected path."""
    deg: dict = {}
    adj: dict = {}
    for e in path:
        p, q = dual_edge_ends(e, Lx, Ly)
        for a, b in ((p, q), (q, p)):
            deg[a] = deg.get(a, 0) + 1
            adj.setdefault(a, []).append(b)
    if not deg:
        return ()
    ends = tuple(sorted(k for k, v in deg.items() if v % 2))
    start = next(iter(adj))
    seen = {start}
    stack = [start]
    while stack:
        a = stack.pop()
        for b in adj[a]:
            if b not in seen:
                seen.add(b)
                stack.append(b)
    if len(seen) != len(adj):
        raise ValueError("dual path is not connected")
    return ends


def column_path(x: int, y0: int, r: int) -> tuple:
    """Straight dual path from plaquette ``(x, y0)`` to ``(x, y0 + r)``."""
    return tuple(("h", x, y) for y in range(y0 + 1, y0 + r + 1))


def detour_path(x: int, y0: int, r: int, shift: int = 1) -> tuple:
    """Homotopic deformation of :func:`column_path` bulging ``shift`` columns right.

    Requires ``r >= 2``; the path leaves column ``x`` above ``y0``, runs up
    column ``x + shift`` and returns to ``x`` one row below ``y0 + r``.
    """
    if r < 2 or shift < 1:
        raise ValueError("detour needs r >= 2 and shift >= 1")
    path = []
    for k in range(1, shift + 1):
        path.append(("v", x + k, y0))
    path.extend(("h", x + shift, y) for y in range(y0 + 1, y0 + r))
    for k in range(shift, 0, -1):
        path.append(("v", x + k, y0 + r - 1))
    path.append(("h", x, y0 + r))
    return tuple(path)


def insert_disorder_line(m: StatMechModel, path, mask: int | tuple | list) -> StatMechModel:
    """Flip the sign of the masked flavor bond terms on every edge crossed by ``path``.

    Applying the same line twice restores the model.
    """
    if not isinstance(mask, (int, np.integer)):
        mask = m.flavor_mask(mask)
    mask = int(mask)
    if mask >= m.d or mask < 0:
        raise ValueError(f"mask {mask} references absent flavors")
    path = tuple(path)
    if path and m.Lx is not None:
        path_endpoints(path, m.Lx, m.Ly)
    if mask == 0 or not path:
        return m
    eta = dict(m.eta)
    for e in path:
        eta[e] = eta.get(e, 0) ^ mask
    eta = tuple(sorted((e, v) for e, v in eta.items() if v))
    return replace(m, eta=eta)


def all_edges(Lx: int, Ly: int):
    for y in range(Ly):
        for x in range(Lx):
            yield ("h", x, y)
            yield ("v", x, y)


def canonical_edge(edge: Edge, Lx: int, Ly: int | None) -> Edge:
    kind, x, y = edge
    return (kind, x % Lx, y % Ly if Ly else y)


def cyclic_relabel(w: np.ndarray, n: int, shift: int = 1) -> np.ndarray:
    """Table with flavors relabelled ``k -> k + shift (mod n)``."""
    d = 2**n
    perm = np.zeros(d, dtype=int)
    for a in range(d):
        b = 0
        for k in range(n):
            if (a >> k) & 1:
                b |= 1 << ((k + shift) % n)
        perm[a] = b
    return w[np.ix_(perm, perm)]


def kramers_wannier_at(c: ATCouplings) -> ATCouplings:
    """Dual AT couplings from the two-flavor Fourier transform of the edge weight.

    The dual table has characters ``W^(k)`` for ``k`` in ``Z2 x Z2``; the dual
    couplings follow from their ratios.  Self-dual couplings map to themselves.
    """
    w = at_weight(c)[0]  # as a function of the bond state
    chi = np.array([[1, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]], float)
    hat = chi @ w  # dual weights for dual bond states (++, -+, +-, --)
    if np.any(hat <= 0):
        raise ValueError("dual weights not positive")
    # hat = C exp[K*(u+v) + K4* uv] evaluated at (u, v) = (+,+), (-,+), (+,-), (-,-)
    Kd = 0.25 * math.log(hat[0] / hat[3])
    K4d = 0.25 * math.log(hat[0] * hat[3] / (hat[1] * hat[2]))
    return ATCouplings(Kd, K4d)


def anyon_labels():
    return ["I", "e", "m", "f"]


@dataclass(frozen=True)
class ObservableSpec:
    """Two-point observable: order insertions plus an optional disorder line.

    ``order_mask`` lists the flavors whose product is inserted at both
    endpoints; ``disorder_mask`` lists the flavors whose bond terms flip along
    a dual path joining the endpoints.
    """

    kind: str
    order_mask: int = 0
    disorder_mask: int = 0
    label: str = ""
    reduced: bool = False

    def __post_init__(self):
        if self.kind not in ("order", "disorder", "mixed"):
            raise ValueError(f"unknown observable kind {self.kind!r}")
        if self.kind == "order" and (self.order_mask == 0 or self.disorder_mask):
            raise ValueError("order observables need a nonempty order mask only")
        if self.kind == "disorder" and (self.disorder_mask == 0 or self.order_mask):
            raise ValueError("disorder observables need a nonempty disorder mask only")


def _parse_pair(label: str):
    parts = label.replace(" ", "").split(".")
    if len(parts) != 2:
        raise ValueError(f"anyon pair {label!r} must look like 'e.I'")
    for p in parts:
        if p not in ("I", "e", "m", "f"):
            raise ValueError(f"unknown anyon {p!r}")
    return parts


def anyon_observable(bra: str, ket: str, reduced: bool = False,
                     allow_fermions: bool = False) -> ObservableSpec:
    """Translate an overlap ``<bra|ket>`` of anyon pairs into a spin observable.

    Labels are ``"a.b"`` with ``a`` in the ket/bra copy and ``b`` in the
    conjugate copy, e.g. ``anyon_observable("I.I", "e.e")``.  In the four-flavor
    language ``(z, t, zb, tb)``: ``e`` in the ket inserts ``z``, in the bra
    ``t``; ``eb`` inserts ``zb`` / ``tb``; ``m`` and ``mb`` are disorder lines on
    the same flavors.  ``reduced=True`` rewrites the result in the AT variables
    ``s = z zb``, ``tau = t zb``.

    Fermions ``f = e x m`` are only accepted with ``allow_fermions`` and then
    produce a composite ("mixed") observable sharing endpoints.
    """
    kb, kbb = _parse_pair(ket)
    bb, bbb = _parse_pair(bra)
    if not allow_fermions and "f" in (kb, kbb, bb, bbb):
        raise ValueError("standalone fermion labels are not supported; compose e and m "
                         "or pass allow_fermions=True")
    order = 0
    dis = 0
    for lab, flav in ((kb, _Z), (kbb, _ZB), (bb, _T), (bbb, _TB)):
        if lab in ("e", "f"):
            order ^= flav
        if lab in ("m", "f"):
            dis ^= flav
    if order == 0 and dis == 0:
        raise ValueError(f"<{bra}|{ket}> is the trivial overlap")
    if reduced:
        order = reduce_order_mask(order) if order else 0
        dis = reduce_disorder_mask(dis) if dis else 0
    kind = "mixed" if (order and dis) else ("order" if order else "disorder")
    if kind != "mixed" and order == 0 and dis == 0:
        raise ValueError(f"<{bra}|{ket}> is trivial in reduced variables")
    return ObservableSpec(kind, order, dis, f"{bra}|{ket}", reduced)


def local_states(n: int):
    return list(itertools.product((1, -1), repeat=n))
