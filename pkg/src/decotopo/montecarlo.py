"""Single-spin-flip Metropolis sampler for nonnegative weight tables.

Chains are vectorised: ``cfg.chains`` independent replicas are updated
together, one flavor and one sublattice at a time.  On tori with even sides
the two checkerboard sublattices are updated alternately; otherwise every
site is its own update class.  Randomness comes from numpy's counter-based
Philox generator keyed by ``cfg.seed``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import ObservableSpec, StatMechModel, parity


class SignProblemError(ValueError):
    """Raised for weight tables with negative entries."""


class ConstraintSamplingError(ValueError):
    """Raised for tables with zero entries (hard constraints break single-flip ergodicity)."""


@dataclass(frozen=True)
class AuditResult:
    passed: bool
    witness: tuple | None
    min_weight: float


def positivity_audit(m) -> AuditResult:
    """Check every edge-weight entry for ``>= 0``; the witness is the first violation.

    Accepts a :class:`StatMechModel` or a raw square table.  The witness is
    ``(a, b, W[a, b])`` in row-major order.
    """
    w = np.asarray(m.weight if isinstance(m, StatMechModel) else m, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("weight table must be square")
    bad = np.argwhere(w < 0)
    if len(bad):
        a, b = (int(v) for v in bad[0])
        return AuditResult(False, (a, b, float(w[a, b])), float(w.min()))
    return AuditResult(True, None, float(w.min()))


@dataclass(frozen=True)
class MCConfig:
    """Sampler settings; ``sweeps`` counts all sweeps including thermalization."""

    Lx: int
    Ly: int
    sweeps: int = 20000
    thermalization: int = 2000
    stride: int = 1
    seed: int = 0
    bins: int = 16
    chains: int = 8

    def __post_init__(self):
        if self.Lx < 2 or self.Ly < 2:
            raise ValueError("MC lattices need Lx, Ly >= 2")
        if self.sweeps <= self.thermalization:
            raise ValueError("sweeps must exceed thermalization")
        if self.bins < 8:
            raise ValueError("at least 8 bins are required")
        if self.stride < 1 or self.chains < 1:
            raise ValueError("stride and chains must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.n_measurements < self.bins:
            raise ValueError("fewer measurements than bins")

    @property
    def n_measurements(self) -> int:
        return (self.sweeps - self.thermalization) // self.stride


@dataclass
class MCEstimate:
    mean: float
    stderr: float
    tau_int: float
    n_samples: int
    label: str = ""

    def z_score(self, exact: float) -> float:
        if self.stderr == 0:
            return 0.0 if self.mean == exact else math.inf
        return abs(self.mean - exact) / self.stderr


def integrated_time(x: np.ndarray, c: float = 5.0) -> float:
    """Integrated autocorrelation time ``1 + 2 sum rho(t)`` with a self-consistent window."""
    x = np.asarray(x, float)
    n = len(x)
    scale = float(np.max(np.abs(x))) if n else 0.0
    x = x - x.mean()
    var = np.dot(x, x) / n
    # constant streams leave only rounding noise after centring
    if var <= (64 * np.finfo(float).eps * scale) ** 2 or n < 4:
        return 1.0
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    tau = 1.0
    for t in range(1, n):
        tau += 2 * acf[t]
        if t >= c * tau:
            break
    return float(max(tau, 1e-12))


def estimate_two_point(samples, label: str = "", bins: int = 16) -> MCEstimate:
    """Binned mean and error of a measurement stream.

    ``samples`` is ``(n,)`` for one chain or ``(chains, n)``.  Each chain is
    split into ``bins`` equal blocks (leading remainder dropped); the error is
    the spread of all block means.  ``tau_int`` is averaged over chains.
    """
    x = np.atleast_2d(np.asarray(samples, float))
    if bins < 8:
        raise ValueError("at least 8 bins are required")
    n = x.shape[1]
    if n < bins:
        raise ValueError(f"{n} samples per chain cannot fill {bins} bins")
    size = n // bins
    x = x[:, n - size * bins:]
    means = x.reshape(x.shape[0], bins, size).mean(axis=2).reshape(-1)
    nb = len(means)
    err = float(np.std(means, ddof=1) / math.sqrt(nb)) if nb > 1 else 0.0
    tau = float(np.mean([integrated_time(row) for row in x]))
    return MCEstimate(float(means.mean()), err, tau, int(x.size), label)


def _colors(Lx: int, Ly: int) -> list[np.ndarray]:
    if Lx % 2 == 0 and Ly % 2 == 0:
        yy, xx = np.mgrid[0:Ly, 0:Lx]
        return [((xx + yy) % 2 == c) for c in (0, 1)]
    out = []
    for y in range(Ly):
        for x in range(Lx):
            mask = np.zeros((Ly, Lx), bool)
            mask[y, x] = True
            out.append(mask)
    return out


def _check_model(m: StatMechModel) -> np.ndarray:
    audit = positivity_audit(m)
    if not audit.passed:
        a, b, v = audit.witness
        raise SignProblemError(f"sign-indefinite weights: W[{a}, {b}] = {v:.6g}")
    if m.has_zero_weights:
        raise ConstraintSamplingError(
            "zero weights impose hard constraints; single flips are not ergodic")
    if m.eta:
        raise ValueError("disorder lines are not sampled; use the exact engine")
    return np.log(m.weight)


class _Sampler:
    def __init__(self, m: StatMechModel, cfg: MCConfig):
        self.logw = _check_model(m)
        self.cfg = cfg
        self.n = m.n_flavors
        self.d = m.d
        self.rng = np.random.Generator(np.random.Philox(cfg.seed))
        self.state = self.rng.integers(0, self.d, size=(cfg.chains, cfg.Ly, cfg.Lx))
        self.colors = _colors(cfg.Lx, cfg.Ly)

    def _local(self, s, st):
        lw = self.logw
        right = np.roll(st, -1, axis=2)
        left = np.roll(st, 1, axis=2)
        up = np.roll(st, -1, axis=1)
        down = np.roll(st, 1, axis=1)
        return lw[s, right] + lw[left, s] + lw[s, up] + lw[down, s]

    def sweep(self):
        st = self.state
        for k in range(self.n):
            bit = 1 << k
            for mask in self.colors:
                new = st ^ bit
                delta = self._local(new, st) - self._local(st, st)
                u = self.rng.random(st.shape)
                accept = mask[None] & (np.log(u) < delta)
                st = np.where(accept, new, st)
        self.state = st


def _two_point(o: np.ndarray, r: int, direction: str) -> np.ndarray:
    if direction == "column":
        return np.mean(o * np.roll(o, -r, axis=1), axis=(1, 2))
    if direction == "row":
        return np.mean(o * np.roll(o, -r, axis=2), axis=(1, 2))
    if direction == "both":
        return 0.5 * (_two_point(o, r, "column") + _two_point(o, r, "row"))
    raise ValueError(f"unknown direction {direction!r}")


def mc_run(m: StatMechModel, cfg: MCConfig, observables, separations=(1,),
           direction: str = "column") -> list[MCEstimate]:
    """Metropolis estimates of ``<O_i O_j>`` for each order observable and separation.

    ``observables`` holds :class:`ObservableSpec` of kind ``order`` (or raw
    flavor masks).  Two-point functions are averaged over all sites of the
    torus; ``direction`` picks column (``y``), row (``x``) or both
    separations.  Results are ordered observable-major, then by separation.
    """
    masks = []
    for ob in observables:
        if isinstance(ob, ObservableSpec):
            if ob.kind != "order":
                raise ValueError(f"MC handles order observables only, got {ob.kind!r}")
            masks.append((ob.order_mask, ob.label or f"mask{ob.order_mask}"))
        else:
            masks.append((int(ob), f"mask{int(ob)}"))
    seps = [int(r) for r in separations]
    sampler = _Sampler(m, cfg)
    for _ in range(cfg.thermalization):
        sampler.sweep()
    series = np.zeros((len(masks), len(seps), cfg.chains, cfg.n_measurements))
    for t in range(cfg.n_measurements):
        for _ in range(cfg.stride):
            sampler.sweep()
        for i, (mask, _) in enumerate(masks):
            o = parity(mask, sampler.state)
            for j, r in enumerate(seps):
                series[i, j, :, t] = _two_point(o, r, direction)
    out = []
    for i, (_, label) in enumerate(masks):
        for j, r in enumerate(seps):
            out.append(estimate_two_point(series[i, j], f"{label}@{r}", cfg.bins))
    return out


def mc_histogram(m: StatMechModel, cfg: MCConfig) -> np.ndarray:
    """Visit counts over all ``d^(Lx Ly)`` configurations (tiny lattices only)."""
    n_sites = cfg.Lx * cfg.Ly
    if m.d**n_sites > 1 << 16:
        raise ValueError("histogram limited to 65536 configurations")
    sampler = _Sampler(m, cfg)
    for _ in range(cfg.thermalization):
        sampler.sweep()
    counts = np.zeros(m.d**n_sites, dtype=np.int64)
    place = m.d ** np.arange(n_sites)[::-1]
    for _ in range(cfg.n_measurements):
        for _ in range(cfg.stride):
            sampler.sweep()
        idx = sampler.state.reshape(cfg.chains, -1) @ place
        counts += np.bincount(idx, minlength=len(counts))
    return counts


def boltzmann_distribution(m: StatMechModel, Lx: int, Ly: int) -> np.ndarray:
    """Exact configuration probabilities in the ordering used by :func:`mc_histogram`."""
    n_sites = Lx * Ly
    d = m.d
    cfgs = np.stack(np.unravel_index(np.arange(d**n_sites), (d,) * n_sites), axis=1)
    grid = cfgs.reshape(-1, Ly, Lx)
    lw = np.log(m.weight)
    e = (lw[grid, np.roll(grid, -1, axis=2)] + lw[grid, np.roll(grid, -1, axis=1)]).sum(axis=(1, 2))
    p = np.exp(e - e.max())
    return p / p.sum()
