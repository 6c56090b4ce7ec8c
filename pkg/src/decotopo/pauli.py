"""Symbolic Pauli strings on the edges of a torus.

A string is ``i^phase * prod_e X_e^{x_e} Z_e^{z_e}`` (``X`` to the left of ``Z``
on every edge), so ``Y = i X Z`` has ``x = z = 1`` and contributes one unit of
phase.
"""
from __future__ import annotations

from functools import reduce

import numpy as np

from .lattice import TorusLattice

_I2 = np.eye(2)
_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_Z = np.array([[1.0, 0.0], [0.0, -1.0]])


class PauliString:
    __slots__ = ("x", "z", "phase")

    def __init__(self, x, z, phase: int = 0):
        self.x = np.asarray(x, dtype=np.uint8) & 1
        self.z = np.asarray(z, dtype=np.uint8) & 1
        if self.x.shape != self.z.shape:
            raise ValueError("x and z bit vectors differ in length")
        self.phase = int(phase) % 4

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(np.zeros(n), np.zeros(n))

    @classmethod
    def from_letters(cls, n: int, letters: dict) -> "PauliString":
        x = np.zeros(n, dtype=np.uint8)
        z = np.zeros(n, dtype=np.uint8)
        phase = 0
        for e, c in letters.items():
            if c == "X":
                x[e] = 1
            elif c == "Z":
                z[e] = 1
            elif c == "Y":
                x[e] = z[e] = 1
                phase += 1
            elif c != "I":
                raise ValueError(f"unknown Pauli letter {c!r}")
        return cls(x, z, phase)

    @property
    def n(self) -> int:
        return len(self.x)

    def __mul__(self, other: "PauliString") -> "PauliString":
        if self.n != other.n:
            raise ValueError("length mismatch")
        # Z^{z1} X^{x2} = (-1)^{z1 x2} X^{x2} Z^{z1}
        sign = int(np.sum(self.z & other.x)) % 2
        return PauliString(self.x ^ other.x, self.z ^ other.z, self.phase + other.phase + 2 * sign)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PauliString)
            and self.phase == other.phase
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.z, other.z)
        )

    def __hash__(self):
        return hash((self.phase, self.x.tobytes(), self.z.tobytes()))

    def equal_up_to_phase(self, other: "PauliString") -> bool:
        return np.array_equal(self.x, other.x) and np.array_equal(self.z, other.z)

    def commutes(self, other: "PauliString") -> bool:
        return (int(np.sum(self.x & other.z)) + int(np.sum(self.z & other.x))) % 2 == 0

    def square(self) -> "PauliString":
        return self * self

    def is_identity(self) -> bool:
        return self.phase == 0 and not self.x.any() and not self.z.any()

    def letters(self) -> str:
        table = {(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}
        return "".join(table[(int(a), int(b))] for a, b in zip(self.x, self.z))

    def __repr__(self):
        return f"PauliString({['+', '+i', '-', '-i'][self.phase]}{self.letters()})"

    def permuted(self, perm) -> "PauliString":
        """String with the letter on edge ``e`` moved to edge ``perm[e]``."""
        x = np.zeros_like(self.x)
        z = np.zeros_like(self.z)
        x[np.asarray(perm)] = self.x
        z[np.asarray(perm)] = self.z
        return PauliString(x, z, self.phase)

    def hadamard_all(self) -> "PauliString":
        """Conjugation by ``prod_e (X_e + Z_e)/sqrt2``: ``X <-> Z``, ``Y -> -Y``."""
        # H X^x Z^z H = Z^x X^z = (-1)^{xz} X^z Z^x
        flips = int(np.sum(self.x & self.z))
        return PauliString(self.z, self.x, self.phase + 2 * flips)

    def to_dense(self) -> np.ndarray:
        if self.n > 12:
            raise ValueError("dense conversion limited to 12 qubits")
        mats = []
        for a, b in zip(self.x, self.z):
            m = _I2
            if a:
                m = _X
            if b:
                m = m @ _Z
            mats.append(m)
        return (1j**self.phase) * reduce(np.kron, mats, np.ones((1, 1)))


def w_e(lat: TorusLattice, path_edges) -> PauliString:
    """Charge string: ``X`` on the edges of a lattice path."""
    return PauliString.from_letters(lat.n_edges, {e: "X" for e in path_edges})


def w_m(lat: TorusLattice, crossed_edges) -> PauliString:
    """Flux string: ``Z`` on the edges crossed by a dual path."""
    return PauliString.from_letters(lat.n_edges, {e: "Z" for e in crossed_edges})


def shift_edges(lat: TorusLattice, edges, shift=(1, 1)) -> list[int]:
    return [lat.translate_edge(e, shift) for e in edges]


def w_f(lat: TorusLattice, path_edges) -> PauliString:
    """Fermion string ``w_e(l) w_m(l~)`` with the dual path ``l~ = l + delta``."""
    return w_e(lat, path_edges) * w_m(lat, shift_edges(lat, path_edges))


def emd_conjugate(w: PauliString, lat: TorusLattice) -> PauliString:
    """``U_D w U_D^dagger`` for ``U_D = T_delta prod_e (X_e + Z_e)/sqrt2``."""
    if w.n != lat.n_edges:
        raise ValueError("string and lattice sizes differ")
    return w.hadamard_all().permuted(lat.translation((1, 1)))


def emd_identities(lat: TorusLattice, path_edges) -> dict:
    """Check the charge/flux exchange and the fermion non-invariance for one path.

    Returns booleans for ``U w_e(l) U^+ = w_m(l + delta)``,
    ``U w_m(l + delta) U^+ = w_e(l + 2 delta)``,
    ``U w_f(l) U^+ = w_m(l + delta) w_e(l + 2 delta)`` (the product of the two
    images, in this order) and ``U w_f(l) U^+ != w_f(l + 2 delta)``.
    """
    l1 = shift_edges(lat, path_edges, (1, 1))
    l2 = shift_edges(lat, path_edges, (2, 2))
    we, wm = w_e(lat, path_edges), w_m(lat, l1)
    wf = we * wm
    img_f = emd_conjugate(wf, lat)
    img_e = emd_conjugate(we, lat)
    img_m = emd_conjugate(wm, lat)
    return {
        "charge_to_flux": img_e == wm,
        "flux_to_charge": img_m == w_e(lat, l2),
        "twice_shifts_charge": emd_conjugate(img_e, lat) == w_e(lat, l2),
        "fermion_image": img_f == wm * w_e(lat, l2),
        "fermion_image_reordered": img_f.equal_up_to_phase(w_e(lat, l2) * wm),
        "fermion_not_shifted": img_f != w_f(lat, l2),
    }
