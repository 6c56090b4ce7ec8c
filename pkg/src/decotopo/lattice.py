"""Periodic square lattice carrying toric-code qubits on its edges.

Positions use doubled coordinates on a ``2Lx x 2Ly`` grid: vertices sit at
``(2x, 2y)``, plaquettes at ``(2x+1, 2y+1)``, horizontal edges at
``(2x+1, 2y)`` and vertical edges at ``(2x, 2y+1)``.  The diagonal
translation ``delta = (1, 1)`` (half a lattice spacing in each direction)
maps vertices to plaquettes and edges to edges.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class TorusLattice:
    Lx: int
    Ly: int
    require_even: bool = True

    def __post_init__(self):
        if self.Lx < 1 or self.Ly < 1:
            raise ValueError("Lx, Ly must be positive")
        if self.require_even and (self.Lx % 2 or self.Ly % 2):
            raise ValueError("the diagonal translation needs even Lx and Ly")

    @property
    def n_edges(self) -> int:
        return 2 * self.Lx * self.Ly

    @property
    def n_vertices(self) -> int:
        return self.Lx * self.Ly

    @property
    def n_plaquettes(self) -> int:
        return self.Lx * self.Ly

    def edge_index(self, kind: str, x: int, y: int) -> int:
        x %= self.Lx
        y %= self.Ly
        if kind == "h":
            return y * self.Lx + x
        if kind == "v":
            return self.Lx * self.Ly + y * self.Lx + x
        raise ValueError(f"bad edge kind {kind!r}")

    def edge_label(self, idx: int) -> tuple:
        n = self.Lx * self.Ly
        kind = "h" if idx < n else "v"
        r = idx % n
        return kind, r % self.Lx, r // self.Lx

    def edge_coords(self, idx: int) -> tuple[int, int]:
        kind, x, y = self.edge_label(idx)
        return (2 * x + 1, 2 * y) if kind == "h" else (2 * x, 2 * y + 1)

    def coords_to_edge(self, cx: int, cy: int) -> int:
        cx %= 2 * self.Lx
        cy %= 2 * self.Ly
        if cx % 2 == 1 and cy % 2 == 0:
            return self.edge_index("h", cx // 2, cy // 2)
        if cx % 2 == 0 and cy % 2 == 1:
            return self.edge_index("v", cx // 2, cy // 2)
        raise ValueError(f"({cx}, {cy}) is not an edge position")

    def vertex_edges(self, x: int, y: int) -> tuple:
        return (
            self.edge_index("h", x, y),
            self.edge_index("h", x - 1, y),
            self.edge_index("v", x, y),
            self.edge_index("v", x, y - 1),
        )

    def plaquette_edges(self, x: int, y: int) -> tuple:
        return (
            self.edge_index("h", x, y),
            self.edge_index("h", x, y + 1),
            self.edge_index("v", x, y),
            self.edge_index("v", x + 1, y),
        )

    def edge_plaquettes(self, idx: int) -> tuple:
        """The two plaquettes (as flat indices ``y*Lx + x``) sharing edge ``idx``."""
        kind, x, y = self.edge_label(idx)
        if kind == "h":
            a, b = (x, (y - 1) % self.Ly), (x, y)
        else:
            a, b = ((x - 1) % self.Lx, y), (x, y)
        return a[1] * self.Lx + a[0], b[1] * self.Lx + b[0]

    def translate_edge(self, idx: int, shift=(1, 1)) -> int:
        """Edge reached by moving ``shift`` in doubled coordinates (``(1, 1)`` is delta)."""
        if (shift[0] + shift[1]) % 2:
            raise ValueError("shift must map edges to edges")
        cx, cy = self.edge_coords(idx)
        return self.coords_to_edge(cx + shift[0], cy + shift[1])

    def translation(self, shift=(1, 1)) -> list[int]:
        perm = [self.translate_edge(i, shift) for i in range(self.n_edges)]
        if sorted(perm) != list(range(self.n_edges)):
            raise ValueError("translation is not a bijection on edges")
        return perm

    def lattice_path(self, vertices) -> list[int]:
        """Edges along a path of nearest-neighbour vertices."""
        out = []
        for (x0, y0), (x1, y1) in zip(vertices[:-1], vertices[1:]):
            dx = (x1 - x0) % self.Lx
            dy = (y1 - y0) % self.Ly
            if dy == 0 and dx == 1:
                out.append(self.edge_index("h", x0, y0))
            elif dy == 0 and dx == self.Lx - 1:
                out.append(self.edge_index("h", x1, y1))
            elif dx == 0 and dy == 1:
                out.append(self.edge_index("v", x0, y0))
            elif dx == 0 and dy == self.Ly - 1:
                out.append(self.edge_index("v", x1, y1))
            else:
                raise ValueError(f"{(x0, y0)} and {(x1, y1)} are not neighbours")
        return out

    def dual_path(self, plaquettes) -> list[int]:
        """Edges crossed by a path of nearest-neighbour plaquettes."""
        out = []
        for (x0, y0), (x1, y1) in zip(plaquettes[:-1], plaquettes[1:]):
            dx = (x1 - x0) % self.Lx
            dy = (y1 - y0) % self.Ly
            if dy == 0 and dx == 1:
                out.append(self.edge_index("v", x1, y0))
            elif dy == 0 and dx == self.Lx - 1:
                out.append(self.edge_index("v", x0, y0))
            elif dx == 0 and dy == 1:
                out.append(self.edge_index("h", x0, y1))
            elif dx == 0 and dy == self.Ly - 1:
                out.append(self.edge_index("h", x0, y0))
            else:
                raise ValueError(f"{(x0, y0)} and {(x1, y1)} are not neighbours")
        return out
