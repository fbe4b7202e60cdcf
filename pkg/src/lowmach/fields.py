"""Staggered-grid geometry, field containers and basic interpolations.

Layout
------
Arrays are indexed ``[..., i, j]`` with ``i`` along x and ``j`` along y;
leading axes may hold independent realizations that are advanced together.
Cell ``(i, j)`` is centred at ``((i + 1/2) dx, (j + 1/2) dy)``.

Face arrays store the *lower* face of every cell, so x-face ``k`` lies at
``x = k dx`` and separates cells ``k - 1`` and ``k``.  A periodic direction
stores as many faces as cells (face 0 doubles as face ``n``); a bounded
direction stores ``n + 1`` faces, the first and last lying on the boundary.
Nodes (cell corners) use the same convention in both directions.  There are
no ghost cells: boundary values enter the stencils explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateStateError, FormatError

__all__ = [
    "PERIODIC",
    "RESERVOIR",
    "WALL_NOSLIP",
    "WALL_FREESLIP",
    "Side",
    "BoundaryData",
    "Grid2D",
    "FaceVec",
    "SimState",
    "cell_to_face_average",
    "cell_to_face_difference",
    "face_to_cell_average",
    "face_to_cell_difference",
    "interp_cell_to_faces",
    "interp_cell_to_nodes",
    "velocity_from_momentum",
    "concentration",
    "vorticity",
    "write_snapshot",
    "read_snapshot",
]

PERIODIC = "periodic"
RESERVOIR = "reservoir"
WALL_NOSLIP = "wall_noslip"
WALL_FREESLIP = "wall_freeslip"
_KINDS = (PERIODIC, RESERVOIR, WALL_NOSLIP, WALL_FREESLIP)


@dataclass(frozen=True)
class Side:
    """Boundary condition on one side of the box.

    Parameters
    ----------
    kind : str
        One of ``"periodic"``, ``"reservoir"``, ``"wall_noslip"`` or
        ``"wall_freeslip"``.
    c : float, optional
        Reservoir concentration (required for reservoirs).
    free_slip : bool
        Tangential condition at a reservoir; walls encode it in ``kind``.
    """

    kind: str = PERIODIC
    c: float | None = None
    free_slip: bool = False

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == RESERVOIR:
            if self.c is None or not 0.0 <= self.c <= 1.0:
                raise ValueError("reservoir needs a concentration in [0, 1]")
        elif self.c is not None:
            raise ValueError(f"{self.kind} side takes no concentration")

    @property
    def periodic(self) -> bool:
        return self.kind == PERIODIC

    @property
    def reservoir(self) -> bool:
        return self.kind == RESERVOIR

    @property
    def slip(self) -> bool:
        """True when the tangential stress vanishes on this side."""
        return self.kind == WALL_FREESLIP or (self.reservoir and self.free_slip)


@dataclass(frozen=True)
class BoundaryData:
    """Boundary conditions for the four sides of a rectangle."""

    x_lo: Side = field(default_factory=Side)
    x_hi: Side = field(default_factory=Side)
    y_lo: Side = field(default_factory=Side)
    y_hi: Side = field(default_factory=Side)

    def __post_init__(self):
        for lo, hi, name in ((self.x_lo, self.x_hi, "x"), (self.y_lo, self.y_hi, "y")):
            if lo.periodic != hi.periodic:
                raise ValueError(f"periodic {name} boundary must be set on both sides")

    def sides(self, d: int) -> tuple[Side, Side]:
        return (self.x_lo, self.x_hi) if d == 0 else (self.y_lo, self.y_hi)

    def periodic(self, d: int) -> bool:
        return self.sides(d)[0].periodic

    @property
    def all_periodic(self) -> bool:
        return self.periodic(0) and self.periodic(1)

    def reservoir_values(self, func) -> tuple:
        """Evaluate ``func(c_boundary)`` on reservoir sides, ``None`` elsewhere.

        The result is ordered ``(x_lo, x_hi, y_lo, y_hi)`` and is the form
        expected by :func:`interp_cell_to_faces`.
        """
        return tuple(func(s.c) if s.reservoir else None
                     for s in (self.x_lo, self.x_hi, self.y_lo, self.y_hi))

    @classmethod
    def channel(cls, y_lo: Side, y_hi: Side) -> "BoundaryData":
        """Periodic in x, bounded in y."""
        return cls(Side(), Side(), y_lo, y_hi)


@dataclass(frozen=True)
class Grid2D:
    """Uniform two-dimensional staggered grid.

    Parameters
    ----------
    nx, ny : int
        Number of cells.
    dx, dy : float
        Cell sizes.
    thickness : float
        Extent in the third direction; cell volume is ``dx * dy * thickness``.
    bc : BoundaryData
        Boundary conditions, fully periodic by default.
    """

    nx: int
    ny: int
    dx: float
    dy: float
    thickness: float = 1.0
    bc: BoundaryData = field(default_factory=BoundaryData)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs at least one cell per direction")
        if not (self.dx > 0 and self.dy > 0 and self.thickness > 0):
            raise ValueError("grid spacings and thickness must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy * self.thickness

    @property
    def lengths(self) -> tuple[float, float]:
        return (self.nx * self.dx, self.ny * self.dy)

    def n(self, d: int) -> int:
        return self.nx if d == 0 else self.ny

    def h(self, d: int) -> float:
        return self.dx if d == 0 else self.dy

    def periodic(self, d: int) -> bool:
        return self.bc.periodic(d)

    def n_faces(self, d: int) -> int:
        return self.n(d) if self.periodic(d) else self.n(d) + 1

    def face_shape(self, d: int) -> tuple[int, int]:
        return (self.n_faces(0), self.ny) if d == 0 else (self.nx, self.n_faces(1))

    @property
    def node_shape(self) -> tuple[int, int]:
        return (self.n_faces(0), self.n_faces(1))

    def cell_centers(self, d: int) -> np.ndarray:
        return (np.arange(self.n(d)) + 0.5) * self.h(d)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates with shape ``(nx, ny)``."""
        return np.meshgrid(self.cell_centers(0), self.cell_centers(1), indexing="ij")

    def face_mesh(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates of the faces normal to direction ``d``."""
        x = self.cell_centers(0)
        y = self.cell_centers(1)
        if d == 0:
            x = np.arange(self.n_faces(0)) * self.dx
        else:
            y = np.arange(self.n_faces(1)) * self.dy
        return np.meshgrid(x, y, indexing="ij")


class FaceVec:
    """Pair of face-centred arrays (x-normal faces, y-normal faces).

    Supports elementwise arithmetic with scalars, arrays broadcastable to
    both components, and other ``FaceVec`` instances.
    """

    __slots__ = ("x", "y")

    def __init__(self, x, y):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)

    @classmethod
    def zeros(cls, grid: Grid2D, batch=()) -> "FaceVec":
        batch = tuple(batch)
        return cls(np.zeros(batch + grid.face_shape(0)), np.zeros(batch + grid.face_shape(1)))

    def _pair(self, other):
        if isinstance(other, FaceVec):
            return other.x, other.y
        return other, other

    def __add__(self, other):
        ox, oy = self._pair(other)
        return FaceVec(self.x + ox, self.y + oy)

    __radd__ = __add__

    def __sub__(self, other):
        ox, oy = self._pair(other)
        return FaceVec(self.x - ox, self.y - oy)

    def __rsub__(self, other):
        ox, oy = self._pair(other)
        return FaceVec(ox - self.x, oy - self.y)

    def __mul__(self, other):
        ox, oy = self._pair(other)
        return FaceVec(self.x * ox, self.y * oy)

    __rmul__ = __mul__

    def __truediv__(self, other):
        ox, oy = self._pair(other)
        return FaceVec(self.x / ox, self.y / oy)

    def __neg__(self):
        return FaceVec(-self.x, -self.y)

    def __iter__(self):
        yield self.x
        yield self.y

    def __getitem__(self, d):
        return (self.x, self.y)[d]

    def copy(self) -> "FaceVec":
        return FaceVec(self.x.copy(), self.y.copy())

    def __repr__(self):
        return f"FaceVec(x{self.x.shape}, y{self.y.shape})"


@dataclass
class SimState:
    """Conserved variables of the low Mach number system.

    Attributes
    ----------
    rho, rho1 : ndarray
        Total density and density of the first species at cell centres.
    m : FaceVec
        Momentum density on faces.  Between steps this holds the
        unprojected momentum produced by the last update; every stage
        projects it before use.
    t : float
        Simulation time.
    step : int
        Number of completed steps; keys the noise stream.
    """

    rho: np.ndarray
    rho1: np.ndarray
    m: FaceVec
    t: float = 0.0
    step: int = 0

    @property
    def rho2(self) -> np.ndarray:
        return self.rho - self.rho1

    @property
    def batch_shape(self) -> tuple:
        return self.rho.shape[:-2]

    def copy(self) -> "SimState":
        return SimState(self.rho.copy(), self.rho1.copy(), self.m.copy(), self.t, self.step)


def _slice(a, ax, sl):
    idx = [slice(None)] * a.ndim
    idx[ax] = sl
    return a[tuple(idx)]


def _edge(a, ax, pos, value):
    """Boundary slab: ``value`` broadcast to the shape of slice ``pos``."""
    slab = _slice(a, ax, slice(pos, pos + 1) if pos >= 0 else slice(pos, None))
    if value is None:
        return slab
    return np.broadcast_to(np.asarray(value, dtype=float), slab.shape)


def cell_to_face_average(a, grid: Grid2D, d: int, lo=None, hi=None) -> np.ndarray:
    """Arithmetic average of cell values onto faces normal to ``d``.

    On a bounded direction the boundary faces take ``lo``/``hi`` when given
    (a Dirichlet value) and the adjacent cell value otherwise.
    """
    ax = d - 2
    if grid.periodic(d):
        return 0.5 * (a + np.roll(a, 1, axis=ax))
    inner = 0.5 * (_slice(a, ax, slice(1, None)) + _slice(a, ax, slice(None, -1)))
    return np.concatenate([_edge(a, ax, 0, lo), inner, _edge(a, ax, -1, hi)], axis=ax)


def cell_to_face_difference(a, grid: Grid2D, d: int, lo=None, hi=None) -> np.ndarray:
    """Centred difference of cell values onto faces normal to ``d``.

    Boundary faces get zero, or the one-sided difference against the
    boundary value ``lo``/``hi`` over half a cell when one is given.
    """
    ax = d - 2
    h = grid.h(d)
    if grid.periodic(d):
        return (a - np.roll(a, 1, axis=ax)) / h
    inner = np.diff(a, axis=ax) / h
    first = _slice(a, ax, slice(0, 1))
    last = _slice(a, ax, slice(-1, None))
    g_lo = np.zeros_like(first) if lo is None else (first - lo) / (0.5 * h)
    g_hi = np.zeros_like(last) if hi is None else (hi - last) / (0.5 * h)
    return np.concatenate([g_lo, inner, g_hi], axis=ax)


def face_to_cell_difference(f, grid: Grid2D, d: int) -> np.ndarray:
    """Difference of face values across each cell along ``d``."""
    ax = d - 2
    if grid.periodic(d):
        return (np.roll(f, -1, axis=ax) - f) / grid.h(d)
    return np.diff(f, axis=ax) / grid.h(d)


def face_to_cell_average(f, grid: Grid2D, d: int) -> np.ndarray:
    """Average of the two faces of each cell along ``d``."""
    ax = d - 2
    if grid.periodic(d):
        return 0.5 * (f + np.roll(f, -1, axis=ax))
    return 0.5 * (_slice(f, ax, slice(1, None)) + _slice(f, ax, slice(None, -1)))


def interp_cell_to_faces(a, grid: Grid2D, bvals=None) -> FaceVec:
    """Arithmetic face averages of a cell field.

    Parameters
    ----------
    a : ndarray
        Cell field, shape ``(..., nx, ny)``.
    grid : Grid2D
    bvals : tuple, optional
        Boundary values ``(x_lo, x_hi, y_lo, y_hi)``; ``None`` entries copy
        the adjacent cell (zero normal gradient).

    Returns
    -------
    FaceVec
    """
    xl, xh, yl, yh = bvals if bvals is not None else (None,) * 4
    return FaceVec(cell_to_face_average(a, grid, 0, xl, xh),
                   cell_to_face_average(a, grid, 1, yl, yh))


def interp_cell_to_nodes(a, grid: Grid2D, bvals=None) -> np.ndarray:
    """Average of the four cells around each node.

    Boundary nodes use the boundary values as in
    :func:`interp_cell_to_faces`; the y-side value wins at corners.
    """
    xl, xh, yl, yh = bvals if bvals is not None else (None,) * 4
    ax = cell_to_face_average(a, grid, 0, xl, xh)
    return cell_to_face_average(ax, grid, 1, yl, yh)


def velocity_from_momentum(m: FaceVec, rho_faces: FaceVec) -> FaceVec:
    """Face velocity ``m / rho`` using face densities."""
    if np.any(rho_faces.x <= 0) or np.any(rho_faces.y <= 0):
        raise DegenerateStateError("non-positive face density")
    return m / rho_faces


def concentration(state: SimState) -> np.ndarray:
    """Mass fraction of the first species, ``rho1 / rho``."""
    if np.any(state.rho <= 0):
        raise DegenerateStateError("non-positive density in state")
    return state.rho1 / state.rho


def vorticity(v: FaceVec, grid: Grid2D) -> np.ndarray:
    """Node vorticity ``dv/dx - du/dy`` on a periodic grid."""
    if not grid.bc.all_periodic:
        raise ValueError("vorticity is only defined here for periodic grids")
    dvdx = (v.y - np.roll(v.y, 1, axis=-2)) / grid.dx
    dudy = (v.x - np.roll(v.x, 1, axis=-1)) / grid.dy
    return dvdx - dudy


_MAGIC = "LOWMACH-SNAPSHOT 1"


def write_snapshot(path, data, grid: Grid2D, name: str = "field", t: float = 0.0,
                   step: int = 0) -> None:
    """Write an array as a text header followed by raw little-endian float64.

    The header is a sequence of ``key=value`` lines closed by ``END``; the
    payload is the array in C (row-major) order.
    """
    data = np.ascontiguousarray(data, dtype="<f8")
    header = [
        _MAGIC,
        f"name={name}",
        f"shape={','.join(str(s) for s in data.shape)}",
        "dtype=float64-le",
        "order=C",
        f"dx={grid.dx!r}",
        f"dy={grid.dy!r}",
        f"t={t!r}",
        f"step={step}",
        "END",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(data.tobytes())


def read_snapshot(path) -> tuple[np.ndarray, dict]:
    """Read a file written by :func:`write_snapshot`.

    Returns
    -------
    data : ndarray
    meta : dict
        Header entries (``name``, ``shape``, ``dx``, ``dy``, ``t``, ``step``).
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    marker = b"\nEND\n"
    end = raw.find(marker)
    if not raw.startswith(_MAGIC.encode()) or end < 0:
        raise FormatError(f"{path}: not a snapshot file")
    meta = {}
    for line in raw[:end].decode("ascii").splitlines()[1:]:
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"{path}: bad header line {line!r}")
        meta[key] = value
    try:
        shape = tuple(int(s) for s in meta["shape"].split(","))
        meta = {"name": meta["name"], "shape": shape, "dx": float(meta["dx"]),
                "dy": float(meta["dy"]), "t": float(meta["t"]), "step": int(meta["step"])}
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: incomplete header") from exc
    payload = raw[end + len(marker):]
    if len(payload) != 8 * int(np.prod(shape)):
        raise FormatError(f"{path}: payload size does not match shape {shape}")
    return np.frombuffer(payload, dtype="<f8").reshape(shape).copy(), meta
