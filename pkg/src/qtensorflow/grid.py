"""Structured box grids, MAC-staggered fields and summation-by-parts operators.

Layout
------
Scalars and tensors (``p``, ``Q``, ``H``) live at cell centres and have array
shape ``dims + component_shape``. Velocity component ``k`` lives on the faces
normal to axis ``k``: along a walled axis there are ``N + 1`` faces (the two
outermost sit on the wall), along a periodic axis ``N`` faces, face ``j``
always being the one between cells ``j - 1`` and ``j``.

Ghost rules for cell-centred data at a wall: ``even`` mirrors the boundary
cell (homogeneous Neumann), ``odd`` mirrors with a sign flip (value zero on
the wall, used for tangential no-slip velocity), ``zero`` pads with zeros.

All 1D stencils are written once as array functions; sparse matrices for the
implicit solves are generated from those same functions, so the explicit and
implicit operators agree by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "Grid",
    "make_grid",
    "IncompatibleRHSError",
    "SolverError",
    "gradient",
    "divergence",
    "laplacian",
    "centered_gradient",
    "advect",
    "poisson_solve",
    "inner",
    "l2_norm",
    "velocity_divergence",
    "pressure_gradient",
    "velocity_laplacian",
    "velocity_gradient_sq",
    "velocity_inner",
    "velocity_norm",
    "cell_velocity_gradient",
    "cell_velocity_gradient_adjoint",
    "convection",
    "project",
    "zero_velocity",
    "write_snapshot",
    "read_snapshot",
    "write_csv",
]


class IncompatibleRHSError(ValueError):
    """Right-hand side violates the solvability condition of a singular problem."""


class SolverError(RuntimeError):
    """A linear solve did not reach the requested residual."""


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    dims: tuple[int, ...]
    spacing: tuple[float, ...]
    periodic: tuple[bool, ...]

    def __post_init__(self):
        d = len(self.dims)
        if d not in (2, 3):
            raise ValueError("grids are 2D or 3D")
        if len(self.spacing) != d or len(self.periodic) != d:
            raise ValueError("spacing and periodic need one entry per axis")
        if any(int(n) < 4 for n in self.dims):
            raise ValueError(f"need at least 4 cells per axis, got {self.dims}")
        if any(not (h > 0 and math.isfinite(h)) for h in self.spacing):
            raise ValueError("spacing must be positive")

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def ncells(self) -> int:
        return int(np.prod(self.dims))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return self.cell_volume * self.ncells

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(n * h for n, h in zip(self.dims, self.spacing))

    @property
    def bc(self) -> str:
        if all(self.periodic):
            return "periodic"
        if not any(self.periodic):
            return "box"
        return "mixed"

    def nfaces(self, axis: int) -> int:
        n = self.dims[axis]
        return n if self.periodic[axis] else n + 1

    def face_shape(self, k: int) -> tuple[int, ...]:
        shape = list(self.dims)
        shape[k] = self.nfaces(k)
        return tuple(shape)

    def cell_centers(self, axis: int) -> np.ndarray:
        return (np.arange(self.dims[axis]) + 0.5) * self.spacing[axis]

    def face_positions(self, axis: int) -> np.ndarray:
        return np.arange(self.nfaces(axis)) * self.spacing[axis]

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Cell-centre coordinates, one array of shape ``dims`` per axis."""
        return np.meshgrid(*(self.cell_centers(a) for a in range(self.ndim)), indexing="ij")

    def check_cells(self, field, ncomp_shape: tuple[int, ...] = ()) -> np.ndarray:
        arr = np.asarray(field, dtype=float)
        if arr.shape != self.dims + ncomp_shape:
            raise ValueError(f"field shape {arr.shape} does not match grid {self.dims + ncomp_shape}")
        return arr

    def check_velocity(self, u) -> tuple[np.ndarray, ...]:
        if len(u) != self.ndim:
            raise ValueError("velocity needs one component per axis")
        out = []
        for k, uk in enumerate(u):
            uk = np.asarray(uk, dtype=float)
            if uk.shape != self.face_shape(k):
                raise ValueError(f"velocity component {k} has shape {uk.shape}, expected {self.face_shape(k)}")
            out.append(uk)
        return tuple(out)

    def face_weights(self, axis: int) -> np.ndarray:
        """Quadrature weights (relative to the cell volume) of face-located points along ``axis``."""
        w = np.ones(self.nfaces(axis))
        if not self.periodic[axis]:
            w[0] = w[-1] = 0.5
        return w

    # -- sparse operators ---------------------------------------------------

    def _kron(self, ops: Sequence) -> sp.csr_matrix:
        out = sp.csr_matrix(ops[0])
        for op in ops[1:]:
            out = sp.kron(out, op, format="csr")
        return out

    @cached_property
    def neumann_laplacian_matrix(self) -> sp.csr_matrix:
        """Cell Laplacian with mirror ghosts (periodic axes wrap)."""
        return self._laplacian_matrix(["cell_even"] * self.ndim)

    def velocity_laplacian_matrix(self, k: int) -> sp.csr_matrix:
        kinds = ["face" if m == k else "cell_odd" for m in range(self.ndim)]
        return self._laplacian_matrix(kinds)

    def _laplacian_matrix(self, kinds) -> sp.csr_matrix:
        total = None
        for a, kind in enumerate(kinds):
            ops = []
            for m, km in enumerate(kinds):
                n = self.nfaces(m) if km == "face" else self.dims[m]
                ops.append(_lap1d(self, a, kind) if m == a else sp.identity(n, format="csr"))
            term = self._kron(ops)
            total = term if total is None else total + term
        return total.tocsr()

    def cell_gradient_matrix(self, i: int, j: int) -> sp.csr_matrix:
        """Sparse map from velocity component ``i`` (faces) to ``d_j u_i`` at cell centres."""
        return _cell_grad_matrix(self, i, j)


def make_grid(dims: Sequence[int], h: float | Sequence[float] = None, bc: str = "box",
              periodic: Sequence[bool] | None = None) -> Grid:
    """Build a grid; ``h`` defaults to unit side length along each axis."""
    dims = tuple(int(n) for n in dims)
    if h is None:
        spacing = tuple(1.0 / n for n in dims)
    elif np.ndim(h) == 0:
        spacing = (float(h),) * len(dims)
    else:
        spacing = tuple(float(x) for x in h)
    if periodic is None:
        if bc not in ("box", "periodic"):
            raise ValueError(f"bc must be 'box' or 'periodic', got {bc!r}")
        periodic = (bc == "periodic",) * len(dims)
    return Grid(dims, spacing, tuple(bool(p) for p in periodic))


# ---------------------------------------------------------------------------
# 1D stencils along one axis
# ---------------------------------------------------------------------------


def _sl(a, axis, sl):
    idx = [slice(None)] * a.ndim
    idx[axis] = sl
    return a[tuple(idx)]


def _extend(phi, axis, ghost):
    lo, hi = _sl(phi, axis, slice(0, 1)), _sl(phi, axis, slice(-1, None))
    if ghost == "even":
        pass
    elif ghost == "odd":
        lo, hi = -lo, -hi
    elif ghost == "zero":
        lo, hi = np.zeros_like(lo), np.zeros_like(hi)
    else:
        raise ValueError(f"unknown ghost rule {ghost!r}")
    return np.concatenate([lo, phi, hi], axis=axis)


def _fwd(a, axis):
    return _sl(a, axis, slice(1, None)) - _sl(a, axis, slice(None, -1))


def _mid(a, axis):
    return 0.5 * (_sl(a, axis, slice(1, None)) + _sl(a, axis, slice(None, -1)))


def _diff_c2f(phi, axis, h, periodic, ghost="even"):
    if periodic:
        return (phi - np.roll(phi, 1, axis=axis)) / h
    return _fwd(_extend(phi, axis, ghost), axis) / h


def _diff_f2c(v, axis, h, periodic):
    if periodic:
        return (np.roll(v, -1, axis=axis) - v) / h
    return _fwd(v, axis) / h


def _avg_c2f(phi, axis, periodic, ghost="even"):
    if periodic:
        return 0.5 * (phi + np.roll(phi, 1, axis=axis))
    return _mid(_extend(phi, axis, ghost), axis)


def _avg_f2c(v, axis, periodic):
    if periodic:
        return 0.5 * (v + np.roll(v, -1, axis=axis))
    return _mid(v, axis)


def _centered(phi, axis, h, periodic, ghost="even"):
    if periodic:
        return (np.roll(phi, -1, axis=axis) - np.roll(phi, 1, axis=axis)) / (2 * h)
    ext = _extend(phi, axis, ghost)
    return (_sl(ext, axis, slice(2, None)) - _sl(ext, axis, slice(None, -2))) / (2 * h)


def _zero_walls(v, axis, periodic):
    if not periodic:
        idx = [slice(None)] * v.ndim
        idx[axis] = [0, -1]
        v[tuple(idx)] = 0.0
    return v


def _as_matrix(fn, n_in):
    """Dense matrix of a linear 1D stencil, built column by column from the identity."""
    return sp.csr_matrix(fn(np.eye(n_in)))


def _lap1d(grid: Grid, axis: int, kind: str) -> sp.csr_matrix:
    h, per, n = grid.spacing[axis], grid.periodic[axis], grid.dims[axis]
    if kind == "cell_even":
        fn = lambda x: _diff_f2c(_diff_c2f(x, 0, h, per, "even"), 0, h, per)
        return _as_matrix(fn, n)
    if kind == "cell_odd":
        fn = lambda x: _diff_f2c(_diff_c2f(x, 0, h, per, "odd"), 0, h, per)
        return _as_matrix(fn, n)
    if kind == "face":
        # face-located unknown with fixed zero wall values
        def fn(x):
            x = _zero_walls(x.copy(), 0, per)
            return _zero_walls(_diff_c2f(_diff_f2c(x, 0, h, per), 0, h, per, "even"), 0, per)
        return _as_matrix(fn, grid.nfaces(axis))
    raise ValueError(kind)


def _cell_grad_matrix(grid: Grid, i: int, j: int) -> sp.csr_matrix:
    return _cell_grad_cache(grid, i, j)


@lru_cache(maxsize=64)
def _cell_grad_cache(grid: Grid, i: int, j: int) -> sp.csr_matrix:
    ops = []
    for a in range(grid.ndim):
        h, per = grid.spacing[a], grid.periodic[a]
        if a == i and a == j:
            ops.append(_as_matrix(lambda x: _diff_f2c(x, 0, h, per), grid.nfaces(a)))
        elif a == i:
            ops.append(_as_matrix(lambda x: _avg_f2c(x, 0, per), grid.nfaces(a)))
        elif a == j:
            ops.append(_as_matrix(lambda x: _centered(x, 0, h, per, "odd"), grid.dims[a]))
        else:
            ops.append(sp.identity(grid.dims[a], format="csr"))
    return grid._kron(ops)


# ---------------------------------------------------------------------------
# Cell-centred fields
# ---------------------------------------------------------------------------


def gradient(grid: Grid, phi, bc: str = "neumann") -> tuple[np.ndarray, ...]:
    """Compact face gradient of a cell field, one face array per axis.

    ``bc='neumann'`` gives zero normal derivative on walls, ``bc='noslip'``
    treats the field as vanishing on walls.
    """
    ghost = {"neumann": "even", "noslip": "odd"}[bc]
    phi = np.asarray(phi, dtype=float)
    return tuple(
        _diff_c2f(phi, a, grid.spacing[a], grid.periodic[a], ghost) for a in range(grid.ndim)
    )


def divergence(grid: Grid, v: Sequence) -> np.ndarray:
    """Cell divergence of a face field (one array per axis, trailing components allowed)."""
    return sum(_diff_f2c(np.asarray(v[a], dtype=float), a, grid.spacing[a], grid.periodic[a])
               for a in range(grid.ndim))


def laplacian(grid: Grid, phi, bc: str = "neumann") -> np.ndarray:
    """5-point (2D) / 7-point (3D) Laplacian; equal to ``divergence(gradient(phi))``."""
    return divergence(grid, gradient(grid, phi, bc))


def centered_gradient(grid: Grid, phi, bc: str = "neumann") -> np.ndarray:
    """Collocated centred differences; derivative axis is inserted after the grid axes."""
    ghost = {"neumann": "even", "noslip": "odd"}[bc]
    phi = np.asarray(phi, dtype=float)
    parts = [_centered(phi, a, grid.spacing[a], grid.periodic[a], ghost) for a in range(grid.ndim)]
    return np.stack(parts, axis=grid.ndim)


def inner(grid: Grid, f, g) -> float:
    """Discrete L2 inner product of two cell fields (midpoint rule)."""
    return float(np.sum(np.asarray(f) * np.asarray(g)) * grid.cell_volume)


def l2_norm(grid: Grid, f) -> float:
    return math.sqrt(max(inner(grid, f, f), 0.0))


def face_inner(grid: Grid, axis: int, f, g) -> float:
    """Inner product of two face fields on the faces normal to ``axis``."""
    w = grid.face_weights(axis)
    shape = [1] * np.ndim(f)
    shape[axis] = w.size
    return float(np.sum(np.asarray(f) * np.asarray(g) * w.reshape(shape)) * grid.cell_volume)


def advect(grid: Grid, u: Sequence, Q) -> np.ndarray:
    """Transport term ``div(u Q)`` with centred face interpolation of ``Q``.

    For a discretely divergence-free ``u`` this equals ``(u . grad) Q`` and is
    skew: ``<advect(u, Q), Q> = 0``.
    """
    Q = np.asarray(Q, dtype=float)
    extra = (None,) * (Q.ndim - grid.ndim)
    out = np.zeros_like(Q)
    for k in range(grid.ndim):
        Qf = _avg_c2f(Q, k, grid.periodic[k], "even")
        flux = np.asarray(u[k])[(...,) + extra] * Qf
        out += _diff_f2c(flux, k, grid.spacing[k], grid.periodic[k])
    return out


def advect_dual(grid: Grid, Q, H) -> tuple[np.ndarray, ...]:
    """Face field ``T`` with ``<advect(u, Q), H> == <T, u>`` for every admissible ``u``."""
    Q = np.asarray(Q, dtype=float)
    H = np.asarray(H, dtype=float)
    out = []
    for k in range(grid.ndim):
        Qf = _avg_c2f(Q, k, grid.periodic[k], "even")
        dH = _diff_c2f(H, k, grid.spacing[k], grid.periodic[k], "even")
        t = -np.einsum("...ij,...ij->...", Qf, dH) if Q.ndim > grid.ndim else -Qf * dH
        out.append(_zero_walls(t, k, grid.periodic[k]))
    return tuple(out)


# ---------------------------------------------------------------------------
# Poisson / Helmholtz solves
# ---------------------------------------------------------------------------


@lru_cache(maxsize=32)
def _neumann_pinned_lu(grid: Grid):
    L = grid.neumann_laplacian_matrix.tocsc()
    return spla.splu(L[1:, 1:].tocsc())


@lru_cache(maxsize=32)
def _fft_symbol(grid: Grid) -> np.ndarray:
    sym = 0.0
    for a in range(grid.ndim):
        n, h = grid.dims[a], grid.spacing[a]
        kk = np.fft.fftfreq(n) * n
        lam = 2.0 * (1.0 - np.cos(2.0 * np.pi * kk / n)) / h**2
        shape = [1] * grid.ndim
        shape[a] = n
        sym = sym + lam.reshape(shape)
    return -np.asarray(sym)


def _as_columns(grid: Grid, rhs: np.ndarray) -> np.ndarray:
    return rhs.reshape(grid.ncells, -1)


def poisson_solve(grid: Grid, rhs, method: str = "auto", tol: float = 1e-10,
                  maxiter: int | None = None) -> np.ndarray:
    """Solve ``laplacian(phi) = rhs`` with Neumann walls / periodic axes.

    The operator is singular (constants), so ``rhs`` must have zero mean; the
    returned ``phi`` has zero mean. ``method`` is ``direct`` (cached sparse LU),
    ``fft`` (fully periodic grids only), ``cg`` (Jacobi-preconditioned
    conjugate gradients) or ``auto`` (``fft`` when fully periodic, else
    ``direct``). Trailing component axes are solved independently.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[: grid.ndim] != grid.dims:
        raise ValueError("rhs shape does not match the grid")
    cols = _as_columns(grid, rhs)
    total = np.abs(cols).sum(axis=0)
    if np.any(np.abs(cols.sum(axis=0)) > 1e-10 * total + 1e-300):
        raise IncompatibleRHSError("Neumann/periodic Poisson problem needs a zero-mean right-hand side")
    if method == "auto":
        method = "fft" if all(grid.periodic) else "direct"

    if method == "fft":
        if not all(grid.periodic):
            raise ValueError("fft path needs a fully periodic grid")
        axes = tuple(range(grid.ndim))
        sym = _fft_symbol(grid)
        sym = sym.reshape(sym.shape + (1,) * (rhs.ndim - grid.ndim))
        rh = np.fft.fftn(rhs, axes=axes)
        with np.errstate(divide="ignore", invalid="ignore"):
            ph = np.where(sym == 0.0, 0.0, rh / np.where(sym == 0.0, 1.0, sym))
        phi = np.real(np.fft.ifftn(ph, axes=axes))
        sol = _as_columns(grid, phi)
    elif method == "direct":
        lu = _neumann_pinned_lu(grid)
        sol = np.zeros_like(cols)
        sol[1:] = lu.solve(np.ascontiguousarray(cols[1:]))
    elif method == "cg":
        L = grid.neumann_laplacian_matrix
        A = -L
        dinv = 1.0 / A.diagonal()
        M = spla.LinearOperator(A.shape, matvec=lambda x: dinv * x)
        maxiter = maxiter or 10 * grid.ncells
        sol = np.zeros_like(cols)
        for c in range(cols.shape[1]):
            b = -cols[:, c]
            if not np.any(b):
                continue
            x, info = spla.cg(A, b, rtol=tol * 0.1, atol=0.0, maxiter=maxiter, M=M)
            if info != 0:
                raise SolverError(f"CG did not converge in {maxiter} iterations")
            sol[:, c] = x
    else:
        raise ValueError(f"unknown method {method!r}")

    sol = sol - sol.mean(axis=0)
    res = grid.neumann_laplacian_matrix @ sol - cols
    scale = np.linalg.norm(cols, axis=0)
    bad = np.linalg.norm(res, axis=0) > tol * np.where(scale > 0, scale, 1.0)
    if np.any(bad & (scale > 0)):
        raise SolverError("Poisson solve missed the residual tolerance")
    return sol.reshape(rhs.shape)


class HelmholtzSolver:
    """Factorised ``(I - alpha * L)`` for repeated implicit solves.

    ``kind`` is ``'neumann'`` for cell fields or ``('velocity', k)`` for MAC
    component ``k`` with no-slip walls.
    """

    def __init__(self, grid: Grid, alpha: float, kind="neumann", shift: float = 1.0):
        self.grid = grid
        self.alpha = float(alpha)
        self.kind = kind
        L = grid.neumann_laplacian_matrix if kind == "neumann" else grid.velocity_laplacian_matrix(kind[1])
        n = L.shape[0]
        self.matrix = (float(shift) * sp.identity(n, format="csc") - self.alpha * L).tocsc()
        self._lu = spla.splu(self.matrix)
        self.shape = grid.dims if kind == "neumann" else grid.face_shape(kind[1])

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        n = int(np.prod(self.shape))
        cols = rhs.reshape(n, -1)
        sol = self._lu.solve(np.ascontiguousarray(cols))
        return sol.reshape(rhs.shape)


# ---------------------------------------------------------------------------
# MAC velocity
# ---------------------------------------------------------------------------


def zero_velocity(grid: Grid) -> tuple[np.ndarray, ...]:
    return tuple(np.zeros(grid.face_shape(k)) for k in range(grid.ndim))


def velocity_divergence(grid: Grid, u) -> np.ndarray:
    return divergence(grid, u)


def pressure_gradient(grid: Grid, p) -> tuple[np.ndarray, ...]:
    return gradient(grid, p, "neumann")


def velocity_laplacian(grid: Grid, u) -> tuple[np.ndarray, ...]:
    """Viscous Laplacian of a no-slip MAC velocity; wall values stay zero."""
    out = []
    for k in range(grid.ndim):
        uk = np.asarray(u[k], dtype=float)
        acc = np.zeros_like(uk)
        for m in range(grid.ndim):
            h, per = grid.spacing[m], grid.periodic[m]
            if m == k:
                acc += _diff_c2f(_diff_f2c(uk, m, h, per), m, h, per, "even")
            else:
                acc += _diff_f2c(_diff_c2f(uk, m, h, per, "odd"), m, h, per)
        out.append(_zero_walls(acc, k, grid.periodic[k]))
    return tuple(out)


def velocity_gradient_sq(grid: Grid, u) -> float:
    """``||grad u||^2`` matching the viscous operator: equals ``-<lap u, u>``."""
    total = 0.0
    for k in range(grid.ndim):
        uk = np.asarray(u[k], dtype=float)
        for m in range(grid.ndim):
            h, per = grid.spacing[m], grid.periodic[m]
            if m == k:
                g = _diff_f2c(uk, m, h, per)
                total += float(np.sum(g * g))
            else:
                g = _diff_c2f(uk, m, h, per, "odd")
                w = grid.face_weights(m)
                shape = [1] * g.ndim
                shape[m] = w.size
                total += float(np.sum(g * g * w.reshape(shape)))
    return total * grid.cell_volume


def velocity_inner(grid: Grid, u, v) -> float:
    return sum(face_inner(grid, k, u[k], v[k]) for k in range(grid.ndim))


def velocity_norm(grid: Grid, u) -> float:
    return math.sqrt(max(velocity_inner(grid, u, u), 0.0))


def cell_velocity_gradient(grid: Grid, u) -> np.ndarray:
    """``(grad u)_ij = d_j u_i`` at cell centres, padded to ``dims + (3, 3)``."""
    G = np.zeros(grid.dims + (3, 3))
    for i in range(grid.ndim):
        ui = np.asarray(u[i], dtype=float).reshape(-1)
        for j in range(grid.ndim):
            G[..., i, j] = (grid.cell_gradient_matrix(i, j) @ ui).reshape(grid.dims)
    return G


def cell_velocity_gradient_adjoint(grid: Grid, M) -> tuple[np.ndarray, ...]:
    """Face field ``V`` with ``<M, cell_velocity_gradient(u)> == <V, u>`` (plain sums)."""
    M = np.asarray(M, dtype=float)
    out = []
    for i in range(grid.ndim):
        acc = np.zeros(int(np.prod(grid.face_shape(i))))
        for j in range(grid.ndim):
            acc += grid.cell_gradient_matrix(i, j).T @ M[..., i, j].reshape(-1)
        out.append(_zero_walls(acc.reshape(grid.face_shape(i)), i, grid.periodic[i]))
    return tuple(out)


def convection(grid: Grid, u) -> tuple[np.ndarray, ...]:
    """Divergence-form ``div(u u)`` on the MAC grid with centred interpolation."""
    out = []
    for k in range(grid.ndim):
        uk = np.asarray(u[k], dtype=float)
        acc = np.zeros_like(uk)
        for m in range(grid.ndim):
            h = grid.spacing[m]
            if m == k:
                c = _avg_f2c(uk, k, grid.periodic[k])
                acc += _diff_c2f(c * c, k, h, grid.periodic[k], "even")
            else:
                uk_edge = _avg_c2f(uk, m, grid.periodic[m], "odd")
                um_edge = _avg_c2f(np.asarray(u[m], dtype=float), k, grid.periodic[k], "odd")
                acc += _diff_f2c(uk_edge * um_edge, m, h, grid.periodic[m])
        out.append(_zero_walls(acc, k, grid.periodic[k]))
    return tuple(out)


def project(grid: Grid, u, dt: float = 1.0, method: str = "auto"):
    """Chorin projection: returns ``(u - dt grad p, p)`` with ``lap p = div u / dt``."""
    div = velocity_divergence(grid, u)
    div = div - div.mean()
    p = poisson_solve(grid, div / dt, method=method)
    gp = pressure_gradient(grid, p)
    unew = tuple(_zero_walls(np.asarray(u[k]) - dt * gp[k], k, grid.periodic[k]) for k in range(grid.ndim))
    return unew, p


def velocity_to_cells(grid: Grid, u) -> np.ndarray:
    return np.stack([_avg_f2c(np.asarray(u[k]), k, grid.periodic[k]) for k in range(grid.ndim)],
                    axis=grid.ndim)


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_snapshot(path, grid: Grid, fields: dict) -> None:
    """Write a ``QTF1`` snapshot: one header line, then little-endian float64 blocks.

    Each block is a cell field stored in row-major cell order with any
    component axes innermost.
    """
    names = list(fields)
    if any("," in n or " " in n for n in names):
        raise ValueError("field names may not contain commas or spaces")
    dims = "x".join(str(n) for n in grid.dims)
    hs = set(grid.spacing)
    h = _fmt(grid.spacing[0]) if len(hs) == 1 else "x".join(_fmt(x) for x in grid.spacing)
    header = f"QTF1 dims={dims} h={h} fields={','.join(names)}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for n in names:
            arr = np.asarray(fields[n], dtype="<f8")
            if arr.shape[: grid.ndim] != grid.dims:
                raise ValueError(f"field {n!r} is not cell-located")
            fh.write(np.ascontiguousarray(arr).tobytes())


_COMPONENTS = {"Q": (3, 3), "H": (3, 3), "u": None, "p": ()}


def read_snapshot(path, shapes: dict | None = None):
    """Read a ``QTF1`` file; returns ``(dims, spacing, {name: array})``.

    Component shapes default to ``3x3`` for ``Q``/``H``, ``d`` for ``u`` and
    scalar otherwise; pass ``shapes`` to override.
    """
    with open(path, "rb") as fh:
        line = fh.readline().decode("ascii").strip()
        payload = fh.read()
    parts = line.split()
    if not parts or parts[0] != "QTF1":
        raise ValueError("not a QTF1 snapshot")
    kv = dict(p.split("=", 1) for p in parts[1:])
    dims = tuple(int(x) for x in kv["dims"].split("x"))
    hs = [float(x) for x in kv["h"].split("x")]
    spacing = tuple(hs * len(dims)) if len(hs) == 1 else tuple(hs)
    names = kv["fields"].split(",") if kv.get("fields") else []
    data = np.frombuffer(payload, dtype="<f8")
    ncell = int(np.prod(dims))
    out = {}
    offset = 0
    for n in names:
        if shapes and n in shapes:
            comp = tuple(shapes[n])
        else:
            comp = _COMPONENTS.get(n, ())
            if comp is None:
                comp = (len(dims),)
        size = ncell * int(np.prod(comp, dtype=int))
        out[n] = data[offset: offset + size].reshape(dims + comp).astype(float)
        offset += size
    if offset != data.size:
        raise ValueError("snapshot payload size does not match its header")
    return dims, spacing, out


def write_csv(path, grid: Grid, fields: dict) -> None:
    """One row per cell: indices, coordinates, then every field component."""
    letters = "ijk"[: grid.ndim]
    coords = "xyz"[: grid.ndim]
    cols = list(letters) + list(coords)
    flat = []
    for name, arr in fields.items():
        arr = np.asarray(arr, dtype=float)
        comp = arr.shape[grid.ndim:]
        arr = arr.reshape(grid.ncells, -1)
        if comp == ():
            cols.append(name)
        else:
            for idx in np.ndindex(*comp):
                cols.append(name + "_" + "".join(str(i + 1) for i in idx))
        flat.append(arr)
    data = np.hstack(flat) if flat else np.zeros((grid.ncells, 0))
    centers = [grid.cell_centers(a) for a in range(grid.ndim)]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row, idx in enumerate(np.ndindex(*grid.dims)):
            vals = [str(i) for i in idx] + [_fmt(centers[a][idx[a]]) for a in range(grid.ndim)]
            vals += [_fmt(x) for x in data[row]]
            fh.write(",".join(vals) + "\n")
