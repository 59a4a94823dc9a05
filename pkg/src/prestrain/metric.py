"""Prestrain metric fields on a rectangular midplate and the builtin catalog.

A metric is a smooth field of symmetric positive definite 3x3 matrices
``G(x1, x2)``; it never depends on the thickness coordinate.  All evaluators
are vectorized: ``x1`` and ``x2`` broadcast against each other and the result
carries two trailing matrix axes.

Catalog metrics are written as sympy expressions so that first and second
derivatives are exact; metrics loaded from samples fall back to finite
differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import sympy as sp

X1, X2 = sp.symbols("x1 x2", real=True)

SPD_RTOL = 1e-10
FD_REL_STEP = 1e-4

_SYMPY_NAMES = {
    "x1": X1, "x2": X2, "exp": sp.exp, "log": sp.log, "sqrt": sp.sqrt,
    "sin": sp.sin, "cos": sp.cos, "tan": sp.tan, "atan": sp.atan,
    "atan2": sp.atan2, "sinh": sp.sinh, "cosh": sp.cosh, "pi": sp.pi,
}


class MetricError(ValueError):
    """Raised for non-SPD metrics or evaluation outside the domain."""


# ---------------------------------------------------------------------------
# grids and domains
# ---------------------------------------------------------------------------

Box = tuple[tuple[float, float], tuple[float, float]]


@dataclass(frozen=True)
class Grid2:
    """Uniform tensor grid covering a closed rectangle, boundary included."""

    x1_range: tuple[float, float] = (0.0, 1.0)
    x2_range: tuple[float, float] = (0.0, 1.0)
    nx: int = 33
    ny: int = 33

    def __post_init__(self):
        if self.nx < 5 or self.ny < 5:
            raise ValueError(f"grid needs at least 5 nodes per direction, got {self.nx}x{self.ny}")
        for lo, hi in (self.x1_range, self.x2_range):
            if not hi > lo:
                raise ValueError(f"empty interval ({lo}, {hi})")

    @classmethod
    def on(cls, domain: Box, n: int, m: int | None = None) -> "Grid2":
        return cls(tuple(domain[0]), tuple(domain[1]), n, n if m is None else m)

    @property
    def domain(self) -> Box:
        return (tuple(self.x1_range), tuple(self.x2_range))

    @property
    def x1(self) -> np.ndarray:
        return np.linspace(*self.x1_range, self.nx)

    @property
    def x2(self) -> np.ndarray:
        return np.linspace(*self.x2_range, self.ny)

    @property
    def h1(self) -> float:
        return (self.x1_range[1] - self.x1_range[0]) / (self.nx - 1)

    @property
    def h2(self) -> float:
        return (self.x2_range[1] - self.x2_range[0]) / (self.ny - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates with ``indexing='ij'`` (first axis is x1)."""
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def trapezoid_weights(self) -> np.ndarray:
        w1 = np.full(self.nx, self.h1)
        w1[[0, -1]] *= 0.5
        w2 = np.full(self.ny, self.h2)
        w2[[0, -1]] *= 0.5
        return np.outer(w1, w2)


def domain_diameter(domain: Box) -> float:
    (a, b), (c, d) = domain
    return float(np.hypot(b - a, d - c))


# ---------------------------------------------------------------------------
# sympy plumbing
# ---------------------------------------------------------------------------

def parse_expr(value) -> sp.Expr:
    """Turn a string / number / sympy object into an expression in x1, x2."""
    if isinstance(value, sp.Basic):
        return value
    if isinstance(value, (int, float)):
        return sp.Float(value) if isinstance(value, float) else sp.Integer(value)
    if isinstance(value, str):
        expr = sp.sympify(value, locals=_SYMPY_NAMES)
        extra = expr.free_symbols - {X1, X2}
        if extra:
            raise ValueError(f"expression {value!r} has unknown symbols {sorted(map(str, extra))}")
        return expr
    raise TypeError(f"cannot interpret {value!r} as an expression")


def lambdify_array(exprs, shape: Sequence[int]) -> Callable:
    """Vectorized evaluator of an array of expressions in (x1, x2).

    Constant entries are broadcast to the shape of the inputs.
    """
    flat = [sp.sympify(e) for e in np.asarray(exprs, dtype=object).ravel()]
    fn = sp.lambdify((X1, X2), flat, modules="numpy", cse=True)
    shape = tuple(shape)

    def evaluate(x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        vals = fn(x1, x2)
        out = np.empty(x1.shape + (len(flat),))
        for k, v in enumerate(vals):
            out[..., k] = v
        return out.reshape(x1.shape + shape)

    return evaluate


@dataclass(frozen=True)
class ScalarField:
    """A scalar function of (x1, x2) with exact gradient and Hessian."""

    expr: sp.Expr

    def __post_init__(self):
        object.__setattr__(self, "expr", parse_expr(self.expr))
        e = self.expr
        grad = [sp.diff(e, X1), sp.diff(e, X2)]
        hess = [[sp.diff(g, X1), sp.diff(g, X2)] for g in grad]
        object.__setattr__(self, "_value", lambdify_array([e], ()))
        object.__setattr__(self, "_grad", lambdify_array(grad, (2,)))
        object.__setattr__(self, "_hess", lambdify_array(hess, (2, 2)))

    def __call__(self, x1, x2):
        return self._value(x1, x2)

    def grad(self, x1, x2):
        return self._grad(x1, x2)

    def hess(self, x1, x2):
        return self._hess(x1, x2)

    def laplacian_expr(self) -> sp.Expr:
        return sp.diff(self.expr, X1, 2) + sp.diff(self.expr, X2, 2)


# ---------------------------------------------------------------------------
# metric fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricField:
    """Thickness-independent prestrain metric ``G(x1, x2)``.

    ``func`` maps broadcastable arrays ``(x1, x2)`` to ``(..., 3, 3)``.
    ``d1`` (optional) returns ``(..., 2, 3, 3)`` with ``[..., a, :, :] = d_a G``;
    ``d2`` (optional) returns ``(..., 2, 2, 3, 3)`` second derivatives.
    Without them, derivatives come from finite differences with step
    ``h_fd`` (default ``1e-4`` times the domain diameter).
    """

    func: Callable
    label: str = "metric"
    domain: Box = ((0.0, 1.0), (0.0, 1.0))
    d1: Callable | None = None
    d2: Callable | None = None
    h_fd: float | None = None
    expr: sp.Matrix | None = field(default=None, compare=False)
    params: Mapping = field(default_factory=dict, compare=False)

    def __call__(self, x1, x2) -> np.ndarray:
        return self.func(x1, x2)

    @property
    def analytic(self) -> bool:
        return self.d1 is not None and self.d2 is not None

    @property
    def fd_step(self) -> float:
        return self.h_fd if self.h_fd is not None else FD_REL_STEP * domain_diameter(self.domain)

    def contains(self, x1, x2, tol: float = 1e-12) -> np.ndarray:
        (a, b), (c, d) = self.domain
        x1, x2 = np.asarray(x1), np.asarray(x2)
        return (x1 >= a - tol) & (x1 <= b + tol) & (x2 >= c - tol) & (x2 <= d + tol)

    def grid(self, n: int = 33, m: int | None = None) -> Grid2:
        return Grid2.on(self.domain, n, m)

    def with_fd(self, h_fd: float | None = None) -> "MetricField":
        """Same metric with analytic derivatives dropped (forces the FD path)."""
        return MetricField(self.func, self.label + "[fd]", self.domain, None, None,
                           h_fd if h_fd is not None else self.h_fd, self.expr, self.params)


def metric_from_expr(G: sp.Matrix, label: str, domain: Box = ((0.0, 1.0), (0.0, 1.0)),
                     params: Mapping | None = None) -> MetricField:
    """Build a MetricField with exact derivatives from a symmetric sympy matrix."""
    G = sp.Matrix(G)
    if G.shape != (3, 3):
        raise ValueError("metric expression must be 3x3")
    named = {"x1": X1, "x2": X2}
    extra = {s for s in G.free_symbols if s not in (X1, X2)}
    unknown = sorted(s.name for s in extra if s.name not in named)
    if unknown:
        raise ValueError(f"{label}: metric expression has unknown symbols {unknown}")
    G = G.subs({s: named[s.name] for s in extra})
    diffs = [G[i, j] - G[j, i] for i in range(3) for j in range(i)]
    if any(e != 0 and sp.simplify(e) != 0 for e in diffs):
        raise MetricError(f"{label}: metric expression is not symmetric")
    entries = [[G[i, j] for j in range(3)] for i in range(3)]
    # differentiate the upper triangle once and mirror; mixed partials are shared
    up = [(i, j) for i in range(3) for j in range(i, 3)]
    g1 = {(a, i, j): sp.diff(G[i, j], v) for a, v in enumerate((X1, X2)) for i, j in up}
    g2 = {(a, b, i, j): sp.diff(g1[(a, i, j)], w)
          for a in range(2) for b, w in enumerate((X1, X2)) if b >= a for i, j in up}
    d1 = [[[g1[(a,) + tuple(sorted((i, j)))] for j in range(3)] for i in range(3)] for a in range(2)]
    d2 = [[[[g2[tuple(sorted((a, b))) + tuple(sorted((i, j)))] for j in range(3)] for i in range(3)]
           for b in range(2)] for a in range(2)]
    return MetricField(
        func=lambdify_array(entries, (3, 3)),
        label=label,
        domain=tuple(tuple(map(float, r)) for r in domain),
        d1=lambdify_array(d1, (2, 3, 3)),
        d2=lambdify_array(d2, (2, 2, 3, 3)),
        expr=G,
        params=dict(params or {}),
    )


# ---------------------------------------------------------------------------
# pointwise algebra
# ---------------------------------------------------------------------------

def check_spd(G: np.ndarray, rtol: float = SPD_RTOL, what: str = "metric") -> np.ndarray:
    """Eigenvalues of a (batched) symmetric matrix; raise if not safely SPD."""
    G = np.asarray(G, dtype=float)
    asym = np.max(np.abs(G - np.swapaxes(G, -1, -2)), initial=0.0)
    if asym > 1e-12 * max(1.0, np.max(np.abs(G), initial=0.0)):
        raise MetricError(f"{what} is not symmetric (max asymmetry {asym:.3e})")
    w = np.linalg.eigvalsh(G)
    bad = w[..., 0] < rtol * w[..., -1]
    if np.any(bad) or np.any(w[..., -1] <= 0):
        raise MetricError(
            f"{what} is not positive definite: min eigenvalue {w[..., 0].min():.3e}, "
            f"max eigenvalue {w[..., -1].max():.3e}")
    return w


def metric_sqrt(G: np.ndarray) -> np.ndarray:
    """Symmetric positive definite square root by spectral decomposition."""
    G = np.asarray(G, dtype=float)
    check_spd(G)
    w, V = np.linalg.eigh(G)
    return np.einsum("...ik,...k,...jk->...ij", V, np.sqrt(w), V)


def metric_inv_sqrt(G: np.ndarray) -> np.ndarray:
    G = np.asarray(G, dtype=float)
    check_spd(G)
    w, V = np.linalg.eigh(G)
    return np.einsum("...ik,...k,...jk->...ij", V, 1.0 / np.sqrt(w), V)


def principal_minor_2x2(G: np.ndarray) -> np.ndarray:
    return np.asarray(G)[..., :2, :2].copy()


def embed_star(F22: np.ndarray) -> np.ndarray:
    """3x3 matrix whose 2x2 principal minor is ``F22``, zeros elsewhere."""
    F22 = np.asarray(F22, dtype=float)
    out = np.zeros(F22.shape[:-2] + (3, 3))
    out[..., :2, :2] = F22
    return out


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------

def _check_inside(M: MetricField, x1, x2):
    inside = M.contains(x1, x2)
    if not np.all(inside):
        x1b, x2b = np.broadcast_arrays(x1, x2)
        k = np.flatnonzero(~np.asarray(inside).ravel())[0]
        raise MetricError(f"{M.label}: point ({x1b.ravel()[k]}, {x2b.ravel()[k]}) "
                          f"is outside the domain {M.domain}")


# 1D stencils: (offsets, weights) before division by h**order
_D1 = {"c": ((-1, 1), (-0.5, 0.5)),
       "f": ((0, 1, 2), (-1.5, 2.0, -0.5)),
       "b": ((0, -1, -2), (1.5, -2.0, 0.5))}
_D2 = {"c": ((-1, 0, 1), (1.0, -2.0, 1.0)),
       "f": ((0, 1, 2, 3), (2.0, -5.0, 4.0, -1.0)),
       "b": ((0, -1, -2, -3), (2.0, -5.0, 4.0, -1.0))}
_ID = {"c": ((0,), (1.0,)), "f": ((0,), (1.0,)), "b": ((0,), (1.0,))}


def _stencil_kind(x, h, lo, hi, reach):
    """'c' where a central stencil fits inside [lo, hi], else one-sided."""
    tol = 1e-12 * max(1.0, abs(hi - lo))
    kind = np.full(x.shape, "c")
    kind[x - reach * h < lo - tol] = "f"
    kind[x + reach * h > hi + tol] = "b"
    return kind


def _fd_apply(f: Callable, x1, x2, h: float, domain: Box, st1: dict, st2: dict):
    """Sum of ``w1 * w2 * f(x1 + o1 h, x2 + o2 h)`` with per-point stencil choice.

    ``st1``/``st2`` map stencil kind to (offsets, weights) along each axis; the
    caller divides by the appropriate power of ``h``.
    """
    x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
    (a, b), (c, d) = domain
    k1 = _stencil_kind(x1, h, a, b, 1) if st1 is not _ID else np.full(x1.shape, "c")
    k2 = _stencil_kind(x2, h, c, d, 1) if st2 is not _ID else np.full(x2.shape, "c")
    out = None
    for s1 in "cfb":
        for s2 in "cfb":
            m = (k1 == s1) & (k2 == s2)
            if not np.any(m):
                continue
            a1, a2 = x1[m], x2[m]
            (o1, w1), (o2, w2) = st1[s1], st2[s2]
            val = 0.0
            for oi, wi in zip(o1, w1):
                for oj, wj in zip(o2, w2):
                    val = val + (wi * wj) * f(a1 + oi * h, a2 + oj * h)
            if out is None:
                out = np.empty(x1.shape + val.shape[1:])
            out[m] = val
    return out


def metric_derivatives(M: MetricField, x1, x2, h_fd: float | None = None,
                       force_fd: bool = False) -> np.ndarray:
    """First derivatives ``(..., 2, 3, 3)``: analytic if available, else FD.

    The finite-difference path is second order: central in the interior,
    one-sided three-point stencils where a central step would leave the domain.
    """
    _check_inside(M, x1, x2)
    if M.d1 is not None and not force_fd:
        return M.d1(x1, x2)
    h = h_fd if h_fd is not None else M.fd_step
    g1 = _fd_apply(M.func, x1, x2, h, M.domain, _D1, _ID) / h
    g2 = _fd_apply(M.func, x1, x2, h, M.domain, _ID, _D1) / h
    return np.stack([g1, g2], axis=-3)


def metric_second_derivatives(M: MetricField, x1, x2, h_fd: float | None = None,
                              force_fd: bool = False) -> np.ndarray:
    """Second derivatives ``(..., 2, 2, 3, 3)`` with ``[a, b] = d_a d_b G``.

    FD path: second-order three-/four-point stencils for the pure derivatives
    and products of first-derivative stencils for the mixed one, all applied to
    G directly so that no stencil switch is differenced twice.
    """
    _check_inside(M, x1, x2)
    if M.d2 is not None and not force_fd:
        return M.d2(x1, x2)
    h = h_fd if h_fd is not None else M.fd_step
    g11 = _fd_apply(M.func, x1, x2, h, M.domain, _D2, _ID) / h ** 2
    g22 = _fd_apply(M.func, x1, x2, h, M.domain, _ID, _D2) / h ** 2
    g12 = _fd_apply(M.func, x1, x2, h, M.domain, _D1, _D1) / h ** 2
    row1 = np.stack([g11, g12], axis=-3)
    row2 = np.stack([g12, g22], axis=-3)
    return np.stack([row1, row2], axis=-4)


# ---------------------------------------------------------------------------
# sampled metrics
# ---------------------------------------------------------------------------

def sampled_metric(samples: np.ndarray, grid: Grid2, label: str = "sampled") -> MetricField:
    """Metric known at grid nodes, bilinearly interpolated in between."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape != grid.shape + (3, 3):
        raise ValueError(f"samples must have shape {grid.shape + (3, 3)}, got {samples.shape}")
    samples = 0.5 * (samples + np.swapaxes(samples, -1, -2))
    check_spd(samples, what=f"{label} samples")
    xs, ys = grid.x1, grid.x2

    def func(x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        u = np.clip((x1 - xs[0]) / grid.h1, 0, grid.nx - 1 - 1e-12)
        v = np.clip((x2 - ys[0]) / grid.h2, 0, grid.ny - 1 - 1e-12)
        i = np.minimum(u.astype(int), grid.nx - 2)
        j = np.minimum(v.astype(int), grid.ny - 2)
        s = (u - i)[..., None, None]
        t = (v - j)[..., None, None]
        return ((1 - s) * (1 - t) * samples[i, j] + s * (1 - t) * samples[i + 1, j]
                + (1 - s) * t * samples[i, j + 1] + s * t * samples[i + 1, j + 1])

    return MetricField(func=func, label=label, domain=grid.domain)


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------

UNIT_SQUARE: Box = ((0.0, 1.0), (0.0, 1.0))
EX64_DOMAIN: Box = ((1.2, 2.2), (0.1, 1.1))


def euclidean(domain: Box = UNIT_SQUARE) -> MetricField:
    return metric_from_expr(sp.eye(3), "euclidean", domain)


def example_61(lam="1 + x1**2", domain: Box = UNIT_SQUARE) -> MetricField:
    """``diag(1, 1, lam)``: flat midplate, zero bending, generally non-immersible."""
    lam = parse_expr(lam)
    return metric_from_expr(sp.diag(1, 1, lam), "ex61", domain, {"lam": str(lam)})


def example_62(lam="exp(x1)", domain: Box = UNIT_SQUARE) -> MetricField:
    """Conformal metric ``lam * Id3``."""
    lam = parse_expr(lam)
    return metric_from_expr(lam * sp.eye(3), "ex62", domain, {"lam": str(lam)})


def example_63(lam1="0", lam2="x1**2", lam3=None, domain: Box = UNIT_SQUARE,
               label: str = "ex63") -> MetricField:
    """Shear family with unit midplate metric; ``lam3`` defaults to
    ``lam1**2 + lam2**2 + 1``."""
    l1, l2 = parse_expr(lam1), parse_expr(lam2)
    l3 = l1 ** 2 + l2 ** 2 + 1 if lam3 is None else parse_expr(lam3)
    G = sp.Matrix([[1, 0, l1], [0, 1, l2], [l1, l2, l3]])
    return metric_from_expr(G, label, domain,
                            {"lam1": str(l1), "lam2": str(l2), "lam3": str(l3)})


def example_63ii(lam2="x1**2", domain: Box = UNIT_SQUARE) -> MetricField:
    return example_63("0", lam2, None, domain, label="ex63ii")


def example_63iii(domain: Box = UNIT_SQUARE) -> MetricField:
    """Cylinder-realizable shear metric with ``lam2 = -x2``."""
    return example_63("0", "-x2", "x2**2 + 1", domain, label="ex63iii")


def ex64_bvec() -> list[sp.Expr]:
    return [-X1 ** 3 / 3, X2 ** 3 / 3, (X1 ** 2 - X2 ** 2) / 2]


def example_64(domain: Box = EX64_DOMAIN) -> MetricField:
    """``G = Q^T Q`` with ``Q = [d1 y, d2 y, b]`` over the paraboloid
    ``y = (x1, x2, (x1^2 + x2^2)/2)``; needs ``x1 > x2 > 0`` on the domain."""
    (a, b), (c, d) = domain
    if not (c > 0 and a > d):
        raise MetricError("the ex64 metric needs a domain inside {x1 > x2 > 0}")
    bv = ex64_bvec()
    G = sp.Matrix([
        [1 + X1 ** 2, X1 * X2, bv[0] + X1 * bv[2]],
        [X1 * X2, 1 + X2 ** 2, bv[1] + X2 * bv[2]],
        [bv[0] + X1 * bv[2], bv[1] + X2 * bv[2], sum(t ** 2 for t in bv)],
    ])
    return metric_from_expr(G, "ex64", domain)


def _nematic_from_params(**params) -> MetricField:
    from .nematic import director_from_params, nematic_metric

    return nematic_metric(director_from_params(**params))


CATALOG: dict[str, Callable[..., MetricField]] = {
    "euclidean": euclidean,
    "ex61": example_61,
    "ex62": example_62,
    "ex63": example_63,
    "ex63ii": example_63ii,
    "ex63iii": example_63iii,
    "ex64": example_64,
    "nematic": _nematic_from_params,
}


def catalog_metric(name: str, **params) -> MetricField:
    try:
        ctor = CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown catalog metric {name!r}; known: {sorted(CATALOG)}") from None
    if "domain" in params and params["domain"] is not None:
        params["domain"] = tuple(tuple(map(float, r)) for r in params["domain"])
    return ctor(**params)


def metric_from_config(cfg: Mapping) -> MetricField:
    """``{"catalog": name, "params": {...}}`` or
    ``{"samples": [[3x3]...], "grid": {"x1_range", "x2_range", "nx", "ny"}}``.

    Sample arrays are row-major over the grid (x1 slowest).
    """
    if "catalog" in cfg:
        return catalog_metric(cfg["catalog"], **dict(cfg.get("params") or {}))
    if "samples" in cfg:
        g = cfg["grid"]
        grid = Grid2(tuple(g["x1_range"]), tuple(g["x2_range"]), int(g["nx"]), int(g["ny"]))
        arr = np.asarray(cfg["samples"], dtype=float).reshape(grid.shape + (3, 3))
        return sampled_metric(arr, grid, cfg.get("label", "sampled"))
    raise ValueError("metric config needs either 'catalog' or 'samples'")
