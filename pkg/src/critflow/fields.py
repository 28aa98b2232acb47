"""Derived fields and coordinate maps.

Builds, from a :class:`~critflow.expr.SystemDefinition`, the compiled
velocity field together with its exact symbolic Jacobian/Hessian, the
acceleration field (Jacobian contracted with the velocity), and the
pushforwards of velocity and acceleration under a coordinate map. The
acceleration field is constructed symbolically so root finding on it can
use exact first partials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .expr import (
    Const, DomainError, Expression, ExpressionError, Name, Unary,
    SystemDefinition, compile_array, compile_scalar, differentiate,
    e_add, e_div, e_func, e_mul, e_neg, e_pow, e_sub, free_variables,
    to_source,
)
from .region import AnalysisRegion, lattice_points

__all__ = [
    "JetValue", "VectorMap", "VectorField", "TransformationMap",
    "AffineConjugateField", "JetAccelerationMap",
    "InverseMismatchError", "jet", "acceleration_field", "acceleration_map",
    "pushforward_velocity", "pushforward_acceleration",
    "transformed_system", "image_region", "substitute",
    "default_target_names",
]


class InverseMismatchError(ValueError):
    def __init__(self, worst_residual: float, detail: str = ""):
        msg = f"declared inverse does not invert the map (worst residual {worst_residual:.3e})"
        super().__init__(msg + (f": {detail}" if detail else ""))
        self.worst_residual = worst_residual


@dataclass(frozen=True)
class JetValue:
    """Value, Jacobian and (for order-2 jets) Hessian of a vector map at a
    point. ``hessian[i, j, k]`` is the second partial of component i with
    respect to inputs j and k."""

    value: np.ndarray
    jacobian: np.ndarray
    hessian: np.ndarray | None = None


class VectorMap:
    """Vector of expressions over named inputs, with cached symbolic
    partials and compiled evaluators. Immutable once constructed."""

    def __init__(self, name: str, input_names: Sequence[str],
                 parameters: Mapping[str, float], components: Sequence[Expression]):
        self.name = name
        self.input_names = tuple(input_names)
        self.parameters = {k: float(v) for k, v in sorted(parameters.items())}
        self.components = tuple(components)
        declared = set(self.input_names) | set(self.parameters)
        for i, comp in enumerate(self.components):
            stray = free_variables(comp) - declared
            if stray:
                raise ExpressionError(f"component {i} references undeclared names {sorted(stray)}")
        self._args = self.input_names + tuple(self.parameters)
        self._param_values = tuple(self.parameters[k] for k in self.parameters)
        self.n_in = len(self.input_names)
        self.n_out = len(self.components)

    def source_strings(self) -> tuple[str, ...]:
        return tuple(to_source(c) for c in self.components)

    def __repr__(self):
        comps = ", ".join(self.source_strings())
        return f"<{type(self).__name__} {self.name}: [{comps}]>"

    # -- symbolic partials ------------------------------------------------

    @cached_property
    def jacobian_exprs(self) -> tuple[tuple[Expression, ...], ...]:
        return tuple(tuple(differentiate(c, x) for x in self.input_names)
                     for c in self.components)

    @cached_property
    def hessian_exprs(self) -> tuple[tuple[tuple[Expression, ...], ...], ...]:
        return tuple(tuple(tuple(differentiate(row_j, x_k) for x_k in self.input_names)
                           for row_j in (differentiate(c, x_j) for x_j in self.input_names))
                     for c in self.components)

    # -- compiled evaluators ----------------------------------------------

    @cached_property
    def _value_fns(self):
        return [compile_scalar(c, self._args) for c in self.components]

    @cached_property
    def _jacobian_fns(self):
        return [[compile_scalar(e, self._args) for e in row] for row in self.jacobian_exprs]

    @cached_property
    def _hessian_fns(self):
        return [[[compile_scalar(e, self._args) for e in row] for row in plane]
                for plane in self.hessian_exprs]

    @cached_property
    def _value_fns_array(self):
        return [compile_array(c, self._args) for c in self.components]

    def _call_args(self, point, params: Mapping[str, float] | None):
        if len(point) != self.n_in:
            raise ValueError(f"point has {len(point)} coordinates, map expects {self.n_in}")
        coords = point.tolist() if isinstance(point, np.ndarray) else [float(v) for v in point]
        if params is None:
            return (*coords, *self._param_values)
        merged = dict(self.parameters)
        merged.update({k: float(v) for k, v in params.items()})
        return (*coords, *(merged[k] for k in self.parameters))

    # -- evaluation ---------------------------------------------------------

    def value(self, point, params: Mapping[str, float] | None = None) -> np.ndarray:
        args = self._call_args(point, params)
        out = np.empty(self.n_out)
        for i, fn in enumerate(self._value_fns):
            v = fn(*args)
            if not math.isfinite(v):
                raise DomainError(f"component {i} of {self.name} is not finite at {list(point)}")
            out[i] = v
        return out

    def value_grid(self, points: np.ndarray,
                   params: Mapping[str, float] | None = None) -> np.ndarray:
        """Vectorized evaluation over rows of ``points``; out-of-domain rows
        come back NaN/inf rather than raising."""
        pts = np.asarray(points, dtype=float)
        cols = [pts[:, d] for d in range(self.n_in)]
        if params is None:
            extra = list(self._param_values)
        else:
            merged = dict(self.parameters)
            merged.update(params)
            extra = [merged[k] for k in self.parameters]
        out = np.empty((pts.shape[0], self.n_out))
        with np.errstate(all="ignore"):
            for i, fn in enumerate(self._value_fns_array):
                out[:, i] = np.broadcast_to(np.asarray(fn(*cols, *extra), dtype=float),
                                            pts.shape[0])
        return out

    def jacobian(self, point, params: Mapping[str, float] | None = None) -> np.ndarray:
        args = self._call_args(point, params)
        out = np.empty((self.n_out, self.n_in))
        for i, row in enumerate(self._jacobian_fns):
            for j, fn in enumerate(row):
                v = fn(*args)
                if not math.isfinite(v):
                    raise DomainError(f"jacobian[{i},{j}] of {self.name} is not finite")
                out[i, j] = v
        return out

    def hessian(self, point, params: Mapping[str, float] | None = None) -> np.ndarray:
        args = self._call_args(point, params)
        n = self.n_in
        out = np.empty((self.n_out, n, n))
        for i, plane in enumerate(self._hessian_fns):
            for j, row in enumerate(plane):
                for k, fn in enumerate(row):
                    v = fn(*args)
                    if not math.isfinite(v):
                        raise DomainError(f"hessian[{i},{j},{k}] of {self.name} is not finite")
                    out[i, j, k] = v
        return out

    def jet(self, point, order: int = 1,
            params: Mapping[str, float] | None = None) -> JetValue:
        if order not in (1, 2):
            raise ValueError("jet order must be 1 or 2")
        value = self.value(point, params)
        jac = self.jacobian(point, params)
        hess = self.hessian(point, params) if order == 2 else None
        return JetValue(value=value, jacobian=jac, hessian=hess)


def jet(field_or_map: VectorMap, point, order: int = 1,
        params: Mapping[str, float] | None = None) -> JetValue:
    """Value/Jacobian(/Hessian) of a field or map at a point, all from
    exact symbolic partials."""
    return field_or_map.jet(point, order=order, params=params)


class VectorField(VectorMap):
    """Velocity field of an autonomous system (square: n inputs, n outputs)."""

    def __init__(self, system: SystemDefinition):
        super().__init__(system.name, system.state_names, system.parameters,
                         system.components)
        self.system = system

    @property
    def dimension(self) -> int:
        return self.n_in


class JetAccelerationMap:
    """Acceleration field of ``base`` evaluated through its jets.

    value = Df f and jacobian = (D2f . f) + Df Df, contracted numerically
    from the base field's exact symbolic partials. Same values as the
    symbolic construction, but the cost stays flat for fields whose
    component trees are large (e.g. transformed systems).
    """

    def __init__(self, base: VectorField):
        self.base = base
        self.name = f"{base.name}_accel"
        self.input_names = base.input_names
        self.parameters = base.parameters
        self.n_in = base.n_in
        self.n_out = base.n_out

    def value(self, point, params: Mapping[str, float] | None = None) -> np.ndarray:
        j = self.base.jet(point, order=1, params=params)
        return j.jacobian @ j.value

    def jacobian(self, point, params: Mapping[str, float] | None = None) -> np.ndarray:
        j = self.base.jet(point, order=2, params=params)
        n = self.base.n_in
        curvature = (j.hessian.reshape(-1, n) @ j.value).reshape(j.jacobian.shape[0], n)
        return curvature + j.jacobian @ j.jacobian

    def jet(self, point, order: int = 1,
            params: Mapping[str, float] | None = None) -> JetValue:
        if order != 1:
            raise ValueError("jet-backed acceleration maps provide order-1 jets only")
        return JetValue(value=self.value(point, params),
                        jacobian=self.jacobian(point, params))


#: component trees above this node count make the symbolic acceleration
#: field slower than jet contraction
_SYMBOLIC_ACCEL_NODE_BUDGET = 1500


def _tree_size(e: Expression) -> int:
    if isinstance(e, (Const, Name)):
        return 1
    if isinstance(e, Unary):
        return 1 + _tree_size(e.arg)
    return 1 + _tree_size(e.left) + _tree_size(e.right)


def acceleration_map(f: VectorField):
    """The acceleration-field implementation root searches should use:
    symbolic for compact systems, jet-backed for large (composed) ones."""
    if isinstance(f, AffineConjugateField):
        return JetAccelerationMap(f)
    if sum(_tree_size(c) for c in f.components) > _SYMBOLIC_ACCEL_NODE_BUDGET:
        return JetAccelerationMap(f)
    return acceleration_field(f)


class TransformationMap(VectorMap):
    """Coordinate map with a declared domain box and linearity flag.

    ``declared_linear`` is asserted by the caller and verified by sampling:
    the Hessian must vanish (|entry| < 1e-12) at 100 lattice points of the
    domain.
    """

    def __init__(self, name: str, input_names: Sequence[str],
                 parameters: Mapping[str, float], components: Sequence[Expression],
                 domain: AnalysisRegion, declared_linear: bool,
                 inverse: VectorMap | None = None):
        super().__init__(name, input_names, parameters, components)
        if self.n_out != self.n_in:
            raise ExpressionError(
                f"transformation must be square, got {self.n_in} -> {self.n_out}")
        if domain.dimension != self.n_in:
            raise ExpressionError("domain dimension does not match the map")
        if inverse is not None and inverse.n_out != self.n_in:
            raise ExpressionError("inverse component count does not match the map")
        self.domain = domain
        self.declared_linear = bool(declared_linear)
        self.inverse = inverse
        if self.declared_linear:
            worst = 0.0
            for p in lattice_points(domain, 100, rng_seed=0):
                worst = max(worst, float(np.max(np.abs(self.hessian(p)))))
            if worst >= 1e-12:
                raise ExpressionError(
                    f"map declared linear but has Hessian entries up to {worst:.3e}")

    def target_names(self) -> tuple[str, ...]:
        if self.inverse is not None:
            return self.inverse.input_names
        return default_target_names(self.n_in, set(self.parameters))


def default_target_names(n: int, taken=()) -> tuple[str, ...]:
    names = ("y",) if n == 1 else tuple(f"y{i + 1}" for i in range(n))
    clash = set(names) & set(taken)
    if clash:
        raise ExpressionError(
            f"generated target names {sorted(clash)} collide with declared names; "
            f"rename the parameters")
    return names


# ---------------------------------------------------------------------------
# Symbolic constructions

def substitute(e: Expression, mapping: Mapping[str, Expression]) -> Expression:
    """Replace named leaves by expressions, re-folding constants."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Name):
        return mapping.get(e.ident, e)
    if isinstance(e, Unary):
        inner = substitute(e.arg, mapping)
        return e_neg(inner) if e.op == "neg" else e_func(e.op, inner)
    builders = {"+": e_add, "-": e_sub, "*": e_mul, "/": e_div, "^": e_pow}
    return builders[e.op](substitute(e.left, mapping), substitute(e.right, mapping))


class AffineConjugateField(VectorField):
    """Transformed system under an affine map, evaluated by composition.

    Carries the substituted symbolic components (so serialization and the
    symbolic API behave like any other field) but computes values and
    partials as A f(A^-1 (y - b)) with exact chain-rule contractions,
    which avoids the cost of the large substituted trees.
    """

    def __init__(self, system: SystemDefinition, base: VectorField,
                 matrix: np.ndarray, offset: np.ndarray, inverse_matrix: np.ndarray):
        super().__init__(system)
        self.base = base
        self._mat = matrix
        self._inv = inverse_matrix
        self._offset = offset
        self._inv_offset = inverse_matrix @ offset

    def _pull_back(self, point) -> np.ndarray:
        if len(point) != self.n_in:
            raise ValueError(f"point has {len(point)} coordinates, map expects {self.n_in}")
        return self._inv @ np.asarray(point, dtype=float) - self._inv_offset

    def value(self, point, params: Mapping[str, float] | None = None) -> np.ndarray:
        if params is not None:
            return super().value(point, params)
        return self._mat @ self.base.value(self._pull_back(point))

    def jacobian(self, point, params: Mapping[str, float] | None = None) -> np.ndarray:
        if params is not None:
            return super().jacobian(point, params)
        return self._mat @ self.base.jacobian(self._pull_back(point)) @ self._inv

    def hessian(self, point, params: Mapping[str, float] | None = None) -> np.ndarray:
        if params is not None:
            return super().hessian(point, params)
        hb = self.base.hessian(self._pull_back(point))
        return np.einsum("ip,pqr,qj,rk->ijk", self._mat, hb, self._inv, self._inv)

    def jet(self, point, order: int = 1,
            params: Mapping[str, float] | None = None) -> JetValue:
        if params is not None:
            return super().jet(point, order, params)
        x = self._pull_back(point)
        value = self._mat @ self.base.value(x)
        jac = self._mat @ self.base.jacobian(x) @ self._inv
        hess = None
        if order == 2:
            hess = np.einsum("ip,pqr,qj,rk->ijk", self._mat, self.base.hessian(x),
                             self._inv, self._inv)
        return JetValue(value=value, jacobian=jac, hessian=hess)

    def value_grid(self, points: np.ndarray,
                   params: Mapping[str, float] | None = None) -> np.ndarray:
        if params is not None:
            return super().value_grid(points, params)
        pulled = (np.asarray(points, dtype=float) - self._offset) @ self._inv.T
        return self.base.value_grid(pulled) @ self._mat.T


def acceleration_field(f: VectorField) -> VectorField:
    """Second-time-derivative field: component i is sum_j (df_i/dx_j) f_j,
    built symbolically so its own Jacobian stays exact."""
    comps = []
    for i in range(f.dimension):
        total: Expression = Const(0.0)
        for j in range(f.dimension):
            total = e_add(total, e_mul(f.jacobian_exprs[i][j], f.components[j]))
        comps.append(total)
    system = SystemDefinition(
        name=f"{f.name}_accel",
        state_names=f.input_names,
        parameters=dict(f.parameters),
        components=tuple(comps),
    )
    return VectorField(system)


def pushforward_velocity(f: VectorField, h: TransformationMap, point) -> np.ndarray:
    """Velocity of the transformed system at h(point): Dh(point) @ f(point)."""
    return h.jacobian(point) @ f.value(point)


def pushforward_acceleration(f: VectorField, h: TransformationMap, point) -> np.ndarray:
    """Acceleration of the transformed system at h(point).

    Component i is sum_jk H_h[i,j,k] f_j f_k + sum_j Dh[i,j] F_j, the
    Hessian term being the curvature correction that vanishes for linear h.
    """
    jf = f.jet(point, order=1)
    accel = jf.jacobian @ jf.value
    jh = h.jet(point, order=2)
    curvature = np.einsum("ijk,j,k->i", jh.hessian, jf.value, jf.value)
    return curvature + jh.jacobian @ accel


def transformed_system(f: VectorField, h: TransformationMap,
                       h_inverse: VectorMap | None = None,
                       name: str | None = None) -> VectorField:
    """Symbolic velocity field of the transformed system.

    Builds Dh f in source coordinates and substitutes the declared inverse,
    after verifying on 100 sampled domain points that the inverse actually
    inverts the map (worst residual below 1e-9).
    """
    if h_inverse is None:
        h_inverse = h.inverse
    if h_inverse is None:
        raise InverseMismatchError(math.inf, "no inverse supplied")
    if h_inverse.n_in != h.n_in or h_inverse.n_out != h.n_in:
        raise ExpressionError("inverse dimensions do not match the map")

    worst = 0.0
    for p in lattice_points(h.domain, 100, rng_seed=0):
        try:
            image = h.value(p)
            back = h_inverse.value(image)
        except DomainError as err:
            raise InverseMismatchError(math.inf, str(err)) from err
        worst = max(worst, float(np.max(np.abs(back - p))))
    if worst >= 1e-9:
        raise InverseMismatchError(worst)

    targets = h_inverse.input_names
    inverse_map = {x: h_inverse.components[k] for k, x in enumerate(h.input_names)}
    merged = dict(f.parameters)
    for k, v in {**h.parameters, **h_inverse.parameters}.items():
        if k in merged and merged[k] != v:
            raise ExpressionError(f"parameter {k!r} has conflicting values {merged[k]} and {v}")
        merged[k] = v
    if set(targets) & set(merged):
        raise ExpressionError("target state names collide with parameter names")

    comps = []
    for i in range(f.dimension):
        pushed: Expression = Const(0.0)
        for j in range(f.dimension):
            pushed = e_add(pushed, e_mul(h.jacobian_exprs[i][j], f.components[j]))
        comps.append(substitute(pushed, inverse_map))

    system = SystemDefinition(
        name=name or f"{f.name}_via_{h.name}",
        state_names=targets,
        parameters=merged,
        components=tuple(comps),
    )
    if h.declared_linear:
        composed = _affine_conjugate(system, f, h)
        if composed is not None:
            return composed
    return VectorField(system)


def _affine_conjugate(system: SystemDefinition, f: VectorField,
                      h: TransformationMap) -> "AffineConjugateField | None":
    """Composition-backed field for a verified-linear map; None if the map
    Jacobian is singular (no composition possible)."""
    from .linalg import SingularMatrixError, solve_linear

    center = 0.5 * (h.domain.lower + h.domain.upper)
    try:
        mat = h.jacobian(center)
        offset = h.value(center) - mat @ center
        inv = np.column_stack([solve_linear(mat, e) for e in np.eye(h.n_in)])
    except (DomainError, SingularMatrixError):
        return None
    return AffineConjugateField(system, f, mat, offset, inv)


def image_region(h: TransformationMap, samples: int = 200,
                 inflate: float = 0.02) -> AnalysisRegion:
    """Bounding box of the sampled image of h's domain (lattice plus
    corners), slightly inflated. A numerical stand-in for the exact image."""
    n = h.n_in
    pts = [lattice_points(h.domain, samples, rng_seed=0)]
    lower, upper = h.domain.lower, h.domain.upper
    corners = np.array([[(lower[d] if (mask >> d) & 1 == 0 else upper[d]) for d in range(n)]
                        for mask in range(2 ** n)])
    pts.append(corners)
    values = []
    for p in np.vstack(pts):
        try:
            values.append(h.value(p))
        except DomainError:
            continue
    if not values:
        raise DomainError(f"map {h.name} not evaluable anywhere on its domain")
    vals = np.array(values)
    lo, hi = vals.min(axis=0), vals.max(axis=0)
    pad = inflate * np.maximum(hi - lo, 1e-9)
    return AnalysisRegion(tuple((float(l - p), float(u + p))
                                for l, u, p in zip(lo, hi, pad)))
