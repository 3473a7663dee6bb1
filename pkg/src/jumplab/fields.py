"""Coefficient fields with exact derivatives, and the differential operators.

Builtin fields (polynomials, trigonometric waves, boundary-distance powers)
carry closed-form partial derivatives, so repeated applications of the
adjoint operator stay exact all the way to the boundary.  Nested numerical
differentiation there would be one-sided and noisy, which is why a
finite-difference fallback exists only for user-supplied black-box callables
and is flagged as reduced accuracy.

Operators, written for the generator  G = (1/2) div(a grad) + b . grad:

    apply_generator        G phi
    apply_adjoint          (1/2) div(a grad psi) - b . grad psi - (div b) psi
    apply_adjoint_power    m-fold composition of the adjoint
    nondivergence_drift    B = b + (1/2) div(a), the drift seen by the
                           simulated process (covariance comes from a)
    diffusion_root         lower-triangular s with s s^T = a(x)
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DerivativeOrderError, ValidationError
from .geometry import Domain, as_points

MultiIndex = tuple


def _as_multi_index(beta, dim):
    if beta is None:
        return (0,) * dim
    beta = tuple(int(b) for b in beta)
    if len(beta) != dim or any(b < 0 for b in beta):
        raise ValueError(f"bad multi-index {beta} for dimension {dim}")
    return beta


def multi_indices(dim, order):
    """All multi-indices of total order exactly ``order`` in ``dim`` variables."""
    if dim == 1:
        return [(order,)]
    return [(i, order - i) for i in range(order + 1)]


def _falling(e, k):
    # e * (e-1) * ... * (e-k+1)
    out = 1
    for j in range(k):
        out *= e - j
    return out


class ScalarField:
    """Base: real field on R^d evaluated together with partial derivatives."""

    dim: int
    max_order: float  # math.inf for analytic builtins

    def eval(self, pts, beta=None):
        """Evaluate the ``beta`` partial derivative at an (n, d) point array."""
        raise NotImplementedError

    def __call__(self, x, beta=None):
        pts, single = as_points(x, self.dim)
        beta = _as_multi_index(beta, self.dim)
        if sum(beta) > self.max_order:
            raise DerivativeOrderError(
                f"derivative order {sum(beta)} exceeds declared order {self.max_order}")
        vals = self.eval(pts, beta)
        return float(vals[0]) if single else vals

    def derivative(self, beta):
        """The derivative as a field (exact for analytic builtins)."""
        beta = _as_multi_index(beta, self.dim)
        if sum(beta) == 0:
            return self
        if sum(beta) > self.max_order:
            raise DerivativeOrderError(
                f"derivative order {sum(beta)} exceeds declared order {self.max_order}")
        return DerivShift(self, beta)

    def gradient(self):
        return [self.derivative(tuple(1 if j == i else 0 for j in range(self.dim)))
                for i in range(self.dim)]

    def constant_value(self):
        """The field's constant value, or None if not (recognizably) constant."""
        return None

    @property
    def reduced_accuracy(self):
        return False

    # algebra sugar
    def __add__(self, other):
        return LinearCombo(((1.0, self), (1.0, other)))

    def __sub__(self, other):
        return LinearCombo(((1.0, self), (-1.0, other)))

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            return Product(self, other)
        return LinearCombo(((float(other), self),))

    __rmul__ = __mul__


@dataclass(frozen=True)
class PolyField(ScalarField):
    """Polynomial given by {multi-index exponent: coefficient}."""

    dim: int
    coeffs: tuple  # tuple of (exponent multi-index, coefficient)

    @staticmethod
    def from_dict(dim, coeffs):
        items = tuple(sorted((tuple(int(i) for i in e), float(c))
                             for e, c in coeffs.items() if c != 0.0))
        for e, _ in items:
            if len(e) != dim or any(i < 0 for i in e):
                raise ValueError(f"bad exponent {e} for dimension {dim}")
        return PolyField(dim, items)

    @staticmethod
    def constant(dim, value):
        return PolyField.from_dict(dim, {(0,) * dim: float(value)})

    @property
    def max_order(self):
        return math.inf

    def eval(self, pts, beta):
        out = np.zeros(len(pts))
        for expo, c in self.coeffs:
            coef = c
            ok = True
            for e, b in zip(expo, beta):
                if b > e:
                    ok = False
                    break
                coef *= _falling(e, b)
            if not ok:
                continue
            term = np.full(len(pts), coef)
            for ax, (e, b) in enumerate(zip(expo, beta)):
                if e - b > 0:
                    term = term * pts[:, ax] ** (e - b)
            out += term
        return out

    def derivative(self, beta):
        beta = _as_multi_index(beta, self.dim)
        new = {}
        for expo, c in self.coeffs:
            if any(b > e for e, b in zip(expo, beta)):
                continue
            coef = c
            for e, b in zip(expo, beta):
                coef *= _falling(e, b)
            new_e = tuple(e - b for e, b in zip(expo, beta))
            new[new_e] = new.get(new_e, 0.0) + coef
        return PolyField.from_dict(self.dim, new)

    def constant_value(self):
        if not self.coeffs:
            return 0.0
        if len(self.coeffs) == 1 and sum(self.coeffs[0][0]) == 0:
            return self.coeffs[0][1]
        return None


@dataclass(frozen=True)
class TrigWave(ScalarField):
    """amp * cos(freq . x + phase); sin comes in with a phase shift."""

    dim: int
    amp: float
    freq: tuple
    phase: float

    @staticmethod
    def make(dim, fn, freq, phase=0.0, amp=1.0):
        freq = tuple(float(f) for f in freq)
        if len(freq) != dim:
            raise ValueError("freq must have one entry per axis")
        if fn == "cos":
            off = 0.0
        elif fn == "sin":
            off = -math.pi / 2.0
        else:
            raise ValueError("fn must be 'sin' or 'cos'")
        return TrigWave(dim, float(amp), freq, float(phase) + off)

    @property
    def max_order(self):
        return math.inf

    def eval(self, pts, beta):
        m = sum(beta)
        coef = self.amp * np.prod([f ** b for f, b in zip(self.freq, beta)])
        arg = pts @ np.asarray(self.freq) + self.phase + m * math.pi / 2.0
        return coef * np.cos(arg)

    def derivative(self, beta):
        beta = _as_multi_index(beta, self.dim)
        m = sum(beta)
        coef = self.amp * math.prod(f ** b for f, b in zip(self.freq, beta))
        return TrigWave(self.dim, coef, self.freq, self.phase + m * math.pi / 2.0)


@dataclass(frozen=True)
class DistPowerField(ScalarField):
    """dist(x, boundary)^power times a smooth factor; values only (order 0).

    Used for intensities that vanish on the boundary to a prescribed order.
    The signed distance is clipped at zero outside the closure.
    """

    domain: Domain
    power: int
    factor: ScalarField

    @property
    def dim(self):
        return self.domain.dim

    @property
    def max_order(self):
        return 0

    def eval(self, pts, beta):
        if sum(beta) > 0:
            raise DerivativeOrderError("distance-power fields supply values only")
        d = np.maximum(np.atleast_1d(self.domain.signed_distance(pts)), 0.0)
        return d ** self.power * self.factor.eval(pts, (0,) * self.dim)


class CallableField(ScalarField):
    """Black-box callable with finite-difference derivatives (reduced accuracy).

    Central second-order stencils, switching to one-sided next to the
    boundary; step h = 1e-5 * diameter.  Capped at second derivatives.
    Exists for user-supplied fields only; builtins carry exact derivatives.
    """

    def __init__(self, fn, domain, max_order=2):
        if max_order > 2:
            raise ValueError("finite-difference fallback supports order <= 2")
        self.fn = fn
        self.domain = domain
        self.dim = domain.dim
        self.max_order = int(max_order)
        self.h = 1e-5 * domain.diameter

    @property
    def reduced_accuracy(self):
        return True

    def _values(self, pts):
        arg = pts if self.dim > 1 else pts[:, 0]
        try:  # vectorized callables are accepted directly
            out = np.asarray(self.fn(arg), dtype=float)
            if out.shape == (len(pts),):
                return out
        except (TypeError, ValueError):
            pass
        return np.asarray([self.fn(p if self.dim > 1 else p[0]) for p in pts], dtype=float)

    def eval(self, pts, beta):
        m = sum(beta)
        if m > self.max_order:
            raise DerivativeOrderError(
                f"derivative order {m} exceeds declared order {self.max_order}")
        if m == 0:
            return self._values(pts)
        # peel one derivative off the first active axis, recurse on the rest
        axis = next(i for i, b in enumerate(beta) if b > 0)
        rest = tuple(b - 1 if i == axis else b for i, b in enumerate(beta))
        h = self.h
        e = np.zeros(self.dim)
        e[axis] = 1.0
        tol = -self.domain.boundary_tol
        inside_p = self.domain.signed_distance(pts + h * e) > tol
        inside_m = self.domain.signed_distance(pts - h * e) > tol
        at = lambda sub, shift: self.eval(pts[sub] + shift * e, rest)
        out = np.empty(len(pts))
        both = inside_p & inside_m
        if np.any(both):
            out[both] = (at(both, h) - at(both, -h)) / (2 * h)
        only_p = inside_p & ~inside_m
        if np.any(only_p):
            out[only_p] = (-3 * at(only_p, 0.0) + 4 * at(only_p, h) - at(only_p, 2 * h)) / (2 * h)
        only_m = ~inside_p & inside_m
        if np.any(only_m):
            out[only_m] = (3 * at(only_m, 0.0) - 4 * at(only_m, -h) + at(only_m, -2 * h)) / (2 * h)
        return out


@dataclass(frozen=True)
class LinearCombo(ScalarField):
    terms: tuple  # tuple of (coefficient, field)

    @property
    def dim(self):
        return self.terms[0][1].dim

    @property
    def max_order(self):
        return min(f.max_order for _, f in self.terms)

    def eval(self, pts, beta):
        out = np.zeros(len(pts))
        for c, f in self.terms:
            out += c * f.eval(pts, beta)
        return out

    def derivative(self, beta):
        beta = _as_multi_index(beta, self.dim)
        return LinearCombo(tuple((c, f.derivative(beta)) for c, f in self.terms))

    def constant_value(self):
        total = 0.0
        for c, f in self.terms:
            v = f.constant_value()
            if v is None:
                return None
            total += c * v
        return total

    @property
    def reduced_accuracy(self):
        return any(f.reduced_accuracy for _, f in self.terms)


@dataclass(frozen=True)
class Product(ScalarField):
    left: ScalarField
    right: ScalarField

    @property
    def dim(self):
        return self.left.dim

    @property
    def max_order(self):
        return min(self.left.max_order, self.right.max_order)

    def eval(self, pts, beta):
        # Leibniz over all sub-multi-indices of beta
        out = np.zeros(len(pts))
        ranges = [range(b + 1) for b in beta]
        for gamma in itertools.product(*ranges):
            binom = math.prod(math.comb(b, g) for b, g in zip(beta, gamma))
            rest = tuple(b - g for b, g in zip(beta, gamma))
            out += binom * self.left.eval(pts, gamma) * self.right.eval(pts, rest)
        return out

    def constant_value(self):
        lv, rv = self.left.constant_value(), self.right.constant_value()
        if lv is None or rv is None:
            return None
        return lv * rv

    @property
    def reduced_accuracy(self):
        return self.left.reduced_accuracy or self.right.reduced_accuracy


@dataclass(frozen=True)
class DerivShift(ScalarField):
    base: ScalarField
    shift: tuple

    @property
    def dim(self):
        return self.base.dim

    @property
    def max_order(self):
        return self.base.max_order - sum(self.shift)

    def eval(self, pts, beta):
        total = tuple(s + b for s, b in zip(self.shift, beta))
        return self.base.eval(pts, total)

    def constant_value(self):
        v = self.base.constant_value()
        if v is not None:  # derivative of a constant
            return 0.0
        if isinstance(self.base, PolyField):
            return self.base.derivative(self.shift).constant_value()
        return None

    @property
    def reduced_accuracy(self):
        return self.base.reduced_accuracy


def const(dim, value):
    return PolyField.constant(dim, value)


# ---------------------------------------------------------------------------
# vector / matrix fields


@dataclass(frozen=True)
class VectorField:
    components: tuple  # tuple of ScalarField

    @property
    def dim(self):
        return len(self.components)

    def __call__(self, x):
        pts, single = as_points(x, self.dim)
        vals = np.stack([c.eval(pts, (0,) * self.dim) for c in self.components], axis=1)
        return vals[0] if single else vals

    def divergence(self):
        d = self.dim
        return LinearCombo(tuple(
            (1.0, c.derivative(tuple(1 if j == i else 0 for j in range(d))))
            for i, c in enumerate(self.components)))

    @staticmethod
    def zero(dim):
        return VectorField(tuple(const(dim, 0.0) for _ in range(dim)))

    @staticmethod
    def constant(values):
        values = tuple(float(v) for v in values)
        return VectorField(tuple(const(len(values), v) for v in values))


@dataclass(frozen=True)
class MatrixField:
    """Symmetric d x d matrix of scalar fields (the diffusion matrix)."""

    entries: tuple  # tuple of rows, each a tuple of ScalarField

    @property
    def dim(self):
        return len(self.entries)

    def entry(self, i, j):
        return self.entries[i][j]

    def __call__(self, x):
        pts, single = as_points(x, self.dim)
        d = self.dim
        out = np.empty((len(pts), d, d))
        zero = (0,) * d
        for i in range(d):
            for j in range(d):
                out[:, i, j] = self.entries[i][j].eval(pts, zero)
        return out[0] if single else out

    @staticmethod
    def isotropic(dim, sf: ScalarField):
        z = const(dim, 0.0)
        rows = tuple(tuple(sf if i == j else z for j in range(dim)) for i in range(dim))
        return MatrixField(rows)

    @staticmethod
    def identity(dim):
        return MatrixField.isotropic(dim, const(dim, 1.0))

    @staticmethod
    def from_entries(rows):
        d = len(rows)
        for i in range(d):
            for j in range(i):
                if rows[i][j] is not rows[j][i]:
                    # symmetrize: trust the upper triangle
                    rows = [list(r) for r in rows]
                    rows[i][j] = rows[j][i]
        return MatrixField(tuple(tuple(r) for r in rows))

    def is_isotropic(self):
        """True if off-diagonal entries are the zero constant and diagonals match."""
        d = self.dim
        for i in range(d):
            for j in range(d):
                if i != j and self.entries[i][j].constant_value() != 0.0:
                    return False
        return all(self.entries[i][i] is self.entries[0][0]
                   or self.entries[i][i] == self.entries[0][0]
                   for i in range(d))


# ---------------------------------------------------------------------------
# coefficient bundle


@dataclass(frozen=True)
class CoefficientSet:
    """Everything the solvers need: diffusion a, drift b, jump intensity,
    redistribution density, boundary data, and the declared vanishing order
    of the redistribution density at the boundary.
    """

    diffusion: MatrixField
    drift: VectorField
    intensity: ScalarField          # exponential clock rate, > 0 on the closure
    redistribution: ScalarField     # jump target density, integrates to 1
    boundary_data: ScalarField
    vanishing_order: int
    allow_vanishing_intensity: bool = False

    @property
    def dim(self):
        return self.diffusion.dim

    def with_drift(self, drift: VectorField):
        return CoefficientSet(self.diffusion, drift, self.intensity,
                              self.redistribution, self.boundary_data,
                              self.vanishing_order, self.allow_vanishing_intensity)

    @property
    def reduced_accuracy(self):
        fields = [self.intensity, self.redistribution, self.boundary_data]
        fields += [c for c in self.drift.components]
        fields += [e for row in self.diffusion.entries for e in row]
        return any(f.reduced_accuracy for f in fields)


def validate_coefficients(domain: Domain, coeffs: CoefficientSet,
                          sample_resolution=400, mass_tol=1e-6):
    """Check the structural invariants on a sample of the closed domain.

    Raises ValidationError on: non-SPD diffusion, non-positive intensity
    (unless explicitly allowed for vanishing-intensity probes), negative
    redistribution density, or redistribution mass off 1 beyond ``mass_tol``.
    Returns a small report dict.
    """
    iq = domain.interior_quadrature(sample_resolution if domain.dim == 1 else
                                    max(40, int(math.isqrt(sample_resolution)) * 4))
    bq = domain.boundary_quadrature(64)
    sample = np.concatenate([iq.nodes, bq.nodes])

    amat = coeffs.diffusion(sample)
    eigmin = float(np.min(np.linalg.eigvalsh(amat)))
    if eigmin <= 0.0:
        raise ValidationError(f"diffusion matrix not positive definite: min eigenvalue {eigmin:.3e}")

    v = coeffs.intensity(sample)
    vmin_interior = float(np.min(coeffs.intensity(iq.nodes)))
    if not coeffs.allow_vanishing_intensity and np.min(v) <= 0.0:
        raise ValidationError(f"intensity must be positive on the closure, min = {np.min(v):.3e}")
    if coeffs.allow_vanishing_intensity and vmin_interior < 0.0:
        raise ValidationError("intensity negative inside the domain")

    mu = coeffs.redistribution(sample)
    if np.min(mu) < -1e-12 * max(1.0, np.max(np.abs(mu))):
        raise ValidationError(f"redistribution density negative: min = {np.min(mu):.3e}")
    big = domain.interior_quadrature(10**5 if domain.dim == 1 else 1000)
    mass = float(big.weights @ coeffs.redistribution(big.nodes))
    if abs(mass - 1.0) > mass_tol:
        raise ValidationError(f"redistribution mass is {mass:.8f}, expected 1 within {mass_tol:g}")

    return {
        "diffusion_min_eigenvalue": eigmin,
        "intensity_min": float(np.min(v)),
        "redistribution_min": float(np.min(mu)),
        "redistribution_mass": mass,
        "reduced_accuracy": coeffs.reduced_accuracy,
    }


# ---------------------------------------------------------------------------
# operators


def _unit(dim, axis):
    return tuple(1 if j == axis else 0 for j in range(dim))


def apply_generator(coeffs: CoefficientSet, phi: ScalarField) -> ScalarField:
    """(1/2) sum_ij d_i(a_ij d_j phi) + sum_i b_i d_i phi, as a field.

    Needs phi twice differentiable and a once; the result's declared order
    drops accordingly.
    """
    d = coeffs.dim
    if phi.max_order < 2:
        raise DerivativeOrderError("apply_generator needs a field of order >= 2")
    terms = []
    for i in range(d):
        ei = _unit(d, i)
        for j in range(d):
            ej = _unit(d, j)
            a_ij = coeffs.diffusion.entry(i, j)
            if a_ij.constant_value() == 0.0:
                continue
            # (1/2)[(d_i a_ij)(d_j phi) + a_ij d_i d_j phi]
            terms.append((0.5, Product(a_ij.derivative(ei), phi.derivative(ej))))
            terms.append((0.5, Product(a_ij, phi.derivative(tuple(x + y for x, y in zip(ei, ej))))))
        b_i = coeffs.drift.components[i]
        if b_i.constant_value() != 0.0:
            terms.append((1.0, Product(b_i, phi.derivative(ei))))
    return LinearCombo(tuple(terms))


def apply_adjoint(coeffs: CoefficientSet, psi: ScalarField) -> ScalarField:
    """(1/2) div(a grad psi) - b . grad psi - (div b) psi."""
    d = coeffs.dim
    if psi.max_order < 2:
        raise DerivativeOrderError("apply_adjoint needs a field of order >= 2")
    terms = []
    for i in range(d):
        ei = _unit(d, i)
        for j in range(d):
            ej = _unit(d, j)
            a_ij = coeffs.diffusion.entry(i, j)
            if a_ij.constant_value() == 0.0:
                continue
            terms.append((0.5, Product(a_ij.derivative(ei), psi.derivative(ej))))
            terms.append((0.5, Product(a_ij, psi.derivative(tuple(x + y for x, y in zip(ei, ej))))))
        b_i = coeffs.drift.components[i]
        if b_i.constant_value() != 0.0:
            terms.append((-1.0, Product(b_i, psi.derivative(ei))))
        db_i = b_i.derivative(ei)
        if db_i.constant_value() != 0.0:
            terms.append((-1.0, Product(db_i, psi)))
    if not terms:
        terms = [(0.0, psi)]
    return LinearCombo(tuple(terms))


def apply_adjoint_power(coeffs: CoefficientSet, psi: ScalarField, m: int) -> ScalarField:
    if m < 0:
        raise ValueError("power must be nonnegative")
    out = psi
    for _ in range(m):
        out = apply_adjoint(coeffs, out)
    return out


def nondivergence_drift(coeffs: CoefficientSet) -> VectorField:
    """B_j = b_j + (1/2) sum_i d_i a_ij; the process drift is delta * B."""
    d = coeffs.dim
    comps = []
    for j in range(d):
        terms = [(1.0, coeffs.drift.components[j])]
        for i in range(d):
            terms.append((0.5, coeffs.diffusion.entry(i, j).derivative(_unit(d, i))))
        comps.append(LinearCombo(tuple(terms)))
    return VectorField(tuple(comps))


def diffusion_root(coeffs: CoefficientSet, x):
    """Lower-triangular factor s(x) with s s^T = a(x), via Cholesky.

    Accepts a single point or a batch; raises ValidationError when a(x) is
    not positive definite.
    """
    amat = coeffs.diffusion(x)
    try:
        return np.linalg.cholesky(amat)
    except np.linalg.LinAlgError as exc:
        raise ValidationError(f"diffusion matrix not positive definite at x={x}") from exc
