# -*- coding: utf-8 -*-
"""
    twr_convex

    Numerical solvers used by the MAC and BC training designs:

    * ``solve_qcqp``: min s^H A s - 2 Re(c^H s) s.t. s^H B_i s <= tau_i (A, B_i Hermitian PSD).
      Each single active constraint is solved exactly by bisection on its multiplier; when every
      constraint is active the dual is maximized with a logarithmic-barrier Newton method.
    * ``bisect_monotone``: root of a decreasing scalar function with bracket expansion.
    * ``waterfill``: per-mode power allocation with one shared multiplier.
    * ``solve_psd_trace_inverse``: projected gradient with Armijo backtracking for
      min sum_k w_k Tr[O_k (B_k + a_k F_k Q F_k^H)^-1] over PSD Q with trace constraints.

    :license: BSD, see LICENSE for more details.
"""

import logging
from collections import namedtuple

import numpy as np

from twr_kernels import hermitian_eig, hermitian_solve, hermitize, project_psd_trace, psd_project
from twr_training import BracketFailure, DimensionMismatch, MaxIterExceeded, NotPSD, QcqpInfeasible, SingularGram

logger = logging.getLogger(__name__)

TINY = np.finfo(float).tiny

BARRIER_T0 = 1.0
BARRIER_MU = 10.0
BARRIER_NEWTON_TOL = 1e-10
BARRIER_MAX_OUTER = 50
BARRIER_MAX_NEWTON = 100
BARRIER_MAX_HALVINGS = 60

QcqpSolution = namedtuple('QcqpSolution', ('x', 'multipliers', 'kkt_residual'))
PsdSolution = namedtuple('PsdSolution', ('q', 'multipliers', 'kkt_residual'))
PsdTraceInverseTerm = namedtuple('PsdTraceInverseTerm', ('weight', 'base', 'coefficient', 'congruence', 'outer'))


def bisect_monotone(g, target, lo, hi, tol=1e-12, max_expand=200, max_iter=2000):
    """Find x with g(x) = target for a non-increasing g.

    Requires g(lo) >= target. If g(hi) > target the bracket is doubled until it holds. The returned
    point always satisfies g(x) <= target, within tol * max(1, |target|) of it.
    """
    scale = tol * max(1.0, abs(target))
    g_lo = g(lo)
    if g_lo < target - scale:
        raise BracketFailure(lo, hi, 'g(lo) = %g is already below the target %g' % (g_lo, target))
    if g_lo <= target:
        return lo
    g_hi = g(hi)
    expansions = 0
    while g_hi > target:
        if expansions >= max_expand:
            raise BracketFailure(lo, hi, 'no sign change after %s expansions' % expansions)
        lo, hi = hi, 2.0 * hi if hi > 0.0 else 1.0
        g_hi = g(hi)
        expansions += 1
    if expansions:
        logger.debug("bisection bracket expanded %s times to [%g, %g]" % (expansions, lo, hi))
    for _ in range(max_iter):
        if target - g_hi <= scale:
            return hi
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            logger.warning("bisection ran out of float resolution at %.17g: g = %g, target %g" % (hi, g_hi, target))
            return hi
        g_mid = g(mid)
        if g_mid > target:
            lo = mid
        else:
            hi, g_hi = mid, g_mid
    raise MaxIterExceeded('bisection', max_iter, best=hi)


def multiplier_upper_bound(quadratic, linear, budget):
    """Upper bound sqrt(|c|^2 / tau) - lambda_min(A) on the multiplier of ||(A + lambda I)^-1 c||^2 = tau."""
    if budget <= 0.0:
        return np.inf
    smallest = hermitian_eig(quadratic).values[-1]
    return np.sqrt(np.vdot(linear, linear).real / budget) - smallest


def waterfill_multiplier_bound(coefficients, gains):
    """max_m sum_k c_km a_km: no mode receives power above this multiplier."""
    coefficients = np.atleast_2d(coefficients)
    gains = np.atleast_2d(gains)
    return float(np.max(np.sum(coefficients * gains, axis=0), initial=0.0))


def waterfill(coefficients, gains, budget, tol=1e-12):
    """Minimize sum_m sum_k c_km / (1 + a_km p_m) subject to sum_m p_m <= budget, p >= 0.

    ``coefficients`` and ``gains`` have shape (terms, modes). Returns (powers, multiplier); modes whose
    stationarity equation has no positive root get zero power.
    """
    coefficients = np.atleast_2d(np.asarray(coefficients, dtype=float))
    gains = np.atleast_2d(np.asarray(gains, dtype=float))
    if coefficients.shape != gains.shape:
        raise DimensionMismatch('water-filling gains', coefficients.shape, gains.shape)
    modes = coefficients.shape[1]
    if budget <= 0.0:
        return np.zeros(modes), 0.0
    weighted = coefficients * gains

    def slope(m, p):
        return float(np.sum(weighted[:, m] / (1.0 + gains[:, m] * p) ** 2))

    def power(m, multiplier):
        if slope(m, 0.0) <= multiplier:
            return 0.0
        if slope(m, budget) >= multiplier:
            return budget
        return bisect_monotone(lambda p: slope(m, p), multiplier, 0.0, budget, tol)

    top = waterfill_multiplier_bound(coefficients, gains)
    if top <= 0.0:
        return np.zeros(modes), 0.0

    def total(multiplier):
        return sum(power(m, multiplier) for m in range(modes))

    multiplier = bisect_monotone(total, budget, 0.0, top, tol)
    powers = np.array([power(m, multiplier) for m in range(modes)])
    if powers.sum() > budget:
        powers *= budget / powers.sum()
    if multiplier == 0.0 and np.any(powers > 0.0):
        # saturated modes: the multiplier is the marginal slope at the allocated power
        multiplier = min(slope(m, powers[m]) for m in range(modes) if powers[m] > 0.0)
    logger.debug("water-filling multiplier %g, powers %s" % (multiplier, powers))
    return powers, multiplier


class QcqpProblem(object):
    """min s^H A s - 2 Re(c^H s) + constant  s.t.  s^H B_i s <= tau_i."""

    def __init__(self, quadratic, linear, constraints, constant=0.0):
        self.quadratic = hermitize(np.asarray(quadratic, dtype=complex))
        self.linear = np.asarray(linear, dtype=complex).reshape(-1)
        self.constraints = [(hermitize(np.asarray(b, dtype=complex)), float(tau)) for b, tau in constraints]
        self.constant = float(constant)
        n = self.linear.size
        if self.quadratic.shape != (n, n):
            raise DimensionMismatch('QCQP quadratic', (n, n), self.quadratic.shape)
        values = hermitian_eig(self.quadratic).values
        if values.size and values[-1] < -1e-9 * max(abs(values[0]), 1.0):
            raise NotPSD(values[-1], -1e-9 * max(abs(values[0]), 1.0))
        for b, tau in self.constraints:
            if b.shape != (n, n):
                raise DimensionMismatch('QCQP constraint', (n, n), b.shape)
            if tau < 0.0:
                raise QcqpInfeasible('negative constraint bound %g' % tau)

    @property
    def size(self):
        return self.linear.size

    def objective(self, x):
        x = np.asarray(x)
        return float((np.vdot(x, self.quadratic @ x) - 2.0 * np.vdot(self.linear, x)).real + self.constant)

    def constraint_values(self, x):
        return np.array([np.vdot(x, b @ x).real for b, _ in self.constraints])

    def bounds(self):
        return np.array([tau for _, tau in self.constraints])


def _pinv_solve(matrix, rhs, rcond=1e-13):
    eig = hermitian_eig(matrix)
    top = max(abs(eig.values[0]), TINY) if eig.values.size else TINY
    keep = eig.values > rcond * top
    vectors = eig.vectors[:, keep]
    return vectors @ ((vectors.conj().T @ rhs) / eig.values[keep].reshape((-1,) + (1,) * (np.ndim(rhs) - 1)))


def dual_value(problem, multipliers):
    """Lagrangian lower bound -c^H M^-1 c - lambda^T tau + constant, M = A + sum lambda_i B_i."""
    matrix = problem.quadratic + sum(lam * b for lam, (b, _) in zip(multipliers, problem.constraints))
    x = _pinv_solve(matrix, problem.linear)
    return float(-np.vdot(problem.linear, x).real - np.dot(multipliers, problem.bounds()) + problem.constant)


def kkt_residual(problem, x, multipliers):
    """Largest scaled violation of the KKT conditions at (x, multipliers)."""
    matrix = problem.quadratic + sum(lam * b for lam, (b, _) in zip(multipliers, problem.constraints))
    c_norm = max(np.linalg.norm(problem.linear), TINY)
    stationarity = np.linalg.norm(matrix @ x - problem.linear) / c_norm
    values = problem.constraint_values(x)
    bounds = problem.bounds()
    scale = max(abs(problem.objective(x)), np.vdot(problem.linear, x).real, TINY)
    residual = stationarity
    for lam, value, tau in zip(multipliers, values, bounds):
        residual = max(residual, max(0.0, value - tau) / max(tau, TINY), abs(lam * (tau - value)) / scale)
    return float(residual)


def _null_basis(matrix, rcond=1e-12):
    eig = hermitian_eig(matrix)
    top = max(abs(eig.values[0]), TINY) if eig.values.size else TINY
    return eig.vectors[:, eig.values <= rcond * top]


def _consistent(quadratic, linear, x):
    return np.linalg.norm(quadratic @ x - linear) <= 1e-9 * max(np.linalg.norm(linear), TINY)


def _shifted_solve(matrix, rhs):
    try:
        return hermitian_solve(matrix, rhs)
    except SingularGram:
        return _pinv_solve(matrix, rhs)


def _multiplier_path(quadratic, linear, b, budget, hi, tol):
    """Bisect lambda so that x(lambda) = (A + lambda B)^+ c meets x^H B x = budget."""
    scale = max(np.linalg.norm(quadratic, 2), 1.0)
    start = _pinv_solve(quadratic, linear)
    # a linear term outside the range of A sends ||x(lambda)|| to infinity as lambda -> 0
    lo = 0.0 if _consistent(quadratic, linear, start) else 1e-12 * scale

    def solution(lam):
        if lam == 0.0:
            return start
        return _shifted_solve(quadratic + lam * b, linear)

    def power(lam):
        x = solution(lam)
        return np.vdot(x, b @ x).real

    lam = bisect_monotone(power, budget, lo, max(hi, 2.0 * lo, 1e-12 * scale), tol)
    return solution(lam), lam


def solve_ball(quadratic, linear, budget, tol=1e-13):
    """min s^H A s - 2 Re(c^H s) s.t. ||s||^2 <= budget; returns (s, multiplier).

    The multiplier is zero when the unconstrained minimizer is feasible, otherwise it is bisected
    below ``multiplier_upper_bound``.
    """
    quadratic = hermitize(np.asarray(quadratic, dtype=complex))
    linear = np.asarray(linear, dtype=complex).reshape(-1)
    if budget <= 0.0:
        return np.zeros_like(linear), 0.0
    x = _pinv_solve(quadratic, linear)
    if _consistent(quadratic, linear, x) and np.vdot(x, x).real <= budget:
        return x, 0.0
    identity = np.eye(linear.size)
    return _multiplier_path(quadratic, linear, identity, budget,
                            multiplier_upper_bound(quadratic, linear, budget), tol)


def _single_active(problem, index, tol):
    """Solve with only constraint ``index`` active; returns (x, multiplier)."""
    b, tau = problem.constraints[index]
    a, c = problem.quadratic, problem.linear
    if np.allclose(b, np.eye(problem.size), rtol=0.0, atol=1e-14):
        hi = multiplier_upper_bound(a, c, tau)
    else:
        hi = max(np.linalg.norm(a, 2), 1.0)
    return _multiplier_path(a, c, b, tau, hi, tol)


def _barrier_dual(problem, tol):
    """Maximize the dual over lambda > 0 with a log barrier; returns (x, multipliers)."""
    a, c = problem.quadratic, problem.linear
    constraints = [b for b, _ in problem.constraints]
    taus = problem.bounds()
    m = len(constraints)
    lam = np.full(m, max(np.sqrt(np.vdot(c, c).real / taus.sum()), 1e-8))

    def evaluate(lam):
        matrix = a + sum(l * b for l, b in zip(lam, constraints))
        x = _pinv_solve(matrix, c)
        return matrix, x

    def barrier(t, lam, x):
        return t * (np.vdot(c, x).real + np.dot(lam, taus)) - np.sum(np.log(lam))

    t = BARRIER_T0
    for outer in range(BARRIER_MAX_OUTER):
        matrix, x = evaluate(lam)
        for _ in range(BARRIER_MAX_NEWTON):
            values = np.array([np.vdot(x, b @ x).real for b in constraints])
            gradient = t * (taus - values) - 1.0 / lam
            directions = [_pinv_solve(matrix, b @ x) for b in constraints]
            hessian = np.empty((m, m))
            for i in range(m):
                for j in range(m):
                    hessian[i, j] = 2.0 * t * np.vdot(constraints[i] @ x, directions[j]).real
            hessian += np.diag(1.0 / lam ** 2)
            step_dir = -np.linalg.solve(hessian, gradient)
            decrement = -np.dot(gradient, step_dir)
            if decrement / 2.0 <= BARRIER_NEWTON_TOL:
                break
            step = 1.0
            while np.any(lam + step * step_dir <= 0.0):
                step *= 0.5
            current = barrier(t, lam, x)
            for _ in range(BARRIER_MAX_HALVINGS):
                trial = lam + step * step_dir
                trial_matrix, trial_x = evaluate(trial)
                if barrier(t, trial, trial_x) <= current - 0.25 * step * decrement:
                    break
                step *= 0.5
            else:
                logger.warning("barrier line search found no decrease after %s halvings" % BARRIER_MAX_HALVINGS)
                raise MaxIterExceeded('barrier line search', BARRIER_MAX_HALVINGS,
                                      best=QcqpSolution(x, lam, kkt_residual(problem, x, lam)))
            lam, matrix, x = trial, trial_matrix, trial_x
        gap = m / t
        dual = -np.vdot(c, x).real - np.dot(lam, taus)
        logger.debug("barrier outer %s: t=%g multipliers=%s gap=%g" % (outer, t, lam, gap))
        if gap <= tol * max(1.0, abs(dual)):
            return x, lam
        t *= BARRIER_MU
    raise MaxIterExceeded('barrier', BARRIER_MAX_OUTER, best=QcqpSolution(x, lam, kkt_residual(problem, x, lam)))


def solve_qcqp(problem, tol=1e-10):
    """Solve a convex QCQP; returns ``QcqpSolution(x, multipliers, kkt_residual)``.

    Constraints with a zero bound pin x to the null space of their matrix and are eliminated first.
    """
    m = len(problem.constraints)
    pinned = [b for b, tau in problem.constraints if tau <= 0.0]
    if pinned:
        basis = _null_basis(sum(pinned))
        multipliers = np.zeros(m)
        if basis.shape[1] == 0:
            x = np.zeros(problem.size, dtype=complex)
            return QcqpSolution(x, multipliers, 0.0)
        kept = [i for i, (_, tau) in enumerate(problem.constraints) if tau > 0.0]
        reduced = QcqpProblem(basis.conj().T @ problem.quadratic @ basis, basis.conj().T @ problem.linear,
                              [(basis.conj().T @ problem.constraints[i][0] @ basis, problem.constraints[i][1])
                               for i in kept], problem.constant)
        solution = solve_qcqp(reduced, tol)
        multipliers[kept] = solution.multipliers
        return QcqpSolution(basis @ solution.x, multipliers, solution.kkt_residual)

    bounds = problem.bounds()
    slack = 1.0 + 1e-9

    # unconstrained minimizer (minimum norm)
    x = _pinv_solve(problem.quadratic, problem.linear)
    if m == 0 or (_consistent(problem.quadratic, problem.linear, x)
                  and np.all(problem.constraint_values(x) <= bounds * slack)):
        multipliers = np.zeros(m)
        return QcqpSolution(x, multipliers, kkt_residual(problem, x, multipliers))

    candidates = []
    for i in range(m):
        try:
            x_i, lam_i = _single_active(problem, i, 1e-13)
        except BracketFailure:
            continue
        values = problem.constraint_values(x_i)
        if lam_i > 0.0 and np.all(values <= bounds * slack):
            multipliers = np.zeros(m)
            multipliers[i] = lam_i
            candidates.append((problem.objective(x_i), x_i, multipliers))
    if candidates:
        _, x, multipliers = min(candidates, key=lambda candidate: candidate[0])
        return QcqpSolution(x, multipliers, kkt_residual(problem, x, multipliers))

    if m == 1:
        raise QcqpInfeasible('single constraint could not be met')
    x, multipliers = _barrier_dual(problem, tol)
    return QcqpSolution(x, multipliers, kkt_residual(problem, x, multipliers))


class PsdTraceInverseProblem(object):
    """min sum_k w_k Tr[O_k X_k^-1], X_k = B_k + a_k F_k Q F_k^H, over PSD Q with Tr(E_i Q) <= tau_i.

    A term's congruence F and outer weight O default to the identity.
    """

    def __init__(self, terms, constraints):
        self.terms = []
        for term in terms:
            if not isinstance(term, PsdTraceInverseTerm):
                term = PsdTraceInverseTerm(*term)
            self.terms.append(term)
        if not self.terms:
            raise DimensionMismatch('trace-inverse terms', '>= 1', 0)
        first = self.terms[0]
        self.dim = first.congruence.shape[1] if first.congruence is not None else first.base.shape[0]
        for term in self.terms:
            if term.weight < 0.0 or term.coefficient < 0.0:
                raise NotPSD(min(term.weight, term.coefficient), 0.0)
        self.constraints = [(hermitize(np.asarray(e, dtype=complex)), float(tau)) for e, tau in constraints]

    def _inverses(self, q):
        for term in self.terms:
            f = term.congruence
            mapped = q if f is None else f @ q @ f.conj().T
            x = hermitize(term.base + term.coefficient * mapped)
            yield term, hermitian_solve(x, np.eye(x.shape[0]))

    def objective(self, q):
        total = 0.0
        for term, x_inv in self._inverses(q):
            weighted = x_inv if term.outer is None else term.outer @ x_inv
            total += term.weight * np.trace(weighted).real
        return float(total)

    def gradient(self, q):
        """Hermitian gradient with respect to the real inner product Re Tr(G^H D)."""
        gradient = np.zeros((self.dim, self.dim), dtype=complex)
        for term, x_inv in self._inverses(q):
            middle = x_inv @ x_inv if term.outer is None else x_inv @ term.outer @ x_inv
            f = term.congruence
            mapped = middle if f is None else f.conj().T @ middle @ f
            gradient -= term.weight * term.coefficient * mapped
        return hermitize(gradient)

    def constraint_values(self, q):
        return np.array([np.trace(e @ q).real for e, _ in self.constraints])

    def project(self, q, tol=1e-13, max_cycles=2000):
        """Projection onto the feasible set (Dykstra between the PSD cone and the trace half-spaces),
        followed by a scaling that makes every trace constraint hold exactly."""
        q = hermitize(q)
        identity = np.eye(self.dim)
        if len(self.constraints) == 1 and np.allclose(self.constraints[0][0], identity, rtol=0.0, atol=1e-14):
            return project_psd_trace(q, self.constraints[0][1])
        if not self.constraints:
            return psd_project(q)
        x = q
        p_half = np.zeros_like(q)
        p_psd = np.zeros_like(q)
        for _ in range(max_cycles):
            y = self._project_halfspaces(x + p_half)
            p_half = x + p_half - y
            z = psd_project(y + p_psd)
            p_psd = y + p_psd - z
            change = np.linalg.norm(z - x)
            x = z
            if change <= tol * max(np.linalg.norm(x), 1.0):
                break
        return self._scale_into(x)

    def _project_halfspaces(self, q):
        # half-spaces with mutually orthogonal normals are projected independently
        out = q
        for e, tau in self.constraints:
            excess = np.trace(e @ q).real - tau
            if excess > 0.0:
                out = out - (excess / np.vdot(e, e).real) * e
        return hermitize(out)

    def _scale_into(self, q):
        factor = 1.0
        for value, (_, tau) in zip(self.constraint_values(q), self.constraints):
            if value > tau:
                factor = min(factor, tau / value if value > 0.0 else 0.0)
        return q * factor

    def initial_point(self):
        q = np.zeros((self.dim, self.dim), dtype=complex)
        for e, tau in self.constraints:
            trace = np.trace(e).real
            if trace > 0.0:
                q += (tau / trace) * e
        return self.project(q)

    def multipliers(self, q, gradient):
        values = []
        for e, _ in self.constraints:
            used = np.trace(e @ q).real
            values.append(max(0.0, -np.trace(e @ gradient @ q).real / used) if used > 0.0 else 0.0)
        return np.array(values)


def solve_psd_trace_inverse(problem, tol=1e-9, max_iter=5000):
    """Projected gradient descent with Armijo backtracking and Barzilai-Borwein trial steps.

    Returns ``PsdSolution(q, multipliers, kkt_residual)``; the objective never increases between
    accepted iterates.
    """
    q = problem.initial_point()
    value = problem.objective(q)
    gradient = problem.gradient(q)
    budget = sum(tau for _, tau in problem.constraints) or 1.0
    step = budget / max(np.linalg.norm(gradient), TINY)
    residual = np.inf
    for iteration in range(max_iter):
        for _ in range(60):
            candidate = problem.project(q - step * gradient)
            delta = candidate - q
            candidate_value = problem.objective(candidate)
            model = value + np.vdot(gradient, delta).real + np.vdot(delta, delta).real / (2.0 * step)
            if candidate_value <= model and candidate_value <= value:
                break
            step *= 0.5
        else:
            logger.debug("line search stalled at iteration %s" % iteration)
            break
        residual = np.linalg.norm(delta) / (step * max(np.linalg.norm(gradient), TINY))
        change = (value - candidate_value) / max(abs(value), TINY)
        new_gradient = problem.gradient(candidate)
        curvature = np.vdot(delta, new_gradient - gradient).real
        q, value, gradient = candidate, candidate_value, new_gradient
        if change < tol and residual < 10.0 * tol:
            logger.debug("trace-inverse solver converged after %s iterations, objective %.12g"
                         % (iteration + 1, value))
            return PsdSolution(q, problem.multipliers(q, gradient), float(residual))
        if curvature > 0.0:
            step = np.vdot(delta, delta).real / curvature
        else:
            step *= 2.0
    if residual < 10.0 * tol or np.linalg.norm(q) == 0.0:
        return PsdSolution(q, problem.multipliers(q, gradient), float(residual))
    raise MaxIterExceeded('trace-inverse', max_iter,
                          best=PsdSolution(q, problem.multipliers(q, gradient), float(residual)))
