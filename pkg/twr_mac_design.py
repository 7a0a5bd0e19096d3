# -*- coding: utf-8 -*-
"""
    twr_mac_design

    Training design for the MAC phase, where both sources send S1 and S2 to the relay.

    * ``algorithm1``: alternate the LMMSE estimator update and a convex QCQP in vec(S^T).
    * ``kkt_closed_form_design``: interference-limited relay (K_r = c Z_r); each source solves its own
      ball-constrained problem in closed form, with the multiplier found by bisection.
    * ``waterfilling_design`` / ``convex_psd_design``: white temporal disturbance (K_q = q I), solved
      by per-stream water-filling and by direct optimization of Q = S* S^T respectively.

    :license: BSD, see LICENSE for more details.
"""

import logging
from collections import namedtuple

import numpy as np
import scipy.linalg

from twr_convex import (PsdTraceInverseProblem, PsdTraceInverseTerm, QcqpProblem, kkt_residual, solve_ball,
                        solve_psd_trace_inverse, solve_qcqp, waterfill)
from twr_kernels import hermitian_eig, hermitian_solve, hermitize, joint_eig, kron
from twr_lmmse import (MAC, TrainingSequence, identity_init, mac_estimator, mac_mse, scale_to_budget,
                       sequence_matrix, training_quadratic)
from twr_training import (LengthTooShort, MaxIterExceeded, NonMonotoneStep, NotJointlyDiagonalizable,
                          ScenarioError, WrongScenarioKind)

logger = logging.getLogger(__name__)

ITERATIVE = 'iterative'
KKT_CLOSED_FORM = 'kkt_closed_form'
WATERFILLING = 'waterfilling'
CONVEX_PSD = 'convex_psd'

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 200

# a rise beyond this relative amount cannot come from solver round-off
SOLVER_SLACK = 1e-6

TINY = np.finfo(float).tiny

MacDesignReport = namedtuple('MacDesignReport', ('seq', 'mse', 'trace', 'multipliers', 'kkt_residual', 'method'))


def _phase(scenario):
    if scenario.mac is None:
        raise ScenarioError('scenario has no MAC phase')
    return scenario.mac


def _selectors(mac):
    e1 = np.diag(np.r_[np.ones(mac.n1), np.zeros(mac.n2)])
    e2 = np.diag(np.r_[np.zeros(mac.n1), np.ones(mac.n2)])
    return e1, e2


def _power_constraints(mac):
    identity = np.eye(mac.l_s)
    e1, e2 = _selectors(mac)
    return [(kron(e1, identity), mac.tau1), (kron(e2, identity), mac.tau2)]


def _sequence(mac, s):
    return TrainingSequence.mac(scale_to_budget(s[:mac.n1], mac.tau1), scale_to_budget(s[mac.n1:], mac.tau2),
                                mac.tau1, mac.tau2)


def improves(iteration, previous, current):
    """True when ``current`` does not exceed ``previous``.

    Increases within solver round-off end the iteration; anything larger raises ``NonMonotoneStep``.
    """
    if current <= previous:
        return True
    if current <= previous * (1.0 + SOLVER_SLACK) + TINY:
        logger.debug("iteration %s: MSE %.12g did not improve on %.12g, stopping" % (iteration, current, previous))
        return False
    raise NonMonotoneStep(iteration, previous, current)


def alternate(label, seq, mse, step, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Repeat ``step`` until the relative MSE decrease drops below ``tol``.

    ``step(iteration, seq)`` returns ``(candidate, candidate_mse, info)``; a candidate is only kept
    when ``improves`` accepts it. Returns ``(seq, mse, trace, info)`` where ``info`` belongs to the
    last accepted step (None when no step was accepted).
    """
    if tol <= 0.0:
        raise ValueError('tolerance must be positive, got %s' % tol)
    trace = [mse]
    info = None
    logger.info("%s: initial MSE %.6g" % (label, mse))
    for iteration in range(1, max_iter + 1):
        candidate, candidate_mse, candidate_info = step(iteration, seq)
        if not improves(iteration, mse, candidate_mse):
            break
        change = (mse - candidate_mse) / max(mse, TINY)
        seq, mse, info = candidate, candidate_mse, candidate_info
        trace.append(mse)
        logger.debug("%s iteration %s: MSE %.12g" % (label, iteration, mse))
        if change < tol:
            break
    else:
        logger.warning("%s reached %s iterations before the tolerance %g" % (label, max_iter, tol))
    logger.info("%s: final MSE %.6g after %s iterations" % (label, mse, len(trace) - 1))
    return seq, mse, trace, info


def build_qcqp(scenario, t_r):
    """Quadratic program in s = vec(S^T) for a fixed estimator ``t_r``.

    The objective equals the estimator MSE including its S-independent constant; the two constraints
    are the source powers Tr(S_i S_i^H).
    """
    mac = _phase(scenario)
    quadratic, linear, constant = training_quadratic(t_r, mac.n, mac.m, mac.l_s)
    return QcqpProblem(quadratic, linear, _power_constraints(mac), constant)


def algorithm1(scenario, init=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, qcqp_tol=1e-10):
    mac = _phase(scenario)
    seq = init if init is not None else identity_init(scenario, MAC)

    def step(iteration, seq):
        problem = build_qcqp(scenario, mac_estimator(scenario, seq))
        try:
            solution = solve_qcqp(problem, qcqp_tol)
        except MaxIterExceeded as e:
            if e.best is None:
                raise
            logger.warning("QCQP at iteration %s stopped early, using its best iterate" % iteration)
            solution = e.best
        candidate = _sequence(mac, sequence_matrix(solution.x, mac.n, mac.l_s))
        return candidate, mac_mse(scenario, candidate), solution

    seq, mse, trace, solution = alternate('algorithm 1', seq, mac_mse(scenario, seq), step, tol, max_iter)
    if solution is None:
        return MacDesignReport(seq, mse, trace, (0.0, 0.0), 0.0, ITERATIVE)
    multipliers = tuple(float(lam) for lam in solution.multipliers)
    return MacDesignReport(seq, mse, trace, multipliers, solution.kkt_residual, ITERATIVE)


def kkt_closed_form_design(scenario, init=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Interference-limited relay: K_R = K_q kron c Z_r.

    The LMMSE estimator then factors as T1 kron C_r^-1 and the problem separates per source into
    min s_i^H (Z_t,i^T kron X1) s_i - 2 Re(x3_i^H s_i) s.t. ||s_i||^2 <= tau_i, with X1 = T1^H C_t^H C_t T1.
    """
    mac = _phase(scenario)
    ratio = mac.disturbance.spatial_ratio(mac.z_r)
    if ratio is None or ratio <= 0.0:
        raise WrongScenarioKind(KKT_CLOSED_FORM, 'spatial disturbance is not a multiple of the receive covariance')
    eig_r = mac.h1.eig_r.values
    if eig_r[-1] <= 1e-12 * max(eig_r[0], TINY):
        raise WrongScenarioKind(KKT_CLOSED_FORM, 'receive covariance is singular')
    k_q = ratio * mac.disturbance.k_q
    weight = mac.c_t.conj().T @ mac.c_t
    blocks = ((mac.h1.z_t, mac.tau1, slice(0, mac.n1 * mac.l_s)),
              (mac.h2.z_t, mac.tau2, slice(mac.n1 * mac.l_s, mac.n * mac.l_s)))
    scale = np.trace(mac.z_r).real
    seq = init if init is not None else identity_init(scenario, MAC)

    def step(iteration, seq):
        r = hermitize(seq.s.T @ mac.z_t @ seq.s.conj() + k_q)
        t1 = hermitian_solve(r, seq.s.T @ mac.c_t).conj().T
        x1 = hermitize(t1.conj().T @ weight @ t1)
        x3 = (mac.c_t @ weight @ t1).conj().T.reshape(-1, order='F')
        s = np.zeros(mac.n * mac.l_s, dtype=complex)
        lams = []
        quadratics = []
        for z_t, tau, part in blocks:
            quadratic = kron(z_t.T, x1)
            s[part], lam = solve_ball(quadratic, x3[part], tau)
            lams.append(lam)
            quadratics.append(quadratic)
        candidate = _sequence(mac, sequence_matrix(s, mac.n, mac.l_s))
        problem = QcqpProblem(scipy.linalg.block_diag(*quadratics), x3, _power_constraints(mac))
        return candidate, mac_mse(scenario, candidate), (lams, kkt_residual(problem, s, lams))

    seq, mse, trace, info = alternate('closed-form design', seq, mac_mse(scenario, seq), step, tol, max_iter)
    if info is None:
        return MacDesignReport(seq, mse, trace, (0.0, 0.0), 0.0, KKT_CLOSED_FORM)
    lams, residual = info
    multipliers = tuple(float(scale * lam) for lam in lams)
    return MacDesignReport(seq, mse, trace, multipliers, residual, KKT_CLOSED_FORM)


def _white_temporal(mac, method):
    q = mac.disturbance.temporal_scalar()
    if q is None or q <= 0.0:
        raise WrongScenarioKind(method, 'temporal disturbance is not a positive multiple of the identity')
    try:
        _, sigma_r, delta = joint_eig(mac.z_r, mac.disturbance.k_r)
    except NotJointlyDiagonalizable:
        raise WrongScenarioKind(method, 'spatial disturbance does not share the receive eigenvectors')
    if np.any(delta <= 0.0):
        raise WrongScenarioKind(method, 'spatial disturbance covariance is singular')
    sigma_r = np.clip(sigma_r, 0.0, None)
    return sigma_r, sigma_r / (q * delta)


def waterfilling_design(scenario):
    """S_i = U_t,i^* Sigma_i V_i^T with V_1, V_2 disjoint columns of the identity, so S1^* S2^T = 0."""
    mac = _phase(scenario)
    sigma_r, alpha = _white_temporal(mac, WATERFILLING)
    if mac.l_s < mac.n:
        raise LengthTooShort(WATERFILLING, mac.l_s, mac.n)
    s = np.zeros((mac.n, mac.l_s), dtype=complex)
    multipliers = []
    residual = 0.0
    offset = 0
    for hop, tau in ((mac.h1, mac.tau1), (mac.h2, mac.tau2)):
        sigma_t = np.clip(hop.eig_t.values, 0.0, None)
        powers, lam = waterfill(np.outer(sigma_r, sigma_t), np.outer(alpha, sigma_t), tau)
        rows = slice(offset, offset + hop.n_tx)
        s[rows, offset:offset + hop.n_tx] = hop.eig_t.vectors.conj() * np.sqrt(powers)[np.newaxis, :]
        multipliers.append(float(lam))
        if lam > 0.0:
            residual = max(residual, abs(powers.sum() - tau) / tau)
        logger.debug("water-filling source powers %s" % powers)
        offset += hop.n_tx
    seq = _sequence(mac, s)
    mse = mac_mse(scenario, seq)
    logger.info("water-filling design: MSE %.6g" % mse)
    return MacDesignReport(seq, mse, [mse], tuple(multipliers), residual, WATERFILLING)


def psd_objective(scenario):
    """sum_n sigma_r,n Tr[(Z_t^-1 + alpha_n Q)^-1] over Q = S^* S^T, written without inverting Z_t."""
    mac = _phase(scenario)
    sigma_r, alpha = _white_temporal(mac, CONVEX_PSD)
    return _psd_problem(mac, sigma_r, alpha, np.eye(mac.n), [0, 1])


def _psd_problem(mac, sigma_r, alpha, embed, sources):
    congruence = mac.c_t.conj().T @ embed
    outer = mac.c_t.conj().T @ mac.c_t
    base = np.eye(mac.n)
    terms = [PsdTraceInverseTerm(sigma, base, a, congruence, outer) for sigma, a in zip(sigma_r, alpha) if sigma > 0.0]
    rows = np.r_[np.zeros(mac.n1, dtype=bool), np.ones(mac.n2, dtype=bool)]
    constraints = []
    for i in sources:
        mask = (rows == bool(i)).astype(float)
        constraints.append((embed.T @ np.diag(mask) @ embed, mac.budgets[i]))
    return PsdTraceInverseProblem(terms, constraints)


def convex_psd_design(scenario, tol=1e-9, max_iter=5000):
    mac = _phase(scenario)
    sigma_r, alpha = _white_temporal(mac, CONVEX_PSD)
    sources = [i for i, tau in enumerate(mac.budgets) if tau > 0.0]
    multipliers = [0.0, 0.0]
    residual = 0.0
    q = np.zeros((mac.n, mac.n), dtype=complex)
    if sources:
        # sources without power are removed from the variable
        index = np.concatenate([np.arange(mac.n1) if i == 0 else np.arange(mac.n1, mac.n) for i in sources])
        embed = np.eye(mac.n)[:, index]
        problem = _psd_problem(mac, sigma_r, alpha, embed, sources)
        try:
            solution = solve_psd_trace_inverse(problem, tol, max_iter)
        except MaxIterExceeded as e:
            logger.warning("trace-inverse solver stopped after %s iterations, using its best iterate" % e.iterations)
            solution = e.best
        q = embed @ solution.q @ embed.T
        for i, lam in zip(sources, solution.multipliers):
            multipliers[i] = float(lam)
        residual = solution.kkt_residual
    seq = _sequence(mac, factor_gram(q, mac.l_s))
    mse = mac_mse(scenario, seq)
    logger.info("convex PSD design: MSE %.6g" % mse)
    return MacDesignReport(seq, mse, [mse], tuple(multipliers), residual, CONVEX_PSD)


def factor_gram(q, length):
    """S with S^* S^T = q, zero-padded to ``length`` columns (rank truncated when q has more)."""
    eig = hermitian_eig(q)
    values = np.clip(eig.values, 0.0, None)
    keep = min(length, values.size)
    dropped = values[keep:].sum()
    if dropped > 1e-9 * max(values.sum(), TINY):
        logger.warning("training length %s truncates %.3g of the Gram trace %.3g" % (length, dropped, values.sum()))
    s = np.zeros((q.shape[0], length), dtype=complex)
    s[:, :keep] = (eig.vectors[:, :keep] * np.sqrt(values[:keep])[np.newaxis, :]).conj()
    return s


def mac_mse_floor(scenario, l_s):
    """MSE that no MAC training of length l_s can beat: sum sigma_r * (sum of the N - l_s smallest sigma_t)."""
    mac = _phase(scenario)
    sigma_t = np.clip(hermitian_eig(mac.z_t).values, 0.0, None)
    if l_s >= sigma_t.size:
        return 0.0
    sigma_r = np.clip(mac.h1.eig_r.values, 0.0, None)
    return float(sigma_r.sum() * sigma_t[l_s:].sum())


def min_training_length_mac(scenario):
    return _phase(scenario).n


def shorten_training(seq, tol=1e-9):
    """Return a sequence with rank(S) columns and the same S^* S^T, or ``seq`` itself when already minimal.

    Under white temporal disturbance the MSE depends on S only through S^* S^T.
    """
    product = hermitize(seq.s.conj() @ seq.s.T)
    eig = hermitian_eig(product)
    rank = int(np.sum(eig.values > tol * max(eig.values[0], TINY))) if eig.values.size else 0
    if rank >= seq.length:
        return seq
    rank = max(rank, 1)
    s = (eig.vectors[:, :rank] * np.sqrt(np.clip(eig.values[:rank], 0.0, None))[np.newaxis, :]).conj()
    logger.debug("shortened %s training from %s to %s columns" % (seq.phase, seq.length, rank))
    return TrainingSequence(seq.phase, s, seq.budgets, seq.split)
