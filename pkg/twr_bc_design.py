# -*- coding: utf-8 -*-
"""
    twr_bc_design

    Relay training design for the BC phase, where one sequence S_R is heard by both sources and
    the objective is e1 + e2.

    :license: BSD, see LICENSE for more details.
"""

import logging
from collections import namedtuple

import numpy as np

from twr_convex import (PsdTraceInverseProblem, PsdTraceInverseTerm, QcqpProblem, kkt_residual, solve_ball,
                        solve_psd_trace_inverse, waterfill)
from twr_kernels import hermitian_eig, inv_sqrt, joint_eig
from twr_lmmse import (BC, TrainingSequence, bc_estimator, bc_mse, identity_init, scale_to_budget, sequence_matrix,
                       training_quadratic)
from twr_mac_design import DEFAULT_MAX_ITER, DEFAULT_TOL, alternate
from twr_training import LengthTooShort, MaxIterExceeded, NotJointlyDiagonalizable, ScenarioError, WrongScenarioKind

logger = logging.getLogger(__name__)

ITERATIVE = 'iterative'
SVD_MIXED = 'svd_mixed'
SVD_WHITE = 'svd_white'
CONVEX_QR = 'convex_qr'

BcDesignReport = namedtuple('BcDesignReport',
                            ('seq', 'mse_total', 'per_side', 'trace', 'multiplier', 'kkt_residual', 'method'))


def _phase(scenario):
    if scenario.bc is None:
        raise ScenarioError('scenario has no BC phase')
    return scenario.bc


def _report(scenario, seq, trace, multiplier, residual, method):
    per_side = (bc_mse(scenario, seq, 1), bc_mse(scenario, seq, 2))
    return BcDesignReport(seq, sum(per_side), per_side, trace, float(multiplier), float(residual), method)


def _sequence(bc, s):
    return TrainingSequence.bc(scale_to_budget(s, bc.tau_r), bc.tau_r)


def build_relay_qcqp(scenario, t1, t2):
    """e1 + e2 for fixed estimators T1, T2 as a quadratic in s = vec(S_R^T) under ||s||^2 <= tau_R."""
    bc = _phase(scenario)
    quadratic = 0.0
    linear = 0.0
    constant = 0.0
    for side, estimator in ((1, t1), (2, t2)):
        hop, _ = bc.hop(side)
        a, c, k = training_quadratic(estimator, bc.m, hop.n_rx, bc.l_r)
        quadratic = quadratic + a
        linear = linear + c
        constant += k
    return QcqpProblem(quadratic, linear, [(np.eye(bc.m * bc.l_r), bc.tau_r)], constant)


def algorithm2(scenario, init=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    bc = _phase(scenario)
    seq = init if init is not None else identity_init(scenario, BC)

    def step(iteration, seq):
        problem = build_relay_qcqp(scenario, bc_estimator(scenario, seq, 1), bc_estimator(scenario, seq, 2))
        x, lam = solve_ball(problem.quadratic, problem.linear, bc.tau_r)
        candidate = _sequence(bc, sequence_matrix(x, bc.m, bc.l_r))
        candidate_mse = bc_mse(scenario, candidate, 1) + bc_mse(scenario, candidate, 2)
        return candidate, candidate_mse, (lam, kkt_residual(problem, x, [lam]))

    mse = bc_mse(scenario, seq, 1) + bc_mse(scenario, seq, 2)
    seq, mse, trace, info = alternate('algorithm 2', seq, mse, step, tol, max_iter)
    multiplier, residual = info if info is not None else (0.0, 0.0)
    return _report(scenario, seq, trace, multiplier, residual, ITERATIVE)


def _side_modes(bc, side, method):
    """(sigma_r, beta) of one side with beta_n = sigma_r,n / delta_r,n."""
    hop, disturbance = bc.hop(side)
    try:
        _, sigma_r, delta = joint_eig(hop.z_r, disturbance.k_r)
    except NotJointlyDiagonalizable:
        raise WrongScenarioKind(method, 'side %s disturbance does not share the receive eigenvectors' % side)
    if np.any(delta <= 0.0):
        raise WrongScenarioKind(method, 'side %s spatial disturbance is singular' % side)
    sigma_r = np.clip(sigma_r, 0.0, None)
    return sigma_r, sigma_r / delta


def _white_side(bc, side, method):
    _, disturbance = bc.hop(side)
    q = disturbance.temporal_scalar()
    if q is None or q <= 0.0:
        return None
    sigma_r, beta = _side_modes(bc, side, method)
    return sigma_r, beta / q


def _mode_terms(sigma_t, sigma_r, gain, mode_gain=1.0):
    """Water-filling rows c = sigma_r sigma_t, a = gain sigma_t mode_gain for every receive mode."""
    return np.outer(sigma_r, sigma_t), np.outer(gain, sigma_t * mode_gain)


def svd_design_white(scenario):
    """Both temporal covariances white: S_R = U_t^* Sigma V^T with V = I, powers by water-filling."""
    bc = _phase(scenario)
    sides = [_white_side(bc, side, SVD_WHITE) for side in (1, 2)]
    if any(side is None for side in sides):
        raise WrongScenarioKind(SVD_WHITE, 'both temporal disturbance covariances must be white')
    if bc.l_r < bc.m:
        raise LengthTooShort(SVD_WHITE, bc.l_r, bc.m)
    eig_t = bc.g1.eig_t
    sigma_t = np.clip(eig_t.values, 0.0, None)
    rows = [_mode_terms(sigma_t, sigma_r, gain) for sigma_r, gain in sides]
    powers, lam = waterfill(np.vstack([c for c, _ in rows]), np.vstack([a for _, a in rows]), bc.tau_r)
    s = np.zeros((bc.m, bc.l_r), dtype=complex)
    s[:, :bc.m] = eig_t.vectors.conj() * np.sqrt(powers)[np.newaxis, :]
    seq = _sequence(bc, s)
    logger.debug("relay water-filling powers %s" % powers)
    return _report(scenario, seq, [bc_mse(scenario, seq, 1) + bc_mse(scenario, seq, 2)], lam,
                   _power_residual(powers, lam, bc.tau_r), SVD_WHITE)


def svd_design_mixed(scenario):
    """One white side: S_R = U_t^* Sigma U_q^T, pairing the largest channel eigenvalues with the
    smallest eigenvalues of the colored temporal covariance.

    Optimal only when the covariance eigenvalues are small compared to one.
    """
    bc = _phase(scenario)
    if bc.l_r != bc.m:
        raise WrongScenarioKind(SVD_MIXED, 'requires L_R = M, got L_R=%s, M=%s' % (bc.l_r, bc.m))
    white = None
    for side in (1, 2):
        modes = _white_side(bc, side, SVD_MIXED)
        if modes is not None:
            white, colored = side, 3 - side
            white_modes = modes
            break
    if white is None:
        raise WrongScenarioKind(SVD_MIXED, 'neither temporal disturbance covariance is white')
    _, disturbance = bc.hop(colored)
    # ascending, paired against the descending channel eigenvalues
    delta_q = disturbance.eig_q.values[::-1]
    u_q = disturbance.eig_q.vectors[:, ::-1]
    if np.any(delta_q <= 0.0):
        raise WrongScenarioKind(SVD_MIXED, 'side %s temporal disturbance is singular' % colored)
    eig_t = bc.g1.eig_t
    sigma_t = np.clip(eig_t.values, 0.0, None)
    sigma_r, beta = _side_modes(bc, colored, SVD_MIXED)
    rows = [_mode_terms(sigma_t, *white_modes), _mode_terms(sigma_t, sigma_r, beta, 1.0 / delta_q)]
    powers, lam = waterfill(np.vstack([c for c, _ in rows]), np.vstack([a for _, a in rows]), bc.tau_r)
    s = (eig_t.vectors.conj() * np.sqrt(powers)[np.newaxis, :]) @ u_q.T
    seq = _sequence(bc, s)
    logger.debug("mixed relay design: white side %s, powers %s" % (white, powers))
    return _report(scenario, seq, [bc_mse(scenario, seq, 1) + bc_mse(scenario, seq, 2)], lam,
                   _power_residual(powers, lam, bc.tau_r), SVD_MIXED)


def _power_residual(powers, multiplier, budget):
    if multiplier <= 0.0 or budget <= 0.0:
        return 0.0
    return abs(powers.sum() - budget) / budget


def qr_problem(scenario):
    """Convex program over Q_R = S_R^T S_R^* for a scalar relay transmit covariance a I."""
    bc = _phase(scenario)
    z_t = bc.z_t
    a = np.trace(z_t).real / bc.m
    if a <= 0.0 or np.linalg.norm(z_t - a * np.eye(bc.m)) > 1e-9 * a * bc.m:
        raise WrongScenarioKind(CONVEX_QR, 'relay transmit covariance is not a multiple of the identity')
    if bc.l_r != bc.m:
        raise WrongScenarioKind(CONVEX_QR, 'requires L_R = M, got L_R=%s, M=%s' % (bc.l_r, bc.m))
    base = np.eye(bc.l_r)
    terms = []
    for side in (1, 2):
        _, disturbance = bc.hop(side)
        sigma_r, beta = _side_modes(bc, side, CONVEX_QR)
        congruence = inv_sqrt(disturbance.k_q)
        terms.extend(PsdTraceInverseTerm(a * sigma, base, a * b, congruence, None)
                     for sigma, b in zip(sigma_r, beta) if sigma > 0.0)
    return PsdTraceInverseProblem(terms, [(base, bc.tau_r)])


def convex_qr_design(scenario, tol=1e-9, max_iter=5000):
    bc = _phase(scenario)
    problem = qr_problem(scenario)
    multiplier = 0.0
    residual = 0.0
    q = np.zeros((bc.l_r, bc.l_r), dtype=complex)
    if bc.tau_r > 0.0:
        try:
            solution = solve_psd_trace_inverse(problem, tol, max_iter)
        except MaxIterExceeded as e:
            logger.warning("trace-inverse solver stopped after %s iterations, using its best iterate" % e.iterations)
            solution = e.best
        q = solution.q
        multiplier = solution.multipliers[0]
        residual = solution.kkt_residual
    eig = hermitian_eig(q)
    # S_R^T S_R^* = Q
    s = np.sqrt(np.clip(eig.values, 0.0, None))[:, np.newaxis] * eig.vectors.T
    seq = _sequence(bc, s)
    return _report(scenario, seq, [bc_mse(scenario, seq, 1) + bc_mse(scenario, seq, 2)], multiplier, residual,
                   CONVEX_QR)


def bc_mse_floor(scenario, l_r):
    bc = _phase(scenario)
    sigma_t = np.clip(bc.g1.eig_t.values, 0.0, None)
    if l_r >= sigma_t.size:
        return 0.0
    receive = np.trace(bc.g1.z_r).real + np.trace(bc.g2.z_r).real
    return float(sigma_t[l_r:].sum() * receive)


def min_training_length_bc(scenario):
    return _phase(scenario).m
