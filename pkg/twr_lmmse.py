# -*- coding: utf-8 -*-
"""
    twr_lmmse

    LMMSE channel estimators for the MAC and BC phases and their analytic MSE.

    Every link has the form y = (S^T C_t kron C_r) w + n with white w, cov(n) = K, so one set of
    helpers serves both phases:

        MAC: S = [S1; S2] ((N1+N2) x L_S), C_t = Blkdiag(C_t1, C_t2), C_r = C_r,H, K = K_R
        BC:  S = S_R (M x L_R),            C_t = C_t,G,               C_r = C_r,Gi, K = K_i

    The MSE is measured on the physical channel h = (C_t kron C_r) w, i.e. weighted by
    C0 = C_t^H C_t kron C_r^H C_r.

    :license: BSD, see LICENSE for more details.
"""

import logging

import numpy as np

from twr_channel import complex_normal, sample_channel, sample_disturbance
from twr_kernels import hermitian_eig, hermitian_solve, hermitize, joint_eig, kron, selection_matrix_E, unvec, vec
from twr_training import DimensionMismatch, ScenarioError, SingularGram

logger = logging.getLogger(__name__)

MAC = 'MAC'
BC = 'BC'

POWER_RTOL = 1e-8
POWER_ATOL = 1e-12


def _within_budget(power, budget):
    return power <= budget * (1.0 + POWER_RTOL) + POWER_ATOL


def block_power(block):
    return float(np.sum(np.abs(block) ** 2))


def scale_to_budget(block, budget):
    """Shrink ``block`` onto its power budget if round-off pushed it over."""
    power = block_power(block)
    if power > budget:
        return block * np.sqrt(budget / power)
    return block


class TrainingSequence(object):
    """A training matrix with its power budgets.

    For the MAC phase ``s`` stacks [S1; S2] and ``split`` is N1; for the BC phase ``s`` is S_R.
    """

    def __init__(self, phase, s, budgets, split=None):
        if phase not in (MAC, BC):
            raise ScenarioError('unknown phase %s' % phase)
        self.phase = phase
        self.s = np.atleast_2d(np.asarray(s, dtype=complex))
        self.budgets = tuple(float(b) for b in budgets)
        self.split = split
        if phase == MAC:
            if split is None or not 0 <= split <= self.s.shape[0] or len(self.budgets) != 2:
                raise ScenarioError('MAC training needs a row split and two budgets')
        elif len(self.budgets) != 1:
            raise ScenarioError('BC training needs one budget')
        for power, budget in zip(self.powers(), self.budgets):
            if not _within_budget(power, budget):
                raise ScenarioError('%s training power %.12g exceeds budget %.12g' % (phase, power, budget))

    @classmethod
    def mac(cls, s1, s2, tau1, tau2):
        s1 = np.atleast_2d(np.asarray(s1, dtype=complex))
        s2 = np.atleast_2d(np.asarray(s2, dtype=complex))
        return cls(MAC, np.vstack([s1, s2]), (tau1, tau2), split=s1.shape[0])

    @classmethod
    def bc(cls, s_r, tau_r):
        return cls(BC, s_r, (tau_r,))

    @property
    def s1(self):
        return self.s[:self.split]

    @property
    def s2(self):
        return self.s[self.split:]

    @property
    def length(self):
        return self.s.shape[1]

    def powers(self):
        if self.phase == MAC:
            return (block_power(self.s1), block_power(self.s2))
        return (block_power(self.s),)

    def __repr__(self):
        return '<TrainingSequence %s %sx%s powers=%s budgets=%s>' % (
            self.phase, self.s.shape[0], self.s.shape[1], tuple('%.6g' % p for p in self.powers()), self.budgets)


class LmmseEstimator(object):
    """Estimator w_hat = T y together with what is needed to map back to channel matrices.

    ``hop_shapes`` lists the (rows, cols) of each channel matrix stacked in h.
    """

    def __init__(self, t, lift, phi, c0, k, hop_shapes):
        self.t = t
        self.lift = lift
        self.phi = phi
        self.c0 = c0
        self.k = k
        self.hop_shapes = tuple(hop_shapes)

    @property
    def observation_size(self):
        return self.phi.shape[0]

    def normal_residual(self):
        """Relative residual of T R_yy = R_wy."""
        r_yy = self.phi @ self.phi.conj().T + self.k
        r_wy = self.phi.conj().T
        return np.linalg.norm(self.t @ r_yy - r_wy) / max(np.linalg.norm(r_wy), np.finfo(float).tiny)

    def mse(self):
        return weighted_error(self.c0, self.t, self.phi, self.k)


def link_measurement(s, c_t, c_r):
    """Phi = S^T C_t kron C_r."""
    return kron(s.T @ c_t, c_r)


def link_weight(c_t, c_r):
    """C0 = C_t^H C_t kron C_r^H C_r."""
    return kron(c_t.conj().T @ c_t, c_r.conj().T @ c_r)


def lmmse_matrix(phi, k):
    """T = Phi^H (Phi Phi^H + K)^-1 through a Hermitian solve."""
    r_yy = hermitize(phi @ phi.conj().T + k)
    return hermitian_solve(r_yy, phi).conj().T


def weighted_error(c0, t, phi, k):
    """C0-weighted MSE of an arbitrary linear estimator T on y = Phi w + n."""
    identity = np.eye(phi.shape[1])
    tphi = t @ phi
    error = identity - tphi - tphi.conj().T + t @ (phi @ phi.conj().T + k) @ t.conj().T
    return float(np.trace(c0 @ error).real)


def compact_mse(c0, phi, k):
    """Tr[C0 (I + Phi^H K^-1 Phi)^-1]; falls back to the estimator form when K is singular."""
    try:
        information = hermitize(np.eye(phi.shape[1]) + phi.conj().T @ hermitian_solve(k, phi))
        return float(np.trace(hermitian_solve(information, c0)).real)
    except SingularGram:
        logger.debug("disturbance covariance singular, evaluating MSE through the estimator")
        return weighted_error(c0, lmmse_matrix(phi, k), phi, k)


def eigen_domain_mse(z_t, z_r, disturbance, s):
    """Sum_n sigma_r,n Tr[(Z_t^-1 + beta_n S* K_q^-1 S^T)^-1] with beta_n = sigma_r,n / delta_r,n.

    Needs k_r to share the eigenvectors of z_r and an invertible z_t.
    """
    _, sigma_r, delta_r = joint_eig(z_r, disturbance.k_r)
    if np.any(delta_r <= 0.0):
        raise SingularGram('spatial disturbance covariance is singular')
    eig_t = hermitian_eig(z_t)
    if eig_t.values[-1] <= 1e-12 * max(eig_t.values[0], np.finfo(float).tiny):
        raise SingularGram('transmit covariance is singular, use the compact MSE form')
    n = z_t.shape[0]
    z_t_inv = hermitize(hermitian_solve(z_t, np.eye(n)))
    gram = hermitize(s.conj() @ hermitian_solve(disturbance.k_q, s.T))
    total = 0.0
    for sigma, delta in zip(sigma_r, delta_r):
        if sigma <= 0.0:
            continue
        inner = hermitian_solve(hermitize(z_t_inv + (sigma / delta) * gram), np.eye(n))
        total += sigma * np.trace(inner).real
    return float(total)


def _mac(scenario, seq):
    mac = scenario.mac
    if mac is None:
        raise ScenarioError('scenario has no MAC phase')
    if seq.phase != MAC:
        raise ScenarioError('expected MAC training, got %s' % seq.phase)
    if seq.s.shape != (mac.n, mac.l_s) or seq.split != mac.n1:
        raise DimensionMismatch('MAC training', (mac.n, mac.l_s), seq.s.shape)
    return mac


def _bc(scenario, seq):
    bc = scenario.bc
    if bc is None:
        raise ScenarioError('scenario has no BC phase')
    if seq.phase != BC:
        raise ScenarioError('expected BC training, got %s' % seq.phase)
    if seq.s.shape != (bc.m, bc.l_r):
        raise DimensionMismatch('BC training', (bc.m, bc.l_r), seq.s.shape)
    return bc


def mac_estimator(scenario, seq):
    mac = _mac(scenario, seq)
    phi = link_measurement(seq.s, mac.c_t, mac.c_r)
    k = mac.disturbance.covariance()
    return LmmseEstimator(t=lmmse_matrix(phi, k),
                          lift=kron(mac.c_t, mac.c_r),
                          phi=phi,
                          c0=link_weight(mac.c_t, mac.c_r),
                          k=k,
                          hop_shapes=[(mac.m, mac.n1), (mac.m, mac.n2)])


def mac_mse(scenario, seq):
    mac = _mac(scenario, seq)
    phi = link_measurement(seq.s, mac.c_t, mac.c_r)
    return compact_mse(link_weight(mac.c_t, mac.c_r), phi, mac.disturbance.covariance())


def mac_mse_eigen(scenario, seq):
    mac = _mac(scenario, seq)
    return eigen_domain_mse(mac.z_t, mac.z_r, mac.disturbance, seq.s)


def bc_estimator(scenario, seq, side):
    bc = _bc(scenario, seq)
    hop, disturbance = bc.hop(side)
    phi = link_measurement(seq.s, hop.c_t, hop.c_r)
    k = disturbance.covariance()
    return LmmseEstimator(t=lmmse_matrix(phi, k),
                          lift=kron(hop.c_t, hop.c_r),
                          phi=phi,
                          c0=link_weight(hop.c_t, hop.c_r),
                          k=k,
                          hop_shapes=[(hop.n_rx, hop.n_tx)])


def bc_mse(scenario, seq, side):
    bc = _bc(scenario, seq)
    hop, disturbance = bc.hop(side)
    phi = link_measurement(seq.s, hop.c_t, hop.c_r)
    return compact_mse(link_weight(hop.c_t, hop.c_r), phi, disturbance.covariance())


def bc_mse_total(scenario, seq):
    return bc_mse(scenario, seq, 1) + bc_mse(scenario, seq, 2)


def bc_mse_eigen(scenario, seq, side):
    bc = _bc(scenario, seq)
    hop, disturbance = bc.hop(side)
    return eigen_domain_mse(hop.z_t, hop.z_r, disturbance, seq.s)


def estimate_channels(estimator, observed_y):
    """Map y (or a batch of y as rows) to the list of estimated channel matrices."""
    y = np.asarray(observed_y)
    batched = y.ndim == 2
    if y.shape[-1] != estimator.observation_size:
        raise DimensionMismatch('observation', estimator.observation_size, y.shape[-1])
    mapping = estimator.lift @ estimator.t
    h = y @ mapping.T if batched else mapping @ y
    estimates = []
    offset = 0
    for rows, cols in estimator.hop_shapes:
        part = h[..., offset:offset + rows * cols]
        if batched:
            estimates.append(part.reshape((y.shape[0], cols, rows)).transpose(0, 2, 1))
        else:
            estimates.append(unvec(part, rows, cols))
        offset += rows * cols
    return estimates


def _vec_rows(y):
    """Column-major vectorization of one matrix or of each matrix in a batch."""
    if y.ndim == 2:
        return vec(y)
    return y.transpose(0, 2, 1).reshape((y.shape[0], -1))


def observe_mac(scenario, seq, rng, size=None):
    """Draw H1, H2 and N_R and return (y_R, [H1, H2])."""
    mac = _mac(scenario, seq)
    h1 = sample_channel(mac.h1, rng, size)
    h2 = sample_channel(mac.h2, rng, size)
    noise = sample_disturbance(mac.disturbance, rng, size)
    y = h1 @ seq.s1 + h2 @ seq.s2 + noise
    return _vec_rows(y), [h1, h2]


def observe_bc(scenario, seq, side, rng, size=None):
    """Draw G_i and N_i and return (y_i, [G_i])."""
    bc = _bc(scenario, seq)
    hop, disturbance = bc.hop(side)
    g = sample_channel(hop, rng, size)
    y = g @ seq.s + sample_disturbance(disturbance, rng, size)
    return _vec_rows(y), [g]


def _identity_block(rows, length, first_row, budget):
    # row r of the stacked sequence trains on column first_row + r
    block = np.zeros((rows, length), dtype=complex)
    if rows:
        scale = np.sqrt(budget / rows)
        for r in range(rows):
            block[r, first_row + r] = scale
    return block


def _mode_block(eig, picks, length, budget):
    # eigenmode k of the transmit covariance trains alone on its assigned column
    block = np.zeros((eig.vectors.shape[0], length), dtype=complex)
    if picks:
        scale = np.sqrt(budget / len(picks))
        for column, k in picks:
            block[:, column] = eig.vectors[:, k].conj() * scale
    return block


def _strongest_modes(eigs, budgets, length):
    """Assign the ``length`` strongest transmit eigenmodes of the powered sources to distinct columns."""
    modes = [(value, source, k) for source, (eig, budget) in enumerate(zip(eigs, budgets)) if budget > 0.0
             for k, value in enumerate(eig.values)]
    modes.sort(key=lambda mode: -mode[0])
    picks = [[] for _ in eigs]
    for column, (_, source, k) in enumerate(modes[:length]):
        picks[source].append((column, k))
    return picks


def identity_block(eig_t, budget, length):
    """Single-link starting point: a scaled identity, or the strongest transmit eigenmodes when short."""
    rows = eig_t.vectors.shape[0]
    if length >= rows:
        return _identity_block(rows, length, 0, budget)
    return _mode_block(eig_t, _strongest_modes((eig_t,), (budget,), length)[0], length, budget)


def identity_init(scenario, phase):
    """The "Identity" starting point: S = Blkdiag(a I_N1, b I_N2) (MAC) or S_R = c I_M (BC).

    A training length shorter than the transmit dimension cannot hold the identity; the
    sequence then spends each budget evenly on the strongest transmit eigenmodes, one per column.
    """
    if phase == MAC:
        mac = scenario.mac
        if mac.l_s >= mac.n:
            s1 = _identity_block(mac.n1, mac.l_s, 0, mac.tau1)
            s2 = _identity_block(mac.n2, mac.l_s, mac.n1, mac.tau2)
        else:
            eigs = (mac.h1.eig_t, mac.h2.eig_t)
            picks = _strongest_modes(eigs, mac.budgets, mac.l_s)
            s1, s2 = (_mode_block(eig, pick, mac.l_s, budget)
                      for eig, pick, budget in zip(eigs, picks, mac.budgets))
        return TrainingSequence.mac(s1, s2, mac.tau1, mac.tau2)
    bc = scenario.bc
    return TrainingSequence.bc(identity_block(bc.g1.eig_t, bc.tau_r, bc.l_r), bc.tau_r)


def _random_block(rng, rows, length, budget):
    block = complex_normal(rng, (rows, length))
    power = block_power(block)
    if rows == 0 or power == 0.0:
        return np.zeros((rows, length), dtype=complex)
    return block * np.sqrt(budget / power)


def random_init(scenario, phase, rng):
    """Random Gaussian starting point scaled to use the full budgets."""
    if phase == MAC:
        mac = scenario.mac
        return TrainingSequence.mac(_random_block(rng, mac.n1, mac.l_s, mac.tau1),
                                    _random_block(rng, mac.n2, mac.l_s, mac.tau2), mac.tau1, mac.tau2)
    bc = scenario.bc
    return TrainingSequence.bc(_random_block(rng, bc.m, bc.l_r, bc.tau_r), bc.tau_r)


def training_quadratic(estimator, n_tx, n_rx, length):
    """Write the estimator MSE as a quadratic in s = vec(S^T) for a fixed estimator T.

    Returns (A, c, constant) with e(T, S) = s^H A s - 2 Re(c^H s) + constant, where
    A = E^T (G^T kron T^H C0 T) E, G = Z_t kron Z_r, and E maps vec(S^T) to vec(S^T kron I).
    """
    e = selection_matrix_E(length, n_rx, n_tx)
    lift = estimator.lift
    t = estimator.t
    gram = lift @ lift.conj().T
    weighted = t.conj().T @ estimator.c0 @ t
    quadratic = hermitize(e.T @ kron(gram.T, weighted) @ e)
    cross = lift @ estimator.c0 @ t
    linear = e.T @ vec(cross.conj().T)
    constant = np.trace(estimator.c0).real + np.trace(estimator.c0 @ t @ estimator.k @ t.conj().T).real
    return quadratic, linear, float(constant)


def sequence_vector(s):
    """s = vec(S^T): the rows of S stacked."""
    return vec(np.asarray(s).T)


def sequence_matrix(s, rows, length):
    return unvec(s, length, rows).T
