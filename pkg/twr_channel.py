# -*- coding: utf-8 -*-
"""
    twr_channel

    Kronecker-structured channel statistics and colored disturbance models for the two
    transmission phases of a two-way relay link, plus the random draws used by the
    Monte-Carlo harness.

    MAC phase: sources S1, S2 (N1, N2 antennas) transmit to the relay (M antennas). Both hops
    share the relay receive covariance.
    BC phase: the relay transmits to both sources. Both hops share the relay transmit covariance.

    :license: BSD, see LICENSE for more details.
"""

import logging

import numpy as np
import scipy.linalg
import scipy.special

from twr_kernels import hermitian_eig, hermitian_factor, hermitize, is_hermitian, joint_eig, kron, psd_project
from twr_training import DimensionMismatch, NotJointlyDiagonalizable, ScenarioError

logger = logging.getLogger(__name__)

NOISE_LIMITED = 'noise_limited'
INTERFERENCE_LIMITED = 'interference_limited'
NOISE_PLUS_INTERFERENCE = 'noise_plus_temporally_uncorrelated'
SPATIALLY_UNCORRELATED = 'spatially_uncorrelated'
SCENARIO_KINDS = (NOISE_LIMITED, INTERFERENCE_LIMITED, NOISE_PLUS_INTERFERENCE, SPATIALLY_UNCORRELATED)


def _as_covariance(a, what):
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    if not is_hermitian(a):
        raise ScenarioError('%s is not Hermitian' % what)
    return hermitize(a)


class KroneckerChannelModel(object):
    """Statistics of one hop H = C_r W C_t^T, cov(vec H) = z_t kron z_r."""

    def __init__(self, z_t, z_r):
        self.z_t = _as_covariance(z_t, 'transmit covariance')
        self.z_r = _as_covariance(z_r, 'receive covariance')
        self.c_t = hermitian_factor(self.z_t)
        self.c_r = hermitian_factor(self.z_r)
        self.eig_t = hermitian_eig(self.z_t)
        self.eig_r = hermitian_eig(self.z_r)

    @property
    def n_tx(self):
        return self.z_t.shape[0]

    @property
    def n_rx(self):
        return self.z_r.shape[0]

    def covariance(self):
        return kron(self.z_t, self.z_r)

    def prior_mse(self):
        return float(np.trace(self.z_t).real * np.trace(self.z_r).real)


class DisturbanceModel(object):
    """Colored disturbance with cov(vec N) = k_q kron k_r (temporal kron spatial)."""

    def __init__(self, k_q, k_r, kind=None):
        self.k_q = _as_covariance(k_q, 'temporal disturbance covariance')
        self.k_r = _as_covariance(k_r, 'spatial disturbance covariance')
        self.kind = kind
        self.r_q = hermitian_factor(self.k_q)
        self.r_r = hermitian_factor(self.k_r)
        self.eig_q = hermitian_eig(self.k_q)
        self.eig_r = hermitian_eig(self.k_r)

    @property
    def length(self):
        return self.k_q.shape[0]

    @property
    def n_rx(self):
        return self.k_r.shape[0]

    def covariance(self):
        return kron(self.k_q, self.k_r)

    def scaled(self, factor):
        """Same disturbance with its power multiplied by ``factor`` (carried by k_q)."""
        return DisturbanceModel(factor * self.k_q, self.k_r, self.kind)

    def temporal_scalar(self, tol=1e-10):
        """Return q when k_q = q I, None otherwise."""
        q = np.trace(self.k_q).real / self.length
        if np.max(np.abs(self.k_q - q * np.eye(self.length)), initial=0.0) <= tol * max(abs(q), 1.0):
            return q
        return None

    def spatial_ratio(self, z_r, tol=1e-9):
        """Return c when k_r = c z_r, None otherwise."""
        trace_z = np.trace(z_r).real
        if trace_z <= 0.0:
            return None
        c = np.trace(self.k_r).real / trace_z
        if np.linalg.norm(self.k_r - c * z_r) <= tol * max(np.linalg.norm(self.k_r), 1.0):
            return c
        return None


def bessel_spatial_cov(n, d, target_trace):
    """Uniform-array spatial covariance [Z]_{n,m} = z J0(d |n - m|) with Tr(Z) = target_trace."""
    if n < 1 or target_trace <= 0.0:
        raise ScenarioError('bessel covariance needs n >= 1 and a positive trace (n=%s, trace=%s)'
                            % (n, target_trace))
    column = scipy.special.j0(d * np.arange(n))
    z = scipy.linalg.toeplitz(column).astype(complex) * (target_trace / float(n))
    if hermitian_eig(z).values[-1] < 0.0:
        z = psd_project(z)
        z *= target_trace / np.trace(z).real
    return z


def ar1_temporal_cov(l, eta, strength=1.0):
    """First-order autoregressive temporal covariance strength * eta^{|n-m|}, trace l * strength."""
    if l < 1 or not abs(eta) < 1.0 or strength < 0.0:
        raise ScenarioError('AR(1) covariance needs l >= 1, |eta| < 1, strength >= 0 (l=%s, eta=%s, strength=%s)'
                            % (l, eta, strength))
    column = np.power(float(eta), np.arange(l))
    return strength * scipy.linalg.toeplitz(column).astype(complex)


def make_disturbance(kind, paired_receive_cov, k_q, mu=1.0, nu=1.0):
    """Build the spatial disturbance for one of the four scenario kinds.

    noise_limited: mu I; interference_limited: Z_r; noise_plus_temporally_uncorrelated: mu I + nu Z_r;
    spatially_uncorrelated: I. The temporal part ``k_q`` is supplied by the caller.
    """
    z_r = _as_covariance(paired_receive_cov, 'paired receive covariance')
    m = z_r.shape[0]
    if kind == NOISE_LIMITED:
        k_r = mu * np.eye(m)
    elif kind == INTERFERENCE_LIMITED:
        k_r = z_r.copy()
    elif kind == NOISE_PLUS_INTERFERENCE:
        k_r = mu * np.eye(m) + nu * z_r
    elif kind == SPATIALLY_UNCORRELATED:
        k_r = np.eye(m)
    else:
        raise ScenarioError('invalid scenario kind %s, expected one of %s' % (kind, ', '.join(SCENARIO_KINDS)))
    model = DisturbanceModel(k_q, k_r, kind)
    try:
        joint_eig(z_r, model.k_r)
    except NotJointlyDiagonalizable:
        raise ScenarioError('disturbance of kind %s does not share the receive eigenvectors' % kind)
    logger.debug("disturbance %s: spatial eigenvalues %s" % (kind, model.eig_r.values))
    return model


class MacPhase(object):
    """Sources to relay: Y_R = H1 S1 + H2 S2 + N_R with H_i of shape M x N_i."""

    def __init__(self, z_t1, z_t2, z_r, disturbance, tau1, tau2, l_s):
        z_r = _as_covariance(z_r, 'relay receive covariance')
        self.h1 = KroneckerChannelModel(z_t1, z_r)
        self.h2 = KroneckerChannelModel(z_t2, z_r)
        # both hops hold the very same receive covariance object
        self.h2.z_r = self.h1.z_r
        self.h2.c_r = self.h1.c_r
        self.h2.eig_r = self.h1.eig_r
        self.disturbance = disturbance
        self.tau1 = float(tau1)
        self.tau2 = float(tau2)
        self.l_s = int(l_s)
        if self.tau1 < 0.0 or self.tau2 < 0.0 or self.l_s < 1:
            raise ScenarioError('MAC phase needs non-negative budgets and l_s >= 1')
        if disturbance.k_q.shape[0] != self.l_s:
            raise DimensionMismatch('MAC temporal disturbance', self.l_s, disturbance.k_q.shape[0])
        if disturbance.k_r.shape[0] != self.m:
            raise DimensionMismatch('MAC spatial disturbance', self.m, disturbance.k_r.shape[0])
        self.z_t = scipy.linalg.block_diag(self.h1.z_t, self.h2.z_t)
        self.c_t = scipy.linalg.block_diag(self.h1.c_t, self.h2.c_t)

    @property
    def n1(self):
        return self.h1.n_tx

    @property
    def n2(self):
        return self.h2.n_tx

    @property
    def n(self):
        return self.n1 + self.n2

    @property
    def m(self):
        return self.h1.n_rx

    @property
    def z_r(self):
        return self.h1.z_r

    @property
    def c_r(self):
        return self.h1.c_r

    @property
    def budgets(self):
        return (self.tau1, self.tau2)

    def prior_mse(self):
        return self.h1.prior_mse() + self.h2.prior_mse()

    def with_disturbance(self, disturbance):
        return MacPhase(self.h1.z_t, self.h2.z_t, self.z_r, disturbance, self.tau1, self.tau2, self.l_s)


class BcPhase(object):
    """Relay to sources: Y_i = G_i S_R + N_i with G_i of shape N_i x M."""

    def __init__(self, z_t, z_r1, z_r2, d1, d2, tau_r, l_r):
        z_t = _as_covariance(z_t, 'relay transmit covariance')
        self.g1 = KroneckerChannelModel(z_t, z_r1)
        self.g2 = KroneckerChannelModel(z_t, z_r2)
        self.g2.z_t = self.g1.z_t
        self.g2.c_t = self.g1.c_t
        self.g2.eig_t = self.g1.eig_t
        self.d1 = d1
        self.d2 = d2
        self.tau_r = float(tau_r)
        self.l_r = int(l_r)
        if self.tau_r < 0.0 or self.l_r < 1:
            raise ScenarioError('BC phase needs a non-negative budget and l_r >= 1')
        for side, (hop, dist) in enumerate(((self.g1, d1), (self.g2, d2)), 1):
            if dist.k_q.shape[0] != self.l_r:
                raise DimensionMismatch('BC temporal disturbance %s' % side, self.l_r, dist.k_q.shape[0])
            if dist.k_r.shape[0] != hop.n_rx:
                raise DimensionMismatch('BC spatial disturbance %s' % side, hop.n_rx, dist.k_r.shape[0])

    @property
    def m(self):
        return self.g1.n_tx

    @property
    def n1(self):
        return self.g1.n_rx

    @property
    def n2(self):
        return self.g2.n_rx

    @property
    def z_t(self):
        return self.g1.z_t

    def hop(self, side):
        if side not in (1, 2):
            raise ValueError('side must be 1 or 2, got %s' % side)
        return (self.g1, self.d1) if side == 1 else (self.g2, self.d2)

    def prior_mse(self):
        return self.g1.prior_mse() + self.g2.prior_mse()

    def with_disturbances(self, d1, d2):
        return BcPhase(self.z_t, self.g1.z_r, self.g2.z_r, d1, d2, self.tau_r, self.l_r)


class TwrScenario(object):
    """Both phases of one two-way relay link; either phase may be omitted."""

    def __init__(self, mac=None, bc=None):
        if mac is None and bc is None:
            raise ScenarioError('scenario needs at least one phase')
        if mac is not None and bc is not None:
            if (mac.n1, mac.n2, mac.m) != (bc.n1, bc.n2, bc.m):
                raise ScenarioError('MAC antennas (%s, %s, %s) differ from BC antennas (%s, %s, %s)'
                                    % (mac.n1, mac.n2, mac.m, bc.n1, bc.n2, bc.m))
        self.mac = mac
        self.bc = bc

    @property
    def n1(self):
        return (self.mac or self.bc).n1

    @property
    def n2(self):
        return (self.mac or self.bc).n2

    @property
    def m(self):
        return (self.mac or self.bc).m

    @property
    def coefficients(self):
        """Number of channel coefficients per phase, M (N1 + N2)."""
        return self.m * (self.n1 + self.n2)


def make_rng(master_seed, stream_id=0):
    """Counter-based stream; the 128-bit Philox key holds master_seed in its high word and stream_id in its low word."""
    if not 0 <= int(master_seed) < 2 ** 64 or not 0 <= int(stream_id) < 2 ** 64:
        raise ValueError('seed and stream id must fit in 64 bits (seed=%s, stream=%s)' % (master_seed, stream_id))
    return np.random.Generator(np.random.Philox(key=(int(master_seed) << 64) + int(stream_id)))


def complex_normal(rng, shape):
    """Circular complex Gaussian entries with unit variance."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_channel(model, rng, size=None):
    """Draw H = C_r W C_t^T; ``size`` adds a leading batch dimension."""
    shape = (model.n_rx, model.n_tx) if size is None else (size, model.n_rx, model.n_tx)
    w = complex_normal(rng, shape)
    return model.c_r @ w @ model.c_t.T


def sample_disturbance(model, rng, size=None):
    """Draw N = R_r Omega R_q^T with cov(vec N) = k_q kron k_r."""
    shape = (model.n_rx, model.length) if size is None else (size, model.n_rx, model.length)
    omega = complex_normal(rng, shape)
    return model.r_r @ omega @ model.r_q.T
