#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
    twr_sim

    Monte-Carlo experiment runner for two-way relay training designs.

    Builds the MAC and BC scenarios from an INI file, designs training sequences with every
    configured method over an SNR grid, and reports analytic and empirical NMSE. SNR is defined
    as 10 log10(P / mu) where mu is the white-noise level of each configured disturbance.

    :license: BSD, see LICENSE for more details.
"""

import argparse
import configparser
import csv
import itertools
import json
import logging
import math
import re
import sys
import time
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from twr_bc_design import algorithm2, convex_qr_design, svd_design_mixed, svd_design_white
from twr_channel import (NOISE_LIMITED, NOISE_PLUS_INTERFERENCE, SCENARIO_KINDS, BcPhase, DisturbanceModel, MacPhase,
                         TwrScenario, ar1_temporal_cov, bessel_spatial_cov, make_disturbance, make_rng)
from twr_convex import solve_ball
from twr_kernels import kron
from twr_lmmse import (BC, MAC, LmmseEstimator, TrainingSequence, bc_estimator, bc_mse_total, compact_mse,
                       estimate_channels, identity_block, identity_init, link_measurement, link_weight, lmmse_matrix,
                       mac_estimator, mac_mse, observe_bc, observe_mac, random_init, scale_to_budget, sequence_matrix,
                       training_quadratic)
from twr_mac_design import (DEFAULT_MAX_ITER, DEFAULT_TOL, algorithm1, alternate, convex_psd_design,
                            kkt_closed_form_design, waterfilling_design)
from twr_training import (ConfigError, LengthTooShort, ResultsIOError, ScenarioError, TwrError, WrongScenarioKind,
                          __homepage__, __version__)

logger = logging.getLogger(__name__)

# Default arguments
DEFAULT_CONFIG_FILE = 'twr_sim_config.ini'
DEFAULT_LOG_LEVEL = 'INFO'
DEFAULT_FORMAT = 'csv'

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')

IDENTITY_BASELINE = 'identity_baseline'
P2P_ORTHOGONAL_BASELINE = 'p2p_orthogonal_baseline'
MAC_METHODS = ('algorithm1', 'kkt_closed_form', 'waterfilling', 'convex_psd', IDENTITY_BASELINE,
               P2P_ORTHOGONAL_BASELINE)
BC_METHODS = ('algorithm2', 'svd_mixed', 'svd_white', 'convex_qr', IDENTITY_BASELINE, P2P_ORTHOGONAL_BASELINE)
ITERATIVE_METHODS = ('algorithm1', 'kkt_closed_form', 'algorithm2')

RESULT_COLUMNS = ('method', 'snr_db', 'analytic_nmse', 'empirical_nmse', 'iterations', 'wall_time', 'seed')
CONVERGENCE_COLUMNS = ('iteration', 'mse')
COMPARE_COLUMNS = ('method', 'snr_db', 'nmse', 'baseline_nmse', 'gap_db')

# every (method, snr) cell owns this many consecutive random streams
CELL_STREAMS = 1 << 32

ResultRow = namedtuple('ResultRow', RESULT_COLUMNS)
CompareRow = namedtuple('CompareRow', COMPARE_COLUMNS)
DesignOutcome = namedtuple('DesignOutcome', ('seq', 'mse', 'iterations', 'trace'))

MacParams = namedtuple('MacParams', ('d_t_h1', 'd_t_h2', 'd_r_h', 'kind', 'mu', 'nu', 'eta', 'temporal_strength'))
BcParams = namedtuple('BcParams', ('d_t_g', 'd_r_g1', 'd_r_g2', 'kind_1', 'kind_2', 'mu_1', 'mu_2', 'nu_1', 'nu_2',
                                   'eta_1', 'eta_2', 'temporal_strength_1', 'temporal_strength_2'))
ScenarioConfig = namedtuple('ScenarioConfig', ('n1', 'n2', 'm', 'l_s', 'l_r', 'mac', 'bc'))
ExperimentConfig = namedtuple('ExperimentConfig', ('phase', 'methods', 'snr_grid', 'trials', 'seed', 'init',
                                                   'random_starts', 'workers', 'chunk_size', 'power', 'power_ratio',
                                                   'relay_power', 'tol', 'max_iter', 'scenario'))


def _option_line(lines, section, option):
    """1-based line of ``option`` inside ``[section]``, None when it is not in the file."""
    current = None
    pattern = re.compile(r'^\s*%s\s*[=:]' % re.escape(option), re.IGNORECASE)
    for number, line in enumerate(lines, 1):
        header = re.match(r'^\s*\[([^\]]+)\]', line)
        if header:
            current = header.group(1).strip()
        elif current == section and pattern.match(line):
            return number
    return None


class _Reader(object):
    """Typed option access that reports the offending section, option and line."""

    def __init__(self, config, lines):
        self.config = config
        self.lines = lines

    def fail(self, section, option, reason):
        line = _option_line(self.lines, section, option)
        logger.fatal("config option %s in [%s] (line %s) is not valid: %s" % (option, section, line, reason))
        raise ConfigError(reason, section, option, line)

    def get(self, getter, section, option, fallback):
        try:
            value = getattr(self.config, getter)(section, option, fallback=fallback)
        except ValueError as e:
            self.fail(section, option, str(e))
        logger.debug("Config %s %s: %s" % (section, option, value))
        return value

    def floats(self, section, option, fallback):
        text = self.get('get', section, option, fallback)
        try:
            values = [float(item) for item in text.split(',') if item.strip()]
        except ValueError as e:
            self.fail(section, option, str(e))
        return values

    def names(self, section, option, fallback):
        text = self.get('get', section, option, fallback)
        return [item.strip() for item in text.split(',') if item.strip()]

    def require(self, condition, section, option, reason):
        if not condition:
            self.fail(section, option, reason)


def load_config(path):
    """Parse an experiment file into an ``ExperimentConfig``; missing options use the simulation defaults."""
    config = configparser.ConfigParser()
    logger.debug("Loading config file: %s" % path)
    try:
        with open(path) as config_file:
            lines = config_file.readlines()
        config.read_file(lines, source=path)
    except OSError as e:
        logger.fatal("Unable to read config file %s: %s" % (path, e))
        raise ConfigError('unable to read %s: %s' % (path, e))
    except configparser.Error as e:
        line = getattr(e, 'lineno', None)
        if line is None and getattr(e, 'errors', None):
            line = e.errors[0][0]
        logger.fatal("Config file %s is not valid: %s" % (path, e))
        raise ConfigError(str(e).splitlines()[0], line=line)
    reader = _Reader(config, lines)

    # get phase
    #
    # description: Transmission phase the experiment designs training for (MAC or BC)
    # default: MAC
    phase = reader.get('get', 'experiment', 'phase', 'MAC').upper()
    reader.require(phase in (MAC, BC), 'experiment', 'phase', 'expected MAC or BC, got %s' % phase)

    # get methods
    #
    # description: Comma-separated design methods to run; they must belong to the phase
    # default: algorithm1, p2p_orthogonal_baseline (MAC) or algorithm2, p2p_orthogonal_baseline (BC)
    default_methods = '%s, %s' % ('algorithm1' if phase == MAC else 'algorithm2', P2P_ORTHOGONAL_BASELINE)
    methods = reader.names('experiment', 'methods', default_methods)
    allowed = MAC_METHODS if phase == MAC else BC_METHODS
    for method in methods:
        reader.require(method in allowed, 'experiment', 'methods',
                       'method %s is not available for the %s phase (choose from %s)'
                       % (method, phase, ', '.join(allowed)))
    reader.require(len(methods) > 0, 'experiment', 'methods', 'at least one method is required')

    # get snr-grid
    #
    # description: Comma-separated SNR values in dB, SNR = 10 log10(P / mu)
    # default: 0, 5, 10, 15, 20
    snr_grid = reader.floats('experiment', 'snr-grid', '0, 5, 10, 15, 20')
    reader.require(snr_grid and all(math.isfinite(snr) for snr in snr_grid), 'experiment', 'snr-grid',
                   'SNR values must be finite and at least one is required')

    # get trials
    #
    # description: Monte-Carlo channel realizations per (method, SNR) cell
    # default: 1000
    trials = reader.get('getint', 'experiment', 'trials', 1000)
    reader.require(trials >= 1, 'experiment', 'trials', 'trials must be at least 1')

    # get seed
    #
    # description: Master seed of all random streams
    # default: 1
    seed = reader.get('getint', 'experiment', 'seed', 1)
    reader.require(0 <= seed < 2 ** 64, 'experiment', 'seed', 'seed must be a non-negative 64-bit integer')

    # get init
    #
    # description: Starting point of the iterative designs, identity or random(n) (best of n random starts)
    # default: identity
    init_text = reader.get('get', 'experiment', 'init', 'identity').strip().lower()
    random_match = re.fullmatch(r'random(?:\((\d+)\))?', init_text)
    reader.require(init_text == 'identity' or random_match is not None, 'experiment', 'init',
                   'expected identity or random(n), got %s' % init_text)
    init = 'identity' if init_text == 'identity' else 'random'
    random_starts = int(random_match.group(1) or 1) if random_match else 0
    reader.require(init == 'identity' or random_starts >= 1, 'experiment', 'init', 'random(n) needs n >= 1')

    # get workers
    #
    # description: Threads evaluating Monte-Carlo chunks; results do not depend on this value
    # default: 1
    workers = reader.get('getint', 'experiment', 'workers', 1)
    reader.require(workers >= 1, 'experiment', 'workers', 'workers must be at least 1')

    # get chunk-size
    #
    # description: Trials per random stream
    # default: 256
    chunk_size = reader.get('getint', 'experiment', 'chunk-size', 256)
    reader.require(chunk_size >= 1, 'experiment', 'chunk-size', 'chunk-size must be at least 1')

    # get power
    #
    # description: Per-source power P; the sources share tau1 + tau2 = 2P
    # default: 1.0
    power = reader.get('getfloat', 'experiment', 'power', 1.0)
    reader.require(power >= 0.0 and math.isfinite(power), 'experiment', 'power', 'power must be non-negative')

    # get power-ratio
    #
    # description: Share r of the source sum power used by S1 (tau1 = 2P r, tau2 = 2P (1 - r))
    # default: 0.5
    power_ratio = reader.get('getfloat', 'experiment', 'power-ratio', 0.5)
    reader.require(0.0 <= power_ratio <= 1.0, 'experiment', 'power-ratio', 'power-ratio must lie in [0, 1]')

    # get relay-power
    #
    # description: Relay budget as a multiple of P (tau_R = P * relay-power)
    # default: 1.0
    relay_power = reader.get('getfloat', 'experiment', 'relay-power', 1.0)
    reader.require(relay_power >= 0.0, 'experiment', 'relay-power', 'relay-power must be non-negative')

    # get tol
    #
    # description: Relative MSE change that stops the iterative designs
    # default: 1e-6
    tol = reader.get('getfloat', 'experiment', 'tol', DEFAULT_TOL)
    reader.require(tol > 0.0, 'experiment', 'tol', 'tol must be positive')

    # get max-iter
    #
    # description: Iteration cap of the iterative designs
    # default: 200
    max_iter = reader.get('getint', 'experiment', 'max-iter', DEFAULT_MAX_ITER)
    reader.require(max_iter >= 1, 'experiment', 'max-iter', 'max-iter must be at least 1')

    # get antenna counts and training lengths
    #
    # description: N1, N2 source antennas, M relay antennas, L_S and L_R training lengths
    # default: 3, 3, 3, N1 + N2, M
    n1 = reader.get('getint', 'scenario', 'n1', 3)
    n2 = reader.get('getint', 'scenario', 'n2', 3)
    m = reader.get('getint', 'scenario', 'm', 3)
    for option, value in (('n1', n1), ('n2', n2), ('m', m)):
        reader.require(value >= 1, 'scenario', option, 'antenna counts must be at least 1')
    l_s = reader.get('getint', 'scenario', 'l-s', n1 + n2)
    l_r = reader.get('getint', 'scenario', 'l-r', m)
    reader.require(l_s >= 1, 'scenario', 'l-s', 'l-s must be at least 1')
    reader.require(l_r >= 1, 'scenario', 'l-r', 'l-r must be at least 1')

    # get MAC channel correlation
    #
    # description: Bessel correlation factors of the source transmit arrays and the relay receive array
    # default: 1.5, 1.8, 1.3
    d_t_h1 = reader.get('getfloat', 'mac', 'd-t-h1', 1.5)
    d_t_h2 = reader.get('getfloat', 'mac', 'd-t-h2', 1.8)
    d_r_h = reader.get('getfloat', 'mac', 'd-r-h', 1.3)

    # get MAC disturbance
    #
    # description: Disturbance kind at the relay, white noise level mu, interference strength nu,
    #     AR(1) coefficient eta and temporal interference strength
    # default: noise_plus_temporally_uncorrelated, 1.0, 1.0, 0.9, 1.0
    kind = reader.get('get', 'mac', 'kind', NOISE_PLUS_INTERFERENCE)
    reader.require(kind in SCENARIO_KINDS, 'mac', 'kind', 'expected one of %s' % ', '.join(SCENARIO_KINDS))
    mu = reader.get('getfloat', 'mac', 'mu', 1.0)
    nu = reader.get('getfloat', 'mac', 'nu', 1.0)
    eta = reader.get('getfloat', 'mac', 'eta', 0.9)
    temporal_strength = reader.get('getfloat', 'mac', 'temporal-strength', 1.0)
    reader.require(mu >= 0.0 and nu >= 0.0, 'mac', 'mu', 'mu and nu must be non-negative')
    reader.require(abs(eta) < 1.0, 'mac', 'eta', 'eta must satisfy |eta| < 1')
    reader.require(temporal_strength > 0.0, 'mac', 'temporal-strength', 'temporal-strength must be positive')
    mac = MacParams(d_t_h1, d_t_h2, d_r_h, kind, mu, nu, eta, temporal_strength)

    # get BC channel correlation
    #
    # description: Bessel correlation factors of the relay transmit array and both source receive arrays
    # default: 1.9, 1.95, 0.3
    d_t_g = reader.get('getfloat', 'bc', 'd-t-g', 1.9)
    d_r_g1 = reader.get('getfloat', 'bc', 'd-r-g1', 1.95)
    d_r_g2 = reader.get('getfloat', 'bc', 'd-r-g2', 0.3)

    # get BC disturbance
    #
    # description: Per-side disturbance kind, mu, nu, AR(1) coefficient and temporal strength
    # default: noise_plus_temporally_uncorrelated, 1.0, 1.0, 0.9 (side 1) / -0.9 (side 2), 1.0
    sides = []
    for side, default_eta in ((1, 0.9), (2, -0.9)):
        side_kind = reader.get('get', 'bc', 'kind-%s' % side, NOISE_PLUS_INTERFERENCE)
        reader.require(side_kind in SCENARIO_KINDS, 'bc', 'kind-%s' % side,
                       'expected one of %s' % ', '.join(SCENARIO_KINDS))
        side_mu = reader.get('getfloat', 'bc', 'mu-%s' % side, 1.0)
        side_nu = reader.get('getfloat', 'bc', 'nu-%s' % side, 1.0)
        side_eta = reader.get('getfloat', 'bc', 'eta-%s' % side, default_eta)
        side_strength = reader.get('getfloat', 'bc', 'temporal-strength-%s' % side, 1.0)
        reader.require(side_mu >= 0.0 and side_nu >= 0.0, 'bc', 'mu-%s' % side, 'mu and nu must be non-negative')
        reader.require(abs(side_eta) < 1.0, 'bc', 'eta-%s' % side, 'eta must satisfy |eta| < 1')
        reader.require(side_strength > 0.0, 'bc', 'temporal-strength-%s' % side,
                       'temporal-strength must be positive')
        sides.append((side_kind, side_mu, side_nu, side_eta, side_strength))
    bc = BcParams(d_t_g, d_r_g1, d_r_g2, sides[0][0], sides[1][0], sides[0][1], sides[1][1], sides[0][2],
                  sides[1][2], sides[0][3], sides[1][3], sides[0][4], sides[1][4])

    scenario = ScenarioConfig(n1, n2, m, l_s, l_r, mac, bc)
    return ExperimentConfig(phase, methods, snr_grid, trials, seed, init, random_starts, workers, chunk_size, power,
                            power_ratio, relay_power, tol, max_iter, scenario)


def white_level(disturbance, mu):
    """Per-sample white-noise power of a configured disturbance.

    Kinds with a mu I spatial term use mu times the mean temporal diagonal; the others fall back to
    the mean diagonal of the whole covariance.
    """
    temporal = np.mean(np.diag(disturbance.k_q).real)
    if disturbance.kind in (NOISE_LIMITED, NOISE_PLUS_INTERFERENCE) and mu > 0.0:
        return float(mu * temporal)
    return float(temporal * np.mean(np.diag(disturbance.k_r).real))


def at_snr(disturbance, mu, noise):
    """Rescale ``disturbance`` so that its white-noise level equals ``noise``."""
    level = white_level(disturbance, mu)
    if level <= 0.0:
        return disturbance
    return disturbance.scaled(noise / level)


def build_scenario(cfg, snr_db):
    """Both phases of the configured link with every white-noise level set to P / 10^(snr/10)."""
    sc = cfg.scenario
    noise = cfg.power / 10.0 ** (snr_db / 10.0) if cfg.power > 0.0 else 10.0 ** (-snr_db / 10.0)
    tau1 = 2.0 * cfg.power * cfg.power_ratio
    tau2 = 2.0 * cfg.power * (1.0 - cfg.power_ratio)
    tau_r = cfg.power * cfg.relay_power

    p = sc.mac
    z_r = bessel_spatial_cov(sc.m, p.d_r_h, sc.m)
    k_q = ar1_temporal_cov(sc.l_s, p.eta, p.temporal_strength)
    relay = at_snr(make_disturbance(p.kind, z_r, k_q, p.mu, p.nu), p.mu, noise)
    mac = MacPhase(bessel_spatial_cov(sc.n1, p.d_t_h1, sc.n1), bessel_spatial_cov(sc.n2, p.d_t_h2, sc.n2), z_r,
                   relay, tau1, tau2, sc.l_s)

    p = sc.bc
    z_r1 = bessel_spatial_cov(sc.n1, p.d_r_g1, sc.n1)
    z_r2 = bessel_spatial_cov(sc.n2, p.d_r_g2, sc.n2)
    d1 = make_disturbance(p.kind_1, z_r1, ar1_temporal_cov(sc.l_r, p.eta_1, p.temporal_strength_1), p.mu_1, p.nu_1)
    d2 = make_disturbance(p.kind_2, z_r2, ar1_temporal_cov(sc.l_r, p.eta_2, p.temporal_strength_2), p.mu_2, p.nu_2)
    bc = BcPhase(bessel_spatial_cov(sc.m, p.d_t_g, sc.m), z_r1, z_r2, at_snr(d1, p.mu_1, noise),
                 at_snr(d2, p.mu_2, noise), tau_r, sc.l_r)
    return TwrScenario(mac, bc)


def design_point_to_point(model, disturbance, tau, length, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """MSE-minimizing training for a single Kronecker link under one power budget.

    Alternates the LMMSE estimator with the ball-constrained quadratic in vec(S^T), starting from
    ``identity_block``.
    """
    rows = model.n_tx
    k = disturbance.covariance()
    c0 = link_weight(model.c_t, model.c_r)
    lift = kron(model.c_t, model.c_r)

    def link_mse(s):
        return compact_mse(c0, link_measurement(s, model.c_t, model.c_r), k)

    def step(iteration, s):
        phi = link_measurement(s, model.c_t, model.c_r)
        estimator = LmmseEstimator(lmmse_matrix(phi, k), lift, phi, c0, k, [(model.n_rx, rows)])
        quadratic, linear, _ = training_quadratic(estimator, rows, model.n_rx, length)
        x, lam = solve_ball(quadratic, linear, tau)
        candidate = scale_to_budget(sequence_matrix(x, rows, length), tau)
        return candidate, link_mse(candidate), lam

    s = identity_block(model.eig_t, tau, length)
    s, _, _, _ = alternate('point-to-point design', s, link_mse(s), step, tol, max_iter)
    return s


def p2p_orthogonal_baseline(scenario, phase, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Point-to-point designs: time-disjoint S1 and S2 (MAC), or S_R matched to the relay-to-S1 hop only (BC)."""
    if phase == MAC:
        mac = scenario.mac
        if mac.l_s < mac.n:
            raise LengthTooShort(P2P_ORTHOGONAL_BASELINE, mac.l_s, mac.n)
        s = np.zeros((mac.n, mac.l_s), dtype=complex)
        k_q = mac.disturbance.k_q
        for hop, tau, slots in ((mac.h1, mac.tau1, slice(0, mac.n1)), (mac.h2, mac.tau2, slice(mac.n1, mac.n))):
            sub = DisturbanceModel(k_q[slots, slots], mac.disturbance.k_r, mac.disturbance.kind)
            s[slots, slots] = design_point_to_point(hop, sub, tau, hop.n_tx, tol, max_iter)
        return TrainingSequence.mac(s[:mac.n1], s[mac.n1:], mac.tau1, mac.tau2)
    bc = scenario.bc
    s = design_point_to_point(bc.g1, bc.d1, bc.tau_r, bc.l_r, tol, max_iter)
    return TrainingSequence.bc(s, bc.tau_r)


def phase_mse(scenario, phase, seq):
    return mac_mse(scenario, seq) if phase == MAC else bc_mse_total(scenario, seq)


def _starts(scenario, cfg, rng):
    if cfg.init == 'identity':
        return [identity_init(scenario, cfg.phase)]
    return [random_init(scenario, cfg.phase, rng) for _ in range(cfg.random_starts)]


def design_sequence(scenario, cfg, method, rng):
    """Run one design method and return a ``DesignOutcome``."""
    phase = cfg.phase
    if method == IDENTITY_BASELINE:
        seq = identity_init(scenario, phase)
        mse = phase_mse(scenario, phase, seq)
        return DesignOutcome(seq, mse, 0, [mse])
    if method == P2P_ORTHOGONAL_BASELINE:
        seq = p2p_orthogonal_baseline(scenario, phase, cfg.tol, cfg.max_iter)
        mse = phase_mse(scenario, phase, seq)
        return DesignOutcome(seq, mse, 0, [mse])
    if method in ITERATIVE_METHODS:
        design = {'algorithm1': algorithm1, 'kkt_closed_form': kkt_closed_form_design, 'algorithm2': algorithm2}[method]
        best = None
        for start in _starts(scenario, cfg, rng):
            report = design(scenario, start, cfg.tol, cfg.max_iter)
            mse = report.mse if phase == MAC else report.mse_total
            if best is None or mse < best.mse:
                best = DesignOutcome(report.seq, mse, len(report.trace) - 1, report.trace)
        return best
    design = {'waterfilling': waterfilling_design, 'convex_psd': convex_psd_design, 'svd_mixed': svd_design_mixed,
              'svd_white': svd_design_white, 'convex_qr': convex_qr_design}[method]
    report = design(scenario)
    mse = report.mse if phase == MAC else report.mse_total
    return DesignOutcome(report.seq, mse, len(report.trace) - 1, report.trace)


def _squared_error(scenario, phase, seq, estimators, rng, size):
    total = 0.0
    if phase == MAC:
        y, truth = observe_mac(scenario, seq, rng, size)
        for h, h_hat in zip(truth, estimate_channels(estimators[0], y)):
            total += float(np.sum(np.abs(h - h_hat) ** 2))
        return total
    for side, estimator in zip((1, 2), estimators):
        y, truth = observe_bc(scenario, seq, side, rng, size)
        total += float(np.sum(np.abs(truth[0] - estimate_channels(estimator, y)[0]) ** 2))
    return total


def monte_carlo_nmse(scenario, phase, seq, trials, seed, cell=0, chunk_size=256, workers=1):
    """Empirical NMSE over ``trials`` realizations; chunk i of cell c draws from stream c * CELL_STREAMS + 1 + i."""
    if phase == MAC:
        estimators = [mac_estimator(scenario, seq)]
    else:
        estimators = [bc_estimator(scenario, seq, 1), bc_estimator(scenario, seq, 2)]
    chunks = [(index, min(chunk_size, trials - start)) for index, start in enumerate(range(0, trials, chunk_size))]

    def run_chunk(chunk):
        index, size = chunk
        rng = make_rng(seed, cell * CELL_STREAMS + 1 + index)
        return _squared_error(scenario, phase, seq, estimators, rng, size)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        errors = list(pool.map(run_chunk, chunks))
    return sum(errors) / (trials * scenario.coefficients)


def run_experiment(cfg):
    """Design and evaluate every (method, SNR) cell; rows come back in method-major order."""
    rows = []
    logger.info("running %s methods over %s SNR points with %s trials each"
                % (len(cfg.methods), len(cfg.snr_grid), cfg.trials))
    for cell, (method, snr_db) in enumerate(itertools.product(cfg.methods, cfg.snr_grid)):
        start = time.perf_counter()
        scenario = build_scenario(cfg, snr_db)
        outcome = design_sequence(scenario, cfg, method, make_rng(cfg.seed, cell * CELL_STREAMS))
        analytic = outcome.mse / scenario.coefficients
        empirical = monte_carlo_nmse(scenario, cfg.phase, outcome.seq, cfg.trials, cfg.seed, cell, cfg.chunk_size,
                                     cfg.workers)
        row = ResultRow(method, float(snr_db), float(analytic), float(empirical), int(outcome.iterations),
                        time.perf_counter() - start, cfg.seed)
        logger.info("%s at %g dB: analytic NMSE %.6g, empirical NMSE %.6g, %s iterations"
                    % (method, snr_db, analytic, empirical, outcome.iterations))
        rows.append(row)
    return rows


def compare(cfg):
    """Gap in dB between each method and the orthogonal point-to-point baseline (analytic NMSE)."""
    methods = [method for method in cfg.methods if method != P2P_ORTHOGONAL_BASELINE]
    rows = []
    for snr_db in cfg.snr_grid:
        scenario = build_scenario(cfg, snr_db)
        baseline = phase_mse(scenario, cfg.phase, p2p_orthogonal_baseline(scenario, cfg.phase, cfg.tol,
                                                                          cfg.max_iter)) / scenario.coefficients
        for method in methods:
            outcome = design_sequence(scenario, cfg, method, make_rng(cfg.seed))
            nmse = outcome.mse / scenario.coefficients
            gap = 10.0 * math.log10(baseline / nmse) if nmse > 0.0 and baseline > 0.0 else 0.0
            logger.info("%s at %g dB: %.3f dB below the orthogonal baseline" % (method, snr_db, gap))
            rows.append(CompareRow(method, float(snr_db), float(nmse), float(baseline), float(gap)))
    return rows


def _open(path):
    if path is None or path == '-':
        return _Stdout()
    try:
        return open(path, 'w', newline='')
    except OSError as e:
        raise ResultsIOError(path, str(e))


class _Stdout(object):

    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        sys.stdout.flush()
        return False


def _write_table(columns, rows, path, fmt):
    if fmt not in ('csv', 'json'):
        raise ResultsIOError(path, 'unknown format %s' % fmt)
    try:
        with _open(path) as out:
            if fmt == 'json':
                json.dump([dict(zip(columns, row)) for row in rows], out, indent=2)
                out.write('\n')
            else:
                writer = csv.writer(out, lineterminator='\n')
                writer.writerow(columns)
                writer.writerows(rows)
    except OSError as e:
        raise ResultsIOError(path, str(e))


def emit_results(rows, fmt=DEFAULT_FORMAT, path=None):
    """Write result rows as CSV or JSON with the fixed column schema; ``path`` None writes to stdout."""
    _write_table(RESULT_COLUMNS, rows, path, fmt)


def emit_compare(rows, fmt=DEFAULT_FORMAT, path=None):
    _write_table(COMPARE_COLUMNS, rows, path, fmt)


def emit_convergence(trace, path=None):
    _write_table(CONVERGENCE_COLUMNS, list(enumerate(trace)), path, 'csv')


_RESULT_TYPES = (str, float, float, float, int, float, int)


def parse_results(path, fmt=DEFAULT_FORMAT):
    """Read rows written by ``emit_results``."""
    try:
        with open(path, newline='') as source:
            if fmt == 'json':
                records = json.load(source)
            else:
                reader = csv.reader(source)
                header = next(reader, None)
                if header is not None and tuple(header) != RESULT_COLUMNS:
                    raise ResultsIOError(path, 'unexpected header %s' % ','.join(header))
                records = [dict(zip(RESULT_COLUMNS, record)) for record in reader]
    except OSError as e:
        raise ResultsIOError(path, str(e))
    except ValueError as e:
        raise ResultsIOError(path, 'malformed results: %s' % e)
    try:
        return [ResultRow(*(kind(record[column]) for kind, column in zip(_RESULT_TYPES, RESULT_COLUMNS)))
                for record in records]
    except (KeyError, ValueError) as e:
        raise ResultsIOError(path, 'malformed row: %s' % e)


def parse_convergence(path):
    try:
        with open(path, newline='') as source:
            reader = csv.reader(source)
            next(reader, None)
            return [(int(iteration), float(mse)) for iteration, mse in reader]
    except OSError as e:
        raise ResultsIOError(path, str(e))
    except ValueError as e:
        raise ResultsIOError(path, 'malformed convergence file: %s' % e)


def _log_level(value):
    value = value.strip().upper()
    for level in LOG_LEVELS:
        if level.startswith(value) and value:
            return level
    raise argparse.ArgumentTypeError('invalid log level %s' % value)


def parse_args(args):
    parser = argparse.ArgumentParser(
        description='twr_sim.py v%s.' % __version__,
        epilog='twr_sim not working? Report at: %s/issues/new' % __homepage__
    )
    # Argument names are ordered alphabetically.
    parser.add_argument('--config-file', '--config', type=str, default=DEFAULT_CONFIG_FILE, dest='config_file',
                        help='Location of the experiment config file. Default: twr_sim_config.ini.')
    parser.add_argument('--format', type=str, default=DEFAULT_FORMAT, choices=('csv', 'json'),
                        help='Result file format. Default: csv.')
    parser.add_argument('--log-level', type=_log_level, default=DEFAULT_LOG_LEVEL,
                        help='Valid options: DEBUG, INFO (default), WARNING, ERROR, CRITICAL. '
                             'Both upper and lowercase values are allowed. '
                             'You may also simply use the leading character e.g. --log-level d')
    parser.add_argument('--out', type=str, default=None,
                        help='Output file. Default: standard output.')
    parser.add_argument('--seed', type=int, default=None,
                        help='Master seed, overrides the config file.')
    parser.add_argument('--snr', type=float, action='append', default=None,
                        help='SNR in dB, may be repeated; overrides snr-grid.')
    parser.add_argument('--trials', type=int, default=None,
                        help='Monte-Carlo trials per cell, overrides the config file.')
    parser.add_argument('--workers', type=int, default=None,
                        help='Worker threads, overrides the config file.')
    parser.add_argument('command', choices=('design', 'sweep', 'converge', 'compare'),
                        help='design: designed sequences and analytic NMSE at the first SNR; '
                             'sweep: analytic and empirical NMSE over the SNR grid; '
                             'converge: per-iteration MSE of the first iterative method; '
                             'compare: gap of each method to the orthogonal point-to-point baseline.')
    return parser.parse_args(args)


def apply_overrides(cfg, args):
    overrides = {}
    if args.seed is not None:
        overrides['seed'] = args.seed
    if args.trials is not None:
        overrides['trials'] = args.trials
    if args.workers is not None:
        overrides['workers'] = args.workers
    if args.snr:
        overrides['snr_grid'] = list(args.snr)
    cfg = cfg._replace(**overrides)
    if cfg.trials < 1 or cfg.workers < 1 or cfg.seed < 0:
        logger.fatal("command line overrides are not valid: %s" % overrides)
        raise ConfigError('trials and workers must be at least 1 and seed non-negative')
    if not all(math.isfinite(snr) for snr in cfg.snr_grid):
        raise ConfigError('SNR values must be finite')
    return cfg


def _design_records(cfg):
    snr_db = cfg.snr_grid[0]
    scenario = build_scenario(cfg, snr_db)
    records = []
    for cell, method in enumerate(cfg.methods):
        outcome = design_sequence(scenario, cfg, method, make_rng(cfg.seed, cell * CELL_STREAMS))
        records.append({'method': method,
                        'snr_db': snr_db,
                        'analytic_nmse': outcome.mse / scenario.coefficients,
                        'iterations': outcome.iterations,
                        'powers': list(outcome.seq.powers()),
                        'sequence': {'real': outcome.seq.s.real.tolist(), 'imag': outcome.seq.s.imag.tolist()}})
    return records


def run(argv):
    """Command line entry; returns the process exit code."""
    args = parse_args(argv)

    logging.basicConfig(level=getattr(logging, args.log_level),
                        format='%(asctime)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s')
    logger.debug("Logging with log level: %s" % args.log_level)

    try:
        cfg = apply_overrides(load_config(args.config_file), args)
        if args.command == 'sweep':
            emit_results(run_experiment(cfg), args.format, args.out)
        elif args.command == 'compare':
            emit_compare(compare(cfg), args.format, args.out)
        elif args.command == 'converge':
            iterative = [method for method in cfg.methods if method in ITERATIVE_METHODS]
            if not iterative:
                raise ConfigError('converge needs one of %s in methods' % ', '.join(ITERATIVE_METHODS),
                                  'experiment', 'methods')
            scenario = build_scenario(cfg, cfg.snr_grid[0])
            outcome = design_sequence(scenario, cfg, iterative[0], make_rng(cfg.seed))
            emit_convergence(outcome.trace, args.out)
        else:
            with _open(args.out) as out:
                json.dump(_design_records(cfg), out, indent=2)
                out.write('\n')
    except (ConfigError, ScenarioError, WrongScenarioKind, LengthTooShort) as e:
        logger.fatal("%s" % e)
        return EXIT_CONFIG
    except TwrError as e:
        logger.error("%s" % e)
        return EXIT_NUMERICAL
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == '__main__':
    main()
