# -*- coding: utf-8 -*-
import json
import logging
import os
import shutil
import tempfile
import textwrap
import unittest

import numpy as np

from twr_channel import make_rng
from twr_lmmse import BC, MAC, bc_mse, identity_init
from twr_sim import (COMPARE_COLUMNS, EXIT_CONFIG, EXIT_OK, P2P_ORTHOGONAL_BASELINE, RESULT_COLUMNS, ResultRow,
                     _log_level, apply_overrides, build_scenario, compare, design_sequence, emit_results,
                     load_config, monte_carlo_nmse, p2p_orthogonal_baseline, parse_args, parse_convergence,
                     parse_results, phase_mse, run, run_experiment)
from twr_training import ConfigError, ResultsIOError

SMALL_CONFIG = """
    [experiment]
    phase={phase}
    methods={methods}
    snr-grid={snr}
    trials={trials}
    seed=7
    chunk-size=50
    power={power}
    max-iter=50

    [scenario]
    n1=3
    n2=3
    m=3
"""


class ConfigTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, self.tmp)

    def write(self, name, text):
        path = os.path.join(self.tmp, name)
        with open(path, 'w') as f:
            f.write(textwrap.dedent(text).lstrip())
        return path

    def small_config(self, phase=MAC, methods='algorithm1', snr='10', trials=200, power=1.0):
        return load_config(self.write('small.ini', SMALL_CONFIG.format(phase=phase, methods=methods, snr=snr,
                                                                       trials=trials, power=power)))


class TestLoadConfig(ConfigTestCase):

    def test_shipped_config(self):
        cfg = load_config(os.path.join(os.path.dirname(os.path.abspath(__file__)), 'twr_sim_config.ini'))
        self.assertEqual(cfg.phase, MAC)
        self.assertEqual(cfg.methods, ['algorithm1', 'identity_baseline', P2P_ORTHOGONAL_BASELINE])
        self.assertEqual(cfg.snr_grid, [0.0, 5.0, 10.0, 15.0, 20.0])
        self.assertEqual((cfg.trials, cfg.seed, cfg.workers, cfg.chunk_size), (1000, 1, 1, 256))
        self.assertEqual((cfg.scenario.l_s, cfg.scenario.l_r), (6, 3))
        self.assertEqual(cfg.scenario.mac.eta, 0.9)
        self.assertEqual((cfg.scenario.bc.eta_1, cfg.scenario.bc.eta_2), (0.9, -0.9))

    def test_defaults(self):
        cfg = load_config(self.write('empty.ini', '[experiment]\n'))
        self.assertEqual(cfg.methods, ['algorithm1', P2P_ORTHOGONAL_BASELINE])
        self.assertEqual(cfg.init, 'identity')
        self.assertEqual((cfg.scenario.n1, cfg.scenario.n2, cfg.scenario.m), (3, 3, 3))
        self.assertEqual((cfg.scenario.l_s, cfg.scenario.l_r), (6, 3))
        self.assertEqual((cfg.power, cfg.power_ratio, cfg.relay_power), (1.0, 0.5, 1.0))

    def test_bc_defaults(self):
        cfg = load_config(self.write('bc.ini', '[experiment]\nphase=bc\n'))
        self.assertEqual(cfg.phase, BC)
        self.assertEqual(cfg.methods, ['algorithm2', P2P_ORTHOGONAL_BASELINE])

    def test_random_starts(self):
        cfg = load_config(self.write('random.ini', '[experiment]\ninit=random(4)\n'))
        self.assertEqual((cfg.init, cfg.random_starts), ('random', 4))

    def test_error_reports_line(self):
        path = self.write('bad.ini', """
            [experiment]
            phase=MAC
            trials=zero
        """)
        with self.assertRaises(ConfigError) as context:
            load_config(path)
        self.assertEqual((context.exception.section, context.exception.option, context.exception.line),
                         ('experiment', 'trials', 3))
        self.assertIn('line 3', str(context.exception))

    def test_method_must_match_phase(self):
        with self.assertRaises(ConfigError) as context:
            load_config(self.write('bad.ini', '[experiment]\nphase=MAC\nmethods=algorithm2\n'))
        self.assertEqual(context.exception.option, 'methods')

    def test_unit_ar1_coefficient(self):
        with self.assertRaises(ConfigError) as context:
            load_config(self.write('bad.ini', '[mac]\neta=1.0\n'))
        self.assertEqual(context.exception.line, 2)

    def test_not_an_ini_file(self):
        with self.assertRaises(ConfigError) as context:
            load_config(self.write('bad.ini', 'phase=MAC\n'))
        self.assertEqual(context.exception.line, 1)

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_config(os.path.join(self.tmp, 'missing.ini'))

    def test_overrides(self):
        cfg = self.small_config()
        args = parse_args(['--seed', '11', '--snr', '0', '--snr', '20', '--workers', '2', 'sweep'])
        cfg = apply_overrides(cfg, args)
        self.assertEqual((cfg.seed, cfg.snr_grid, cfg.workers, cfg.trials), (11, [0.0, 20.0], 2, 200))
        with self.assertRaises(ConfigError):
            apply_overrides(cfg, parse_args(['--trials', '0', 'sweep']))


class TestScenario(ConfigTestCase):

    def test_snr_scales_disturbance(self):
        cfg = self.small_config()
        low, high = build_scenario(cfg, 0.0), build_scenario(cfg, 10.0)
        np.testing.assert_allclose(high.mac.disturbance.k_q, 0.1 * low.mac.disturbance.k_q, atol=1e-14)
        np.testing.assert_allclose(high.bc.d2.k_q, 0.1 * low.bc.d2.k_q, atol=1e-14)
        self.assertEqual(high.mac.budgets, (1.0, 1.0))
        self.assertEqual(high.bc.tau_r, 1.0)
        self.assertEqual(high.coefficients, 18)

    def test_snr_sets_white_noise_level(self):
        base = textwrap.dedent(SMALL_CONFIG.format(phase=MAC, methods='algorithm1', snr='10', trials=10, power=1.0))
        path = self.write('levels.ini', base + textwrap.dedent("""
            [mac]
            kind=noise_limited
            mu=2
            eta=0
            temporal-strength=3

            [bc]
            kind-1=noise_limited
            mu-1=2
            eta-1=0
            temporal-strength-1=3
            kind-2=interference_limited
            eta-2=0
        """))
        scenario = build_scenario(load_config(path), 10.0)
        for disturbance in (scenario.mac.disturbance, scenario.bc.d1, scenario.bc.d2):
            self.assertAlmostEqual(np.mean(np.diag(disturbance.covariance()).real), 0.1, places=12)

    def test_power_split(self):
        cfg = self.small_config()._replace(power=2.0, power_ratio=0.25, relay_power=0.5)
        scenario = build_scenario(cfg, 10.0)
        self.assertEqual(scenario.mac.budgets, (1.0, 3.0))
        self.assertEqual(scenario.bc.tau_r, 1.0)


class TestBaseline(ConfigTestCase):

    def test_orthogonal_sources(self):
        scenario = build_scenario(self.small_config(), 10.0)
        seq = p2p_orthogonal_baseline(scenario, MAC)
        self.assertEqual(np.linalg.norm(seq.s1 @ seq.s2.conj().T), 0.0)
        for power, budget in zip(seq.powers(), scenario.mac.budgets):
            self.assertLessEqual(power, budget * (1.0 + 1e-8))

    def test_joint_design_improves_on_baseline(self):
        for phase, method in ((MAC, 'algorithm1'), (BC, 'algorithm2')):
            cfg = self.small_config(phase=phase, methods=method)
            for snr_db in (0.0, 10.0, 20.0):
                scenario = build_scenario(cfg, snr_db)
                baseline = phase_mse(scenario, phase, p2p_orthogonal_baseline(scenario, phase))
                joint = design_sequence(scenario, cfg, method, make_rng(cfg.seed))
                self.assertLessEqual(joint.mse, baseline * (1.0 + 1e-3))

    def test_gap_grows_with_asymmetric_interference(self):
        base = textwrap.dedent(SMALL_CONFIG.format(phase=BC, methods='algorithm2', snr='10', trials=10, power=1.0))
        symmetric = self.write('symmetric.ini', base + textwrap.dedent("""
            [bc]
            d-r-g2=1.95
            eta-2=0.9
        """))
        [asymmetric_row] = compare(load_config(self.write('asymmetric.ini', base)))
        [symmetric_row] = compare(load_config(symmetric))
        self.assertAlmostEqual(symmetric_row.gap_db, 0.0, delta=0.01)
        self.assertGreater(asymmetric_row.gap_db, symmetric_row.gap_db + 0.1)

    def test_bc_baseline(self):
        scenario = build_scenario(self.small_config(phase=BC, methods='algorithm2'), 10.0)
        seq = p2p_orthogonal_baseline(scenario, BC)
        self.assertLessEqual(seq.powers()[0], scenario.bc.tau_r * (1.0 + 1e-8))
        self.assertLess(phase_mse(scenario, BC, seq), scenario.bc.prior_mse())
        start = identity_init(scenario, BC)
        self.assertLessEqual(bc_mse(scenario, seq, 1), bc_mse(scenario, start, 1) * (1.0 + 1e-12))

    def test_compare_gap(self):
        cfg = self.small_config(methods='algorithm1, identity_baseline, p2p_orthogonal_baseline', snr='0, 20')
        rows = compare(cfg)
        self.assertEqual([(row.method, row.snr_db) for row in rows],
                         [('algorithm1', 0.0), ('identity_baseline', 0.0), ('algorithm1', 20.0),
                          ('identity_baseline', 20.0)])
        for row in rows:
            self.assertAlmostEqual(row.gap_db, 10.0 * np.log10(row.baseline_nmse / row.nmse), places=12)


class TestMonteCarlo(ConfigTestCase):

    def test_zero_power_gives_unit_nmse(self):
        cfg = self.small_config(methods='identity_baseline', trials=2000, power=0.0)
        [row] = run_experiment(cfg)
        self.assertAlmostEqual(row.analytic_nmse, 1.0, places=12)
        self.assertAlmostEqual(row.empirical_nmse, 1.0, delta=0.05)

    def test_empirical_matches_analytic(self):
        cfg = self.small_config(trials=20000)
        [row] = run_experiment(cfg)
        self.assertAlmostEqual(row.empirical_nmse / row.analytic_nmse, 1.0, delta=0.02)
        self.assertGreater(row.iterations, 0)

    def test_reproducible_and_independent_of_workers(self):
        cfg = self.small_config(methods='algorithm1, identity_baseline', snr='0, 10')
        first = run_experiment(cfg)
        again = run_experiment(cfg)
        threaded = run_experiment(cfg._replace(workers=3))
        strip = [row._replace(wall_time=0.0) for row in first]
        self.assertEqual(strip, [row._replace(wall_time=0.0) for row in again])
        self.assertEqual(strip, [row._replace(wall_time=0.0) for row in threaded])

    def test_seed_changes_empirical_only(self):
        cfg = self.small_config(methods='identity_baseline')
        [first], [second] = run_experiment(cfg), run_experiment(cfg._replace(seed=8))
        self.assertEqual(first.analytic_nmse, second.analytic_nmse)
        self.assertNotEqual(first.empirical_nmse, second.empirical_nmse)

    def test_cells_draw_distinct_streams(self):
        cfg = self.small_config()
        scenario = build_scenario(cfg, 10.0)
        seq = design_sequence(scenario, cfg, 'identity_baseline', make_rng(cfg.seed)).seq
        self.assertNotEqual(monte_carlo_nmse(scenario, MAC, seq, 100, 7, cell=0),
                            monte_carlo_nmse(scenario, MAC, seq, 100, 7, cell=1))

    def test_nmse_decreases_with_snr(self):
        rows = run_experiment(self.small_config(snr='0, 10, 20', trials=1))
        analytic = [row.analytic_nmse for row in rows]
        self.assertEqual(analytic, sorted(analytic, reverse=True))
        self.assertEqual([row.method for row in rows], ['algorithm1'] * 3)

    def test_bc_run(self):
        cfg = self.small_config(phase=BC, methods='algorithm2, identity_baseline', trials=2000)
        designed, identity = run_experiment(cfg)
        self.assertLessEqual(designed.analytic_nmse, identity.analytic_nmse)
        for row in (designed, identity):
            self.assertAlmostEqual(row.empirical_nmse / row.analytic_nmse, 1.0, delta=0.1)


class TestResultFiles(ConfigTestCase):

    rows = [ResultRow('algorithm1', 10.0, 0.125, 0.1249, 12, 0.5, 7),
            ResultRow('identity_baseline', 10.0, 0.25, 0.2501, 0, 0.01, 7)]

    def test_csv(self):
        path = os.path.join(self.tmp, 'results.csv')
        emit_results(self.rows, 'csv', path)
        with open(path) as f:
            self.assertEqual(f.readline().strip(), ','.join(RESULT_COLUMNS))
        self.assertEqual(parse_results(path, 'csv'), self.rows)

    def test_json(self):
        path = os.path.join(self.tmp, 'results.json')
        emit_results(self.rows, 'json', path)
        with open(path) as f:
            self.assertEqual(json.load(f)[0]['method'], 'algorithm1')
        self.assertEqual(parse_results(path, 'json'), self.rows)

    def test_empty_results_have_header_only(self):
        path = os.path.join(self.tmp, 'empty.csv')
        emit_results([], 'csv', path)
        with open(path) as f:
            self.assertEqual(f.read(), ','.join(RESULT_COLUMNS) + '\n')
        self.assertEqual(parse_results(path), [])

    def test_unwritable_path(self):
        with self.assertRaises(ResultsIOError) as context:
            emit_results(self.rows, 'csv', os.path.join(self.tmp, 'missing', 'results.csv'))
        self.assertIn('missing', context.exception.path)

    def test_wrong_header(self):
        path = self.write('other.csv', 'iteration,mse\n0,1.0\n')
        with self.assertRaises(ResultsIOError):
            parse_results(path)


class TestRun(ConfigTestCase):

    def setUp(self):
        super(TestRun, self).setUp()
        self.addCleanup(logging.getLogger().setLevel, logging.getLogger().level)

    def config_path(self, methods='algorithm1, p2p_orthogonal_baseline', phase=MAC):
        return self.write('run.ini', SMALL_CONFIG.format(phase=phase, methods=methods, snr='10', trials=100,
                                                         power=1.0))

    def invoke(self, *argv):
        return run(['--log-level', 'e'] + list(argv))

    def test_sweep(self):
        out = os.path.join(self.tmp, 'sweep.csv')
        self.assertEqual(self.invoke('--config', self.config_path(), '--out', out, 'sweep'), EXIT_OK)
        self.assertEqual([row.method for row in parse_results(out)], ['algorithm1', P2P_ORTHOGONAL_BASELINE])

    def test_converge(self):
        out = os.path.join(self.tmp, 'converge.csv')
        self.assertEqual(self.invoke('--config', self.config_path(), '--out', out, 'converge'), EXIT_OK)
        trace = parse_convergence(out)
        self.assertEqual([iteration for iteration, _ in trace], list(range(len(trace))))
        mses = [mse for _, mse in trace]
        for previous, current in zip(mses, mses[1:]):
            self.assertLessEqual(current, previous * (1.0 + 1e-9))

    def test_converge_needs_iterative_method(self):
        path = self.config_path(methods='identity_baseline')
        self.assertEqual(self.invoke('--config', path, '--out', os.path.join(self.tmp, 'c.csv'), 'converge'),
                         EXIT_CONFIG)

    def test_compare(self):
        out = os.path.join(self.tmp, 'compare.json')
        self.assertEqual(self.invoke('--config', self.config_path(), '--format', 'json', '--out', out, 'compare'),
                         EXIT_OK)
        with open(out) as f:
            records = json.load(f)
        self.assertEqual(sorted(records[0]), sorted(COMPARE_COLUMNS))

    def test_design(self):
        out = os.path.join(self.tmp, 'design.json')
        self.assertEqual(self.invoke('--config', self.config_path(), '--out', out, 'design'), EXIT_OK)
        with open(out) as f:
            records = json.load(f)
        self.assertEqual([record['method'] for record in records], ['algorithm1', P2P_ORTHOGONAL_BASELINE])
        self.assertEqual(np.shape(records[0]['sequence']['real']), (6, 6))

    def test_config_errors(self):
        self.assertEqual(self.invoke('--config', os.path.join(self.tmp, 'missing.ini'), 'sweep'), EXIT_CONFIG)
        path = self.config_path(methods='kkt_closed_form')
        self.assertEqual(self.invoke('--config', path, '--out', os.path.join(self.tmp, 'k.csv'), 'sweep'),
                         EXIT_CONFIG)

    def test_log_level(self):
        self.assertEqual(_log_level('d'), 'DEBUG')
        self.assertEqual(_log_level('Warn'), 'WARNING')
        self.assertEqual(parse_args(['--log-level', 'c', 'sweep']).log_level, 'CRITICAL')
        with self.assertRaises(SystemExit):
            parse_args(['--log-level', 'verbose', 'sweep'])


if __name__ == '__main__':
    unittest.main()
