#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
    twr_training

    Channel estimation and training sequence design for correlated MIMO two-way relay systems
    under colored disturbance.

    This module holds the package metadata and the exceptions shared by the twr_* modules.

    :license: BSD, see LICENSE for more details.
"""


VERSION = (0, 9)
__version__ = '.'.join(map(str, VERSION[0:2]))
__description__ = 'LMMSE channel estimation and training design for MIMO two-way relay networks'
__author__ = 'twr-training contributors'
__author_email__ = 'twr-training@users.noreply.github.com'
__homepage__ = 'https://github.com/twr-training/twr-training'
__download_url__ = '%s/archive/develop.zip' % __homepage__
__license__ = 'BSD'


class TwrError(Exception):
    pass


class DimensionMismatch(TwrError, ValueError):

    def __init__(self, what, expected, actual):
        self.what = what
        self.expected = expected
        self.actual = actual

    def __str__(self):
        return '<DimensionMismatch - %s - expected %s, got %s>' % (self.what, self.expected, self.actual)


class NotPSD(TwrError):

    def __init__(self, min_eigenvalue, floor):
        self.min_eigenvalue = min_eigenvalue
        self.floor = floor

    def __str__(self):
        return '<NotPSD - smallest eigenvalue %g below floor %g>' % (self.min_eigenvalue, self.floor)


class NotJointlyDiagonalizable(TwrError):
    pass


class SingularGram(TwrError):
    pass


class ScenarioError(TwrError):
    pass


class WrongScenarioKind(TwrError):

    def __init__(self, method, reason):
        self.method = method
        self.reason = reason

    def __str__(self):
        return '<WrongScenarioKind - %s - %s>' % (self.method, self.reason)


class LengthTooShort(TwrError):

    def __init__(self, method, length, required):
        self.method = method
        self.length = length
        self.required = required

    def __str__(self):
        return '<LengthTooShort - %s - length %s, requires %s>' % (self.method, self.length, self.required)


class QcqpInfeasible(TwrError):
    pass


class NonMonotoneStep(TwrError):

    def __init__(self, iteration, previous, current):
        self.iteration = iteration
        self.previous = previous
        self.current = current

    def __str__(self):
        return '<NonMonotoneStep - iteration %s - MSE rose from %.12g to %.12g>' % (self.iteration, self.previous,
                                                                                    self.current)


class MaxIterExceeded(TwrError):

    def __init__(self, solver, iterations, best=None):
        self.solver = solver
        self.iterations = iterations
        self.best = best

    def __str__(self):
        return '<MaxIterExceeded - %s - %s iterations>' % (self.solver, self.iterations)


class BracketFailure(TwrError):

    def __init__(self, lo, hi, reason):
        self.lo = lo
        self.hi = hi
        self.reason = reason

    def __str__(self):
        return '<BracketFailure - [%g, %g] - %s>' % (self.lo, self.hi, self.reason)


class ConfigError(ScenarioError):

    def __init__(self, reason, section=None, option=None, line=None):
        self.reason = reason
        self.section = section
        self.option = option
        self.line = line

    def __str__(self):
        where = []
        if self.section is not None:
            where.append('[%s]' % self.section)
        if self.option is not None:
            where.append(self.option)
        if self.line is not None:
            where.append('line %s' % self.line)
        return '<ConfigError - %s - %s>' % (' '.join(where) or 'config', self.reason)


class ResultsIOError(TwrError):

    def __init__(self, path, reason):
        self.path = path
        self.reason = reason

    def __str__(self):
        return '<ResultsIOError - %s - %s>' % (self.path, self.reason)
