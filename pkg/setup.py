# -*- coding: utf-8 -*-
"""
    twr-training

    LMMSE channel estimation and training sequence design for correlated MIMO two-way relay
    networks under colored disturbance.

    :license: BSD, see LICENSE for more details.
"""
from setuptools import setup
import twr_training

classifiers = [
    'Development Status :: 4 - Beta',
    'Environment :: Console',
    'Intended Audience :: Education',
    'Intended Audience :: Science/Research',
    'License :: OSI Approved :: BSD License',
    'Operating System :: OS Independent',
    'Programming Language :: Python :: 3',
    'Programming Language :: Python :: 3.8',
    'Topic :: Scientific/Engineering :: Mathematics',
    'Topic :: Communications',
]

setup(
    name='twr-training',
    version=twr_training.__version__,
    author=twr_training.__author__,
    author_email=twr_training.__author_email__,
    url=twr_training.__homepage__,
    description=twr_training.__description__,
    long_description=open('README.md').read().strip(),
    long_description_content_type='text/markdown',
    download_url=twr_training.__download_url__,
    classifiers=classifiers,
    license=twr_training.__license__,
    py_modules=['twr_training', 'twr_kernels', 'twr_channel', 'twr_lmmse', 'twr_convex', 'twr_mac_design',
                'twr_bc_design', 'twr_sim'],
    scripts=['twr_sim.py'],
    install_requires=['numpy>=1.17', 'scipy>=1.4'],
)
