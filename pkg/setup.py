#!/usr/bin/env python3
"""Setup script to install the lisinfer CLI"""

from setuptools import setup

setup(
    name='lisinfer',
    version='1.0.0',
    description='Likelihood-informed subspace dimension reduction and MCMC for Bayesian inverse problems',
    py_modules=[
        'lisinfer', 'config', 'logger', 'common', 'errors', 'formats',
        'linalg', 'prior', 'model', 'models', 'lis', 'mcmc', 'estimators',
    ],
    install_requires=[
        'numpy>=1.22.0',
        'scipy>=1.8.0',
    ],
    entry_points={
        'console_scripts': [
            'lisinfer=lisinfer:main',
        ],
    },
    python_requires='>=3.8',
    license='MIT',
    author='',
)
