"""Shared pytest configuration: acceptance-scale tests run only with --runslow"""

import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run acceptance-scale tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: acceptance-scale reproduction (needs --runslow)')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)
