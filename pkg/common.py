#!/usr/bin/env python3
"""
Shared utilities for lisinfer

Terminal colors and formatting used by the CLI summaries, seed derivation for the
independent random streams of a run, and a small wall-clock timer.
"""

import time
import zlib
from typing import Union

import numpy as np


class Colors:
    """ANSI color codes for terminal output"""
    RESET = '\033[0m'
    BOLD = '\033[1m'
    DIM = '\033[2m'

    RED = '\033[31m'
    GREEN = '\033[32m'
    YELLOW = '\033[33m'
    CYAN = '\033[36m'


def derive_seed(seed: int, *keys: Union[str, int]) -> int:
    """Seed for an independent stream identified by `keys` (e.g. 'mcmc', 3)

    Keys are mapped to integers (CRC32 for strings) and used as the SeedSequence spawn
    key, so streams for different purposes never overlap and all follow the run seed.
    """
    spawn_key = tuple(
        k if isinstance(k, (int, np.integer)) else zlib.crc32(str(k).encode('utf-8'))
        for k in keys
    )
    state = np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


def format_float(value: float) -> str:
    """Round-trippable text form used in CSV outputs"""
    return '%.17g' % value


def format_duration(seconds: float) -> str:
    """Format duration in human readable format

    Args:
        seconds: Duration in seconds (can be int or float)

    Returns:
        Formatted string like "2h 5m", "45m 3s", "12.4s", "310ms"
    """
    if seconds < 1:
        return f"{seconds * 1000:.0f}ms"
    if seconds < 60:
        return f"{seconds:.1f}s"

    seconds = int(seconds)
    hours = seconds // 3600
    minutes = (seconds % 3600) // 60
    if hours > 0:
        return f"{hours}h {minutes}m"
    return f"{minutes}m {seconds % 60}s"


class Stopwatch:
    """Cumulative wall-clock seconds since construction; frozen at 0.0 when disabled"""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self._start = time.perf_counter()

    def elapsed(self) -> float:
        if not self.enabled:
            return 0.0
        return time.perf_counter() - self._start


def print_section(title: str, colors: type = Colors):
    """Display a compact section title with color

    Args:
        title: Section title text
        colors: Colors class to use (allows overriding)
    """
    print(f"\n{colors.CYAN}▸ {title}{colors.RESET}")

