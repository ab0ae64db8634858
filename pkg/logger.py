#!/usr/bin/env python3
"""
Structured logging for lisinfer

All modules log through `get_logger(__name__)`, which hands out children of the
`lisinfer` logger. The console handler writes to stderr at a level picked by -v / -vv;
an optional log file always receives DEBUG. Long loops (LIS adaptation, MCMC chains)
report through ProgressReporter so -v gives a heartbeat without flooding the terminal.
"""

import logging
import sys
import time
from pathlib import Path
from typing import Optional

from common import Colors

LOGGER_PREFIX = 'lisinfer'
FILE_FORMAT = '%(asctime)s %(levelname)-7s %(name)s: %(message)s'


class ColoredFormatter(logging.Formatter):
    """Plain INFO, dimmed DEBUG tagged with the module, colored warnings and errors"""

    COLORS = {
        'DEBUG': Colors.DIM,
        'WARNING': Colors.YELLOW,
        'ERROR': Colors.RED,
        'CRITICAL': Colors.BOLD + Colors.RED,
    }

    def __init__(self, use_colors: bool = True, stream=None):
        super().__init__('%(message)s')
        stream = stream or sys.stderr
        self.use_colors = use_colors and stream.isatty()

    def format(self, record: logging.LogRecord) -> str:
        text = super().format(record)
        if not self.use_colors or record.levelno == logging.INFO:
            return text
        color = self.COLORS.get(record.levelname, '')
        if record.levelno == logging.DEBUG:
            text = f"[{record.name}] {text}"
        return f"{color}{text}{Colors.RESET}"


def _level_for(verbosity: int) -> int:
    return {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)


class LisLogger:
    """Process-wide owner of the lisinfer handlers

    Loggers handed out before setup() are reconfigured when it runs, so module-level
    `log = get_logger(__name__)` works regardless of import order.
    """

    _instance: Optional['LisLogger'] = None

    def __new__(cls):
        if cls._instance is None:
            instance = super().__new__(cls)
            instance._verbosity = 0
            instance._console = None
            instance._logfile = None
            instance._known = {}
            cls._instance = instance
        return cls._instance

    @property
    def verbosity(self) -> int:
        return self._verbosity

    def setup(self, verbosity: int = 0, log_file: Optional[str] = None, use_colors: bool = True):
        """Replace the console and file handlers

        Args:
            verbosity: 0 shows warnings, 1 adds info, 2 or more adds debug
            log_file: Also write every record (DEBUG and up) to this file
            use_colors: Color console output when stderr is a terminal
        """
        self._verbosity = max(0, verbosity)

        self._console = logging.StreamHandler(sys.stderr)
        self._console.setLevel(_level_for(self._verbosity))
        self._console.setFormatter(ColoredFormatter(use_colors=use_colors))

        if self._logfile is not None:
            self._logfile.close()
            self._logfile = None
        if log_file:
            Path(log_file).parent.mkdir(parents=True, exist_ok=True)
            self._logfile = logging.FileHandler(log_file)
            self._logfile.setLevel(logging.DEBUG)
            self._logfile.setFormatter(logging.Formatter(FILE_FORMAT))

        for logger in self._known.values():
            self._attach(logger)

    def _attach(self, logger: logging.Logger):
        logger.handlers.clear()
        handlers = [h for h in (self._console, self._logfile) if h is not None]
        for handler in handlers:
            logger.addHandler(handler)
        # Records must reach the file handler even when the console filters them
        logger.setLevel(min([h.level for h in handlers] or [_level_for(self._verbosity)]))
        logger.propagate = False

    def get_logger(self, name: str) -> logging.Logger:
        if name not in self._known:
            logger = logging.getLogger(f"{LOGGER_PREFIX}.{name}")
            self._attach(logger)
            self._known[name] = logger
        return self._known[name]


class ProgressReporter:
    """Rate-limited progress lines for long iterative loops

    INFO every `every` iterations and on the last one, DEBUG for the rest.
    """

    def __init__(self, logger: logging.Logger, label: str, total: int, every: int = 50):
        self._log = logger
        self._label = label
        self._total = total
        self._every = max(1, every)
        self._start = time.perf_counter()

    def update(self, iteration: int, message: str = ""):
        suffix = f" {message}" if message else ""
        if iteration % self._every == 0 or iteration == self._total:
            elapsed = time.perf_counter() - self._start
            self._log.info(f"{self._label} {iteration}/{self._total} ({elapsed:.1f}s){suffix}")
        else:
            self._log.debug(f"{self._label} {iteration}/{self._total}{suffix}")


_lis_logger = LisLogger()


def setup_logging(verbosity: int = 0, log_file: Optional[str] = None, use_colors: bool = True):
    """Configure lisinfer logging; call once at the top of main()"""
    _lis_logger.setup(verbosity, log_file, use_colors)


def get_logger(name: str) -> logging.Logger:
    return _lis_logger.get_logger(name)


def is_debug() -> bool:
    return _lis_logger.verbosity >= 2
