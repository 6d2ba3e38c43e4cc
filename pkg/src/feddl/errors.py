"""Exception types shared across the package.

Contract violations inside numerical routines raise plain ``ValueError``
with a descriptive message.  The three classes below exist so that the
command-line layer can map failures to distinct exit codes:

* configuration problems (bad config file, contradictory options),
* data problems (unreadable / malformed input files, shape mismatches
  discovered while loading), and
* numerical aborts (divergence, non-finite values mid-optimisation).
"""

from __future__ import annotations


class ConfigError(Exception):
    """Raised when a configuration file or option set is invalid."""


class DataError(Exception):
    """Raised when an input file is missing, truncated, or malformed."""


class NumericalAbort(RuntimeError):
    """Raised when an iterative routine detects divergence or non-finite
    values and cannot continue."""
