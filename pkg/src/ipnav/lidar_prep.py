"""Scan preprocessing: min-pooling, the six input-representation families,
short-range emphasis (PoS) diagnostics, and analytic parameter gradients.

The six families and their element-wise mappings of a pooled distance y with
measuring bounds [y_min, y_max]:

    raw        y                       (no mapping)
    lnorm      y / y_max               (linear squash into [0, 1])
    ipapexp    lambda ** y             with lambda in (0, 1)
    ipaplog    ln(y - eta)             with eta < y_min
    ipaprec    1 / (y - beta)          with beta < y_min
    ipaprecn   (y_min - beta) / (y - beta), the normalized reciprocal

The parametric families carry one unconstrained real per beam (or a single
shared real); the constrained parameter is produced by a smooth
reparameterization so gradient steps can never leave the valid domain, even
where float rounding saturates the squash:

    lambda = REPARAM_EPS + (1 - 2*REPARAM_EPS) * sigmoid(raw)
    eta, beta = y_min - REPARAM_EPS - softplus(raw + SOFTPLUS_SHIFT)

SOFTPLUS_SHIFT is chosen so raw = 0 places eta/beta exactly 0.2 m below
y_min, i.e. beta starts at 0 for the default 0.2 m circular robot.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np

from .gridworld import LidarFrame

# Keeps the squashed parameters representably inside their open domains.
REPARAM_EPS = 1e-6
# REPARAM_EPS + softplus(SOFTPLUS_SHIFT) == 0.2
SOFTPLUS_SHIFT = math.log(math.expm1(0.2 - REPARAM_EPS))


class IpFamily(str, Enum):
    RAW = "raw"
    LNORM = "lnorm"
    IPAP_EXP = "ipapexp"
    IPAP_LOG = "ipaplog"
    IPAP_REC = "ipaprec"
    IPAP_REC_N = "ipaprecn"


PARAMETRIC_FAMILIES = (
    IpFamily.IPAP_EXP,
    IpFamily.IPAP_LOG,
    IpFamily.IPAP_REC,
    IpFamily.IPAP_REC_N,
)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x):
    return np.logaddexp(0.0, np.asarray(x, dtype=float))


@dataclass(frozen=True)
class PooledScan:
    """Min-pooled scan with per-element measuring bounds."""

    values: np.ndarray
    y_min: np.ndarray
    y_max: np.ndarray
    k: int

    def __post_init__(self):
        if not (self.values.shape == self.y_min.shape == self.y_max.shape):
            raise ValueError("values and bounds must have equal length")
        if np.any(self.y_min >= self.y_max):
            raise ValueError("require y_min < y_max elementwise")


def min_pool(raw: LidarFrame, k: int) -> PooledScan:
    """Windowed minimum over consecutive groups of k beams (k=1 is identity).

    Bounds pool by the same windowed minimum as the values.
    """
    n = raw.distances.shape[0]
    if k < 1 or n % k != 0:
        raise ValueError("pool window mismatch")
    m = n // k
    values = raw.distances.reshape(m, k).min(axis=1)
    y_min = raw.d_min.reshape(m, k).min(axis=1)
    y_max = np.full(m, raw.d_max)
    return PooledScan(values, y_min, y_max, k)


@dataclass
class IpParams:
    """A preprocessing family plus its raw (unconstrained) per-beam parameters.

    ``raw`` has shape (1,) in shared mode (one parameter for every beam, the
    centered-lidar case) or (m,) in per-beam mode (asymmetric footprints).
    """

    family: IpFamily
    y_min: np.ndarray
    y_max: np.ndarray
    raw: np.ndarray | None

    @classmethod
    def create(
        cls,
        family: IpFamily | str,
        y_min: np.ndarray,
        y_max: np.ndarray,
        shared: bool = True,
        raw_init: float = 0.0,
    ) -> "IpParams":
        family = IpFamily(family)
        y_min = np.asarray(y_min, dtype=float)
        y_max = np.asarray(y_max, dtype=float)
        if family in PARAMETRIC_FAMILIES:
            raw = np.full(1 if shared else y_min.shape[0], raw_init, dtype=float)
        else:
            raw = None
        return cls(family, y_min, y_max, raw)

    @property
    def shared(self) -> bool:
        return self.raw is not None and self.raw.shape[0] == 1

    def constrained(self) -> np.ndarray | None:
        """Per-beam constrained parameter (lambda, eta or beta); None for
        the parameter-free families."""
        if self.raw is None:
            return None
        raw = np.broadcast_to(self.raw, self.y_min.shape)
        if self.family is IpFamily.IPAP_EXP:
            return REPARAM_EPS + (1.0 - 2.0 * REPARAM_EPS) * sigmoid(raw)
        return self.y_min - REPARAM_EPS - softplus(raw + SOFTPLUS_SHIFT)


def ip_forward(scan: PooledScan, params: IpParams) -> np.ndarray:
    """Apply the family's element-wise mapping to the pooled values."""
    y = scan.values
    fam = params.family
    if fam is IpFamily.RAW:
        return y.copy()
    if fam is IpFamily.LNORM:
        return y / scan.y_max
    c = params.constrained()
    if fam is IpFamily.IPAP_EXP:
        return np.exp(y * np.log(c))
    if fam is IpFamily.IPAP_LOG:
        return np.log(y - c)
    if fam is IpFamily.IPAP_REC:
        return 1.0 / (y - c)
    # normalized reciprocal: 1 at y == y_min, monotone down toward 0
    return (scan.y_min - c) / (y - c)


def ip_param_grad(scan: PooledScan, params: IpParams) -> np.ndarray:
    """d output_i / d raw parameter, composed with the reparameterization.

    In shared mode this is the per-element derivative with respect to the
    single shared raw value. Raises for the parameter-free families.
    """
    if params.raw is None:
        raise ValueError("no trainable parameter")
    y = scan.values
    raw = np.broadcast_to(params.raw, y.shape)
    fam = params.family
    if fam is IpFamily.IPAP_EXP:
        s = sigmoid(raw)
        lam = REPARAM_EPS + (1.0 - 2.0 * REPARAM_EPS) * s
        # d(lam^y)/d lam = y lam^(y-1); d lam/d raw = (1-2eps) s (1-s)
        return np.exp((y - 1.0) * np.log(lam)) * y * (1.0 - 2.0 * REPARAM_EPS) * s * (1.0 - s)
    s = sigmoid(raw + SOFTPLUS_SHIFT)  # = -d(eta or beta)/d raw
    c = params.constrained()
    if fam is IpFamily.IPAP_LOG:
        return s / (y - c)
    if fam is IpFamily.IPAP_REC:
        return -s / (y - c) ** 2
    return s * (y - scan.y_min) / (y - c) ** 2


def pos_ratio(map_fn: Callable[[float], float], y_min: float, y_t: float, y_max: float) -> float:
    """Fraction of the mapped measuring range occupied by distances below
    the short-range threshold y_t:

        | (f(y_t) - f(y_min)) / (f(y_max) - f(y_min)) |
    """
    if not y_min < y_t < y_max:
        raise ValueError("require y_min < y_t < y_max")
    lo, mid, hi = map_fn(y_min), map_fn(y_t), map_fn(y_max)
    denom = hi - lo
    if denom == 0 or not math.isfinite(denom):
        raise ValueError("degenerate mapping")
    return abs((mid - lo) / denom)


def family_map_fn(params: IpParams, beam: int) -> Callable[[float], float]:
    """Scalar mapping for one beam, suitable for pos_ratio / check_conditions."""
    y_min = np.atleast_1d(params.y_min)[beam : beam + 1]
    y_max = np.atleast_1d(params.y_max)[beam : beam + 1]
    raw = None if params.raw is None else (params.raw if params.shared else params.raw[beam : beam + 1])
    p = IpParams(params.family, y_min, y_max, raw)

    def f(y: float) -> float:
        s = PooledScan(np.array([float(y)]), y_min, y_max, 1)
        return float(ip_forward(s, p)[0])

    return f


def check_conditions(
    map_fn: Callable[[float], float],
    y_min: float,
    y_max: float,
    n_samples: int = 64,
) -> bool:
    """Numerically test the two shape conditions that guarantee a mapping
    enlarges the short-range fraction: a nonzero first derivative and a
    first*second derivative product that stays strictly negative over
    [y_min, y_max].

    Sampled central differences; the sign test uses a scale-aware threshold
    so float noise on an exactly-linear map does not read as negative.
    """
    span = y_max - y_min
    h = span * 1e-4
    xs = np.linspace(y_min + 2 * h, y_max - 2 * h, n_samples)
    for x in xs:
        f1 = (map_fn(x + h) - map_fn(x - h)) / (2 * h)
        f2 = (map_fn(x + h) - 2 * map_fn(x) + map_fn(x - h)) / (h * h)
        if f1 == 0 or not math.isfinite(f1) or not math.isfinite(f2):
            return False
        if f1 * f2 >= -1e-6 * f1 * f1 / span:
            return False
    return True


@dataclass
class PosReport:
    """Per-beam short-range fractions for the identity map vs the configured
    family, plus the numeric shape-condition verdict."""

    y_min: np.ndarray
    y_max: np.ndarray
    y_t: np.ndarray
    rho_linear: np.ndarray
    rho_mapped: np.ndarray
    conditions_ok: np.ndarray  # bool per beam

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["beam", "y_min", "y_max", "y_t", "rho_linear", "rho_mapped", "conditions_ok"])
            for i in range(self.rho_linear.shape[0]):
                w.writerow(
                    [
                        i,
                        f"{self.y_min[i]:.6g}",
                        f"{self.y_max[i]:.6g}",
                        f"{self.y_t[i]:.6g}",
                        f"{self.rho_linear[i]:.8g}",
                        f"{self.rho_mapped[i]:.8g}",
                        int(self.conditions_ok[i]),
                    ]
                )


DEFAULT_THRESHOLD_OFFSET = 0.8  # meters above y_min; "obstacle nearby" at desk scale


def build_pos_report(params: IpParams, y_t: np.ndarray | None = None) -> PosReport:
    m = params.y_min.shape[0]
    if y_t is None:
        y_t = params.y_min + DEFAULT_THRESHOLD_OFFSET
    y_t = np.broadcast_to(np.asarray(y_t, dtype=float), (m,))
    rho_lin = np.empty(m)
    rho_map = np.empty(m)
    ok = np.empty(m, dtype=bool)
    for i in range(m):
        f = family_map_fn(params, i)
        lo, t, hi = params.y_min[i], y_t[i], params.y_max[i]
        rho_lin[i] = pos_ratio(lambda y: y, lo, t, hi)
        rho_map[i] = pos_ratio(f, lo, t, hi)
        ok[i] = check_conditions(f, lo, hi)
    return PosReport(params.y_min.copy(), params.y_max.copy(), np.asarray(y_t).copy(), rho_lin, rho_map, ok)
