"""Closed-form references for hitting times, click rates and Born probabilities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadArgs, ZeroPower, ZeroThreshold
from .linalg import born_probability, density_from_covariance, Projector

FORMULAS = ("mean_tau", "click_rate", "expected_count", "born", "survival_1d")
SERIES_TOL = 1e-14
IMAGE_CUTOFF = 0.25


@dataclass(frozen=True)
class OracleResult:
    value: float
    formula_id: str
    inputs: dict = field(default_factory=dict)

    def to_json(self):
        return {"formula_id": self.formula_id, "value": self.value, "inputs": dict(self.inputs)}


def expected_hitting_time(threshold, power):
    """Mean first time the energy of a Wiener channel reaches ``threshold``: E_d / power."""
    if not power > 0:
        raise ZeroPower(f"power must be positive, got {power!r}", field="power")
    if not threshold >= 0:
        raise BadArgs(f"threshold must be >= 0, got {threshold!r}", field="threshold")
    return threshold / power


def click_rate(power, threshold):
    """Renewal click rate power / E_d."""
    if not threshold > 0:
        raise ZeroThreshold(f"threshold must be positive, got {threshold!r}", field="threshold")
    if not power >= 0:
        raise BadArgs(f"power must be >= 0, got {power!r}", field="power")
    return power / threshold


def expected_count(power, threshold, duration):
    if not duration >= 0:
        raise BadArgs(f"duration must be >= 0, got {duration!r}", field="T")
    return click_rate(power, threshold) * duration


def born_probabilities(B):
    """Diagonal of rho = B / Tr B, i.e. Tr(rho |e_j><e_j|) for every j."""
    rho = density_from_covariance(B)
    return np.array([born_probability(rho, Projector.basis(j, rho.dim)) for j in range(rho.dim)])


def survival_1d(t, threshold, power, terms=None):
    """P(tau > t) for a scalar channel: |W| leaving (-sqrt(E_d), sqrt(E_d)).

    Series ``(4/pi) sum_k (-1)^k/(2k+1) exp(-(2k+1)^2 pi^2 power t / (8 E_d))``,
    summed until the next term drops below 1e-14 (or ``terms`` terms if given).
    For ``power t / E_d < 0.25`` and no explicit ``terms`` the equivalent image
    series ``1 - 2 sum_k (-1)^k erfc((2k+1) z)``, ``z = sqrt(E_d / (2 power t))``,
    is used instead; it needs a handful of terms where the other needs thousands.
    """
    if not (t >= 0 and threshold > 0 and power > 0) or (terms is not None and terms < 1):
        raise BadArgs(f"survival_1d needs t>=0, E_d>0, power>0, terms>=1; got "
                      f"t={t!r}, E_d={threshold!r}, power={power!r}, terms={terms!r}")
    u = power * t / threshold
    if u == 0.0:
        return 1.0
    if terms is None and u < IMAGE_CUTOFF:
        z = 1.0 / math.sqrt(2.0 * u)
        total = 0.0
        k = 0
        while True:
            term = math.erfc((2 * k + 1) * z)
            total += term if k % 2 == 0 else -term
            k += 1
            if math.erfc((2 * k + 1) * z) < SERIES_TOL * 1e-3:
                break
        return min(1.0, max(0.0, 1.0 - 2.0 * total))
    x = math.pi ** 2 * u / 8.0
    total = 0.0
    k = 0
    while True:
        n = 2 * k + 1
        term = math.exp(-n * n * x) / n
        total += term if k % 2 == 0 else -term
        k += 1
        if terms is not None and k >= terms:
            break
        nxt = math.exp(-(2 * k + 1) ** 2 * x) / (2 * k + 1)
        if terms is None and nxt < SERIES_TOL:
            break
    return min(1.0, max(0.0, 4.0 / math.pi * total))


def survival_1d_curve(t, threshold, power):
    """Vectorised :func:`survival_1d` over an array of times."""
    t = np.asarray(t, dtype=np.float64)
    return np.vectorize(lambda s: survival_1d(float(s), threshold, power), otypes=[float])(t)


def evaluate(formula_id, **inputs):
    """Dispatch by formula id; returns an :class:`OracleResult`."""
    if formula_id == "mean_tau":
        v = expected_hitting_time(inputs["threshold"], inputs["power"])
    elif formula_id == "click_rate":
        v = click_rate(inputs["power"], inputs["threshold"])
    elif formula_id == "expected_count":
        v = expected_count(inputs["power"], inputs["threshold"], inputs["T"])
    elif formula_id == "survival_1d":
        v = survival_1d(inputs["t"], inputs["threshold"], inputs["power"], inputs.get("terms"))
    elif formula_id == "born":
        probs = born_probabilities(inputs["B"])
        v = float(probs[int(inputs["channel"])])
    else:
        raise BadArgs(f"unknown formula {formula_id!r}; expected one of {FORMULAS}", field="formula")
    return OracleResult(float(v), formula_id, inputs)
