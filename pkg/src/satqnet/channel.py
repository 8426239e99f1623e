"""Loss and success-probability formulas for fiber links and satellite lightpaths."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable


@dataclass(frozen=True)
class GenerationParams:
    q_gen: float = 1.0
    n_attempts: int = 1

    def __post_init__(self):
        if not 0.0 < self.q_gen <= 1.0:
            raise ValueError(f"q_gen must be in (0, 1], got {self.q_gen}")
        if int(self.n_attempts) != self.n_attempts or self.n_attempts < 1:
            raise ValueError(f"n_attempts must be a positive integer, got {self.n_attempts}")


@dataclass(frozen=True)
class FiberParams:
    gamma: float  # dB/km
    length_km: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.length_km >= 0:
            raise ValueError(f"length_km must be nonnegative, got {self.length_km}")


def fiber_loss(params: FiberParams) -> float:
    """Photon loss probability over a fiber: ``1 - 10**(-L*gamma/10)``."""
    # -expm1 keeps precision for short fibers
    return -math.expm1(-params.length_km * params.gamma / 10.0 * math.log(10.0))


def link_success(gen: GenerationParams, q_chan: float) -> float:
    """Probability that at least one of ``n_attempts`` generation attempts
    succeeds in a slot, given the channel loss probability ``q_chan``."""
    if not 0.0 <= q_chan <= 1.0:
        raise ValueError(f"q_chan must be in [0, 1], got {q_chan}")
    p = gen.q_gen * (1.0 - q_chan)
    if p >= 1.0:
        return 1.0
    return -math.expm1(gen.n_attempts * math.log1p(-p))


def fiber_success(length_km: float, gamma: float, gen: GenerationParams) -> float:
    """Per-channel generation success of a fiber of the given length."""
    return link_success(gen, fiber_loss(FiberParams(gamma, length_km)))


def lightpath_success(uplink, satellites: Iterable, downlink) -> float:
    """End-to-end survival of a lightpath: both GSL survivals times every lens.

    ``uplink``/``downlink`` are Gsl objects (or plain floats); ``satellites``
    are Satellite objects (or plain lens survival floats).
    """
    sats = list(satellites)
    if not sats:
        raise ValueError("a lightpath crosses at least one satellite")
    up = getattr(uplink, "survival", uplink)
    down = getattr(downlink, "survival", downlink)
    q = float(up) * float(down)
    for s in sats:
        q *= float(getattr(s, "lens_success", s))
    return q
