"""Shared data types for the online load model.

Two Gaussian channels are kept per calendar type: the load-transition
channel (next load given previous load, feature vector [1, s_prev]) and
the observation channel (load given encoded observations, feature vector
of length R). Each channel carries regression coefficients and a
conditional standard deviation, plus the recursive-update state (inverse
weighted Gram matrix P and effective weighted sample count gamma).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "S_DIM",
    "HyperParams",
    "GaussianChannelParams",
    "ChannelState",
    "ModelParams",
    "LearnerState",
    "ForecastPoint",
]

# Transition-channel feature dimension is fixed by the model: [1, s_prev].
S_DIM = 2


@dataclass(frozen=True)
class HyperParams:
    """Run-time model configuration.

    lambda_s / lambda_r are the forgetting factors of the transition and
    observation channels. w1 is the minimum deviation from the running
    calendar-type mean temperature that counts as a shift; a shift is only
    flagged when the temperature is also extreme (above w2 or below w3,
    degrees Fahrenheit). horizon is the number of steps predicted per
    instance. trace_reset_threshold bounds trace(P) before the state
    matrix is reinitialized.
    """

    lambda_s: float = 0.2
    lambda_r: float = 0.7
    w1: float = 20.0
    w2: float = 80.0
    w3: float = 20.0
    n_calendar_types: int = 48
    horizon: int = 24
    trace_reset_threshold: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.lambda_s < 1.0:
            raise ValueError(f"lambda_s must be in (0, 1), got {self.lambda_s}")
        if not 0.0 < self.lambda_r < 1.0:
            raise ValueError(f"lambda_r must be in (0, 1), got {self.lambda_r}")
        if self.n_calendar_types < 1:
            raise ValueError("n_calendar_types must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.trace_reset_threshold > 0.0:
            raise ValueError("trace_reset_threshold must be > 0")


@dataclass
class GaussianChannelParams:
    """Coefficients eta (length K) and standard deviation sigma >= 0 of one channel."""

    eta: np.ndarray
    sigma: float

    @classmethod
    def zeros(cls, k: int, sigma0: float = 1.0) -> "GaussianChannelParams":
        return cls(eta=np.zeros(k), sigma=float(sigma0))

    def copy(self) -> "GaussianChannelParams":
        return GaussianChannelParams(eta=self.eta.copy(), sigma=self.sigma)

    def to_dict(self) -> dict:
        return {"eta": [float(v) for v in self.eta], "sigma": float(self.sigma)}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianChannelParams":
        return cls(eta=np.asarray(d["eta"], dtype=float), sigma=float(d["sigma"]))


@dataclass
class ChannelState:
    """Recursive-update state of one channel.

    P is the K x K inverse weighted Gram matrix (kept symmetric by
    averaging with its transpose after every rank-1 update); gamma is the
    geometric sum of sample weights, 0 only before the first update.
    """

    P: np.ndarray
    gamma: float

    @classmethod
    def identity(cls, k: int) -> "ChannelState":
        return cls(P=np.eye(k), gamma=0.0)

    def copy(self) -> "ChannelState":
        return ChannelState(P=self.P.copy(), gamma=self.gamma)

    def to_dict(self) -> dict:
        return {"P": [[float(v) for v in row] for row in self.P], "gamma": float(self.gamma)}

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelState":
        return cls(P=np.asarray(d["P"], dtype=float), gamma=float(d["gamma"]))


def _check_calendar_index(c: int, n: int) -> int:
    if not 1 <= c <= n:
        raise IndexError(f"calendar type {c} outside 1..{n}")
    return c - 1


@dataclass
class ModelParams:
    """Per-calendar-type channel parameters, indexable by calendar type in O(1)."""

    s_channels: list[GaussianChannelParams]
    r_channels: list[GaussianChannelParams]

    @classmethod
    def initial(cls, n_calendar_types: int, r_dim: int, sigma0: float = 1.0) -> "ModelParams":
        return cls(
            s_channels=[GaussianChannelParams.zeros(S_DIM, sigma0) for _ in range(n_calendar_types)],
            r_channels=[GaussianChannelParams.zeros(r_dim, sigma0) for _ in range(n_calendar_types)],
        )

    @property
    def n_calendar_types(self) -> int:
        return len(self.s_channels)

    @property
    def r_dim(self) -> int:
        return len(self.r_channels[0].eta)

    def s_channel(self, c: int) -> GaussianChannelParams:
        return self.s_channels[_check_calendar_index(c, len(self.s_channels))]

    def r_channel(self, c: int) -> GaussianChannelParams:
        return self.r_channels[_check_calendar_index(c, len(self.r_channels))]

    def copy(self) -> "ModelParams":
        return ModelParams(
            s_channels=[p.copy() for p in self.s_channels],
            r_channels=[p.copy() for p in self.r_channels],
        )

    def to_dict(self) -> dict:
        return {
            "s_channels": [p.to_dict() for p in self.s_channels],
            "r_channels": [p.to_dict() for p in self.r_channels],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(
            s_channels=[GaussianChannelParams.from_dict(p) for p in d["s_channels"]],
            r_channels=[GaussianChannelParams.from_dict(p) for p in d["r_channels"]],
        )


@dataclass
class LearnerState:
    """Per-calendar-type recursive-update state for both channels."""

    s_states: list[ChannelState]
    r_states: list[ChannelState]

    @classmethod
    def initial(cls, n_calendar_types: int, r_dim: int) -> "LearnerState":
        return cls(
            s_states=[ChannelState.identity(S_DIM) for _ in range(n_calendar_types)],
            r_states=[ChannelState.identity(r_dim) for _ in range(n_calendar_types)],
        )

    def s_state(self, c: int) -> ChannelState:
        return self.s_states[_check_calendar_index(c, len(self.s_states))]

    def r_state(self, c: int) -> ChannelState:
        return self.r_states[_check_calendar_index(c, len(self.r_states))]

    def copy(self) -> "LearnerState":
        return LearnerState(
            s_states=[s.copy() for s in self.s_states],
            r_states=[s.copy() for s in self.r_states],
        )

    def to_dict(self) -> dict:
        return {
            "s_states": [s.to_dict() for s in self.s_states],
            "r_states": [s.to_dict() for s in self.r_states],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerState":
        return cls(
            s_states=[ChannelState.from_dict(s) for s in d["s_states"]],
            r_states=[ChannelState.from_dict(s) for s in d["r_states"]],
        )


@dataclass(frozen=True)
class ForecastPoint:
    """Gaussian predictive distribution for one step: mean, std >= 0, time index t."""

    mean: float
    std: float
    t: int
