"""Brinkman interpolation functions alpha_eps and the epsilon-coupled schedule."""

from abc import ABC, abstractmethod

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class AlphaInterpolation(BaseModel, ABC):
    """Nonincreasing map [-1, 1] -> [0, alpha_bar] with alpha(1) = 0, alpha(-1) = alpha_bar."""

    model_config = ConfigDict(frozen=True)

    eps: float = Field(default=1.0, gt=0)
    alpha_bar: float = Field(default=0.0, ge=0)

    @abstractmethod
    def value(self, phi: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def derivative(self, phi: np.ndarray) -> np.ndarray: ...


class ZeroAlpha(AlphaInterpolation):
    """No penalization (pure Navier-Stokes)."""

    def value(self, phi: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(phi, dtype=float))

    def derivative(self, phi: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(phi, dtype=float))


class LinearAlpha(AlphaInterpolation):
    """alpha(phi) = alpha_bar * (1 - phi) / 2."""

    def value(self, phi: np.ndarray) -> np.ndarray:
        return 0.5 * self.alpha_bar * (1.0 - np.asarray(phi, dtype=float))

    def derivative(self, phi: np.ndarray) -> np.ndarray:
        return np.full_like(np.asarray(phi, dtype=float), -0.5 * self.alpha_bar)


class CappedAlpha(AlphaInterpolation):
    """Smooth cap of a0 (1 - phi) / (1 + phi + delta) at alpha_bar.

    The cap is the p-norm soft minimum ``a / (1 + (a / alpha_bar)**p)**(1/p)``,
    rescaled so that phi = -1 maps exactly onto alpha_bar. The result is
    C-infinity on [-1, 1], vanishes at phi = 1 and is strictly decreasing.
    """

    a0: float = Field(..., gt=0)
    delta: float = Field(default=0.01, gt=0)
    smoothing: float = Field(default=4.0, ge=1.0)

    @model_validator(mode="after")
    def validate_cap(self) -> "CappedAlpha":
        if self.alpha_bar <= 0:
            raise ValueError("alpha_bar must be positive for a capped interpolation")
        if self.alpha_bar > self.raw_value(np.array(-1.0)):
            raise ValueError(
                f"alpha_bar={self.alpha_bar:.6g} exceeds the uncapped maximum "
                f"{float(self.raw_value(np.array(-1.0))):.6g}; epsilon is too small "
                "for this a0/delta pair"
            )
        return self

    def raw_value(self, phi: np.ndarray) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        return self.a0 * (1.0 - phi) / (1.0 + phi + self.delta)

    def _raw_derivative(self, phi: np.ndarray) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        return -self.a0 * (2.0 + self.delta) / (1.0 + phi + self.delta) ** 2

    def _soft_min(self, raw: np.ndarray) -> np.ndarray:
        ratio = (raw / self.alpha_bar) ** self.smoothing
        return raw / (1.0 + ratio) ** (1.0 / self.smoothing)

    def _soft_min_slope(self, raw: np.ndarray) -> np.ndarray:
        ratio = (raw / self.alpha_bar) ** self.smoothing
        return (1.0 + ratio) ** (-1.0 / self.smoothing - 1.0)

    @property
    def _normalization(self) -> float:
        return self.alpha_bar / float(self._soft_min(self.raw_value(np.array(-1.0))))

    def value(self, phi: np.ndarray) -> np.ndarray:
        clipped = np.clip(np.asarray(phi, dtype=float), -1.0, 1.0)
        return self._normalization * self._soft_min(self.raw_value(clipped))

    def derivative(self, phi: np.ndarray) -> np.ndarray:
        clipped = np.clip(np.asarray(phi, dtype=float), -1.0, 1.0)
        raw = self.raw_value(clipped)
        return (
            self._normalization
            * self._soft_min_slope(raw)
            * self._raw_derivative(clipped)
        )


class AlphaSchedule(BaseModel):
    """Couples the penalization maximum to the interface width: alpha_bar = a0 * eps**(-s)."""

    model_config = ConfigDict(frozen=True)

    a0: float = Field(default=10.0, gt=0)
    exponent: float = Field(default=0.5)
    smoothing: float = Field(default=4.0, ge=1.0)
    delta: float = Field(default=0.01, gt=0)

    @field_validator("exponent")
    @classmethod
    def validate_exponent(cls, value: float) -> float:
        if not 0.0 < value < 2.0 / 3.0:
            raise ValueError("exponent violates growth condition o(eps^{-2/3})")
        return value

    def alpha_bar(self, eps: float) -> float:
        if eps <= 0:
            raise ValueError("eps must be greater than 0")
        return self.a0 * eps ** (-self.exponent)

    def at(self, eps: float) -> CappedAlpha:
        return CappedAlpha(
            eps=eps,
            alpha_bar=self.alpha_bar(eps),
            a0=self.a0,
            delta=self.delta,
            smoothing=self.smoothing,
        )
