"""Smooth data fidelities: squared Euclidean distance and Kullback-Leibler with background."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParamError, ShapeMismatch


@dataclass(frozen=True)
class Fidelity:
    """``kind`` is ``"l2"`` or ``"kl"``; ``background`` is the constant KL offset ``r``."""

    kind: str
    data: np.ndarray
    background: float = 0.0

    def __post_init__(self):
        data = np.asarray(self.data)
        if self.kind not in ("l2", "kl"):
            raise ParamError(f"unknown fidelity kind {self.kind!r}")
        if self.kind == "kl":
            if np.iscomplexobj(data):
                raise ParamError("KL fidelity needs real data")
            if np.any(data < 0):
                raise ParamError("KL fidelity needs nonnegative data")
            if not self.background > 0:
                raise ParamError("KL fidelity needs a positive background")
        object.__setattr__(self, "data", data)

    def restrict(self, index) -> Fidelity:
        if index is None:
            return self
        return Fidelity(self.kind, self.data.reshape(-1)[index], self.background)

    def _check(self, z):
        z = np.asarray(z)
        if z.shape != self.data.shape:
            raise ShapeMismatch(f"data shape {z.shape} != {self.data.shape}")
        if self.kind == "kl":
            zr = np.real(z) + self.background
            if np.any(zr <= 0):
                raise DomainError("KL fidelity evaluated where z + r <= 0")
            return zr
        return z

    def value(self, z) -> float:
        zr = self._check(z)
        if self.kind == "l2":
            r = zr - self.data
            return 0.5 * float(np.real(np.vdot(r, r)))
        f = self.data
        pos = f > 0
        logterm = np.zeros_like(zr)
        logterm[pos] = f[pos] * np.log(f[pos] / zr[pos])
        return float(np.sum(zr - f + logterm))

    def gradient(self, z) -> np.ndarray:
        zr = self._check(z)
        if self.kind == "l2":
            return zr - self.data
        return 1.0 - self.data / zr

    def safe_value(self, z) -> float:
        """Value, or ``inf`` outside the KL domain (used by line searches)."""
        try:
            return self.value(z)
        except DomainError:
            return np.inf


def value(F: Fidelity, z) -> float:
    return F.value(z)


def gradient(F: Fidelity, z) -> np.ndarray:
    return F.gradient(z)
