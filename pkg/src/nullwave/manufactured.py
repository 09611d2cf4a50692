"""Manufactured solutions ``u* = A cos(w (t - 2)) B(x)`` with a polynomial bump ``B``.

``B = (1 - |x|^2/R^2)^k`` inside the disk of radius ``R`` and zero outside, so
``u*`` is ``C^{k-1}`` and compactly supported. The source that makes ``u*``
an exact solution is ``box u* - g^{kij} d_k u* d_ij u*``.
"""

from dataclasses import dataclass, field

import numpy as np

from .algebra import CoefficientTensor, evaluate_nonlinearity
from .solver import T0, Profile


@dataclass(frozen=True)
class Manufactured:
    tensor: CoefficientTensor = field(default_factory=CoefficientTensor.zero)
    amplitude: float = 0.1
    omega: float = 3.0
    R: float = 1.0
    k: int = 8

    def _bump(self, X1, X2):
        s = (X1 * X1 + X2 * X2) / self.R ** 2
        inside = s < 1.0
        w = np.where(inside, 1.0 - s, 0.0)
        k, R2 = self.k, self.R ** 2
        B = w ** k
        B1 = [-2.0 * k / R2 * X * w ** (k - 1) for X in (X1, X2)]
        X = (X1, X2)
        B2 = [[-2.0 * k / R2 * (i == j) * w ** (k - 1)
               + 4.0 * k * (k - 1) / R2 ** 2 * X[i] * X[j] * w ** (k - 2)
               for j in range(2)] for i in range(2)]
        return B, B1, B2

    def profile(self):
        """Spatial shape ``B``; pair it with ``epsilon = amplitude`` and ``f2 = zero``."""
        return Profile("manufactured", lambda X1, X2: self._bump(X1, X2)[0], self.R,
                       {"R": self.R, "k": self.k})

    def _time(self, t):
        w = self.omega
        p = w * (t - T0)
        return np.cos(p), -w * np.sin(p), -w * w * np.cos(p)

    def exact(self, t, X1, X2):
        return self.amplitude * self._time(t)[0] * self._bump(X1, X2)[0]

    def derivatives(self, t, X1, X2):
        """``(u, du, d2u)`` with ``du`` of shape ``(3, ...)`` and ``d2u`` of shape ``(3, 3, ...)``."""
        C, C1, C2 = self._time(t)
        B, B1, B2 = self._bump(X1, X2)
        A = self.amplitude
        du = np.stack([A * C1 * B, A * C * B1[0], A * C * B1[1]])
        d2u = np.empty((3, 3) + np.shape(B))
        d2u[0, 0] = A * C2 * B
        for i in range(2):
            d2u[0, i + 1] = d2u[i + 1, 0] = A * C1 * B1[i]
            for j in range(2):
                d2u[i + 1, j + 1] = A * C * B2[i][j]
        return A * C * B, du, d2u

    def source(self, t, X1, X2):
        _, du, d2u = self.derivatives(t, X1, X2)
        box = d2u[0, 0] - d2u[1, 1] - d2u[2, 2]
        if self.tensor.is_zero():
            return box
        return box - evaluate_nonlinearity(self.tensor, du, d2u)

    def config(self, **overrides):
        """Solver config reproducing ``u*``; pass ``h``, ``t_final`` and friends as overrides."""
        from .solver import SolverConfig, zero

        settings = dict(tensor=self.tensor, epsilon=self.amplitude, f1=self.profile(), f2=zero(),
                        source=self.source)
        settings.update(overrides)
        return SolverConfig(**settings)
