"""Adam with Nesterov momentum, with decoupled weight decay.

Update for a parameter ``theta`` with gradient ``g`` at step ``t`` (1-based)::

    m = beta1 * m + (1 - beta1) * g
    v = beta2 * v + (1 - beta2) * g**2
    m_hat = m / (1 - beta1**(t + 1))
    g_hat = g / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    theta *= 1 - lr * decay
    theta -= lr * (beta1 * m_hat + (1 - beta1) * g_hat) / (sqrt(v_hat) + eps)

``decay`` is ``weight_decay`` for ordinary tensors and ``k_decay`` for the
scalar gates, so the two can be switched independently.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Nadam:
    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    k_decay: float = 0.0
    t: int = 0
    m: dict = field(default_factory=dict, repr=False)
    v: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ValueError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.weight_decay < 0 or self.k_decay < 0:
            raise ValueError("decay rates must be non-negative")

    def hyperparameters(self):
        return {
            "name": "nadam",
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "weight_decay": self.weight_decay,
            "k_decay": self.k_decay,
        }

    def step(self, params, grads, gates=()):
        """Update ``params`` in place.

        ``params`` and ``grads`` map names to arrays; names listed in ``gates``
        are decayed with ``k_decay`` instead of ``weight_decay``. Nothing is
        modified if any gradient is non-finite or mis-shaped.
        """
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                raise KeyError(f"missing gradient for parameter {name!r}")
            if np.shape(g) != p.shape:
                raise ValueError(f"gradient for {name!r} has shape {np.shape(g)}, parameter has {p.shape}")
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {name!r}")

        self.t += 1
        t = self.t
        b1, b2 = self.beta1, self.beta2
        m_corr = 1.0 - b1 ** (t + 1)
        g_corr = 1.0 - b1**t
        v_corr = 1.0 - b2**t
        gates = set(gates)
        for name, p in params.items():
            g = np.asarray(grads[name], dtype=p.dtype)
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            decay = self.k_decay if name in gates else self.weight_decay
            if decay:
                p *= 1.0 - self.lr * decay
            direction = b1 * (m / m_corr) + (1.0 - b1) * (g / g_corr)
            p -= self.lr * direction / (np.sqrt(v / v_corr) + self.epsilon)
