"""Minimal Adam optimizer over a list of numpy parameter arrays."""
import numpy as np

from . import backend


class Adam:
    """Adam with bias correction; updates parameters in place.

    Defaults follow the usual beta1=0.9, beta2=0.999, eps=1e-8 convention,
    with eps added outside the square root.
    """

    def __init__(self, params, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        self.t += 1
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            backend.adam_step(p, g, m, v, self.t, self.lr, self.beta1, self.beta2, self.eps)
