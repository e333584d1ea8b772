"""Adamax optimizer (infinity-norm Adam variant)."""

from __future__ import annotations

import numpy as np


class OptimizerError(Exception):
    pass


class AdamaxState:
    """Per-parameter moments for one tensor."""

    def __init__(self, shape, lr=0.002, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(shape)
        self.u = np.zeros(shape)
        self.t = 0
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps


def adamax_step(param, state):
    """In-place Adamax update of param from param.grad."""
    if param.grad is None:
        raise OptimizerError("adamax_step: parameter has no gradient")
    g = param.grad
    if g.shape != param.data.shape:
        raise OptimizerError(
            f"adamax_step: grad shape {g.shape} != param shape {param.data.shape}"
        )
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.u = np.maximum(state.beta2 * state.u, np.abs(g))
    step = state.lr / (1.0 - state.beta1 ** state.t)
    param.data = param.data - step * state.m / (state.u + state.eps)
    return param, state


class Adamax:
    """Convenience wrapper driving one AdamaxState per parameter tensor."""

    def __init__(self, params, lr=0.002, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.states = [
            AdamaxState(p.data.shape, lr=lr, beta1=beta1, beta2=beta2, eps=eps)
            for p in self.params
        ]

    def step(self):
        for p, s in zip(self.params, self.states):
            adamax_step(p, s)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
