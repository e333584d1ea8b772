import numpy as np
import pytest

from linkforge.engine import Tape, Tensor
from linkforge import engine


def finite_difference_check(build_loss, arrays, step=1e-5, rel_tol=1e-4,
                            exclude_kinks=None):
    """Central finite differences against reverse-mode gradients.

    build_loss(tensors) must construct the loss from fresh Tensors each call;
    arrays are the parameter values. exclude_kinks(flat_index, value) marks
    coordinates to skip (e.g. near relu boundaries).
    """
    def evaluate(values, want_grads):
        tape = Tape()
        tensors = [tape.tensor(v, requires_grad=True) for v in values]
        loss = build_loss(tensors)
        if want_grads:
            engine.backward(loss, tape)
            return loss.item(), [t.grad for t in tensors]
        return loss.item(), None

    _, grads = evaluate(arrays, want_grads=True)
    for ai, arr in enumerate(arrays):
        flat = arr.ravel()
        for idx in range(flat.size):
            if exclude_kinks is not None and exclude_kinks(ai, flat[idx]):
                continue
            bumped = [a.copy() for a in arrays]
            bumped[ai].ravel()[idx] += step
            up, _ = evaluate(bumped, want_grads=False)
            bumped[ai].ravel()[idx] -= 2 * step
            down, _ = evaluate(bumped, want_grads=False)
            numeric = (up - down) / (2 * step)
            analytic = grads[ai].ravel()[idx]
            denom = max(abs(numeric), abs(analytic), 1e-8)
            assert abs(numeric - analytic) / denom < rel_tol, (
                f"param {ai} index {idx}: numeric {numeric} vs analytic {analytic}"
            )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
