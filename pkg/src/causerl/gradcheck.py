"""Central-difference gradient oracle.

This is the independent verification route for every hand-written backward
rule in the package: the analytic gradients from the tape are compared
element by element against (f(p+h) - f(p-h)) / 2h.
"""

from typing import Callable, Sequence

import numpy as np

from causerl.errors import NonDeterministicError
from causerl.tensor import Tape, Tensor, backward


def finite_difference_check(f: Callable[[Sequence[Tensor]], Tensor],
                            params: Sequence[Tensor],
                            h: float = 1e-5) -> float:
    """Return the max over all parameter elements of the relative error
    between the analytic gradient and a central finite difference.

    ``f`` must be deterministic: it is evaluated twice at the same point and
    NonDeterministicError is raised if the values differ bitwise.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"h must lie in [1e-7, 1e-3], got {h}")

    v1 = float(f(params).data)
    v2 = float(f(params).data)
    if v1 != v2:
        raise NonDeterministicError(f"f returned {v1} then {v2}")

    for p in params:
        p.zero_grad()
    with Tape():
        loss = f(params)
        backward(loss)
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        aflat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(params).data)
            flat[i] = orig - h
            fm = float(f(params).data)
            flat[i] = orig
            cd = (fp - fm) / (2.0 * h)
            err = abs(aflat[i] - cd) / max(abs(aflat[i]), abs(cd), 1e-8)
            worst = max(worst, err)
    return worst
