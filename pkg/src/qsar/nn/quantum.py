"""Bridge between the autodiff tape and circuit simulation."""
from __future__ import annotations

import numpy as np

from .. import qsim
from .tensor import Tensor, _make, as_tensor


def quantum_layer(program: qsim.CircuitProgram, inputs, params) -> Tensor:
    """<Z> expectations as a differentiable op over both inputs and params.

    ``inputs`` is (n_inputs,) or a batch (B, n_inputs) sharing ``params``.
    The adjoint jacobian is computed only when some argument needs a gradient.
    """
    x, w = as_tensor(inputs), as_tensor(params)
    if not (x.requires_grad or w.requires_grad):
        return Tensor(qsim.run(program, x.value, w.value), op="quantum")
    ev, jac = qsim.adjoint_gradient(program, x.value, w.value)
    jx, jw = qsim.split_jacobian(program, jac)

    def back(g):
        # g: (..., n_obs); jx: (..., n_obs, n_inputs); jw: (..., n_obs, n_params)
        gx = np.einsum("...k,...ki->...i", g, jx)
        gw = np.einsum("bk,bkj->j", g.reshape(-1, g.shape[-1]), jw.reshape((-1,) + jw.shape[-2:]))
        return gx, gw

    return _make(ev, (x, w), back, "quantum")
