"""Select the compiled kernels when available, else the pure-Python ones.

Set ``VOLTERROM_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels as pure

compiled = None
if not os.environ.get("VOLTERROM_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled
    except ImportError:
        compiled = None

kernels = compiled if compiled is not None else pure
NAME = "cython" if compiled is not None else "python"

lag_states_rk4 = kernels.lag_states_rk4
mlp_forward = kernels.mlp_forward
mlp_loss_grad = kernels.mlp_loss_grad
mlp_train_epoch = kernels.mlp_train_epoch
param_count = pure.param_count
TANH, RELU, PRELU = pure.TANH, pure.RELU, pure.PRELU
