"""Minimal dense feedforward network with exact analytic gradients and Adam.

Everything is float64, pure numpy, batch-first. Hidden layers use tanh, the
output layer is linear. This is the only differentiable substrate the rest of
the package needs: gradients are written out by hand and checked against
central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    """Raised when array dimensions do not match what an operation expects."""


class NonFiniteError(ValueError):
    """Raised when a gradient or parameter array contains NaN or Inf."""


@dataclass
class Mlp:
    """Parameters of a dense net: weights[k] is (out_k, in_k), biases[k] is (out_k,)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def param_arrays(self) -> list[np.ndarray]:
        """All parameter arrays, (W, b) interleaved per layer. Checkpoint order."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "Mlp":
        return Mlp([np.zeros_like(w) for w in self.weights],
                   [np.zeros_like(b) for b in self.biases])

    def validate(self) -> None:
        if len(self.weights) != len(self.biases):
            raise ShapeError(f"{len(self.weights)} weight arrays vs {len(self.biases)} biases")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ShapeError(f"layer {k}: weight {w.shape} incompatible with bias {b.shape}")
            if k > 0 and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ShapeError(
                    f"layer {k}: input dim {w.shape[1]} != layer {k - 1} output dim "
                    f"{self.weights[k - 1].shape[0]}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise NonFiniteError(f"layer {k} contains non-finite values")


def init_mlp(sizes: list[int], rng: np.random.Generator) -> Mlp:
    """Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.

    sizes = [in, hidden..., out]; hidden layers get tanh, output is linear.
    """
    if len(sizes) < 2:
        raise ShapeError(f"need at least [in, out] sizes, got {sizes}")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    mlp = Mlp(weights, biases)
    mlp.validate()
    return mlp


def _check_input(mlp: Mlp, x: np.ndarray, op: str) -> None:
    if x.ndim != 2:
        raise ShapeError(f"{op}: expected 2-d batch input, got shape {x.shape}")
    if x.shape[1] != mlp.in_dim:
        raise ShapeError(f"{op}: expected input width {mlp.in_dim}, got {x.shape[1]}")


def mlp_forward(mlp: Mlp, x: np.ndarray) -> np.ndarray:
    """Forward pass, (B, in_dim) -> (B, out_dim). Row i depends only on input row i."""
    _check_input(mlp, x, "mlp_forward")
    h = x
    last = mlp.n_layers - 1
    for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = h @ w.T + b
        h = z if k == last else np.tanh(z)
    return h


def mlp_backward(mlp: Mlp, x: np.ndarray,
                 output_grad: np.ndarray) -> tuple[Mlp, np.ndarray]:
    """Exact gradients of sum(output * output_grad) w.r.t. parameters and input.

    Returns (param_grads, input_grad) where param_grads is Mlp-shaped.
    """
    _check_input(mlp, x, "mlp_backward")
    if output_grad.shape != (x.shape[0], mlp.out_dim):
        raise ShapeError(
            f"mlp_backward: expected output_grad shape {(x.shape[0], mlp.out_dim)}, "
            f"got {output_grad.shape}")

    # forward, keeping post-activation values of every layer
    acts = [x]
    h = x
    last = mlp.n_layers - 1
    for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = h @ w.T + b
        h = z if k == last else np.tanh(z)
        acts.append(h)

    grads = mlp.zeros_like()
    dz = output_grad  # output layer is linear
    for k in range(last, -1, -1):
        grads.weights[k][...] = dz.T @ acts[k]
        grads.biases[k][...] = dz.sum(axis=0)
        dh = dz @ mlp.weights[k]
        if k > 0:
            dz = dh * (1.0 - acts[k] ** 2)  # tanh'(z) = 1 - tanh(z)^2
    return grads, dh


@dataclass
class AdamState:
    """First/second moment arrays shaped like the parameters, plus the step count."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Mlp, lr: float = 3e-4, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        arrays = params.param_arrays()
        return cls(m=[np.zeros_like(a) for a in arrays],
                   v=[np.zeros_like(a) for a in arrays],
                   step=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def state_arrays(self) -> list[np.ndarray]:
        """[step] + m arrays + v arrays, in parameter order. Checkpoint order."""
        return [np.array([float(self.step)])] + list(self.m) + list(self.v)


def adam_step_arrays(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
                     names: list[str] | None = None) -> tuple[list[np.ndarray], AdamState]:
    """Bias-corrected Adam over parallel lists of arrays. Pure.

    Non-finite gradient entries are an error, never silently clipped.
    """
    if state.lr <= 0:
        raise ValueError(f"adam_step: lr must be > 0, got {state.lr}")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError(f"adam_step: {len(params)} params vs {len(grads)} grads vs "
                         f"{len(state.m)} moment arrays")
    if names is None:
        names = [f"array[{i}]" for i in range(len(params))]
    for name, p, g in zip(names, params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"adam_step: {name} grad shape {g.shape} != param shape {p.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteError(f"adam_step: non-finite gradient in {name}")

    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_m.append(m)
        new_v.append(v)
        new_p.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))

    out_state = AdamState(m=new_m, v=new_v, step=t, lr=state.lr,
                          beta1=b1, beta2=b2, eps=state.eps)
    return new_p, out_state


def adam_step(params: Mlp, grads: Mlp, state: AdamState) -> tuple[Mlp, AdamState]:
    """One Adam update of a whole network. Pure: returns new params and state."""
    names = [f"{kind}[{k}]" for k in range(params.n_layers) for kind in ("weights", "biases")]
    new_p, out_state = adam_step_arrays(params.param_arrays(), grads.param_arrays(),
                                        state, names=names)
    return Mlp(weights=new_p[0::2], biases=new_p[1::2]), out_state


def finite_diff_gradient(f, params: Mlp, eps: float = 1e-5) -> Mlp:
    """Central-difference gradient of a scalar function of the parameters.

    Test oracle: slow, exact to O(eps^2), touches one entry at a time.
    """
    if eps <= 0:
        raise ValueError(f"finite_diff_gradient: eps must be > 0, got {eps}")
    grads = params.zeros_like()
    work = params.copy()
    for arr, out in zip(work.param_arrays(), grads.param_arrays()):
        flat = arr.reshape(-1)
        gflat = out.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = f(work)
            flat[i] = orig - eps
            fm = f(work)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * eps)
    return grads
