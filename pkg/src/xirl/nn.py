"""Parameter containers, MLPs, initializers, and the Adam optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Var, add, matmul, relu, tanh

Array = np.ndarray

_ACTIVATIONS = {
    "relu": relu,
    "tanh": tanh,
    "identity": lambda v: v,
}


def kaiming_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> Array:
    """U(-b, b) with b = sqrt(6 / fan_in); pairs with relu hidden layers."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def orthogonal(rng: np.random.Generator, fan_in: int, fan_out: int, gain: float = 1.0) -> Array:
    """Orthogonal init via QR with the sign convention fixed for determinism."""
    n = max(fan_in, fan_out)
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return gain * q[:fan_in, :fan_out]


@dataclass
class Linear:
    weight: Var
    bias: Var

    @staticmethod
    def create(
        rng: np.random.Generator,
        fan_in: int,
        fan_out: int,
        init: str = "kaiming",
        gain: float = 1.0,
    ) -> "Linear":
        if init == "kaiming":
            w = kaiming_uniform(rng, fan_in, fan_out)
        elif init == "orthogonal":
            w = orthogonal(rng, fan_in, fan_out, gain)
        else:
            raise ValueError(f"unknown init {init!r}")
        return Linear(
            weight=Var(w, needs_grad=True),
            bias=Var(np.zeros(fan_out), needs_grad=True),
        )

    def __call__(self, x: Var) -> Var:
        return add(matmul(x, self.weight), self.bias)


@dataclass
class Mlp:
    """Fully connected stack; one activation name per layer."""

    layers: list[Linear]
    activations: list[str]

    @staticmethod
    def create(
        rng: np.random.Generator,
        sizes: list[int],
        activations: list[str],
        init: str = "kaiming",
        gain: float = 1.0,
    ) -> "Mlp":
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        for name in activations:
            if name not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {name!r}")
        layers = [
            Linear.create(rng, sizes[i], sizes[i + 1], init=init, gain=gain)
            for i in range(len(sizes) - 1)
        ]
        return Mlp(layers=layers, activations=list(activations))

    def __call__(self, x: Var) -> Var:
        for layer, act in zip(self.layers, self.activations):
            x = _ACTIVATIONS[act](layer(x))
        return x

    def parameters(self) -> list[Var]:
        out = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out


def set_requires_grad(params: list[Var], flag: bool) -> None:
    for p in params:
        p.needs_grad = flag


def zero_grads(params: list[Var]) -> None:
    for p in params:
        p.grad = None


@dataclass
class Adam:
    """Adam with optional coupled L2 weight decay (decay added to the gradient).

    A parameter with a zero gradient and zero weight decay is a fixed point:
    the update moves it by exactly 0.
    """

    params: list[Var]
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: list[Array] = field(default_factory=list)
    v: list[Array] = field(default_factory=list)

    def __post_init__(self):
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in self.params]
        if not self.v:
            self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.isfinite(g.sum()):
                raise FloatingPointError("non-finite gradient in Adam.step")
            if self.weight_decay != 0.0:
                g = g + self.weight_decay * p.data
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
