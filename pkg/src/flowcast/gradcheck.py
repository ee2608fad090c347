"""Finite-difference gradient verification for every differentiable op.

The oracle is independent of the reverse-mode path: it re-runs the forward
computation with individually perturbed inputs and forms central differences,

    df/dx_i  ~  (f(x + h e_i) - f(x - h e_i)) / 2h,   h = 1e-5,

in 64-bit precision. Each registered case builds fresh leaf tensors, applies
the op, and collapses the output to a scalar through a fixed random
projection so every output element influences the loss.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T

FD_STEP = 1e-5
TOLERANCE = 1e-4
POINTS_PER_LEAF = 10


@dataclass
class OpCase:
    name: str
    build: Callable[[np.random.Generator], tuple[dict[str, T.Tensor], Callable[[], T.Tensor]]]


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    points: int

    @property
    def passed(self) -> bool:
        return self.max_rel_err < TOLERANCE


def relative_error(a: float, b: float, floor: float = 1e-6) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_case(case: OpCase, seed: int, h: float = FD_STEP,
               points_per_leaf: int = POINTS_PER_LEAF) -> CheckResult:
    """Compare reverse-mode gradients of one case against central differences."""
    rng = np.random.default_rng(seed)
    leaves, forward = case.build(rng)

    loss = forward()
    if loss.data.size != 1:
        raise ValueError(f"case {case.name} must produce a scalar loss")
    for leaf in leaves.values():
        leaf.zero_grad()
    loss.backward()
    grads = {k: (leaf.grad.copy() if leaf.grad is not None else np.zeros_like(leaf.data))
             for k, leaf in leaves.items()}

    coord_rng = np.random.default_rng(seed + 1)
    max_err = 0.0
    points = 0
    for key, leaf in leaves.items():
        flat = leaf.data.reshape(-1)
        n = flat.size
        if n <= points_per_leaf:
            coords = np.arange(n)
        else:
            coords = coord_rng.choice(n, size=points_per_leaf, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            f_plus = float(forward().data)
            flat[c] = orig - h
            f_minus = float(forward().data)
            flat[c] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            ad = float(grads[key].reshape(-1)[c])
            max_err = max(max_err, relative_error(fd, ad))
            points += 1
    return CheckResult(case.name, max_err, points)


# -- case builders -------------------------------------------------------------
#
# Inputs are drawn away from non-smooth points (relu/huber kinks, max ties)
# so the finite-difference stencil never straddles a derivative jump.


def _leaf(rng: np.random.Generator, shape, low=-2.0, high=2.0) -> T.Tensor:
    data = rng.uniform(low, high, size=shape)
    return T.Tensor(data, requires_grad=True, dtype=np.float64)


def _away_from_zero(rng: np.random.Generator, shape, margin=0.2) -> T.Tensor:
    mag = rng.uniform(margin, 2.0, size=shape)
    sign = rng.choice([-1.0, 1.0], size=shape)
    return T.Tensor(mag * sign, requires_grad=True, dtype=np.float64)


def _projection(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=shape)


def _project(out: T.Tensor, w: np.ndarray) -> T.Tensor:
    return T.sum_over_axis(T.mul(out, T.Tensor(w, dtype=np.float64)))


def _binary_case(name: str, fn) -> OpCase:
    def build(rng):
        a = _leaf(rng, (3, 4, 2, 5))
        b = _leaf(rng, (3, 4, 2, 5))
        w = _projection(rng, (3, 4, 2, 5))
        return {"a": a, "b": b}, lambda: _project(fn(a, b), w)

    return OpCase(name, build)


def _unary_case(name: str, fn, away_from_zero=False) -> OpCase:
    def build(rng):
        maker = _away_from_zero if away_from_zero else _leaf
        x = maker(rng, (3, 4, 2, 5))
        w = _projection(rng, (3, 4, 2, 5))
        return {"x": x}, lambda: _project(fn(x), w)

    return OpCase(name, build)


def _case_conv_nodewise(stride: int) -> OpCase:
    def build(rng):
        x = _leaf(rng, (2, 3, 4, 12))
        k = _leaf(rng, (5, 3, 1, 3))
        b = _leaf(rng, (5,))
        t_out = T.conv_time_length(12, stride)
        w = _projection(rng, (2, 5, 4, t_out))
        return ({"x": x, "kernel": k, "bias": b},
                lambda: _project(T.conv_nodewise(x, k, b, stride), w))

    return OpCase(f"conv_nodewise_s{stride}", build)


def _case_channel_linear(exact: bool) -> OpCase:
    def build(rng):
        x = _leaf(rng, (2, 6, 4, 3))
        w = _leaf(rng, (5, 6))
        b = _leaf(rng, (5,))
        proj = _projection(rng, (2, 5, 4, 3))
        return ({"x": x, "weight": w, "bias": b},
                lambda: _project(T.channel_linear(x, w, b, exact=exact), proj))

    return OpCase("channel_linear_exact" if exact else "channel_linear", build)


def _case_layer_norm() -> OpCase:
    def build(rng):
        x = _leaf(rng, (2, 6, 3, 4))
        gamma = _leaf(rng, (6,), low=0.5, high=1.5)
        beta = _leaf(rng, (6,))
        w = _projection(rng, (2, 6, 3, 4))
        return ({"x": x, "gamma": gamma, "beta": beta},
                lambda: _project(T.layer_norm(x, gamma, beta), w))

    return OpCase("layer_norm", build)


def _case_cosine_correlate() -> OpCase:
    def build(rng):
        rep = _leaf(rng, (2, 6, 4))
        feat = _leaf(rng, (2, 6, 4, 3))
        w = _projection(rng, (2, 4, 4, 3))
        return ({"rep": rep, "feat": feat},
                lambda: _project(T.cosine_correlate(rep, feat), w))

    return OpCase("cosine_correlate", build)


def _case_cosine_similarity() -> OpCase:
    def build(rng):
        a = _leaf(rng, (8,))
        b = _leaf(rng, (8,))
        return {"a": a, "b": b}, lambda: T.cosine_similarity(a, b)

    return OpCase("cosine_similarity", build)


def _case_relation_sum() -> OpCase:
    def build(rng):
        s = _leaf(rng, (2, 4, 4, 3))
        f = _leaf(rng, (2, 5, 4, 3))
        w = _projection(rng, (2, 5, 4, 4))
        return {"corr": s, "feat": f}, lambda: _project(T.relation_sum(s, f), w)

    return OpCase("relation_sum", build)


def _case_neighbor_mix() -> OpCase:
    def build(rng):
        r = _leaf(rng, (2, 5, 4, 4))
        a = _leaf(rng, (2, 4, 4))
        w = _projection(rng, (2, 5, 4))
        return {"rel": r, "adj": a}, lambda: _project(T.neighbor_mix(r, a), w)

    return OpCase("neighbor_mix", build)


def _case_matmul() -> OpCase:
    def build(rng):
        a = _leaf(rng, (4, 6))
        b = _leaf(rng, (6, 3))
        w = _projection(rng, (4, 3))
        return {"a": a, "b": b}, lambda: _project(T.matmul(a, b), w)

    return OpCase("matmul", build)


def _case_trace() -> OpCase:
    def build(rng):
        a = _leaf(rng, (5, 5))
        return {"a": a}, lambda: T.trace(a)

    return OpCase("trace", build)


def _case_max_over_channel() -> OpCase:
    def build(rng):
        # well-separated values: the FD step must not flip the argmax
        base = rng.uniform(-2.0, 2.0, size=(2, 6, 3, 4))
        base += rng.permutation(np.linspace(0, 6.0, 6)).reshape(1, 6, 1, 1)
        x = T.Tensor(base, requires_grad=True, dtype=np.float64)
        w = _projection(rng, (2, 3, 4))
        return {"x": x}, lambda: _project(T.max_over_channel(x), w)

    return OpCase("max_over_channel", build)


def _case_mean_over_channel() -> OpCase:
    def build(rng):
        x = _leaf(rng, (2, 6, 3, 4))
        w = _projection(rng, (2, 3, 4))
        return {"x": x}, lambda: _project(T.mean_over_channel(x), w)

    return OpCase("mean_over_channel", build)


def _case_sum() -> OpCase:
    def build(rng):
        x = _leaf(rng, (3, 4, 2, 5))
        w = _projection(rng, (3, 2, 5))
        return {"x": x}, lambda: _project(T.sum_over_axis(x, axis=1), w)

    return OpCase("sum_over_axis", build)


def _case_mean() -> OpCase:
    def build(rng):
        x = _leaf(rng, (3, 4, 2, 5))
        return {"x": x}, lambda: T.mean_over_axis(x)

    return OpCase("mean_over_axis", build)


def _case_take_time() -> OpCase:
    def build(rng):
        x = _leaf(rng, (2, 4, 3, 6))
        w = _projection(rng, (2, 4, 3))
        return {"x": x}, lambda: _project(T.take_time(x, 2), w)

    return OpCase("take_time", build)


def _case_transpose_last2() -> OpCase:
    def build(rng):
        x = _leaf(rng, (2, 3, 4, 5))
        w = _projection(rng, (2, 3, 5, 4))
        return {"x": x}, lambda: _project(T.transpose_last2(x), w)

    return OpCase("transpose_last2", build)


def _case_huber() -> OpCase:
    def build(rng):
        # keep |pred - target| away from the delta=1 seam
        target = rng.uniform(-2.0, 2.0, size=(3, 4, 5))
        offs = rng.choice([-1.0, 1.0], size=(3, 4, 5)) * rng.uniform(0.1, 0.8, size=(3, 4, 5))
        offs[0] *= 2.5  # exercise the linear branch too
        pred = T.Tensor(target + offs, requires_grad=True, dtype=np.float64)
        tgt = T.Tensor(target, requires_grad=True, dtype=np.float64)
        return {"pred": pred, "target": tgt}, lambda: T.huber(pred, tgt, delta=1.0)

    return OpCase("huber", build)


def default_registry() -> list[OpCase]:
    """Every differentiable op, each registered exactly once."""
    return [
        _binary_case("add", T.add),
        _binary_case("sub", T.sub),
        _binary_case("mul", T.mul),
        _unary_case("neg", T.neg),
        _unary_case("tanh", T.tanh),
        _unary_case("sigmoid", T.sigmoid),
        _unary_case("relu", T.relu, away_from_zero=True),
        _case_sum(),
        _case_mean(),
        _case_max_over_channel(),
        _case_mean_over_channel(),
        _case_take_time(),
        _case_transpose_last2(),
        _case_matmul(),
        _case_trace(),
        _case_channel_linear(exact=False),
        _case_channel_linear(exact=True),
        _case_conv_nodewise(stride=1),
        _case_conv_nodewise(stride=2),
        _case_layer_norm(),
        _case_cosine_similarity(),
        _case_cosine_correlate(),
        _case_relation_sum(),
        _case_neighbor_mix(),
        _case_huber(),
    ]


def full_model_case(nodes: int = 4, t_in: int = 12, channels: int = 8,
                    points_per_param: int = 6) -> OpCase:
    """End-to-end check: total training loss of a toy forecaster."""
    from .config import ModelConfig
    from .model import Forecaster
    from .losses import total_loss

    def build(rng):
        cfg = ModelConfig(t_in=t_in, horizon=6, channels=(channels,) * 4,
                          head_hidden=channels, contrast_weight=0.1)
        model = Forecaster(cfg, seed=int(rng.integers(2**31)), dtype=np.float64)
        x = T.Tensor(rng.uniform(-1.0, 1.0, size=(2, 1, nodes, t_in)), dtype=np.float64)
        y = T.Tensor(rng.uniform(-1.0, 1.0, size=(2, cfg.horizon, nodes)), dtype=np.float64)

        def forward():
            yhat, state = model.forward(x)
            loss, _, _ = total_loss(yhat, y, state.f_g, state.f_gr,
                                    contrast_weight=cfg.contrast_weight)
            return loss

        return dict(model.params), forward

    return OpCase("full_model", build)


def run_all(seed: int = 0, registry: list[OpCase] | None = None,
            include_model: bool = True, model_points: int = 6) -> list[CheckResult]:
    cases = list(default_registry() if registry is None else registry)
    results = [check_case(case, seed=seed + i) for i, case in enumerate(cases)]
    if include_model:
        case = full_model_case()
        results.append(check_case(case, seed=seed + len(cases), points_per_leaf=model_points))
    return results
