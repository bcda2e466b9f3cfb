"""Attention policy for the quotiented MDP, in numpy with a hand-written
backward pass.

Layout per state: tokens (origin, destination, remaining nodes) are embedded
by a linear layer, the two endpoint tokens get learned encodings added, then
``layers`` transformer blocks with ReZero residuals run over all tokens
(optionally preceded by a cost-weighted graph convolution), and a linear
head scores every (token, column) action. Softmax is taken over the allowed
actions only. There is no positional encoding, so the policy is
permutation-equivariant over the node tokens.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class PolicyConfig:
    d_in: int
    d: int = 64
    heads: int = 4
    layers: int = 3
    d_ff: int = 128
    head_width: int = 1
    endpoints: bool = True
    graph_conv: bool = False

    def __post_init__(self) -> None:
        if self.d % self.heads:
            raise ValueError("d must be divisible by heads")


INPUT_DIMS = {"tsp": 2, "cvrp": 4, "op": 4, "kp": 3}


def config_for(problem: str, id_dim: int = 0, **sizes: int) -> PolicyConfig:
    """Model configuration matching a problem's feature and action layout."""
    from .problems import ATSP_ID_DIM

    if problem == "atsp":
        return PolicyConfig(d_in=ATSP_ID_DIM, graph_conv=True, **sizes)
    return PolicyConfig(
        d_in=INPUT_DIMS[problem] + id_dim,
        head_width=2 if problem == "cvrp" else 1,
        endpoints=problem != "kp",
        **sizes,
    )


@dataclass
class PolicyModel:
    config: PolicyConfig
    params: dict[str, np.ndarray]

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def copy(self) -> "PolicyModel":
        return PolicyModel(self.config, {k: v.copy() for k, v in self.params.items()})


def parameter_shapes(cfg: PolicyConfig) -> dict[str, tuple[int, ...]]:
    d, f = cfg.d, cfg.d_ff
    shapes: dict[str, tuple[int, ...]] = {"emb.W": (cfg.d_in, d), "emb.b": (d,)}
    if cfg.endpoints:
        shapes["tok.origin"] = (d,)
        shapes["tok.dest"] = (d,)
    for l in range(cfg.layers):
        p = f"layer{l}."
        if cfg.graph_conv:
            shapes[p + "gc.W"] = (d, d)
        for name in ("Wq", "Wk", "Wv", "Wo"):
            shapes[p + name] = (d, d)
        shapes[p + "W1"] = (d, f)
        shapes[p + "b1"] = (f,)
        shapes[p + "W2"] = (f, d)
        shapes[p + "b2"] = (d,)
        shapes[p + "alpha_att"] = ()
        shapes[p + "alpha_ffn"] = ()
    shapes["out.W"] = (d, cfg.head_width)
    shapes["out.b"] = (cfg.head_width,)
    return shapes


def init_model(cfg: PolicyConfig, rng: np.random.Generator) -> PolicyModel:
    """Scaled-normal weights, zero biases, ReZero scalars and graph mixing at zero."""
    params = {}
    for name, shape in parameter_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf.startswith("alpha") or leaf.startswith("b") or name.endswith("gc.W"):
            params[name] = np.zeros(shape)
        elif name.startswith("tok."):
            params[name] = rng.normal(0.0, 1.0, shape)
        else:
            params[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), shape)
    return PolicyModel(cfg, params)


@dataclass
class ForwardTape:
    """Activations cached by ``forward`` for the backward pass."""

    x: np.ndarray
    adj: np.ndarray | None
    mask: np.ndarray
    h0: np.ndarray
    layers: list[dict[str, np.ndarray]] = field(default_factory=list)
    h_out: np.ndarray | None = None
    logp: np.ndarray | None = None


def _batched(features: np.ndarray, mask: np.ndarray, cost: np.ndarray | None):
    if features.ndim == 2:
        features, mask = features[None], mask[None]
        cost = None if cost is None else cost[None]
    return features, mask, cost


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    z = np.where(mask, logits, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def forward(
    model: PolicyModel,
    features: np.ndarray,
    mask: np.ndarray,
    cost: np.ndarray | None = None,
) -> tuple[np.ndarray, ForwardTape]:
    """Log-probabilities over flattened (token, column) actions.

    ``features`` is (d_in, N) or (B, d_in, N); ``mask`` is (N, width) or
    (B, N, width); ``cost`` holds normalised edge weights (ATSP only).
    Masked actions get log-probability -inf.
    """
    cfg, P = model.config, model.params
    features = np.asarray(features)
    if features.dtype != np.longdouble:
        features = features.astype(np.float64)
    features, mask, cost = _batched(features, np.asarray(mask, dtype=bool), cost)
    if (cost is not None) != cfg.graph_conv:
        raise ValueError("a cost matrix is required exactly when the model uses graph convolution")
    B, _, N = features.shape
    flat_mask = mask.reshape(B, -1)
    if not flat_mask.any(axis=1).all():
        raise ValueError("every state needs at least one allowed action")

    x = features.transpose(0, 2, 1)
    h = x @ P["emb.W"] + P["emb.b"]
    if cfg.endpoints:
        h[:, 0] += P["tok.origin"]
        h[:, 1] += P["tok.dest"]
    tape = ForwardTape(x=x, adj=cost, mask=flat_mask, h0=h)
    nh, dk = cfg.heads, cfg.d // cfg.heads
    scale = 1.0 / np.sqrt(dk)

    for l in range(cfg.layers):
        p = f"layer{l}."
        c: dict[str, np.ndarray] = {}
        if cfg.graph_conv:
            c["gc_in"] = h
            c["ah"] = cost @ h
            h = h + c["ah"] @ P[p + "gc.W"]
        c["h_att_in"] = h
        q = (h @ P[p + "Wq"]).reshape(B, N, nh, dk).transpose(0, 2, 1, 3)
        k = (h @ P[p + "Wk"]).reshape(B, N, nh, dk).transpose(0, 2, 1, 3)
        v = (h @ P[p + "Wv"]).reshape(B, N, nh, dk).transpose(0, 2, 1, 3)
        s = (q @ k.transpose(0, 1, 3, 2)) * scale
        s = s - s.max(axis=-1, keepdims=True)
        att = np.exp(s)
        att /= att.sum(axis=-1, keepdims=True)
        o = (att @ v).transpose(0, 2, 1, 3).reshape(B, N, cfg.d)
        m = o @ P[p + "Wo"]
        c.update(q=q, k=k, v=v, att=att, o=o, m=m)
        h = h + P[p + "alpha_att"] * m
        c["h_ffn_in"] = h
        z = h @ P[p + "W1"] + P[p + "b1"]
        r = np.maximum(z, 0.0)
        f = r @ P[p + "W2"] + P[p + "b2"]
        c.update(z=z, r=r, f=f)
        h = h + P[p + "alpha_ffn"] * f
        tape.layers.append(c)

    tape.h_out = h
    logits = (h @ P["out.W"] + P["out.b"]).reshape(B, -1)
    tape.logp = masked_log_softmax(logits, flat_mask)
    return tape.logp, tape


def target_distribution(mask: np.ndarray, targets: list[list[int]] | np.ndarray) -> np.ndarray:
    """Uniform distribution over each sample's target actions (one-hot for one target)."""
    B, A = mask.shape
    q = np.zeros((B, A))
    for b, t in enumerate(targets):
        t = np.atleast_1d(t)
        q[b, t] = 1.0 / len(t)
    if (q[~mask] != 0).any():
        raise ValueError("a target action is masked")
    return q


def cross_entropy(logp: np.ndarray, q: np.ndarray) -> float:
    """Mean over the batch of -sum_a q_a log p_a."""
    safe = np.where(q > 0, logp, 0.0)
    return float(-(q * safe).sum() / len(q))


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sum over batch and tokens of a^T b, as one BLAS call."""
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


def backward(model: PolicyModel, tape: ForwardTape, q: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients of ``cross_entropy(logp, q)`` for every parameter."""
    cfg, P = model.config, model.params
    B, N, _ = tape.h0.shape
    nh, dk = cfg.heads, cfg.d // cfg.heads
    scale = 1.0 / np.sqrt(dk)
    g: dict[str, np.ndarray] = {}

    prob = np.exp(tape.logp)
    dlogits = np.where(tape.mask, prob - q, 0.0) / B
    dlogits = dlogits.reshape(B, N, cfg.head_width)
    h = tape.h_out
    g["out.W"] = _outer(h, dlogits)
    g["out.b"] = dlogits.sum(axis=(0, 1))
    dh = dlogits @ P["out.W"].T

    for l in reversed(range(cfg.layers)):
        p = f"layer{l}."
        c = tape.layers[l]
        # feed-forward sub-block
        a_f = P[p + "alpha_ffn"]
        g[p + "alpha_ffn"] = np.array((dh * c["f"]).sum())
        df = a_f * dh
        g[p + "W2"] = _outer(c["r"], df)
        g[p + "b2"] = df.sum(axis=(0, 1))
        dz = (df @ P[p + "W2"].T) * (c["z"] > 0)
        g[p + "W1"] = _outer(c["h_ffn_in"], dz)
        g[p + "b1"] = dz.sum(axis=(0, 1))
        dh = dh + dz @ P[p + "W1"].T
        # attention sub-block
        a_a = P[p + "alpha_att"]
        g[p + "alpha_att"] = np.array((dh * c["m"]).sum())
        dm = a_a * dh
        g[p + "Wo"] = _outer(c["o"], dm)
        do = (dm @ P[p + "Wo"].T).reshape(B, N, nh, dk).transpose(0, 2, 1, 3)
        att, q_, k_, v_ = c["att"], c["q"], c["k"], c["v"]
        datt = do @ v_.transpose(0, 1, 3, 2)
        dv = att.transpose(0, 1, 3, 2) @ do
        ds = att * (datt - (datt * att).sum(axis=-1, keepdims=True)) * scale
        dq = ds @ k_
        dk_ = ds.transpose(0, 1, 3, 2) @ q_
        merge = lambda t: t.transpose(0, 2, 1, 3).reshape(B, N, cfg.d)  # noqa: E731
        dq, dk_, dv = merge(dq), merge(dk_), merge(dv)
        hin = c["h_att_in"]
        g[p + "Wq"] = _outer(hin, dq)
        g[p + "Wk"] = _outer(hin, dk_)
        g[p + "Wv"] = _outer(hin, dv)
        dh = dh + dq @ P[p + "Wq"].T + dk_ @ P[p + "Wk"].T + dv @ P[p + "Wv"].T
        if cfg.graph_conv:
            g[p + "gc.W"] = _outer(c["ah"], dh)
            dah = dh @ P[p + "gc.W"].T
            dh = dh + tape.adj.transpose(0, 2, 1) @ dah

    if cfg.endpoints:
        g["tok.origin"] = dh[:, 0].sum(axis=0)
        g["tok.dest"] = dh[:, 1].sum(axis=0)
    g["emb.W"] = _outer(tape.x, dh)
    g["emb.b"] = dh.sum(axis=(0, 1))
    return g


def loss_and_grad(
    model: PolicyModel,
    features: np.ndarray,
    mask: np.ndarray,
    targets,
    cost: np.ndarray | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    logp, tape = forward(model, features, mask, cost)
    q = target_distribution(tape.mask, targets if np.ndim(features) == 3 else [targets])
    return cross_entropy(logp, q), backward(model, tape, q)


def gradient_check(
    model: PolicyModel,
    features: np.ndarray,
    mask: np.ndarray,
    targets,
    cost: np.ndarray | None = None,
    step: float = 1e-5,
    floor: float = 1e-6,
) -> dict[str, float]:
    """Relative error per parameter tensor between analytic and central-difference gradients.

    The finite differences are evaluated on an extended-precision copy of the
    model so that their round-off stays far below the tolerance. The error of
    a tensor is ||g_a - g_n|| / max(||g_a||, ||g_n||, floor); the floor keeps
    tensors whose true gradient vanishes (e.g. a bias feeding a shift-invariant
    softmax) from comparing round-off against round-off.
    """
    _, analytic = loss_and_grad(model, features, mask, targets, cost)
    wide = PolicyModel(model.config, {k: v.astype(np.longdouble) for k, v in model.params.items()})
    feats = np.asarray(features, dtype=np.longdouble)
    adj = None if cost is None else np.asarray(cost, dtype=np.longdouble)
    batched = np.ndim(features) == 3

    def loss() -> float:
        logp, tape = forward(wide, feats, mask, adj)
        q = target_distribution(tape.mask, targets if batched else [targets])
        return -(q * np.where(q > 0, logp, 0.0)).sum() / len(q)

    out = {}
    h = np.longdouble(step)
    for name, param in wide.params.items():
        num = np.zeros(param.shape)
        flat, nflat = param.reshape(-1), num.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            lp = loss()
            flat[i] = old - h
            lm = loss()
            flat[i] = old
            nflat[i] = float((lp - lm) / (2 * h))
        denom = max(np.linalg.norm(analytic[name]), np.linalg.norm(num), floor)
        out[name] = float(np.linalg.norm(analytic[name] - num) / denom)
    return out


# -- optimiser ---------------------------------------------------------------------------


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(model: PolicyModel, grads: dict[str, np.ndarray], state: AdamState, lr: float) -> PolicyModel:
    """One Adam update, applied to ``model`` in place (the model is also returned)."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1 - b1**state.t, 1 - b2**state.t
    for name, grad in grads.items():
        m = state.m.setdefault(name, np.zeros_like(grad))
        v = state.v.setdefault(name, np.zeros_like(grad))
        m *= b1
        m += (1 - b1) * grad
        v *= b2
        v += (1 - b2) * grad * grad
        model.params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return model


def learning_rate(epoch: int, base: float = 7.5e-4, decay: float = 0.98, every: int = 50) -> float:
    """Step decay: ``base * decay ** (epoch // every)`` for a 0-based epoch."""
    return base * decay ** (epoch // every)


# -- checkpoints -------------------------------------------------------------------------


def save_model(model: PolicyModel, path: str | Path) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "shapes": {k: list(v.shape) for k, v in model.params.items()},
    }
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **model.params)


def load_model(path: str | Path) -> PolicyModel:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        cfg = PolicyConfig(**meta["config"])
        expected = parameter_shapes(cfg)
        params = {}
        for name, shape in expected.items():
            if name not in data.files:
                raise ValueError(f"checkpoint is missing parameter {name}")
            arr = np.array(data[name], dtype=np.float64)
            if arr.shape != tuple(shape) or list(shape) != meta["shapes"][name]:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {shape}")
            params[name] = arr
    return PolicyModel(cfg, params)
