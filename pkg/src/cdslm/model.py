"""Small pre-norm transformer encoder with a masked-LM head and a tag head.

Everything is plain numpy with hand-written backward passes so gradients are
exact (finite-difference checkable) and training is bitwise reproducible.
Training runs in float32; gradient checks construct float64 parameters and
the whole pipeline follows the parameter dtype.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import erf

CHECKPOINT_FORMAT = "cdslm-checkpoint"
CHECKPOINT_VERSION = 1

_SQRT_2 = float(np.sqrt(2.0))
_INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))
_NEG_INF = -1e9  # additive-mask stand-in; exp underflows to exactly 0


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    n_tag_labels: int
    n_layers: int = 2
    n_heads: int = 4
    hidden: int = 64
    ffn_mult: int = 4
    max_seq_len: int = 128
    layer_norm_eps: float = 1e-5
    dropout: float = 0.1

    def __post_init__(self) -> None:
        for name in ("vocab_size", "n_tag_labels", "n_layers", "n_heads", "hidden", "ffn_mult", "max_seq_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.hidden % self.n_heads != 0:
            raise ValueError(f"hidden ({self.hidden}) must be divisible by n_heads ({self.n_heads})")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    @classmethod
    def paper_scale(cls, vocab_size: int = 8192, n_tag_labels: int = 32) -> "ModelConfig":
        return cls(vocab_size=vocab_size, n_tag_labels=n_tag_labels,
                   n_layers=8, n_heads=8, hidden=256, max_seq_len=128)

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size, "n_tag_labels": self.n_tag_labels,
            "n_layers": self.n_layers, "n_heads": self.n_heads, "hidden": self.hidden,
            "ffn_mult": self.ffn_mult, "max_seq_len": self.max_seq_len,
            "layer_norm_eps": self.layer_norm_eps, "dropout": self.dropout,
        }


def param_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Declared parameter order; init, checkpoints, and the optimizer follow it."""
    h, f = config.hidden, config.hidden * config.ffn_mult
    shapes: list[tuple[str, tuple[int, ...]]] = [
        ("tok_emb", (config.vocab_size, h)),
        ("pos_emb", (config.max_seq_len, h)),
    ]
    for i in range(config.n_layers):
        p = f"layer{i}"
        shapes += [
            (f"{p}.ln1.g", (h,)), (f"{p}.ln1.b", (h,)),
            (f"{p}.attn.wq", (h, h)), (f"{p}.attn.bq", (h,)),
            (f"{p}.attn.wk", (h, h)), (f"{p}.attn.bk", (h,)),
            (f"{p}.attn.wv", (h, h)), (f"{p}.attn.bv", (h,)),
            (f"{p}.attn.wo", (h, h)), (f"{p}.attn.bo", (h,)),
            (f"{p}.ln2.g", (h,)), (f"{p}.ln2.b", (h,)),
            (f"{p}.ffn.w1", (h, f)), (f"{p}.ffn.b1", (f,)),
            (f"{p}.ffn.w2", (f, h)), (f"{p}.ffn.b2", (h,)),
        ]
    shapes += [
        ("ln_f.g", (h,)), ("ln_f.b", (h,)),
        ("vocab_head.w", (h, config.vocab_size)), ("vocab_head.b", (config.vocab_size,)),
        ("tag_head.w", (h, config.n_tag_labels)), ("tag_head.b", (config.n_tag_labels,)),
    ]
    return shapes


def decays(name: str) -> bool:
    """Weight decay applies to everything except biases and layer-norm params."""
    leaf = name.split(".")[-1]
    return not (leaf.startswith("b") or leaf == "g")


class ModelParams:
    """All trainable tensors, keyed by name in declared order."""

    def __init__(self, config: ModelConfig, tensors: dict[str, np.ndarray]):
        self.config = config
        self.tensors = tensors
        for name, shape in param_shapes(config):
            if name not in tensors:
                raise ValueError(f"missing parameter {name}")
            if tensors[name].shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {tensors[name].shape}")

    @property
    def dtype(self) -> np.dtype:
        return self.tensors["tok_emb"].dtype

    @property
    def n_params(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config, {k: v.astype(dtype) for k, v in self.tensors.items()})


def init_model(config: ModelConfig, seed: int, dtype=np.float32) -> ModelParams:
    """Normal(0, 0.02) weights, unit layer-norm scales, zero biases."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(config):
        leaf = name.split(".")[-1]
        if leaf == "g":
            t = np.ones(shape)
        elif leaf.startswith("b"):
            t = np.zeros(shape)
        else:
            t = rng.normal(0.0, 0.02, size=shape)
        tensors[name] = t.astype(dtype)
    return ModelParams(config, tensors)


# -- numerics ---------------------------------------------------------------

def _gelu(u: np.ndarray) -> np.ndarray:
    return 0.5 * u * (1.0 + erf(u / _SQRT_2))


def _gelu_grad(u: np.ndarray) -> np.ndarray:
    phi = np.exp(-0.5 * u * u) * _INV_SQRT_2PI
    return 0.5 * (1.0 + erf(u / _SQRT_2)) + u * phi


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray, eps: float):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv, g)


def _layer_norm_backward(dy: np.ndarray, cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv, g = cache
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=axes)
    db = dy.sum(axis=axes)
    dxhat = dy * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _dropout_mask(rng: np.random.Generator | None, rate: float, shape, dtype) -> np.ndarray | None:
    """Inverted-dropout multiplier, or None when dropout is inactive."""
    if rng is None or rate == 0.0:
        return None
    keep = rng.random(size=shape) >= rate
    return keep.astype(dtype) / dtype.type(1.0 - rate)


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    b, s, h = x.shape
    return x.reshape(b, s, n_heads, h // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, nh, s, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, s, nh * dh)


# -- forward ----------------------------------------------------------------

def forward(
    params: ModelParams,
    token_ids: np.ndarray,
    pad_mask: np.ndarray | None = None,
    dropout_rng: np.random.Generator | None = None,
    want_cache: bool = False,
):
    """Run the encoder.

    ``token_ids`` is [B, S] int; ``pad_mask`` is [B, S] bool, True at padded
    positions (their keys are screened out of attention).  Returns
    (vocab_logits [B,S,V], tag_logits [B,S,T]) plus a cache when requested.
    """
    cfg = params.config
    t = params.tensors
    dt = params.dtype
    token_ids = np.asarray(token_ids)
    if token_ids.ndim != 2:
        raise ValueError(f"token_ids must be [batch, seq], got shape {token_ids.shape}")
    b, s = token_ids.shape
    if s > cfg.max_seq_len:
        raise ValueError(f"sequence length {s} exceeds max_seq_len {cfg.max_seq_len}")
    if token_ids.min() < 0 or token_ids.max() >= cfg.vocab_size:
        raise ValueError("token id out of vocabulary range")
    if pad_mask is not None:
        pad_mask = np.asarray(pad_mask, dtype=bool)
        if pad_mask.shape != (b, s):
            raise ValueError("pad_mask shape must match token_ids")

    scale = dt.type(1.0 / np.sqrt(cfg.hidden // cfg.n_heads))
    x = t["tok_emb"][token_ids] + t["pos_emb"][:s]
    layers = []
    for i in range(cfg.n_layers):
        p = f"layer{i}"
        c: dict = {"x0": x}
        h1, c["ln1"] = _layer_norm(x, t[f"{p}.ln1.g"], t[f"{p}.ln1.b"], cfg.layer_norm_eps)
        c["h1"] = h1
        q = _split_heads(h1 @ t[f"{p}.attn.wq"] + t[f"{p}.attn.bq"], cfg.n_heads)
        k = _split_heads(h1 @ t[f"{p}.attn.wk"] + t[f"{p}.attn.bk"], cfg.n_heads)
        v = _split_heads(h1 @ t[f"{p}.attn.wv"] + t[f"{p}.attn.bv"], cfg.n_heads)
        scores = (q @ k.transpose(0, 1, 3, 2)) * scale
        if pad_mask is not None:
            scores = np.where(pad_mask[:, None, None, :], dt.type(_NEG_INF), scores)
        probs = _softmax(scores)
        ctx = _merge_heads(probs @ v)
        o = ctx @ t[f"{p}.attn.wo"] + t[f"{p}.attn.bo"]
        drop1 = _dropout_mask(dropout_rng, cfg.dropout, o.shape, dt)
        if drop1 is not None:
            o = o * drop1
        c.update(q=q, k=k, v=v, probs=probs, ctx=ctx, drop1=drop1)
        x = x + o

        c["x1"] = x
        h2, c["ln2"] = _layer_norm(x, t[f"{p}.ln2.g"], t[f"{p}.ln2.b"], cfg.layer_norm_eps)
        c["h2"] = h2
        u = h2 @ t[f"{p}.ffn.w1"] + t[f"{p}.ffn.b1"]
        gu = _gelu(u)
        fo = gu @ t[f"{p}.ffn.w2"] + t[f"{p}.ffn.b2"]
        drop2 = _dropout_mask(dropout_rng, cfg.dropout, fo.shape, dt)
        if drop2 is not None:
            fo = fo * drop2
        c.update(u=u, gu=gu, drop2=drop2)
        x = x + fo
        layers.append(c)

    hf, lnf_cache = _layer_norm(x, t["ln_f.g"], t["ln_f.b"], cfg.layer_norm_eps)
    vocab_logits = hf @ t["vocab_head.w"] + t["vocab_head.b"]
    tag_logits = hf @ t["tag_head.w"] + t["tag_head.b"]
    if not want_cache:
        return vocab_logits, tag_logits
    cache = {
        "token_ids": token_ids, "pad_mask": pad_mask, "layers": layers,
        "ln_f": lnf_cache, "hf": hf, "scale": scale, "shape": (b, s),
    }
    return vocab_logits, tag_logits, cache


# -- loss -------------------------------------------------------------------

@dataclass(frozen=True)
class LossParts:
    total: float
    ce_vocab: float
    ce_tag: float
    n_masked: int
    n_tag_targets: int


def relabel_tag_targets(tag_targets: np.ndarray, active_tag_ids: Iterable[int]) -> np.ndarray:
    """Zero out tag targets outside the active set (the id-0 rule)."""
    ids = np.unique(np.asarray(list(active_tag_ids), dtype=np.int64))
    if (ids == 0).any():
        raise ValueError("active_tag_ids must not contain the reserved id 0")
    return np.where(np.isin(tag_targets, ids), tag_targets, 0)


def _ce_grad(logits: np.ndarray, targets: np.ndarray, positions: np.ndarray):
    """Mean cross-entropy over flagged positions and its logit gradient."""
    n = int(positions.sum())
    if n == 0:
        return 0.0, np.zeros_like(logits)
    logp = _log_softmax(logits)
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    ce = -float(picked[positions].sum()) / n
    dlogits = _softmax(logits)
    onehot = np.zeros_like(dlogits)
    np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
    weight = positions.astype(logits.dtype)[..., None] / n
    dlogits = (dlogits - onehot) * weight
    return ce, dlogits


def _loss_and_logit_grads(
    vocab_logits, tag_logits, mask_positions, vocab_targets, tag_targets,
    active_tag_ids, lambda_tag,
):
    mask_positions = np.asarray(mask_positions, dtype=bool)
    relabeled = relabel_tag_targets(np.asarray(tag_targets), active_tag_ids)
    tag_positions = mask_positions & (relabeled != 0)
    ce_vocab, d_vl = _ce_grad(vocab_logits, np.asarray(vocab_targets), mask_positions)
    ce_tag, d_tl = _ce_grad(tag_logits, relabeled, tag_positions)
    d_tl = d_tl * lambda_tag
    total = ce_vocab + lambda_tag * ce_tag
    parts = LossParts(float(total), ce_vocab, ce_tag,
                      int(mask_positions.sum()), int(tag_positions.sum()))
    return parts, d_vl, d_tl


def loss(
    vocab_logits: np.ndarray,
    tag_logits: np.ndarray,
    mask_positions: np.ndarray,
    vocab_targets: np.ndarray,
    tag_targets: np.ndarray,
    active_tag_ids: Iterable[int],
    lambda_tag: float = 1.0,
) -> float:
    """L = CE_vocab + lambda_tag * CE_tag, each averaged over its positions.

    ``mask_positions`` flags masked, non-pad positions.  Tag targets outside
    ``active_tag_ids`` are relabeled to 0 and excluded from CE_tag.  With no
    masked positions the loss is 0.
    """
    parts, _, _ = _loss_and_logit_grads(
        vocab_logits, tag_logits, mask_positions, vocab_targets, tag_targets,
        active_tag_ids, lambda_tag)
    return parts.total


def loss_parts(
    vocab_logits, tag_logits, mask_positions, vocab_targets, tag_targets,
    active_tag_ids, lambda_tag: float = 1.0,
) -> LossParts:
    parts, _, _ = _loss_and_logit_grads(
        vocab_logits, tag_logits, mask_positions, vocab_targets, tag_targets,
        active_tag_ids, lambda_tag)
    return parts


# -- backward ---------------------------------------------------------------

def backward(params: ModelParams, cache: dict, d_vocab_logits: np.ndarray, d_tag_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients for every parameter given logit gradients."""
    cfg = params.config
    t = params.tensors
    b, s = cache["shape"]
    h = cfg.hidden
    hf = cache["hf"]
    pad_mask = cache["pad_mask"]
    scale = cache["scale"]
    grads: dict[str, np.ndarray] = {}

    flat = lambda a: a.reshape(-1, a.shape[-1])
    grads["vocab_head.w"] = flat(hf).T @ flat(d_vocab_logits)
    grads["vocab_head.b"] = d_vocab_logits.sum(axis=(0, 1))
    grads["tag_head.w"] = flat(hf).T @ flat(d_tag_logits)
    grads["tag_head.b"] = d_tag_logits.sum(axis=(0, 1))
    dhf = d_vocab_logits @ t["vocab_head.w"].T + d_tag_logits @ t["tag_head.w"].T
    dx, grads["ln_f.g"], grads["ln_f.b"] = _layer_norm_backward(dhf, cache["ln_f"])

    for i in reversed(range(cfg.n_layers)):
        p = f"layer{i}"
        c = cache["layers"][i]

        dfo = dx if c["drop2"] is None else dx * c["drop2"]
        grads[f"{p}.ffn.w2"] = flat(c["gu"]).T @ flat(dfo)
        grads[f"{p}.ffn.b2"] = dfo.sum(axis=(0, 1))
        du = (dfo @ t[f"{p}.ffn.w2"].T) * _gelu_grad(c["u"])
        grads[f"{p}.ffn.w1"] = flat(c["h2"]).T @ flat(du)
        grads[f"{p}.ffn.b1"] = du.sum(axis=(0, 1))
        dh2 = du @ t[f"{p}.ffn.w1"].T
        dx1_from_ln, grads[f"{p}.ln2.g"], grads[f"{p}.ln2.b"] = _layer_norm_backward(dh2, c["ln2"])
        dx = dx + dx1_from_ln

        do = dx if c["drop1"] is None else dx * c["drop1"]
        grads[f"{p}.attn.wo"] = flat(c["ctx"]).T @ flat(do)
        grads[f"{p}.attn.bo"] = do.sum(axis=(0, 1))
        dctx = _split_heads(do @ t[f"{p}.attn.wo"].T, cfg.n_heads)
        dprobs = dctx @ c["v"].transpose(0, 1, 3, 2)
        dv = c["probs"].transpose(0, 1, 3, 2) @ dctx
        dscores = c["probs"] * (dprobs - (dprobs * c["probs"]).sum(axis=-1, keepdims=True))
        if pad_mask is not None:
            # scores at padded keys were overwritten, so no gradient flows back
            dscores = dscores * ~pad_mask[:, None, None, :]
        dq = (dscores @ c["k"]) * scale
        dk = (dscores.transpose(0, 1, 3, 2) @ c["q"]) * scale
        dq_m, dk_m, dv_m = _merge_heads(dq), _merge_heads(dk), _merge_heads(dv)
        h1 = c["h1"]
        grads[f"{p}.attn.wq"] = flat(h1).T @ flat(dq_m)
        grads[f"{p}.attn.bq"] = dq_m.sum(axis=(0, 1))
        grads[f"{p}.attn.wk"] = flat(h1).T @ flat(dk_m)
        grads[f"{p}.attn.bk"] = dk_m.sum(axis=(0, 1))
        grads[f"{p}.attn.wv"] = flat(h1).T @ flat(dv_m)
        grads[f"{p}.attn.bv"] = dv_m.sum(axis=(0, 1))
        dh1 = dq_m @ t[f"{p}.attn.wq"].T + dk_m @ t[f"{p}.attn.wk"].T + dv_m @ t[f"{p}.attn.wv"].T
        dx0_from_ln, grads[f"{p}.ln1.g"], grads[f"{p}.ln1.b"] = _layer_norm_backward(dh1, c["ln1"])
        dx = dx + dx0_from_ln

    grads["tok_emb"] = np.zeros_like(t["tok_emb"])
    np.add.at(grads["tok_emb"], cache["token_ids"].reshape(-1), flat(dx))
    grads["pos_emb"] = np.zeros_like(t["pos_emb"])
    grads["pos_emb"][:s] = dx.sum(axis=0)
    return grads


def loss_and_grads(
    params: ModelParams,
    token_ids: np.ndarray,
    pad_mask: np.ndarray | None,
    mask_positions: np.ndarray,
    vocab_targets: np.ndarray,
    tag_targets: np.ndarray,
    active_tag_ids: Iterable[int],
    lambda_tag: float = 1.0,
    dropout_rng: np.random.Generator | None = None,
) -> tuple[LossParts, dict[str, np.ndarray]]:
    """One forward/backward pass; gradients cover every parameter."""
    vocab_logits, tag_logits, cache = forward(
        params, token_ids, pad_mask, dropout_rng=dropout_rng, want_cache=True)
    parts, d_vl, d_tl = _loss_and_logit_grads(
        vocab_logits, tag_logits, mask_positions, vocab_targets, tag_targets,
        active_tag_ids, lambda_tag)
    grads = backward(params, cache, d_vl, d_tl)
    return parts, grads


# -- optimizer --------------------------------------------------------------

@dataclass
class AdamWState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01


def init_adamw(params: ModelParams, weight_decay: float = 0.01,
               beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamWState:
    zeros = lambda: {k: np.zeros_like(v) for k, v in params.tensors.items()}
    return AdamWState(m=zeros(), v=zeros(), t=0,
                      beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)


def adamw_step(params: ModelParams, grads: Mapping[str, np.ndarray], state: AdamWState, lr: float) -> None:
    """In-place AdamW update with decoupled decay (none on biases/LN params)."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params.tensors.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if decays(name):
            update = update + state.weight_decay * p
        p -= lr * update


def lr_at(step: int, max_steps: int = 400000, warmup_steps: int = 100000, peak: float = 0.001) -> float:
    """Linear warmup 0 -> peak over warmup_steps, then linear decay to 0."""
    if not 0 <= step <= max_steps:
        raise ValueError(f"step {step} outside [0, {max_steps}]")
    if warmup_steps >= max_steps:
        raise ValueError("warmup_steps must be < max_steps")
    if step <= warmup_steps:
        return peak if warmup_steps == 0 else peak * (step / warmup_steps)
    return peak * ((max_steps - step) / (max_steps - warmup_steps))


# -- checkpoints ------------------------------------------------------------

@dataclass
class Checkpoint:
    params: ModelParams
    opt_state: AdamWState | None
    step: int
    tag_names: list[str]
    tokenizer_sha256: str
    header: dict


def save_checkpoint(
    path: str,
    params: ModelParams,
    opt_state: AdamWState | None,
    step: int,
    tag_names: Sequence[str],
    tokenizer_sha256: str,
    extra: dict | None = None,
) -> None:
    """One-line JSON header, then raw little-endian float32 blobs in order."""
    names = [n for n, _ in param_shapes(params.config)]
    tensor_list = [[n, list(params.tensors[n].shape)] for n in names]
    if opt_state is not None:
        tensor_list += [["m." + n, list(params.tensors[n].shape)] for n in names]
        tensor_list += [["v." + n, list(params.tensors[n].shape)] for n in names]
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": params.config.to_dict(),
        "step": int(step),
        "tag_vocabulary": list(tag_names),
        "tokenizer_sha256": tokenizer_sha256,
        "adam": None if opt_state is None else {
            "beta1": opt_state.beta1, "beta2": opt_state.beta2,
            "eps": opt_state.eps, "weight_decay": opt_state.weight_decay,
            "t": opt_state.t,
        },
        "tensors": tensor_list,
        "extra": extra or {},
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, ensure_ascii=False, sort_keys=True, separators=(",", ":")).encode("utf-8"))
        f.write(b"\n")
        for n in names:
            f.write(np.ascontiguousarray(params.tensors[n], dtype="<f4").tobytes())
        if opt_state is not None:
            for group in (opt_state.m, opt_state.v):
                for n in names:
                    f.write(np.ascontiguousarray(group[n], dtype="<f4").tobytes())


def _read_blob(f: IO[bytes], shape: Sequence[int]) -> np.ndarray:
    count = int(np.prod(shape)) if shape else 1
    buf = f.read(count * 4)
    if len(buf) != count * 4:
        raise ValueError("checkpoint truncated")
    return np.frombuffer(buf, dtype="<f4", count=count).reshape(shape).copy()


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} file")
        config = ModelConfig(**header["config"])
        tensors: dict[str, np.ndarray] = {}
        for name, shape in header["tensors"]:
            tensors[name] = _read_blob(f, shape)
        if f.read(1):
            raise ValueError("trailing bytes after declared tensors")
    params = ModelParams(config, {n: tensors[n] for n, _ in param_shapes(config)})
    opt_state = None
    if header.get("adam") is not None:
        a = header["adam"]
        opt_state = AdamWState(
            m={n: tensors["m." + n] for n, _ in param_shapes(config)},
            v={n: tensors["v." + n] for n, _ in param_shapes(config)},
            t=a["t"], beta1=a["beta1"], beta2=a["beta2"],
            eps=a["eps"], weight_decay=a["weight_decay"],
        )
    return Checkpoint(params, opt_state, header["step"], header["tag_vocabulary"],
                      header["tokenizer_sha256"], header)
