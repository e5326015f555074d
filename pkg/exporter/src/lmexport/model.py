"""Compact causal transformer over subword pieces, numpy end to end.

Pre-LN blocks, learned positions, tied unembedding.  Weights are float64
and deterministically seeded, so a given identifier always yields a
bit-identical model; exports inherit that determinism.  The directory
format (config.json + weights.npz + vocab.json) lets externally trained
weights drop in behind the same interface.

Layer indexing for embeddings: layer 0 is the raw token-embedding row
(no positional term, so identical pieces embed identically anywhere);
layers 1..n_layer are post-block states, with the final layer normalized.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lmexport.tokenizer import SubwordTokenizer

ARCH = "tiny-causal-v1"
LN_EPS = 1e-5

# init scales chosen so a random model emits visibly non-uniform
# next-piece distributions (entropy a few nats below ln V)
_EMBED_SCALE = 0.5
_POS_SCALE = 0.1
_PROJ_SCALE = 0.2


class ModelError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class ModelConfig:
    n_vocab: int
    d_model: int = 16
    n_layer: int = 2
    n_head: int = 2
    n_ctx: int = 512

    def __post_init__(self):
        if self.d_model % self.n_head:
            raise ModelError(f"d_model {self.d_model} not divisible by n_head {self.n_head}")
        for name in ("n_vocab", "d_model", "n_layer", "n_head", "n_ctx"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be >= 1")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_head


def _layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * g + b


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass(slots=True)
class KVCache:
    """Per-layer attention keys/values for incremental decoding."""

    k: np.ndarray  # (n_layer, batch, n_head, capacity, d_head)
    v: np.ndarray
    length: int

    @property
    def batch(self) -> int:
        return self.k.shape[1]

    def repeat(self, n: int) -> "KVCache":
        """Independent copies of a batch-1 cache for n parallel walks."""
        if self.batch != 1:
            raise ModelError("repeat expects a batch-1 cache")
        return KVCache(np.repeat(self.k, n, axis=1), np.repeat(self.v, n, axis=1), self.length)


@dataclass(slots=True)
class StepOutput:
    logits: np.ndarray          # (batch, n_vocab) for the appended position
    layer_states: list[np.ndarray]  # index 0..n_layer per the layer contract


class CausalLM:
    def __init__(self, config: ModelConfig, tokenizer: SubwordTokenizer,
                 params: dict[str, np.ndarray]):
        if config.n_vocab != len(tokenizer):
            raise ModelError(
                f"config n_vocab {config.n_vocab} != tokenizer size {len(tokenizer)}")
        expected = set(_param_shapes(config))
        if set(params) != expected:
            missing = sorted(expected - set(params)) + sorted(set(params) - expected)
            raise ModelError(f"parameter set mismatch: {missing}")
        for name, shape in _param_shapes(config).items():
            if params[name].shape != shape:
                raise ModelError(f"{name}: expected shape {shape}, got {params[name].shape}")
        self.config = config
        self.tokenizer = tokenizer
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    # -- full teacher-forced pass ------------------------------------------

    def _block(self, x: np.ndarray, i: int, kv: tuple[np.ndarray, np.ndarray] | None = None):
        """One transformer block; with ``kv`` the input is the new suffix only."""
        p = self.params
        cfg = self.config
        h = _layer_norm(x, p[f"h{i}.ln1.g"], p[f"h{i}.ln1.b"])
        qkv = h @ p[f"h{i}.attn.w_qkv"] + p[f"h{i}.attn.b_qkv"]
        B, T = x.shape[0], x.shape[1]
        q, k, v = np.split(qkv, 3, axis=-1)
        q = q.reshape(B, T, cfg.n_head, cfg.d_head).transpose(0, 2, 1, 3)
        k = k.reshape(B, T, cfg.n_head, cfg.d_head).transpose(0, 2, 1, 3)
        v = v.reshape(B, T, cfg.n_head, cfg.d_head).transpose(0, 2, 1, 3)
        if kv is not None:
            k = np.concatenate([kv[0], k], axis=2)
            v = np.concatenate([kv[1], v], axis=2)
        scores = q @ k.transpose(0, 1, 3, 2) / math.sqrt(cfg.d_head)
        S = k.shape[2]
        # causal mask: query t may attend keys <= t (+ any cached prefix)
        mask = np.tril(np.ones((T, S), dtype=bool), k=S - T)
        scores = np.where(mask, scores, -np.inf)
        w = np.exp(scores - scores.max(axis=-1, keepdims=True))
        w /= w.sum(axis=-1, keepdims=True)
        ctxv = (w @ v).transpose(0, 2, 1, 3).reshape(B, T, cfg.d_model)
        x = x + ctxv @ p[f"h{i}.attn.w_o"] + p[f"h{i}.attn.b_o"]
        h2 = _layer_norm(x, p[f"h{i}.ln2.g"], p[f"h{i}.ln2.b"])
        mlp = _gelu(h2 @ p[f"h{i}.mlp.w_fc"] + p[f"h{i}.mlp.b_fc"])
        x = x + mlp @ p[f"h{i}.mlp.w_proj"] + p[f"h{i}.mlp.b_proj"]
        return x, (k, v)

    def forward(self, tokens: np.ndarray) -> list[np.ndarray]:
        """Layer states for a (batch, T) int array, per the layer contract."""
        tokens = np.asarray(tokens)
        if tokens.ndim != 2:
            raise ModelError(f"tokens must be 2-d (batch, T), got shape {tokens.shape}")
        B, T = tokens.shape
        if T > self.config.n_ctx:
            raise ModelError(f"sequence length {T} exceeds n_ctx {self.config.n_ctx}")
        p = self.params
        states = [p["wte"][tokens]]
        x = states[0] + p["wpe"][:T]
        for i in range(self.config.n_layer):
            x, _ = self._block(x, i)
            states.append(x)
        states[-1] = _layer_norm(x, p["ln_f.g"], p["ln_f.b"])
        return states

    def logits(self, tokens: np.ndarray) -> np.ndarray:
        return self.forward(tokens)[-1] @ self.params["wte"].T

    def log_probs(self, tokens: np.ndarray) -> np.ndarray:
        return log_softmax(self.logits(tokens))

    # -- incremental pass ---------------------------------------------------

    def prefill(self, tokens: np.ndarray, capacity: int) -> tuple[KVCache, np.ndarray]:
        """Run a prefix once, returning its cache and last-position logits."""
        tokens = np.asarray(tokens)
        B, T = tokens.shape
        if capacity < T or capacity > self.config.n_ctx:
            raise ModelError(f"capacity {capacity} outside [{T}, {self.config.n_ctx}]")
        cfg = self.config
        cache = KVCache(
            k=np.zeros((cfg.n_layer, B, cfg.n_head, capacity, cfg.d_head)),
            v=np.zeros((cfg.n_layer, B, cfg.n_head, capacity, cfg.d_head)),
            length=T,
        )
        p = self.params
        x = p["wte"][tokens] + p["wpe"][:T]
        for i in range(cfg.n_layer):
            x, (k, v) = self._block(x, i)
            cache.k[i, :, :, :T] = k
            cache.v[i, :, :, :T] = v
        final = _layer_norm(x[:, -1], p["ln_f.g"], p["ln_f.b"])
        return cache, final @ p["wte"].T

    def step(self, cache: KVCache, token_ids: np.ndarray) -> StepOutput:
        """Append one token per batch row and score the next position."""
        token_ids = np.asarray(token_ids)
        B = cache.batch
        if token_ids.shape != (B,):
            raise ModelError(f"token_ids shape {token_ids.shape} != ({B},)")
        t = cache.length
        if t >= cache.k.shape[3]:
            raise ModelError("cache capacity exhausted")
        p = self.params
        states = [p["wte"][token_ids]]
        x = (states[0] + p["wpe"][t])[:, None, :]  # (B, 1, d)
        for i in range(self.config.n_layer):
            past = (cache.k[i, :, :, :t], cache.v[i, :, :, :t])
            x, (k, v) = self._block(x, i, kv=past)
            cache.k[i, :, :, t] = k[:, :, t]
            cache.v[i, :, :, t] = v[:, :, t]
            states.append(x[:, 0])
        cache.length = t + 1
        states[-1] = _layer_norm(states[-1], p["ln_f.g"], p["ln_f.b"])
        return StepOutput(logits=states[-1] @ p["wte"].T, layer_states=states)

    # -- embeddings ----------------------------------------------------------

    def embedding(self, piece_ids: np.ndarray, layer: int,
                  context: np.ndarray | None = None) -> np.ndarray:
        """Embed pieces at the requested layer.

        Layer 0 ignores ``context``.  Deeper layers place each piece right
        after the shared (1, T) context and return its state there.
        """
        piece_ids = np.asarray(piece_ids)
        if not 0 <= layer <= self.config.n_layer:
            raise ModelError(f"layer {layer} outside [0, {self.config.n_layer}]")
        if layer == 0:
            return self.params["wte"][piece_ids]
        if context is None:
            raise ModelError("contextual embedding needs a context")
        cache, _ = self.prefill(context, capacity=context.shape[1] + 1)
        out = self.step(cache.repeat(len(piece_ids)), piece_ids)
        return out.layer_states[layer]


def _param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {
        "wte": (cfg.n_vocab, cfg.d_model),
        "wpe": (cfg.n_ctx, cfg.d_model),
        "ln_f.g": (cfg.d_model,),
        "ln_f.b": (cfg.d_model,),
    }
    for i in range(cfg.n_layer):
        shapes |= {
            f"h{i}.ln1.g": (cfg.d_model,),
            f"h{i}.ln1.b": (cfg.d_model,),
            f"h{i}.attn.w_qkv": (cfg.d_model, 3 * cfg.d_model),
            f"h{i}.attn.b_qkv": (3 * cfg.d_model,),
            f"h{i}.attn.w_o": (cfg.d_model, cfg.d_model),
            f"h{i}.attn.b_o": (cfg.d_model,),
            f"h{i}.ln2.g": (cfg.d_model,),
            f"h{i}.ln2.b": (cfg.d_model,),
            f"h{i}.mlp.w_fc": (cfg.d_model, 4 * cfg.d_model),
            f"h{i}.mlp.b_fc": (4 * cfg.d_model,),
            f"h{i}.mlp.w_proj": (4 * cfg.d_model, cfg.d_model),
            f"h{i}.mlp.b_proj": (cfg.d_model,),
        }
    return shapes


def init_params(cfg: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Seeded random weights, drawn in sorted-name order for stability."""
    rng = np.random.default_rng(np.random.SeedSequence([0x1A7E, seed]))
    params: dict[str, np.ndarray] = {}
    for name, shape in sorted(_param_shapes(cfg).items()):
        tail = name.rsplit(".", 1)[-1]
        if tail in ("g",):
            params[name] = np.ones(shape)
        elif tail.startswith("b"):
            params[name] = np.zeros(shape)
        elif name == "wte":
            params[name] = rng.normal(0.0, _EMBED_SCALE, shape)
        elif name == "wpe":
            params[name] = rng.normal(0.0, _POS_SCALE, shape)
        else:
            params[name] = rng.normal(0.0, _PROJ_SCALE, shape)
    return params


def build_fixture_model(seed: int = 0, tokenizer: SubwordTokenizer | None = None) -> CausalLM:
    tokenizer = tokenizer or SubwordTokenizer.default()
    cfg = ModelConfig(n_vocab=len(tokenizer))
    return CausalLM(cfg, tokenizer, init_params(cfg, seed))


def save_model(model: CausalLM, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    cfg = model.config
    (path / "config.json").write_text(
        json.dumps({"arch": ARCH, "n_vocab": cfg.n_vocab, "d_model": cfg.d_model,
                    "n_layer": cfg.n_layer, "n_head": cfg.n_head, "n_ctx": cfg.n_ctx})
        + "\n",
        encoding="utf-8",
    )
    model.tokenizer.save(path / "vocab.json")
    np.savez(path / "weights.npz", **model.params)


def load_model(path: str | Path) -> CausalLM:
    path = Path(path)
    obj = json.loads((path / "config.json").read_text(encoding="utf-8"))
    if obj.get("arch") != ARCH:
        raise ModelError(f"unsupported architecture {obj.get('arch')!r}, expected {ARCH!r}")
    cfg = ModelConfig(n_vocab=obj["n_vocab"], d_model=obj["d_model"],
                      n_layer=obj["n_layer"], n_head=obj["n_head"], n_ctx=obj["n_ctx"])
    tokenizer = SubwordTokenizer.load(path / "vocab.json")
    with np.load(path / "weights.npz") as npz:
        params = {k: npz[k] for k in npz.files}
    return CausalLM(cfg, tokenizer, params)


def resolve_model(identifier: str) -> CausalLM:
    """Builtin fixture names or a saved-model directory path."""
    if identifier == "fixture:tiny":
        return build_fixture_model(seed=0)
    if identifier.startswith("fixture:tiny:"):
        return build_fixture_model(seed=int(identifier.rsplit(":", 1)[1]))
    if Path(identifier).is_dir():
        return load_model(identifier)
    raise ModelError(
        f"unknown model {identifier!r}: expected 'fixture:tiny', 'fixture:tiny:<seed>', "
        "or a saved-model directory"
    )
