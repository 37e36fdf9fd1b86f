"""
Decoder-only transformer over frame-ordered object sequences

The sequence is ``<bos>`` followed by the objects of each frame in frame
order. Attention uses the frame causal mask: a token sees every token of a
strictly earlier frame plus itself, never its same-frame peers, so the
output is equivariant to any reordering of objects inside one frame.

Temporal sin/cos encodings are added to the tokens once before the first
layer; spatial box encodings are added to the key/value inputs of every
attention sub-layer.
"""
import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from src.operators.tokenizer import RAW_DIM
from src.utils.errors import DataError, NumericError

BOS_FRAME = -1
MASK_TYPES = ("frame_causal", "causal")


@dataclass
class ModelConfig:
    """Structure parameters; ffn_dim 0 means 4 * d_model"""

    d_model: int = 512
    n_layers: int = 6
    n_heads: int = 8
    ffn_dim: int = 0
    max_window: int = 128
    activation: str = "gelu"
    norm_eps: float = 1e-6
    dropout: float = 0.0
    attention_mask: str = "frame_causal"
    temporal_encoding: bool = True
    spatial_encoding: bool = True
    final_norm: bool = True
    output_bias: bool = True

    def __post_init__(self):
        if self.ffn_dim == 0:
            self.ffn_dim = 4 * self.d_model
        if min(self.d_model, self.n_layers, self.n_heads, self.ffn_dim, self.max_window) < 1:
            raise ValueError(f"all sizes must be >= 1: {self}")
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.d_model % 4:
            raise ValueError(f"d_model={self.d_model} must be divisible by 4 for the box encoding")
        if self.attention_mask not in MASK_TYPES:
            raise ValueError(f"attention_mask must be one of {MASK_TYPES}, got {self.attention_mask!r}")
        if self.activation not in ("gelu", "relu"):
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def head_dim(self):
        return self.d_model // self.n_heads


@dataclass
class RawSequence:
    """
    Objects of a clip or window before tokenization (no <bos>)

    raw: (m, 12288) patch vectors; frame_index: (m,) window-relative frame
    positions, non-decreasing; norm_box: (m, 4) normalized boxes; track_id: (m,)
    """

    raw: torch.Tensor
    frame_index: torch.Tensor
    norm_box: torch.Tensor
    track_id: torch.Tensor

    def __len__(self):
        return self.raw.shape[0]


@dataclass
class TokenSequence:
    """<bos> followed by object tokens; see RawSequence for the per-token fields"""

    tokens: torch.Tensor
    frame_index: torch.Tensor
    norm_box: torch.Tensor
    track_id: torch.Tensor = field(default=None)

    def __post_init__(self):
        n = self.tokens.shape[0]
        if self.track_id is None:
            self.track_id = torch.full((n,), -1, dtype=torch.long)
        if self.frame_index.shape != (n,) or self.norm_box.shape != (n, 4) or self.track_id.shape != (n,):
            raise DataError("token, frame_index, norm_box and track_id lengths differ")
        if n == 0 or int(self.frame_index[0]) != BOS_FRAME or bool(self.tokens[0].any()):
            raise DataError("sequence must start with the all-zero <bos> token at frame -1")
        if n > 1 and bool((self.frame_index[1:] < self.frame_index[:-1]).any()):
            raise DataError("frame_index must be non-decreasing")

    def __len__(self):
        return self.tokens.shape[0]

    def permuted(self, order):
        """Reorder tokens by ``order`` (a permutation of range(len(self)) fixing index 0)."""
        order = torch.as_tensor(order, dtype=torch.long)
        return TokenSequence(self.tokens[order], self.frame_index[order], self.norm_box[order], self.track_id[order])


def build_frame_causal_mask(frame_index):
    """allowed[i, j] = frame[j] < frame[i] or i == j (True means attention is allowed)."""
    frame_index = torch.as_tensor(np.asarray(frame_index), dtype=torch.long)
    n = frame_index.shape[0]
    earlier = frame_index[None, :] < frame_index[:, None]
    return earlier | torch.eye(n, dtype=torch.bool)


def build_causal_mask(n):
    """Token-level lower-triangular mask, the ablation baseline."""
    return torch.tril(torch.ones(n, n, dtype=torch.bool))


def temporal_encoding(frame_index, d_model):
    """
    Interleaved sin/cos encoding (base 10000) of integer frame positions

    Rows with frame_index < 0 (the <bos> sentinel) are zero.
    """
    frame_index = torch.as_tensor(frame_index)
    pos = frame_index.to(torch.float64).reshape(-1, 1)
    i = torch.arange(0, d_model, 2, dtype=torch.float64)
    angle = pos / torch.pow(10000.0, i / d_model)
    enc = torch.zeros(pos.shape[0], d_model, dtype=torch.float64)
    enc[:, 0::2] = torch.sin(angle)
    enc[:, 1::2] = torch.cos(angle[:, : d_model // 2])
    enc[frame_index.reshape(-1) < 0] = 0.0
    return enc


def _sine_1d(values, dim):
    i = torch.arange(dim, dtype=torch.float64)
    scale = torch.pow(20.0, 2.0 * torch.div(i, 2, rounding_mode="floor") / dim)
    angle = values.reshape(-1, 1) * (2.0 * math.pi) / scale
    return torch.where(i.long() % 2 == 0, torch.sin(angle), torch.cos(angle))


def spatial_encoding(norm_box, d_model, valid=None):
    """
    Box encoding: each of (cx, cy, w, h) gets d_model/4 interleaved sin/cos dims
    (base 20, coordinate scaled by 2*pi), concatenated in that order

    Rows where ``valid`` is False (the <bos> token) are zero.
    """
    if d_model % 4:
        raise ValueError(f"d_model={d_model} must be divisible by 4")
    norm_box = torch.as_tensor(norm_box, dtype=torch.float64).reshape(-1, 4)
    dim = d_model // 4
    enc = torch.cat([_sine_1d(norm_box[:, k], dim) for k in range(4)], dim=1)
    if valid is not None:
        enc[~torch.as_tensor(valid, dtype=torch.bool)] = 0.0
    return enc


class FrameCausalAttention(nn.Module):
    """Multi-head self-attention with box encodings added to the K/V inputs only"""

    def __init__(self, config):
        super().__init__()
        d = config.d_model
        self.n_heads = config.n_heads
        self.head_dim = config.head_dim
        self.wq = nn.Linear(d, d, bias=False)
        self.wk = nn.Linear(d, d, bias=False)
        self.wv = nn.Linear(d, d, bias=False)
        self.wo = nn.Linear(d, d, bias=False)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, x, pos, allowed, return_attention=False):
        n, d = x.shape
        kv_input = x + pos
        q = self.wq(x).view(n, self.n_heads, self.head_dim).transpose(0, 1)
        k = self.wk(kv_input).view(n, self.n_heads, self.head_dim).transpose(0, 1)
        v = self.wv(kv_input).view(n, self.n_heads, self.head_dim).transpose(0, 1)

        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        scores = scores.masked_fill(~allowed, float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        out = (self.dropout(attn) @ v).transpose(0, 1).reshape(n, d)
        out = self.wo(out)
        return (out, attn) if return_attention else out


class FeedForward(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.fc1 = nn.Linear(config.d_model, config.ffn_dim)
        self.fc2 = nn.Linear(config.ffn_dim, config.d_model)
        self.act = nn.GELU() if config.activation == "gelu" else nn.ReLU()
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, x):
        return self.fc2(self.dropout(self.act(self.fc1(x))))


class DecoderLayer(nn.Module):
    """Pre-norm attention + FFN with a residual around each"""

    def __init__(self, config):
        super().__init__()
        self.attn_norm = nn.RMSNorm(config.d_model, eps=config.norm_eps)
        self.attn = FrameCausalAttention(config)
        self.ffn_norm = nn.RMSNorm(config.d_model, eps=config.norm_eps)
        self.ffn = FeedForward(config)

    def forward(self, x, pos, allowed, return_attention=False):
        h, attn = self.attn(self.attn_norm(x), pos, allowed, return_attention=True)
        x = x + h
        x = x + self.ffn(self.ffn_norm(x))
        return (x, attn) if return_attention else x


class PuTR(nn.Module):
    """
    Patch embedding + decoder stack + output projection

    ``embed`` maps raw 12288-long patch vectors to tokens; ``forward`` maps a
    TokenSequence to an aligned (n_S, d_model) embedding matrix.
    """

    def __init__(self, config):
        super().__init__()
        self.config = config
        self.embed = nn.Linear(RAW_DIM, config.d_model)
        self.layers = nn.ModuleList([DecoderLayer(config) for _ in range(config.n_layers)])
        self.final_norm = nn.RMSNorm(config.d_model, eps=config.norm_eps) if config.final_norm else nn.Identity()
        self.out_proj = nn.Linear(config.d_model, config.d_model, bias=config.output_bias)

    def tokenize(self, raw_seq):
        """Embed the objects of a RawSequence and prepend <bos>."""
        d = self.config.d_model
        dtype = self.embed.weight.dtype
        tokens = self.embed(raw_seq.raw.to(dtype))
        bos = torch.zeros(1, d, dtype=dtype)
        return TokenSequence(
            torch.cat([bos, tokens], dim=0),
            torch.cat([torch.tensor([BOS_FRAME]), raw_seq.frame_index.long()]),
            torch.cat([torch.zeros(1, 4, dtype=torch.float64), raw_seq.norm_box.to(torch.float64)]),
            torch.cat([torch.tensor([-1]), raw_seq.track_id.long()]),
        )

    def attention_mask(self, frame_index):
        if self.config.attention_mask == "causal":
            return build_causal_mask(frame_index.shape[0])
        return build_frame_causal_mask(frame_index)

    def forward(self, seq, return_attention=False):
        config = self.config
        if seq.tokens.ndim != 2 or seq.tokens.shape[1] != config.d_model:
            raise DataError(f"tokens must be (n, {config.d_model}), got {tuple(seq.tokens.shape)}")
        if int(seq.frame_index.max()) >= config.max_window:
            raise DataError(f"frame index {int(seq.frame_index.max())} exceeds max_window={config.max_window}")

        dtype = self.embed.weight.dtype
        valid = seq.frame_index >= 0
        x = seq.tokens.to(dtype)
        if config.temporal_encoding:
            x = x + temporal_encoding(seq.frame_index, config.d_model).to(dtype)
        if config.spatial_encoding:
            pos = spatial_encoding(seq.norm_box, config.d_model, valid).to(dtype)
        else:
            pos = torch.zeros_like(x)
        allowed = self.attention_mask(seq.frame_index)

        attentions = []
        for layer in self.layers:
            x, attn = layer(x, pos, allowed, return_attention=True)
            attentions.append(attn)
        z = self.out_proj(self.final_norm(x))
        if not torch.isfinite(z).all():
            self.assert_finite()
            raise NumericError("non-finite output embeddings")
        return (z, attentions) if return_attention else z

    def assert_finite(self):
        for name, p in self.named_parameters():
            if not torch.isfinite(p).all():
                raise NumericError(f"parameter {name} holds non-finite values")

    def numpy_state(self):
        return {name: t.detach().cpu().numpy().astype(np.float32) for name, t in self.state_dict().items()}

    def load_numpy_state(self, params):
        dtype = self.embed.weight.dtype
        self.load_state_dict({name: torch.from_numpy(np.array(a)).to(dtype) for name, a in params.items()})
        return self


def build_model(config, seed=0):
    """Construct a PuTR with deterministic initialization, leaving the global RNG untouched."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = PuTR(config)
    return model


def parameter_shapes(config):
    """Name -> shape of every array a checkpoint for ``config`` must hold."""
    with torch.device("meta"):
        model = PuTR(config)
    return {name: tuple(t.shape) for name, t in model.state_dict().items()}


def save_model(path, model):
    from src.problem.checkpoint import checkpoint_save

    return checkpoint_save(path, model.numpy_state(), model.config)


def load_model(path, config=None):
    from src.problem.checkpoint import checkpoint_load

    config, params = checkpoint_load(path, config)
    model = PuTR(config).load_numpy_state(params)
    model.assert_finite()
    return model.eval()


def loss_and_gradients(model, batch, targets):
    """
    Batch loss and its exact gradient for every parameter

    Args:
        model: PuTR
        batch: list of RawSequence, one per clip
        targets: list (per clip) of FramePairTargets lists from build_targets

    Returns:
        (loss as float, {parameter name: gradient array})
    """
    from src.algorithms.utils import batch_loss

    model.zero_grad(set_to_none=True)
    loss = batch_loss(model, batch, targets)
    if not torch.isfinite(loss):
        raise NumericError(f"non-finite loss {loss.item()}")
    if loss.requires_grad:
        loss.backward()
    grads = {}
    for name, p in model.named_parameters():
        grad = p.grad if p.grad is not None else torch.zeros_like(p)
        grads[name] = grad.detach().cpu().numpy().copy()
    return float(loss.item()), grads
