"""Any-subset masked autoregressive flow with a deep sigmoidal transformer.

One shared dense parameter set serves every subset: masks are applied
multiplicatively at forward time from the node scores in :mod:`.masking`.

Conditioner layout per flow layer::

    input (d) -> hidden_layers x [blocks_per_hidden * block_size] (ELU)
              -> output blocks [output_blocks * d] (ELU, strict masking)
              -> per-variable linear head -> (w_pre, a_pre, b), each dsf_dim long

Output-block node ``blk * d + i`` belongs to variable ``i``; variable ``i``'s
head reads only its own ``output_blocks`` nodes, so autoregressive structure is
decided entirely by the masked layers.
"""
import math

import numpy as np

from . import kernels
from .masking import FansConfig, batch_scores

LOG_2PI = math.log(2.0 * math.pi)
_INV_SOFTPLUS_ONE = math.log(math.e - 1.0)


class TrainingDivergence(FloatingPointError):
    def __init__(self, message, epoch=None, batch=None, mask=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.mask = mask


def _elu(z):
    return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))


def _elu_grad(z):
    return np.where(z > 0, 1.0, np.exp(np.minimum(z, 0.0)))


class FansModel:
    """Parameters plus forward/backward passes.

    ``params`` is an ordered ``dict`` of float64 arrays; the order is the
    serialization order used by checkpoints.
    """

    def __init__(self, config, params=None, seed=0):
        self.config = config
        self.params = params if params is not None else init_params(config, seed)
        self._check_shapes()

    def _check_shapes(self):
        expected = param_shapes(self.config)
        if list(expected) != list(self.params):
            raise ValueError("parameter names do not match the configuration")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {self.params[name].shape}")

    def copy(self):
        return FansModel(self.config, {k: v.copy() for k, v in self.params.items()})

    def num_params(self):
        return sum(v.size for v in self.params.values())

    # -- conditioner -----------------------------------------------------

    def conditioner_forward(self, x, scores, layer=0, keep=False):
        """Per-variable DSF parameters ``(B, d, 3 * dsf_dim)`` for input ``x``.

        ``x`` must already be zero outside each row's subset.
        """
        cfg = self.config
        p = self.params
        pre_list = []
        a = x
        nh = cfg.hidden_layers
        ob_scores = np.tile(scores.output, cfg.output_blocks)
        ob_gate = np.tile(scores.masks, cfg.output_blocks).astype(np.float64)
        hid_gate = scores.hidden_active.astype(np.float64)
        lower = scores.input
        for k in range(nh + 1):
            last = k == nh
            upper = ob_scores if last else scores.hidden
            z = kernels.masked_linear(a, p[f"f{layer}.W{k}"], p[f"f{layer}.b{k}"], lower, upper, strict=last)
            gate = ob_gate if last else hid_gate
            a_in = a
            a = _elu(z) * gate
            pre_list.append((a_in, z, gate, lower, upper, last))
            lower = scores.hidden
        nb = x.shape[0]
        ob = a.reshape(nb, cfg.output_blocks, cfg.d)
        heads = np.einsum("ipk,bki->bip", p[f"f{layer}.headW"], ob, optimize=True) + p[f"f{layer}.headb"]
        cache = (pre_list, ob) if keep else None
        return heads, cache

    def conditioner_backward(self, g_heads, cache, layer, grads, need_input_grad):
        p = self.params
        pre_list, ob = cache
        nb = g_heads.shape[0]
        grads[f"f{layer}.headW"] += np.einsum("bip,bki->ipk", g_heads, ob, optimize=True)
        grads[f"f{layer}.headb"] += g_heads.sum(axis=0)
        g_a = np.einsum("bip,ipk->bki", g_heads, p[f"f{layer}.headW"], optimize=True).reshape(nb, -1)
        for k in range(len(pre_list) - 1, -1, -1):
            a_in, z, gate, lower, upper, strict = pre_list[k]
            delta = g_a * gate * _elu_grad(z)
            if k == 0 and not need_input_grad:
                dw, _ = kernels.masked_linear_backward(delta, a_in, p[f"f{layer}.W{k}"], lower, upper, strict)
                g_a = None
            else:
                dw, g_a = kernels.masked_linear_backward(delta, a_in, p[f"f{layer}.W{k}"], lower, upper, strict)
            grads[f"f{layer}.W{k}"] += dw
            grads[f"f{layer}.b{k}"] += delta.sum(axis=0)
        return g_a

    # -- flow ------------------------------------------------------------

    def transform(self, x, masks):
        """Run the flow on ``x`` under per-row subset ``masks``.

        Returns ``(u, logderiv)``, both ``(B, d)`` and zero outside the subset;
        ``logderiv`` is summed over flow layers.
        """
        masks = _as_masks(masks, x.shape[0], self.config.d)
        scores = batch_scores(masks, self.config)
        m = masks.astype(np.float64)
        h = np.asarray(x, dtype=np.float64) * m
        total = np.zeros_like(h)
        for layer in range(self.config.flow_layers):
            heads, _ = self.conditioner_forward(h, scores, layer)
            u, ld = kernels.dsf_forward(h, heads, self.config.dsf_dim)
            h = u * m
            total += ld * m
        return h, total

    def log_likelihood(self, x, masks):
        """Per-sample ``sum_{i in S} [log N(u_i; 0, 1) + log du_i/dx_i]``."""
        masks = _as_masks(masks, x.shape[0], self.config.d)
        u, ld = self.transform(x, masks)
        m = masks.astype(np.float64)
        return np.sum(m * (-0.5 * u**2 - 0.5 * LOG_2PI) + ld, axis=1)

    def loss_and_grad(self, x, masks):
        """Mean negative masked log-likelihood and its gradient w.r.t. every parameter."""
        cfg = self.config
        nb = x.shape[0]
        masks = _as_masks(masks, nb, cfg.d)
        scores = batch_scores(masks, cfg)
        m = masks.astype(np.float64)
        h = np.asarray(x, dtype=np.float64) * m
        layers = []
        ld_total = np.zeros_like(h)
        for layer in range(cfg.flow_layers):
            heads, cache = self.conditioner_forward(h, scores, layer, keep=True)
            u, ld = kernels.dsf_forward(h, heads, cfg.dsf_dim)
            layers.append((h, heads, cache))
            h = u * m
            ld_total += ld * m
        ll = np.sum(m * (-0.5 * h**2 - 0.5 * LOG_2PI) + ld_total, axis=1)
        loss = -float(np.mean(ll))
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        gu = h * m / nb
        gld = -m / nb
        for layer in range(cfg.flow_layers - 1, -1, -1):
            x_in, heads, cache = layers[layer]
            g_heads, g_x = kernels.dsf_backward(x_in, heads, cfg.dsf_dim, gu, gld)
            need = layer > 0
            g_in = self.conditioner_backward(g_heads, cache, layer, grads, need)
            if need:
                gu = (g_x + g_in) * m
        return loss, grads


def _as_masks(masks, nb, d):
    masks = np.asarray(masks)
    if masks.ndim == 1:
        masks = np.broadcast_to(masks, (nb, d))
    if masks.shape != (nb, d):
        raise ValueError(f"mask shape {masks.shape} does not match batch ({nb}, {d})")
    return masks.astype(bool)


def param_shapes(config):
    shapes = {}
    d, nh, hsize = config.d, config.hidden_layers, config.hidden_size
    ob = config.output_blocks * d
    for layer in range(config.flow_layers):
        fan_in = d
        for k in range(nh + 1):
            fan_out = ob if k == nh else hsize
            shapes[f"f{layer}.W{k}"] = (fan_out, fan_in)
            shapes[f"f{layer}.b{k}"] = (fan_out,)
            fan_in = fan_out
        shapes[f"f{layer}.headW"] = (d, 3 * config.dsf_dim, config.output_blocks)
        shapes[f"f{layer}.headb"] = (d, 3 * config.dsf_dim)
    return shapes


def init_params(config, seed):
    """Variance-scaled uniform weights; heads start near the identity transform."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params = {}
    k = config.dsf_dim
    for name, shape in param_shapes(config).items():
        if ".W" in name:
            lim = math.sqrt(3.0 / shape[1])
            params[name] = rng.uniform(-lim, lim, shape)
        elif name.endswith("headW"):
            lim = 0.1 * math.sqrt(3.0 / shape[2])
            params[name] = rng.uniform(-lim, lim, shape)
        elif name.endswith("headb"):
            hb = np.zeros(shape)
            hb[:, :k] = rng.uniform(-0.01, 0.01, (shape[0], k))
            hb[:, k:2 * k] = _INV_SOFTPLUS_ONE
            params[name] = hb
        else:
            params[name] = np.zeros(shape)
    return params


def build_model(d, seed=0, **overrides):
    return FansModel(FansConfig.defaults_for(d, **overrides), seed=seed)
