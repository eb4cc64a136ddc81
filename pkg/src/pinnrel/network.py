"""Fully connected tanh network and hard-constraint output transforms.

The forward pass and the output transforms are written against the generic
arithmetic of :mod:`pinnrel.autodiff`, so one code path serves three uses:

* plain numpy arrays  -> fast batched prediction,
* Jets of numpy       -> input derivatives for residual checks,
* Jets of Tensors     -> training (input derivatives that remain
  parameter-differentiable).

Hard-constraint transforms wrap the raw network output so the benchmark's
initial/boundary conditions hold identically for any parameter values:

* ``decay``    u_hat = t * net(t, Z) + u0
* ``burgers``  u_hat = (1 - x)(1 + x) t * net(x, t/t_max, delta) + u_init(x, delta)
               with u_init(x, delta) = -1 + (1 - x)(1 + delta/2)
* ``cascade``  e1 = t * n1,  e2 = t * n2 + 1,  e3 = t * n3
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Jet, Tensor, tanh
from .stochastic import make_rng

__all__ = [
    "NetworkParams",
    "Surrogate",
    "init_params",
    "forward",
    "net_apply",
    "mlp_jet",
    "fused_net_apply",
    "TRANSFORMS",
]

TRANSFORMS = ("decay", "burgers", "cascade")


@dataclass
class NetworkParams:
    """Layer sizes plus per-layer weight matrices (n_in x n_out) and biases."""

    layer_sizes: tuple
    weights: list
    biases: list
    hidden_activation: str = "tanh"
    output_activation: str = "linear"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 3 or any(s <= 0 for s in sizes):
            raise ValueError(f"invalid layer sizes {sizes}")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("weights/biases count must equal number of layers - 1")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i], sizes[i + 1]):
                raise ValueError(
                    f"weight {i} has shape {w.shape}, expected {(sizes[i], sizes[i + 1])}"
                )
            if b.shape != (sizes[i + 1],):
                raise ValueError(f"bias {i} has shape {b.shape}")
        if self.hidden_activation != "tanh" or self.output_activation != "linear":
            raise ValueError("only tanh hidden / linear output activations supported")
        self.layer_sizes = sizes

    @property
    def n_inputs(self):
        return self.layer_sizes[0]

    @property
    def n_outputs(self):
        return self.layer_sizes[-1]

    @property
    def parameter_count(self):
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def leaves(self):
        """Parameter arrays in a fixed order (W0, b0, W1, b1, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def flatten(self):
        return np.concatenate([leaf.ravel() for leaf in self.leaves()])

    @classmethod
    def unflatten(cls, layer_sizes, theta):
        sizes = tuple(int(s) for s in layer_sizes)
        theta = np.asarray(theta, dtype=np.float64)
        weights, biases, pos = [], [], 0
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            weights.append(theta[pos : pos + n_in * n_out].reshape(n_in, n_out).copy())
            pos += n_in * n_out
            biases.append(theta[pos : pos + n_out].copy())
            pos += n_out
        if pos != theta.size:
            raise ValueError(
                f"flat parameter vector has {theta.size} entries, expected {pos}"
            )
        return cls(sizes, weights, biases)


def init_params(layer_sizes, seed):
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 3 or any(s <= 0 for s in sizes):
        raise ValueError(f"invalid layer sizes {sizes}")
    rng = make_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-limit, limit, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    return NetworkParams(sizes, weights, biases)


def net_apply(weights, biases, x):
    """Layer recursion: tanh hidden layers, linear output.

    ``x`` may be a numpy array (n, d) or a Jet; ``weights``/``biases`` may be
    numpy arrays or Tensors.
    """
    h = x
    for w, b in zip(weights[:-1], biases[:-1]):
        h = tanh(h @ w + b)
    return h @ weights[-1] + biases[-1]


def forward(params, x):
    """Plain numpy forward pass; accepts (d,) or (n, d)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != params.n_inputs:
        raise ValueError(
            f"input has {x.shape[1]} columns, network expects {params.n_inputs}"
        )
    out = net_apply(params.weights, params.biases, x)
    return out[0] if single else out


def mlp_jet(weights, biases, x, seeds, orders):
    """Fused jet propagation through a tanh MLP, with a hand-written VJP.

    ``x`` is the (n, d) input matrix; ``seeds`` maps a direction key to the
    (d,) derivative of the input columns along that direction; ``orders``
    gives 1 or 2 per direction.  Input second derivatives are assumed zero
    (network inputs are affine in the coordinates).

    Returns a Jet whose components are slices of one packed array: plain
    numpy if all parameters are numpy, or slices of a single Tensor node
    whose backward pass is the fused reverse sweep (much cheaper than taping
    every intermediate).  The forward recursion here is the same layer
    recursion as :func:`net_apply`; equality of values, derivatives and
    parameter gradients against the generic taped path is covered by tests.
    """
    ws = [w.value if isinstance(w, Tensor) else np.asarray(w, dtype=np.float64) for w in weights]
    bs = [b.value if isinstance(b, Tensor) else np.asarray(b, dtype=np.float64) for b in biases]
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    dirs = list(seeds)
    d2 = [k for k in dirs if orders[k] == 2]
    n_layers = len(ws)

    v = x
    p = {k: np.broadcast_to(np.asarray(seeds[k], dtype=np.float64), (n, d)) for k in dirs}
    s = {k: None for k in d2}  # None is a structural zero
    stored = []
    for layer in range(n_layers):
        w, b = ws[layer], bs[layer]
        a = v @ w + b
        ap = {k: p[k] @ w for k in dirs}
        a_s = {k: (s[k] @ w if s[k] is not None else None) for k in d2}
        if layer < n_layers - 1:
            vn = np.tanh(a)
            t1 = 1.0 - vn * vn
            t2 = -2.0 * vn * t1
            stored.append(
                dict(vprev=v, pprev=p, sprev=s, ap=ap, a_s=a_s, vn=vn, t1=t1, t2=t2, hidden=True)
            )
            v = vn
            p = {k: t1 * ap[k] for k in dirs}
            s = {
                k: t2 * ap[k] * ap[k] + (t1 * a_s[k] if a_s[k] is not None else 0.0)
                for k in d2
            }
        else:
            stored.append(dict(vprev=v, pprev=p, sprev=s, hidden=False))
            v = a
            p = ap
            s = {k: (a_s[k] if a_s[k] is not None else np.zeros_like(a)) for k in d2}

    slots = {"value": 0}
    comps = [v]
    for k in dirs:
        slots[("d1", k)] = len(comps)
        comps.append(p[k])
    for k in d2:
        slots[("d2", k)] = len(comps)
        comps.append(s[k])
    packed = np.stack(comps)

    traced = any(isinstance(t, Tensor) for t in list(weights) + list(biases))
    if not traced:
        out = packed
    else:

        def fused_backward(g):
            g_v = g[0]
            g_p = {k: g[slots[("d1", k)]] for k in dirs}
            g_s = {k: g[slots[("d2", k)]] for k in d2}
            g_ws = [None] * n_layers
            g_bs = [None] * n_layers
            for layer in reversed(range(n_layers)):
                st = stored[layer]
                if st["hidden"]:
                    t1, t2, vn = st["t1"], st["t2"], st["vn"]
                    ap, a_s = st["ap"], st["a_s"]
                    t2p = (6.0 * vn * vn - 2.0) * t1
                    g_a = g_v * t1
                    for k in dirs:
                        g_a = g_a + g_p[k] * t2 * ap[k]
                    for k in d2:
                        term = t2p * ap[k] * ap[k]
                        if a_s[k] is not None:
                            term = term + t2 * a_s[k]
                        g_a = g_a + g_s[k] * term
                    g_ap = {k: g_p[k] * t1 for k in dirs}
                    for k in d2:
                        g_ap[k] = g_ap[k] + g_s[k] * 2.0 * t2 * ap[k]
                    g_as = {k: g_s[k] * t1 for k in d2}
                else:
                    g_a, g_ap, g_as = g_v, g_p, g_s
                gw = st["vprev"].T @ g_a
                for k in dirs:
                    gw = gw + st["pprev"][k].T @ g_ap[k]
                for k in d2:
                    if st["sprev"][k] is not None:
                        gw = gw + st["sprev"][k].T @ g_as[k]
                g_ws[layer] = gw
                g_bs[layer] = g_a.sum(axis=0)
                if layer > 0:
                    wt = ws[layer].T
                    g_v = g_a @ wt
                    g_p = {k: g_ap[k] @ wt for k in dirs}
                    g_s = {k: g_as[k] @ wt for k in d2}
            return g_ws, g_bs

        cache = {}

        def grads_for(g):
            if cache.get("g") is not g:
                cache["g"] = g
                cache["val"] = fused_backward(g)
            return cache["val"]

        parents = []
        for i, w in enumerate(weights):
            if isinstance(w, Tensor):
                parents.append((w, lambda g, i=i: grads_for(g)[0][i]))
        for i, b in enumerate(biases):
            if isinstance(b, Tensor):
                parents.append((b, lambda g, i=i: grads_for(g)[1][i]))
        out = Tensor(packed, parents=tuple(parents))

    return Jet(
        out[slots["value"]],
        {k: out[slots[("d1", k)]] for k in dirs},
        {k: out[slots[("d2", k)]] for k in d2},
    )


def _is_jet(c):
    return isinstance(c, Jet)


def fused_net_apply(weights, biases, cols):
    """``net_apply`` over coordinate columns, fused when the inputs allow it.

    Columns whose jet components are plain numpy arrays (the training and
    residual-check case) are packed into one input matrix plus per-direction
    seed matrices and run through :func:`mlp_jet`.  Anything else falls back
    to the generic recursion.
    """
    if not any(_is_jet(c) for c in cols):
        return net_apply(weights, biases, _stack_columns(cols))
    jets = [c if _is_jet(c) else Jet.constant(c) for c in cols]
    comps = [j.value for j in jets]
    for j in jets:
        comps.extend(j.d1.values())
        comps.extend(j.d2.values())
    if any(isinstance(c, Tensor) for c in comps):
        return net_apply(weights, biases, _stack_columns(cols))

    d = len(jets)
    values = [np.asarray(j.value, dtype=np.float64).reshape(-1, 1) for j in jets]
    n = max(v.shape[0] for v in values)
    x = np.hstack([np.broadcast_to(v, (n, 1)) for v in values])
    dirs = sorted(set().union(*(j.d1 for j in jets)))
    orders = {k: 2 if any(k in j.d2 for j in jets) else 1 for k in dirs}
    seeds = {}
    for k in dirs:
        m = np.zeros((n, d))
        for jcol, jet in enumerate(jets):
            c = jet.d1.get(k, 0.0)
            if not (isinstance(c, float) and c == 0.0):
                m[:, jcol] = np.asarray(c, dtype=np.float64).reshape(-1)
        seeds[k] = m
    return mlp_jet(weights, biases, x, seeds, orders)


def _stack_columns(cols):
    if any(_is_jet(c) for c in cols):
        jets = [c if _is_jet(c) else Jet.constant(c) for c in cols]
        return Jet.hstack(jets)
    n = max(np.asarray(c).reshape(-1, 1).shape[0] for c in cols)
    return np.hstack(
        [np.broadcast_to(np.asarray(c, dtype=np.float64).reshape(-1, 1), (n, 1)) for c in cols]
    )


@dataclass
class Surrogate:
    """Trained (or raw) network plus a benchmark output transform.

    ``constants`` carries the fixed numbers the transform needs (``u0`` for
    decay, ``t_scale`` for the Burgers internal time scaling).
    """

    params: NetworkParams
    transform: str
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform id {self.transform!r}")
        expected_inputs = {"decay": 2, "burgers": 3, "cascade": 7}[self.transform]
        expected_outputs = {"decay": 1, "burgers": 1, "cascade": 3}[self.transform]
        if self.params.n_inputs != expected_inputs:
            raise ValueError(
                f"{self.transform} transform needs {expected_inputs} network inputs"
            )
        if self.params.n_outputs != expected_outputs:
            raise ValueError(
                f"{self.transform} transform needs {expected_outputs} network outputs"
            )

    @property
    def n_outputs(self):
        return self.params.n_outputs

    def apply(self, cols, weights=None, biases=None):
        """Constrained outputs for coordinate columns (arrays or Jets).

        Column order: decay (t, Z); burgers (x, t, delta);
        cascade (t, Z1..Z6).  Returns a list of output columns, one per
        response component.
        """
        w = self.params.weights if weights is None else weights
        b = self.params.biases if biases is None else biases
        if self.transform == "decay":
            t, z = cols
            u_nn = fused_net_apply(w, b, [t, z])
            return [t * u_nn + self.constants.get("u0", 1.0)]
        if self.transform == "burgers":
            x, t, delta = cols
            t_scale = self.constants.get("t_scale", 0.1)
            u_nn = fused_net_apply(w, b, [x, t * t_scale, delta])
            ic = -1.0 + (1.0 - x) * (1.0 + delta * 0.5)
            return [(1.0 - x) * (1.0 + x) * t * u_nn + ic]
        # cascade
        t = cols[0]
        out = fused_net_apply(w, b, cols)
        if _is_jet(out):
            n1, n2, n3 = out.col(0), out.col(1), out.col(2)
        else:
            n1, n2, n3 = out[:, [0]], out[:, [1]], out[:, [2]]
        return [t * n1, t * n2 + 1.0, t * n3]

    def __call__(self, coords):
        """Numpy prediction: coords (n, d) or (d,) -> (n, k) or (k,) values."""
        coords = np.asarray(coords, dtype=np.float64)
        single = coords.ndim == 1
        if single:
            coords = coords[None, :]
        cols = [coords[:, [j]] for j in range(coords.shape[1])]
        outs = np.hstack(self.apply(cols))
        return outs[0] if single else outs
