"""Recurrent network architectures as discrete-time dynamical systems.

Every model is described by

    x_{k+1} = f(x_k, u_k; theta)
    y_k     = g(x_k; theta)

with all weights flattened into a single real vector, so that the whole
network can be treated as the decision variable of a nonlinear
least-squares problem.  Five kinds are supported:

* ``lstm``   -- single-layer LSTM (forget/input/output gates, tanh
  candidate), affine readout of the hidden state.
* ``gru``    -- single-layer GRU (update/reset gates), affine readout.
* ``esn``    -- leaky-integrator echo state network; the reservoir is
  generated once and frozen, only the affine readout is trainable.
* ``nnarx``  -- one-hidden-layer feedforward map over the last ``p``
  measured inputs and outputs; the state is the regressor itself.
* ``linear`` -- stateless map y = K u, mainly useful as an analytically
  solvable stand-in in tests and diagnostics.

Gradients of windowed squared-error losses are computed by exact
backward accumulation through the unrolled recursion (no truncation).
All functions are pure; sequences may carry a batch axis so that many
rollouts share one vectorized pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json

import numpy as np

KINDS = ("lstm", "gru", "esn", "nnarx", "linear")

# Pre-activations are clamped here before sigmoids/tanh; a no-op in the
# benchmark's operating range, it only guards against overflow blow-ups.
CLIP = 50.0


class DimensionError(ValueError):
    """An argument's shape does not match the model spec."""


class NumericalBlowupError(FloatingPointError):
    """A rollout produced non-finite values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class ModelSpec:
    """Architecture descriptor: which f/g family and its dimensions."""

    kind: str
    n_u: int
    n_h: int
    n_y: int
    # nnarx only
    order: int = 0
    mlp_width: int = 0
    # esn only
    spectral_radius: float = 0.9
    leak_rate: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.n_u < 1 or self.n_y < 1:
            raise ValueError("n_u and n_y must be >= 1")
        if self.kind in ("lstm", "gru", "esn") and self.n_h < 1:
            raise ValueError("n_h must be >= 1 for recurrent kinds")
        if self.kind == "nnarx" and (self.order < 1 or self.mlp_width < 1):
            raise ValueError("nnarx needs order >= 1 and mlp_width >= 1")
        if self.kind == "esn" and not (0.0 < self.spectral_radius < 1.0):
            raise ValueError("esn spectral radius target must lie in (0, 1)")

    def to_dict(self):
        return {
            "kind": self.kind, "n_u": self.n_u, "n_h": self.n_h,
            "n_y": self.n_y, "order": self.order, "mlp_width": self.mlp_width,
            "spectral_radius": self.spectral_radius, "leak_rate": self.leak_rate,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def state_size(spec: ModelSpec) -> int:
    """Length of the model state vector for this spec."""
    if spec.kind == "lstm":
        return 2 * spec.n_h          # [cell, hidden]
    if spec.kind in ("gru", "esn"):
        return spec.n_h
    if spec.kind == "nnarx":
        return spec.order * (spec.n_u + spec.n_y)
    return 0                          # linear


def _layout(spec: ModelSpec):
    """Mapping name -> (slice, shape) into the flat parameter vector.

    Trainable blocks come first so that ``param_count`` is a prefix
    length; for the ESN the frozen reservoir blocks follow the readout.
    """
    blocks = []
    if spec.kind == "lstm":
        nz = spec.n_u + spec.n_h
        for gate in ("f", "i", "o", "c"):
            blocks += [(f"W{gate}", (spec.n_h, nz)), (f"b{gate}", (spec.n_h,))]
        blocks += [("C", (spec.n_y, spec.n_h)), ("d", (spec.n_y,))]
    elif spec.kind == "gru":
        nz = spec.n_u + spec.n_h
        for gate in ("z", "r", "n"):
            blocks += [(f"W{gate}", (spec.n_h, nz)), (f"b{gate}", (spec.n_h,))]
        blocks += [("C", (spec.n_y, spec.n_h)), ("d", (spec.n_y,))]
    elif spec.kind == "esn":
        blocks += [("C", (spec.n_y, spec.n_h)), ("d", (spec.n_y,)),
                   ("Win", (spec.n_h, spec.n_u)), ("W", (spec.n_h, spec.n_h)),
                   ("bres", (spec.n_h,))]
    elif spec.kind == "nnarx":
        reg = spec.order * (spec.n_u + spec.n_y)
        blocks += [("W1", (spec.mlp_width, reg)), ("b1", (spec.mlp_width,)),
                   ("W2", (spec.n_y, spec.mlp_width)), ("b2", (spec.n_y,))]
    else:  # linear
        blocks += [("K", (spec.n_y, spec.n_u))]
    out, off = {}, 0
    for name, shape in blocks:
        n = int(np.prod(shape))
        out[name] = (slice(off, off + n), shape)
        off += n
    return out, off


def param_count(spec: ModelSpec) -> int:
    """Number of trainable scalars (ESN: readout only)."""
    layout, total = _layout(spec)
    if spec.kind == "esn":
        return spec.n_y * (spec.n_h + 1)
    return total


def values_size(spec: ModelSpec) -> int:
    """Length of the stored parameter vector, frozen entries included."""
    return _layout(spec)[1]


def trainable_mask(spec: ModelSpec) -> np.ndarray:
    """Boolean mask over the stored vector: True where a decision variable."""
    mask = np.zeros(values_size(spec), dtype=bool)
    mask[: param_count(spec)] = True
    return mask


@dataclass
class ParamVector:
    """Flat weight vector tied to its spec.  Immutable by convention."""

    spec: ModelSpec
    values: np.ndarray
    seed: int | None = None
    scheme: str | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (values_size(self.spec),):
            raise DimensionError(
                f"expected {values_size(self.spec)} values, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("parameter vector contains non-finite entries")

    def view(self, name):
        sl, shape = _layout(self.spec)[0][name]
        return self.values[sl].reshape(shape)

    def replace_values(self, values) -> "ParamVector":
        return ParamVector(self.spec, np.array(values, dtype=float),
                           seed=self.seed, scheme=self.scheme)

    def to_json(self, created_at=None) -> str:
        return json.dumps({
            "spec": self.spec.to_dict(),
            "values": [float(v) for v in self.values],
            "seed": self.seed,
            "scheme": self.scheme,
            "created_at": created_at,
        })

    @classmethod
    def from_json(cls, text) -> "ParamVector":
        d = json.loads(text)
        return cls(ModelSpec.from_dict(d["spec"]), np.array(d["values"]),
                   seed=d.get("seed"), scheme=d.get("scheme"))


def init_params(spec: ModelSpec, seed: int, scheme: str = "uniform") -> ParamVector:
    """Deterministic weight initialization.

    Schemes: ``zeros`` and ``uniform`` (U(-r, r) with r = 1/sqrt(fan_in)
    per matrix, biases zero).  For the ESN the reservoir is always drawn
    and rescaled so its spectral radius equals the spec target; the
    chosen scheme only affects the readout.
    """
    if scheme not in ("zeros", "uniform"):
        raise ValueError(f"unknown init scheme {scheme!r}")
    rng = np.random.default_rng(seed)
    layout, total = _layout(spec)
    values = np.zeros(total)
    for name, (sl, shape) in layout.items():
        if name in ("Win", "W", "bres"):
            continue  # reservoir handled below
        if scheme == "uniform" and len(shape) == 2:
            r = 1.0 / np.sqrt(shape[1])
            values[sl] = rng.uniform(-r, r, size=sl.stop - sl.start)
    if spec.kind == "esn":
        sl, shape = layout["Win"]
        values[sl] = rng.uniform(-0.5, 0.5, size=sl.stop - sl.start)
        sl, shape = layout["W"]
        W = rng.normal(size=shape)
        rho = np.max(np.abs(np.linalg.eigvals(W)))
        W *= spec.spectral_radius / rho
        values[sl] = W.ravel()
        sl, _ = layout["bres"]
        values[sl] = rng.uniform(-0.1, 0.1, size=sl.stop - sl.start)
    return ParamVector(spec, values, seed=seed, scheme=scheme)


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _unpack(params: ParamVector):
    return {name: params.view(name) for name in _layout(params.spec)[0]}


def zero_state(spec: ModelSpec, batch: int | None = None) -> np.ndarray:
    n = state_size(spec)
    return np.zeros(n) if batch is None else np.zeros((batch, n))


def nnarx_state(spec: ModelSpec, us, ys) -> np.ndarray:
    """Regressor state from the last ``order`` measured (u, y) pairs.

    ``us``/``ys`` are sequences ordered oldest first, exactly ``order``
    entries each; the state is their concatenation [u, y, u, y, ...].
    """
    if spec.kind != "nnarx":
        raise ValueError("nnarx_state only applies to nnarx specs")
    us, ys = np.atleast_2d(us), np.atleast_2d(ys)
    if us.shape != (spec.order, spec.n_u) or ys.shape != (spec.order, spec.n_y):
        raise DimensionError("need exactly `order` past inputs and outputs")
    return np.concatenate([np.concatenate([u, y]) for u, y in zip(us, ys)])


def _rollout(spec, P, x0, inputs, want_cache):
    """Batched forward pass.

    x0: (B, S), inputs: (T, B, n_u).  Returns outputs (T, B, n_y),
    states (T+1, B, S) and a cache of intermediates for the backward
    pass (None when not requested).
    """
    T, B = inputs.shape[0], inputs.shape[1]
    S = x0.shape[1]
    states = np.empty((T + 1, B, S))
    states[0] = x0
    outputs = np.empty((T, B, spec.n_y))
    cache = {} if want_cache else None
    n_h = spec.n_h

    if spec.kind == "linear":
        K = P["K"]
        outputs[:] = inputs @ K.T
        return outputs, states, cache

    if spec.kind == "lstm":
        if want_cache:
            for k in ("z", "f", "i", "o", "g", "tc2", "mf", "mi", "mo", "mc"):
                cache[k] = []
        Wf, bf, Wi, bi = P["Wf"], P["bf"], P["Wi"], P["bi"]
        Wo, bo, Wc, bc = P["Wo"], P["bo"], P["Wc"], P["bc"]
        C, d = P["C"], P["d"]
        x = x0
        for t in range(T):
            c, h = x[:, :n_h], x[:, n_h:]
            outputs[t] = h @ C.T + d
            z = np.concatenate([inputs[t], h], axis=1)
            af = z @ Wf.T + bf
            ai = z @ Wi.T + bi
            ao = z @ Wo.T + bo
            ac = z @ Wc.T + bc
            mf, mi = np.abs(af) < CLIP, np.abs(ai) < CLIP
            mo, mc = np.abs(ao) < CLIP, np.abs(ac) < CLIP
            f = _sigmoid(np.clip(af, -CLIP, CLIP))
            i = _sigmoid(np.clip(ai, -CLIP, CLIP))
            o = _sigmoid(np.clip(ao, -CLIP, CLIP))
            g = np.tanh(np.clip(ac, -CLIP, CLIP))
            c2 = f * c + i * g
            tc2 = np.tanh(c2)
            h2 = o * tc2
            x = np.concatenate([c2, h2], axis=1)
            states[t + 1] = x
            if want_cache:
                for k, v in (("z", z), ("f", f), ("i", i), ("o", o), ("g", g),
                             ("tc2", tc2), ("mf", mf), ("mi", mi), ("mo", mo), ("mc", mc)):
                    cache[k].append(v)
        return outputs, states, cache

    if spec.kind == "gru":
        if want_cache:
            for k in ("zin", "nin", "zg", "r", "n", "mz", "mr", "mn"):
                cache[k] = []
        Wz, bz, Wr, br, Wn, bn = P["Wz"], P["bz"], P["Wr"], P["br"], P["Wn"], P["bn"]
        C, d = P["C"], P["d"]
        h = x0
        for t in range(T):
            outputs[t] = h @ C.T + d
            zin = np.concatenate([inputs[t], h], axis=1)
            az = zin @ Wz.T + bz
            ar = zin @ Wr.T + br
            mz, mr = np.abs(az) < CLIP, np.abs(ar) < CLIP
            zg = _sigmoid(np.clip(az, -CLIP, CLIP))
            r = _sigmoid(np.clip(ar, -CLIP, CLIP))
            nin = np.concatenate([inputs[t], r * h], axis=1)
            an = nin @ Wn.T + bn
            mn = np.abs(an) < CLIP
            n = np.tanh(np.clip(an, -CLIP, CLIP))
            h = (1.0 - zg) * h + zg * n
            states[t + 1] = h
            if want_cache:
                for k, v in (("zin", zin), ("nin", nin), ("zg", zg), ("r", r),
                             ("n", n), ("mz", mz), ("mr", mr), ("mn", mn)):
                    cache[k].append(v)
        return outputs, states, cache

    if spec.kind == "esn":
        Win, W, bres = P["Win"], P["W"], P["bres"]
        C, d = P["C"], P["d"]
        a = spec.leak_rate
        h = x0
        for t in range(T):
            outputs[t] = h @ C.T + d
            pre = inputs[t] @ Win.T + h @ W.T + bres
            h = (1.0 - a) * h + a * np.tanh(np.clip(pre, -CLIP, CLIP))
            states[t + 1] = h
        return outputs, states, cache

    # nnarx: state is the regressor, model output is fed back
    if want_cache:
        cache["h1"] = []
        cache["m1"] = []
    W1, b1, W2, b2 = P["W1"], P["b1"], P["W2"], P["b2"]
    blk = spec.n_u + spec.n_y
    x = x0
    for t in range(T):
        a1 = x @ W1.T + b1
        m1 = np.abs(a1) < CLIP
        h1 = np.tanh(np.clip(a1, -CLIP, CLIP))
        y = h1 @ W2.T + b2
        outputs[t] = y
        x = np.concatenate([x[:, blk:], inputs[t], y], axis=1)
        states[t + 1] = x
        if want_cache:
            cache["h1"].append(h1)
            cache["m1"].append(m1)
    return outputs, states, cache


def batch_param_outputs(spec: ModelSpec, values_batch, x0, inputs) -> np.ndarray:
    """Rollout outputs for a batch of parameter vectors on one window.

    ``values_batch`` is (B, values_size); all rollouts share ``x0``
    (state,) and ``inputs`` (T, n_u).  Returns (T, B, n_y).  This is the
    workhorse behind finite-difference Jacobians and identifiability
    sampling, where hundreds of nearby weight vectors are evaluated on
    the same data.
    """
    vb = np.asarray(values_batch, dtype=float)
    if vb.ndim != 2 or vb.shape[1] != values_size(spec):
        raise DimensionError("values_batch must be (B, values_size)")
    inputs = np.asarray(inputs, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    B, T = vb.shape[0], inputs.shape[0]
    layout = _layout(spec)[0]
    P = {name: vb[:, sl].reshape((B,) + shape) for name, (sl, shape) in layout.items()}
    outputs = np.empty((T, B, spec.n_y))
    n_h = spec.n_h

    if spec.kind == "linear":
        # (T, n_u) x (B, n_y, n_u) -> (T, B, n_y)
        return np.einsum("tj,bij->tbi", inputs, P["K"], optimize=True)

    def mm(W, z):
        return np.einsum("bij,bj->bi", W, z, optimize=True)

    if spec.kind == "lstm":
        c = np.tile(x0[:n_h], (B, 1))
        h = np.tile(x0[n_h:], (B, 1))
        for t in range(T):
            outputs[t] = mm(P["C"], h) + P["d"]
            z = np.concatenate([np.tile(inputs[t], (B, 1)), h], axis=1)
            f = _sigmoid(np.clip(mm(P["Wf"], z) + P["bf"], -CLIP, CLIP))
            i = _sigmoid(np.clip(mm(P["Wi"], z) + P["bi"], -CLIP, CLIP))
            o = _sigmoid(np.clip(mm(P["Wo"], z) + P["bo"], -CLIP, CLIP))
            g = np.tanh(np.clip(mm(P["Wc"], z) + P["bc"], -CLIP, CLIP))
            c = f * c + i * g
            h = o * np.tanh(c)
        return outputs

    if spec.kind == "gru":
        h = np.tile(x0, (B, 1))
        for t in range(T):
            outputs[t] = mm(P["C"], h) + P["d"]
            u_t = np.tile(inputs[t], (B, 1))
            z = np.concatenate([u_t, h], axis=1)
            zg = _sigmoid(np.clip(mm(P["Wz"], z) + P["bz"], -CLIP, CLIP))
            r = _sigmoid(np.clip(mm(P["Wr"], z) + P["br"], -CLIP, CLIP))
            nin = np.concatenate([u_t, r * h], axis=1)
            n = np.tanh(np.clip(mm(P["Wn"], nin) + P["bn"], -CLIP, CLIP))
            h = (1.0 - zg) * h + zg * n
        return outputs

    if spec.kind == "esn":
        h = np.tile(x0, (B, 1))
        a = spec.leak_rate
        for t in range(T):
            outputs[t] = mm(P["C"], h) + P["d"]
            pre = mm(P["Win"], np.tile(inputs[t], (B, 1))) + mm(P["W"], h) + P["bres"]
            h = (1.0 - a) * h + a * np.tanh(np.clip(pre, -CLIP, CLIP))
        return outputs

    # nnarx
    blk = spec.n_u + spec.n_y
    x = np.tile(x0, (B, 1))
    for t in range(T):
        h1 = np.tanh(np.clip(mm(P["W1"], x) + P["b1"], -CLIP, CLIP))
        y = mm(P["W2"], h1) + P["b2"]
        outputs[t] = y
        x = np.concatenate([x[:, blk:], np.tile(inputs[t], (B, 1)), y], axis=1)
    return outputs


def output_jacobian(spec: ModelSpec, params: ParamVector, x0, inputs,
                    h: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference Jacobian of the stacked rollout outputs.

    Returns (outputs (T, n_y), J (T*n_y, param_count)) where column j is
    the sensitivity to trainable coordinate j, all columns evaluated in
    one batched pass.
    """
    mask = trainable_mask(spec)
    idx = np.flatnonzero(mask)
    base = params.values
    batch = np.tile(base, (2 * len(idx) + 1, 1))
    for col, j in enumerate(idx):
        batch[2 * col, j] += h
        batch[2 * col + 1, j] -= h
    outs = batch_param_outputs(spec, batch, np.asarray(x0, dtype=float),
                               np.asarray(inputs, dtype=float))
    T = outs.shape[0]
    y0 = outs[:, -1, :]
    J = np.empty((T * spec.n_y, len(idx)))
    for col in range(len(idx)):
        J[:, col] = ((outs[:, 2 * col, :] - outs[:, 2 * col + 1, :]) / (2 * h)).ravel()
    return y0, J


def _check_io(spec, x0, inputs):
    x0 = np.asarray(x0, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    if x0.shape[-1] != state_size(spec):
        raise DimensionError(f"state length {x0.shape[-1]} != {state_size(spec)}")
    if inputs.shape[-1] != spec.n_u:
        raise DimensionError(f"input width {inputs.shape[-1]} != {spec.n_u}")
    return x0, inputs


def forward_step(spec: ModelSpec, params: ParamVector, state, u):
    """One step of (f, g): returns (next_state, y)."""
    state, u = _check_io(spec, np.atleast_1d(np.asarray(state, dtype=float)), u)
    P = _unpack(params)
    outputs, states, _ = _rollout(spec, P, state[None, :], np.asarray(u, dtype=float)[None, None, :], False)
    next_state, y = states[1, 0], outputs[0, 0]
    if not (np.all(np.isfinite(next_state)) and np.all(np.isfinite(y))):
        raise NumericalBlowupError("non-finite result in forward_step", step=0)
    return next_state, y


def simulate(spec: ModelSpec, params: ParamVector, x0, inputs):
    """Open-loop rollout: outputs[i] = g(x_i), states[i+1] = f(x_i, u_i).

    ``inputs`` is (T, n_u) or batched (T, B, n_u); outputs/states match.
    Aborts with the failing step index if values go non-finite.
    """
    x0 = np.asarray(x0, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    if inputs.size == 0:
        raise ValueError("inputs must be nonempty")
    batched = inputs.ndim == 3
    if not batched:
        inputs = inputs[:, None, :]
        x0 = x0[None, :] if x0.ndim == 1 else x0
    x0, inputs = _check_io(spec, x0, inputs)
    outputs, states, _ = _rollout(spec, _unpack(params), x0, inputs, False)
    if not (np.all(np.isfinite(outputs)) and np.all(np.isfinite(states))):
        ok = (np.all(np.isfinite(outputs), axis=(1, 2))
              & np.all(np.isfinite(states[1:]), axis=(1, 2)))
        bad = int(np.argmax(~ok))
        raise NumericalBlowupError(f"non-finite values at step {bad}", step=bad)
    if batched:
        return outputs, states
    return outputs[:, 0, :], states[:, 0, :]


def window_loss_and_gradient(spec: ModelSpec, params: ParamVector, x0,
                             inputs, targets, step_weights=None):
    """Squared-error window loss and its exact reverse-mode gradient.

    loss = sum_t w_t * ||targets_t - y_t||^2, gradient w.r.t. every
    entry of the stored parameter vector (zeros on frozen reservoir
    coordinates).  Accepts single sequences (T, n) or batches (T, B, n).
    """
    x0 = np.asarray(x0, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    batched = inputs.ndim == 3
    if not batched:
        inputs = inputs[:, None, :]
        targets = targets[:, None, :]
        x0 = x0[None, :] if x0.ndim == 1 else x0
    if len(inputs) != len(targets):
        raise DimensionError("inputs and targets must have equal length")
    if targets.shape[-1] != spec.n_y:
        raise DimensionError(f"target width {targets.shape[-1]} != {spec.n_y}")
    x0, inputs = _check_io(spec, x0, inputs)
    T = inputs.shape[0]
    w = np.ones(T) if step_weights is None else np.asarray(step_weights, dtype=float)

    P = _unpack(params)
    outputs, states, cache = _rollout(spec, P, x0, inputs, True)
    res = outputs - targets
    loss = float(np.sum(w[:, None, None] * res * res))
    dy = 2.0 * w[:, None, None] * res          # (T, B, n_y)

    grads = {name: np.zeros(shape) for name, (sl, shape) in _layout(spec)[0].items()}
    n_h = spec.n_h

    if spec.kind == "linear":
        K = P["K"]
        # y_t = K u_t
        grads["K"] = np.einsum("tbi,tbj->ij", dy, inputs)
    elif spec.kind == "esn":
        # readout only; states never depend on trainable entries
        H = states[:-1]                         # (T, B, n_h)
        grads["C"] = np.einsum("tbi,tbj->ij", dy, H)
        grads["d"] = dy.sum(axis=(0, 1))
    elif spec.kind == "lstm":
        C = P["C"]
        Wf, Wi, Wo, Wc = P["Wf"], P["Wi"], P["Wo"], P["Wc"]
        dc_next = np.zeros((inputs.shape[1], n_h))
        dh_next = np.zeros_like(dc_next)
        for t in range(T - 1, -1, -1):
            z, f, i = cache["z"][t], cache["f"][t], cache["i"][t]
            o, g, tc2 = cache["o"][t], cache["g"][t], cache["tc2"][t]
            c_t = states[t][:, :n_h]
            h_t = states[t][:, n_h:]
            do = dh_next * tc2
            dc2 = dc_next + dh_next * o * (1.0 - tc2 * tc2)
            df, di, dg = dc2 * c_t, dc2 * g, dc2 * i
            dc_t = dc2 * f
            daf = df * f * (1.0 - f) * cache["mf"][t]
            dai = di * i * (1.0 - i) * cache["mi"][t]
            dao = do * o * (1.0 - o) * cache["mo"][t]
            dac = dg * (1.0 - g * g) * cache["mc"][t]
            grads["Wf"] += daf.T @ z
            grads["bf"] += daf.sum(0)
            grads["Wi"] += dai.T @ z
            grads["bi"] += dai.sum(0)
            grads["Wo"] += dao.T @ z
            grads["bo"] += dao.sum(0)
            grads["Wc"] += dac.T @ z
            grads["bc"] += dac.sum(0)
            dz = daf @ Wf + dai @ Wi + dao @ Wo + dac @ Wc
            dh_t = dz[:, spec.n_u:]
            grads["C"] += dy[t].T @ h_t
            grads["d"] += dy[t].sum(0)
            dh_t = dh_t + dy[t] @ C
            dc_next, dh_next = dc_t, dh_t
    elif spec.kind == "gru":
        C = P["C"]
        Wz, Wr, Wn = P["Wz"], P["Wr"], P["Wn"]
        dh_next = np.zeros((inputs.shape[1], n_h))
        for t in range(T - 1, -1, -1):
            zin, nin = cache["zin"][t], cache["nin"][t]
            zg, r, n = cache["zg"][t], cache["r"][t], cache["n"][t]
            h_t = states[t]
            dzg = dh_next * (n - h_t)
            dn = dh_next * zg
            dh_t = dh_next * (1.0 - zg)
            dan = dn * (1.0 - n * n) * cache["mn"][t]
            grads["Wn"] += dan.T @ nin
            grads["bn"] += dan.sum(0)
            dnin = dan @ Wn
            drh = dnin[:, spec.n_u:]
            dr = drh * h_t
            dh_t = dh_t + drh * r
            dar = dr * r * (1.0 - r) * cache["mr"][t]
            daz = dzg * zg * (1.0 - zg) * cache["mz"][t]
            grads["Wr"] += dar.T @ zin
            grads["br"] += dar.sum(0)
            grads["Wz"] += daz.T @ zin
            grads["bz"] += daz.sum(0)
            dzin = dar @ Wr + daz @ Wz
            dh_t = dh_t + dzin[:, spec.n_u:]
            grads["C"] += dy[t].T @ h_t
            grads["d"] += dy[t].sum(0)
            dh_t = dh_t + dy[t] @ C
            dh_next = dh_t
    else:  # nnarx
        W1, W2 = P["W1"], P["W2"]
        blk = spec.n_u + spec.n_y
        S = state_size(spec)
        dx_next = np.zeros((inputs.shape[1], S))
        for t in range(T - 1, -1, -1):
            h1 = cache["h1"][t]
            x_t = states[t]
            # x_{t+1} = [x_t[blk:], u_t, y_t]
            dy_tot = dy[t] + dx_next[:, S - spec.n_y:]
            dx_t = np.zeros_like(dx_next)
            dx_t[:, blk:] = dx_next[:, :S - blk]
            grads["W2"] += dy_tot.T @ h1
            grads["b2"] += dy_tot.sum(0)
            dh1 = dy_tot @ W2
            da1 = dh1 * (1.0 - h1 * h1) * cache["m1"][t]
            grads["W1"] += da1.T @ x_t
            grads["b1"] += da1.sum(0)
            dx_t += da1 @ W1
            dx_next = dx_t

    flat = np.zeros(values_size(spec))
    layout = _layout(spec)[0]
    for name, g in grads.items():
        if spec.kind == "esn" and name in ("Win", "W", "bres"):
            continue
        flat[layout[name][0]] = np.ravel(g)
    if not (np.isfinite(loss) and np.all(np.isfinite(flat))):
        raise NumericalBlowupError("non-finite loss or gradient")
    return loss, flat
