"""
Ground-truth generators: coupled logistic maps and sparse VAR processes.

Noise comes from :class:`CounterRng`, a counter-based generator whose output
is a pure function of ``(seed, counter)``:

* ``z = seed * 0x9E3779B97F4A7C15 + (counter + 1) * 0xBF58476D1CE4E5B9``
  (all arithmetic mod 2**64), then the SplitMix64 finaliser
  ``z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
  z *= 0x94D049BB133111EB; z ^= z >> 31``.
* a uniform in (0, 1) is ``((z >> 11) + 0.5) * 2**-53``.
* normals use Box-Muller on consecutive uniform pairs ``(u1, u2)``:
  ``sqrt(-2 ln u1) * cos(2 pi u2)``.

Any language with 64-bit unsigned integers can reproduce the stream exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidSpec, Unstable
from .series import Recording

__all__ = [
    "CounterRng",
    "SyntheticSpec",
    "generate",
    "ground_truth",
    "coupled_logistic",
    "sparse_var",
    "preset",
]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    return z ^ (z >> np.uint64(31))


class CounterRng:
    """Counter-based uniform/normal stream. ``draw`` calls advance the counter."""

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) % 2**64
        self.counter = int(counter)

    def raw(self, n: int) -> np.ndarray:
        ctr = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.seed) * _GOLDEN + ctr * _M1
            return _mix(z)

    def uniform(self, n: int) -> np.ndarray:
        z = self.raw(n)
        return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        u = self.uniform(2 * n)
        u1, u2 = u[0::2], u[1::2]
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic system.

    ``coupling[to][from]`` is the coupling strength. For ``coupled_logistic``
    ``params`` may hold ``r`` (one growth rate per channel) and ``x0``
    (initial values, drawn uniformly from [0.1, 0.9] when absent). For
    ``sparse_var`` ``params`` holds ``lags`` (a list of channel x channel
    matrices, lag 1 first) and ``noise_std``; ``coupling`` is then derived
    from the lag matrices when left empty. Both kinds accept ``obs_noise``:
    standard deviation of white measurement noise added after simulation, or
    ``snr_db``: per-channel measurement noise at that signal-to-noise ratio.
    Logistic ``params`` may also carry ``switch_at`` (sample index) and
    ``coupling_after`` (matrix, zeros by default): the coupling changes to
    ``coupling_after`` from that sample on.
    ``intervention`` is an optional ``{"channel", "mode", "value", "onset"}``
    do-operation applied from sample ``onset`` (post burn-in) onwards.
    """

    kind: str
    n_samples: int
    n_channels: int
    coupling: tuple = ()
    params: dict = field(default_factory=dict)
    seed: int = 0
    burn_in: int = 300
    labels: tuple = ()
    sample_rate: float = 1.0
    intervention: Optional[dict] = None

    def __post_init__(self):
        if self.kind not in ("coupled_logistic", "sparse_var"):
            raise InvalidSpec(f"unknown kind {self.kind!r}")
        if self.n_samples < 1 or self.n_channels < 1 or self.burn_in < 0:
            raise InvalidSpec("n_samples, n_channels must be >= 1 and burn_in >= 0")
        c = self.n_channels
        if self.kind == "sparse_var":
            lags = self.params.get("lags")
            if not lags:
                raise InvalidSpec("sparse_var needs params['lags']")
            A = np.asarray(lags, dtype=float)
            if A.ndim != 3 or A.shape[1:] != (c, c):
                raise InvalidSpec("params['lags'] must be a list of channel x channel matrices")
            if _companion_radius(A) >= 1.0:
                raise Unstable("VAR spectral radius >= 1")
            if not self.coupling:
                derived = np.where(np.any(A != 0, axis=0), np.abs(A).max(axis=0), 0.0)
                object.__setattr__(self, "coupling", _as_tuple(derived))
        if not self.coupling:
            object.__setattr__(self, "coupling", _as_tuple(np.zeros((c, c))))
        cm = np.asarray(self.coupling, dtype=float)
        if cm.shape != (c, c):
            raise InvalidSpec(f"coupling must be {c} x {c}")
        object.__setattr__(self, "coupling", _as_tuple(cm))
        if not self.labels:
            object.__setattr__(self, "labels", tuple(_default_labels(c)))
        if len(self.labels) != c:
            raise InvalidSpec("one label per channel required")

    def coupling_matrix(self) -> np.ndarray:
        return np.asarray(self.coupling, dtype=float)

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind, "n_samples": self.n_samples, "n_channels": self.n_channels,
            "coupling": [list(r) for r in self.coupling], "params": _jsonable(self.params),
            "seed": self.seed, "burn_in": self.burn_in, "labels": list(self.labels),
            "sample_rate": self.sample_rate,
        }
        if self.intervention is not None:
            d["intervention"] = dict(self.intervention)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        d["coupling"] = tuple(tuple(r) for r in d.get("coupling", ()))
        d["labels"] = tuple(d.get("labels", ()))
        return cls(**d)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _as_tuple(m) -> tuple:
    return tuple(tuple(float(v) for v in row) for row in np.asarray(m, dtype=float))


def _default_labels(c: int) -> list:
    base = ["x", "y", "z", "w"]
    return base[:c] if c <= len(base) else [f"x{i}" for i in range(c)]


def _companion_radius(A: np.ndarray) -> float:
    p, c, _ = A.shape
    comp = np.zeros((c * p, c * p))
    comp[:c, :] = np.concatenate(list(A), axis=1)
    if p > 1:
        comp[c:, :-c] = np.eye(c * (p - 1))
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


def _apply_do(state: np.ndarray, do: Optional[dict], t: int) -> None:
    if do is None or t < do["onset"]:
        return
    ch = do["channel"]
    if do["mode"] == "clamp":
        state[ch] = do["value"]
    else:
        state[ch] = state[ch] + do["value"]


def _resolve_do(spec: SyntheticSpec) -> Optional[dict]:
    do = spec.intervention
    if do is None:
        return None
    mode = do.get("mode", "clamp")
    if mode not in ("clamp", "shift"):
        raise InvalidSpec(f"intervention mode must be clamp or shift, got {mode!r}")
    ch = do["channel"]
    if isinstance(ch, str):
        ch = list(spec.labels).index(ch)
    onset = int(do["onset"])
    if not 0 < onset < spec.n_samples:
        raise InvalidSpec("intervention onset must lie inside the emitted samples")
    return {"channel": int(ch), "mode": mode, "value": float(do.get("value", 0.0)),
            "onset": onset + spec.burn_in}


def _simulate_logistic(spec: SyntheticSpec, rng: CounterRng) -> np.ndarray:
    c = spec.n_channels
    r = np.asarray(spec.params.get("r", [3.8, 3.5, 3.7, 3.6][:c] if c <= 4 else [3.8] * c),
                   dtype=float).reshape(-1)
    if r.size == 1:
        r = np.full(c, r[0])
    if r.size != c:
        raise InvalidSpec("params['r'] needs one growth rate per channel")
    beta = spec.coupling_matrix().copy()
    np.fill_diagonal(beta, 0.0)
    if "x0" in spec.params:
        x = np.asarray(spec.params["x0"], dtype=float).reshape(-1).copy()
        if x.size != c:
            raise InvalidSpec("params['x0'] needs one value per channel")
    else:
        x = 0.1 + 0.8 * rng.uniform(c)
    do = _resolve_do(spec)
    total = spec.n_samples + spec.burn_in
    switch_at = None
    if "switch_at" in spec.params:
        switch_at = int(spec.params["switch_at"]) + spec.burn_in
        beta_after = np.asarray(spec.params.get("coupling_after", np.zeros((c, c))), dtype=float)
        beta_after = beta_after.copy()
        np.fill_diagonal(beta_after, 0.0)
    out = np.empty((total, c))
    for t in range(total):
        if t == switch_at:
            beta = beta_after
        _apply_do(x, do, t)
        out[t] = x
        x = x * (r - r * x - beta @ x)
    if not np.all(np.isfinite(out)) or out.min() < 0.0 or out.max() > 1.0:
        raise Unstable("logistic trajectory escaped [0, 1]")
    return out


def _simulate_var(spec: SyntheticSpec, rng: CounterRng) -> np.ndarray:
    A = np.asarray(spec.params["lags"], dtype=float)
    p, c, _ = A.shape
    sd = float(spec.params.get("noise_std", 1.0))
    total = spec.n_samples + spec.burn_in
    eps = sd * rng.normal(total * c).reshape(total, c)
    do = _resolve_do(spec)
    out = np.zeros((total, c))
    for t in range(total):
        x = eps[t].copy()
        for lag in range(1, p + 1):
            if t - lag >= 0:
                x += A[lag - 1] @ out[t - lag]
        _apply_do(x, do, t)
        out[t] = x
    if not np.all(np.isfinite(out)):
        raise Unstable("VAR trajectory diverged")
    return out


def generate(spec: SyntheticSpec) -> Recording:
    """Simulate ``spec`` and return the post-burn-in samples as a Recording."""
    rng = CounterRng(spec.seed)
    if spec.kind == "coupled_logistic":
        data = _simulate_logistic(spec, rng)
    else:
        data = _simulate_var(spec, rng)
    data = data[spec.burn_in:]
    obs = np.full(data.shape[1], float(spec.params.get("obs_noise", 0.0)))
    if "snr_db" in spec.params:
        obs = data.std(axis=0) / 10.0 ** (float(spec.params["snr_db"]) / 20.0)
    if np.any(obs > 0):
        noise_rng = CounterRng(spec.seed, counter=2**40)
        data = data + obs * noise_rng.normal(data.size).reshape(data.shape)
    return Recording.from_array(data, spec.sample_rate, list(spec.labels))


def ground_truth(spec: SyntheticSpec) -> np.ndarray:
    """Boolean ``(to, from)`` adjacency of the planted couplings."""
    if spec.kind == "sparse_var":
        A = np.asarray(spec.params["lags"], dtype=float)
        return np.any(A != 0, axis=0)
    adj = spec.coupling_matrix() != 0
    np.fill_diagonal(adj, False)
    return adj


def coupled_logistic(beta_yx: float = 0.32, beta_xy: float = 0.0, n_samples: int = 1000,
                     seed: int = 0, r=(3.8, 3.5), burn_in: int = 300, **params) -> SyntheticSpec:
    """Two-channel logistic system ``x``, ``y``; ``beta_yx`` is the push of x on y."""
    p = {"r": list(r)}
    p.update(params)
    return SyntheticSpec("coupled_logistic", n_samples, 2,
                         ((0.0, beta_xy), (beta_yx, 0.0)), p, seed, burn_in)


def sparse_var(lags, n_samples: int, seed: int = 0, noise_std: float = 1.0,
               burn_in: int = 300, **params) -> SyntheticSpec:
    A = np.asarray(lags, dtype=float)
    p = {"lags": A.tolist(), "noise_std": noise_std}
    p.update(params)
    return SyntheticSpec("sparse_var", n_samples, A.shape[1], (), p, seed, burn_in)


def preset(name: str, n_samples: int = 1000, seed: int = 0) -> SyntheticSpec:
    """Named ready-made systems used by the CLI and the demos."""
    if name == "unidirectional":
        return coupled_logistic(0.32, 0.0, n_samples, seed)
    if name == "bidirectional":
        return coupled_logistic(0.1, 0.02, n_samples, seed)
    if name == "independent":
        return coupled_logistic(0.0, 0.0, n_samples, seed, r=(3.8, 3.7))
    if name == "var3":
        return sparse_var(_VAR3, n_samples, seed)
    raise InvalidSpec(f"unknown preset {name!r}")


# 3-channel VAR(2) with four planted lag coefficients
_VAR3 = [
    [[0.5, 0.0, 0.0], [0.4, 0.0, 0.0], [0.0, 0.0, 0.0]],
    [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, -0.45, 0.35]],
]
