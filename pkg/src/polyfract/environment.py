"""Disorder specification and counter-based environment fields.

The environment is a function omega(t, site) drawn i.i.d. over
space-time pairs.  Values are produced by hashing (replica, t,
site_key) under one master seed, so any value can be recomputed in
isolation: no sequential generator state, no dependence on evaluation
order, and truncating the graph never changes the field on surviving
sites (site keys are truncation-invariant).

Families: standard gaussian, rademacher, and finite discrete laws.
All are centered; the discrete validator enforces that, since every
consumer assumes E[omega] = 0.
"""

from __future__ import annotations

import math

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError

_M64 = (1 << 64) - 1
_SM_GAMMA = 0x9E3779B97F4A7C15
_SM_M1 = 0xBF58476D1CE4E5B9
_SM_M2 = 0x94D049BB133111EB

_EMPTY_F64 = np.zeros(0, dtype=np.float64)


def mix64_int(z):
    """Pure-python twin of the kernel mix64, bit for bit."""
    z = (z + _SM_GAMMA) & _M64
    z = ((z ^ (z >> 30)) * _SM_M1) & _M64
    z = ((z ^ (z >> 27)) * _SM_M2) & _M64
    return z ^ (z >> 31)


def derive_seed(seed, *parts):
    """Stable sub-seed from a master seed and a path of labels.

    Labels may be ints or short strings; strings are folded as utf-8
    bytes in little-endian 8-byte words.  Used to give each scan point,
    replica batch, or subcommand its own independent stream.
    """
    h = mix64_int(int(seed) & _M64)
    for part in parts:
        if isinstance(part, str):
            data = part.encode("utf-8")
            h = mix64_int(h ^ len(data))
            for i in range(0, len(data), 8):
                word = int.from_bytes(data[i:i + 8], "little")
                h = mix64_int(h ^ word)
        else:
            h = mix64_int(h ^ (int(part) & _M64))
    return h


class DisorderSpec:
    """Validated description of the single-site disorder law."""

    def __init__(self, family, values=None, probs=None):
        self.family = family
        if family == "gaussian":
            self.fam_code = kernels.FAM_GAUSSIAN
            self.values = _EMPTY_F64
            self.probs = _EMPTY_F64
            self.cumprobs = _EMPTY_F64
        elif family == "rademacher":
            self.fam_code = kernels.FAM_RADEMACHER
            self.values = np.array([-1.0, 1.0])
            self.probs = np.array([0.5, 0.5])
            self.cumprobs = np.array([0.5, 1.0])
        elif family == "discrete":
            self.fam_code = kernels.FAM_DISCRETE
            values = np.asarray(values, dtype=np.float64)
            probs = np.asarray(probs, dtype=np.float64)
            if values.ndim != 1 or probs.shape != values.shape:
                raise ConfigError("discrete law needs matching value and "
                                  "probability vectors")
            if values.size < 2:
                raise ConfigError("discrete law needs at least two values")
            if not np.all(np.isfinite(values)):
                raise ConfigError("discrete values must be finite")
            if np.any(np.diff(values) <= 0.0):
                raise ConfigError("discrete values must be strictly "
                                  "increasing")
            if np.any(probs < 1e-9):
                raise ConfigError("discrete probabilities must be >= 1e-9")
            if abs(float(probs.sum()) - 1.0) > 1e-12:
                raise ConfigError("discrete probabilities must sum to 1")
            mean = float(probs @ values)
            if abs(mean) > 1e-12:
                raise ConfigError(f"discrete law must be centered, got mean "
                                  f"{mean:.3e}")
            self.values = values
            self.probs = probs
            cum = np.cumsum(probs)
            cum[-1] = 1.0  # uniforms are strictly below 1, so the last
            # bin absorbs any rounding in the cumulative sum
            if np.any(np.diff(cum) <= 0.0):
                raise ConfigError("cumulative probabilities must increase")
            self.cumprobs = cum
        else:
            raise ConfigError(f"unknown disorder family {family!r}")

    @classmethod
    def gaussian(cls):
        return cls("gaussian")

    @classmethod
    def rademacher(cls):
        return cls("rademacher")

    @classmethod
    def discrete(cls, values, probs):
        return cls("discrete", values=values, probs=probs)

    @classmethod
    def from_config(cls, cfg):
        fam = cfg.get("family")
        if fam == "discrete":
            return cls.discrete(cfg.get("values"), cfg.get("probs"))
        return cls(fam)

    def to_config(self):
        if self.family == "discrete":
            return {"family": "discrete",
                    "values": [float(v) for v in self.values],
                    "probs": [float(p) for p in self.probs]}
        return {"family": self.family}

    def log_mgf(self, beta):
        """log E[exp(beta * omega)], elementwise over beta."""
        beta = np.asarray(beta, dtype=np.float64)
        if self.family == "gaussian":
            out = 0.5 * beta * beta
        elif self.family == "rademacher":
            out = np.logaddexp(beta, -beta) - math.log(2.0)
        else:
            logits = np.log(self.probs) + beta[..., None] * self.values
            m = logits.max(axis=-1)
            out = m + np.log(np.exp(logits - m[..., None]).sum(axis=-1))
        return float(out) if out.ndim == 0 else out

    def overlap_rate(self, beta):
        """log E[exp(beta (w+w'))] - log E[exp(beta w)]^2 at matched sites.

        Equals log_mgf(2 beta) - 2 log_mgf(beta); nonnegative, zero only
        at beta = 0.
        """
        beta = np.asarray(beta, dtype=np.float64)
        out = self.log_mgf(2.0 * beta) - 2.0 * np.asarray(self.log_mgf(beta))
        return float(out) if np.ndim(out) == 0 else out

    def variance(self):
        if self.family == "gaussian":
            return 1.0
        if self.family == "rademacher":
            return 1.0
        return float(self.probs @ (self.values ** 2))

    def __repr__(self):
        return f"DisorderSpec({self.family})"


class OmegaField:
    """One realization of the environment under a fixed seed.

    replica indexes independent copies; time_offset implements the time
    shift theta_k (omega'(t, x) = omega(t + k, x)), which is what the
    restriction and concatenation identities need.
    """

    def __init__(self, spec, seed, replica=0, time_offset=0):
        self.spec = spec
        self.seed = int(seed) & _M64
        self.replica = int(replica)
        self.time_offset = int(time_offset)
        if self.time_offset < 0:
            raise DomainError("time offset must be >= 0")

    def omega(self, t, keys):
        """Field values at one time over an array of site keys.

        Times start at 1: the Hamiltonian never samples the time-0 row.
        """
        t = self.time_offset + int(t)
        if t < 1:
            raise DomainError("environment time must be >= 1")
        keys = np.asarray(keys, dtype=np.uint64)
        t_arr = np.full(keys.shape, t, dtype=np.uint64)
        return kernels.omega_values(self.seed, self.replica, t_arr, keys,
                                    self.spec.fam_code, self.spec.values,
                                    self.spec.cumprobs)

    def omega_at(self, t, key):
        return float(self.omega(t, np.array([key], dtype=np.uint64))[0])

    def omega_pairs(self, t_arr, keys):
        """Field values at paired (t, key) arrays."""
        t_arr = np.asarray(t_arr, dtype=np.int64) + self.time_offset
        if t_arr.size and int(t_arr.min()) < 1:
            raise DomainError("environment times must be >= 1")
        return kernels.omega_values(self.seed, self.replica,
                                    t_arr.astype(np.uint64),
                                    np.asarray(keys, dtype=np.uint64),
                                    self.spec.fam_code, self.spec.values,
                                    self.spec.cumprobs)

    def shifted(self, k):
        if int(k) < 0:
            raise DomainError("time shift must be >= 0")
        return OmegaField(self.spec, self.seed, self.replica,
                          self.time_offset + int(k))

    def with_replica(self, r):
        return OmegaField(self.spec, self.seed, int(r), self.time_offset)
