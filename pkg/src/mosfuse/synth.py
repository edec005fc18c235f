"""Seeded synthetic MOS datasets and sub-system score tables.

Generative model, for synthesis system ``s`` and sub-system ``j``::

    quality_s ~ Uniform(lo, hi)
    truth     = quantize(quality_s + Normal(0, 0.5))          # on the 0.125 grid
    score_j   = clip(truth + bias_j + Normal(0, sd_j) + shift, 1, 5)

Draw order (part of the reproducibility contract): all system qualities
first, then utterance by utterance the truth noise followed by the K score
noises. Every normal is drawn even when its SD is zero. Utterances are
assigned to systems round-robin.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .core import DEFAULT_GRID, MOS_MAX, MOS_MIN, MosDataset, ScoreMatrix, quantize_to_grid
from .errors import InvalidConfig
from .rng import XorShift64Star

TRUTH_NOISE_SD = 0.5
MAIN_TRACK_SIZES = {"train": 4974, "val": 1066, "test": 1066}
OOD_SIZES = {"labeled": 136, "unlabeled": 540, "heldout": 540}
SSL_SUBSYSTEMS = ("w2v_base", "w2v_large", "w2v_large_lv60", "hubert_base",
                    "wavlm_base", "wavlm_base_plus", "wavlm_large")


def subsystem_names(k: int) -> tuple[str, ...]:
    if k == len(SSL_SUBSYSTEMS):
        return SSL_SUBSYSTEMS
    return tuple(f"ssl_{j}" for j in range(k))


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_systems: int = 100
    utts_per_system: int = 50
    k_subsystems: int = 7
    subsystem_bias: Optional[tuple[float, ...]] = None
    subsystem_noise_sd: Optional[tuple[float, ...]] = None
    system_quality_range: tuple[float, float] = (1.5, 4.5)
    ood_shift: float = 0.0

    def __post_init__(self):
        if self.seed < 0:
            raise InvalidConfig("seed must be unsigned")
        if self.n_systems < 1 or self.utts_per_system < 1 or self.k_subsystems < 1:
            raise InvalidConfig("n_systems, utts_per_system and k_subsystems must be positive")
        k = self.k_subsystems
        bias = self.subsystem_bias
        sd = self.subsystem_noise_sd
        bias = tuple(np.linspace(0.0, 0.6, k)) if bias is None else tuple(float(b) for b in bias)
        sd = tuple(np.linspace(0.2, 0.8, k)) if sd is None else tuple(float(v) for v in sd)
        if len(bias) != k or len(sd) != k:
            raise InvalidConfig(f"bias and noise SD vectors need {k} entries")
        if not all(math.isfinite(b) for b in bias):
            raise InvalidConfig("biases must be finite")
        if not all(math.isfinite(v) and v >= 0 for v in sd):
            raise InvalidConfig("noise SDs must be finite and non-negative")
        lo, hi = (float(v) for v in self.system_quality_range)
        if not (MOS_MIN <= lo <= hi <= MOS_MAX):
            raise InvalidConfig("system_quality_range must satisfy 1 <= lo <= hi <= 5")
        if not math.isfinite(self.ood_shift):
            raise InvalidConfig("ood_shift must be finite")
        object.__setattr__(self, "subsystem_bias", tuple(float(b) for b in bias))
        object.__setattr__(self, "subsystem_noise_sd", tuple(float(v) for v in sd))
        object.__setattr__(self, "system_quality_range", (lo, hi))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["subsystem_bias"] = list(self.subsystem_bias)
        d["subsystem_noise_sd"] = list(self.subsystem_noise_sd)
        d["system_quality_range"] = list(self.system_quality_range)
        return d


def heterogeneous_config(seed: int, k: int = 7, bias_range=(0.0, 0.6), sd_range=(0.2, 0.8),
                         **overrides) -> SynthConfig:
    """Config whose per-subsystem biases and noise SDs are themselves drawn from ``seed``."""
    rng = XorShift64Star(seed ^ 0x5EED)
    bias = tuple(rng.uniform(*bias_range) for _ in range(k))
    sd = tuple(rng.uniform(*sd_range) for _ in range(k))
    return SynthConfig(seed=seed, k_subsystems=k, subsystem_bias=bias, subsystem_noise_sd=sd, **overrides)


class _Generator:
    def __init__(self, config: SynthConfig, shift: float, system_prefix: str):
        self.config = config
        self.shift = shift
        self.rng = XorShift64Star(config.seed)
        lo, hi = config.system_quality_range
        self.systems = [f"{system_prefix}{s:03d}" for s in range(config.n_systems)]
        self.quality = [self.rng.uniform(lo, hi) for _ in range(config.n_systems)]

    def rows(self, n: int, tag: str, by_system: bool = False):
        cfg = self.config
        ids, sys_ids = [], []
        truth = np.empty(n)
        scores = np.empty((n, cfg.k_subsystems))
        for i in range(n):
            if by_system:
                s, u = divmod(i, cfg.utts_per_system)
            else:
                s, u = i % cfg.n_systems, i // cfg.n_systems
            t = quantize_to_grid(self.quality[s] + self.rng.normal(0.0, TRUTH_NOISE_SD), DEFAULT_GRID)
            for j in range(cfg.k_subsystems):
                noise = self.rng.normal(0.0, cfg.subsystem_noise_sd[j])
                scores[i, j] = min(MOS_MAX, max(MOS_MIN, t + cfg.subsystem_bias[j] + noise + self.shift))
            truth[i] = t
            sys_ids.append(self.systems[s])
            ids.append(f"{self.systems[s]}-{tag}{u:05d}")
        dataset = MosDataset.from_arrays(ids, sys_ids, truth)
        return dataset, ScoreMatrix(ids, subsystem_names(cfg.k_subsystems), scores, sys_ids)


def generate(config: SynthConfig) -> tuple[MosDataset, ScoreMatrix]:
    """n_systems x utts_per_system utterances, system-major, no domain shift."""
    gen = _Generator(config, 0.0, "sys")
    return gen.rows(config.n_systems * config.utts_per_system, "utt", by_system=True)


def generate_main_track(config: SynthConfig, sizes: Optional[dict] = None) -> dict:
    """Train/val/test splits (4974/1066/1066 by default) over one shared pool of systems."""
    sizes = dict(MAIN_TRACK_SIZES if sizes is None else sizes)
    gen = _Generator(config, 0.0, "sys")
    return {name: gen.rows(n, name) for name, n in sizes.items()}


def generate_ood_suite(config: SynthConfig, sizes: Optional[dict] = None):
    """Labeled / unlabeled / held-out OOD splits (136/540/540) with ``config.ood_shift`` applied.

    All three splits come from the same system pool and shifted score
    distribution. The unlabeled split is returned as a score table only.
    """
    sizes = dict(OOD_SIZES if sizes is None else sizes)
    gen = _Generator(config, config.ood_shift, "ood")
    labeled = gen.rows(sizes["labeled"], "lab")
    _, unlabeled = gen.rows(sizes["unlabeled"], "unl")
    heldout = gen.rows(sizes["heldout"], "tst")
    return labeled, unlabeled, heldout
