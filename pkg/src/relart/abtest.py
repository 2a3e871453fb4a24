"""Per-request weighted randomization of the recommendation pipeline.

Every request draws an algorithm family from configured weights, then
draws each parameter in that family's schema independently, in one
documented fixed order. Everything that was drawn — including the seed
and generator name — lands in a ChoiceRecord so any delivery can be
replayed from its logs.

Config schema (JSON)::

    {
      "family_weights": {"cbf_terms": 0.90, "...": 0.02},
      "parameter_distributions": {
        "cbf_terms": {
          "source_field": {"title": 0.5, "abstract": 0.5},
          "result_count": {"1": 0.066, "...": 0.066}
        }
      },
      "safe_arm": {"family": "most_popular",
                   "params": {"popularity_metric": "views", "result_count": 10}}
    }

Families absent from family_weights weigh zero. Distribution keys are
JSON strings and are coerced to the parameter's value type (int for
ngram_order / keyphrase_count / result_count, bool for
rerank_readership). Weights must sum to 1 within 1e-9 and are never
normalized: a config that does not add up is rejected, not repaired.
Distributions must cover every parameter of every family with positive
weight, plus fallback_search, which can be forced for unknown input
documents regardless of its weight.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping

from .embedding import fnv1a64
from .recommenders import PARAM_SCHEMA, AlgorithmArm, Family, _check_param

RNG_ALGORITHM = "mersenne_twister"

# One uniform variate is consumed per decision, in exactly this order
# (restricted to the chosen family's schema). Value sets are iterated in
# canonical sorted order, so equal (seed, config) always yields equal
# draws no matter how the config file ordered its keys.
DRAW_ORDER = (
    "source_field",
    "ngram_order",
    "keyphrase_count",
    "query_parser",
    "rerank_readership",
    "result_count",
    "popularity_metric",
)

FAMILY_ORDER = tuple(Family)

_INT_PARAMS = ("ngram_order", "keyphrase_count", "result_count")

Distribution = tuple[tuple[object, float], ...]


class ConfigError(ValueError):
    """Invalid A/B configuration; the message names the offending field."""


@dataclass(frozen=True)
class AbConfig:
    family_weights: Mapping[Family, float]
    distributions: Mapping[Family, Mapping[str, Distribution]]
    safe_arm: AlgorithmArm

    def weight(self, family: Family) -> float:
        return self.family_weights.get(family, 0.0)


@dataclass(frozen=True)
class ChoiceRecord:
    """Complete audit trail of one arm selection."""

    request_id: str
    arm_id: str
    family: str
    params: dict = field(default_factory=dict)
    rng_seed: int | None = None
    rng_algorithm: str = RNG_ALGORITHM
    forced: bool = False

    def to_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "arm_id": self.arm_id,
            "family": self.family,
            "params": dict(self.params),
            "rng_seed": self.rng_seed,
            "rng_algorithm": self.rng_algorithm,
            "forced": self.forced,
        }


def seed_for_request(request_id: str) -> int:
    return fnv1a64(request_id.encode("utf-8"))


def _coerce_key(param: str, key: str) -> object:
    if param in _INT_PARAMS:
        try:
            return int(key)
        except ValueError as exc:
            raise ConfigError(f"{param}: non-integer value {key!r}") from exc
    if param == "rerank_readership":
        if key not in ("true", "false"):
            raise ConfigError(f"rerank_readership: value must be 'true' or 'false', got {key!r}")
        return key == "true"
    return key


def _canonical(pairs: dict) -> Distribution:
    # bool sorts as int; str values sort lexicographically — a total
    # order within each parameter's homogeneous value type.
    return tuple(sorted(pairs.items(), key=lambda kv: kv[0]))


def validate_config(raw: dict) -> AbConfig:
    """Parse and check a raw (JSON-decoded) config. Reject, don't repair."""
    if not isinstance(raw, dict):
        raise ConfigError("config: expected an object")
    unknown = set(raw) - {"family_weights", "parameter_distributions", "safe_arm"}
    if unknown:
        raise ConfigError(f"config: unknown keys {sorted(unknown)}")
    for required in ("family_weights", "parameter_distributions", "safe_arm"):
        if required not in raw:
            raise ConfigError(f"{required}: missing")

    weights: dict[Family, float] = {}
    for name, value in raw["family_weights"].items():
        try:
            fam = Family(name)
        except ValueError:
            raise ConfigError(f"family_weights: unknown family {name!r}") from None
        weight = float(value)
        if weight < 0.0:
            raise ConfigError(f"family_weights.{name}: negative weight {value}")
        weights[fam] = weight
    total = sum(weights.values())
    if abs(total - 1.0) > 1e-9:
        raise ConfigError(f"family_weights: weights sum to {total!r}, expected 1.0")

    distributions: dict[Family, dict[str, Distribution]] = {}
    for name, per_param in raw["parameter_distributions"].items():
        try:
            fam = Family(name)
        except ValueError:
            raise ConfigError(f"parameter_distributions: unknown family {name!r}") from None
        schema = PARAM_SCHEMA[fam]
        parsed: dict[str, Distribution] = {}
        for param, dist in per_param.items():
            where = f"parameter_distributions.{name}.{param}"
            if param not in schema:
                raise ConfigError(f"{where}: not a parameter of {name}")
            if not dist:
                raise ConfigError(f"{where}: empty distribution")
            pairs: dict = {}
            for key, prob in dist.items():
                value = _coerce_key(param, key)
                try:
                    _check_param(param, value)
                except ValueError as exc:
                    raise ConfigError(f"{where}: {exc}") from None
                p = float(prob)
                if p < 0.0:
                    raise ConfigError(f"{where}.{key}: negative probability {prob}")
                pairs[value] = p
            total_p = sum(pairs.values())
            if abs(total_p - 1.0) > 1e-9:
                raise ConfigError(f"{where}: probabilities sum to {total_p!r}, expected 1.0")
            parsed[param] = _canonical(pairs)
        distributions[fam] = parsed

    # Any family that can actually be selected needs a complete cascade.
    # fallback_search is always selectable because the service forces it
    # for unknown documents that arrive with a title.
    needed = {fam for fam, w in weights.items() if w > 0.0} | {Family.FALLBACK_SEARCH}
    for fam in sorted(needed, key=lambda f: f.value):
        for param in PARAM_SCHEMA[fam]:
            if param not in distributions.get(fam, {}):
                raise ConfigError(f"parameter_distributions.{fam.value}.{param}: missing")

    safe_raw = raw["safe_arm"]
    if not isinstance(safe_raw, dict) or set(safe_raw) != {"family", "params"}:
        raise ConfigError("safe_arm: expected an object with 'family' and 'params'")
    try:
        safe_family = Family(safe_raw["family"])
    except ValueError:
        raise ConfigError(f"safe_arm: unknown family {safe_raw['family']!r}") from None
    try:
        safe_arm = AlgorithmArm(
            arm_id="safe", family=safe_family, params=dict(safe_raw["params"])
        )
    except ValueError as exc:
        raise ConfigError(f"safe_arm: {exc}") from None
    if weights.get(safe_family, 0.0) <= 0.0:
        raise ConfigError(f"safe_arm: family {safe_family.value!r} has zero weight")

    return AbConfig(family_weights=weights, distributions=distributions, safe_arm=safe_arm)


def load_config(path) -> AbConfig:
    with open(path, "r", encoding="utf-8") as handle:
        return validate_config(json.load(handle))


def default_config() -> AbConfig:
    raw = json.loads(
        resources.files("relart.data").joinpath("ab_default.json").read_text("utf-8")
    )
    return validate_config(raw)


def _draw(rng: random.Random, pairs: Distribution) -> object:
    u = rng.random()
    cumulative = 0.0
    for value, prob in pairs:
        cumulative += prob
        if u < cumulative:
            return value
    # Float drift can leave the total hair-thin below u; last value wins.
    return pairs[-1][0]


def _draw_family(rng: random.Random, config: AbConfig) -> Family:
    pairs = tuple(
        (fam, config.family_weights[fam])
        for fam in FAMILY_ORDER
        if config.family_weights.get(fam, 0.0) > 0.0
    )
    return _draw(rng, pairs)


def _arm_id(family: Family, params: dict) -> str:
    parts = [family.value]
    for name in DRAW_ORDER:
        if name in params:
            parts.append(f"{name}={params[name]}")
    return "|".join(parts)


def _draw_params(
    rng: random.Random,
    config: AbConfig,
    family: Family,
    request_id: str,
    rng_seed: int | None,
    forced: bool,
) -> tuple[AlgorithmArm, ChoiceRecord]:
    schema = PARAM_SCHEMA[family]
    params: dict = {}
    for name in DRAW_ORDER:
        if name in schema:
            params[name] = _draw(rng, config.distributions[family][name])
    arm = AlgorithmArm(arm_id=_arm_id(family, params), family=family, params=params)
    record = ChoiceRecord(
        request_id=request_id,
        arm_id=arm.arm_id,
        family=family.value,
        params=params,
        rng_seed=rng_seed,
        forced=forced,
    )
    return arm, record


def select_arm(
    rng: random.Random,
    config: AbConfig,
    request_id: str = "",
    rng_seed: int | None = None,
) -> tuple[AlgorithmArm, ChoiceRecord]:
    """Draw family, then its parameter cascade in the fixed order."""
    family = _draw_family(rng, config)
    return _draw_params(rng, config, family, request_id, rng_seed, forced=False)


def arm_for_request(config: AbConfig, request_id: str) -> tuple[AlgorithmArm, ChoiceRecord]:
    """select_arm with the rng seeded deterministically from the request id."""
    seed = seed_for_request(request_id)
    return select_arm(random.Random(seed), config, request_id=request_id, rng_seed=seed)


def forced_arm(
    config: AbConfig, family: Family, request_id: str
) -> tuple[AlgorithmArm, ChoiceRecord]:
    """Skip the family draw (e.g. fallback search for unknown documents);
    the parameter cascade is still drawn from the seeded rng."""
    seed = seed_for_request(request_id)
    rng = random.Random(seed)
    return _draw_params(rng, config, family, request_id, seed, forced=True)
