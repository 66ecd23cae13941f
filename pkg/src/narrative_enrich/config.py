"""Run configuration: one YAML file holds every tunable.

Precedence: built-in defaults < config file < environment variables < CLI
flags. The documented schema lives in resources/config.schema.json; defaults
match the published hyperparameters (top-k 4, similarity threshold 0.3,
max_new_tokens 250, temperature 0.7, top_p 0.9, mapping weights 3/2/1).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .baselines import MappingWeights
from .errors import ConfigError
from .generation import (
    ENV_LLM_KEY,
    ENV_LLM_MODEL,
    ENV_LLM_URL,
    GenerationParams,
    HTTPChatBackend,
    ScriptedBackend,
)
from .retrieval import (
    ENV_EMBED_KEY,
    ENV_EMBED_URL,
    HashEmbeddingBackend,
    HTTPEmbeddingBackend,
    RetrievalConfig,
)
from .reversum import Backends, EnrichmentSettings, StageToggles

EMBEDDING_MODES = ("offline", "http")
LLM_MODES = ("scripted", "live")


@dataclass
class RunConfig:
    chunk_size: int = 1000
    overlap: int = 200
    seed: int = 0
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    generation: GenerationParams = field(default_factory=GenerationParams)
    toggles: StageToggles = field(default_factory=StageToggles)
    mapping_weights: MappingWeights = field(default_factory=MappingWeights)
    embedding_mode: str = "offline"
    embedding_dim: int = 256
    embedding_url: str | None = None
    embedding_key: str | None = None
    llm_mode: str = "scripted"
    llm_rules: str | None = None
    llm_url: str | None = None
    llm_model: str | None = None
    llm_key: str | None = None

    def to_dict(self) -> dict:
        return {
            "chunk_size": self.chunk_size,
            "overlap": self.overlap,
            "seed": self.seed,
            "retrieval": {
                "k": self.retrieval.k,
                "candidate_pool": self.retrieval.candidate_pool,
                "mmr_lambda": self.retrieval.mmr_lambda,
                "threshold": self.retrieval.threshold,
            },
            "generation": {
                "max_new_tokens": self.generation.max_new_tokens,
                "temperature": self.generation.temperature,
                "top_p": self.generation.top_p,
                "sample": self.generation.sample,
                "seed": self.generation.seed,
            },
            "stages": {
                "relevance_detection": self.toggles.relevance_detection,
                "evidence_collection": self.toggles.evidence_collection,
                "evidence_verification": self.toggles.evidence_verification,
                "summary_generation": self.toggles.summary_generation,
            },
            "mapping_weights": {
                "alpha": self.mapping_weights.alpha,
                "beta": self.mapping_weights.beta,
                "gamma": self.mapping_weights.gamma,
            },
            "embedding": {
                "mode": self.embedding_mode,
                "dim": self.embedding_dim,
                "url": self.embedding_url,
            },
            "llm": {
                "mode": self.llm_mode,
                "rules": self.llm_rules,
                "url": self.llm_url,
                "model": self.llm_model,
            },
        }


def _int_field(errors, data, key, minimum=None):
    value = data[key]
    if not isinstance(value, int) or isinstance(value, bool):
        errors.append(f"{key}: expected an integer, got {value!r}")
        return None
    if minimum is not None and value < minimum:
        errors.append(f"{key}: must be >= {minimum}, got {value}")
        return None
    return value


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from defaults, an optional YAML file, environment
    variables, and explicit overrides, validating as it goes. Raises
    ConfigError listing every offending field."""
    data: dict = {}
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must contain a mapping")
        data = raw

    errors: list[str] = []
    known = {
        "chunk_size", "overlap", "seed", "retrieval", "generation", "stages",
        "mapping_weights", "embedding", "llm",
    }
    unknown = set(data) - known
    if unknown:
        errors.append(f"unknown config keys: {sorted(unknown)}")

    cfg = RunConfig()
    flat: dict = {
        "chunk_size": cfg.chunk_size,
        "overlap": cfg.overlap,
        "seed": cfg.seed,
    }
    for key in ("chunk_size", "overlap", "seed"):
        if key in data:
            value = _int_field(errors, data, key, minimum=0)
            if value is not None:
                flat[key] = value

    retrieval_kwargs = {}
    for key in ("k", "candidate_pool", "mmr_lambda", "threshold"):
        section = data.get("retrieval", {})
        if key in section:
            retrieval_kwargs[key] = section[key]
    generation_kwargs = {}
    for key in ("max_new_tokens", "temperature", "top_p", "sample", "seed"):
        section = data.get("generation", {})
        if key in section:
            generation_kwargs[key] = section[key]
    toggle_kwargs = {}
    for key in (
        "relevance_detection", "evidence_collection",
        "evidence_verification", "summary_generation",
    ):
        section = data.get("stages", {})
        if key in section:
            toggle_kwargs[key] = bool(section[key])
    weight_kwargs = {}
    for key in ("alpha", "beta", "gamma"):
        section = data.get("mapping_weights", {})
        if key in section:
            weight_kwargs[key] = float(section[key])

    embedding = data.get("embedding", {})
    llm = data.get("llm", {})

    if overrides:
        for key in ("chunk_size", "overlap", "seed"):
            if overrides.get(key) is not None:
                flat[key] = overrides[key]
        for key in ("k", "candidate_pool", "mmr_lambda", "threshold"):
            if overrides.get(key) is not None:
                retrieval_kwargs[key] = overrides[key]
        if overrides.get("llm_rules") is not None:
            llm = {**llm, "rules": overrides["llm_rules"]}

    if flat["chunk_size"] <= flat["overlap"]:
        errors.append(
            f"chunk_size ({flat['chunk_size']}) must exceed overlap ({flat['overlap']})"
        )

    embedding_mode = embedding.get("mode", "offline")
    if embedding_mode not in EMBEDDING_MODES:
        errors.append(f"embedding.mode: expected one of {EMBEDDING_MODES}, got {embedding_mode!r}")
    llm_mode = llm.get("mode", "scripted")
    if llm_mode not in LLM_MODES:
        errors.append(f"llm.mode: expected one of {LLM_MODES}, got {llm_mode!r}")

    try:
        retrieval = RetrievalConfig(**retrieval_kwargs)
    except (ConfigError, TypeError) as exc:
        errors.append(f"retrieval: {exc}")
        retrieval = RetrievalConfig()
    try:
        generation = GenerationParams(**generation_kwargs)
    except (ConfigError, TypeError) as exc:
        errors.append(f"generation: {exc}")
        generation = GenerationParams()

    if errors:
        raise ConfigError("invalid configuration: " + "; ".join(errors))

    return RunConfig(
        chunk_size=flat["chunk_size"],
        overlap=flat["overlap"],
        seed=flat["seed"],
        retrieval=retrieval,
        generation=generation,
        toggles=StageToggles(**toggle_kwargs),
        mapping_weights=MappingWeights(**weight_kwargs),
        embedding_mode=embedding_mode,
        embedding_dim=int(embedding.get("dim", 256)),
        embedding_url=embedding.get("url"),
        embedding_key=embedding.get("key"),
        llm_mode=llm_mode,
        llm_rules=llm.get("rules"),
        llm_url=llm.get("url"),
        llm_model=llm.get("model"),
        llm_key=llm.get("key"),
    )


def make_embedding_backend(cfg: RunConfig):
    if cfg.embedding_mode == "offline":
        return HashEmbeddingBackend(dim=cfg.embedding_dim, seed=cfg.seed)
    url = os.environ.get(ENV_EMBED_URL) or cfg.embedding_url
    if not url:
        raise ConfigError(
            f"embedding.mode is http but neither {ENV_EMBED_URL} nor embedding.url is set"
        )
    key = os.environ.get(ENV_EMBED_KEY) or cfg.embedding_key
    return HTTPEmbeddingBackend(url, key=key)


def make_generation_backend(cfg: RunConfig):
    if cfg.llm_mode == "scripted":
        if not cfg.llm_rules:
            raise ConfigError("llm.mode is scripted but llm.rules is not set")
        return ScriptedBackend.from_file(cfg.llm_rules)
    url = os.environ.get(ENV_LLM_URL) or cfg.llm_url
    model = os.environ.get(ENV_LLM_MODEL) or cfg.llm_model
    if not url or not model:
        raise ConfigError(
            "llm.mode is live but the endpoint is incomplete: set "
            f"{ENV_LLM_URL}/{ENV_LLM_MODEL} or llm.url/llm.model"
        )
    key = os.environ.get(ENV_LLM_KEY) or cfg.llm_key
    return HTTPChatBackend(url, model, key=key)


def make_backends(cfg: RunConfig) -> Backends:
    return Backends(
        embedding=make_embedding_backend(cfg),
        generation=make_generation_backend(cfg),
    )


def make_settings(cfg: RunConfig, method: str, ablate=()) -> EnrichmentSettings:
    toggles = cfg.toggles
    if ablate:
        StageToggles.ablate(*ablate)  # validates the stage names
        toggles = StageToggles(
            **{
                name: getattr(toggles, name) and name not in ablate
                for name in (
                    "relevance_detection", "evidence_collection",
                    "evidence_verification", "summary_generation",
                )
            }
        )
    return EnrichmentSettings(
        chunk_size=cfg.chunk_size,
        overlap=cfg.overlap,
        retrieval=cfg.retrieval,
        generation=cfg.generation,
        toggles=toggles,
        method=method,
    )
