"""Run configuration: one TOML file, flags override keys, credentials env-only."""
from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backends import HTTPBackend, ScriptedBackend
from .clock import Clock, SystemClock
from .errors import ConfigError
from .skills.lexical import DEFAULT_B, DEFAULT_K1
from .skills.resolver import DEFAULT_RESOLVE_THRESHOLD, DEFAULT_TOP_N, ResolveConfig
from .skills.fusion import DEFAULT_RRF_K

BACKEND_ROLES = ("orchestrator", "worker", "digest", "reflect", "judge", "cluster")

ENV_BACKEND_URL = "BACKEND_{role}_URL"
ENV_BACKEND_KEY = "BACKEND_{role}_KEY"


@dataclass
class BackendSpec:
    kind: str = "scripted"  # scripted | http
    playbook: Path | None = None

    def build(self, role: str, clock: Clock, seed: int, default_playbook: Path | None = None):
        if self.kind == "scripted":
            playbook = self.playbook or default_playbook
            if playbook is None:
                raise ConfigError(f"backend {role}: scripted kind needs a playbook path")
            if not Path(playbook).exists():
                raise ConfigError(f"backend {role}: playbook {playbook} does not exist")
            return ScriptedBackend.from_playbook(Path(playbook), clock=clock, seed=seed)
        if self.kind == "http":
            url = os.environ.get(ENV_BACKEND_URL.format(role=role.upper()), "")
            key = os.environ.get(ENV_BACKEND_KEY.format(role=role.upper()), "")
            if not url:
                raise ConfigError(
                    f"backend {role}: http kind needs {ENV_BACKEND_URL.format(role=role.upper())}"
                )
            return HTTPBackend(url, api_key=key)
        raise ConfigError(f"backend {role}: unknown kind {self.kind!r}")


@dataclass
class RunConfig:
    base_dir: Path
    seed: int = 0
    orchestrator_bank_dir: Path = Path("banks/orchestrator")
    worker_bank_dir: Path = Path("banks/worker")
    remote_bank_dir: Path | None = None
    environment_mode: str = "fixture"  # fixture | live
    corpus_dir: Path | None = None
    miss_policy: str = "error"
    search_url: str = ""
    max_workers: int = 10
    round2_missing_threshold: float = 0.10
    max_steps: int = 12
    generation_timeout_s: float = 120.0
    tool_timeout_s: float = 30.0
    bm25_k1: float = DEFAULT_K1
    bm25_b: float = DEFAULT_B
    rrf_k: int = DEFAULT_RRF_K
    resolve_threshold: float = DEFAULT_RESOLVE_THRESHOLD
    resolve_top_n: int = DEFAULT_TOP_N
    backends: dict[str, BackendSpec] = field(default_factory=dict)
    default_playbook: Path | None = None

    def resolve_config(self) -> ResolveConfig:
        return ResolveConfig(
            top_n=self.resolve_top_n,
            threshold=self.resolve_threshold,
            rrf_k=self.rrf_k,
        )

    def backend_spec(self, role: str) -> BackendSpec | None:
        return self.backends.get(role)


def _as_path(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_config(path: Path, overrides: dict | None = None) -> RunConfig:
    """Parse the TOML file; every referenced input path must exist."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad TOML in {path}: {exc}") from exc
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    base = path.parent.resolve()
    banks = data.get("banks", {})
    env = data.get("environment", {})
    orch = data.get("orchestrator", {})
    worker = data.get("worker", {})
    retrieval = data.get("retrieval", {})

    cfg = RunConfig(
        base_dir=base,
        seed=int(data.get("seed", 0)),
        orchestrator_bank_dir=_as_path(base, banks.get("orchestrator", "banks/orchestrator")),
        worker_bank_dir=_as_path(base, banks.get("worker", "banks/worker")),
        remote_bank_dir=_as_path(base, banks["remote"]) if banks.get("remote") else None,
        environment_mode=env.get("mode", "fixture"),
        corpus_dir=_as_path(base, env["corpus"]) if env.get("corpus") else None,
        miss_policy=env.get("miss_policy", "error"),
        search_url=env.get("search_url", ""),
        max_workers=int(orch.get("max_workers", 10)),
        round2_missing_threshold=float(orch.get("round2_missing_threshold", 0.10)),
        max_steps=int(worker.get("max_steps", 12)),
        generation_timeout_s=float(worker.get("generation_timeout_s", 120.0)),
        tool_timeout_s=float(worker.get("tool_timeout_s", 30.0)),
        bm25_k1=float(retrieval.get("bm25_k1", DEFAULT_K1)),
        bm25_b=float(retrieval.get("bm25_b", DEFAULT_B)),
        rrf_k=int(retrieval.get("rrf_k", DEFAULT_RRF_K)),
        resolve_threshold=float(retrieval.get("resolve_threshold", DEFAULT_RESOLVE_THRESHOLD)),
        resolve_top_n=int(retrieval.get("resolve_top_n", DEFAULT_TOP_N)),
        default_playbook=_as_path(base, data["default_playbook"]) if data.get("default_playbook") else None,
    )

    for role, spec in data.get("backends", {}).items():
        if role not in BACKEND_ROLES:
            raise ConfigError(f"unknown backend role {role!r}")
        cfg.backends[role] = BackendSpec(
            kind=spec.get("kind", "scripted"),
            playbook=_as_path(base, spec["playbook"]) if spec.get("playbook") else None,
        )

    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.environment_mode not in ("fixture", "live"):
        raise ConfigError(f"unknown environment mode {cfg.environment_mode!r}")
    if cfg.environment_mode == "fixture":
        if cfg.corpus_dir is None:
            raise ConfigError("fixture mode needs environment.corpus")
        if not cfg.corpus_dir.exists():
            raise ConfigError(f"fixture corpus {cfg.corpus_dir} does not exist")
    if cfg.miss_policy not in ("error", "empty"):
        raise ConfigError(f"unknown miss policy {cfg.miss_policy!r}")
    for role, spec in cfg.backends.items():
        if spec.kind == "scripted":
            playbook = spec.playbook or cfg.default_playbook
            if playbook is None or not Path(playbook).exists():
                raise ConfigError(f"backend {role}: playbook missing or absent on disk")
    if cfg.max_workers < 1 or cfg.max_steps < 1:
        raise ConfigError("max_workers and max_steps must be >= 1")
    # Bank directories are created on demand (cold start with empty banks is allowed).
    cfg.orchestrator_bank_dir.mkdir(parents=True, exist_ok=True)
    cfg.worker_bank_dir.mkdir(parents=True, exist_ok=True)
    if cfg.remote_bank_dir is not None and not cfg.remote_bank_dir.exists():
        raise ConfigError(f"remote bank {cfg.remote_bank_dir} does not exist")


def build_web_env(cfg: RunConfig, clock: Clock | None = None):
    from .webenv import FixtureCorpus, FixtureEnvironment, LiveWebEnvironment, SEARCH_API_KEY_ENV

    if cfg.environment_mode == "fixture":
        return FixtureEnvironment(FixtureCorpus(cfg.corpus_dir), miss_policy=cfg.miss_policy)
    return LiveWebEnvironment(
        search_url=cfg.search_url,
        api_key=os.environ.get(SEARCH_API_KEY_ENV, ""),
        timeout_s=cfg.tool_timeout_s,
        clock=clock or SystemClock(),
    )
