"""Operator surface: infer, train, score, skills, replay.

Exit codes are a stable contract: 0 success, 1 domain failure (empty result,
reflection invalid), 2 configuration error. Domain and configuration failures
print a machine-readable error JSON to stdout.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .backends import HTTPBackend
from .clock import SystemClock
from .config import RunConfig, build_web_env, load_config
from .errors import ConfigError, EmptyResult, TableCrewError, UnknownSkill
from .evolution.train import TrainingSetup, train
from .orchestrator import InferenceSetup, run_inference
from .planning import OrchestratorConfig, WorkerConfig
from .scoring.compare import ComparatorConfig
from .scoring.metrics import score
from .skills.bank import SkillBank
from .tables import Query, Table, TableSchema, parse_table, render_table
from .trajectory import read_trajectory_jsonl
from .webenv import FixtureCorpus, fixture_key

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_CONFIG = 2


def _error_json(kind: str, message: str) -> None:
    print(json.dumps({"error": {"kind": kind, "message": message}}))


def _load_schema(path: Path) -> TableSchema:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    cols = data["columns"] if isinstance(data, dict) else data
    columns = []
    for col in cols:
        if isinstance(col, dict):
            columns.append((col["name"], col["kind"]))
        else:
            columns.append((col[0], col[1]))
    return TableSchema(columns=tuple(columns))


def _load_table(path: Path, schema: TableSchema) -> Table:
    return parse_table(Path(path).read_text(encoding="utf-8"), schema)


def _banks(cfg: RunConfig) -> tuple[SkillBank, SkillBank, SkillBank | None]:
    orch = SkillBank(cfg.orchestrator_bank_dir, k1=cfg.bm25_k1, b=cfg.bm25_b)
    worker = SkillBank(cfg.worker_bank_dir, k1=cfg.bm25_k1, b=cfg.bm25_b)
    remote = None
    if cfg.remote_bank_dir is not None:
        remote = SkillBank(cfg.remote_bank_dir, k1=cfg.bm25_k1, b=cfg.bm25_b)
    return orch, worker, remote


def _inference_setup(cfg: RunConfig, run_dir: Path, schema: TableSchema | None,
                     clock=None) -> InferenceSetup:
    clock = clock or SystemClock()
    orch_bank, worker_bank, remote = _banks(cfg)
    orch_spec = cfg.backend_spec("orchestrator")
    worker_spec = cfg.backend_spec("worker")
    if orch_spec is None or worker_spec is None:
        raise ConfigError("config must declare [backends.orchestrator] and [backends.worker]")
    return InferenceSetup(
        orchestrator_backend=orch_spec.build("orchestrator", clock, cfg.seed, cfg.default_playbook),
        worker_backend=worker_spec.build("worker", clock, cfg.seed, cfg.default_playbook),
        web_env=build_web_env(cfg, clock),
        orchestrator_config=OrchestratorConfig(
            max_workers=cfg.max_workers,
            strategy_bank=orch_bank,
            round2_missing_threshold=cfg.round2_missing_threshold,
        ),
        worker_config=WorkerConfig(
            max_steps=cfg.max_steps,
            generation_timeout_s=cfg.generation_timeout_s,
            tool_timeout_s=cfg.tool_timeout_s,
        ),
        run_dir=run_dir,
        schema=schema,
        clock=clock,
        resolve_config=cfg.resolve_config(),
        worker_bank=worker_bank,
        remote_bank=remote,
    )


def cmd_infer(args) -> int:
    try:
        cfg = load_config(Path(args.config))
        query_text = args.query or Path(args.query_file).read_text(encoding="utf-8").strip()
        schema = _load_schema(Path(args.schema)) if args.schema else None
        columns = tuple(n for n, _ in schema.columns) if schema else None
        query = Query(text=query_text, requested_columns=columns)
        run_dir = Path(args.out)
        setup = _inference_setup(cfg, run_dir, schema)
    except (ConfigError, FileNotFoundError, ValueError, KeyError) as exc:
        _error_json("config", str(exc))
        return EXIT_CONFIG
    try:
        (run_dir / "query.txt").parent.mkdir(parents=True, exist_ok=True)
        (run_dir / "query.txt").write_text(query.text + "\n", encoding="utf-8")
        result = run_inference(query, setup)
    except EmptyResult as exc:
        _error_json("empty_result", str(exc))
        return EXIT_DOMAIN
    except TableCrewError as exc:
        _error_json("domain", str(exc))
        return EXIT_DOMAIN
    print(render_table(result.table))
    return EXIT_OK if result.table.row_count else EXIT_DOMAIN


def _load_dataset(path: Path) -> list[tuple[Query, Table | None, TableSchema]]:
    """Parse the dataset file; a malformed gold table yields gold=None so the
    training loop can log that episode as failed and continue."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    tasks = data["tasks"] if isinstance(data, dict) else data
    base = Path(path).parent
    out = []
    for task in tasks:
        columns = tuple((c[0], c[1]) if not isinstance(c, dict) else (c["name"], c["kind"])
                        for c in task["columns"])
        schema = TableSchema(columns=columns)
        query = Query(text=task["query"], language=task.get("language", "en"),
                      requested_columns=schema.names)
        gold_path = Path(task["gold"])
        if not gold_path.is_absolute():
            gold_path = base / gold_path
        try:
            gold = _load_table(gold_path, schema)
        except (FileNotFoundError, TableCrewError):
            gold = None
        out.append((query, gold, schema))
    return out


def cmd_train(args) -> int:
    try:
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.backend_playbook:
            overrides["default_playbook"] = args.backend_playbook
        if args.banks:
            overrides["banks"] = {
                "orchestrator": str(Path(args.banks) / "orchestrator"),
                "worker": str(Path(args.banks) / "worker"),
            }
        cfg = load_config(Path(args.config), overrides)
        tasks = _load_dataset(Path(args.dataset))
        if args.episodes is not None:
            tasks = tasks[: args.episodes]
        out_dir = Path(args.out)
        orch_bank, worker_bank, remote = _banks(cfg)
    except (ConfigError, FileNotFoundError, ValueError, KeyError) as exc:
        _error_json("config", str(exc))
        return EXIT_CONFIG

    clock = SystemClock()
    dataset = [(q, gold) for q, gold, _ in tasks]
    schema_by_query = {q.text: schema for q, _, schema in tasks}

    def make_setup(query: Query, episode_dir: Path) -> InferenceSetup:
        setup = _inference_setup(cfg, episode_dir, None, clock=clock)
        # The dataset task fixes the schema, kinds included.
        setup.schema = schema_by_query[query.text]
        return setup

    def build_backend(role: str):
        spec = cfg.backend_spec(role)
        if spec is None:
            return None
        return spec.build(role, clock, cfg.seed, cfg.default_playbook)

    setup = TrainingSetup(
        make_inference_setup=make_setup,
        episodes_dir=out_dir / "episodes",
        reflect_backend=build_backend("reflect"),
        digest_backend=build_backend("digest"),
        cluster_backend=build_backend("cluster"),
        metrics_path=out_dir / "metrics.jsonl",
        seed=cfg.seed,
    )
    try:
        train(dataset, (orch_bank, worker_bank), setup)
    except TableCrewError as exc:
        _error_json("domain", str(exc))
        return EXIT_DOMAIN
    print(json.dumps({
        "episodes": len(dataset),
        "orchestrator_bank_hash": orch_bank.content_hash(),
        "worker_bank_hash": worker_bank.content_hash(),
        "metrics": str(out_dir / "metrics.jsonl"),
    }))
    return EXIT_OK


def cmd_score(args) -> int:
    try:
        schema = _load_schema(Path(args.schema))
        pred = _load_table(Path(args.pred), schema)
        gold = _load_table(Path(args.gold), schema)
        judge = HTTPBackend(args.judge) if args.judge else None
        config = ComparatorConfig(semantic_judge=judge)
    except (FileNotFoundError, ValueError, KeyError, TableCrewError) as exc:
        _error_json("config", str(exc))
        return EXIT_CONFIG
    report = score(pred, gold, config=config)
    print(json.dumps(report.to_dict(), ensure_ascii=False, indent=2))
    return EXIT_OK if report.success else EXIT_DOMAIN


def cmd_skills(args) -> int:
    try:
        bank = SkillBank(Path(args.banks))
    except TableCrewError as exc:
        _error_json("config", str(exc))
        return EXIT_CONFIG
    if args.subcommand == "list":
        for name in bank.names():
            s = bank.latest(name)
            print(f"{s.name}\t{s.kind}\tv{s.version}\t{s.description}")
        return EXIT_OK
    if args.subcommand == "show":
        try:
            print(bank.latest(args.name).body)
        except UnknownSkill as exc:
            _error_json("unknown_skill", str(exc))
            return EXIT_DOMAIN
        return EXIT_OK
    if args.subcommand == "diff":
        other = SkillBank(Path(args.against))
        added = sorted(bank.snapshot() - other.snapshot())
        for name, version, digest in added:
            print(f"+ {name} v{version} {digest[:12]}")
        return EXIT_OK
    _error_json("config", f"unknown skills subcommand {args.subcommand!r}")
    return EXIT_CONFIG


def cmd_replay(args) -> int:
    traj_path = Path(args.run) / "traj" / f"{args.worker}.jsonl"
    if not traj_path.exists():
        _error_json("config", f"no trajectory at {traj_path}")
        return EXIT_CONFIG
    traj = read_trajectory_jsonl(traj_path)
    missing = 0
    corpus = FixtureCorpus(Path(args.corpus)) if args.corpus else None
    for step in traj.steps:
        line = f"[{step.index}] t={step.ts:.3f} {step.kind}"
        if step.tool:
            line += f" {step.tool}({json.dumps(step.args, ensure_ascii=False)})"
        line += f" obs={step.obs_digest} latency={step.latency_ms:.1f}ms"
        print(line)
        if corpus is not None and step.tool in ("search", "fetch") and step.args:
            request = step.args.get("query") or step.args.get("url") or ""
            if corpus.get(step.tool, request) is None:
                print(f"    MISSING from corpus (key {fixture_key(step.tool, request)[:12]})")
                missing += 1
    for anomaly in traj.anomalies:
        print(f"anomaly: {anomaly.kind} at step {anomaly.step_index} ({anomaly.detail})")
    if missing:
        _error_json("fixture_miss", f"{missing} recorded requests absent from corpus")
        return EXIT_DOMAIN
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tablecrew",
        description="Bi-level multi-agent web-to-table search runtime",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_infer = sub.add_parser("infer", help="answer one query with frozen banks")
    p_infer.add_argument("--config", required=True)
    group = p_infer.add_mutually_exclusive_group(required=True)
    group.add_argument("--query")
    group.add_argument("--query-file")
    p_infer.add_argument("--schema", help="JSON schema file (columns + kinds)")
    p_infer.add_argument("--out", required=True, help="run directory")
    p_infer.set_defaults(func=cmd_infer)

    p_train = sub.add_parser("train", help="run the self-evolving training loop")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--dataset", required=True)
    p_train.add_argument("--episodes", type=int, default=None)
    p_train.add_argument("--banks", default=None, help="override banks root directory")
    p_train.add_argument("--backend-playbook", default=None)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--out", required=True, help="training output directory")
    p_train.set_defaults(func=cmd_train)

    p_score = sub.add_parser("score", help="score a prediction against gold")
    p_score.add_argument("--pred", required=True)
    p_score.add_argument("--gold", required=True)
    p_score.add_argument("--schema", required=True)
    p_score.add_argument("--judge", default=None, help="semantic judge endpoint URL")
    p_score.set_defaults(func=cmd_score)

    p_skills = sub.add_parser("skills", help="inspect skill banks")
    p_skills.add_argument("subcommand", choices=["list", "show", "diff"])
    p_skills.add_argument("name", nargs="?")
    p_skills.add_argument("--banks", required=True)
    p_skills.add_argument("--against", help="second bank for diff")
    p_skills.set_defaults(func=cmd_skills)

    p_replay = sub.add_parser("replay", help="print a recorded trajectory")
    p_replay.add_argument("--run", required=True)
    p_replay.add_argument("--worker", required=True)
    p_replay.add_argument("--corpus", default=None, help="check requests against this corpus")
    p_replay.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
