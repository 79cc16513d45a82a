"""Command-line pipeline driver.

Subcommands: make-corpus, ingest, sft-gen, pref-gen, export, eval, report,
verify-dpo, serve. Every generation step is deterministic for a fixed seed
with the mock backends.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import builder, dpo, metrics, service
from .config import PipelineConfig, TrainerExportConfig, load_pipeline_config
from .corpus import load_manifest, split_corpus, validate_corpus
from .events import EventLogCorruptError, replay_log
from .minicorpus import build_mini_corpus
from .privacy import AuditLog, PrivacyGate
from .student import HttpStudent, MockStudent
from .teacher import TeacherConfig, make_teacher, build_judge_quality_payload
from .templates import load_sft_templates, template_texts

logger = logging.getLogger(__name__)


def _pipeline_config(args) -> PipelineConfig:
    if getattr(args, "config", None):
        return load_pipeline_config(args.config)
    return PipelineConfig()


def _teacher(args):
    return make_teacher(TeacherConfig(backend=args.backend))


def _student(args):
    return MockStudent() if args.backend == "mock" else HttpStudent()


def _gate(out_dir: Path) -> PrivacyGate:
    return PrivacyGate(AuditLog(out_dir / service.AUDIT_LOG_FILENAME))


def cmd_make_corpus(args) -> int:
    manifest_path = build_mini_corpus(args.out)
    print(f"wrote synthetic mini corpus: {manifest_path}")
    return 0


def cmd_ingest(args) -> int:
    manifest = load_manifest(args.manifest)
    report = validate_corpus(manifest)
    print(f"procedures: {len(manifest.procedures)}  frames: {len(manifest.frames)}  "
          f"annotations: {len(manifest.annotations)}")
    for cls, count in sorted(report.class_counts.items(), key=lambda kv: kv[0].value):
        flag = f"  MISMATCH delta={count.delta:+d}" if count.mismatch else ""
        print(f"  {cls.value:<28} declared={count.declared:<5} actual={count.actual:<5}{flag}")
    if report.orphan_frames:
        print(f"orphan frames (no annotations): {', '.join(report.orphan_frames)}")
    if report.orphan_procedures:
        print(f"orphan procedures (no frames): {', '.join(report.orphan_procedures)}")
    return 0


def cmd_sft_gen(args) -> int:
    config = _pipeline_config(args)
    out_dir = Path(args.out)
    manifest = load_manifest(args.manifest)
    train_ids, test_ids = split_corpus(manifest, args.seed, config.test_fraction)
    templates = load_sft_templates(args.templates)
    records = builder.build_sft_dataset(
        manifest, train_ids, _teacher(args), _gate(out_dir), templates, config, out_dir
    )
    split_doc = {"seed": args.seed, "train": train_ids, "test": test_ids}
    (out_dir / "split.json").write_text(
        json.dumps(split_doc, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    failed = sum(1 for r in records if r.review_status is builder.ReviewStatus.FAILED)
    print(f"sft-gen: {len(records)} records ({failed} failed), "
          f"train={len(train_ids)} test={len(test_ids)} -> {out_dir / builder.SFT_DATASET_FILENAME}")
    return 0


def cmd_pref_gen(args) -> int:
    config = _pipeline_config(args)
    out_dir = Path(args.out)
    sft_path = out_dir / builder.SFT_DATASET_FILENAME
    if not sft_path.exists():
        print(f"error: {sft_path} not found; run sft-gen first", file=sys.stderr)
        return 2
    records = builder.load_sft_dataset(sft_path)
    event_log_path = out_dir / service.EVENT_LOG_FILENAME
    if event_log_path.exists():
        state = replay_log(event_log_path)
        records = builder.apply_review_decisions(records, state.decision_map())
    pairs, failures = builder.build_preference_dataset(
        records,
        _student(args),
        _teacher(args),
        _gate(out_dir),
        config,
        out_dir,
        seed=args.seed,
        include_pending=args.include_pending,
    )
    print(f"pref-gen: {len(pairs)} pairs, {len(failures)} failures "
          f"-> {out_dir / builder.PREF_DATASET_FILENAME}")
    return 0


def cmd_export(args) -> int:
    config = _pipeline_config(args)
    out_dir = Path(args.out)
    records = builder.load_sft_dataset(out_dir / builder.SFT_DATASET_FILENAME)
    pref_path = out_dir / builder.PREF_DATASET_FILENAME
    pairs, _ = builder.load_pref_dataset(pref_path) if pref_path.exists() else ([], [])
    event_log_path = out_dir / service.EVENT_LOG_FILENAME
    if event_log_path.exists():
        state = replay_log(event_log_path)
        records = builder.apply_review_decisions(records, state.decision_map())
        pairs = builder.apply_review_decisions(pairs, state.decision_map())
    if args.assume_approved:
        records = [
            r if r.review_status is not builder.ReviewStatus.PENDING
            else replace(r, review_status=builder.ReviewStatus.APPROVED)
            for r in records
        ]
        pairs = [
            p if p.review_status is not builder.ReviewStatus.PENDING
            else replace(p, review_status=builder.ReviewStatus.APPROVED)
            for p in pairs
        ]
    try:
        snapshot = builder.export_trainer_bundle(
            records,
            pairs,
            TrainerExportConfig(dpo_beta=config.dpo_beta),
            config,
            template_texts(args.templates),
            out_dir / "export",
            created_at=args.timestamp,
        )
    except builder.ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"export: dataset {snapshot.dataset_id} -> {out_dir / 'export'}")
    return 0


def cmd_eval(args) -> int:
    config = _pipeline_config(args)
    out_dir = Path(args.out)
    cases = service.load_eval_cases(Path(args.cases))
    models = args.models.split(",") if args.models else None
    gate = _gate(out_dir)
    teacher = _teacher(args)
    embedder = metrics.HashEmbedder()
    results = []
    for case in sorted(cases, key=lambda c: c.case_id):
        for model, answer in sorted(case.model_answers.items()):
            if models and model not in models:
                continue
            payload = build_judge_quality_payload(
                candidate=answer,
                reference=case.reference,
                prompt=case.prompt,
                anatomy=case.anatomy_class,
                cme_side=case.cme_side,
            )
            sanitized = gate.submit(payload, destination=getattr(teacher, "model", "teacher"))
            judge = teacher.judge_quality(sanitized)
            results.append(
                metrics.MetricResult(
                    case_id=case.case_id,
                    model=model,
                    anatomy_class=case.anatomy_class,
                    bleu4=metrics.bleu4(answer, case.reference),
                    embed_f1=metrics.embed_f1(answer, case.reference, embedder),
                    judge=judge,
                    laterality_flag=metrics.laterality_check(answer, case.cme_side).flagged,
                )
            )
    if not results:
        print("error: no (case, model) combinations matched", file=sys.stderr)
        return 1
    eval_dir = out_dir / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    (eval_dir / "results.jsonl").write_text(
        "".join(
            json.dumps(metrics.metric_result_to_dict(r), sort_keys=True, separators=(",", ":")) + "\n"
            for r in results
        ),
        encoding="utf-8",
    )
    report = metrics.aggregate(results)
    (eval_dir / "report.json").write_text(
        json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(f"eval: {len(results)} scored answers -> {eval_dir}")
    return 0


def cmd_report(args) -> int:
    out_dir = Path(args.out)
    results_path = out_dir / "eval" / "results.jsonl"
    if not results_path.exists():
        print(f"error: {results_path} not found; run eval first", file=sys.stderr)
        return 2
    results = [
        metrics.metric_result_from_dict(json.loads(line))
        for line in results_path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    expert = []
    event_log_path = out_dir / service.EVENT_LOG_FILENAME
    if event_log_path.exists():
        state = replay_log(event_log_path)
        expert = [
            metrics.ExpertDecision(
                case_id=s.case_id, scores=dict(s.scores), preferred_models=s.preferred_models
            )
            for s in state.submissions.values()
        ]
    report = metrics.aggregate(results, expert)
    text = metrics.render_report_text(report)
    (out_dir / "eval" / "report.txt").write_text(text, encoding="utf-8")
    (out_dir / "eval" / "report.json").write_text(
        json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(text, end="")
    return 0


def cmd_verify_dpo(args) -> int:
    rng_errors = []
    for seed in range(args.seeds):
        policy = dpo.ToyPolicy(vocab_size=4, seq_len=3, seed=seed, policy_scale=0.3)
        pairs = policy.random_pairs(5, np.random.default_rng(seed + 10_000))
        rng_errors.append(dpo.finite_diff_check(policy, pairs, beta=args.beta, eps=1e-5))
    max_error = max(rng_errors)
    print("finite-difference gradient check")
    print(f"  seeds: {args.seeds}  vocab: 4  length: 3  beta: {args.beta}  eps: 1e-05")
    print(f"  max relative error: {max_error:.3e}")

    policy = dpo.ToyPolicy(vocab_size=4, seq_len=3, seed=0, policy_scale=0.3)
    pairs = policy.random_pairs(5, np.random.default_rng(42))
    trajectory = dpo.toy_train(policy, pairs, steps=args.steps, learning_rate=0.05, beta=args.beta)
    print(f"\ntoy training ({args.steps} steps, lr 0.05, beta {args.beta})")
    print(f"  {'step':>4}  {'loss':>10}  {'mean margin':>12}")
    stride = max(1, args.steps // 10)
    for step in list(range(0, len(trajectory.losses), stride)) + [len(trajectory.losses) - 1]:
        print(f"  {step:>4}  {trajectory.losses[step]:>10.6f}  {trajectory.mean_margins[step]:>12.6f}")
    ok = max_error < 1e-5 and trajectory.final_loss < trajectory.initial_loss
    print(f"\nresult: {'ok' if ok else 'FAILED'}")
    return 0 if ok else 1


def cmd_serve(args) -> int:
    import uvicorn

    frontend = Path(args.frontend) if args.frontend else None
    try:
        app = service.create_app(args.out, frontend_dir=frontend)
    except EventLogCorruptError as exc:
        print(f"refusing to start: {exc}", file=sys.stderr)
        return 1
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="surgdistill", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, manifest=False, out=True, seed=False, backend=False):
        if manifest:
            p.add_argument("--manifest", required=True, help="corpus manifest path")
        if out:
            p.add_argument("--out", required=True, help="pipeline working directory")
        if seed:
            p.add_argument("--seed", type=int, default=7)
        if backend:
            p.add_argument("--backend", choices=("mock", "http"), default="mock")
        p.add_argument("--config", default=None, help="PipelineConfig overrides (JSON)")

    p = sub.add_parser("make-corpus", help="materialize the bundled synthetic mini corpus")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_corpus)

    p = sub.add_parser("ingest", help="validate a manifest and print the corpus report")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("sft-gen", help="build the instruction dataset (step 1)")
    add_common(p, manifest=True, seed=True, backend=True)
    p.add_argument("--templates", default=None, help="directory with editable template assets")
    p.set_defaults(func=cmd_sft_gen)

    p = sub.add_parser("pref-gen", help="build the preference dataset (step 2)")
    add_common(p, seed=True, backend=True)
    p.add_argument(
        "--include-pending",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="treat unreviewed (pending) records as provisionally approved",
    )
    p.set_defaults(func=cmd_pref_gen)

    p = sub.add_parser("export", help="write the trainer-ready bundle")
    add_common(p)
    p.add_argument("--templates", default=None)
    p.add_argument("--timestamp", default=None, help="pin the snapshot created_at (ISO 8601)")
    p.add_argument(
        "--assume-approved",
        action="store_true",
        help="export pending records as approved (unreviewed desk runs)",
    )
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("eval", help="score model answers against references")
    add_common(p, backend=True)
    p.add_argument("--cases", required=True, help="eval cases JSONL")
    p.add_argument("--models", default=None, help="comma-separated model names to score")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render the aggregated evaluation report")
    add_common(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("verify-dpo", help="finite-difference and toy-training report")
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--beta", type=float, default=0.1)
    p.set_defaults(func=cmd_verify_dpo)

    p = sub.add_parser("serve", help="run the review service")
    add_common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--frontend", default=None, help="built frontend directory to serve")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
