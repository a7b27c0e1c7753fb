"""Command line pipeline: ingest, build-graph, retrieve, infer, postprocess,
score, agree, report. Each stage reads the previous stage's files from the
output directory and records a manifest with config and input hashes."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from .consist import output_validity_violations, run_to_fixed_point
from .corpus import (
    LETTERS,
    CorpusError,
    QuestionRecord,
    detect_none_option,
    duplicate_classes,
    load_docs,
    load_questions,
    parse_gold,
    sibling_groups,
)
from .embed import EmbedderSpec, make_embedder
from .evaluate import agreement_report, bias_stats, oracle_report, score_run
from .graphrag import (
    Bm25Params,
    DocGraph,
    HybridParams,
    RetrievalResult,
    TopicContextCache,
    TopicRetriever,
)
from .reason import (
    AggregationParams,
    LlmClientSpec,
    SamplingParams,
    aggregate,
    make_client,
    sample_question,
    tally,
)

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    questions: str | None = None
    docs: str | None = None
    out: str = "out"
    seed: int = 0
    embedder: EmbedderSpec = field(default_factory=EmbedderSpec)
    llm: LlmClientSpec = field(default_factory=LlmClientSpec)
    script_path: str | None = None
    hybrid: HybridParams = field(default_factory=HybridParams)
    bm25: Bm25Params = field(default_factory=Bm25Params)
    sampling: SamplingParams = field(default_factory=SamplingParams)
    theta: float = 0.5
    heuristics_enabled: bool = True
    heuristics_max_iterations: int = 10
    topic_union: bool = False
    max_workers: int = 1

    def param_dict(self) -> dict:
        """Parameters that define the run semantics. Input and output paths
        stay out; the LLM script participates through its content hash."""
        params = {
            "seed": self.seed,
            "embedder": {k: v for k, v in vars(self.embedder).items() if k != "cache_dir"},
            "llm": {
                "kind": self.llm.kind,
                "model": self.llm.model,
                "max_retries": self.llm.max_retries,
            },
            "hybrid": dict(vars(self.hybrid)),
            "bm25": dict(vars(self.bm25)),
            "sampling": dict(vars(self.sampling)),
            "theta": self.theta,
            "heuristics_enabled": self.heuristics_enabled,
            "heuristics_max_iterations": self.heuristics_max_iterations,
            "topic_union": self.topic_union,
        }
        if self.script_path:
            params["llm"]["script_sha256"] = _sha256_file(self.script_path)
        return params

    def config_hash(self) -> str:
        blob = json.dumps(self.param_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def _write_jsonl(path: Path, rows: Sequence[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(_dump(row))
            fh.write("\n")


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dump(obj) + "\n", encoding="utf-8")


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


def load_predictions(path: str | Path) -> dict[str, frozenset[str]]:
    """Reads {"id": ..., "prediction": "A,C"} lines."""
    preds: dict[str, frozenset[str]] = {}
    for row in _read_jsonl(Path(path)):
        preds[str(row["id"])] = parse_gold(str(row["prediction"]))
    return preds


def _write_manifest(
    config: RunConfig,
    stage: str,
    inputs: Mapping[str, str | Path],
    outputs: Sequence[Path],
    counts: Mapping[str, object],
) -> None:
    out_dir = Path(config.out)
    manifest = {
        "stage": stage,
        "config_hash": config.config_hash(),
        "inputs": {name: _sha256_file(p) for name, p in sorted(inputs.items())},
        "outputs": {p.relative_to(out_dir).as_posix(): _sha256_file(p) for p in outputs},
        "counts": dict(counts),
    }
    _write_json(out_dir / "manifests" / f"{stage}.json", manifest)


def _require(value: str | None, flag: str) -> str:
    if not value:
        raise SystemExit(f"error: {flag} is required (flag or config file)")
    return value


# ---------------------------------------------------------------------------
# stages


def cmd_ingest(config: RunConfig) -> None:
    questions_path = _require(config.questions, "--questions")
    docs_path = _require(config.docs, "--docs")
    questions = load_questions(questions_path)
    topics = load_docs(docs_path)
    groups = sibling_groups(questions)
    multi_group_qids = {qid for g in groups if len(g.question_ids) > 1 for qid in g.question_ids}
    n_docs = sum(len(v) for v in topics.values())
    structure = {
        "n_questions": len(questions),
        "n_topics_questions": len({q.topic_id for q in questions}),
        "n_topics_docs": len(topics),
        "n_docs": n_docs,
        "none_option_questions": sum(
            1 for q in questions if any(detect_none_option(q.options[l]) for l in LETTERS)
        ),
        "duplicate_option_questions": sum(
            1 for q in questions if len(duplicate_classes(q)) < len(LETTERS)
        ),
        "n_sibling_groups": len(groups),
        "questions_in_multi_question_groups": len(multi_group_qids),
        "gold_available": sum(1 for q in questions if q.gold is not None),
        "multi_gold_questions": sum(1 for q in questions if q.gold and len(q.gold) > 1),
    }
    out_dir = Path(config.out)
    sib_path = out_dir / "ingest" / "siblings.jsonl"
    structure_path = out_dir / "ingest" / "structure.json"
    _write_jsonl(
        sib_path,
        [
            {"topic_id": g.topic_id, "event_key": g.event_key, "question_ids": list(g.question_ids)}
            for g in groups
        ],
    )
    _write_json(structure_path, structure)
    _write_manifest(
        config,
        "ingest",
        {"questions": questions_path, "docs": docs_path},
        [sib_path, structure_path],
        structure,
    )
    print(f"ingest: {len(questions)} questions, {n_docs} docs, {len(groups)} sibling groups")


def cmd_build_graph(config: RunConfig) -> None:
    docs_path = _require(config.docs, "--docs")
    topics = load_docs(docs_path)
    embedder = make_embedder(config.embedder)
    out_dir = Path(config.out)
    outputs = []
    n_edges = 0
    for topic_id in sorted(topics):
        retriever = TopicRetriever(
            topic_id,
            topics[topic_id],
            embedder,
            bm25_params=config.bm25,
            params=config.hybrid,
            query_input_type=config.embedder.query_input_type,
            document_input_type=config.embedder.document_input_type,
        )
        path = out_dir / "graphs" / f"topic_{topic_id}.json"
        _write_json(path, retriever.graph.to_json())
        outputs.append(path)
        n_edges += len(retriever.graph.edges)
    _write_manifest(
        config,
        "build-graph",
        {"docs": docs_path},
        outputs,
        {"n_topics": len(topics), "n_edges": n_edges},
    )
    print(f"build-graph: {len(topics)} topics, {n_edges} edges")


def _build_retrievers(config: RunConfig, topics, needed: set[int]) -> dict[int, TopicRetriever]:
    embedder = make_embedder(config.embedder)
    out_dir = Path(config.out)
    retrievers: dict[int, TopicRetriever] = {}
    for topic_id in sorted(needed):
        if topic_id not in topics:
            raise CorpusError(f"questions reference topic {topic_id} absent from the docs file")
        graph_path = out_dir / "graphs" / f"topic_{topic_id}.json"
        graph = None
        if graph_path.exists():
            graph = DocGraph.from_json(json.loads(graph_path.read_text(encoding="utf-8")))
        retrievers[topic_id] = TopicRetriever(
            topic_id,
            topics[topic_id],
            embedder,
            bm25_params=config.bm25,
            params=config.hybrid,
            query_input_type=config.embedder.query_input_type,
            document_input_type=config.embedder.document_input_type,
            graph=graph,
        )
    return retrievers


def cmd_retrieve(config: RunConfig) -> None:
    questions_path = _require(config.questions, "--questions")
    docs_path = _require(config.docs, "--docs")
    questions = load_questions(questions_path)
    topics = load_docs(docs_path)
    retrievers = _build_retrievers(config, topics, {q.topic_id for q in questions})
    cache = TopicContextCache()
    union_ctx: dict[int, RetrievalResult] = {}
    rows = []
    for q in questions:
        retriever = retrievers[q.topic_id]
        if config.topic_union:
            # every question pays for its own retrieval; the topic context is
            # the running union of everything retrieved so far
            cache.misses += 1
            result = retriever.retrieve_for_question(q)
            merged = union_ctx.get(q.topic_id)
            if merged is None:
                merged = result
            else:
                selected = list(merged.selected)
                provenance = dict(merged.provenance)
                for doc_id in result.selected:
                    if doc_id not in provenance:
                        selected.append(doc_id)
                        provenance[doc_id] = result.provenance[doc_id]
                merged = RetrievalResult(
                    topic_id=q.topic_id,
                    query_text=merged.query_text,
                    selected=selected,
                    provenance=provenance,
                    excluded=sorted(set(retriever.graph.nodes) - set(selected)),
                )
            union_ctx[q.topic_id] = merged
            result = merged
        else:
            result = cache.get_or_compute(
                q.topic_id, lambda q=q: retrievers[q.topic_id].retrieve_for_question(q)
            )
        rows.append({"id": q.id, **result.to_json()})
    out_path = Path(config.out) / "retrieval.jsonl"
    _write_jsonl(out_path, rows)
    counts = {
        "n_questions": len(questions),
        "n_topics": len(retrievers),
        "cache_hits": cache.hits,
        "cache_misses": cache.misses,
        "cache_hit_rate": cache.hit_rate,
    }
    _write_manifest(
        config,
        "retrieve",
        {"questions": questions_path, "docs": docs_path},
        [out_path],
        counts,
    )
    print(
        f"retrieve: {len(questions)} questions, cache hit rate "
        f"{cache.hit_rate:.3f} ({cache.hits}/{cache.hits + cache.misses})"
    )


def _make_llm_client(config: RunConfig):
    spec = config.llm
    if config.script_path:
        script = json.loads(Path(config.script_path).read_text(encoding="utf-8"))
        spec = replace(spec, script=script)
    return make_client(spec)


def cmd_infer(config: RunConfig) -> None:
    questions_path = _require(config.questions, "--questions")
    docs_path = _require(config.docs, "--docs")
    questions = load_questions(questions_path)
    topics = load_docs(docs_path)
    trace_path = Path(config.out) / "retrieval.jsonl"
    if not trace_path.exists():
        raise SystemExit("error: run the retrieve stage first (retrieval.jsonl is missing)")
    traces = {row["id"]: row for row in _read_jsonl(trace_path)}
    doc_lookup = {tid: {d.id: d for d in docs} for tid, docs in topics.items()}
    client = _make_llm_client(config)
    agg = AggregationParams(theta=config.theta)

    def run_one(q: QuestionRecord):
        trace = traces.get(q.id)
        if trace is None:
            raise CorpusError(f"no retrieval trace for question {q.id!r}")
        ctx_docs = [doc_lookup[q.topic_id][doc_id] for doc_id in trace["selected"]]
        samples = sample_question(q, ctx_docs, client, config.sampling)
        pred = aggregate(tally(samples), q, agg)
        return samples, pred

    if config.max_workers > 1:
        with ThreadPoolExecutor(max_workers=config.max_workers) as pool:
            results = list(pool.map(run_one, questions))
    else:
        results = [run_one(q) for q in questions]

    sample_rows = []
    pred_rows = []
    n_invalid = 0
    for q, (samples, pred) in zip(questions, results):
        for i, s in enumerate(samples):
            sample_rows.append(
                {
                    "question_id": q.id,
                    "sample_index": i,
                    "raw": s.raw,
                    "parsed": sorted(s.letters),
                    "valid": s.valid,
                }
            )
            n_invalid += 0 if s.valid else 1
        pred_rows.append({"id": q.id, "prediction": ",".join(sorted(pred))})
    out_dir = Path(config.out)
    samples_path = out_dir / "samples.jsonl"
    preds_path = out_dir / "predictions.jsonl"
    _write_jsonl(samples_path, sample_rows)
    _write_jsonl(preds_path, pred_rows)
    counts = {
        "n_questions": len(questions),
        "k": config.sampling.k,
        "theta": config.theta,
        "invalid_samples": n_invalid,
    }
    inputs = {"questions": questions_path, "docs": docs_path, "retrieval": trace_path}
    if config.script_path:
        inputs["script"] = config.script_path
    _write_manifest(config, "infer", inputs, [samples_path, preds_path], counts)
    print(f"infer: {len(questions)} questions, {n_invalid} invalid samples")


def cmd_postprocess(config: RunConfig, preds_path: str | None = None) -> None:
    questions_path = _require(config.questions, "--questions")
    questions = load_questions(questions_path)
    out_dir = Path(config.out)
    source = Path(preds_path) if preds_path else out_dir / "predictions.jsonl"
    preds = load_predictions(source)
    scoped = [q for q in questions if q.id in preds]
    dropped = len(questions) - len(scoped)
    if dropped:
        logger.warning("%d questions have no prediction and are left untouched", dropped)
    final_path = out_dir / "predictions.final.jsonl"
    audit_path = out_dir / "audit.jsonl"
    summary_path = out_dir / "consistency.json"
    if not config.heuristics_enabled:
        final = dict(preds)
        _write_jsonl(audit_path, [])
        summary = {"enabled": False, "iterations": 0, "converged": True, "rule_counts": {}, "contradictions": []}
    else:
        outcome = run_to_fixed_point(scoped, {q.id: preds[q.id] for q in scoped}, config.heuristics_max_iterations)
        final = dict(preds)
        final.update(outcome.predictions)
        _write_jsonl(audit_path, [c.to_json() for c in outcome.report.changes])
        summary = {
            "enabled": True,
            "iterations": outcome.report.iterations,
            "converged": outcome.report.converged,
            "rule_counts": outcome.report.rule_counts,
            "n_changes": len(outcome.report.changes),
            "contradictions": [c.to_json() for c in outcome.report.contradictions],
            "violations": output_validity_violations(scoped, outcome.predictions),
        }
    _write_jsonl(
        final_path,
        [{"id": qid, "prediction": ",".join(sorted(final[qid]))} for qid in preds],
    )
    _write_json(summary_path, summary)
    _write_manifest(
        config,
        "postprocess",
        {"questions": questions_path, "predictions": source},
        [final_path, audit_path, summary_path],
        {k: v for k, v in summary.items() if k in ("enabled", "iterations", "converged", "n_changes")},
    )
    if config.heuristics_enabled:
        print(
            f"postprocess: {summary['n_changes']} changes in {summary['iterations']} iterations, "
            f"rule counts {summary['rule_counts']}"
        )
    else:
        print("postprocess: heuristics disabled, predictions copied through")


def _golds(questions: Sequence[QuestionRecord]) -> dict[str, frozenset[str]]:
    golds = {q.id: q.gold for q in questions if q.gold is not None}
    if not golds:
        raise SystemExit("error: the questions file carries no gold answers")
    return golds


def cmd_score(config: RunConfig, preds_path: str | None = None) -> None:
    questions_path = _require(config.questions, "--questions")
    questions = load_questions(questions_path)
    out_dir = Path(config.out)
    if preds_path:
        source = Path(preds_path)
    else:
        source = out_dir / "predictions.final.jsonl"
        if not source.exists():
            source = out_dir / "predictions.jsonl"
    preds = load_predictions(source)
    report = score_run(preds, _golds(questions))
    report_path = out_dir / "score_report.json"
    _write_json(report_path, report.to_json())
    _write_manifest(
        config,
        "score",
        {"questions": questions_path, "predictions": source},
        [report_path],
        {"mean": report.mean, "n": report.n},
    )
    print(f"score: mean {report.mean:.4f} over {report.n} questions")
    rows = [
        ("exact", report.exact),
        ("partial", report.partial),
        ("zero", report.zero),
        ("missing", len(report.missing_prediction_ids)),
    ]
    for name, value in rows:
        print(f"  {name:<8} {value}")
    print(
        f"  single-answer exact rate {report.single.exact_rate:.4f} "
        f"({report.single.count} questions)"
    )
    print(
        f"  multi-answer exact rate  {report.multi.exact_rate:.4f} "
        f"({report.multi.count} questions), gap {report.exact_gap:.4f}"
    )


def _parse_model_preds(specs: Sequence[str]) -> dict[str, dict[str, frozenset[str]]]:
    model_preds: dict[str, dict[str, frozenset[str]]] = {}
    for spec in specs:
        if "=" in spec:
            name, _, path = spec.partition("=")
        else:
            name, path = Path(spec).stem, spec
        if name in model_preds:
            raise SystemExit(f"error: duplicate model name {name!r}")
        model_preds[name] = load_predictions(path)
    return model_preds


def cmd_agree(config: RunConfig, pred_specs: Sequence[str]) -> None:
    if len(pred_specs) < 2:
        raise SystemExit("error: agree needs at least two prediction files")
    model_preds = _parse_model_preds(pred_specs)
    topics = None
    if config.questions:
        topics = {q.id: q.topic_id for q in load_questions(config.questions)}
    report = agreement_report(model_preds, topics)
    out_dir = Path(config.out)
    report_path = out_dir / "agreement_report.json"
    _write_json(report_path, report.to_json())
    inputs = {f"predictions:{name}": spec.partition("=")[2] if "=" in spec else spec
              for name, spec in zip(model_preds, pred_specs)}
    _write_manifest(
        config,
        "agree",
        inputs,
        [report_path],
        {"n_models": len(model_preds), "n_questions": report.n_questions},
    )
    print(f"agree: {len(model_preds)} models on {report.n_questions} questions")
    print(f"  fleiss kappa        {report.fleiss:.4f}")
    print(f"  krippendorff (nom)  {report.kripp_nominal:.4f}")
    print(f"  krippendorff (jac)  {report.kripp_jaccard:.4f}")
    print(f"  unanimous rate      {report.unanimous_rate:.4f}")
    if config.questions:
        golds = {q.id: q.gold for q in load_questions(config.questions) if q.gold is not None}
        if golds:
            oracle = oracle_report(model_preds, golds)
            bias = bias_stats(model_preds, golds)
            oracle_path = out_dir / "oracle_report.json"
            bias_path = out_dir / "bias_report.json"
            _write_json(oracle_path, oracle.to_json())
            _write_json(bias_path, bias.to_json())
            print(f"  oracle mean         {oracle.mean:.4f}")
            print(
                f"  under/over selection {bias.under_selection}/{bias.over_selection} "
                f"(pred {bias.mean_pred_cardinality:.2f} vs gold {bias.mean_gold_cardinality:.2f} letters)"
            )


def cmd_report(config: RunConfig) -> None:
    out_dir = Path(config.out)
    report: dict = {}
    for name, rel in (
        ("ingest", "ingest/structure.json"),
        ("score", "score_report.json"),
        ("agreement", "agreement_report.json"),
        ("oracle", "oracle_report.json"),
        ("bias", "bias_report.json"),
        ("consistency", "consistency.json"),
    ):
        path = out_dir / rel
        if path.exists():
            report[name] = json.loads(path.read_text(encoding="utf-8"))
    for stage in ("retrieve", "infer"):
        path = out_dir / "manifests" / f"{stage}.json"
        if path.exists():
            report.setdefault("stages", {})[stage] = json.loads(path.read_text(encoding="utf-8"))["counts"]
    report_path = out_dir / "report.json"
    _write_json(report_path, report)
    print(f"report: wrote {report_path}")
    if "score" in report:
        print(f"  mean score     {report['score']['mean']:.4f}")
    if "agreement" in report:
        print(f"  fleiss kappa   {report['agreement']['fleiss']:.4f}")
    if "consistency" in report and report["consistency"].get("enabled"):
        print(f"  rule changes   {report['consistency']['n_changes']}")
    if "stages" in report and "retrieve" in report["stages"]:
        print(f"  cache hit rate {report['stages']['retrieve']['cache_hit_rate']:.3f}")


# ---------------------------------------------------------------------------
# config and argument plumbing


def _spec_from_dict(cls, data: dict, **overrides):
    kwargs = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return cls(**kwargs)


def build_config(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if args.config:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    embedder_data = dict(data.get("embedder", {}))
    if args.seed is not None:
        embedder_data["seed"] = args.seed
    llm_data = dict(data.get("llm", {}))
    script_path = llm_data.pop("script_path", None)
    if getattr(args, "model", None):
        llm_data["model"] = args.model
    hybrid_data = dict(data.get("hybrid", {}))
    if getattr(args, "alpha", None) is not None:
        hybrid_data["alpha"] = args.alpha
    if getattr(args, "edge_threshold", None) is not None:
        hybrid_data["edge_threshold"] = args.edge_threshold
    sampling_data = dict(data.get("sampling", {}))
    if getattr(args, "k", None) is not None:
        sampling_data["k"] = args.k
    heuristics = dict(data.get("heuristics", {}))
    config = RunConfig(
        questions=args.questions or data.get("questions"),
        docs=args.docs or data.get("docs"),
        out=args.out or data.get("out", "out"),
        seed=args.seed if args.seed is not None else data.get("seed", 0),
        embedder=_spec_from_dict(EmbedderSpec, embedder_data),
        llm=_spec_from_dict(LlmClientSpec, llm_data),
        script_path=script_path,
        hybrid=_spec_from_dict(HybridParams, hybrid_data),
        bm25=_spec_from_dict(Bm25Params, dict(data.get("bm25", {}))),
        sampling=_spec_from_dict(SamplingParams, sampling_data),
        theta=args.theta if getattr(args, "theta", None) is not None else data.get("theta", 0.5),
        heuristics_enabled=(
            False if getattr(args, "no_heuristics", False) else heuristics.get("enabled", True)
        ),
        heuristics_max_iterations=heuristics.get("max_iterations", 10),
        topic_union=bool(getattr(args, "topic_union", False) or data.get("topic_union", False)),
        max_workers=int(data.get("max_workers", 1)),
    )
    return config


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--questions", help="questions JSONL")
    common.add_argument("--docs", help="documents JSONL")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--model", help="remote model name")
    common.add_argument("--k", type=int, help="samples per question")
    common.add_argument("--theta", type=float, help="vote share threshold")
    common.add_argument("--alpha", type=float, help="semantic weight in the hybrid blend")
    common.add_argument("--edge-threshold", dest="edge_threshold", type=float, help="graph edge cutoff")
    common.add_argument("--no-heuristics", dest="no_heuristics", action="store_true")
    common.add_argument("--topic-union", dest="topic_union", action="store_true")
    common.add_argument("--seed", type=int, help="mock embedder seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="causeway", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common])
    sub.add_parser("build-graph", parents=[common])
    sub.add_parser("retrieve", parents=[common])
    sub.add_parser("infer", parents=[common])
    post = sub.add_parser("postprocess", parents=[common])
    post.add_argument("--preds", help="predictions JSONL (default: <out>/predictions.jsonl)")
    score = sub.add_parser("score", parents=[common])
    score.add_argument("--preds", help="predictions JSONL (default: <out>/predictions.final.jsonl)")
    agree = sub.add_parser("agree", parents=[common])
    agree.add_argument("preds", nargs="+", help="model predictions as name=path or path")
    sub.add_parser("report", parents=[common])
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    config = build_config(args)
    Path(config.out).mkdir(parents=True, exist_ok=True)
    try:
        if args.command == "ingest":
            cmd_ingest(config)
        elif args.command == "build-graph":
            cmd_build_graph(config)
        elif args.command == "retrieve":
            cmd_retrieve(config)
        elif args.command == "infer":
            cmd_infer(config)
        elif args.command == "postprocess":
            cmd_postprocess(config, args.preds)
        elif args.command == "score":
            cmd_score(config, args.preds)
        elif args.command == "agree":
            cmd_agree(config, args.preds)
        elif args.command == "report":
            cmd_report(config)
    except (CorpusError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
