"""Command-line interface.

    finemem rollout --stream data.jsonl --manager scripted:insert_verbatim \
        --reasoner scripted:concat --weights w1=0.5,w2=0.05,beta=0.5 \
        --retrieval-k 5 --seed 0 --out trace.jsonl
    finemem rewards audit --trace trace.jsonl
    finemem qa build --input data.jsonl --teacher scripted:cloze \
        --verifier scripted:span --k 5 --out qa.jsonl
    finemem serve --host 127.0.0.1 --port 8431

Log level comes from the FINEMEM_LOG environment variable.
"""

from __future__ import annotations

import logging
import os
import sys

import click

from .agents import make_agent, parse_endpoint
from .qa import build_dataset, write_dataset
from .rewards import RewardWeights
from .rollout import RolloutConfig, audit_trace, load_streams, read_traces, run_rollout, write_trace_file
from .service import ServiceConfig, serve as run_service


def _setup_logging() -> None:
    level = os.environ.get("FINEMEM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def parse_weights(spec: str) -> RewardWeights:
    """Parse ``w1=0.5,w2=0.05,beta=0.5[,epsilon=1e-8]`` into weights."""
    fields = {}
    if spec.strip():
        for part in spec.split(","):
            key, _, value = part.partition("=")
            key = key.strip()
            if key not in ("w1", "w2", "beta", "epsilon"):
                raise click.BadParameter(f"unknown weight field {key!r}")
            try:
                fields[key] = float(value)
            except ValueError:
                raise click.BadParameter(f"bad value for {key}: {value!r}")
    try:
        return RewardWeights(**fields)
    except ValueError as e:
        raise click.BadParameter(str(e))


@click.group()
def main() -> None:
    """Memory-management and reward-attribution engine."""
    _setup_logging()


@main.command("rollout")
@click.option("--stream", "stream_path", required=True, type=click.Path(exists=True),
              help="Newline-delimited instance objects.")
@click.option("--manager", required=True, help="scripted:NAME or an HTTP endpoint URI.")
@click.option("--reasoner", required=True, help="scripted:NAME or an HTTP endpoint URI.")
@click.option("--judge", default=None, help="Judge endpoint for Judge-metric QA.")
@click.option("--weights", default="", help="w1=...,w2=...,beta=...,epsilon=...")
@click.option("--retrieval-k", default=5, show_default=True, type=int)
@click.option("--global-qa-frac", default=1.0, show_default=True, type=float,
              help="Evaluate a random fraction of the global QA pairs.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def rollout_cmd(stream_path, manager, reasoner, judge, weights, retrieval_k,
                global_qa_frac, seed, out_path):
    """Run one rollout per instance in the stream file."""
    w = parse_weights(weights)
    config = RolloutConfig(retrieval_k=retrieval_k, global_qa_frac=global_qa_frac, seed=seed)
    manager_agent = make_agent("manager", parse_endpoint(manager, seed=seed))
    reasoner_agent = make_agent("reasoner", parse_endpoint(reasoner, seed=seed))
    judge_agent = make_agent("judge", parse_endpoint(judge, seed=seed)) if judge else None
    streams = load_streams(stream_path)
    if not streams:
        raise click.ClickException(f"no instances in {stream_path}")
    for i, stream in enumerate(streams):
        trace = run_rollout(stream, manager_agent, reasoner_agent, w, config, judge_agent)
        write_trace_file(trace, out_path, append=i > 0)
        status = "incomplete" if trace.incomplete else f"r_global={trace.r_global}"
        click.echo(f"{stream.instance_id}: {len(trace.steps)} steps, {status}")


@main.group("rewards")
def rewards_group() -> None:
    """Reward inspection commands."""


@rewards_group.command("audit")
@click.option("--trace", "trace_path", required=True, type=click.Path(exists=True))
def audit_cmd(trace_path):
    """Recompute every reward component of a trace and diff the results."""
    failed = False
    for trace in read_traces(trace_path):
        diffs = audit_trace(trace)
        if diffs:
            failed = True
            click.echo(f"{trace.instance_id}: {len(diffs)} diff(s)")
            for d in diffs:
                where = f" step {d.step}" if d.step is not None else ""
                click.echo(f"  {d.field}{where}: stored={d.stored!r} recomputed={d.recomputed!r}")
        else:
            click.echo(f"{trace.instance_id}: OK (zero diffs)")
    if failed:
        sys.exit(1)


@main.group("qa")
def qa_group() -> None:
    """Chunk-level QA dataset commands."""


@qa_group.command("build")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True),
              help="Newline-delimited instance objects (chunks are used).")
@click.option("--teacher", required=True, help="scripted:NAME or an HTTP endpoint URI.")
@click.option("--verifier", required=True, help="scripted:NAME or an HTTP endpoint URI.")
@click.option("--k", default=5, show_default=True, type=int, help="Per-chunk budget.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def qa_build_cmd(input_path, teacher, verifier, k, seed, out_path):
    """Construct verified, deduplicated chunk-level QA pairs."""
    teacher_agent = make_agent("teacher", parse_endpoint(teacher, seed=seed))
    verifier_agent = make_agent("verifier", parse_endpoint(verifier, seed=seed))
    streams = load_streams(input_path)
    total = 0
    with open(out_path, "w", encoding="utf-8") as out:
        for stream in streams:
            per_chunk = build_dataset(list(stream.chunks), teacher_agent, verifier_agent, k=k)
            total += write_dataset(out, stream.instance_id, per_chunk)
    click.echo(f"wrote {total} QA records to {out_path}")


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8431, show_default=True, type=int)
@click.option("--max-concurrent", default=64, show_default=True, type=int)
def serve_cmd(host, port, max_concurrent):
    """Run the reward HTTP service."""
    run_service(ServiceConfig(bind_address=host, port=port,
                              max_concurrent_requests=max_concurrent))


if __name__ == "__main__":
    main()
