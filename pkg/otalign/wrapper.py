import os
import sys
import shlex
from concurrent.futures import ThreadPoolExecutor

from otalign.__init__ import __version__
from otalign.config import RunConfig
from otalign.constants import (
    Variant,
    VARIANT_KEYWORDS,
    METRIC_KEYWORDS,
    COMMANDS,
    HEATMAP_FORMATS,
    DEFAULT_SYNTH_K,
    DEFAULT_SYNTH_ROWS,
    DEFAULT_SYNTH_COLS,
    DEFAULT_TRIALS,
    DEFAULT_METRICS,
)
from otalign.constraints import solve_constrained, shift_positive, active_alignments
from otalign.documentation import format_commands, format_variants, format_metrics
from otalign.exceptions import *
from otalign.heatmap import text_heatmap, svg_heatmap
from otalign.metrics import RankedList, score_pair, evaluate_rankings, sparsity_stats
from otalign.presets import (
    save_preset,
    load_preset,
    list_presets,
    print_preset,
    is_preset,
)
from otalign.rationale import (
    RationalePair,
    binarize,
    default_delta_grid,
    pair_f1,
    rationale_cross_entropy,
    select_delta,
    soft_rationales,
    token_f1,
)
from otalign.synthetic import band_cells, synthetic_cost_matrix, solve_synthetic
from otalign.textio import (
    EmbeddingTable,
    load_embeddings,
    split_sentences,
    embed_span_set,
    cost_matrix,
)
from otalign.transport import TransportPlan, transport_cost
from otalign.utilities import (
    warn,
    read_json,
    read_text,
    dump_json,
    get_thread_count,
    get_abs_metric,
)
from otalign.verify import run_suite

# Command line flags forwarded to the solver configuration
SOLVER_FLAGS = {
    "epsilon_final": "epsilon_final",
    "epsilon_start": "epsilon_start",
    "scaling_factor": "scaling_factor",
    "max_iter": "max_iter",
    "tol": "tol",
}


def _table(embeddings):
    if isinstance(embeddings, EmbeddingTable):
        return embeddings
    return load_embeddings(embeddings)


def _warn_oov(oov, spans, source):
    if oov:
        warn(
            f"{len(oov)} of the {len(spans)} spans of {source} contain no known token "
            f"(spans {', '.join(str(i) for i in oov)})"
        )


def _metric(metric, spec):
    if metric is None:
        return DEFAULT_METRICS[spec.variant]
    return get_abs_metric(metric)


def align_vectors(X, Y, spec, cfg=None, metric=None, lam=None):
    """
    Cost matrix and constrained alignment of two sets of span vectors.
    Exact-k costs that are not strictly positive are shifted before solving.
    Returns (cost matrix, alignment, applied shift).
    """
    c = cost_matrix(X, Y, _metric(metric, spec))

    c_solve, shift = c, 0.0
    if spec.variant == Variant.EXACT_K:
        c_solve, shift = shift_positive(c)

    alignment = solve_constrained(c_solve, spec, cfg, lam=lam)
    return c, alignment, shift


def _heatmap(plan, heatmap, svg_path, lam=None, title=None):
    if heatmap == "text":
        return text_heatmap(plan, lam).split("\n")
    if heatmap == "svg":
        return svg_heatmap(plan, svg_path, lam, title=title)
    return None


def cmd_align(
    doc_a,
    doc_b,
    embeddings,
    spec,
    cfg=None,
    metric=None,
    lam=None,
    heatmap="none",
    svg_path="align.svg",
):
    spans_x = split_sentences(read_text(doc_a), source_id=doc_a)
    spans_y = split_sentences(read_text(doc_b), source_id=doc_b)
    table = _table(embeddings)

    X, oov_x = embed_span_set(spans_x, table)
    Y, oov_y = embed_span_set(spans_y, table)
    _warn_oov(oov_x, spans_x, doc_a)
    _warn_oov(oov_y, spans_y, doc_b)

    metric = _metric(metric, spec)
    c, alignment, shift = align_vectors(X, Y, spec, cfg, metric, lam)
    plan = alignment.plan

    report = {
        "spans_x": list(spans_x),
        "spans_y": list(spans_y),
        "metric": METRIC_KEYWORDS[metric],
        "cost_matrix": c.to_dict(),
        "cost_shift": shift,
        "oov_spans": {"x": oov_x, "y": oov_y},
    }
    report.update(alignment.to_dict())
    report["original_cost"] = transport_cost(c, plan)
    report["support_cost"] = float(sum(c.values[i, j] for i, j, _ in alignment.active_pairs))
    report["similarity"] = score_pair(c, plan)
    report["heatmap"] = _heatmap(plan, heatmap, svg_path, lam, title=spec.name)
    return report


def read_manifest(path):
    """
    Queries and candidates of a ranking manifest, with paths resolved
    relative to the manifest.
    """
    data = read_json(path)
    if not isinstance(data, list) or len(data) == 0:
        raise InvalidParameter(f"The manifest {path} contains no query")

    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    queries = []
    for ind, entry in enumerate(data):
        try:
            query = entry["query"]
            candidates = [(c["path"], bool(c["relevant"])) for c in entry["candidates"]]
        except (KeyError, TypeError):
            raise FormatError(
                f"Entry {ind} of {path} must have a 'query' and 'candidates' "
                "with a 'path' and 'relevant' flag each"
            )
        queries.append(
            (query, resolve(query), [(c, resolve(c), rel) for c, rel in candidates])
        )
    return queries


def _load_document(path, table):
    spans = split_sentences(read_text(path), source_id=path)
    X, oov = embed_span_set(spans, table)
    _warn_oov(oov, spans, path)
    return X


def cmd_rank(manifest, embeddings, spec, cfg=None, metric=None, lam=None, threads=None):
    queries = read_manifest(manifest)
    table = _table(embeddings)
    metric = _metric(metric, spec)

    # Documents are read and embedded once, before any solving
    documents = {}
    load_errors = {}
    for _, qpath, candidates in queries:
        for path in [qpath] + [c[1] for c in candidates]:
            if path in documents or path in load_errors:
                continue
            try:
                documents[path] = _load_document(path, table)
            except AlignException as e:
                load_errors[path] = str(e)

    jobs = [
        (qi, ci, qpath, cpath)
        for qi, (_, qpath, candidates) in enumerate(queries)
        for ci, (_, cpath, _) in enumerate(candidates)
    ]

    def score_job(job):
        _, _, qpath, cpath = job
        for path in (qpath, cpath):
            if path in load_errors:
                return None, None, load_errors[path]
        try:
            c, alignment, _ = align_vectors(
                documents[qpath], documents[cpath], spec, cfg, metric, lam
            )
        except AlignException as e:
            return None, None, str(e)
        return score_pair(c, alignment.plan), alignment.plan, None

    if threads is None:
        threads = get_thread_count()

    with ThreadPoolExecutor(max_workers=threads) as executor:
        results = list(executor.map(score_job, jobs))

    scored = {}
    plans = []
    failures = []
    for (qi, ci, _, _), (score, plan, error) in zip(jobs, results):
        query, _, candidates = queries[qi]
        if error is not None:
            warn(f"Could not align {query} with {candidates[ci][0]}: {error}")
            failures.append({"query": query, "candidate": candidates[ci][0], "error": error})
            continue
        scored[qi, ci] = (score, plan)
        plans.append(plan)

    lists = []
    query_reports = []
    warnings = [f"{f['query']} / {f['candidate']}: {f['error']}" for f in failures]
    for qi, (query, _, candidates) in enumerate(queries):
        entries = []
        ranked = []
        for ci, (cpath, _, relevant) in enumerate(candidates):
            score, plan = scored.get((qi, ci), (None, None))
            entries.append(
                {
                    "path": cpath,
                    "relevant": relevant,
                    "score": score,
                    "active_count": None if plan is None else active_alignments(plan, lam)[0],
                }
            )
            if score is not None:
                ranked.append((ci, score, relevant))
        query_reports.append({"query": query, "candidates": entries})

        if ranked:
            lists.append(RankedList(query, ranked))
        else:
            warnings.append(f"{query}: no candidate could be scored")

    metrics = evaluate_rankings(lists)
    for query in metrics["skipped_queries"]:
        warnings.append(f"{query}: no relevant candidate")

    return {
        "spec": spec.to_dict(),
        "metric": METRIC_KEYWORDS[metric],
        "metrics": metrics,
        "sparsity": sparsity_stats(plans, lam),
        "queries": query_reports,
        "failures": failures,
        "warnings": warnings,
    }


def _as_list(data, what, path):
    if isinstance(data, dict):
        return [data]
    if isinstance(data, list) and len(data) > 0:
        return data
    raise FormatError(f"{path} must contain one {what} or a list of them")


def cmd_rationale(alignment, gold, delta=None, delta_grid=None):
    """
    Binary rationales of one or more alignment reports, scored against gold
    selections. Without a fixed delta, the best delta of the grid is
    selected on all pairs at once.
    """
    reports = _as_list(read_json(alignment), "alignment report", alignment)
    golds = [
        RationalePair.from_dict(g) for g in _as_list(read_json(gold), "gold rationale", gold)
    ]
    if len(reports) != len(golds):
        raise ShapeError(
            f"Received {len(reports)} alignments but {len(golds)} gold rationales"
        )

    plans = []
    for ind, r in enumerate(reports):
        try:
            plans.append(TransportPlan.from_dict(r["plan"]))
        except (KeyError, TypeError):
            raise FormatError(f"Alignment {ind} of {alignment} has no plan")

    for ind, (p, g) in enumerate(zip(plans, golds)):
        if p.shape != (g.r_x.size, g.r_y.size):
            raise ShapeError(
                f"Alignment {ind} has shape {p.shape} but its gold rationales have "
                f"lengths ({g.r_x.size}, {g.r_y.size})"
            )

    selected = delta is None
    grid = None
    if selected:
        grid = delta_grid if delta_grid is not None else default_delta_grid(plans)
        delta = select_delta(plans, golds, grid)

    pairs = []
    for r, p, g in zip(reports, plans, golds):
        rationales = binarize(p, delta)
        factor = r.get("augmented_size") or max(p.shape)
        soft = soft_rationales(p).scaled(factor)
        pairs.append(
            {
                "rationales": rationales.to_dict(),
                "f1_x": token_f1(rationales.r_x, g.r_x),
                "f1_y": token_f1(rationales.r_y, g.r_y),
                "f1": pair_f1(rationales, g),
                "cross_entropy": rationale_cross_entropy(soft, g.r_x, g.r_y),
            }
        )

    return {
        "delta": delta,
        "selected": selected,
        "grid": None if grid is None else [float(d) for d in grid],
        "mean_f1": sum(pair["f1"] for pair in pairs) / len(pairs),
        "pairs": pairs,
    }


def cmd_synth(
    rows=DEFAULT_SYNTH_ROWS,
    cols=DEFAULT_SYNTH_COLS,
    k=DEFAULT_SYNTH_K,
    seed=0,
    cfg=None,
    lam=None,
    heatmap="none",
    svg_stem="synth",
):
    c = synthetic_cost_matrix(rows, cols, seed)
    results = solve_synthetic(c, k, cfg, lam)

    variants = {}
    for variant, alignment in results.items():
        name = VARIANT_KEYWORDS[variant]
        if alignment is None:
            variants[name] = None
            continue

        variants[name] = {
            "spec": alignment.spec.to_dict(),
            "active_count": alignment.active_count,
            "active_pairs": [[i, j] for i, j, _ in alignment.active_pairs],
            "satisfies_sparsity": bool(alignment.satisfies_sparsity()),
            "support_cost": alignment.support_cost,
            "rounding": alignment.rounding,
            "heatmap": _heatmap(
                alignment.plan,
                heatmap,
                f"{svg_stem}_{name}.svg",
                lam,
                title=alignment.spec.name,
            ),
        }

    return {
        "rows": c.n,
        "cols": c.m,
        "seed": seed,
        "k": k,
        "band": [[i, j] for i, j in band_cells(c.n, c.m)],
        "variants": variants,
    }


def cmd_verify(seed=0, trials=DEFAULT_TRIALS, cfg=None):
    return run_suite(seed, trials, cfg)


def process_run(config):
    if config.command == "align":
        return cmd_align(
            *config.inputs,
            config.embeddings,
            config.spec,
            config.solver,
            config.metric,
            config.lam,
            config.heatmap,
            config.svg_path(),
        )
    elif config.command == "rank":
        return cmd_rank(
            config.inputs[0],
            config.embeddings,
            config.spec,
            config.solver,
            config.metric,
            config.lam,
        )
    elif config.command == "rationale":
        return cmd_rationale(
            config.inputs[0], config.gold, config.delta, config.delta_grid
        )
    elif config.command == "synth":
        return cmd_synth(
            config.rows,
            config.cols,
            config.spec.k or DEFAULT_SYNTH_K,
            config.seed,
            config.solver,
            config.lam,
            config.heatmap,
            os.path.splitext(config.svg_path())[0],
        )
    return cmd_verify(config.seed, config.trials, config.solver)


def gen_report(**params):
    return process_run(RunConfig(**params))


def get_parser():
    import argparse

    parser = argparse.ArgumentParser(
        description="Sparse and interpretable alignments with constrained optimal transport",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="\n\n".join([format_commands(), format_variants(), format_metrics()]),
    )
    parser.add_argument(
        "command",
        nargs="?",
        help=f"Command to run ({', '.join(COMMANDS)})",
    )

    parser.add_argument(
        "inputs",
        nargs="*",
        help="Input files: two documents (align), a manifest (rank) or alignment reports (rationale)",
    )

    parser.add_argument(
        "--variant",
        default=None,
        type=str,
        help="Alignment variant (vanilla, one-to-k, relaxed, exact-k, ...)",
    )

    parser.add_argument(
        "--k", default=None, type=str, help="Number of alignments per point (or in total for exact-k)"
    )

    parser.add_argument(
        "--metric",
        default=None,
        type=str,
        help="Cost function between span vectors (defaults depend on the variant)",
    )

    parser.add_argument(
        "--lambda",
        dest="lam",
        default=None,
        type=str,
        help="Threshold above which an alignment is active (default: 0.01/(n*m))",
    )

    delta_group = parser.add_mutually_exclusive_group()

    delta_group.add_argument(
        "--delta", default=None, type=str, help="Threshold for binary rationales"
    )

    delta_group.add_argument(
        "--delta-grid",
        dest="delta_grid",
        default=None,
        nargs="+",
        metavar="DELTA",
        help="Candidate thresholds; the one with the best F1 is selected",
    )

    parser.add_argument(
        "--epsilon-final",
        dest="epsilon_final",
        default=None,
        type=str,
        help="Final entropic regularization (default: 1e-4)",
    )

    parser.add_argument(
        "--epsilon-start",
        dest="epsilon_start",
        default=None,
        type=str,
        help="Initial entropic regularization (default: 1)",
    )

    parser.add_argument(
        "--scaling-factor",
        dest="scaling_factor",
        default=None,
        type=str,
        help="Factor between successive epsilons (default: 0.5)",
    )

    parser.add_argument(
        "--max-iter",
        dest="max_iter",
        default=None,
        type=str,
        help="Sinkhorn iterations per epsilon (default: 500)",
    )

    parser.add_argument(
        "--tol", default=None, type=str, help="Marginal violation at convergence (default: 1e-6)"
    )

    parser.add_argument(
        "--linear-domain",
        dest="linear_domain",
        action="store_true",
        help="Use the linear-domain Sinkhorn updates instead of the log domain",
    )

    parser.add_argument(
        "--config",
        default=None,
        type=str,
        help="JSON file with solver parameters (flags take precedence)",
    )

    parser.add_argument(
        "--embeddings", "-e", default=None, type=str, help="Word vectors in text format"
    )

    parser.add_argument(
        "--gold", "-g", default=None, type=str, help="Gold rationales (JSON)"
    )

    parser.add_argument(
        "--seed", default=0, type=str, help="Random seed (synth and verify)"
    )

    parser.add_argument(
        "--trials",
        default=DEFAULT_TRIALS,
        type=str,
        help="Number of randomized trials (verify)",
    )

    parser.add_argument(
        "--rows",
        default=DEFAULT_SYNTH_ROWS,
        type=str,
        help="Rows of the synthetic cost matrix",
    )

    parser.add_argument(
        "--cols",
        default=DEFAULT_SYNTH_COLS,
        type=str,
        help="Columns of the synthetic cost matrix",
    )

    parser.add_argument(
        "--out",
        "-o",
        default="",
        type=str,
        help="Write the JSON report to the specified file",
    )

    parser.add_argument(
        "--heatmap",
        default="none",
        type=str.lower,
        help=f"Heatmap of the plan ({', '.join(HEATMAP_FORMATS)})",
    )

    parser.add_argument(
        "--save",
        type=str,
        help="Save the current parameters as a preset of the given name",
    )

    parser.add_argument(
        "--preset",
        type=str,
        nargs="?",
        const="",
        help="Load parameters from the chosen preset",
    )
    parser.add_argument(
        "--version", "-v", action="version", version=f"%(prog)s {__version__}"
    )
    return parser


def get_config_from_args(args, default_params=None):
    params = {
        "command": args.command,
        "inputs": args.inputs,
        "variant": args.variant,
        "k": args.k,
        "metric": args.metric,
        "lam": args.lam,
        "delta": args.delta,
        "delta_grid": args.delta_grid,
        "epsilon_final": args.epsilon_final,
        "epsilon_start": args.epsilon_start,
        "scaling_factor": args.scaling_factor,
        "max_iter": args.max_iter,
        "tol": args.tol,
        "linear_domain": args.linear_domain,
        "config": args.config,
        "embeddings": args.embeddings,
        "gold": args.gold,
        "seed": args.seed,
        "trials": args.trials,
        "rows": args.rows,
        "cols": args.cols,
        "out": args.out,
        "heatmap": args.heatmap,
    }

    if args.preset:
        preset_params = load_preset(args.preset)
        for k, v in preset_params.items():
            if k in params and params[k] == default_params[k]:
                params[k] = v

    solver = {}
    if params["config"]:
        solver = read_json(params["config"])
        if not isinstance(solver, dict):
            raise FormatError(f"The solver configuration {params['config']} must be a JSON object")

    for flag, key in SOLVER_FLAGS.items():
        if params[flag] is not None:
            solver[key] = params[flag]

    if params["linear_domain"]:
        solver["log_domain"] = False

    return RunConfig(
        params["command"],
        inputs=params["inputs"],
        variant=params["variant"],
        k=params["k"],
        metric=params["metric"],
        lam=params["lam"],
        delta=params["delta"],
        delta_grid=params["delta_grid"],
        solver=solver,
        embeddings=params["embeddings"],
        gold=params["gold"],
        seed=params["seed"],
        trials=params["trials"],
        rows=params["rows"],
        cols=params["cols"],
        output=params["out"],
        heatmap=params["heatmap"],
    )


def cmd(cmd_line=None):
    parser = get_parser()

    if cmd_line:
        args = parser.parse_args(shlex.split(cmd_line))
    else:
        args = parser.parse_args()

    if args.save:
        if args.preset:
            warn("Cannot both save and load a preset")
            sys.exit(1)
        preset_name = save_preset(args, parser.parse_args([]))
        print_preset(preset_name)
        return

    if (args.preset and not is_preset(args.preset)) or args.preset == "":
        list_presets()
        return

    try:
        if args.preset:
            config = get_config_from_args(args, default_params=vars(parser.parse_args([])))
        else:
            config = get_config_from_args(args)

        report = process_run(config)
        txt = dump_json(report, config.output or None)

        if config.output != "":
            print(f"Report written to {config.output}")
        else:
            print(txt)

        if config.command == "verify" and not report["passed"]:
            failed = [c["name"] for c in report["checks"] if c["passes"] != c["trials"]]
            raise VerificationFailure(f"Failed checks: {', '.join(failed)}")
    except AlignException as e:
        print(f"!!! {str(e)} !!!", file=sys.stderr)
        sys.exit(exit_code_for(e))
