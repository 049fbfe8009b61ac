"""``ufgw`` command line: diffuse, align, analyze-conflict, demo.

Exit codes: 0 ok, 1 usage, 2 input or validation error, 3 numerical failure.
``UFGW_THREADS`` caps the BLAS thread pools.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys

import numpy as np

from .config import load_config
from .conflict import analyze_conflict
from .diffusion import compute_ppr, read_ppr_cache, write_ppr_cache
from .errors import UfgwError, ValidationError
from .graph import load_edge_list
from .harness import generate_synthetic_mag, save_synthetic_mag, task_accuracy, train_toy_encoder
from .pipeline import align_graph
from .report import Report
from .semantic import EmbeddingMatrix, read_embeddings
from .solver import NODE_CLASSES


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _thread_limit():
    value = os.environ.get("UFGW_THREADS")
    if not value:
        return contextlib.nullcontext()
    try:
        limit = int(value)
    except ValueError:
        raise ValidationError(f"UFGW_THREADS must be an integer, got {value!r}") from None
    if limit < 1:
        raise ValidationError("UFGW_THREADS must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=limit)


def _config(args, **extra):
    overrides = dict(extra)
    if getattr(args, "seed", None) is not None:
        overrides["rng_seed"] = args.seed
    return load_config(args.config, **overrides)


def _write(report: Report, out):
    if out:
        report.write(out)
    else:
        sys.stdout.write(report.dumps())


def cmd_diffuse(args) -> int:
    cfg = _config(args, beta=args.beta, edge_list=args.edges)
    if not cfg.edge_list:
        raise ValidationError("diffuse needs --edges (or edge_list in the config)")
    if not args.out:
        raise ValidationError("diffuse needs --out for the cache file")
    g = load_edge_list(cfg.edge_list)
    ppr = compute_ppr(g, cfg.beta, method=cfg.ppr_method)
    write_ppr_cache(args.out, ppr)
    dev = float(np.max(np.abs(ppr.values.sum(axis=1) - 1.0)))
    print(f"N={g.num_nodes} beta={cfg.beta:g} max_row_sum_deviation={dev:.3e}")
    return 0


def cmd_align(args) -> int:
    cfg = _config(args, edge_list=args.edges, embeddings=args.embeddings, ppr_cache=args.ppr_cache,
                  batch_size=args.batch_size)
    if not cfg.edge_list or not cfg.embeddings:
        raise ValidationError("align needs --edges and --embeddings (or the matching config keys)")
    g = load_edge_list(cfg.edge_list)
    emb = read_embeddings(cfg.embeddings)
    if emb.values.shape[0] != g.num_nodes:
        raise ValidationError(f"embeddings have {emb.values.shape[0]} rows, graph has {g.num_nodes} nodes")
    if cfg.ppr_cache:
        ppr = read_ppr_cache(cfg.ppr_cache, mmap=True)
        if ppr.values.shape[0] != g.num_nodes:
            raise ValidationError(f"PPR cache covers {ppr.values.shape[0]} nodes, graph has {g.num_nodes}")
    else:
        ppr = compute_ppr(g, cfg.beta, method=cfg.ppr_method)
    batches, nodes = align_graph(g, emb, ppr, cfg.ufgw(), batch_size=cfg.batch_size, fanout=cfg.fanout,
                                 hops=cfg.hops, rng_seed=cfg.rng_seed, delta=cfg.delta)
    report = Report("align", cfg.as_dict())
    for b in batches:
        rep = b.report
        report.add("batch", index=b.index, size=int(b.node_ids.size), seeds=b.num_seeds,
                   loss_total=rep.loss_total, loss_linear=rep.loss_linear, loss_quadratic=rep.loss_quadratic,
                   loss_kl=rep.loss_kl, loss_entropy=rep.loss_entropy,
                   loss_quadratic_linearized=rep.loss_quadratic_linearized,
                   bcd_iterations=rep.bcd_iterations, converged=rep.converged,
                   classes=rep.class_counts(), node_ids=b.node_ids, node_class=rep.node_class)
    for s in nodes:
        report.add("node", node=s.node, batches=s.batches, row_mass=s.row_mass, rel_mass=s.rel_mass,
                   c=s.cost, node_class=s.node_class, class_counts=s.class_counts)
    totals = {c: sum(s.node_class == c for s in nodes) for c in NODE_CLASSES}
    report.add("summary", batches=len(batches), nodes=len(nodes), classes=totals)
    _write(report, args.out)
    print(f"batches={len(batches)} " + " ".join(f"{c}={totals[c]}" for c in NODE_CLASSES), file=sys.stderr)
    return 0


def cmd_analyze_conflict(args) -> int:
    cfg = _config(args, edge_list=args.edges, text_embeddings=args.text, image_embeddings=args.image,
                  sample_edges=args.sample_edges, theta=args.theta)
    if not (cfg.edge_list and cfg.text_embeddings and cfg.image_embeddings):
        raise ValidationError("analyze-conflict needs --edges, --text and --image")
    g = load_edge_list(cfg.edge_list)
    text = read_embeddings(cfg.text_embeddings, "text")
    image = read_embeddings(cfg.image_embeddings, "image")
    sample = analyze_conflict(g, text, image, cfg.sample_edges, cfg.rng_seed, cfg.theta)
    report = Report("analyze-conflict", cfg.as_dict())
    for (i, j), ct, ci, tag in zip(sample.edges, sample.cos_text, sample.cos_image, sample.tags):
        report.add("edge", src=int(i), dst=int(j), cos_text=float(ct), cos_image=float(ci), quadrant=str(tag))
    counts = sample.counts()
    report.add("summary", edges=len(sample.tags), theta=cfg.theta, counts=counts, shares=sample.shares())
    _write(report, args.out)
    print(" ".join(f"{q}={n}" for q, n in counts.items()), file=sys.stderr)
    return 0


def cmd_demo(args) -> int:
    cfg = _config(args)
    mag = generate_synthetic_mag(cfg.n, cfg.clusters, cfg.conflict_fraction, cfg.rng_seed, dim=cfg.raw_dim,
                                 noise=cfg.noise, avg_degree=cfg.avg_degree, nuisance_dims=cfg.nuisance_dims,
                                 nuisance_scale=cfg.nuisance_scale)
    if args.save_data:
        save_synthetic_mag(mag, args.save_data)
    ppr = compute_ppr(mag.graph, cfg.beta, method=cfg.ppr_method)
    solver_cfg = cfg.ufgw(bcd_iters=cfg.train_bcd_iters)
    state = train_toy_encoder(mag, solver_cfg, cfg.lam, cfg.steps, cfg.lr, cfg.rng_seed, embed_dim=cfg.embed_dim,
                              batch_size=cfg.train_batch_size, label_fraction=cfg.label_fraction,
                              beta=cfg.beta, delta=cfg.delta, ppr=ppr)
    report = Report("demo", cfg.as_dict())
    for k, (task, reg_t, reg_i, total) in enumerate(state.loss_history):
        report.add("step", step=k, task=task, reg_text=reg_t, reg_image=reg_i, total=total)
    h_text, h_image = state.encode(mag)
    final = {}
    for name, H in (("text", h_text), ("image", h_image)):
        _, nodes = align_graph(mag.graph, EmbeddingMatrix(H, name), ppr, cfg.ufgw(), batch_size=cfg.batch_size,
                               fanout=cfg.fanout, hops=cfg.hops, rng_seed=cfg.rng_seed, delta=cfg.delta)
        final[name] = {c: sum(s.node_class == c for s in nodes) for c in NODE_CLASSES}
    acc = task_accuracy(state, mag)
    report.add("summary", steps=state.step, accuracy=acc, node_classes=final,
               conflict_nodes=int(mag.conflict_nodes.size))
    _write(report, args.out)
    print(f"steps={state.step} accuracy={acc:.4f} final_total={state.loss_history[-1][3]:.6g}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ufgw", description="Unbalanced fused Gromov-Wasserstein graph alignment.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="flat 'key = value' config file")
        p.add_argument("--out", help="output path (report commands default to stdout)")
        p.add_argument("--seed", type=int, help="rng seed (overrides the config)")
        return p

    p = common(sub.add_parser("diffuse", help="precompute the PPR diffusion cache"))
    p.add_argument("--edges", help="edge list file")
    p.add_argument("--beta", type=float, help="restart probability")
    p.set_defaults(func=cmd_diffuse)

    p = common(sub.add_parser("align", help="align embeddings with the graph batch by batch"))
    p.add_argument("--edges", help="edge list file")
    p.add_argument("--embeddings", help="embedding file (binary EMB1 or text)")
    p.add_argument("--ppr-cache", help="cache written by 'ufgw diffuse'")
    p.add_argument("--batch-size", type=int)
    p.set_defaults(func=cmd_align)

    p = common(sub.add_parser("analyze-conflict", help="per-edge text/image similarity quadrants"))
    p.add_argument("--edges", help="edge list file")
    p.add_argument("--text", help="text embedding file")
    p.add_argument("--image", help="image embedding file")
    p.add_argument("--sample-edges", type=int)
    p.add_argument("--theta", type=float, help="similarity threshold")
    p.set_defaults(func=cmd_analyze_conflict)

    p = common(sub.add_parser("demo", help="train toy encoders on a synthetic graph"))
    p.add_argument("--save-data", metavar="DIR", help="also write the synthetic dataset here")
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with _thread_limit():
            return args.func(args)
    except UfgwError as exc:
        print(f"ufgw {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
