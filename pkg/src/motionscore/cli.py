"""Command-line interface.

Subcommands: flow, score, mas, bench, stats, nft-lab. Every subcommand
accepts --config FILE (key = value lines), repeatable --set overrides,
and --print-config to show the effective configuration and exit.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from . import __version__
from .bench import (
    load_external_scores,
    load_manifest,
    dataset_motion_stats,
    report_csv,
    run_benchmark,
)
from .config import (
    ConfigBundle,
    format_config,
    load_config_file,
    make_configs,
    parse_assignments,
)
from .errors import MotionScoreError, ParseError
from .estimator import Estimator, LucasKanadeEstimator, PrecomputedEstimator
from .flowfield import flow_to_color, normalize_flow, flow_magnitude, write_flo
from .imageio import load_image, save_image, to_grayscale
from .nftlab import (
    fm_pretrain,
    mode_target_reward,
    rewarded_mode_fraction,
    train_nft,
    two_mode_data,
)
from .reward import mas_score, motion_reward, motion_reward_from_flows
from .flowfield import FlowField

__all__ = ["main"]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        metavar="FILE",
        default=None,
        help="plain-text configuration file (section.key = value lines)",
    )
    parser.add_argument(
        "--set",
        dest="assignments",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config value (repeatable; wins over --config)",
    )
    parser.add_argument(
        "--print-config",
        action="store_true",
        help="print the effective configuration and exit",
    )


def _bundle(args: argparse.Namespace, flag_overrides: dict | None = None) -> ConfigBundle:
    """Merge defaults < config file < --set < dedicated flags."""
    file_values = load_config_file(args.config) if args.config else {}
    overrides = parse_assignments(args.assignments)
    for key, value in (flag_overrides or {}).items():
        if value is not None:
            overrides[key] = value
    return make_configs(file_values, overrides)


def _print_config_and_exit(args: argparse.Namespace, bundle: ConfigBundle) -> bool:
    if args.print_config:
        sys.stdout.write(format_config(bundle))
        return True
    return False


def _make_estimator(args: argparse.Namespace, bundle: ConfigBundle) -> Estimator:
    flo_dir = getattr(args, "flo_dir", None)
    if flo_dir:
        return PrecomputedEstimator(flo_dir)
    return LucasKanadeEstimator(bundle.estimator)


def _parse_weights(text: str | None) -> dict[str, float] | None:
    if text is None:
        return None
    weights: dict[str, float] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ParseError(f"--weights: expected name=value, got {part!r}")
        name, _, raw = part.partition("=")
        try:
            weights[name.strip()] = float(raw)
        except ValueError:
            raise ParseError(f"--weights: cannot parse {raw!r} as a number") from None
    if not weights:
        raise ParseError("--weights: no weights given")
    return weights


def _reward_doc(breakdown) -> dict:
    return dataclasses.asdict(breakdown)


def _mas_doc(result) -> dict:
    return dataclasses.asdict(result)


def _cmd_flow(args: argparse.Namespace) -> int:
    bundle = _bundle(args)
    if _print_config_and_exit(args, bundle):
        return 0
    est = LucasKanadeEstimator(bundle.estimator)
    a = to_grayscale(load_image(args.image_a))
    b = to_grayscale(load_image(args.image_b))
    flow = est.estimate_flow(a, b)
    write_flo(flow, args.out)
    mean_mag = float(np.mean(np.hypot(flow.u, flow.v)))
    print(f"wrote {args.out} ({flow.width}x{flow.height}, mean |V| = {mean_mag:.4f} px)")
    if args.viz:
        save_image(flow_to_color(flow), args.viz)
        print(f"wrote {args.viz}")
    return 0


def _load_triplet(args: argparse.Namespace):
    orig = to_grayscale(load_image(args.input))
    edited = to_grayscale(load_image(args.edited))
    gt = to_grayscale(load_image(args.gt))
    return orig, edited, gt


def _cmd_score(args: argparse.Namespace) -> int:
    bundle = _bundle(args)
    if _print_config_and_exit(args, bundle):
        return 0
    est = _make_estimator(args, bundle)
    orig, edited, gt = _load_triplet(args)
    breakdown = motion_reward(orig, edited, gt, est, bundle.reward, key=args.key)
    result = mas_score(orig, edited, gt, est, bundle.mas, bundle.reward, key=args.key)
    doc = {"reward": _reward_doc(breakdown), "mas": _mas_doc(result)}
    json.dump(doc, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def _cmd_mas(args: argparse.Namespace) -> int:
    bundle = _bundle(args)
    if _print_config_and_exit(args, bundle):
        return 0
    est = _make_estimator(args, bundle)
    orig, edited, gt = _load_triplet(args)
    result = mas_score(orig, edited, gt, est, bundle.mas, bundle.reward, key=args.key)
    json.dump(_mas_doc(result), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    bundle = _bundle(args)
    if _print_config_and_exit(args, bundle):
        return 0
    est = _make_estimator(args, bundle)
    manifest = load_manifest(args.manifest)
    models = None
    if args.models:
        models = [m.strip() for m in args.models.split(",") if m.strip()]
    external = load_external_scores(args.external) if args.external else None
    weights = _parse_weights(args.weights)
    config_text = format_config(bundle)
    report = run_benchmark(
        manifest,
        models,
        est,
        rcfg=bundle.reward,
        mcfg=bundle.mas,
        external_scores=external,
        weights=weights,
        jobs=args.jobs,
        config_text=config_text,
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    print(f"wrote {args.out} ({len(report.scores)} scores, {len(report.failures)} failures)")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(report_csv(report))
        print(f"wrote {args.csv}")
    for model in sorted(report.aggregates):
        agg = report.aggregates[model]
        if agg["count"] == 0:
            continue
        print(
            f"{model}: mean MAS {agg['mean_mas']:.2f}, "
            f"mean r_motion {agg['mean_r_motion']:.3f}, "
            f"static-failure rate {agg['static_failure_rate']:.2%} "
            f"({agg['count']} entries)"
        )
    if report.win_rates is not None:
        wr = report.win_rates
        for a in wr.models:
            for b in wr.models:
                if a < b:
                    print(
                        f"win rate ({wr.metric}): {a} vs {b}: "
                        f"{wr.wins[a][b]:.2f}% / {wr.wins[b][a]:.2f}% "
                        f"(ties {wr.ties[a][b]:.2f}%)"
                    )
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    bundle = _bundle(args)
    if _print_config_and_exit(args, bundle):
        return 0
    est = _make_estimator(args, bundle)
    manifest = load_manifest(args.manifest)
    stats = dataset_motion_stats(manifest, est, sample_size=args.sample, seed=args.seed)
    json.dump(stats, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def _motion_proxy_reward(rcfg):
    """Map a 2-D sample onto a constant flow field and score it against
    a constant field pointing at the rewarded mode."""
    size = 8
    ones = np.ones((size, size), dtype=np.float32)
    gt = FlowField(width=size, height=size, u=2.0 * ones, v=0.0 * ones)

    def reward(sample: np.ndarray) -> float:
        pred = FlowField(
            width=size,
            height=size,
            u=float(sample[0]) * ones,
            v=float(sample[1]) * ones,
        )
        return motion_reward_from_flows(pred, gt, rcfg).r_motion

    return reward


def _cmd_nft_lab(args: argparse.Namespace) -> int:
    flag_overrides = {
        "nft.rounds": args.rounds,
        "nft.groups": args.groups,
        "nft.group_size": args.group_size,
        "nft.beta_mix": args.beta,
        "nft.kl_weight": args.kl_weight,
        "nft.learning_rate": args.learning_rate,
    }
    bundle = _bundle(args, flag_overrides)
    if _print_config_and_exit(args, bundle):
        return 0
    cfg = bundle.nft
    data = two_mode_data(seed=args.seed)
    model = fm_pretrain(data, steps=args.pretrain_steps, seed=args.seed)
    before = rewarded_mode_fraction(model, ode_steps=cfg.ode_steps, seed=args.seed)
    if args.reward == "motion-proxy":
        reward_fn = _motion_proxy_reward(bundle.reward)
    else:
        reward_fn = mode_target_reward
    report = train_nft(model, reward_fn, cfg, seed=args.seed)
    after = rewarded_mode_fraction(model, ode_steps=cfg.ode_steps, seed=args.seed)

    csv_lines = ["round,mean_raw_reward,kept_groups,loss"]
    for rs in report.rounds:
        csv_lines.append(
            f"{rs.round_index},{rs.mean_raw_reward:.6f},{rs.kept_groups},{rs.loss:.8f}"
        )
    csv_text = "\n".join(csv_lines) + "\n"
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
        print(f"wrote {args.csv}", file=sys.stderr)
    else:
        sys.stdout.write(csv_text)

    doc = {
        "seed": report.seed,
        "reward": args.reward,
        "pretrain_steps": args.pretrain_steps,
        "rounds": [dataclasses.asdict(rs) for rs in report.rounds],
        "skipped_rounds": report.skipped_rounds,
        "final_mean_raw_reward": report.final_mean_raw_reward,
        "rewarded_mode_fraction_before": before,
        "rewarded_mode_fraction_after": after,
    }
    json_text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(json_text)
        print(f"wrote {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(json_text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="motionscore",
        description="Motion-alignment scoring for image edits: optical flow, "
        "rewards, MAS, benchmarking, and a toy finetuning lab.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_flow = sub.add_parser("flow", help="estimate optical flow between two images")
    p_flow.add_argument("image_a", help="first image (PNG or PGM/PPM)")
    p_flow.add_argument("image_b", help="second image")
    p_flow.add_argument("--out", required=True, metavar="F.FLO", help="output .flo path")
    p_flow.add_argument("--viz", metavar="F.PNG", help="also render a color-wheel PNG")
    _add_config_flags(p_flow)
    p_flow.set_defaults(func=_cmd_flow)

    def add_triplet_flags(p):
        p.add_argument("--input", required=True, help="original input image")
        p.add_argument("--edited", required=True, help="edited output image")
        p.add_argument("--gt", required=True, help="ground-truth target image")
        p.add_argument(
            "--flo-dir",
            metavar="DIR",
            help="directory of precomputed flows (<key>__pred.flo, <key>__gt.flo)",
        )
        p.add_argument(
            "--key",
            default="pair",
            help="lookup key for --flo-dir flows (default: pair)",
        )

    p_score = sub.add_parser("score", help="score one edit triplet (reward + MAS)")
    add_triplet_flags(p_score)
    _add_config_flags(p_score)
    p_score.set_defaults(func=_cmd_score)

    p_mas = sub.add_parser("mas", help="MAS only for one edit triplet")
    add_triplet_flags(p_mas)
    _add_config_flags(p_mas)
    p_mas.set_defaults(func=_cmd_mas)

    p_bench = sub.add_parser("bench", help="score a manifest of edit triplets")
    p_bench.add_argument("--manifest", required=True, help="line-delimited JSON manifest")
    p_bench.add_argument(
        "--models", help="comma-separated model names (default: all in manifest)"
    )
    p_bench.add_argument("--out", required=True, metavar="REPORT.JSON")
    p_bench.add_argument("--csv", metavar="REPORT.CSV", help="also write flat CSV rows")
    p_bench.add_argument(
        "--external",
        metavar="SCORES.JSONL",
        help="sidecar of named external scores ({id, model, name, value} lines)",
    )
    p_bench.add_argument(
        "--weights",
        metavar="NAME=W,...",
        help="combine rewards, e.g. motion=0.5,mllm=0.5 (weights sum to 1)",
    )
    p_bench.add_argument("--jobs", type=int, default=1, help="worker threads (default 1)")
    p_bench.add_argument(
        "--flo-dir",
        metavar="DIR",
        help="directory of precomputed flows keyed by entry id",
    )
    _add_config_flags(p_bench)
    p_bench.set_defaults(func=_cmd_bench)

    p_stats = sub.add_parser("stats", help="dataset motion-magnitude statistics")
    p_stats.add_argument("--manifest", required=True)
    p_stats.add_argument(
        "--sample", type=int, default=None, help="sample size (default: all entries)"
    )
    p_stats.add_argument("--seed", type=int, default=0, help="sampling seed")
    p_stats.add_argument(
        "--flo-dir",
        metavar="DIR",
        help="directory of precomputed flows keyed by entry id",
    )
    _add_config_flags(p_stats)
    p_stats.set_defaults(func=_cmd_stats)

    p_nft = sub.add_parser(
        "nft-lab", help="negative-aware finetuning on the toy two-mode task"
    )
    p_nft.add_argument("--seed", type=int, default=0)
    p_nft.add_argument("--rounds", type=int, default=None, help="finetuning rounds")
    p_nft.add_argument("--groups", type=int, default=None, help="groups per round")
    p_nft.add_argument("--group-size", type=int, default=None, help="samples per group")
    p_nft.add_argument("--beta", type=float, default=None, help="guidance strength")
    p_nft.add_argument("--kl-weight", type=float, default=None)
    p_nft.add_argument(
        "--lr", dest="learning_rate", type=float, default=None, help="learning rate"
    )
    p_nft.add_argument(
        "--reward",
        choices=("mode-target", "motion-proxy"),
        default="mode-target",
        help="raw reward: in-mode indicator, or the motion reward of a "
        "constant flow field against the mode's displacement",
    )
    p_nft.add_argument(
        "--pretrain-steps", type=int, default=1500, help="flow-matching pretrain steps"
    )
    p_nft.add_argument("--csv", metavar="ROUNDS.CSV", help="per-round CSV (default: stdout)")
    p_nft.add_argument("--out", metavar="REPORT.JSON", help="TrainReport JSON (default: stdout)")
    _add_config_flags(p_nft)
    p_nft.set_defaults(func=_cmd_nft_lab)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MotionScoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
