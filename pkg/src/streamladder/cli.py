"""Command-line client for the pipeline service.

Every subcommand is one request against the service API. By default the app
runs in-process (no server needed); pass --server to target a running
instance instead. Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys

import httpx

from .errors import UsageError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we reserve 2 for data errors
        raise UsageError(message)


class ServiceClient:
    """POST/GET against a remote server or the in-process app."""

    def __init__(self, server: str | None):
        self.server = server

    def request(self, method: str, path: str, payload: dict | None = None):
        if self.server:
            with httpx.Client(base_url=self.server, timeout=None) as client:
                response = client.request(method, path, json=payload)
            return response.status_code, response.json()
        return asyncio.run(self._in_process(method, path, payload))

    async def _in_process(self, method: str, path: str, payload: dict | None):
        from .service import create_app

        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport, base_url="http://service", timeout=None) as client:
            response = await client.request(method, path, json=payload)
        return response.status_code, response.json()


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--server", metavar="URL", default=None,
                        help="service base URL (default: run the service in-process)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="streamladder", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-synthetic", help="generate a synthetic stats log, RQ table and channel traces")
    p.add_argument("--out-dir", required=True, help="directory for stats.jsonl, rq.csv, complexity.csv, cc_trace.csv, frame_sizes.csv")
    p.add_argument("--seed", type=int, default=42, help="generator seed")
    p.add_argument("--scenes", type=int, default=400, help="number of scenes")
    p.add_argument("--frames-per-scene", type=int, default=70, help="frames per scene (>= 61)")
    p.add_argument("--noise", type=float, default=0.02, help="relative noise level on RQ curves")
    p.add_argument("--complexity-range", default="0,1", help="low,high latent complexity bounds")
    p.add_argument("--clip-id", default="synth", help="clip id written to the RQ table")
    _common(p)

    p = sub.add_parser("hull", help="compute per-scene convex hulls from an RQ table")
    p.add_argument("--rq", required=True, help="RQ table CSV")
    p.add_argument("--metric", default="vmaf", choices=["vmaf", "psnr_y", "ssim_yb"], help="hull quality metric")
    p.add_argument("--out", required=True, help="output hull CSV")
    _common(p)

    p = sub.add_parser("label", help="derive per-zone ground-truth labels from scene hulls")
    p.add_argument("--rq", required=True, help="RQ table CSV")
    p.add_argument("--zones", default=None, help="zone table file (default: built-in table)")
    p.add_argument("--metric", default="vmaf", choices=["vmaf", "psnr_y", "ssim_yb"], help="hull quality metric")
    p.add_argument("--out", required=True, help="output labels CSV")
    _common(p)

    p = sub.add_parser("train", help="train per-zone classifiers from a stats log and labels")
    p.add_argument("--stats", required=True, help="stats log (JSONL)")
    p.add_argument("--labels", required=True, help="labels CSV from `label`")
    p.add_argument("--out-dir", required=True, help="directory for zone_<id>.weights.json bundles")
    p.add_argument("--zones", default=None, help="zone table file")
    p.add_argument("--zone", type=int, default=None, help="train a single zone id (default: all zones)")
    p.add_argument("--iterations", type=int, default=800, help="training iterations per zone")
    p.add_argument("--batch", type=int, default=64, help="mini-batch size")
    p.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate")
    p.add_argument("--val-fraction", type=float, default=0.1, help="validation split fraction")
    p.add_argument("--seed", type=int, default=42, help="training seed")
    _common(p)

    p = sub.add_parser("infer", help="predict per-scene labels with trained bundles")
    p.add_argument("--stats", required=True, help="stats log (JSONL)")
    p.add_argument("--bundles", required=True, help="directory with zone_<id>.weights.json")
    p.add_argument("--zones", default=None, help="zone table file")
    p.add_argument("--out", required=True, help="output predictions CSV")
    _common(p)

    p = sub.add_parser("simulate", help="replay a session through a policy and the channel model")
    p.add_argument("--stats", required=True, help="stats log (JSONL)")
    p.add_argument("--cc", required=True, help="congestion-control trace CSV")
    p.add_argument("--sizes", required=True, help="per-resolution frame sizes CSV")
    p.add_argument("--policy", required=True, choices=["cae", "static", "oracle"], help="decision policy")
    p.add_argument("--bundles", default=None, help="bundle directory (cae policy)")
    p.add_argument("--labels", default=None, help="labels CSV (oracle policy)")
    p.add_argument("--zones", default=None, help="zone table file")
    p.add_argument("--fps", type=float, default=60.0, help="frame rate")
    p.add_argument("--drop-threshold", type=float, default=2.0, help="drop threshold in frame intervals")
    p.add_argument("--capacity-scale", type=float, default=1.0, help="channel capacity multiplier on the cc trace")
    p.add_argument("--out", required=True, help="output per-frame decision CSV")
    _common(p)

    p = sub.add_parser("evaluate", help="BD metrics and significance of one decision set vs another")
    p.add_argument("--rq", required=True, help="RQ table CSV")
    p.add_argument("--reference", required=True, help="reference decisions CSV (e.g. static ladder)")
    p.add_argument("--test", required=True, help="test decisions CSV (e.g. predicted ladder)")
    p.add_argument("--metric", action="append", choices=["vmaf", "psnr_y", "ssim_yb"], default=None,
                   help="metric to evaluate (repeatable; default: all three)")
    p.add_argument("--reference-drop-pct", type=float, default=None, help="reference policy frame-drop %%")
    p.add_argument("--test-drop-pct", type=float, default=None, help="test policy frame-drop %%")
    p.add_argument("--out", required=True, help="output report CSV")
    p.add_argument("--out-text", default=None, help="optional human-readable report path")
    _common(p)

    p = sub.add_parser("stats-test", help="Wilcoxon signed-rank test and Cohen's d for paired samples")
    p.add_argument("--pairs", required=True, help="CSV with columns x,y")
    p.add_argument("--alternative", default="greater", choices=["greater", "two_sided"], help="test sidedness")
    _common(p)

    return parser


def _read_pairs(path: str) -> tuple[list[float], list[float]]:
    import csv

    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise UsageError(str(exc)) from None
    try:
        return [float(r["x"]) for r in rows], [float(r["y"]) for r in rows]
    except (KeyError, ValueError):
        raise UsageError(f"{path}: need numeric columns 'x' and 'y'") from None


def _payload(args: argparse.Namespace) -> tuple[str, dict]:
    cmd = args.command
    if cmd == "gen-synthetic":
        try:
            low, high = (float(v) for v in args.complexity_range.split(","))
        except ValueError:
            raise UsageError("--complexity-range must be 'low,high'") from None
        return "/synthetic", {
            "out_dir": args.out_dir,
            "seed": args.seed,
            "n_scenes": args.scenes,
            "frames_per_scene": args.frames_per_scene,
            "noise_level": args.noise,
            "complexity_low": low,
            "complexity_high": high,
            "clip_id": args.clip_id,
        }
    if cmd == "hull":
        return "/hulls", {"rq_path": args.rq, "metric": args.metric, "out_path": args.out}
    if cmd == "label":
        return "/labels", {
            "rq_path": args.rq,
            "metric": args.metric,
            "zones_path": args.zones,
            "out_path": args.out,
        }
    if cmd == "train":
        return "/train", {
            "stats_path": args.stats,
            "labels_path": args.labels,
            "out_dir": args.out_dir,
            "zones_path": args.zones,
            "zone": args.zone,
            "iterations": args.iterations,
            "batch_size": args.batch,
            "learning_rate": args.lr,
            "val_fraction": args.val_fraction,
            "seed": args.seed,
        }
    if cmd == "infer":
        return "/infer", {
            "stats_path": args.stats,
            "bundles_dir": args.bundles,
            "zones_path": args.zones,
            "out_path": args.out,
        }
    if cmd == "simulate":
        if args.policy == "cae" and not args.bundles:
            raise UsageError("--policy cae requires --bundles")
        if args.policy == "oracle" and not args.labels:
            raise UsageError("--policy oracle requires --labels")
        return "/simulate", {
            "stats_path": args.stats,
            "cc_path": args.cc,
            "sizes_path": args.sizes,
            "policy": args.policy,
            "bundles_dir": args.bundles,
            "labels_path": args.labels,
            "zones_path": args.zones,
            "fps": args.fps,
            "drop_threshold": args.drop_threshold,
            "capacity_scale": args.capacity_scale,
            "out_path": args.out,
        }
    if cmd == "evaluate":
        return "/evaluate", {
            "rq_path": args.rq,
            "reference_path": args.reference,
            "test_path": args.test,
            "metrics": args.metric or ["vmaf", "psnr_y", "ssim_yb"],
            "reference_drop_pct": args.reference_drop_pct,
            "test_drop_pct": args.test_drop_pct,
            "out_csv": args.out,
            "out_text": args.out_text,
        }
    if cmd == "stats-test":
        x, y = _read_pairs(args.pairs)
        return "/stats-test", {"x": x, "y": y, "alternative": args.alternative}
    raise UsageError(f"unknown command {cmd!r}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        path, payload = _payload(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    client = ServiceClient(args.server)
    try:
        status, body = client.request("POST", path, payload)
    except httpx.HTTPError as exc:
        print(f"error: service unreachable: {exc}", file=sys.stderr)
        return EXIT_DATA

    if status == 200:
        print(json.dumps(body, indent=2, sort_keys=True))
        return EXIT_OK
    detail = body.get("detail") if isinstance(body, dict) else None
    if isinstance(detail, dict):
        message = detail.get("message", str(detail))
        kind = detail.get("type", "error")
    else:
        message, kind = str(detail or body), "error"
    print(f"error [{kind}]: {message}", file=sys.stderr)
    return EXIT_USAGE if status == 400 else EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
