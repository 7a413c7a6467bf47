"""Thin command-line client for the fairmtl service.

Every subcommand talks to the service API: by default the app is mounted
in-process over an ASGI transport, so no server needs to be running; pass
``--server URL`` to use a remote instance started with ``fairmtl serve``.
File outputs are written atomically by the client.
"""

from __future__ import annotations

import argparse
import glob
import json
import sys
from pathlib import Path

import httpx

from .harness import SWEEPABLE, dump_json, write_text_atomic
from .trainer import render_loss_trace_csv

DEFAULT_TIMEOUT = 600.0


class CliError(Exception):
    pass


def _make_client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server.rstrip("/"), timeout=DEFAULT_TIMEOUT)
    from .service.app import create_app

    return httpx.Client(
        transport=httpx.ASGITransport(app=create_app()),
        base_url="http://fairmtl.local",
        timeout=DEFAULT_TIMEOUT,
    )


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    try:
        response = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        raise CliError(f"request failed: {exc}") from exc
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise CliError(f"{path} returned {response.status_code}: {detail}")
    return response.json()


def parse_attributes(spec: str) -> list[dict]:
    """Parse ``name:v1:v2;name2:v1:v2`` or ``name:<cardinality>`` syntax."""
    out = []
    for chunk in spec.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) < 2:
            raise CliError(f"attribute {chunk!r}: expected name:values or name:cardinality")
        name = parts[0]
        if len(parts) == 2 and parts[1].isdigit():
            values = [f"{name}_{i}" for i in range(int(parts[1]))]
        else:
            values = parts[1:]
        if len(values) < 2:
            raise CliError(f"attribute {name!r} needs at least two values")
        out.append({"name": name, "values": values})
    if not out:
        raise CliError("no attributes given")
    return out


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise CliError(f"config {path} must hold a JSON object")
    return data


_RUN_FLAGS: list[tuple[str, type | None]] = [
    ("method", str),
    ("corpus", str),
    ("embeddings", str),
    ("label-names", None),       # comma list
    ("units", None),             # comma list
    ("train-fraction", float),
    ("seed", int),
    ("alpha", float),
    ("epsilon-annot", float),
    ("epsilon-cluster", float),
    ("knn-k", int),
    ("knn-scope", str),
    ("beta", float),
    ("beta0", float),
    ("lambda", float),
    ("learning-rate", float),
    ("epochs", int),
    ("batch-size", int),
    ("bias-objective", str),
    ("l2-form", str),
    ("bias-head-input", str),
    ("attr-epochs", int),
    ("attr-learning-rate", float),
    ("kmeans-restarts", int),
    ("kmeans-max-iter", int),
    ("kmeans-tol", float),
    ("tokenizer", str),
    ("eval-split", str),
]


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    for flag, typ in _RUN_FLAGS:
        kwargs: dict = {"default": argparse.SUPPRESS}
        if typ is not None:
            kwargs["type"] = typ
        parser.add_argument(f"--{flag}", **kwargs)
    parser.add_argument("--attributes", default=argparse.SUPPRESS,
                        help="schema, e.g. 'gender:male:female;race:2'")
    parser.add_argument("--dw", action="store_true", default=argparse.SUPPRESS,
                        help="mark the run as using debiased embeddings (display only)")
    parser.add_argument("--config", help="JSON config file; flags override its values")


def _collect_run_payload(args: argparse.Namespace) -> dict:
    payload = _load_config_file(getattr(args, "config", None))
    supplied = {k: v for k, v in vars(args).items()
                if k not in ("config", "command", "server", "out_dir", "out", "save_model",
                             "parameter", "values", "repeats", "csv_out")}
    for key, value in supplied.items():
        name = key.replace("_", "-")
        if name == "attributes":
            payload["attributes"] = parse_attributes(value)
        elif name in ("label-names", "units"):
            payload[key] = [v.strip() for v in value.split(",") if v.strip()]
        elif name == "lambda":
            payload["lambda"] = value
        else:
            payload[key.replace("-", "_")] = value
    if isinstance(payload.get("attributes"), str):
        payload["attributes"] = parse_attributes(payload["attributes"])
    for required in ("method", "corpus", "embeddings", "attributes"):
        if required not in payload:
            raise CliError(f"missing required option --{required} (or config key)")
    return payload


def _write_run_outputs(args: argparse.Namespace, data: dict) -> Path:
    out_dir = Path(getattr(args, "out_dir", None) or
                   f"results/{data['display_name'].lower()}_seed{data['config']['seed']}")
    report_csv = data.pop("report_csv")
    checkpoint = data.pop("checkpoint")
    write_text_atomic(out_dir / "report.csv", report_csv)
    write_text_atomic(out_dir / "config.json", dump_json(data["config"]))
    write_text_atomic(out_dir / "result.json", dump_json(data))
    trace = [(int(e), p, b, t) for e, p, b, t in data["loss_trace"]]
    write_text_atomic(out_dir / "loss_trace.csv", render_loss_trace_csv(trace))
    if getattr(args, "save_model", None):
        write_text_atomic(Path(args.save_model), checkpoint)
    return out_dir


def cmd_run(args: argparse.Namespace) -> int:
    payload = _collect_run_payload(args)
    with _make_client(args.server) as client:
        data = _post(client, "/run", payload)
    out_dir = _write_run_outputs(args, data)
    acc = data["report"]["accuracy"]
    print(f"{data['display_name']}: accuracy={acc:.4f}")
    for unit in data["report"]["units"]:
        f = unit["fairness"]
        g = unit["gamma"]
        name = f"{unit['label_name']}:{unit['attribute_name']}"
        f_text = "undef" if f is None else f"{f:.4f}"
        g_text = "undef" if g is None else f"{g:.4f}"
        print(f"  {name}: F={f_text} gamma={g_text}")
    print(f"wrote {out_dir}/report.csv, result.json, config.json, loss_trace.csv")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    payload = _collect_run_payload(args)
    payload["parameter"] = args.parameter
    try:
        payload["values"] = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise CliError(f"bad --values: {exc}") from exc
    payload["repeats"] = args.repeats
    with _make_client(args.server) as client:
        data = _post(client, "/sweep", payload)
    out = Path(args.out)
    write_text_atomic(out, data["csv_text"])
    means = [r for r in data["rows"] if r["row_type"] == "mean"]
    for row in means:
        f = "undef" if row["F"] is None else f"{row['F']:.4f}"
        print(f"{row['parameter']}={row['value']} unit={row['unit']} mean F={f} "
              f"mean acc={row['accuracy']:.4f}")
    print(f"wrote {out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    payload = {
        "label_count": args.labels,
        "per_cell": args.per_cell,
        "separation": args.separation,
        "bias": args.bias,
        "sigma": args.sigma,
        "dimension": args.dim,
        "seed": args.seed,
        "biased_labels": [int(v) for v in args.biased_labels.split(",")],
    }
    if args.attributes:
        payload["attributes"] = parse_attributes(args.attributes)
    if args.designated_combo is not None:
        payload["designated_combo"] = args.designated_combo
    with _make_client(args.server) as client:
        data = _post(client, "/synth", payload)
    out = Path(args.out)
    emb_out = Path(args.embeddings_out) if args.embeddings_out else out.with_name(
        out.stem + "_embeddings.txt"
    )
    write_text_atomic(out, data["corpus_csv"])
    write_text_atomic(emb_out, data["embeddings_txt"])
    print(f"wrote {data['n_instances']} instances to {out} (embeddings: {emb_out})")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    paths: list[str] = []
    for pattern in args.results:
        hits = sorted(glob.glob(pattern))
        paths.extend(hits if hits else [pattern])
    results = []
    for path in paths:
        try:
            results.append(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read result {path}: {exc}") from exc
    with _make_client(args.server) as client:
        data = _post(client, "/report", {"results": results})
    print(data["table"], end="")
    if args.csv_out:
        write_text_atomic(Path(args.csv_out), data["csv_text"])
        print(f"wrote {args.csv_out}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairmtl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one method end to end")
    _add_run_flags(run)
    run.add_argument("--out-dir", help="output directory (default results/<method>_seed<seed>)")
    run.add_argument("--save-model", help="also write the model checkpoint here")
    run.add_argument("--server", help="remote service URL (default: in-process)")
    run.set_defaults(func=cmd_run)

    swp = sub.add_parser("sweep", help="grid sweep over one parameter")
    _add_run_flags(swp)
    swp.add_argument("--parameter", required=True, choices=sorted(SWEEPABLE))
    swp.add_argument("--values", required=True, help="comma-separated values")
    swp.add_argument("--repeats", type=int, default=1)
    swp.add_argument("--out", default="sweep.csv")
    swp.add_argument("--server", help="remote service URL (default: in-process)")
    swp.set_defaults(func=cmd_sweep)

    syn = sub.add_parser("synth", help="generate a planted synthetic corpus")
    syn.add_argument("--out", required=True, help="corpus CSV path")
    syn.add_argument("--embeddings-out", help="embedding file path (default <out>_embeddings.txt)")
    syn.add_argument("--labels", type=int, default=4)
    syn.add_argument("--attributes", help="e.g. 'gender:2;race:2' or full value names")
    syn.add_argument("--per-cell", type=int, default=50)
    syn.add_argument("--separation", type=float, default=10.0)
    syn.add_argument("--bias", type=float, default=0.0)
    syn.add_argument("--sigma", type=float, default=1.0)
    syn.add_argument("--dim", type=int, default=10)
    syn.add_argument("--seed", type=int, default=1)
    syn.add_argument("--biased-labels", default="0", help="comma list of biased label ids")
    syn.add_argument("--designated-combo", type=int)
    syn.add_argument("--server", help="remote service URL (default: in-process)")
    syn.set_defaults(func=cmd_synth)

    rep = sub.add_parser("report", help="render saved run results as a table")
    rep.add_argument("results", nargs="+", help="result.json files or globs")
    rep.add_argument("--csv-out", help="also write the combined report CSV here")
    rep.add_argument("--server", help="remote service URL (default: in-process)")
    rep.set_defaults(func=cmd_report)

    srv = sub.add_parser("serve", help="start the HTTP service")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8000)
    srv.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "server"):
        args.server = None
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
