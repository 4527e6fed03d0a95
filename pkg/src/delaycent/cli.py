"""Command-line frontend: graph ingestion, analyses, sweeps, simulation, reports.

Exit codes: 0 success, 2 usage or input errors, 3 stability violations
(the diagnostic names the admissible delay bound), 4 numeric failures.
Diagnostics go to stderr; report data goes to the output path or stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import centrality as ct
from . import oracles, secondorder
from .graph import (
    GraphError,
    GraphMatrices,
    WeightedGraph,
    build_matrices,
    tokenize_edge_lines,
)
from .quadrature import QuadratureError
from .report import CentralityReport
from .secondorder import SecondOrderConfig, SecondOrderStabilityError
from .spectral import (
    DisconnectedGraphError,
    SpectralError,
    StabilityError,
    decompose,
    stability_margin,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_UNSTABLE = 3
EXIT_NUMERIC = 4

_SIG_DIGITS = 12


def _fmt_float(x: float) -> str:
    return f"{x:.{_SIG_DIGITS}g}"


def _jsonable(obj: Any) -> Any:
    """Round floats to 12 significant digits; non-finite become null."""
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(_fmt_float(x)) if math.isfinite(x) else None
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def _csv_cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return _fmt_float(float(value)) if math.isfinite(value) else ""
    return str(value)


def _write_output(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def _emit(payload: dict, header, rows, fmt: str, output: str | None) -> None:
    """Write one report.  JSON is a single sorted document; CSV streams row
    by row so long sweeps never buffer their full table."""
    if fmt == "json":
        _write_output(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", output)
        return
    handle = open(output, "w", newline="") if output else sys.stdout
    try:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(v) for v in row])
    finally:
        if output:
            handle.close()


class _IdMap:
    """Mapping between raw (possibly sparse) input node ids and internal ids."""

    def __init__(self, original_ids: list[int]):
        self.original = original_ids
        self.to_internal = {orig: k for k, orig in enumerate(original_ids)}

    @property
    def identity(self) -> bool:
        return self.original == list(range(len(self.original)))

    def orig(self, internal: int) -> int:
        return self.original[internal]


def remap_node_ids(records, declared_n: int | None) -> tuple[WeightedGraph, _IdMap]:
    """Densify arbitrary nonnegative node ids into 0..n-1.

    ``records`` are the raw ``(line, i, j, w)`` tuples from
    :func:`delaycent.graph.tokenize_edge_lines`.  When the raw ids are
    already dense (and consistent with any declared count), the map is the
    identity and declared isolated nodes are preserved.
    """
    ids = sorted({i for _, i, j, _ in records} | {j for _, i, j, _ in records})
    max_id = ids[-1] if ids else -1
    dense = ids == list(range(max_id + 1))
    if dense and (declared_n is None or declared_n >= max_id + 1):
        n = declared_n if declared_n is not None else max_id + 1
        id_map = _IdMap(list(range(n)))
        graph = _build_from_records(records, n, id_map)
        return graph, id_map
    id_map = _IdMap(ids)
    graph = _build_from_records(records, len(ids), id_map)
    return graph, id_map


def _build_from_records(records, n: int, id_map: _IdMap) -> WeightedGraph:
    seen: dict[tuple[int, int], int] = {}
    edges = []
    for line_no, i, j, w in records:
        a, b = id_map.to_internal[i], id_map.to_internal[j]
        if a == b:
            raise GraphError(f"line {line_no}: self-loop at node {i}")
        key = (min(a, b), max(a, b))
        if key in seen:
            raise GraphError(
                f"line {line_no}: duplicate edge ({i}, {j}), first seen on line {seen[key]}"
            )
        if not (np.isfinite(w) and w > 0.0):
            raise GraphError(f"line {line_no}: non-positive weight {w}")
        seen[key] = line_no
        edges.append((key[0], key[1], w))
    return WeightedGraph(n=n, edges=tuple(edges))


def _load_graph(args) -> tuple[GraphMatrices, _IdMap]:
    path = Path(args.graph)
    try:
        text = path.read_text()
    except OSError as exc:
        raise GraphError(f"cannot read graph file {path}: {exc}") from exc
    declared_n, records = tokenize_edge_lines(text)
    if not records and declared_n is None:
        raise GraphError(f"graph file {path} contains no edges and no n= header")
    graph, id_map = remap_node_ids(records, declared_n)
    if not id_map.identity:
        side = Path(args.output + ".idmap.json") if args.output else path.with_suffix(path.suffix + ".idmap.json")
        side.write_text(
            json.dumps({str(orig): k for k, orig in enumerate(id_map.original)}, indent=2, sort_keys=True)
            + "\n"
        )
        print(f"note: sparse node ids remapped; map written to {side}", file=sys.stderr)
    if getattr(args, "verbose", False):
        print(
            f"loaded {path}: n={graph.n}, edges={graph.num_edges},"
            f" remapped={not id_map.identity}",
            file=sys.stderr,
        )
    return build_matrices(graph), id_map


def _parse_grid(text: str, name: str) -> list[float]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValueError(f"{name} must be a comma-separated list of numbers: {text!r}") from None
    if not values:
        raise ValueError(f"{name} is empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError(f"{name} must be strictly increasing: {text!r}")
    return values


def _load_sigma(path: str | None, expected: int, name: str) -> np.ndarray | None:
    if path is None:
        return None
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read variance file {path}: {exc}") from exc
    var = np.asarray(data, dtype=float)
    if var.shape != (expected,):
        raise ValueError(
            f"variance file {path} has {var.size} entries, expected {expected} for {name}"
        )
    return var


def _report_payload(report: CentralityReport, gm: GraphMatrices, id_map: _IdMap, is_link: bool) -> dict:
    payload = report.to_dict()
    if is_link:
        payload["links"] = [
            [id_map.orig(i), id_map.orig(j)] for i, j in gm.graph.edge_pairs()
        ]
    elif not id_map.identity:
        payload["ids"] = [id_map.orig(k) for k in range(gm.n)]
        payload["ranking"] = [id_map.orig(k) for k in report.ranking]
        payload["tie_groups"] = [[id_map.orig(k) for k in g] for g in report.tie_groups]
    return payload


def _report_rows(report: CentralityReport, gm: GraphMatrices, id_map: _IdMap, is_link: bool):
    rank_of = {idx: pos for pos, idx in enumerate(report.ranking)}
    rows = []
    if is_link:
        header = ["id", "i", "j", "index", "rank"]
        for e, (i, j) in enumerate(gm.graph.edge_pairs()):
            rows.append([e, id_map.orig(i), id_map.orig(j), report.indices[e], rank_of[e]])
    else:
        header = ["id", "index", "rank"]
        for k in range(report.size):
            rows.append([id_map.orig(k), report.indices[k], rank_of[k]])
    return header, rows


def _structure_from_args(args) -> ct.NoiseStructure:
    return ct.NoiseStructure.from_name(args.structure)


def _cmd_stability(args) -> int:
    gm, _ = _load_graph(args)
    dec = decompose(gm.laplacian, require_connected=True)
    info = stability_margin(dec, args.tau)
    payload = {
        "tau": args.tau,
        "tau_max": info.tau_max,
        "margin": info.margin,
        "stable": info.stable,
        "n": gm.n,
        "num_edges": gm.num_edges,
    }
    header = ["tau", "tau_max", "margin", "stable", "n", "num_edges"]
    rows = [[payload[k] for k in header]]
    _emit(payload, header, rows, args.format, args.output)
    return EXIT_OK


def _cmd_centrality(args) -> int:
    gm, id_map = _load_graph(args)
    structure = _structure_from_args(args)
    report = ct.centrality_report(gm, structure, args.tau)
    is_link = structure.indexes_links
    payload = _report_payload(report, gm, id_map, is_link)
    header, rows = _report_rows(report, gm, id_map, is_link)
    _emit(payload, header, rows, args.format, args.output)
    return EXIT_OK


def _cmd_rank(args) -> int:
    gm, id_map = _load_graph(args)
    structure = _structure_from_args(args)
    report = ct.centrality_report(gm, structure, args.tau)
    is_link = structure.indexes_links
    ranking = list(report.ranking)
    tie_groups = [list(g) for g in report.tie_groups]
    if not is_link and not id_map.identity:
        ranking = [id_map.orig(k) for k in ranking]
        tie_groups = [[id_map.orig(k) for k in g] for g in tie_groups]
    payload = {
        "tau": report.tau,
        "structure": report.structure,
        "ranking": ranking,
        "tie_groups": tie_groups,
        "tau_max": report.tau_max,
        "margin": report.margin,
    }
    rows = [[pos, idx] for pos, idx in enumerate(ranking)]
    _emit(payload, ["rank", "id"], rows, args.format, args.output)
    return EXIT_OK


def _cmd_sensitivity(args) -> int:
    gm, id_map = _load_graph(args)
    structure = _structure_from_args(args)
    kappa = ct.link_sensitivity(gm, structure, args.tau)
    dec = decompose(gm.laplacian, require_connected=True)
    info = stability_margin(dec, args.tau)
    payload = {
        "tau": args.tau,
        "structure": structure.name,
        "kappa": list(kappa),
        "links": [[id_map.orig(i), id_map.orig(j)] for i, j in gm.graph.edge_pairs()],
        "tau_max": info.tau_max,
        "margin": info.margin,
    }
    rows = [
        [e, id_map.orig(i), id_map.orig(j), kappa[e]]
        for e, (i, j) in enumerate(gm.graph.edge_pairs())
    ]
    _emit(payload, ["id", "i", "j", "kappa"], rows, args.format, args.output)
    return EXIT_OK


def _cmd_perf(args) -> int:
    gm, _ = _load_graph(args)
    structure = _structure_from_args(args)
    var = _load_sigma(args.sigma, ct.noise_channels(gm, structure), structure.name)
    rho = ct.performance(gm, ct.NoiseSpec(structure, var), args.tau)
    dec = decompose(gm.laplacian, require_connected=True)
    info = stability_margin(dec, args.tau)
    payload = {
        "tau": args.tau,
        "structure": structure.name,
        "rho_ss": rho,
        "tau_max": info.tau_max,
        "margin": info.margin,
    }
    header = ["tau", "structure", "rho_ss", "tau_max", "margin"]
    _emit(payload, header, [[payload[k] for k in header]], args.format, args.output)
    return EXIT_OK


def _cmd_sweep_tau(args) -> int:
    gm, id_map = _load_graph(args)
    structure = _structure_from_args(args)
    grid = _parse_grid(args.tau_grid, "--tau-grid")
    result = ct.tau_sweep(gm, structure, grid)
    is_link = structure.indexes_links
    reports = [_report_payload(r, gm, id_map, is_link) for r in result.reports]
    rank_changes = list(result.rank_changes)
    if not is_link and not id_map.identity:
        rank_changes = [(k, id_map.orig(i), id_map.orig(j)) for k, i, j in rank_changes]
    payload = {
        "structure": structure.name,
        "tau_grid": grid,
        "reports": reports,
        "rank_changes": [list(f) for f in rank_changes],
    }
    def rows():
        for tau, report in zip(grid, result.reports):
            rank_of = {idx: pos for pos, idx in enumerate(report.ranking)}
            for k in range(report.size):
                ident = k if is_link else id_map.orig(k)
                yield [tau, ident, report.indices[k], rank_of[k]]

    _emit(payload, ["tau", "id", "index", "rank"], rows(), args.format, args.output)
    return EXIT_OK


def _cmd_sweep_scale(args) -> int:
    gm, id_map = _load_graph(args)
    structure = _structure_from_args(args)
    grid = _parse_grid(args.alpha_grid, "--alpha-grid")
    result = ct.scale_sweep(gm, structure, args.tau, grid)
    is_link = structure.indexes_links
    payload = {
        "structure": structure.name,
        "tau": args.tau,
        "alpha_grid": grid,
        "reports": [_report_payload(r, gm, id_map, is_link) for r in result.reports],
        "baseline": _report_payload(result.baseline, gm, id_map, is_link),
        "matches_baseline": result.matches_baseline,
    }
    def rows():
        for alpha, report, match in zip(grid, result.reports, result.matches_baseline):
            rank_of = {idx: pos for pos, idx in enumerate(report.ranking)}
            for k in range(report.size):
                ident = k if is_link else id_map.orig(k)
                yield [alpha, ident, report.indices[k], rank_of[k], match]

    _emit(payload, ["alpha", "id", "index", "rank", "matches_baseline"], rows(), args.format, args.output)
    return EXIT_OK


def _cmd_second_order(args) -> int:
    gm, id_map = _load_graph(args)
    cfg = SecondOrderConfig(b=args.b, tau=args.tau, quad_tol=args.quad_tol)
    report = secondorder.so_node_centrality(gm, cfg)
    payload = _report_payload(report, gm, id_map, is_link=False)
    header, rows = _report_rows(report, gm, id_map, is_link=False)
    _emit(payload, header, rows, args.format, args.output)
    return EXIT_OK


def _sim_config(args) -> oracles.SimConfig:
    return oracles.SimConfig(
        tau=args.tau,
        dt=args.dt,
        burn_in=args.burn_in,
        horizon=args.horizon,
        n_traj=args.traj,
        seed=args.seed,
    )


def _cmd_simulate(args) -> int:
    gm, _ = _load_graph(args)
    structure = _structure_from_args(args)
    channels = ct.noise_channels(gm, structure)
    var = _load_sigma(args.sigma, channels, structure.name)
    if var is None:
        var = np.ones(channels)
    cfg = _sim_config(args)
    result = oracles.simulate(gm, ct.input_matrix(gm, structure), var, cfg)
    payload = result.to_dict()
    header = ["rho_hat", "std_err", "tau_snapped", "effective_samples"] + [
        f"var_{k}" for k in range(gm.n)
    ]
    row = [result.rho_hat, result.std_err, result.tau_snapped, result.effective_samples]
    row += [v for v in result.per_node_var]
    _emit(payload, header, [row], args.format, args.output)
    return EXIT_OK


def _cmd_verify(args) -> int:
    gm, _ = _load_graph(args)
    structure = _structure_from_args(args)
    rho_closed = ct.performance(gm, ct.NoiseSpec(structure), args.tau)
    cfg = _sim_config(args)
    result = oracles.simulate(
        gm, ct.input_matrix(gm, structure), np.ones(ct.noise_channels(gm, structure)), cfg
    )
    z = (result.rho_hat - rho_closed) / result.std_err if result.std_err else math.inf
    passed = math.isfinite(z) and abs(z) <= 3.0
    payload = {
        "tau": args.tau,
        "structure": structure.name,
        "rho_closed_form": rho_closed,
        "rho_hat": result.rho_hat,
        "std_err": result.std_err,
        "z_score": z,
        "n_sigma": 3.0,
        "passed": passed,
    }
    header = ["tau", "structure", "rho_closed_form", "rho_hat", "std_err", "z_score", "passed"]
    _emit(payload, header, [[payload[k] for k in header]], args.format, args.output)
    verdict = "PASS" if passed else "FAIL"
    print(
        f"{verdict}: closed form {rho_closed:.6g} vs MC {result.rho_hat:.6g}"
        f" +/- {result.std_err:.3g} (z = {z:.2f})",
        file=sys.stderr,
    )
    return EXIT_OK if passed else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delaycent",
        description="Performance and centrality analysis of time-delay consensus networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, structure=True, tau=True) -> None:
        p.add_argument("--graph", required=True, help="edge-list file (i j [w] per line)")
        if structure:
            p.add_argument(
                "--structure",
                required=True,
                help="noise structure: dynamics|sensor|receiver|emitter|comm-channel|measurement",
            )
        if tau:
            p.add_argument("--tau", type=float, default=0.0, help="communication delay")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--output", help="write report here instead of stdout")
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("stability", help="stability boundary and margin at a delay")
    common(p, structure=False)
    p.set_defaults(func=_cmd_stability)

    p = sub.add_parser("centrality", help="node or link centrality indices")
    common(p)
    p.set_defaults(func=_cmd_centrality)

    p = sub.add_parser("rank", help="ranking only (ids in descending index order)")
    common(p)
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("sensitivity", help="per-link weight sensitivities (dynamics|sensor)")
    common(p)
    p.set_defaults(func=_cmd_sensitivity)

    p = sub.add_parser("perf", help="steady-state dispersion rho_ss")
    common(p)
    p.add_argument("--sigma", help="JSON file with per-channel variances")
    p.set_defaults(func=_cmd_perf)

    p = sub.add_parser("sweep-tau", help="centrality along a delay grid with rank-flip log")
    common(p, tau=False)
    p.add_argument("--tau-grid", required=True, help="comma-separated increasing delays")
    p.set_defaults(func=_cmd_sweep_tau)

    p = sub.add_parser("sweep-scale", help="centrality under uniform weight scaling")
    common(p)
    p.add_argument("--alpha-grid", required=True, help="comma-separated increasing scale factors")
    p.set_defaults(func=_cmd_sweep_scale)

    p = sub.add_parser("second-order", help="second-order (position/velocity) node centrality")
    common(p, structure=False)
    p.add_argument("--b", type=float, required=True, help="velocity coupling gain")
    p.add_argument("--quad-tol", type=float, default=1e-9)
    p.set_defaults(func=_cmd_second_order)

    def sim_options(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--dt", type=float, default=1e-3)
        p.add_argument("--burn-in", type=float, default=50.0)
        p.add_argument("--horizon", type=float, default=500.0)
        p.add_argument("--traj", type=int, default=32)

    p = sub.add_parser("simulate", help="Monte Carlo estimate of the dispersion")
    common(p)
    p.add_argument("--sigma", help="JSON file with per-channel variances")
    sim_options(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("verify", help="closed form vs Monte Carlo at 3 sigma")
    common(p)
    sim_options(p)
    p.set_defaults(func=_cmd_verify)

    return parser


def run(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, dispatch, and map failures to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (StabilityError, DisconnectedGraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except (
        SpectralError,
        QuadratureError,
        SecondOrderStabilityError,
        oracles.SimulationError,
        ArithmeticError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GraphError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
