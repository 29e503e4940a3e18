"""Command-line interface: a thin client of the service endpoints.

By default requests run against an in-process application instance; pass
``--server URL`` to target a running deployment instead.  Exit codes:
0 success, 1 infeasible result (or failed self-test), 2 usage errors.
"""

import argparse
import sys

from .harness import (DEFAULT_THETA_BITS, ConfigError, format_rows,
                      read_config, write_rows)

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_USAGE = 2


class CliError(Exception):
    """Input or transport problem; maps to the usage exit code."""


def _make_client(server: str | None):
    if server:
        import httpx
        return httpx.Client(base_url=server, timeout=None)
    import warnings
    with warnings.catch_warnings():
        # Some starlette builds warn about their test-client backend at
        # import time; that is noise for an in-process CLI call.
        warnings.simplefilter("ignore", DeprecationWarning)
        from fastapi.testclient import TestClient

    from .service import app
    return TestClient(app)


def _call(client, path: str, payload: dict) -> dict:
    try:
        response = client.post(path, json=payload)
    except Exception as exc:
        raise CliError(f"request to {path} failed: {exc}")
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise CliError(f"{path} returned {response.status_code}: {detail}")
    return response.json()


def _parse_values(text: str) -> list[float]:
    text = text.strip()
    if ".." in text:
        lo_s, hi_s = text.split("..", 1)
        lo, hi = int(lo_s), int(hi_s)
        if hi < lo:
            raise CliError(f"empty range '{text}'")
        return [float(v) for v in range(lo, hi + 1)]
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"cannot parse values '{text}'")


def _parse_schemes(text: str) -> list[int]:
    try:
        schemes = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"cannot parse schemes '{text}'")
    if not schemes or any(v not in (1, 2, 3) for v in schemes):
        raise CliError("schemes must be a comma list drawn from 1,2,3")
    return schemes


def _scenario_mapping(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        return read_config(path)
    except (OSError, ConfigError) as exc:
        raise CliError(str(exc))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _cmd_solve(args) -> int:
    client = _make_client(args.server)
    payload = {"scenario": _scenario_mapping(args.scenario), "seed": args.seed,
               "theta_bits": args.theta, "scheme": args.scheme}
    result = _call(client, "/solve", payload)
    print(f"feasible: {_fmt(result['feasible'])}")
    if not result["feasible"]:
        print(f"reason: {result['diagnostics'].get('message', 'unknown')}")
        return EXIT_INFEASIBLE
    for key in ("efficiency_bits_per_J", "n0", "m_bar", "alpha", "k_star"):
        print(f"{key}: {_fmt(result[key])}")
    print("breakdown:")
    for key, value in result["breakdown"].items():
        print(f"  {key}: {_fmt(value)}")
    return EXIT_OK


def _cmd_schedule(args) -> int:
    client = _make_client(args.server)
    payload = {"scenario": _scenario_mapping(args.scenario), "seed": args.seed,
               "theta_bits": args.theta, "scheme": args.scheme}
    result = _call(client, "/schedule", payload)
    if not result["feasible"]:
        print("feasible: false")
        return EXIT_INFEASIBLE
    print("sub-traffic matrices (bits):")
    for v, matrix in enumerate(result["stms"], start=1):
        print(f"  segment {v}:")
        for row in matrix:
            print("    " + " ".join(f"{x:.6g}" for x in row))
    print(result["text"], end="")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    client = _make_client(args.server)
    values = _parse_values(args.values) if args.values else []
    schemes = _parse_schemes(args.schemes)
    payload = {"scenario": _scenario_mapping(args.scenario), "axis": args.axis,
               "values": values, "schemes": schemes, "seed": args.seed,
               "reps": args.reps, "theta_bits": args.theta}
    result = _call(client, "/sweep", payload)
    rows, metadata = result["rows"], result["metadata"]
    if args.out:
        write_rows(rows, metadata, args.out, args.format)
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        sys.stdout.write(format_rows(rows, metadata, args.format))
    return EXIT_OK


def _cmd_selftest(args) -> int:
    client = _make_client(args.server)
    result = _call(client, "/selftest", {})
    for check in result["checks"]:
        status = "PASS" if check["ok"] else "FAIL"
        print(f"{status} {check['name']}: expected={check['expected']:g} "
              f"actual={check['actual']:.10g}")
    if result["passed"]:
        print("selftest: all checks passed")
        return EXIT_OK
    print("selftest: FAILED")
    return EXIT_INFEASIBLE


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import app
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsnopt",
        description="Balloon-relayed satellite network energy optimizer")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scheme=False):
        p.add_argument("--scenario", metavar="PATH", default=None,
                       help="scenario key=value file (defaults apply if omitted)")
        p.add_argument("--seed", type=int, default=0, help="traffic RNG seed")
        p.add_argument("--theta", type=float, default=DEFAULT_THETA_BITS,
                       help="uniform traffic upper bound in bits")
        p.add_argument("--server", metavar="URL", default=None,
                       help="remote service URL (default: in-process)")
        if scheme:
            p.add_argument("--scheme", type=int, choices=(1, 2, 3), default=1,
                           help="optimization scheme")

    p_solve = sub.add_parser("solve", help="optimize one scenario")
    common(p_solve, scheme=True)
    p_solve.set_defaults(func=_cmd_solve)

    p_sched = sub.add_parser("schedule",
                             help="dump sub-traffic matrices and schedules")
    common(p_sched, scheme=True)
    p_sched.set_defaults(func=_cmd_schedule)

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep")
    common(p_sweep)
    p_sweep.add_argument("--axis", choices=("n_max", "S", "theta", "beta_max",
                                            "none"), default="none")
    p_sweep.add_argument("--values", metavar="LIST", default=None,
                         help="comma list or inclusive range like 1..20")
    p_sweep.add_argument("--schemes", metavar="LIST", default="1,2,3")
    p_sweep.add_argument("--reps", type=int, default=1)
    p_sweep.add_argument("--out", metavar="PATH", default=None)
    p_sweep.add_argument("--format", choices=("csv", "json"), default="csv")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_self = sub.add_parser("selftest", help="run the built-in worked example")
    p_self.add_argument("--server", metavar="URL", default=None)
    p_self.set_defaults(func=_cmd_selftest)

    p_serve = sub.add_parser("serve", help="launch the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
