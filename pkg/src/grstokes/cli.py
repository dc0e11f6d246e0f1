"""Batch experiment driver.

Subcommands mirror the three benchmark families plus an operator property
suite:

* ``convergence``: refinement sequences per parameter combination,
* ``limit``: stiffness sweep on two fixed meshes,
* ``wellbalanced``: hydrostatic exactness over refinement sequences,
* ``check``: operator identity and conservation property checks.

Configuration is a flat ``key = value`` text file; any key can be
overridden on the command line with ``--set key=value``.  Every output CSV
embeds the fully resolved configuration in comment lines, and reruns with
identical configuration produce byte-identical files.  ``GRSTOKES_THREADS``
caps the number of parameter-grid cells solved concurrently.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .analysis import ConvergenceTable, emit_table, error_norms
from .fespace import BRSpace
from .mesh import load_mesh, structured_unit_square, uniform_refine, unstructured_sample
from .problems import FAMILIES
from .reconstruction import ReconstructionKind
from .solver import RunConfig, fixed_point_solve

_SCHEMES = {
    "modified": ReconstructionKind.BDM1,
    "modified-rt0": ReconstructionKind.RT0,
    "classical": ReconstructionKind.IDENTITY,
}

_DEFAULTS = {
    "convergence": {
        "family": "convergence",
        "mu": [1.0],
        "c": [1.0, 100.0],
        "gamma": [1.0],
        "mesh": "structured",
        "n0": 8,
        "levels": 4,
        "scheme": "both",
        "tau": None,
        "tol": 1e-11,
        "max_iters": 5000,
    },
    "limit": {
        "family": "limit",
        "c": [1.0, 10.0, 100.0, 1000.0, 10000.0],
        "gamma": [2.0],
        "mesh": "structured+sample",
        "n0": 15,
        "levels": 1,
        "scheme": "both",
        "tau": None,
        "tol": 1e-11,
        "max_iters": 5000,
    },
    "wellbalanced": {
        "family": "wellbalanced",
        "c": [1.0],
        "gamma": [1.0, 1.4],
        "mesh": "structured",
        "n0": 8,
        "levels": 3,
        "scheme": "both",
        "tau": None,
        "tol": 1e-11,
        "max_iters": 5000,
    },
}


def _parse_value(text):
    text = text.strip()
    if "," in text:
        return [_parse_value(t) for t in text.split(",") if t.strip()]
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", ""):
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def read_config(path):
    """Parse a flat key = value configuration file."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = body.split("=", 1)
            out[key.strip()] = _parse_value(value)
    return out


def _as_list(v):
    if v is None:
        return [None]
    return list(v) if isinstance(v, list) else [v]


def _meshes(cfg):
    """Yield (tag, base mesh) pairs for the configured mesh source."""
    source = str(cfg.get("mesh", "structured"))
    for part in source.split("+"):
        part = part.strip()
        if part == "structured":
            yield "structured", structured_unit_square(int(cfg.get("n0", 8)))
        elif part == "sample":
            yield "sample", unstructured_sample()
        elif part.startswith("file:"):
            yield "file", load_mesh(part[5:])
        else:
            raise ValueError(f"unknown mesh source {part!r}")


def _refinements(base, levels):
    mesh = base
    for _ in range(levels):
        yield mesh
        mesh = uniform_refine(mesh)


def _schemes(cfg):
    scheme = str(cfg.get("scheme", "both"))
    if scheme == "both":
        names = ["modified", "classical"]
    else:
        names = [scheme]
    for name in names:
        if name not in _SCHEMES:
            raise ValueError(f"unknown scheme {name!r}; use modified, classical or both")
        yield name, _SCHEMES[name]


def _build_problem(cfg, mu, c, gamma):
    family = cfg["family"]
    make = FAMILIES[family]
    if family == "convergence":
        return make(mu=mu, lam=cfg.get("lambda"), c=c, gamma=gamma)
    return make(c=c, gamma=gamma)


def _solve_sequence(cfg, problem, base_mesh, kind, scheme_name, levels):
    reports = []
    all_converged = True
    for mesh in _refinements(base_mesh, levels):
        run = RunConfig(
            mu=problem.mu,
            lam=problem.lam,
            c=problem.eos.c,
            gamma=problem.eos.gamma,
            tau=cfg.get("tau"),
            tol=float(cfg.get("tol", 1e-11)),
            max_iters=int(cfg.get("max_iters", 5000)),
            kind=kind,
        )
        state = fixed_point_solve(run, problem, mesh)
        reports.append(error_norms(BRSpace(mesh), state, problem, scheme=scheme_name))
        all_converged &= state.converged
    return reports, all_converged


def _write_atomic(path, write_fn):
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    os.close(fd)
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _config_header(cfg, extra):
    resolved = dict(cfg)
    resolved.update(extra)
    return [f"{k} = {resolved[k]}" for k in sorted(resolved)]


def _param_tag(mu, c, gamma, mesh_tag):
    bits = []
    if mu is not None:
        bits.append(f"mu{mu:g}")
    bits += [f"c{c:g}", f"gamma{gamma:g}", mesh_tag]
    return "_".join(bits)


def _grid_cells(cfg):
    """All (mu, c, gamma, mesh_tag, base_mesh, scheme_name, kind) cells."""
    family = cfg["family"]
    mus = _as_list(cfg.get("mu")) if family == "convergence" else [None]
    for mu in mus:
        for c in _as_list(cfg["c"]):
            for gamma in _as_list(cfg["gamma"]):
                for mesh_tag, base in _meshes(cfg):
                    for scheme_name, kind in _schemes(cfg):
                        yield (mu, c, gamma, mesh_tag, base, scheme_name, kind)


def _run_cell(cfg, outdir, cell):
    mu, c, gamma, mesh_tag, base, scheme_name, kind = cell
    problem = _build_problem(cfg, mu if mu is not None else 1.0, c, gamma)
    levels = int(cfg.get("levels", 1))
    reports, converged = _solve_sequence(cfg, problem, base, kind, scheme_name, levels)
    tag = _param_tag(mu, c, gamma, mesh_tag)
    path = os.path.join(outdir, f"{cfg['family']}_{scheme_name}_{tag}.csv")
    header = _config_header(
        cfg,
        {"scheme": scheme_name, "mu": problem.mu, "c": c, "gamma": gamma, "mesh": mesh_tag},
    )
    table = ConvergenceTable(reports)
    _write_atomic(path, lambda tmp: emit_table(table, tmp, header_comments=header))
    return path, converged


def _run_family(cfg, outdir):
    cells = list(_grid_cells(cfg))
    workers = int(os.environ.get("GRSTOKES_THREADS", "1"))
    results = []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda cell: _run_cell(cfg, outdir, cell), cells))
    else:
        for cell in cells:
            results.append(_run_cell(cfg, outdir, cell))
    ok = True
    for path, converged in results:
        print(f"wrote {path}" + ("" if converged else "  [NOT CONVERGED]"))
        ok &= converged
    return 0 if ok else 2


# -- property checks ----------------------------------------------------------


def _check(name, passed, detail=""):
    status = "PASS" if passed else "FAIL"
    print(f"[{status}] {name}" + (f"  ({detail})" if detail else ""))
    return passed


def run_checks():
    """Operator identity and conservation checks (the `check` subcommand)."""
    from .assembly import (
        PhiSLogS,
        PhiSquared,
        assemble_p0_mass,
        assemble_upwind,
        convexity_jump_diagnostic,
    )
    from .problems import wellbalanced_family
    from .reconstruction import (
        divergence_identity_check,
        gradient_orthogonality_check,
    )
    from .solver import (
        DiscreteOperators,
        density_step,
        solve_incompressible_stokes,
    )

    rng = np.random.default_rng(20240)
    ok = True

    # reconstruction identities on random fields
    worst_div = 0.0
    worst_orth = 0.0
    for n in (4, 8, 16):
        mesh = structured_unit_square(n)
        space = BRSpace(mesh)
        for _ in range(3):
            coeffs = rng.standard_normal(space.ndof)
            for kind in (ReconstructionKind.BDM1, ReconstructionKind.RT0):
                worst_div = max(worst_div, divergence_identity_check(space, coeffs, kind))
        ops = DiscreteOperators(mesh, wellbalanced_family(), ReconstructionKind.BDM1)
        for _ in range(3):
            coeffs = rng.standard_normal(space.ndof)
            from .solver import discrete_divfree_projection

            coeffs0 = discrete_divfree_projection(ops, coeffs)
            val = gradient_orthogonality_check(
                space, coeffs0, lambda x, y: (x * y) ** 2, kind=ReconstructionKind.BDM1
            )
            worst_orth = max(worst_orth, abs(val))
    ok &= _check("divergence identity div(Pi v) = pi0 div v", worst_div <= 1e-12, f"max {worst_div:.2e}")
    ok &= _check("gradient orthogonality of reconstructed div-free fields", worst_orth <= 1e-10, f"max {worst_orth:.2e}")

    # upwind matrix identities
    worst = {"rows": 0.0, "cols": 0.0, "divu": 0.0}
    for n in (4, 8, 16):
        mesh = structured_unit_square(n)
        space = BRSpace(mesh)
        from .quadrature import VOLUME_RULE

        for _ in range(3):
            u = rng.standard_normal(space.ndof)
            upw = assemble_upwind(space, u)
            D = upw.divergence_operator()
            ones = np.ones(mesh.num_triangles)
            _, grads = space.eval_function(u, np.arange(mesh.num_triangles), VOLUME_RULE.bary)
            div = grads[..., 0, 0] + grads[..., 1, 1]
            pi0_div = div @ VOLUME_RULE.weights
            worst["divu"] = max(worst["divu"], np.abs(D @ ones - pi0_div).max())
            worst["cols"] = max(worst["cols"], np.abs(upw.flux_form.T @ ones).max())
            worst["rows"] = max(worst["rows"], np.abs(D.T @ (ones * mesh.tri_area)).max())
    ok &= _check("upwind matrix: D 1 = pi0 div u", worst["divu"] <= 1e-11, f"max {worst['divu']:.2e}")
    ok &= _check("upwind matrix: mass-weighted row sums vanish", worst["rows"] <= 1e-11, f"max {worst['rows']:.2e}")
    ok &= _check("upwind matrix: column sums vanish", worst["cols"] <= 1e-11, f"max {worst['cols']:.2e}")

    # density step conservation and nonnegativity
    mesh = structured_unit_square(8)
    space = BRSpace(mesh)
    M = assemble_p0_mass(mesh)
    min_rho, max_drift = 0.0, 0.0
    for _ in range(100):
        u = rng.standard_normal(space.ndof)
        rho = rng.random(mesh.num_triangles)
        tau = float(10.0 ** rng.uniform(-3, 1))
        upw = assemble_upwind(space, u)
        rho_next = density_step(M, upw, rho, tau)
        min_rho = min(min_rho, rho_next.min())
        m0 = float(mesh.tri_area @ rho)
        m1 = float(mesh.tri_area @ rho_next)
        max_drift = max(max_drift, abs(m1 - m0) / m0)
    ok &= _check("density step preserves nonnegativity", min_rho >= -1e-14, f"min {min_rho:.2e}")
    ok &= _check("density step preserves mass", max_drift <= 1e-12, f"max drift {max_drift:.2e}")

    # convexity identity
    worst_sq, worst_log = 0.0, 0.0
    nonneg = True
    for _ in range(5):
        u = rng.standard_normal(space.ndof)
        rho = 0.5 + rng.random(mesh.num_triangles)
        for phi, store in ((PhiSquared(), "sq"), (PhiSLogS(), "log")):
            lhs, rhs = convexity_jump_diagnostic(space, u, rho, phi)
            gap = abs(lhs - rhs) / max(abs(rhs), 1.0)
            nonneg &= lhs >= -1e-12 and rhs >= -1e-12
            if store == "sq":
                worst_sq = max(worst_sq, gap)
            else:
                worst_log = max(worst_log, gap)
    ok &= _check("convexity identity, quadratic phi", worst_sq <= 1e-12, f"max {worst_sq:.2e}")
    ok &= _check("convexity identity, s log s phi", worst_log <= 1e-9, f"max {worst_log:.2e}")
    ok &= _check("convexity identity sides nonnegative", nonneg)

    # pressure-robust initial Stokes solve
    mesh = structured_unit_square(8)

    def grad_field(x, y):
        return 3.0 * x ** 2 * y, x ** 3

    from .problems import EquationOfState, ManufacturedProblem

    problem = ManufacturedProblem(
        family="check",
        mu=1.0,
        lam=-2.0 / 3.0,
        eos=EquationOfState(1.0, 1.0),
        velocity=lambda x, y: (x * 0.0, y * 0.0),
        density=lambda x, y: 1.0 + 0.0 * x,
        pressure=lambda x, y: x ** 3 * y,
        f=grad_field,
        g=None,
    )
    norms = {}
    for name, kind in (("modified", ReconstructionKind.BDM1), ("classical", ReconstructionKind.IDENTITY)):
        ops = DiscreteOperators(mesh, problem, kind)
        u0, _ = solve_incompressible_stokes(ops, 1.0)
        norms[name] = ops.h1_seminorm(u0)
    ok &= _check(
        "gradient forcing: modified init velocity vanishes",
        norms["modified"] <= 1e-10,
        f"H1 {norms['modified']:.2e}",
    )
    ok &= _check(
        "gradient forcing: classical init velocity does not",
        norms["classical"] >= 1e-5,
        f"H1 {norms['classical']:.2e}",
    )
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="grstokes",
        description="Benchmark driver for the compressible Stokes solver",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("convergence", "limit", "wellbalanced", "check"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument(
            "--scheme",
            default=None,
            choices=["modified", "classical", "modified-rt0", "both"],
        )
        p.add_argument("--levels", type=int, default=None)
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override any config key (repeatable)",
        )
    return parser


def resolve_config(args):
    cfg = dict(_DEFAULTS.get(args.command, {}))
    if args.config:
        cfg.update(read_config(args.config))
    if args.scheme:
        cfg["scheme"] = args.scheme
    if args.levels is not None:
        cfg["levels"] = args.levels
    for item in args.overrides:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        cfg[key.strip()] = _parse_value(value)
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "check":
        return run_checks()
    cfg = resolve_config(args)
    return _run_family(cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
