"""Scenario runner: config in, deterministic artifact files out.

Exit codes: 0 all assertions passed, 1 an assertion failed, 2 bad config.
The summary JSON is byte-stable for a fixed config and seed: keys are sorted,
floats use repr round-tripping, and no timestamps are embedded.
"""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np
import yaml

from . import geometries
from .forms import DecOperators, MaterialField, reduce_relative
from .mesh import MeshError, boundary_components, carve_obstacle, load_complex
from .spectral import assemble_laplacian, eig

CONFIG_VERSION = 1


class ConfigError(Exception):
    pass


def _need(cfg: dict, key: str, path: str):
    if key not in cfg:
        raise ConfigError(f"missing config key: {path}/{key}")
    return cfg[key]


def load_config(path: str) -> dict:
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    return validate_config(cfg)


def validate_config(cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("/: config must be a mapping")
    if cfg.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise ConfigError(f"/version: unsupported config version {cfg.get('version')!r}")
    cfg.setdefault("version", CONFIG_VERSION)
    cfg.setdefault("seed", 0)
    cfg.setdefault("res", 1)
    cfg.setdefault("material", {})
    cfg.setdefault("params", {})
    geo = _need(cfg, "geometry", "")
    if isinstance(geo, str):
        cfg["geometry"] = {"canned": geo}
    for key, val in cfg["params"].items():
        if key.endswith("_tol") and not (isinstance(val, (int, float)) and val > 0):
            raise ConfigError(f"/params/{key}: tolerance must be positive")
    return cfg


def build_scenario(cfg: dict):
    geo = cfg["geometry"]
    res = int(cfg.get("res", 1))
    if "canned" in geo:
        name = geo["canned"]
        if cfg.get("empty"):
            ref, _tags = geometries.CANNED[name].build(res)
            return carve_obstacle(ref, set())
        return geometries.canned_scenario(name, res)
    if "mesh" in geo:
        cplx = load_complex(
            open(geo["mesh"]).read() if geo.get("format", "decmesh") == "decmesh" else geo["mesh"],
            geo.get("format", "decmesh"),
        )
        return carve_obstacle(cplx, set(geo.get("obstacle_tags", [])))
    raise ConfigError("/geometry: needs 'canned' or 'mesh'")


def material_from_config(cfg: dict) -> MaterialField:
    mat = cfg.get("material", {}) or {}
    eps = {k: float(v.get("eps", 1.0)) for k, v in mat.items()}
    mu = {k: float(v.get("mu", 1.0)) for k, v in mat.items()}
    return MaterialField(eps=eps, mu=mu)


# -- pipelines -------------------------------------------------------------------


def _assert_row(name: str, ok: bool, value, tol=None) -> dict:
    return {"name": name, "ok": bool(ok), "value": _jsonable(value), "tol": tol}


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def pipeline_topology(cfg, scenario, material):
    from .topology import check_harmonic_match, expected_dims, relative_cohomology_dims

    ops = reduce_relative(DecOperators(scenario.carved, material))
    report = relative_cohomology_dims(ops)
    kernel_dims = {}
    for p in (1, 2):
        dec = eig(assemble_laplacian(ops, p, lumped_down=True), count=min(10, ops.n(p) - 2))
        kernel_dims[p] = dec.kernel_dim
    flags = check_harmonic_match(report, kernel_dims)
    rows = []
    name = cfg["geometry"].get("canned")
    expected = None
    if name and not cfg.get("empty"):
        try:
            expected = expected_dims(name)
        except KeyError:
            expected = None
    if expected:
        report.expected = expected
        for p, want in sorted(expected.items()):
            rows.append(_assert_row(f"dim_H{p}", report.dims[p] == want, report.dims[p]))
    for p, ok in sorted(flags.items()):
        rows.append(_assert_row(f"harmonic_match_p{p}", ok, kernel_dims[p]))
    return {"dims": {str(k): v for k, v in report.dims.items()}, "assertions": rows}


def pipeline_hodge(cfg, scenario, material):
    from .hodge import capacity_and_psiL, harmonic_basis, helmholtz

    params = cfg["params"]
    ops = reduce_relative(DecOperators(scenario.carved, material))
    rows = []
    out = {}
    if scenario.has_obstacle and scenario.carved.dim == 3:
        cap, _u, _psi = capacity_and_psiL(ops)
        out["capacity"] = cap
        if "capacity_expected" in params:
            tol = params.get("capacity_tol", 0.05)
            rel = abs(cap - params["capacity_expected"]) / params["capacity_expected"]
            rows.append(_assert_row("capacity", rel <= tol, rel, tol))
    L1 = assemble_laplacian(ops, 1)
    dec1 = eig(L1)
    hb = harmonic_basis(dec1, ops)
    out["harmonic_dim"] = hb.L
    rng = np.random.default_rng(cfg["seed"])
    n_checks = int(params.get("n_random", 10))
    worst_rec, worst_orth = 0.0, 0.0
    M = ops.mass(1)
    for _ in range(n_checks):
        phi = rng.standard_normal(ops.n(1))
        hs = helmholtz(phi, dec1, L1)
        worst_rec = max(worst_rec, hs.recomposition_error(ops, 1))
        pairs = (
            abs(hs.harmonic @ (M @ hs.exact)),
            abs(hs.harmonic @ (M @ hs.coexact)),
            abs(hs.exact @ (M @ hs.coexact)),
        )
        scale = max(ops.inner(1, phi, phi), 1e-300)
        worst_orth = max(worst_orth, max(pairs) / scale)
    tol = params.get("helmholtz_tol", 1e-10)
    rows.append(_assert_row("helmholtz_recomposition", worst_rec <= tol, worst_rec, tol))
    rows.append(_assert_row("helmholtz_orthogonality", worst_orth <= tol, worst_orth, tol))
    out["assertions"] = rows
    return out


def pipeline_maxwell(cfg, scenario, material):
    from .maxwell import MaxwellState, classical_energy, constraint_residuals, evolve

    params = cfg["params"]
    ops = reduce_relative(DecOperators(scenario.carved, material))
    dec1 = eig(assemble_laplacian(ops, 1))
    dec2 = eig(assemble_laplacian(ops, 2))
    rng = np.random.default_rng(cfg["seed"])
    E0 = ops.apply_codifferential(2, rng.standard_normal(ops.n(2)))
    B0 = ops.d(1) @ rng.standard_normal(ops.n(1))
    lam_min = float(np.sqrt(dec1.evals[dec1.kernel_dim]))
    t_end = params.get("t_end", 10.0 / lam_min)
    times = np.linspace(0.0, t_end, int(params.get("n_times", 7)))
    states = evolve(dec1, dec2, ops, MaxwellState(0.0, E0, B0), None, times)
    e0 = classical_energy(ops, MaxwellState(0.0, E0, B0))
    drift = max(abs(classical_energy(ops, s) - e0) / e0 for s in states)
    worst = 0.0
    for s in states:
        worst = max(worst, max(constraint_residuals(ops, s).values()))
    tol = params.get("residual_tol", 1e-8)
    rows = [
        _assert_row("energy_drift", drift <= tol, drift, tol),
        _assert_row("constraint_residuals", worst <= tol, worst, tol),
    ]
    series = [
        {"t": float(s.t), "energy": classical_energy(ops, s)} for s in states
    ]
    return {"lambda_min": lam_min, "series": series, "assertions": rows}


def pipeline_qft(cfg, scenario, material):
    from .hodge import capacity_and_psiL
    from .qft import FieldCalculus, FormTerm, TestForm
    from .spectral import build_Q_eps
    from .timeprofiles import TimeProfile

    params = cfg["params"]
    ops = reduce_relative(DecOperators(scenario.carved, material))
    dec0 = eig(assemble_laplacian(ops, 0))
    dec1 = eig(assemble_laplacian(ops, 1))
    dec2 = eig(assemble_laplacian(ops, 2))
    Q = None
    if scenario.has_obstacle and dec1.kernel_dim > 0:
        cap, u, _psi = capacity_and_psiL(ops)
        qp = params.get("q_eps", {})
        cplx = scenario.carved
        nodes = cplx.simplices[0][:, 0]
        center = np.asarray(qp.get("center", cplx.vertices[nodes].mean(axis=0)))
        rmax = float(np.linalg.norm(cplx.vertices[nodes] - center, axis=1).max())
        Q = build_Q_eps(
            dec1, ops, u,
            eps=float(qp.get("eps", 1.0)),
            center=center,
            r_plateau=float(qp.get("r_plateau", 0.55 * rmax)),
            r_zero=float(qp.get("r_zero", 0.8 * rmax)),
        )
    fc = FieldCalculus(ops, dec0, dec1, dec2, Q=Q)
    rng = np.random.default_rng(cfg["seed"])

    def rand2():
        g1 = TimeProfile.bump(-0.6 + 0.1 * rng.random(), 0.5 + 0.3 * rng.random())
        g2 = TimeProfile.bump(-0.4, 0.7)
        return TestForm(
            2,
            [
                FormTerm(g1, "e", rng.standard_normal(ops.n(1))),
                FormTerm(g2, "b", rng.standard_normal(ops.n(2))),
            ],
        )

    f1, f2 = rand2(), rand2()
    g1 = fc.codifferential_form(f1)
    g2 = fc.codifferential_form(f2)
    w12, w21 = fc.omega2_F(f1, f2), fc.omega2_F(f2, f1)
    G = fc.pairing_G(g1, g2)
    scale = max(abs(w12), 1.0)
    anti = abs((w12 - w21) + 1j * G) / scale
    diag = fc.omega2_F(f1, f1)
    w4 = fc.wick_npoint([f1, f1, f1, f1])
    wick_err = abs(w4 - 3 * diag**2) / max(abs(w4), 1.0)
    shift = abs(fc.omega2_F(f1.shifted(0.31), f2.shifted(0.31)) - w12) / scale
    tol = params.get("identity_tol", 1e-8)
    rows = [
        _assert_row("antisymmetric_part_vs_G", anti <= tol, anti, tol),
        _assert_row("diagonal_positive", diag.real >= -1e-10, diag.real, -1e-10),
        _assert_row("wick4", wick_err <= 1e-10, wick_err, 1e-10),
        _assert_row("time_translation", shift <= tol, shift, tol),
    ]
    return {
        "omega2_diag": _jsonable(diag.real),
        "assertions": rows,
    }


def pipeline_stress(cfg, scenario, material):
    from .stress import (
        ScenarioStress,
        local_energy_density,
        loglog_slope,
        operator_difference,
        resolvent_difference_decay,
        t0k_check,
    )

    params = cfg["params"]
    st = ScenarioStress.build(scenario, material)
    D1 = operator_difference(st, "D1")
    D2 = operator_difference(st, "D2")
    rep = local_energy_density(st, D1, D2)
    rows = []
    if not scenario.has_obstacle and material.is_vacuum():
        null = float(np.abs(rep.t00).max())
        rows.append(_assert_row("empty_nullity", null <= 1e-10, null, 1e-10))
    else:
        rows.append(
            _assert_row(
                "trace_identity",
                rep.trace_identity_error() <= params.get("trace_tol", 1e-10),
                rep.trace_identity_error(),
                params.get("trace_tol", 1e-10),
            )
        )
        r = t0k_check(st)
        rows.append(_assert_row("t0k", r <= params.get("t0k_tol", 1e-8), r, 1e-8))
        if params.get("decay", True):
            lam2max = st.sigma.dec.evals[-1]
            grid = np.geomspace(
                params.get("lam_min", 1.0), 3 * np.sqrt(lam2max), int(params.get("n_lam", 10))
            )
            table = resolvent_difference_decay(st, grid)
            slope = loglog_slope(table)
            rows.append(_assert_row("decay_slope", slope <= -3.0, slope, -3.0))
    out = {
        "total_energy": rep.total_energy,
        "trace_d1": rep.trace_d1,
        "trace_d2": rep.trace_d2,
        "assertions": rows,
    }
    return out


PIPELINES = {
    "topology": pipeline_topology,
    "hodge": pipeline_hodge,
    "maxwell": pipeline_maxwell,
    "qft": pipeline_qft,
    "stress": pipeline_stress,
}


def run_config(cfg: dict) -> tuple[int, dict]:
    cfg = validate_config(cfg)
    pipeline = _need(cfg, "pipeline", "")
    if pipeline not in PIPELINES:
        raise ConfigError(f"/pipeline: unknown pipeline {pipeline!r}")
    material = material_from_config(cfg)
    scenario = build_scenario(cfg)
    result = PIPELINES[pipeline](cfg, scenario, material)
    rows = result.get("assertions", [])
    ok = all(r["ok"] for r in rows)
    summary = {
        "config": {
            "version": cfg["version"],
            "seed": cfg["seed"],
            "res": cfg["res"],
            "geometry": cfg["geometry"],
            "pipeline": pipeline,
            "empty": bool(cfg.get("empty", False)),
        },
        "result": result,
        "passed": ok,
    }
    outdir = os.environ.get("DECEM_OUTPUT_DIR", cfg.get("output_dir"))
    if outdir:
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "summary.json"), "w") as fh:
            json.dump(summary, fh, sort_keys=True, indent=1)
            fh.write("\n")
    return (0 if ok else 1), summary


# -- click wiring -------------------------------------------------------------------


@click.group()
def main():
    """Discrete exterior calculus engine for Maxwell fields on obstacle geometries."""


def _geometry_option(geometry: str | None, config: str | None, **overrides) -> dict:
    if config:
        cfg = load_config(config)
    elif geometry:
        cfg = {"geometry": {"canned": geometry}}
    else:
        raise ConfigError("either --config or --geometry is required")
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


@main.command("run")
@click.argument("pipeline", type=click.Choice(sorted(PIPELINES)))
@click.option("--geometry", help="canned geometry id, e.g. balls:2")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--res", type=int, default=None, help="resolution multiplier")
@click.option("--seed", type=int, default=None)
@click.option("--empty", is_flag=True, help="disable the obstacle (carve nothing)")
@click.option("--output", "output_dir", type=click.Path(), default=None)
def run_cmd(pipeline, geometry, config_path, res, seed, empty, output_dir):
    """Run one named pipeline and write summary.json."""
    try:
        cfg = _geometry_option(geometry, config_path, res=res, seed=seed,
                               output_dir=output_dir)
        if empty:
            cfg["empty"] = True
        cfg["pipeline"] = pipeline
        code, summary = run_config(cfg)
    except (ConfigError, MeshError, KeyError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    for row in summary["result"].get("assertions", []):
        status = "PASS" if row["ok"] else "FAIL"
        click.echo(f"[{status}] {row['name']}: {row['value']}")
    click.echo(json.dumps(summary["result"], sort_keys=True, default=str)[:2000])
    sys.exit(code)


@main.command("list")
def list_cmd():
    """List canned scenario geometries."""
    for row in geometries.list_scenarios():
        click.echo(
            f"{row['name']:22s} H1={row['expected_h1']} H2={row['expected_h2']}  {row['description']}"
        )


@main.command("dump-mesh")
@click.option("--geometry", required=True)
@click.option("--res", type=int, default=1)
@click.option("--out", type=click.Path(), default=None)
@click.option("--carved/--reference", default=True)
def dump_mesh_cmd(geometry, res, out, carved):
    """Write a canned mesh in the decmesh text format (plus metadata JSON)."""
    try:
        sc = geometries.canned_scenario(geometry, res)
    except (KeyError, MeshError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    cplx = sc.carved if carved else sc.reference
    text = cplx.to_text()
    if out:
        with open(out, "w") as fh:
            fh.write(text)
        click.echo(cplx.metadata_json())
    else:
        click.echo(text)


@main.command("export-matrices")
@click.option("--geometry", required=True)
@click.option("--res", type=int, default=1)
@click.option("--degree", type=int, default=1)
@click.option("--out", type=click.Path(), required=True)
def export_matrices_cmd(geometry, res, degree, out):
    """Export incidence and mass matrices in sparse triplet text format."""
    try:
        sc = geometries.canned_scenario(geometry, res)
    except (KeyError, MeshError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    ops = reduce_relative(DecOperators(sc.carved))
    os.makedirs(out, exist_ok=True)
    for name, mat in (
        (f"d{degree}", ops.d(degree) if degree < sc.carved.dim else None),
        (f"mass{degree}", ops.mass(degree)),
    ):
        if mat is None:
            continue
        coo = mat.tocoo()
        path = os.path.join(out, name + ".txt")
        with open(path, "w") as fh:
            fh.write(f"# sparse triplet: rows cols nnz\n{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
            for r, c, v in sorted(zip(coo.row, coo.col, coo.data), key=lambda t: (t[0], t[1])):
                fh.write(f"{int(r)} {int(c)} {v!r}\n")
        click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
