"""Batch front-end: ``cavity-kernels <command> --config run.json --out dir``.

The config is a JSON document validated against :data:`CONFIG_SCHEMA`
(unknown keys are rejected).  Inputs are always in natural units; with
``--units si`` positions, kernels and energies are written in SI using the
config's ``length_unit_m``.

Exit codes: 0 success, 1 ``verify-all`` ran but a check failed, 2 invalid
input, 3 numerical failure.  Errors are reported as one JSON object on
stderr.
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources

import jsonschema
import numpy as np

from .couplings import (CSV_HEADER, KINDS, free_space_lambda_ee_reference,
                        free_space_lambda_mm_reference, kernel_csv_rows, lambda_kernel)
from .errors import CavityKernelsError, NumericalError, ValidationError
from .greens import PROVIDERS, make_provider
from .hamiltonian import (Constituent, DipoleSite, diamagnetic_renormalization_dipole,
                          pairwise_dipole_energy)
from .mode_sum import (ModeFamilyGreens, PlanarCavityModes, diamagnetic_omega_modesum,
                       lambda_modesum, planar_closed_form)
from .oracle_exact import OscillatorModel, effective_vs_exact_sweep
from .spectral import KINDS as INTEGRAND_KINDS
from .spectral import ContourSpec, diamagnetic_omega_spectral, lambda_spectral, residue_decomposition
from .units import convert_units

log = logging.getLogger("cavity_kernels")

COMMANDS = ("kernels", "modesum", "spectral", "hamiltonian", "oracle", "verify-all")

_VEC = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_POS = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["command"],
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "provider": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": sorted(PROVIDERS) + ["planar_cavity"]},
                "params": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "z0": {"type": "number"},
                        "include_direct": {"type": "boolean"},
                        "gyration": _VEC,
                        "coincident_policy": {"enum": ["error", "exclude-delta"]},
                        "L": _POS,
                        "polarization": {"enum": ["x", "y"]},
                        "N": {"type": "integer", "minimum": 1},
                        "gamma": _POS,
                    },
                },
            },
        },
        "pairs": {"type": "array", "items": {"type": "array", "items": _VEC,
                                             "minItems": 2, "maxItems": 2}},
        "kinds": {"type": "array", "items": {"enum": list(KINDS)}, "minItems": 1},
        "routes": {"type": "array", "minItems": 1,
                   "items": {"enum": ["closed-form", "mode-sum", "spectral", "reference"]}},
        "units": {"enum": ["natural", "si"]},
        "length_unit_m": _POS,
        "seed": {"type": "integer", "minimum": 0},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"route": _POS, "zero": _POS, "modesum": _POS},
        },
        "modesum": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"L": _POS, "polarization": {"enum": ["x", "y"]},
                           "N": {"type": "integer", "minimum": 8},
                           "accelerate": {"type": "boolean"}},
        },
        "spectral": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eta": _POS, "rho": _POS,
                "integrand_kinds": {"type": "array", "items": {"enum": list(INTEGRAND_KINDS)}},
                "omega": {"type": "boolean"},
                "omega_max": _POS,
                "damping_eta": {"type": "number", "minimum": 0},
            },
        },
        "sites": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["position"],
                "properties": {
                    "position": _VEC, "d": _VEC, "m": _VEC,
                    "constituents": {"type": "array", "items": {
                        "type": "object", "additionalProperties": False,
                        "required": ["charge", "mass", "displacement"],
                        "properties": {"charge": {"type": "number"}, "mass": _POS,
                                       "displacement": _VEC}}},
                },
            },
        },
        "oracle": {
            "type": "object",
            "additionalProperties": False,
            "required": ["matter_omegas", "mode_omegas", "coupling"],
            "properties": {
                "matter_omegas": {"type": "array", "items": _POS, "minItems": 1, "maxItems": 2},
                "mode_omegas": {"type": "array", "items": _POS, "minItems": 1, "maxItems": 3},
                "coupling": {"type": "array", "items": {"type": "array",
                                                        "items": {"type": "number"}}},
                "n_max": {"type": "integer", "minimum": 4},
                "ratios": {"type": "array", "items": _POS, "minItems": 2},
                "kappa": _POS,
                "dimension_cap": {"type": "integer", "minimum": 1},
            },
        },
    },
}

RESULT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["command", "units", "config_sha256", "seed", "data"],
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "seed": {"type": "integer"},
        "units": {"enum": ["natural", "si"]},
        "config_sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "data": {"type": "object"},
    },
}

_KERNEL_UNIT = {"ee": "lambda_ee", "em": "lambda_em", "me": "lambda_me", "mm": "lambda_mm"}


def _path(err):
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def load_config(path):
    """Read and validate a run config; raises :class:`ValidationError` with a field path."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: [str(x) for x in e.absolute_path])
    if errors:
        err = errors[0]
        exc = ValidationError(f"{_path(err)}: {err.message}")
        exc.field_path = _path(err)
        raise exc
    return cfg


def bundled_config(name="free_space.json"):
    return json.loads(resources.files("cavity_kernels").joinpath("data", name).read_text())


def _provider(cfg):
    spec = cfg.get("provider", {"name": "free_space"})
    params = dict(spec.get("params", {}))
    if spec["name"] == "planar_cavity":
        fam = PlanarCavityModes(params.get("L", 1.0), params.get("polarization", "x"))
        return ModeFamilyGreens(fam, params.get("N", 50), params.get("gamma", 1e-3))
    try:
        return make_provider(spec["name"], **params)
    except TypeError as exc:
        raise ValidationError(f"provider.params: {exc}") from None


def _pairs(cfg):
    pairs = cfg.get("pairs")
    if not pairs:
        raise ValidationError("pairs: at least one point pair is required")
    arr = np.asarray(pairs, dtype=float)
    return arr[:, 0], arr[:, 1]


def _family(cfg):
    ms = cfg.get("modesum", {})
    return PlanarCavityModes(ms.get("L", 1.0), ms.get("polarization", "x"))


class Runner:
    """Dispatches one validated config; owns the worker pool."""

    def __init__(self, cfg, out, threads=None, units=None, seed=None):
        self.cfg = cfg
        self.out = out
        self.threads = threads or os.cpu_count() or 1
        self.units = units or cfg.get("units", "natural")
        self.seed = cfg.get("seed", 0) if seed is None else seed
        self.length_m = cfg.get("length_unit_m", 1.0)
        blob = json.dumps(cfg, sort_keys=True).encode()
        self.sha = hashlib.sha256(blob).hexdigest()
        os.makedirs(out, exist_ok=True)

    # output helpers

    def _si(self, value, kind):
        if self.units == "si":
            return convert_units(np.asarray(value, dtype=float), kind, "to_si", self.length_m)
        return value

    def write_csv(self, name, header, rows):
        path = os.path.join(self.out, name)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        log.info("wrote %s (%d rows)", path, len(rows))
        return path

    def write_json(self, name, data):
        doc = {"command": self.cfg["command"], "units": self.units,
               "config_sha256": self.sha, "seed": self.seed, "data": data}
        jsonschema.validate(doc, RESULT_SCHEMA)
        path = os.path.join(self.out, name)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    def pmap(self, fn, items):
        # executor.map keeps input order, so merges are deterministic
        with ThreadPoolExecutor(max_workers=self.threads) as ex:
            return list(ex.map(fn, items))

    # commands

    def run(self):
        cmd = self.cfg["command"]
        return getattr(self, "cmd_" + cmd.replace("-", "_"))()

    def _kernel_rows(self, p, r, rp, kind, route):
        if route == "closed-form":
            res = lambda_kernel(p, kind, r, rp)
        elif route == "spectral":
            res = lambda_spectral(p, kind, r, rp)
        elif route == "reference":
            if p.name != "free_space" or kind in ("em", "me"):
                return []
            ref = free_space_lambda_ee_reference if kind == "ee" else free_space_lambda_mm_reference
            res = ref(r, rp, smoothing=True)
        else:
            ms = self.cfg.get("modesum", {})
            res = lambda_modesum(_family(self.cfg), kind, r, rp, ms.get("N", 10_000),
                                 ms.get("accelerate", True))
        if self.units == "si":
            from dataclasses import replace
            res = replace(res, regular=self._si(res.regular, _KERNEL_UNIT[kind]),
                          delta_coefficient=self._si(res.delta_coefficient, _KERNEL_UNIT[kind]))
            r, rp = self._si(r, "length"), self._si(rp, "length")
        return kernel_csv_rows(r, rp, res)

    def cmd_kernels(self):
        p = _provider(self.cfg)
        R, RP = _pairs(self.cfg)
        kinds = self.cfg.get("kinds", list(KINDS))
        routes = self.cfg.get("routes", ["closed-form"])
        jobs = [(i, k, rt) for i in range(len(R)) for k in kinds for rt in routes]
        rows = self.pmap(lambda j: self._kernel_rows(p, R[j[0]], RP[j[0]], j[1], j[2]), jobs)
        flat = [row for chunk in rows for row in chunk]
        self.write_csv("kernels.csv", CSV_HEADER, flat)
        self.write_json("kernels.json", {"rows": len(flat), "provider": p.describe()})
        return 0

    def cmd_modesum(self):
        f = _family(self.cfg)
        ms = self.cfg.get("modesum", {})
        N = ms.get("N", 10_000)
        R, RP = _pairs(self.cfg)
        kinds = self.cfg.get("kinds", ["ee"])
        header = ["pair", "kind", "N"] + [f"{a}{b}" for a in "xyz" for b in "xyz"]
        rows, summary = [], []
        for i in range(len(R)):
            for kind in kinds:
                res = lambda_modesum(f, kind, R[i], RP[i], N, ms.get("accelerate", True))
                rec = res.diagnostics["record"]
                unit = _KERNEL_UNIT[kind]
                for n, s in zip(rec.checkpoints, rec.partial_sums):
                    rows.append([i, kind, n] + [format(float(v), ".17g")
                                                for v in np.ravel(self._si(s, unit))])
                rows.append([i, kind, "accelerated"] + [
                    format(float(v), ".17g") for v in np.ravel(self._si(rec.accelerated, unit))])
                exact = planar_closed_form(kind, R[i][2], RP[i][2], f.L, f.polarization)
                scale = max(np.abs(exact).max(), 1e-300)
                summary.append({"pair": i, "kind": kind,
                                "relative_error": float(np.abs(res.regular - exact).max() / scale)})
        self.write_csv("modesum.csv", header, rows)
        self.write_json("modesum.json", {"N": N, "checks": summary})
        return 0

    def cmd_spectral(self):
        p = _provider(self.cfg)
        R, RP = _pairs(self.cfg)
        sc = self.cfg.get("spectral", {})
        kinds = sc.get("integrand_kinds", ["wG", "curlGcurl/w"])
        header = ["pair", "integrand_kind", "piece", "component", "re", "im"]
        comps = [f"{a}{b}" for a in "xyz" for b in "xyz"]
        rows, closures = [], []
        for i in range(len(R)):
            dist = float(np.linalg.norm(R[i] - RP[i]))
            for kind in kinds:
                spec = ContourSpec(sc.get("eta", 1e-4 / dist), sc.get("rho", 50.0 / dist),
                                   integrand_kind=kind)
                dec = residue_decomposition(p, spec, R[i], RP[i])
                for piece in ("real_axis", "small_arc", "large_arc", "closure", "real_axis_limit"):
                    v = np.asarray(dec[piece], dtype=complex)
                    for c, z in zip(comps, v.ravel()):
                        rows.append([i, kind, piece, c, format(z.real, ".17g"),
                                     format(z.imag, ".17g")])
                closures.append({"pair": i, "integrand_kind": kind,
                                 "closure_relative": float(np.abs(dec["closure"]).max() / dec["scale"])})
            if sc.get("omega"):
                om, err = diamagnetic_omega_spectral(p, R[i], RP[i], sc.get("omega_max"),
                                                     sc.get("damping_eta"))
                for c, z in zip(comps, np.ravel(om)):
                    rows.append([i, "omega", "value", c, format(float(z), ".17g"), "0"])
        self.write_csv("spectral.csv", header, rows)
        self.write_json("spectral.json", {"closures": closures, "note": "natural units"})
        return 0

    def cmd_hamiltonian(self):
        p = _provider(self.cfg)
        specs = self.cfg.get("sites") or []
        if not specs:
            raise ValidationError("sites: at least one site is required")
        sites = [DipoleSite(s["position"], s.get("d"), s.get("m"),
                            tuple(Constituent(c["charge"], c["mass"], c["displacement"])
                                  for c in s.get("constituents", ())))
                 for s in specs]
        e = pairwise_dipole_energy(sites, p)
        data = {"total": float(self._si(e.total, "energy")),
                "by_kind": {k: float(self._si(v, "energy")) for k, v in e.by_kind.items()},
                "pair_matrix": np.asarray(self._si(e.pair_matrix, "energy")).tolist(),
                "self_terms": [None if np.isnan(v) else float(self._si(v, "energy"))
                               for v in e.self_terms],
                "self_terms_source": e.diagnostics["self_terms"]}
        if any(s.constituents for s in sites):
            rep = diamagnetic_renormalization_dipole(sites, p)
            data["diamagnetic"] = {"energy": float(self._si(rep.energy, "energy")),
                                   "ratio": rep.ratio, "negligible": rep.negligible,
                                   "energy_ratio": rep.energy_ratio}
        self.write_json("hamiltonian.json", data)
        return 0

    def cmd_oracle(self):
        oc = self.cfg["oracle"] if "oracle" in self.cfg else None
        if oc is None:
            raise ValidationError("oracle: section is required")
        m = OscillatorModel(tuple(oc["matter_omegas"]), tuple(oc["mode_omegas"]),
                            np.asarray(oc["coupling"], dtype=float), oc.get("n_max", 20))
        sw = effective_vs_exact_sweep(m, None, oc.get("ratios", (0.2, 0.1, 0.05, 0.025)),
                                      oc.get("kappa", 0.05),
                                      cap=oc.get("dimension_cap", 4096))
        rows = sw.csv_rows()
        self.write_csv("oracle.csv", rows[0], rows[1:])
        self.write_json("oracle.json", {"ratios": sw.ratios.tolist(),
                                        "deviations": sw.deviations.tolist(),
                                        "fitted_order": sw.order, "monotone": sw.monotone})
        return 0

    def cmd_verify_all(self):
        tol = {"route": 1e-5, "zero": 1e-10, "modesum": 1e-3}
        tol.update(self.cfg.get("tolerances", {}))
        p = _provider(self.cfg)
        R, RP = _pairs(self.cfg)
        checks = []

        def add(name, value, limit):
            checks.append({"check": name, "value": float(value), "tolerance": float(limit),
                           "passed": bool(value <= limit)})

        def rel(a, b):
            return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-300))

        for i in range(len(R)):
            r, rp = R[i], RP[i]
            closed = {k: lambda_kernel(p, k, r, rp).regular for k in KINDS}
            spec = self.pmap(lambda k: lambda_spectral(p, k, r, rp).regular, list(KINDS))
            for k, s in zip(KINDS, spec):
                if np.abs(closed[k]).max() > tol["zero"]:
                    add(f"pair{i}:{k}:spectral-vs-closed", rel(s, closed[k]), tol["route"])
                else:
                    add(f"pair{i}:{k}:spectral-zero", np.abs(s).max(), tol["zero"])
            if p.reciprocal:
                for k in ("em", "me"):
                    add(f"pair{i}:{k}:reciprocal-zero", np.abs(closed[k]).max(), tol["zero"])
            if p.name == "free_space":
                add(f"pair{i}:ee:reference", rel(closed["ee"], free_space_lambda_ee_reference(r, rp).regular), 1e-7)
                fd = lambda_kernel(p, "mm", r, rp, method="fd").regular
                add(f"pair{i}:mm:fd-vs-reference", rel(fd, free_space_lambda_mm_reference(r, rp).regular), tol["route"])
        if "modesum" in self.cfg:
            f = _family(self.cfg)
            N = self.cfg["modesum"].get("N", 10_000)
            z = np.linspace(0.1, 0.9, 5) * f.L
            for j, (a, b) in enumerate(zip(z[:-1], z[1:])):
                r, rp = np.array([0, 0, a]), np.array([0.1, 0, b])
                res = lambda_modesum(f, "ee", r, rp, N).regular
                add(f"modesum{j}:ee:vs-closed", rel(res, planar_closed_form("ee", a, b, f.L, f.polarization)),
                    tol["modesum"])
                ob, oe, _ = diamagnetic_omega_modesum(f, r, rp, 50)
                add(f"modesum{j}:omega:b-vs-e", rel(oe, ob), 1e-6)
        ok = all(c["passed"] for c in checks)
        for c in checks:
            log.info("%s %s %.3e <= %.1e", "PASS" if c["passed"] else "FAIL", c["check"],
                     c["value"], c["tolerance"])
        self.write_csv("verify.csv", ["check", "value", "tolerance", "passed"],
                       [[c["check"], format(c["value"], ".17g"), format(c["tolerance"], ".17g"),
                         c["passed"]] for c in checks])
        self.write_json("verify.json", {"passed": ok, "checks": checks})
        return 0 if ok else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="cavity-kernels", description=__doc__.splitlines()[0])
    ap.add_argument("command", nargs="?", choices=COMMANDS,
                    help="overrides the config's command")
    ap.add_argument("--config", help="run config (JSON); verify-all defaults to the bundled one")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--threads", type=int, default=None, help="worker pool size")
    ap.add_argument("--units", choices=("natural", "si"), default=None)
    ap.add_argument("--seed", type=int, default=None)
    return ap


def _fail(code, exc):
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    path = getattr(exc, "field_path", None)
    if path is not None:
        doc["path"] = path
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None):
    level = os.environ.get("CAVITY_KERNELS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.threads is not None and args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        if args.config:
            cfg = load_config(args.config)
        elif args.command == "verify-all":
            cfg = validate_config(bundled_config())
        else:
            raise ValidationError("--config is required for this command")
        if args.command:
            cfg = dict(cfg, command=args.command)
        return Runner(cfg, args.out, args.threads, args.units, args.seed).run()
    except NumericalError as exc:
        return _fail(3, exc)
    except (ValidationError, CavityKernelsError) as exc:
        return _fail(2, exc)


if __name__ == "__main__":
    sys.exit(main())
