"""JSON documents, text summaries and the schemas that describe them."""

from __future__ import annotations

import json
import math

import jsonschema
import numpy as np
from scipy import stats

MODEL_LABELS = {
    "cox": "Cox-type model",
    "ar": "accelerated rate model",
    "am": "accelerated mean model",
    "gsc": "generalized scale-change model",
}


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _table(names, est, se) -> list[dict]:
    rows = []
    for j, name in enumerate(names):
        e = float(est[j])
        s = None if se is None else float(se[j])
        z = None if not s else e / s
        p = None if z is None else float(2 * stats.norm.sf(abs(z)))
        rows.append({"name": name, "estimate": e, "se": s, "z": z, "p_value": p})
    return rows


def _rate_blocks(fit) -> list[tuple[str, str]]:
    form = fit.spec.rate_form
    if form == "cox":
        return [("Recurrent event process:", "beta")]
    if form in ("ar", "am"):
        return [("Recurrent event process:", "alpha")]
    return [("Recurrent event process (shape):", "alpha"), ("Recurrent event process (size):", "beta")]


def _hazard_blocks(fit) -> list[tuple[str, str]]:
    form = fit.spec.hazard_form
    if form == "none":
        return []
    if form == "cox":
        return [("Terminal event:", "theta")]
    if form in ("ar", "am"):
        return [("Terminal event:", "eta")]
    return [("Terminal event (shape):", "eta"), ("Terminal event (size):", "theta")]


def _step(f) -> dict:
    return {"knots": f.knots.tolist(), "values": f.values.tolist(), "value_before_first_knot": f.value_before_first_knot}


def fit_to_dict(fit, tests: bool = False) -> dict:
    names = list(fit.covariate_names)
    params = fit.params()
    blocks = {}
    for key in ("alpha", "beta", "gamma", "eta", "theta"):
        if key in params:
            blocks[key] = _table(names, params[key], fit.se(key))
    doc = {
        "model": fit.spec.model_string,
        "rate_form": fit.spec.rate_form,
        "hazard_form": fit.spec.hazard_form,
        "eq_type": fit.spec.eq_type,
        "n": fit.n,
        "covariates": names,
        "converged": fit.converged,
        "parameters": blocks,
        "log_mu_z": fit.rate.log_mu_z,
        "mu_z": fit.rate.mu_z,
        "boot": fit.spec.boot,
        "boot_used": fit.boot_used,
        "vcov": {k: np.asarray(v).tolist() for k, v in fit.vcov.items()},
        "baselines": {"rate": _step(fit.rate.baseline)},
        "zhat": fit.zhat.tolist(),
        "diagnostics": {
            "rate": [d.to_dict() for d in fit.rate.diagnostics],
            "hazard": [] if fit.hazard is None else [d.to_dict() for d in fit.hazard.diagnostics],
            "empty_risk_terms": 0 if fit.hazard is None else fit.hazard.empty_risk_terms,
            "notes": list(fit.notes),
        },
        "tests": None,
    }
    if fit.hazard is not None:
        doc["baselines"]["hazard"] = _step(fit.hazard.baseline)
    if tests:
        doc["tests"] = [
            {"name": t.name, "label": t.label, "statistic": t.statistic, "df": t.df, "p_value": t.p_value}
            for t in fit.tests()
        ]
    return doc


def _fmt_p(p):
    if p is None:
        return "NA"
    return "<2e-16" if p < 2e-16 else f"{p:.5g}"


def _panel(title, rows) -> list[str]:
    out = [title, f"{'':<10}{'Estimate':>10}{'StdErr':>10}{'z.value':>10}{'p.value':>12}"]
    for r in rows:
        se = "NA" if r["se"] is None else f"{r['se']:.5f}"
        z = "NA" if r["z"] is None else f"{r['z']:.3f}"
        out.append(f"{r['name']:<10}{r['estimate']:>10.5f}{se:>10}{z:>10}{_fmt_p(r['p_value']):>12}")
    return out + [""]


def fit_summary_text(fit, tests: bool = False) -> str:
    doc = fit_to_dict(fit, tests)
    spec = fit.spec
    lines = [
        f"Model: {spec.model_string} (rate: {MODEL_LABELS[spec.rate_form]}"
        + ("" if spec.hazard_form == "none" else f"; hazard: {MODEL_LABELS[spec.hazard_form]}")
        + ")",
        f"n = {fit.n}, estimating equation: {spec.eq_type}, bootstrap replicates used: {fit.boot_used} of {spec.boot}",
        "",
    ]
    for title, key in _rate_blocks(fit):
        lines += _panel(title, doc["parameters"][key])
    for title, key in _hazard_blocks(fit):
        lines += _panel(title, doc["parameters"][key])
    if not fit.converged:
        lines.append("Warning: at least one estimating equation did not converge.")
        lines.append("")
    if tests:
        lines.append("Hypothesis tests:")
        for t in doc["tests"]:
            lines.append(f"{t['label']}:")
            lines.append(f"       X-squared = {t['statistic']:.4f}, df = {t['df']}, p-value = {t['p_value']:.4f}")
        lines.append("")
    for note in fit.notes:
        lines.append(f"Note: {note}")
    return "\n".join(lines).rstrip() + "\n"


def dumps(doc) -> str:
    """Deterministic JSON text (sorted keys, non-finite numbers as null)."""

    def clean(v):
        if isinstance(v, float):
            return _num(v)
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, np.generic):
            return clean(v.item())
        return v

    return json.dumps(clean(doc), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# Schemas

_NUM = {"type": ["number", "null"]}
_NUMS = {"type": "array", "items": {"type": "number"}}
_STEP = {
    "type": "object",
    "required": ["knots", "values", "value_before_first_knot"],
    "properties": {"knots": _NUMS, "values": _NUMS, "value_before_first_knot": {"type": "number"}},
}
_CURVE = {
    "type": "object",
    "required": ["label", "level", "n_boot", "estimate", "lower", "upper"],
    "properties": {
        "label": {"type": "string"},
        "level": {"type": "number"},
        "n_boot": {"type": "integer", "minimum": 0},
        "estimate": _STEP,
        "lower": {"oneOf": [_STEP, {"type": "null"}]},
        "upper": {"oneOf": [_STEP, {"type": "null"}]},
        "warnings": {"type": "array", "items": {"type": "string"}},
    },
}
_ROW = {
    "type": "object",
    "required": ["name", "estimate", "se", "z", "p_value"],
    "properties": {"name": {"type": "string"}, "estimate": {"type": "number"}, "se": _NUM, "z": _NUM, "p_value": _NUM},
}
_SOLVER = {
    "type": "object",
    "required": ["solution", "residual_norm", "converged", "iterations", "method_used"],
    "properties": {
        "solution": _NUMS,
        "residual_norm": {"type": "number"},
        "converged": {"type": "boolean"},
        "iterations": {"type": "integer"},
        "method_used": {"enum": ["spectral", "spectral_multistart", "norm_minimize"]},
    },
}

SCHEMAS = {
    "fit": {
        "type": "object",
        "required": ["model", "n", "covariates", "converged", "parameters", "mu_z", "baselines", "diagnostics", "tests"],
        "properties": {
            "model": {"type": "string"},
            "n": {"type": "integer", "minimum": 0},
            "covariates": {"type": "array", "items": {"type": "string"}},
            "converged": {"type": "boolean"},
            "parameters": {"type": "object", "additionalProperties": {"type": "array", "items": _ROW}},
            "mu_z": {"type": "number", "minimum": 0},
            "baselines": {"type": "object", "required": ["rate"], "additionalProperties": _STEP},
            "zhat": {"type": "array", "items": {"type": "number", "minimum": 0}},
            "diagnostics": {
                "type": "object",
                "required": ["rate", "hazard", "empty_risk_terms"],
                "properties": {"rate": {"type": "array", "items": _SOLVER}, "hazard": {"type": "array", "items": _SOLVER}},
            },
            "tests": {
                "oneOf": [
                    {"type": "null"},
                    {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["name", "label", "statistic", "df", "p_value"],
                            "properties": {
                                "name": {"enum": ["cox_shape_zero", "am_gamma_zero", "ar_beta_zero"]},
                                "statistic": {"type": "number", "minimum": 0},
                                "df": {"type": "integer"},
                                "p_value": {"type": "number", "minimum": 0, "maximum": 1},
                            },
                        },
                    },
                ]
            },
        },
    },
    "lwyy": {
        "type": "object",
        "required": ["model", "n", "coef", "se", "robust_se", "z", "p_value"],
        "properties": {"model": {"const": "cox.LWYY"}, "coef": _NUMS, "se": _NUMS, "robust_se": _NUMS},
    },
    "summary": {
        "type": "object",
        "required": ["n", "total_events", "mean_events_per_subject", "terminal_proportion", "median_followup", "median_time_to_terminal"],
        "properties": {"n": {"type": "integer", "minimum": 0}, "total_events": {"type": "integer", "minimum": 0}},
    },
    "validation": {
        "type": "object",
        "required": ["mode", "ok", "findings"],
        "properties": {
            "mode": {"enum": ["hard", "soft", "none"]},
            "ok": {"type": "boolean"},
            "findings": {
                "type": "array",
                "items": {"type": "object", "required": ["subject", "rule", "message", "action", "severity"]},
            },
        },
    },
    "curves": {
        "type": "object",
        "required": ["kind", "curves", "labels"],
        "properties": {
            "kind": {"const": "curves"},
            "legend_title": {"type": "string"},
            "labels": {"type": "array", "items": {"type": "string"}},
            "curves": {"type": "array", "minItems": 1, "items": _CURVE},
        },
    },
    "events": {
        "type": "object",
        "required": ["kind", "axis", "rows", "legend"],
        "properties": {
            "kind": {"const": "events"},
            "axis": {"enum": ["person", "calendar"]},
            "legend": {"type": "array", "items": {"type": "string"}},
            "rows": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["id", "rank", "segment", "marks", "terminal"],
                    "properties": {"rank": {"type": "integer", "minimum": 1}, "terminal": _NUM},
                },
            },
        },
    },
    "simulate": {
        "type": "object",
        "required": ["config", "summary", "output"],
        "properties": {"config": {"type": "object"}, "summary": {"type": "object"}},
    },
    "predict": {
        "type": "object",
        "required": ["model", "predictions"],
        "properties": {
            "predictions": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["x", "frailty", "rate", "hazard"],
                    "properties": {"rate": _STEP, "hazard": {"oneOf": [_STEP, {"type": "null"}]}},
                },
            }
        },
    },
    "error": {
        "type": "object",
        "required": ["error", "kind", "exit_code"],
        "properties": {"error": {"type": "string"}, "kind": {"type": "string"}, "exit_code": {"type": "integer"}},
    },
}


def validate_document(kind: str, doc) -> None:
    """Raise :class:`jsonschema.ValidationError` unless ``doc`` matches schema ``kind``."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    jsonschema.validate(doc, SCHEMAS[kind])
