"""Model-description language.

A lavaan-flavoured line grammar::

    # measurement
    UT =~ UT1 + UT2 + UT3 + UT4
    # structural regressions
    TSAT ~ UT + UADT + license
    # free covariance between two latents (or two disturbances)
    UT ~~ UADT
    # observed variables usable in regressions
    outcome gap
    demographic gender: female | male
    # reporting directives
    hypothesis H1: TST ~ UT (+)
    mediation UT -> TST -> TSAT
    ann TSAT, RP, gap

``#`` starts a comment. Declaration order is preserved everywhere.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path


class ModelSyntaxError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ModelValidationError(ValueError):
    pass


@dataclass(frozen=True)
class Regression:
    target: str
    predictors: tuple[str, ...]


@dataclass(frozen=True)
class Hypothesis:
    label: str
    target: str
    predictor: str
    sign: int  # +1, -1, or 0 for "any direction"


@dataclass(frozen=True)
class Chain:
    source: str
    mediator: str
    target: str

    def __str__(self):
        return f"{self.source} -> {self.mediator} -> {self.target}"


@dataclass
class ModelSpec:
    """Declarative SEM description."""

    measurement: dict[str, list[str]] = field(default_factory=dict)
    structural: list[Regression] = field(default_factory=list)
    covariances: list[tuple[str, str]] = field(default_factory=list)
    outcome: str | None = None
    demographics: dict[str, list[str]] = field(default_factory=dict)
    hypotheses: list[Hypothesis] = field(default_factory=list)
    mediations: list[Chain] = field(default_factory=list)
    ann_targets: list[str] = field(default_factory=list)

    @property
    def constructs(self):
        return list(self.measurement)

    @property
    def items(self):
        return [it for items in self.measurement.values() for it in items]

    @property
    def observed_regressors(self):
        """Outcome and demographic names that take part in regressions."""
        used = set()
        for reg in self.structural:
            used.add(reg.target)
            used.update(reg.predictors)
        names = ([self.outcome] if self.outcome else []) + list(self.demographics)
        return [n for n in names if n in used]

    @property
    def controls(self):
        used = {p for reg in self.structural for p in reg.predictors}
        return [d for d in self.demographics if d in used]

    @property
    def variables(self):
        """Structural-layer variables: constructs then observed regressors."""
        return self.constructs + self.observed_regressors

    @property
    def endogenous(self):
        targets = {reg.target for reg in self.structural}
        return [v for v in self.variables if v in targets]

    @property
    def exogenous(self):
        targets = {reg.target for reg in self.structural}
        return [v for v in self.variables if v not in targets]

    def predictors_of(self, target):
        preds = []
        for reg in self.structural:
            if reg.target == target:
                preds.extend(p for p in reg.predictors if p not in preds)
        return preds

    def paths(self):
        """All (target, predictor) pairs in declaration order."""
        out = []
        for reg in self.structural:
            for p in reg.predictors:
                if (reg.target, p) not in out:
                    out.append((reg.target, p))
        return out

    def construct_of(self, item):
        for c, items in self.measurement.items():
            if item in items:
                return c
        raise KeyError(item)

    def measurement_only(self):
        """CFA version: same measurement map, all constructs freely correlated."""
        return ModelSpec(measurement={c: list(v) for c, v in self.measurement.items()},
                         outcome=self.outcome,
                         demographics={k: list(v) for k, v in self.demographics.items()})

    def topological_order(self):
        """Structural variables ordered so that predictors precede targets."""
        variables = self.variables
        preds = {v: set(self.predictors_of(v)) for v in variables}
        order, done = [], set()
        remaining = list(variables)
        while remaining:
            ready = [v for v in remaining if preds[v] <= done]
            if not ready:
                raise ModelValidationError(
                    "structural graph contains a cycle among: " + ", ".join(remaining))
            for v in ready:
                order.append(v)
                done.add(v)
            remaining = [v for v in remaining if v not in done]
        return order

    def validate(self):
        if not self.measurement:
            raise ModelValidationError("model declares no constructs")
        for reg in self.structural:
            if reg.target in reg.predictors:
                raise ModelValidationError(f"{reg.target} regresses on itself")
        self.topological_order()
        paths = set(self.paths())
        for h in self.hypotheses:
            if (h.target, h.predictor) not in paths:
                raise ModelValidationError(
                    f"hypothesis {h.label} names an undeclared path {h.predictor} -> {h.target}")
        for ch in self.mediations:
            for pair in ((ch.mediator, ch.source), (ch.target, ch.mediator)):
                if pair not in paths:
                    raise ModelValidationError(
                        f"mediation chain {ch} needs the path {pair[1]} -> {pair[0]}")
        return self

    def to_text(self):
        lines = [f"{c} =~ " + " + ".join(items) for c, items in self.measurement.items()]
        if self.outcome:
            lines.append(f"outcome {self.outcome}")
        for name, levels in self.demographics.items():
            lines.append(f"demographic {name}: " + " | ".join(levels))
        lines += [f"{r.target} ~ " + " + ".join(r.predictors) for r in self.structural]
        lines += [f"{a} ~~ {b}" for a, b in self.covariances]
        signs = {1: " (+)", -1: " (-)", 0: ""}
        lines += [f"hypothesis {h.label}: {h.target} ~ {h.predictor}{signs[h.sign]}"
                  for h in self.hypotheses]
        lines += [f"mediation {c}" for c in self.mediations]
        if self.ann_targets:
            lines.append("ann " + ", ".join(self.ann_targets))
        return "\n".join(lines) + "\n"


_NAME = r"[A-Za-z_][A-Za-z0-9_.]*"
_NAME_RE = re.compile(rf"^{_NAME}$")
_HYP_RE = re.compile(rf"^hypothesis\s+({_NAME})\s*:\s*({_NAME})\s*~\s*({_NAME})\s*(\(([+-])\))?$")
_DEMO_RE = re.compile(rf"^demographic\s+({_NAME})\s*:\s*(.+)$")


def _names(text, lineno, sep="+"):
    names = [t.strip() for t in text.split(sep)]
    for n in names:
        if not _NAME_RE.match(n):
            raise ModelSyntaxError(f"invalid variable name {n!r}", lineno)
    return names


def parse_model(text: str) -> ModelSpec:
    """Parse a model description into a validated :class:`ModelSpec`."""
    if not text or not text.strip():
        raise ModelSyntaxError("empty model description")
    spec = ModelSpec()
    regressions = []  # (lineno, target, predictors)
    cov_lines = []
    hyp_lines = []
    med_lines = []
    ann_line = None
    owner = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=~" in line:
            lhs, rhs = line.split("=~", 1)
            construct = _names(lhs, lineno)[0]
            items = _names(rhs, lineno)
            if construct in spec.measurement:
                raise ModelSyntaxError(f"construct {construct} declared twice", lineno)
            for it in items:
                if it in owner:
                    raise ModelSyntaxError(
                        f"item {it} already assigned to construct {owner[it]}", lineno)
                owner[it] = construct
            spec.measurement[construct] = items
        elif line.startswith("hypothesis"):
            m = _HYP_RE.match(line)
            if not m:
                raise ModelSyntaxError("expected 'hypothesis LABEL: target ~ predictor (+|-)'", lineno)
            sign = {"+": 1, "-": -1, None: 0}[m.group(5)]
            hyp_lines.append((lineno, Hypothesis(m.group(1), m.group(2), m.group(3), sign)))
        elif line.startswith("mediation"):
            names = _names(line[len("mediation"):], lineno, sep="->")
            if len(names) != 3:
                raise ModelSyntaxError("mediation chain needs exactly source -> mediator -> target", lineno)
            med_lines.append((lineno, Chain(*names)))
        elif line.startswith("demographic"):
            m = _DEMO_RE.match(line)
            if not m:
                raise ModelSyntaxError("expected 'demographic NAME: level1 | level2 | ...'", lineno)
            levels = [lv.strip() for lv in m.group(2).split("|")]
            if len(levels) < 2 or any(not lv for lv in levels) or len(set(levels)) != len(levels):
                raise ModelSyntaxError("demographic needs at least two distinct, nonempty levels", lineno)
            spec.demographics[m.group(1)] = levels
        elif line.startswith("outcome"):
            names = _names(line[len("outcome"):], lineno)
            if len(names) != 1:
                raise ModelSyntaxError("exactly one outcome may be declared", lineno)
            spec.outcome = names[0]
        elif line.startswith("ann") and line[3:4].isspace():
            ann_line = (lineno, _names(line[3:], lineno, sep=","))
        elif "~~" in line:
            lhs, rhs = line.split("~~", 1)
            a = _names(lhs, lineno)[0]
            for b in _names(rhs, lineno):
                cov_lines.append((lineno, a, b))
        elif "~" in line:
            lhs, rhs = line.split("~", 1)
            target = _names(lhs, lineno)[0]
            regressions.append((lineno, target, _names(rhs, lineno)))
        else:
            raise ModelSyntaxError(f"cannot parse {line!r}", lineno)

    known = set(spec.measurement) | set(spec.demographics)
    if spec.outcome:
        known.add(spec.outcome)
    clash = (set(spec.measurement) | set(spec.demographics) | {spec.outcome}) & set(owner)
    if clash:
        raise ModelValidationError(f"names used both as item and variable: {sorted(clash)}")
    for lineno, target, preds in regressions:
        for v in [target] + preds:
            if v not in known:
                raise ModelSyntaxError(f"unknown variable {v!r} in regression", lineno)
        if target in spec.demographics:
            raise ModelSyntaxError(f"demographic {target} cannot be a regression target", lineno)
        spec.structural.append(Regression(target, tuple(preds)))
    for lineno, a, b in cov_lines:
        for v in (a, b):
            if v not in spec.measurement:
                raise ModelSyntaxError(f"covariances are only supported between constructs, got {v!r}", lineno)
        if a == b:
            raise ModelSyntaxError("variance statements are not supported", lineno)
        spec.covariances.append((a, b))
    spec.hypotheses = [h for _, h in hyp_lines]
    spec.mediations = [c for _, c in med_lines]
    if ann_line:
        lineno, targets = ann_line
        for t in targets:
            if t not in known:
                raise ModelSyntaxError(f"unknown ANN target {t!r}", lineno)
        spec.ann_targets = targets
    spec.validate()
    endo = set(spec.endogenous)
    for a, b in spec.covariances:
        if (a in endo) != (b in endo):
            raise ModelValidationError(
                f"covariance {a} ~~ {b} mixes an exogenous construct with an endogenous one")
    return spec


def load_model(path) -> ModelSpec:
    return parse_model(Path(path).read_text(encoding="utf-8"))


def default_model_text() -> str:
    from importlib import resources
    return resources.files("semann.data").joinpath("default_model.sem").read_text(encoding="utf-8")


def default_model() -> ModelSpec:
    """The bundled questionnaire model: 11 constructs, 43 items, H1-H11."""
    return parse_model(default_model_text())
