"""Electrical-rule checks over the cell's fuse/cable tables.

The fuse table is CSV with header ``id,rating_a,class,branch,load_a``
(``load_a`` may be empty; ``#`` lines are comments).  Cable rows may share
the file using a ``CBL-`` id prefix.  Enclosure and device declarations,
which do not fit that header, come from an optional JSON "site" file.

Rules encoded:

* branch fuses must be rated at least 125 % of their load, and at the
  smallest standard size that satisfies it (oversizing is a warning,
  undersizing a failure);
* anything above 50 V AC must sit in a lockable enclosure, and mixing AC
  and DC devices in one enclosure draws a warning;
* every enclosure nameplate must carry the ten required fields.

Reports are deterministic: findings sort by (subject, rule id).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InputError

# IEC-style R10 ladder for small glass/class-J fuses, in amps.
DEFAULT_FUSE_LADDER = (
    0.25, 0.315, 0.4, 0.5, 0.63, 0.8, 1.0, 1.25, 1.6, 2.0, 2.5, 3.15,
    4.0, 5.0, 6.3, 8.0, 10.0, 12.0, 16.0, 20.0,
)

FUSE_SIZING_FACTOR = 1.25  # rating must be at least 125 % of the load

HIGH_VOLTAGE_AC_LIMIT = 50.0

REQUIRED_NAMEPLATE_FIELDS = frozenset(
    {
        "voltage_rating",
        "current_rating",
        "frequency",
        "phase",
        "power_rating",
        "manufacturer",
        "serial_number",
        "short_circuit_current_rating",
        "enclosure_type",
        "operating_temperature",
    }
)


@dataclass(frozen=True)
class FuseSpec:
    id: str
    rating_a: float
    fuse_class: str = ""
    branch: str = ""
    load_a: float | None = None


@dataclass(frozen=True)
class CableSpec:
    id: str
    spec: str = ""
    description: str = ""


@dataclass(frozen=True)
class EnclosureDecl:
    name: str
    max_voltage: float
    lockable: bool
    nameplate_fields: frozenset[str] = frozenset()


@dataclass(frozen=True)
class DeviceDecl:
    id: str
    voltage: float
    current_kind: str  # "ac" or "dc"
    enclosure: str | None = None


@dataclass(frozen=True)
class Finding:
    rule_id: str
    severity: str  # pass | warn | fail
    subject: str
    message: str


@dataclass
class RuleReport:
    findings: list[Finding] = field(default_factory=list)

    def extend(self, findings) -> None:
        self.findings.extend(findings)

    def finalize(self) -> "RuleReport":
        self.findings.sort(key=lambda f: (f.subject, f.rule_id))
        return self

    @property
    def failed(self) -> bool:
        return any(f.severity == "fail" for f in self.findings)

    def counts(self) -> dict[str, int]:
        out = {"pass": 0, "warn": 0, "fail": 0}
        for f in self.findings:
            out[f.severity] += 1
        return out

    def to_text(self) -> str:
        lines = []
        for f in self.findings:
            lines.append(f"{f.severity.upper():4s} {f.subject:16s} {f.rule_id:18s} {f.message}")
        counts = self.counts()
        lines.append(
            f"---- {counts['pass']} pass, {counts['warn']} warn, {counts['fail']} fail"
        )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(
            {
                "findings": [
                    {
                        "rule_id": f.rule_id,
                        "severity": f.severity,
                        "subject": f.subject,
                        "message": f.message,
                    }
                    for f in self.findings
                ],
                "counts": self.counts(),
            },
            separators=(",", ":"),
        )


@dataclass
class BomData:
    fuses: list[FuseSpec] = field(default_factory=list)
    cables: list[CableSpec] = field(default_factory=list)
    enclosures: list[EnclosureDecl] = field(default_factory=list)
    devices: list[DeviceDecl] = field(default_factory=list)
    problems: list[str] = field(default_factory=list)  # per-line parse diagnostics


def _parse_float(token: str) -> float | None:
    token = token.strip()
    if not token:
        return None
    try:
        return float(token)
    except ValueError:
        return None


def parse_bom(table: str | Path, site: str | Path | None = None) -> BomData:
    """Parse the fuse/cable CSV (plus optional site JSON); never raises on row content.

    Malformed rows are recorded in ``problems`` with their line numbers and
    parsing continues.
    """
    if isinstance(table, Path) or ("\n" not in str(table) and Path(str(table)).is_file()):
        text = Path(table).read_text(encoding="utf-8", errors="replace")
    else:
        text = str(table)

    data = BomData()
    saw_header = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip().lstrip("﻿")
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if not saw_header:
            saw_header = True
            if [c.lower() for c in cells[:5]] == ["id", "rating_a", "class", "branch", "load_a"]:
                continue
            data.problems.append(f"line {lineno}: missing header, treating as data")
        if len(cells) < 4:
            data.problems.append(f"line {lineno}: expected 5 columns, got {len(cells)}")
            continue
        while len(cells) < 5:
            cells.append("")
        ident = cells[0]
        if not ident:
            data.problems.append(f"line {lineno}: empty id")
            continue
        if ident.upper().startswith("CBL"):
            data.cables.append(CableSpec(id=ident, spec=cells[2], description=cells[3]))
            continue
        rating = _parse_float(cells[1])
        if rating is None or rating <= 0:
            data.problems.append(f"line {lineno}: bad rating {cells[1]!r} for {ident}")
            continue
        load = _parse_float(cells[4])
        if cells[4].strip() and load is None:
            data.problems.append(f"line {lineno}: bad load {cells[4]!r} for {ident}")
        data.fuses.append(
            FuseSpec(id=ident, rating_a=rating, fuse_class=cells[2], branch=cells[3], load_a=load)
        )

    if site is not None:
        _parse_site(site, data)
    return data


def _parse_site(site: str | Path, data: BomData) -> None:
    text = Path(site).read_text(encoding="utf-8") if Path(str(site)).is_file() else str(site)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        data.problems.append(f"site file: invalid JSON ({exc.msg} at line {exc.lineno})")
        return
    for enc in raw.get("enclosures", []):
        data.enclosures.append(
            EnclosureDecl(
                name=enc.get("name", "?"),
                max_voltage=float(enc.get("max_voltage", 0)),
                lockable=bool(enc.get("lockable", False)),
                nameplate_fields=frozenset(enc.get("nameplate_fields", [])),
            )
        )
    for dev in raw.get("devices", []):
        data.devices.append(
            DeviceDecl(
                id=dev.get("id", "?"),
                voltage=float(dev.get("voltage", 0)),
                current_kind=str(dev.get("current_kind", "dc")).lower(),
                enclosure=dev.get("enclosure"),
            )
        )


def smallest_standard_rating(min_rating: float, ladder=DEFAULT_FUSE_LADDER) -> float | None:
    for size in ladder:
        if size >= min_rating - 1e-9:
            return size
    return None


def check_fuse_sizing(fuse: FuseSpec, ladder=DEFAULT_FUSE_LADDER) -> Finding:
    """Apply the 125 % sizing rule; the rating must also be the smallest
    standard size that satisfies it."""
    if fuse.load_a is None or fuse.load_a <= 0:
        raise InputError(f"{fuse.id}: load must be known and positive")
    minimum = FUSE_SIZING_FACTOR * fuse.load_a
    best = smallest_standard_rating(minimum, ladder)
    max_load = fuse.rating_a / FUSE_SIZING_FACTOR
    if fuse.rating_a < minimum - 1e-9:
        return Finding(
            "fuse-125pct", "fail", fuse.id,
            f"rating {fuse.rating_a:g} A below required {minimum:g} A "
            f"for load {fuse.load_a:g} A (max admissible load {max_load:g} A)",
        )
    if best is not None and abs(fuse.rating_a - best) <= 1e-9:
        return Finding(
            "fuse-125pct", "pass", fuse.id,
            f"rating {fuse.rating_a:g} A covers load {fuse.load_a:g} A "
            f"(minimum {minimum:g} A)",
        )
    if best is not None and fuse.rating_a > best:
        return Finding(
            "fuse-125pct", "warn", fuse.id,
            f"rating {fuse.rating_a:g} A oversized; smallest standard size is {best:g} A",
        )
    return Finding(
        "fuse-125pct", "warn", fuse.id,
        f"rating {fuse.rating_a:g} A is not a standard size (minimum {minimum:g} A)",
    )


def check_segregation(
    enclosures: list[EnclosureDecl], devices: list[DeviceDecl]
) -> list[Finding]:
    findings = []
    by_name = {enc.name: enc for enc in enclosures}
    kinds_inside: dict[str, set[str]] = {}
    for dev in devices:
        enc = by_name.get(dev.enclosure) if dev.enclosure else None
        if dev.current_kind == "ac" and dev.voltage > HIGH_VOLTAGE_AC_LIMIT:
            if enc is None:
                findings.append(Finding(
                    "segregation-50vac", "fail", dev.id,
                    f"{dev.voltage:g} V AC device not assigned to any enclosure",
                ))
            elif not enc.lockable:
                findings.append(Finding(
                    "segregation-50vac", "fail", dev.id,
                    f"{dev.voltage:g} V AC device in non-lockable enclosure {enc.name!r}",
                ))
            else:
                findings.append(Finding(
                    "segregation-50vac", "pass", dev.id,
                    f"{dev.voltage:g} V AC device in lockable enclosure {enc.name!r}",
                ))
        if enc is not None and dev.voltage > enc.max_voltage:
            findings.append(Finding(
                "enclosure-voltage", "fail", dev.id,
                f"{dev.voltage:g} V device exceeds the {enc.max_voltage:g} V rating "
                f"of enclosure {enc.name!r}",
            ))
        if enc is not None:
            kinds_inside.setdefault(enc.name, set()).add(dev.current_kind)
    for name in sorted(kinds_inside):
        kinds = kinds_inside[name]
        if "ac" in kinds and "dc" in kinds:
            findings.append(Finding(
                "segregation-mixed", "warn", name,
                "enclosure houses both AC and DC devices",
            ))
        else:
            findings.append(Finding(
                "segregation-mixed", "pass", name,
                f"enclosure carries {'/'.join(sorted(kinds)).upper()} only",
            ))
    return findings


def check_nameplate(enclosure: EnclosureDecl) -> Finding:
    missing = sorted(REQUIRED_NAMEPLATE_FIELDS - enclosure.nameplate_fields)
    if not missing:
        return Finding(
            "nameplate-fields", "pass", enclosure.name,
            "all ten required nameplate fields present",
        )
    return Finding(
        "nameplate-fields", "fail", enclosure.name,
        f"nameplate missing: {', '.join(missing)}",
    )


def run_checks(data: BomData, ladder=DEFAULT_FUSE_LADDER) -> RuleReport:
    report = RuleReport()
    for fuse in data.fuses:
        if fuse.load_a is None or fuse.load_a <= 0:
            report.findings.append(Finding(
                "fuse-125pct", "warn", fuse.id, "no load declared; sizing not checked",
            ))
        else:
            report.findings.append(check_fuse_sizing(fuse, ladder))
    report.extend(check_segregation(data.enclosures, data.devices))
    for enclosure in data.enclosures:
        report.findings.append(check_nameplate(enclosure))
    for problem in data.problems:
        report.findings.append(Finding("parse", "warn", "bom-file", problem))
    return report.finalize()


def default_fixture_paths() -> tuple[Path, Path]:
    """Bundled fuse table and site description derived from the cell's BOM."""
    from importlib import resources

    base = resources.files("acat").joinpath("fixtures")
    return Path(str(base / "bom_fuses.csv")), Path(str(base / "site_default.json"))
