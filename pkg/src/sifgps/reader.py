"""Fixed-format SIF reading.

Splits a file into sections of typed records without interpreting any
semantics.  Numeric fields are kept as literal strings so that conversion
stays under the control of later stages.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import ErrorLog, MalformedRecord, MissingEndata, SifError, UnknownSectionHeader


class Phase(Enum):
    """Which part of the file a section belongs to."""

    DATA = "data"
    ELEMENTS = "elements"
    GROUPS = "groups"


class SectionKind(Enum):
    PREAMBLE = "PREAMBLE"
    VARIABLES = "VARIABLES"
    GROUPS = "GROUPS"
    CONSTANTS = "CONSTANTS"
    RANGES = "RANGES"
    BOUNDS = "BOUNDS"
    START_POINT = "START POINT"
    QUADRATIC = "QUADRATIC"
    ELEMENT_TYPE = "ELEMENT TYPE"
    ELEMENT_USES = "ELEMENT USES"
    GROUP_TYPE = "GROUP TYPE"
    GROUP_USES = "GROUP USES"
    OBJECT_BOUND = "OBJECT BOUND"
    TEMPORARIES = "TEMPORARIES"
    GLOBALS = "GLOBALS"
    INDIVIDUALS = "INDIVIDUALS"


# Both the MPS aliases and the native names are accepted.
_DATA_HEADERS = {
    "VARIABLES": SectionKind.VARIABLES,
    "COLUMNS": SectionKind.VARIABLES,
    "GROUPS": SectionKind.GROUPS,
    "ROWS": SectionKind.GROUPS,
    "CONSTRAINTS": SectionKind.GROUPS,
    "CONSTANTS": SectionKind.CONSTANTS,
    "RHS": SectionKind.CONSTANTS,
    "RANGES": SectionKind.RANGES,
    "BOUNDS": SectionKind.BOUNDS,
    "START POINT": SectionKind.START_POINT,
    "QUADRATIC": SectionKind.QUADRATIC,
    "QMATRIX": SectionKind.QUADRATIC,
    "QUADOBJ": SectionKind.QUADRATIC,
    "QSECTION": SectionKind.QUADRATIC,
    "HESSIAN": SectionKind.QUADRATIC,
    "ELEMENT TYPE": SectionKind.ELEMENT_TYPE,
    "ELEMENT USES": SectionKind.ELEMENT_USES,
    "GROUP TYPE": SectionKind.GROUP_TYPE,
    "GROUP USES": SectionKind.GROUP_USES,
    "OBJECT BOUND": SectionKind.OBJECT_BOUND,
}

_NONLINEAR_HEADERS = {
    "TEMPORARIES": SectionKind.TEMPORARIES,
    "GLOBALS": SectionKind.GLOBALS,
    "INDIVIDUALS": SectionKind.INDIVIDUALS,
}

# Records whose field 4 runs to the end of the line as Fortran expression text.
_EXPRESSION_CODES = {"A", "F", "G", "H", "A+", "F+", "G+", "H+"}

# A token made only of these characters must parse as a Fortran real.
_NUMERIC_SHAPE = re.compile(r"^[0-9.+\-DdEe]+$")
_FORTRAN_REAL = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([DdEe][+-]?\d+)?$")

_CLASSIFICATION = re.compile(r"classification\s+(\S+)", re.IGNORECASE)

# 0-based start columns of the six fixed fields.
_FIELD_COLUMNS = (1, 4, 14, 24, 39, 49)


@dataclass(frozen=True)
class SourceRecord:
    """One data line, split into the six standard fields."""

    line_number: int
    indicator: str
    name2: str = ""
    name3: str = ""
    value4: str = ""
    name5: str = ""
    value6: str = ""
    trailing_comment: str | None = None

    def fields(self) -> tuple[str, str, str, str, str, str]:
        return (self.indicator, self.name2, self.name3,
                self.value4, self.name5, self.value6)

    def render(self) -> str:
        """Write the record back in fixed format."""
        line = ""
        for col, text in zip(_FIELD_COLUMNS, self.fields()):
            if not text:
                continue
            pad = max(col, len(line) + 1 if line else col)
            line = line.ljust(pad) + text
        if self.trailing_comment:
            line = line.ljust(max(39, len(line) + 1)) + self.trailing_comment
        return line


@dataclass
class Section:
    kind: SectionKind
    phase: Phase
    header_line: int
    argument: str = ""
    records: list[SourceRecord] = field(default_factory=list)


@dataclass
class SectionedProgram:
    """A SIF file split into typed sections of fixed-field records."""

    problem_name: str = ""
    classification: str = ""
    sections: list[Section] = field(default_factory=list)
    has_endata: bool = False

    def in_phase(self, phase: Phase) -> list[Section]:
        return [s for s in self.sections if s.phase is phase]

    def find(self, kind: SectionKind, phase: Phase = Phase.DATA) -> Section | None:
        for section in self.sections:
            if section.kind is kind and section.phase is phase:
                return section
        return None

    def canonical(self):
        """Structural identity, independent of line numbers and alias spellings."""
        return (
            self.problem_name,
            self.classification,
            self.has_endata,
            tuple(
                (s.kind, s.phase, tuple(r.fields() + (r.trailing_comment,) for r in s.records))
                for s in self.sections
            ),
        )

    def render(self) -> str:
        """Print the program back as fixed-format SIF text."""
        lines = [f"NAME          {self.problem_name}".rstrip()]
        if self.classification:
            lines.append(f"*   classification {self.classification}")
        for section in self.in_phase(Phase.DATA):
            if section.kind is not SectionKind.PREAMBLE:
                lines.append(section.kind.value)
            lines.extend(r.render() for r in section.records)
        lines.append("ENDATA")
        for phase, header in ((Phase.ELEMENTS, "ELEMENTS"), (Phase.GROUPS, "GROUPS")):
            sections = self.in_phase(phase)
            if not sections:
                continue
            lines.append(f"{header}      {self.problem_name}".rstrip())
            for section in sections:
                lines.append(section.kind.value)
                lines.extend(r.render() for r in section.records)
            lines.append("ENDATA")
        return "\n".join(lines) + "\n"


def _zone_of(start: int) -> int | None:
    if 3 <= start < 13:
        return 0
    if 13 <= start < 23:
        return 1
    if 23 <= start < 38:
        return 2
    if 38 <= start < 48:
        return 3
    if start >= 48:
        return 4
    return None


def _split_fields(line: str) -> list[str] | None:
    """Assign whitespace-separated tokens to fields 2..6.

    Tokens anchored at (or near) the standard columns are placed by column
    zone; anything else falls back to plain positional order, which is only
    accepted when it is unambiguous (at most five tokens).
    """
    tokens = [(m.start(), m.group()) for m in re.finditer(r"\S+", line[3:])]
    slots: list[str] = [""] * 5
    last_zone = -1
    zoned = True
    for offset, text in tokens:
        zone = _zone_of(offset + 3)
        if zone is None or zone <= last_zone:
            zoned = False
            break
        slots[zone] = text
        last_zone = zone
    if zoned:
        return slots
    if len(tokens) > 5:
        return None
    slots = [""] * 5
    for position, (_, text) in enumerate(tokens):
        slots[position] = text
    return slots


def read_sif(text: str, errors: ErrorLog | None = None) -> SectionedProgram:
    """Split SIF text into a SectionedProgram.

    Without an error log the first problem raises.  With one, recoverable
    problems are recorded and reading continues, so a decode can report the
    complete list of errors.
    """
    program = SectionedProgram()
    seen: set[tuple[SectionKind, Phase]] = set()
    phase = Phase.DATA
    phase_open = True
    data_closed = False
    name_seen = False
    current: Section | None = None
    swallowing = False

    def fail(error: SifError) -> None:
        if errors is None:
            raise error
        errors.add(error)

    def open_section(kind: SectionKind, lineno: int, argument: str = "") -> Section:
        nonlocal current, swallowing
        if (kind, phase) in seen:
            fail(MalformedRecord(f"section {kind.value} appears twice", line_number=lineno))
            swallowing = True
            current = None
            return Section(kind, phase, lineno, argument)
        seen.add((kind, phase))
        section = Section(kind, phase, lineno, argument)
        program.sections.append(section)
        current = section
        swallowing = False
        return section

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        if not line.strip():
            continue
        if "\t" in line:
            fail(MalformedRecord("tab characters are not accepted", line_number=lineno))
            continue
        if line[0] == "*":
            match = _CLASSIFICATION.search(line[1:])
            if match and not program.classification:
                program.classification = match.group(1)
            continue

        comment: str | None = None
        dollar = line.find("$")
        if dollar != -1:
            comment = line[dollar:]
            line = line[:dollar].rstrip()
            if not line.strip():
                continue

        if line[0] != " ":
            # Section or part header.
            words = line.split()
            token = words[0].upper()
            two_words = " ".join(w.upper() for w in words[:2]) if len(words) > 1 else ""
            argument = ""

            if token == "ENDATA":
                if not phase_open:
                    fail(MalformedRecord("ENDATA outside any part", line_number=lineno))
                    continue
                phase_open = False
                current = None
                swallowing = False
                if phase is Phase.DATA:
                    data_closed = True
                continue

            if token == "NAME":
                if phase is not Phase.DATA or not phase_open or name_seen:
                    fail(MalformedRecord("misplaced NAME header", line_number=lineno))
                    continue
                program.problem_name = line[4:].strip()
                name_seen = True
                continue

            if not phase_open:
                if token == "ELEMENTS":
                    phase = Phase.ELEMENTS
                elif token == "GROUPS":
                    phase = Phase.GROUPS
                else:
                    fail(UnknownSectionHeader(f"unexpected header {token!r} after ENDATA",
                                              line_number=lineno))
                    swallowing = True
                    continue
                if any(s.phase is phase for s in program.sections):
                    fail(MalformedRecord(f"{token} part appears twice", line_number=lineno))
                    swallowing = True
                    continue
                phase_open = True
                current = None
                swallowing = False
                continue

            if phase is Phase.DATA:
                kind = _DATA_HEADERS.get(two_words) or _DATA_HEADERS.get(token)
                if kind is None:
                    fail(UnknownSectionHeader(f"unknown section header {token!r}",
                                              line_number=lineno))
                    swallowing = True
                    current = None
                    continue
                header_words = 2 if two_words in _DATA_HEADERS else 1
                argument = " ".join(words[header_words:])
                open_section(kind, lineno, argument)
                continue

            kind = _NONLINEAR_HEADERS.get(token)
            if kind is None:
                fail(UnknownSectionHeader(f"unknown section header {token!r}",
                                          line_number=lineno))
                swallowing = True
                current = None
                continue
            open_section(kind, lineno)
            continue

        # Data record.
        if not name_seen:
            fail(MalformedRecord("record before NAME header", line_number=lineno))
            continue
        if not phase_open:
            fail(MalformedRecord("record outside any section", line_number=lineno))
            continue
        if swallowing:
            continue
        if current is None:
            if phase is Phase.DATA:
                open_section(SectionKind.PREAMBLE, lineno)
            else:
                open_section(SectionKind.INDIVIDUALS, lineno)

        indicator = line[1:3].strip()
        if phase is not Phase.DATA and indicator.upper() in _EXPRESSION_CODES:
            record = SourceRecord(
                lineno, indicator,
                name2=line[4:12].strip(),
                name3=line[14:22].strip(),
                value4=line[24:].strip(),
                trailing_comment=comment,
            )
        else:
            slots = _split_fields(line)
            if slots is None:
                fail(MalformedRecord("too many fields on record", line_number=lineno))
                continue
            record = SourceRecord(lineno, indicator, *slots, trailing_comment=comment)
            if phase is Phase.DATA:
                bad = next(
                    (v for v in (record.value4, record.value6)
                     if v and _NUMERIC_SHAPE.match(v) and not _FORTRAN_REAL.match(v)),
                    None,
                )
                if bad is not None:
                    fail(MalformedRecord(f"unparseable numeric field {bad!r}",
                                         line_number=lineno))
                    continue
        current.records.append(record)

    if phase_open:
        fail(MissingEndata("end of file reached before ENDATA"))
    program.has_endata = data_closed and not phase_open
    return program


def parse_fortran_real(text: str, line_number: int | None = None) -> float:
    """Convert a Fortran real literal (D or E exponent) to a double."""
    token = text.strip()
    if not _FORTRAN_REAL.match(token):
        raise MalformedRecord(f"not a numeric literal: {token!r}", line_number=line_number)
    return float(token.replace("D", "e").replace("d", "e"))
