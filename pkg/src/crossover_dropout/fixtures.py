"""Built-in reference designs with their default dropout mechanisms.

Each design is stored column-per-subject exactly as displayed in its
source table; entry j of ``sequences`` is the treatment sequence of
subject j.  The validation suite checks the structural facts quoted for
them (subject counts, duplicated sequences).
"""

from __future__ import annotations

from dataclasses import dataclass

from .design_search import ExactDesign
from .dropout_model import DropoutMechanism, new_mechanism
from .errors import ValidationError
from .sequences import parse_sequence


@dataclass(frozen=True)
class Fixture:
    name: str
    design: ExactDesign
    mechanism: DropoutMechanism


def _fixture(name: str, p: int, t: int, sequences: list[str], mech_a) -> Fixture:
    seqs = [parse_sequence(s, t) for s in sequences]
    design = ExactDesign.from_sequences(seqs, t, name=name)
    assert design.p == p
    return Fixture(name=name, design=design, mechanism=new_mechanism(p, len(seqs), mech_a))


_D2_COLUMNS = [
    "2433", "1422", "2311", "3411", "3122", "4133", "3244", "2144",
    "1234", "1234", "1342", "2413", "4321", "4321", "4213", "3142",
]

_D4_COLUMNS = (
    ["2344", "2433", "2311", "3411", "4322", "4211",
     "2314", "3412", "3421", "4213", "4231", "3241"]
    + ["3122", "4133", "2144", "1243", "1432", "1324"] * 2
)

_D6_COLUMNS = [
    "12344", "25411", "41355", "42533", "31522",
    "23451", "12435", "23514", "15324", "14325",
    "34152", "25134", "45132", "54213", "54213",
    "52143", "53241", "31245", "43521", "31452",
]

_D8_COLUMNS = ["13221", "23112", "32113", "31223", "12332", "21331"] * 5

_D9_COLUMNS = ["122121", "211212"] + ["122211", "211122"] * 6


FIXTURES: dict[str, Fixture] = {
    f.name: f
    for f in (
        _fixture("d2", 4, 4, _D2_COLUMNS, (0.0, 0.0, 0.5, 0.5)),
        _fixture("d4", 4, 4, _D4_COLUMNS, (0.0, 1 / 10, 2 / 5, 1 / 2)),
        _fixture("d6", 5, 5, _D6_COLUMNS, (0.0, 1 / 20, 3 / 20, 1 / 5, 3 / 5)),
        _fixture("d8", 5, 3, _D8_COLUMNS, (0.0, 0.0, 1 / 3, 1 / 3, 1 / 3)),
        _fixture("d9", 6, 2, _D9_COLUMNS, (0.0, 0.0, 0.0, 0.0, 2 / 5, 3 / 5)),
    )
}


def get_fixture(name: str) -> Fixture:
    try:
        return FIXTURES[name]
    except KeyError:
        raise ValidationError(
            f"unknown fixture {name!r}; available: {sorted(FIXTURES)}"
        ) from None
