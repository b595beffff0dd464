"""Synthetic CAP-shaped corpora for tests, demos and calibration runs.

Class frequencies follow the pooled per-class supports observed over 30
samples of 50 Supreme Court summaries (1,500 items), so rare classes are
about 2% of the data and Law and Crime about 28%.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .sampling import apportion
from .taxonomy import LabelScheme, default_scheme

CAP_SUPPORT = {
    "Energy": 29, "Immigration": 30, "Law and Crime": 415, "Agriculture": 29,
    "Civil Rights": 204, "Housing": 30, "Education": 30, "Environment": 30,
    "Domestic Commerce": 177, "Labor": 119, "Social Welfare": 27,
    "Technology": 30, "Transportation": 60, "International Affairs": 28,
    "Public Lands": 26, "Culture": 29, "Defense": 29, "Health": 30,
    "Macroeconomics": 30, "Government Operations": 88, "Foreign Trade": 30,
}

_TOPICS = {
    "Macroeconomics": ["a federal income tax assessment", "the deductibility of business losses",
                       "an estate tax deficiency", "the federal budget process"],
    "Civil Rights": ["racial discrimination in jury selection", "a free speech claim by a protester",
                     "voting rights of minority citizens", "gender discrimination in hiring"],
    "Health": ["Medicaid reimbursement rates", "regulation of prescription drugs",
               "a hospital licensing dispute", "abortion clinic regulations"],
    "Agriculture": ["federal crop subsidies", "a milk marketing order",
                    "inspection of meat processing plants", "pesticide labeling for farmers"],
    "Labor": ["a union organizing election", "overtime pay under federal wage law",
              "a collective bargaining agreement", "workplace safety citations"],
    "Education": ["public school desegregation", "funding of parochial schools",
                  "student discipline procedures", "university admissions policy"],
    "Environment": ["hazardous waste cleanup liability", "Clean Water Act permits",
                    "air pollution emission standards", "protection of wetlands"],
    "Energy": ["natural gas pipeline rates", "nuclear plant licensing",
               "oil and gas leases", "electric utility rate setting"],
    "Immigration": ["deportation of a lawful resident", "asylum eligibility",
                    "naturalization requirements", "detention of noncitizens"],
    "Transportation": ["railroad rate regulation", "trucking licenses",
                       "airline safety rules", "maritime shipping liability"],
    "Law and Crime": ["a warrantless search of an automobile", "the admissibility of a confession",
                      "sentencing for a drug offense", "a habeas corpus petition"],
    "Social Welfare": ["eligibility for disability benefits", "food stamp program rules",
                       "termination of welfare payments", "social security survivor benefits"],
    "Housing": ["a public housing eviction", "fair housing advertising",
                "federal mortgage insurance", "urban renewal relocation"],
    "Domestic Commerce": ["a securities fraud claim", "a bankruptcy discharge",
                          "a patent infringement suit", "an antitrust merger challenge"],
    "Defense": ["a military court martial", "veterans reemployment rights",
                "a defense procurement contract", "selective service registration"],
    "Technology": ["broadcast licensing by the FCC", "cable television regulation",
                   "telephone network access charges", "internet content restrictions"],
    "Foreign Trade": ["customs duties on imported goods", "export control violations",
                      "antidumping duties", "tariff classification of textiles"],
    "International Affairs": ["a treaty with a foreign nation", "sovereign immunity of a foreign state",
                              "extradition of a foreign national", "claims against a foreign government"],
    "Government Operations": ["campaign finance limits", "the removal power over federal officers",
                              "federal employee pay disputes", "census apportionment"],
    "Public Lands": ["water rights in a western river", "Indian tribal land claims",
                     "grazing permits on federal land", "national park boundaries"],
    "Culture": ["copyright in a motion picture", "regulation of professional sports",
                "funding for the arts", "a broadcast of a live performance"],
}

_OUTCOMES = ["affirmed", "reversed", "vacated", "remanded"]
_COURTS = ["Court of Appeals", "District Court", "state supreme court", "Tax Court"]


def cap_weights(scheme: LabelScheme | None = None) -> dict[str, int]:
    scheme = scheme or default_scheme()
    return {name: CAP_SUPPORT.get(name, 1) for name in scheme.major_names}


def _summary(rng, name, docket):
    topic = _TOPICS.get(name, [f"a dispute concerning {name.lower()}"])
    phrase = topic[rng.integers(len(topic))]
    outcome = _OUTCOMES[rng.integers(len(_OUTCOMES))]
    court = _COURTS[rng.integers(len(_COURTS))]
    text = (f"Docket {docket} concerned {phrase}. "
            f"The Supreme Court {outcome} the judgment of the {court}.")
    if rng.random() < 0.5:
        text += " Several amici filed briefs on the question presented."
    return text


def generate_rows(n_records: int, seed: int = 0, scheme: LabelScheme | None = None,
                  weights: dict | None = None, min_per_class: int = 0,
                  dirty: int = 0) -> list[dict]:
    """Rows ``{id, summary, major, sub}`` with CAP-shaped class counts.

    Class counts are the largest-remainder apportionment of the records left
    after giving every class ``min_per_class``. ``dirty`` appends that many
    extra rows violating the preprocessing rules (missing values, one
    sentence summaries, duplicated summaries) in rotation.
    """
    scheme = scheme or default_scheme()
    weights = weights or cap_weights(scheme)
    rng = np.random.default_rng(seed)
    floor_total = min_per_class * len(weights)
    if floor_total > n_records:
        raise ValueError("min_per_class too large for n_records")
    alloc = apportion(weights, n_records - floor_total)
    labels = []
    for name in sorted(weights):
        labels += [name] * (alloc[name] + min_per_class)
    labels = [labels[i] for i in rng.permutation(len(labels))]

    rows = []
    for i, name in enumerate(labels):
        code = scheme.code_of(name)
        rows.append({"id": f"case-{i:05d}", "summary": _summary(rng, name, 1000 + i),
                     "major": str(code), "sub": ""})

    for j in range(dirty):
        kind = j % 3
        base = rows[j % len(rows)]
        rid = f"dirty-{j:04d}"
        if kind == 0:
            rows.append({"id": rid, "summary": "", "major": base["major"], "sub": ""})
        elif kind == 1:
            rows.append({"id": rid, "summary": "Appeal denied.", "major": base["major"], "sub": ""})
        else:
            rows.append({"id": rid, "summary": base["summary"], "major": base["major"], "sub": ""})
    return rows


def write_csv(rows: list[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["id", "summary", "major", "sub"],
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path
