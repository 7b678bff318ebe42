"""Seeded synthetic stand-in for the private student register.

Emits a register CSV, an opt-in survey extract with configurable selection
bias, screened-out metadata, a given-name reference table and a ground-truth
file.  The generator is the oracle for end-to-end verification: every
membership triple it plants is admissible, the parental indicator follows a
known logistic model inside the born-Italian/citizen-Italian stratum, and
survey participation is drawn with known level offsets so the sample is
biased on purpose.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InfeasibleConfig
from .ingest import (
    AdminRecord,
    NameFrequencyTable,
    SurveyRecord,
    is_common_name,
    write_admin_csv,
    write_name_table,
    write_survey_csv,
)

# encoded column order of the generating model (matches the feature module)
SIGNAL_COLUMNS = [
    "gender=M",
    "employment=worker_student",
    "employment=student_worker",
    "employment=not_available",
    "course_level=master",
    "course_level=bachelor_and_master",
    "common_italian_name",
    "years_enrolled",
    "ects_earned",
]

_COMMON_NAMES = [
    "maria", "giuseppe", "francesca", "giovanni", "anna", "antonio", "rosa",
    "luigi", "angela", "vincenzo", "giuseppina", "pietro", "teresa", "salvatore",
    "lucia", "carlo", "carmela", "franco", "caterina", "francesco", "paola",
    "mario", "laura", "luca", "elena", "marco", "sara", "andrea", "chiara",
    "alessandro", "valentina", "davide", "silvia", "matteo", "federica",
    "simone", "alessia", "stefano", "martina", "fabio", "elisa", "riccardo",
    "giulia", "lorenzo", "roberta", "paolo", "ilaria", "daniele", "claudia",
    "nicola", "monica", "massimo", "cristina", "enrico", "serena", "giorgio",
]

_RARE_LISTED_NAMES = [
    "ermenegildo", "clotilde", "bonifacio", "tecla", "eustachio", "brigida",
    "anselmo", "prisca", "callisto", "romilda",
]

_RARE_UNLISTED_NAMES = [
    "amira", "tariq", "mei", "dragan", "yusuf", "ionela", "kofi", "svetlana",
    "rajesh", "fatima", "chen", "olena", "samir", "ngozi", "andrei", "aisha",
    "minh", "bogdan", "leila", "tenzin",
]


@dataclass
class SynthConfig:
    """All knobs of the generator; defaults shaped like the published tabulations."""

    n_register: int = 36_382
    # percent shares of kinds 0..4 in the register
    kind_shares: tuple = (84.91, 7.77, 0.36, 1.82, 5.14)
    male_share: float = 36.0
    department_shares: dict = field(default_factory=lambda: {
        "economics": 18.0, "law": 10.0, "medicine": 14.0,
        "science": 33.0, "sociology": 25.0,
    })
    course_shares: dict = field(default_factory=lambda: {
        "bachelor": 69.47, "master": 15.41, "bachelor_and_master": 15.12,
    })
    employment_shares: dict = field(default_factory=lambda: {
        "student": 71.55, "student_worker": 17.67,
        "worker_student": 10.22, "not_available": 0.56,
    })
    common_name_share_native: float = 93.2   # bp=cit=1 stratum
    common_name_share_migrant: float = 20.0  # everyone else
    years_mean: float = 2.838
    years_sd: float = 2.284
    years_max: int = 24
    ects_mean: float = 31.483
    ects_sd: float = 21.082
    ects_max: int = 113
    # generating logistic model for P(pa=0 | x) inside the (1,1) stratum;
    # intercept is calibrated so the kind-1 share comes out right
    signal: dict = field(default_factory=lambda: {
        "gender=M": 0.25,
        "employment=worker_student": 0.30,
        "employment=student_worker": 0.15,
        "employment=not_available": 0.0,
        "course_level=master": 0.25,
        "course_level=bachelor_and_master": 0.20,
        "common_italian_name": -3.70,
        "years_enrolled": 0.25,
        "ects_earned": -0.15,
    })
    # opt-in propensity log-odds offsets by level; drives the selection bias
    response_offsets: dict = field(default_factory=lambda: {
        "gender": {"M": -0.58},
        "department": {"science": 0.35, "economics": -0.30},
    })
    n_survey_native: int = 312   # eligible respondents with bp=cit=1 (kind 1)
    n_survey_migrant: int = 382  # eligible respondents from kinds 2..4
    n_screened_out: int = 402    # kind-0 opt-ins turned away by the screener
    seed: int = 3

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SynthConfig":
        payload = json.loads(text)
        cfg = cls(**payload)
        cfg.kind_shares = tuple(cfg.kind_shares)
        return cfg

    def validate(self):
        if self.n_register < 100:
            raise InfeasibleConfig("n_register must be >= 100")
        for name, shares in [
            ("kind_shares", list(self.kind_shares)),
            ("department_shares", list(self.department_shares.values())),
            ("course_shares", list(self.course_shares.values())),
            ("employment_shares", list(self.employment_shares.values())),
        ]:
            if abs(sum(shares) - 100.0) > 0.01:
                raise InfeasibleConfig(f"{name} must sum to 100, got {sum(shares)}")


@dataclass
class SyntheticBundle:
    admin_path: Path
    survey_path: Path
    screened_out_path: Path
    name_table_path: Path
    truth_path: Path
    meta_path: Path


def _draw_levels(rng, shares: dict, n: int) -> np.ndarray:
    levels = list(shares)
    p = np.array([shares[l] for l in levels], dtype=float) / 100.0
    p = p / p.sum()
    idx = rng.choice(len(levels), size=n, p=p)
    return np.array(levels, dtype=object)[idx]


def _encode_design(gender, employment, course, common, years, ects, cfg) -> np.ndarray:
    """Design matrix in SIGNAL_COLUMNS order, numerics z-scored by config moments."""
    cols = [
        (gender == "M").astype(float),
        (employment == "worker_student").astype(float),
        (employment == "student_worker").astype(float),
        (employment == "not_available").astype(float),
        (course == "master").astype(float),
        (course == "bachelor_and_master").astype(float),
        common.astype(float),
        (years - cfg.years_mean) / cfg.years_sd,
        (ects - cfg.ects_mean) / cfg.ects_sd,
    ]
    return np.column_stack(cols)


def _calibrate_intercept(eta_slope: np.ndarray, target: float) -> float:
    """Bisection for b0 with mean(sigmoid(b0 + eta_slope)) = target."""
    lo, hi = -20.0, 20.0
    for _ in range(80):
        mid = (lo + hi) / 2.0
        if np.mean(1.0 / (1.0 + np.exp(-(mid + eta_slope)))) < target:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


def _weighted_sample(rng, pool: np.ndarray, weights: np.ndarray, size: int) -> np.ndarray:
    if size > len(pool):
        raise InfeasibleConfig(
            f"cannot sample {size} from a pool of {len(pool)}"
        )
    p = weights / weights.sum()
    return rng.choice(pool, size=size, replace=False, p=p)


def generate(config: SynthConfig, out_dir, *, seed: int | None = None) -> SyntheticBundle:
    """Generate the full bundle under out_dir; same config+seed => identical bytes."""
    config.validate()
    if seed is None:
        seed = config.seed
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n = config.n_register

    # membership skeleton: kinds 2..4 drawn directly, kinds 0/1 start as one
    # native stratum whose pa follows the generating logistic model
    shares = np.array(config.kind_shares, dtype=float) / 100.0
    group_p = np.array([shares[0] + shares[1], shares[2], shares[3], shares[4]])
    group = rng.choice(4, size=n, p=group_p / group_p.sum())
    native = group == 0  # bp = cit = 1

    gender = _draw_levels(rng, {"M": config.male_share, "F": 100 - config.male_share}, n)
    department = _draw_levels(rng, config.department_shares, n)
    course = _draw_levels(rng, config.course_shares, n)
    employment = _draw_levels(rng, config.employment_shares, n)
    years = np.minimum(
        rng.geometric(p=1.0 / config.years_mean, size=n), config.years_max
    )
    ects = np.clip(
        np.rint(rng.normal(config.ects_mean, config.ects_sd, size=n)),
        0, config.ects_max,
    ).astype(int)
    p_common = np.where(
        native, config.common_name_share_native, config.common_name_share_migrant
    ) / 100.0
    common = rng.random(n) < p_common

    X = _encode_design(gender, employment, course, common, years, ects, config)
    beta = np.array([config.signal[c] for c in SIGNAL_COLUMNS])
    eta_slope = X @ beta
    target_pa0 = shares[1] / (shares[0] + shares[1])
    intercept = _calibrate_intercept(eta_slope[native], target_pa0)
    p_pa0 = 1.0 / (1.0 + np.exp(-(intercept + eta_slope)))

    pa = np.zeros(n, dtype=int)
    pa[native] = (rng.random(native.sum()) >= p_pa0[native]).astype(int)

    kind = np.empty(n, dtype=int)
    kind[native] = np.where(pa[native] == 1, 0, 1)
    kind[group == 1] = 2
    kind[group == 2] = 3
    kind[group == 3] = 4

    bp = np.where(np.isin(kind, [0, 1, 2]), 1, 0)
    cit = np.where(np.isin(kind, [0, 1, 3]), 1, 0)

    # given names consistent with the common-name flag and the reference table
    names = np.empty(n, dtype=object)
    common_pool = np.array(_COMMON_NAMES, dtype=object)
    rare_pool = np.array(_RARE_LISTED_NAMES + _RARE_UNLISTED_NAMES, dtype=object)
    names[common] = rng.choice(common_pool, size=int(common.sum()))
    names[~common] = rng.choice(rare_pool, size=int((~common).sum()))

    admin = []
    for i in range(n):
        admin.append(AdminRecord(
            link_key=f"S{i:06d}",
            given_name=str(names[i]),
            gender=str(gender[i]),
            birth_country="IT" if bp[i] else "XX",
            citizenship_country="IT" if cit[i] else "XX",
            course_level=str(course[i]),
            department=str(department[i]),
            enrollment_year=2022 - int(years[i]),
            years_enrolled=int(years[i]),
            ects_earned=int(ects[i]),
            employment=str(employment[i]),
        ))

    # opt-in selection with known level offsets; exact counts per stratum
    offsets = np.zeros(n)
    for var, table in config.response_offsets.items():
        values = {"gender": gender, "department": department,
                  "course_level": course, "employment": employment}[var]
        for level, off in table.items():
            offsets += np.where(values == level, off, 0.0)
    weights = np.exp(offsets)

    idx = np.arange(n)
    respondents_native = _weighted_sample(
        rng, idx[kind == 1], weights[kind == 1], config.n_survey_native)
    respondents_migrant = _weighted_sample(
        rng, idx[kind >= 2], weights[kind >= 2], config.n_survey_migrant)
    screened = _weighted_sample(
        rng, idx[kind == 0], weights[kind == 0], config.n_screened_out)

    responded = np.zeros(n, dtype=bool)
    survey_rows = []
    for i in sorted(np.concatenate([respondents_native, respondents_migrant])):
        responded[i] = True
        survey_rows.append(SurveyRecord(
            link_key=admin[i].link_key, eligible=True, pa_observed=int(pa[i])))
    screened_rows = []
    for i in sorted(screened):
        responded[i] = True
        screened_rows.append(SurveyRecord(
            link_key=admin[i].link_key, eligible=False, pa_observed=1))

    name_counts = {}
    for j, nm in enumerate(_COMMON_NAMES):
        name_counts[nm] = 120 + 37 * j  # all comfortably above the commonness cutoff
    for j, nm in enumerate(_RARE_LISTED_NAMES):
        name_counts[nm] = 1 + (j % 4)   # listed but below the cutoff
    table = NameFrequencyTable(name_counts)

    bundle = SyntheticBundle(
        admin_path=out_dir / "admin.csv",
        survey_path=out_dir / "survey.csv",
        screened_out_path=out_dir / "screened_out.csv",
        name_table_path=out_dir / "names.csv",
        truth_path=out_dir / "truth.csv",
        meta_path=out_dir / "synth_meta.json",
    )
    write_admin_csv(bundle.admin_path, admin)
    write_survey_csv(bundle.survey_path, survey_rows)
    write_survey_csv(bundle.screened_out_path, screened_rows)
    write_name_table(bundle.name_table_path, table)
    with open(bundle.truth_path, "w", encoding="utf-8") as f:
        f.write("link_key,pa,kind,responded\n")
        for i in range(n):
            f.write(f"{admin[i].link_key},{pa[i]},{kind[i]},{int(responded[i])}\n")
    meta = {
        "seed": seed,
        "config": json.loads(config.to_json()),
        "true_model": {
            "intercept": intercept,
            "columns": SIGNAL_COLUMNS,
            "coefficients": beta.tolist(),
        },
        "counts": {
            "register": n,
            "per_kind": np.bincount(kind, minlength=5).tolist(),
            "survey": len(survey_rows),
            "screened_out": len(screened_rows),
        },
    }
    with open(bundle.meta_path, "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
    return bundle


def generating_design(
    records: list[AdminRecord],
    table: NameFrequencyTable,
    config: SynthConfig,
) -> np.ndarray:
    """Re-encode admin records exactly as the generating model saw them."""
    gender = np.array([r.gender for r in records], dtype=object)
    employment = np.array([r.employment for r in records], dtype=object)
    course = np.array([r.course_level for r in records], dtype=object)
    common = np.array([is_common_name(r.given_name, table) for r in records])
    years = np.array([r.years_enrolled for r in records], dtype=float)
    ects = np.array([r.ects_earned for r in records], dtype=float)
    return _encode_design(gender, employment, course, common, years, ects, config)


def load_truth(path) -> dict:
    """truth.csv -> link_key: {pa, kind, responded}."""
    out = {}
    with open(path, encoding="utf-8") as f:
        header = f.readline()
        assert header.strip() == "link_key,pa,kind,responded"
        for line in f:
            key, pa, kind, responded = line.strip().split(",")
            out[key] = {"pa": int(pa), "kind": int(kind), "responded": bool(int(responded))}
    return out
