"""EstimateReport: measured constants and one verdict row per inequality."""
import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .. import SCHEMA

# every inequality checked by the pipeline, in proof order
INEQUALITIES = (
    "alexandrov",         # |du(B)| = mu(B) on the discrete solution
    "det_T",              # omega_n / |Z| <= det T <= n^n omega_n / |Z|
    "norms",              # ||T* T|| = ||T*|| ||T||
    "vnor",               # v = (det T)^{2/n} (u - l_x - t)
    "MAbdry",             # v = 0 on the boundary of Z
    "eq_Alex",            # c1 <= |inf_Z v| <= c2
    "secprop_i",          # S(x, 2 rho) inside 3U/4
    "secprop_ii",         # tau S(x,t) in S(x, tau t) in beta S(x,t)
    "secprop_iii",        # engulfing with theta
    "secprop_iv",         # sections shrink to the center
    "dilation_chain",     # S(x,t) in S(x,2t) in 2S(x,t)
    "covering",           # overlap <= K |log eps|
    "maximalineq",        # int_{F >= a} F <= C' a |{M >= C'' a}|
    "hessmean",           # ||T|| ||T*|| / (det T)^{2/n} >= C1 mean F
    "v1",                 # transformation law of D2v
    "v2",                 # osc of v on T(S(x, 2t))
    "v3",                 # sup |grad v| on T(S(x,t))
    "v4",                 # omega_n <= |T(S)|, perimeter <= c(n)
    "v5",                 # ||D2v|| <= Laplacian of v
    "normalize_2S",       # B(0,1) in T(S(x,2t)) in B(0,3n)
    "divergence",         # int Laplacian v = boundary flux
    "hesssupermean",      # ||D2u|| >= C3 size on A(x,t)
    "A",                  # |A cap S(x,(1-eps)t)| >= C2 |S(x,t)|
    "abp_chain",          # (c1/2)^n <= C(n) Lam |E|
    "envelope",           # 0 <= D2 Gamma <= D2 w on E
    "levelsets",          # |{M >= g}| <= C4 |{F >= C5 g}|
    "levelsets_replay",   # covering chain behind levelsets
    "keyestimate",        # int_{F >= g} F <= c' g |{F >= c'' g}|
    "main",               # I_{k+1}(U/2) <= C(k) I_k(3U/4)
    "layer_cake",         # Fubini rewrite of I_{k+1}
    "comp",               # B(x,r1) in S(x,rho) in B(x,r2), T bounds
    "reg_reduction",      # I_k(Omega') <= assembled bound
)

CSV_FIELDS = ("schema", "instance_id", "inequality_id", "lhs", "rhs", "constant",
              "verdict")


def _num(x):
    if x is None:
        return None
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, str):
        return x
    if isinstance(x, dict):
        return {str(k): _num(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_num(v) for v in x]
    x = float(x)
    return x if np.isfinite(x) else (None if np.isnan(x) else
                                     ("inf" if x > 0 else "-inf"))


def _fmt(x):
    """Locale free text with enough digits to round-trip."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "pass" if x else "fail"
    if isinstance(x, str):
        return x
    return repr(float(x))


@dataclass
class EstimateReport:
    instance_id: str
    constants: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    integrals: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def add(self, inequality, lhs, rhs, constant, verdict, **extra):
        if inequality.split(":")[0] not in INEQUALITIES:
            raise KeyError(f"unknown inequality id {inequality!r}")
        self.rows.append({"inequality_id": inequality, "lhs": lhs, "rhs": rhs,
                          "constant": constant, "verdict": bool(verdict),
                          **extra})

    def verdict(self, inequality):
        """All rows of an id (or of ``id:suffix``) pass."""
        rows = [r for r in self.rows
                if r["inequality_id"].split(":")[0] == inequality]
        return bool(rows) and all(r["verdict"] for r in rows)

    @property
    def passed(self):
        return all(r["verdict"] for r in self.rows)

    def failures(self):
        return [r["inequality_id"] for r in self.rows if not r["verdict"]]

    def to_json(self):
        return {
            "schema": SCHEMA,
            "instance_id": self.instance_id,
            "constants": {k: _num(v) for k, v in self.constants.items()},
            "integrals": {k: _num(v) for k, v in self.integrals.items()},
            "rows": [{k: _num(v) for k, v in r.items()} for r in self.rows],
            "info": self.info,
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, doc):
        if doc.get("schema") != SCHEMA:
            from ..errors import MixedSchema
            raise MixedSchema(f"report schema {doc.get('schema')!r}, "
                              f"expected {SCHEMA!r}")
        def val(v):
            return float(v) if v in ("inf", "-inf") else v
        rep = cls(doc["instance_id"],
                  {k: val(v) for k, v in doc.get("constants", {}).items()},
                  [dict(r) for r in doc.get("rows", [])],
                  {k: val(v) for k, v in doc.get("integrals", {}).items()},
                  doc.get("info", {}))
        return rep

    def csv_rows(self):
        return [(SCHEMA, self.instance_id, r["inequality_id"], _fmt(r["lhs"]),
                 _fmt(r["rhs"]), _fmt(r["constant"]), _fmt(r["verdict"]))
                for r in self.rows]

    def to_csv(self, header=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(CSV_FIELDS)
        w.writerows(self.csv_rows())
        return buf.getvalue()
