"""Reports - pass/fail value object shared by every condition checker"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional


@dataclass
class ConditionReport:
    """
    One checked condition

    holds is derived from the margin: margin >= -tol. The witness is the
    type where the worst margin was attained; cutoff or segment locates the
    scheme piece the condition was evaluated on.
    """
    id: str
    holds: bool
    margin: float
    witness: Optional[float]
    cutoff: Optional[float] = None
    segment: Optional[int] = None
    note: str = ""
    details: Dict = field(default_factory=dict)
    sub_reports: List["ConditionReport"] = field(default_factory=list)

    @classmethod
    def from_margin(cls, id: str, margin: float, witness: Optional[float], tol: float,
                    **kwargs) -> "ConditionReport":
        margin = float(margin)
        return cls(id=id, holds=bool(margin >= -tol), margin=margin,
                   witness=None if witness is None else float(witness), **kwargs)

    @classmethod
    def vacuous(cls, id: str, witness: Optional[float] = None, note: str = "vacuous", **kwargs):
        return cls(id=id, holds=True, margin=0.0, witness=witness, note=note, **kwargs)

    def sub(self, id: str) -> Optional["ConditionReport"]:
        return next((r for r in self.sub_reports if r.id == id), None)

    def to_dict(self) -> Dict:
        out = {
            "id": self.id,
            "holds": self.holds,
            "margin": self.margin,
            "witness": self.witness,
            "cutoff": self.cutoff,
        }
        if self.segment is not None:
            out["segment"] = self.segment
        if self.note:
            out["note"] = self.note
        if self.details:
            out["details"] = self.details
        if self.sub_reports:
            out["sub_reports"] = [r.to_dict() for r in self.sub_reports]
        return out

    def to_row(self) -> Dict:
        """Flat row for the conditions CSV table"""
        return {"id": self.id, "holds": self.holds, "margin": self.margin, "witness": self.witness}
