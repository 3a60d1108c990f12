"""
Evaluation Models
Scores, significance results and breakdown reports
"""

from typing import List, Optional

from pydantic import BaseModel, Field


class BleuScore(BaseModel):
    """Corpus BLEU with its components"""
    score: float = Field(..., ge=0.0, le=100.0, description="BLEU in [0, 100]")
    precisions: List[float] = Field(..., description="Clipped n-gram precisions p1..p4 in percent")
    brevity_penalty: float = Field(..., description="min(1, exp(1 - r/c))")
    sys_len: int = Field(..., description="Total hypothesis tokens")
    ref_len: int = Field(..., description="Total reference tokens")

    def __str__(self) -> str:
        precisions = "/".join(f"{p:.1f}" for p in self.precisions)
        return (
            f"BLEU = {self.score:.2f} {precisions} "
            f"(BP={self.brevity_penalty:.3f} hyp_len={self.sys_len} ref_len={self.ref_len})"
        )


class SignificanceResult(BaseModel):
    """Paired bootstrap comparison of system B against system A"""
    p_value: float = Field(..., ge=0.0, le=1.0, description="Fraction of resamples where B does not beat A")
    resamples: int = Field(..., description="Number of bootstrap resamples")
    wins: int = Field(..., description="Resamples where B scored strictly higher")
    ties: int = Field(..., description="Resamples with equal scores (counted against B)")
    delta_mean: float = Field(..., description="Mean of B - A over resamples")
    delta_std: float = Field(..., description="Standard deviation of B - A")
    delta_low: float = Field(..., description="2.5th percentile of B - A")
    delta_high: float = Field(..., description="97.5th percentile of B - A")

    @property
    def marker(self) -> str:
        return significance_marker(self.p_value)


def significance_marker(p_value: Optional[float]) -> str:
    """'**' for p < 0.01, '*' for p < 0.05, '' otherwise"""
    if p_value is None:
        return ""
    if p_value < 0.01:
        return "**"
    if p_value < 0.05:
        return "*"
    return ""


class ConstructRule(BaseModel):
    """One line of the construct rule file"""
    subset: str = Field(..., description="Subset name (conj, pp, questions, ...)")
    pattern: str = Field(..., description="Tag substring, or the whole tag when exact")
    exact: bool = Field(False, description="Match the whole tag instead of a substring")

    def matches(self, tag: str) -> bool:
        return tag == self.pattern if self.exact else self.pattern in tag


class TagAccuracy(BaseModel):
    """Supertag prediction accuracy against reference tags"""
    accuracy: Optional[float] = Field(
        None, description="Token accuracy (%) over length-matched sentences; None when none match"
    )
    match_rate: float = Field(..., description="Fraction of sentences whose tag counts match")
    matched_sentences: int = Field(..., description="Sentences with matching tag counts")
    sentences: int = Field(..., description="Sentences compared")
    tokens: int = Field(0, description="Tags compared in matched sentences")


class SubsetScore(BaseModel):
    """BLEU of both systems on one subset of sentences"""
    name: str
    kind: str = Field(..., description="construct, length or corpus")
    count: int = Field(..., description="Sentences in the subset")
    system_bleu: float
    baseline_bleu: Optional[float] = None
    delta: Optional[float] = None
    relative_delta: Optional[float] = Field(None, description="delta / baseline BLEU")
    p_value: Optional[float] = None

    @property
    def marker(self) -> str:
        return significance_marker(self.p_value)


class EvaluationReport(BaseModel):
    """Corpus score, significance and per-subset breakdown"""
    system: BleuScore
    baseline: Optional[BleuScore] = None
    delta: Optional[float] = None
    significance: Optional[SignificanceResult] = None
    subsets: List[SubsetScore] = Field(default_factory=list)
    tag_accuracy: Optional[TagAccuracy] = None
