from __future__ import annotations

import math
from dataclasses import asdict, dataclass

SIGNIFICANT_DIGITS = 12


def round_sig(value: float | None) -> float | None:
    """Round to the reporting precision; None and non-finite values map to None."""
    if value is None or not math.isfinite(value):
        return None
    return float(f"{value:.{SIGNIFICANT_DIGITS}g}")


@dataclass(frozen=True)
class AnalyticReport:
    """Closed-form decision probabilities and mean penalties for one system.

    Probabilities are per generated packet. ``p_correct_given_decision`` and
    ``p_incorrect_given_decision`` are conditioned on the packet not being
    missed. Penalty fields are None where no closed form exists.
    """

    model: str
    p_correct: float
    p_incorrect: float
    p_missed: float
    p_correct_given_decision: float
    p_incorrect_given_decision: float
    mean_pucd: float
    mean_puid: float
    mean_pumd: float | None
    total_pud: float | None
    missed_by_class: dict[str, float] | None = None

    def to_dict(self) -> dict:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, float):
                data[key] = round_sig(value)
        if self.missed_by_class is not None:
            data["missed_by_class"] = {
                k: round_sig(v) for k, v in self.missed_by_class.items()
            }
        return data
