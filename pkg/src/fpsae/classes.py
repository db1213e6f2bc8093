from enum import IntEnum


class ClassLabel(IntEnum):
    """The four fingerprint classes; tented arches fold into A."""

    A = 1
    L = 2
    R = 3
    W = 4

    @classmethod
    def parse(cls, text: str) -> "ClassLabel":
        key = text.strip().upper()
        if key in ("T", "TA"):
            return cls.A
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown class label {text!r}") from None
