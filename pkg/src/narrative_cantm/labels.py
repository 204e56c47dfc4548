"""The fixed seven-class label set shared by every module."""

CLASSES = ("Cons", "DPA", "LF", "MRE", "PE", "SEN", "AnimalVac")
N_CLASSES = len(CLASSES)
HUMAN_CLASSES = CLASSES[:6]

CLASS_INDEX = {c: i for i, c in enumerate(CLASSES)}
_FOLDED = {c.casefold(): c for c in CLASSES}


class UnknownLabelError(ValueError):
    pass


def normalize_label(value):
    """Map a raw label string to its canonical class id.

    Surrounding whitespace and case are ignored, so ``"mre "`` gives ``"MRE"``.
    Empty strings and None map to None.
    """
    if value is None:
        return None
    v = str(value).strip()
    if not v:
        return None
    try:
        return _FOLDED[v.casefold()]
    except KeyError:
        raise UnknownLabelError(f"unknown label {value!r}; expected one of {', '.join(CLASSES)}") from None


def label_index(label):
    return CLASS_INDEX[label]
