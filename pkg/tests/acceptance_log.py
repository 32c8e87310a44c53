"""Pass/fail registry for the acceptance criteria, printed at the end of the run."""
from contextlib import contextmanager

TITLES = {
    1: "ray-triangle intersection agrees with linear-solve oracle",
    2: "image-source identities hold",
    3: "free-space path loss at 40 GHz, 100 m",
    4: "VBS fidelity and build time",
    5: "coverage agrees with brute-force visibility",
    6: "VBS-BA mean SE at S=5 within 95% of exhaustive",
    7: "alignment ordering properties",
    8: "VBS-BA beats Loc-BA on NLoS drops",
    9: "HDBSCAN separation and permutation invariance",
    10: "pipeline is byte-for-byte deterministic",
}
RESULTS = {}


@contextmanager
def criterion(n: int, detail: str = ""):
    """Record PASS for criterion ``n`` if the block completes, FAIL otherwise."""
    RESULTS[n] = ("FAIL", detail)
    try:
        yield RESULTS
    except BaseException as exc:
        RESULTS[n] = ("FAIL", f"{RESULTS[n][1]} | {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
        raise
    RESULTS[n] = ("PASS", RESULTS[n][1])


def note(n: int, detail: str) -> None:
    RESULTS[n] = (RESULTS.get(n, ("FAIL", ""))[0], detail)


def summary_lines():
    out = []
    for n, title in TITLES.items():
        status, detail = RESULTS.get(n, ("FAIL", "not run"))
        out.append(f"[{status}] criterion {n}: {title}" + (f" ({detail})" if detail else ""))
    return out
