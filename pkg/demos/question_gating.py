"""How the question decides a window's slot budget.

One window of sixteen frames, three questions. A question the window points
at gets the full budget, an unrelated question compresses the window down
to a single frame, and a score landing exactly on the threshold takes the
weak branch because the comparison is strict.
"""

import numpy as np

from mces import ConsolidationConfig, WeightedFrame, consolidate, relevance_score


def window_along(direction, count=16):
    tokens = np.tile(np.asarray(direction, dtype=np.float64), (2, 1))
    return [WeightedFrame.from_tokens(tokens, i) for i in range(count)]


def main() -> int:
    cfg = ConsolidationConfig()
    print(f"threshold sigma={cfg.sigma}, strong budget {cfg.base_target}, "
          f"alpha={cfg.alpha}\n")

    e0 = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
    e1 = np.array([0.0, 1.0, 0.0, 0.0, 0.0])

    cases = [
        ("aligned window", window_along(e0), e0),
        ("orthogonal window", window_along(e1), e0),
        # squared norm 16 makes the cosine against e0 exactly 1/4 in floats
        ("score exactly at sigma", window_along([1.0, 3.0, 2.0, 1.0, 1.0]), e0),
    ]

    for label, frames, question in cases:
        score = relevance_score(frames, question)
        out, report = consolidate(frames, question, cfg)
        branch = "strong" if report.relevant else "weak"
        print(f"{label:25s} score {score:+.4f} -> {branch} branch, "
              f"{len(out)} frame(s) kept")

    print("\nthe strict comparison matters: a score of sigma itself is not")
    print("'above sigma', so the boundary case compresses like background")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
