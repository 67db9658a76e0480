"""Walk a synthetic stream through the two-tier memory, frame by frame.

Shows the fill/consolidate rhythm: the short-term buffer takes frames until
it is full, the next push triggers a merge of the buffered window down to a
handful of weighted frames, and those land in long-term memory. Weight is
conserved throughout, so the long-term store always accounts for every
frame it has absorbed.
"""

from mces import ConsolidationConfig, Pipeline, SyntheticSpec, iter_synthetic


def main() -> int:
    spec = SyntheticSpec(frame_count=72, n_tokens=4, dims=16,
                         segments=((32, 48, 0.9),), noise_scale=0.05)
    question, frames = iter_synthetic(spec)

    cfg = ConsolidationConfig()  # 16-frame buffer, 4-frame budget
    pipe = Pipeline(spec.n_tokens, spec.dims, cfg, question=question,
                    reinit_mode="none")

    print(f"stream: {spec.frame_count} frames of {spec.n_tokens}x{spec.dims},"
          f" planted segment [32, 48) at rho=0.9")
    print(f"buffer capacity {cfg.capacity}, strong budget {cfg.base_target},"
          f" weak budget scales by alpha={cfg.alpha}\n")

    for t, frame in enumerate(frames, start=1):
        before = len(pipe.long)
        report = pipe.step(frame)
        if report is not None:
            added = len(pipe.long) - before
            kind = "relevant" if report.relevant else "background"
            print(f"push {t:3d}: {report.input_count} buffered frames merged "
                  f"to {added} ({kind}, score {report.relevance:+.3f}); "
                  f"long-term now {len(pipe.long)} entries")

    before = len(pipe.long)
    report = pipe.flush()
    if report is not None:
        added = len(pipe.long) - before
        print(f"flush:    residue of {report.input_count} frames merged to {added}")

    total = pipe.long.total_weight()
    print(f"\nlong-term memory: {len(pipe.long)} entries carrying weight {total}")
    print(f"frames pushed:    {pipe.frames_pushed}")
    print("every pushed frame is accounted for:", total == pipe.frames_pushed)

    print("\nper-entry provenance:")
    for entry_id, entry in zip(pipe.long.position_ids, pipe.long.entries):
        spans = ", ".join(f"[{s}, {e})" for s, e, _ in entry.provenance)
        print(f"  entry {entry_id:2d}  weight {entry.weight:2d}  covers {spans}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
