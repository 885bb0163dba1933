"""Acceptance: render every figure kind from real tool artifacts and check
that the ladder annotation reproduces the tool's fitted slope."""

from qgplots import ladder_errors, ladder_slope, read_table, render
from qgplots.render import render_ladder

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _verdict(num, name, ok, detail):
    print(f"[criterion {num:02d}] {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {num} ({name}): {detail}"


def test_criterion_12_figures_and_slope(tmp_path, sample_dir, flux_dir, bell_dir,
                                        bell_report):
    jobs = [
        ("density-histogram", sample_dir / "hist.csv"),
        ("trajectory-fan", sample_dir / "paths.csv"),
        ("residual", flux_dir / "ladder_residual.csv"),
        ("ladder", bell_dir / "ladder.csv"),
    ]
    rendered = 0
    for kind, src in jobs:
        out = tmp_path / f"{kind}.png"
        render(kind, read_table(src), out)
        if out.exists() and out.read_bytes()[:8] == PNG_MAGIC:
            rendered += 1

    table = read_table(bell_dir / "ladder.csv")
    slope = ladder_slope(*ladder_errors(table))
    fig = render_ladder(table)
    texts = [t.get_text() for ax in fig.axes for t in ax.texts]
    annotated = next(float(s.split()[1]) for s in texts if s.startswith("slope "))
    gap = abs(slope - bell_report["fitted_slope"])
    annotation_gap = abs(annotated - bell_report["fitted_slope"])
    ok = rendered == 4 and gap <= 1e-9 and annotation_gap <= 1e-9
    _verdict(12, "figure rendering", ok,
             f"{rendered}/4 kinds, slope gap {gap:.2e}, "
             f"annotation gap {annotation_gap:.2e}")
