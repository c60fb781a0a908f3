"""Central-difference gradient oracle for recorded tapes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import PRIMITIVES, Tape, backward


@dataclass
class LeafCheck:
    leaf_id: int
    name: str | None
    shape: tuple[int, ...]
    max_rel_error: float
    checked: int
    skipped: int
    passed: bool


@dataclass
class GradCheckReport:
    tolerance: float
    leaves: list[LeafCheck] = field(default_factory=list)
    failing_primitives: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.leaves)

    @property
    def max_rel_error(self) -> float:
        return max((c.max_rel_error for c in self.leaves), default=0.0)

    def summary(self) -> str:
        lines = []
        for c in self.leaves:
            label = c.name or f"leaf#{c.leaf_id}"
            verdict = "ok" if c.passed else "FAIL"
            lines.append(
                f"{verdict:4s} {label:24s} shape={c.shape} rel_err={c.max_rel_error:.2e} "
                f"checked={c.checked} skipped={c.skipped}"
            )
        if self.failing_primitives:
            lines.append("suspect primitives: " + ", ".join(self.failing_primitives))
        return "\n".join(lines)


def _kink_signature(tape: Tape) -> bytes:
    # sign pattern at every non-smooth primitive; a change means the probe
    # stepped across a kink and the difference quotient is meaningless
    parts = []
    for rec in tape.records:
        if not PRIMITIVES[rec.op].smooth:
            x = tape.values[rec.inputs[0]].data
            parts.append(np.sign(x).astype(np.int8).tobytes())
    return b"".join(parts)


NOISE_FLOOR = 1e-6


def _rel_error(a: np.ndarray, n: np.ndarray) -> float:
    # below NOISE_FLOOR both gradients are finite-difference roundoff, so the
    # comparison becomes absolute there instead of dividing noise by noise
    scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(n), initial=0.0)), NOISE_FLOOR)
    return float(np.max(np.abs(a - n), initial=0.0)) / scale


def gradient_check(tape: Tape, tolerance: float = 1e-4, step: float = 1e-4, seed: int = 0,
                   max_elements: int | None = 64) -> GradCheckReport:
    """Compare reverse-mode gradients of ``tape`` with central differences.

    The tape is replayed in float64 and reduced to a scalar by a fixed random
    projection of its output. Each differentiable leaf is probed on up to
    ``max_elements`` entries (all of them when ``None``). Probes that cross a
    kink of ``relu``/``abs`` are skipped. When some leaf fails, every recorded
    primitive is checked in isolation and the failing kinds are listed.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    rng = np.random.default_rng(seed)
    base = tape.replay(dtype=np.float64)
    out = base.output
    proj = rng.standard_normal(out.shape)
    grads = backward(base, proj)
    base_sig = _kink_signature(base)
    leaf_values = {lid: t.data for lid, t in base.leaves.items()}

    def objective(lid: int, flat_idx: int, delta: float):
        arr = np.array(leaf_values[lid], dtype=np.float64)
        arr.reshape(-1)[flat_idx] += delta
        t = tape.replay({lid: arr}, dtype=np.float64)
        return float(np.sum(t.output.data * proj)), _kink_signature(t)

    report = GradCheckReport(tolerance=tolerance)
    for lid, leaf in base.leaves.items():
        if not leaf.requires_grad:
            continue
        size = leaf.size
        if max_elements is not None and size > max_elements:
            idx = rng.choice(size, max_elements, replace=False)
        else:
            idx = np.arange(size)
        analytic, numeric = [], []
        skipped = 0
        ga = grads[lid].data.reshape(-1)
        for k in idx:
            fp, sp = objective(lid, int(k), step)
            fm, sm = objective(lid, int(k), -step)
            if sp != base_sig or sm != base_sig:
                skipped += 1
                continue
            analytic.append(ga[k])
            numeric.append((fp - fm) / (2 * step))
        err = _rel_error(np.asarray(analytic), np.asarray(numeric)) if analytic else 0.0
        report.leaves.append(LeafCheck(
            lid, leaf.name, leaf.shape, err, len(analytic), skipped, err <= tolerance,
        ))
    if not report.passed:
        report.failing_primitives = _local_checks(base, tolerance, step, rng)
    return report


def _local_checks(tape: Tape, tolerance: float, step: float, rng, probes: int = 8) -> list[str]:
    """Check each primitive's adjoint at its recorded inputs."""
    bad: list[str] = []
    for rec in tape.records:
        if rec.op in bad:
            continue
        prim = PRIMITIVES[rec.op]
        xs = [np.array(tape.values[i].data, dtype=np.float64) for i in rec.inputs]
        out, saved = prim.forward(rec.attrs, *xs)
        proj = rng.standard_normal(out.shape)
        gs = prim.backward(rec.attrs, saved, proj, *xs)
        for pos, (x, g) in enumerate(zip(xs, gs)):
            if g is None or not tape.values[rec.inputs[pos]].requires_grad:
                continue
            idx = rng.choice(x.size, min(probes, x.size), replace=False)
            a, n = [], []
            for k in idx:
                vals = []
                for d in (step, -step):
                    xp = [v.copy() for v in xs]
                    xp[pos].reshape(-1)[k] += d
                    vals.append(float(np.sum(prim.forward(rec.attrs, *xp)[0] * proj)))
                if not prim.smooth and abs(x.reshape(-1)[k]) <= step:
                    continue
                a.append(g.reshape(-1)[k])
                n.append((vals[0] - vals[1]) / (2 * step))
            if a and _rel_error(np.asarray(a), np.asarray(n)) > tolerance:
                bad.append(rec.op)
                break
    return bad
